"""On-disk layout for the CLI: a state directory holding the network
config, name-derived keys, the chain (canonical block encodings, length
prefixed), the local mempool, and per-channel signed-state history. State
is reconstructed by replaying the chain, which keeps the files minimal and
the replay deterministic."""
from __future__ import annotations

import os

from . import tx as txmod
from .codec import Reader, Writer
from .config import NetworkConfig, load_config
from .crypto import KeyPair
from .errors import DeskchainError
from .ledger import Block, validate_header
from .channels import SignedState
from .state import ChainState
from .vm import Program


class StateDir:
    def __init__(self, root: str):
        self.root = root

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    # --- config ---

    def write_config(self, text: str) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self.path("config.cfg"), "w", encoding="utf-8") as fh:
            fh.write(text)

    def config(self) -> NetworkConfig:
        path = self.path("config.cfg")
        if not os.path.exists(path):
            raise DeskchainError(f"no config at {path}; run genesis first")
        return load_config(path)

    # --- keys ---

    def keygen(self, name: str) -> KeyPair:
        os.makedirs(self.path("keys"), exist_ok=True)
        kp = KeyPair.from_name(name)
        with open(self.path("keys", f"{name}.key"), "w", encoding="utf-8") as fh:
            fh.write(kp.seed.hex() + "\n")
        return kp

    def key(self, name: str) -> KeyPair:
        path = self.path("keys", f"{name}.key")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return KeyPair(bytes.fromhex(fh.read().strip()))
        return KeyPair.from_name(name)

    # --- chain ---

    def append_block(self, block: Block) -> None:
        with open(self.path("chain.bin"), "ab") as fh:
            enc = block.encode()
            fh.write(len(enc).to_bytes(4, "big") + enc)

    def blocks(self) -> list[Block]:
        path = self.path("chain.bin")
        if not os.path.exists(path):
            raise DeskchainError(f"no chain at {path}; run genesis first")
        out = []
        with open(path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos < len(data):
            size = int.from_bytes(data[pos : pos + 4], "big")
            out.append(Block.read(Reader(data[pos + 4 : pos + 4 + size])))
            pos += 4 + size
        return out

    def load_chain(self) -> tuple[NetworkConfig, ChainState, list[Block]]:
        cfg = self.config()
        blocks = self.blocks()
        state = ChainState.genesis(cfg)
        prev = None
        for block in blocks:
            validate_header(block.header, prev.header if prev else None, cfg)
            state, _ = txmod.apply_block(state, block)
            prev = block
        return cfg, state, blocks

    # --- mempool ---

    def mempool(self) -> list:
        path = self.path("mempool.bin")
        if not os.path.exists(path):
            return []
        with open(path, "rb") as fh:
            data = fh.read()
        out = []
        pos = 0
        while pos < len(data):
            size = int.from_bytes(data[pos : pos + 4], "big")
            out.append(txmod.decode_tx(data[pos + 4 : pos + 4 + size]))
            pos += 4 + size
        return out

    def write_mempool(self, txs: list) -> None:
        with open(self.path("mempool.bin"), "wb") as fh:
            for t in txs:
                enc = t.encode()
                fh.write(len(enc).to_bytes(4, "big") + enc)

    def add_to_mempool(self, t) -> None:
        txs = self.mempool()
        txs.append(t)
        self.write_mempool(txs)

    # --- channel endpoints ---

    def channel_states(self, channel_id: bytes) -> tuple[list[SignedState], dict[bytes, Program]]:
        path = self.path(f"channel_{channel_id.hex()}.bin")
        if not os.path.exists(path):
            return [], {}
        with open(path, "rb") as fh:
            r = Reader(fh.read())
        states = []
        for _ in range(r.u32()):
            sub = Reader(r.blob())
            states.append(SignedState.read(sub))
            sub.expect_end()
        programs = {}
        for _ in range(r.u32()):
            program = Program.decode(r.blob())
            programs[program.code_hash()] = program
        r.expect_end()
        return states, programs

    def write_channel_states(
        self, channel_id: bytes, states: list[SignedState], programs: dict[bytes, Program]
    ) -> None:
        w = Writer().u32(len(states))
        for ss in states:
            w.blob(ss.encode())
        w.u32(len(programs))
        for key in sorted(programs):
            w.blob(programs[key].encode())
        with open(self.path(f"channel_{channel_id.hex()}.bin"), "wb") as fh:
            fh.write(w.done())
