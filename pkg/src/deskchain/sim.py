"""Deterministic multi-node network simulator.

One logical clock, one seeded RNG, and a heap of (time, seq) events drive
everything: block gossip, transaction submission, channel message passing,
crash/restart of channel processes, partitions, and epoch boundaries. Node
and channel processes are isolated actors; they share no state and interact
only through simulated messages, so runs are bit-reproducible per seed.

Scenario scripts are line-oriented: `time command args...`, '#' comments.
Amounts accept base units or a dsd suffix. Commands that mint identifiers
take a trailing `as handle` clause; later commands refer to the handle.
"""
from __future__ import annotations

import heapq
import random
import shlex
from dataclasses import dataclass, field, replace

from . import channels, oracles, rewards, storage, templates, tx as txmod
from .channels import SignedState
from .config import NetworkConfig, parse_amount, parse_fraction
from .crypto import KeyPair, hash256
from .errors import BlockError, DeskchainError, LedgerError, ScenarioError, TxError
from .ledger import Block, validate_header
from .merkle import merkle_prove
from .state import ChainState
from .vm import Program, assemble

BLOCK = "block"
TX = "tx"
CHAN_PROPOSE = "chan_propose"
CHAN_ACK = "chan_ack"
COMMAND = "command"


@dataclass
class ChannelEndpoint:
    """One party's durable view of one channel."""

    channel_id: bytes
    side: str  # "a" or "b"
    history: list[SignedState] = field(default_factory=list)  # fully signed
    pending: SignedState | None = None  # half-signed proposal, volatile
    programs: dict[bytes, Program] = field(default_factory=dict)

    def latest(self) -> SignedState | None:
        return self.history[-1] if self.history else None

    def latest_nonce(self) -> int:
        return self.history[-1].nonce if self.history else 0

    def record(self, ss: SignedState) -> None:
        if not self.history or ss.nonce > self.history[-1].nonce:
            self.history.append(ss)

    def by_nonce(self, nonce: int) -> SignedState | None:
        for ss in self.history:
            if ss.nonce == nonce:
                return ss
        return None


class SimNode:
    def __init__(self, name: str, keypair: KeyPair, genesis_state: ChainState, genesis: Block):
        self.name = name
        self.keypair = keypair
        self.online = True
        gh = genesis.header.block_hash()
        self.blocks: dict[bytes, Block] = {gh: genesis}
        self.states: dict[bytes, ChainState] = {gh: genesis_state}
        self.receipts: dict[bytes, list[txmod.Receipt]] = {gh: []}
        self.tip: bytes = gh
        self.mempool: dict[bytes, object] = {}
        self.orphans: dict[bytes, list[Block]] = {}
        self.endpoints: dict[bytes, ChannelEndpoint] = {}
        self.staged_epoch: rewards.EpochReport | None = None
        self.chunk_store: dict[bytes, list[bytes]] = {}
        self.challenged: set[tuple[bytes, int]] = set()

    @property
    def address(self) -> bytes:
        return self.keypair.address

    def tip_state(self) -> ChainState:
        return self.states[self.tip]

    def tip_header(self):
        return self.blocks[self.tip].header

    def next_counter(self, address: bytes) -> int:
        account = self.tip_state().accounts.get(address)
        base = account.counter if account else 0
        pending = sum(
            1 for t in self.mempool.values() if txmod.tx_sender(t) == address
        )
        return base + pending + 1


@dataclass
class SimResult:
    final_tip: bytes
    final_state_root: str
    receipts: list[txmod.Receipt]
    event_log: str
    state: ChainState
    chain: list[Block]
    handles: dict[str, bytes]


class Simulation:
    def __init__(self, cfg: NetworkConfig, seed: int):
        if not cfg.genesis_accounts:
            raise ScenarioError(0, "config declares no genesis accounts")
        self.cfg = cfg
        self.rng = random.Random(seed)
        self.clock = 0
        self.seq = 0
        self.queue: list[tuple[int, int, str, tuple]] = []
        self.log_lines: list[str] = []
        self.handles: dict[str, bytes] = {}
        self.partitions: list[set[str]] = []
        self.events_processed = 0
        self.budget = cfg.sim_max_events
        genesis_state, genesis = txmod.genesis_block(cfg)
        self.genesis = genesis
        self.nodes: dict[str, SimNode] = {}
        for name, _, _ in cfg.genesis_accounts:
            self.nodes[name] = SimNode(
                name, KeyPair.from_name(name), genesis_state.clone(), genesis
            )
        # observed fully-signed states per (channel, nonce): actors must agree
        self.signed_registry: dict[tuple[bytes, int], bytes] = {}

    # --- plumbing ---

    def log(self, node: str, ev: str, **kv) -> None:
        parts = [f"t={self.clock}", f"node={node}", f"ev={ev}"]
        parts += [f"{k}={v}" for k, v in kv.items()]
        self.log_lines.append(" ".join(parts))

    def schedule(self, at: int, kind: str, data: tuple) -> None:
        heapq.heappush(self.queue, (at, self.seq, kind, data))
        self.seq += 1

    def _reachable(self, src: str, dst: str) -> bool:
        if not self.partitions:
            return True
        for group in self.partitions:
            if src in group:
                return dst in group
        return True

    def send(self, src: str, dst: str, kind: str, payload: tuple) -> None:
        latency = self.rng.randint(self.cfg.sim_latency_min, self.cfg.sim_latency_max)
        dropped = self.cfg.sim_drop_rate > 0 and self.rng.random() < float(self.cfg.sim_drop_rate)
        if dropped:
            self.log(src, "drop", kind=kind, to=dst)
            return
        self.schedule(self.clock + latency, kind, (src, dst, payload))

    def broadcast(self, src: str, kind: str, payload: tuple) -> None:
        for name in self.nodes:
            if name != src:
                self.send(src, name, kind, payload)

    # --- chain handling ---

    def accept_block(self, node: SimNode, block: Block, origin: str) -> None:
        h = block.header.block_hash()
        if h in node.blocks:
            return
        parent = block.header.prev_hash
        if parent not in node.blocks:
            node.orphans.setdefault(parent, []).append(block)
            return
        try:
            validate_header(block.header, node.blocks[parent].header, self.cfg)
            new_state, receipts = txmod.apply_block(node.states[parent], block)
        except (BlockError, LedgerError) as exc:
            self.log(node.name, "reject_block", height=block.header.height, reason=exc)
            return
        node.blocks[h] = block
        node.states[h] = new_state
        node.receipts[h] = receipts
        self.log(
            node.name, "block",
            height=block.header.height, hash=h.hex()[:16], txs=len(block.transactions),
            origin=origin,
        )
        old_tip = node.tip
        best = self._better_tip(node.tip, h, node)
        if best != node.tip:
            node.tip = best
            if old_tip != best:
                self.log(node.name, "tip", height=node.blocks[best].header.height, hash=best.hex()[:16])
            self._prune_mempool(node)
            self._watch_channels(node)
        for orphan in node.orphans.pop(h, []):
            self.accept_block(node, orphan, origin="orphan")

    def _better_tip(self, current: bytes, candidate: bytes, node: SimNode) -> bytes:
        ch = node.blocks[current].header
        nh = node.blocks[candidate].header
        if (nh.height, candidate) == (ch.height, current):
            return current
        if nh.height > ch.height or (nh.height == ch.height and candidate < current):
            return candidate
        return current

    def _prune_mempool(self, node: SimNode) -> None:
        state = node.tip_state()
        stale = []
        for h, t in node.mempool.items():
            sender = txmod.tx_sender(t)
            account = state.accounts.get(sender)
            if account and t.counter <= account.counter:
                stale.append(h)
        for h in stale:
            del node.mempool[h]

    def _watch_channels(self, node: SimNode) -> None:
        if not self.cfg.sim_auto_challenge:
            return
        state = node.tip_state()
        height = node.tip_header().height
        for channel_id, endpoint in node.endpoints.items():
            channel = state.channels.get(channel_id)
            if channel is None or channel.status != channels.CLOSING:
                continue
            if height >= channel.deadline:
                continue
            candidate = channel.candidate
            mine = endpoint.latest()
            if mine is None or candidate is None or mine.nonce <= candidate.nonce:
                continue
            key = (channel_id, candidate.nonce)
            if key in node.challenged:
                continue
            node.challenged.add(key)
            program = endpoint.programs.get(mine.contract_hash) if mine.contract_hash else None
            challenge = txmod.ChannelChallenge(
                sender=node.address, channel_id=channel_id, state=mine,
                program=program, fee=1, counter=node.next_counter(node.address),
            )
            self.log(node.name, "auto_challenge", chan=channel_id.hex()[:16], nonce=mine.nonce)
            self.submit_tx(node, txmod.sign_tx(challenge, node.keypair))

    def submit_tx(self, node: SimNode, t) -> None:
        h = txmod.tx_hash(t)
        if h in node.mempool:
            return
        try:
            txmod.check_tx(node.tip_state(), t, self.cfg)
        except TxError as exc:
            self.log(node.name, "tx_rejected", reason=exc.code, hash=h.hex()[:16])
            raise
        node.mempool[h] = t
        self.log(node.name, "tx", kind=type(t).__name__, hash=h.hex()[:16])
        self.broadcast(node.name, TX, (t.encode(),))

    def mine(self, node: SimNode, count: int = 1) -> None:
        for _ in range(count):
            state = node.tip_state()
            prev = node.tip_header()
            candidates = list(node.mempool.values())
            next_height = prev.height + 1
            if next_height % self.cfg.blocks_per_epoch == 0:
                report = node.staged_epoch
                if report is None or report.epoch_index != state.pool.epoch_index + 1:
                    report = rewards.EpochReport(state.pool.epoch_index + 1, (), (), ())
                candidates.append(txmod.EpochTx(report))
                node.staged_epoch = None
            block = txmod.build_block(state, candidates, node.address, prev)
            if block is None:
                raise ScenarioError(0, f"PoW budget exhausted mining at {node.name}")
            self.log(node.name, "mine", height=block.header.height,
                     hash=block.header.block_hash().hex()[:16], txs=len(block.transactions))
            self.accept_block(node, block, origin="local")
            self.broadcast(node.name, BLOCK, (block.encode(),))

    # --- channel actor protocol ---

    def endpoint_for(self, node: SimNode, channel_id: bytes) -> ChannelEndpoint:
        if channel_id not in node.endpoints:
            channel = node.tip_state().channels.get(channel_id)
            if channel is None:
                raise ScenarioError(0, f"{node.name} sees no channel {channel_id.hex()[:16]}")
            side = "a" if channel.party_a == node.address else "b"
            node.endpoints[channel_id] = ChannelEndpoint(channel_id, side)
        return node.endpoints[channel_id]

    def _register_signed(self, node: SimNode, ss: SignedState) -> None:
        key = (ss.channel_id, ss.nonce)
        enc = ss.encode()
        seen = self.signed_registry.get(key)
        if seen is not None and seen != enc:
            raise DeskchainError(
                f"channel {ss.channel_id.hex()[:16]} double-signed nonce {ss.nonce}"
            )
        self.signed_registry[key] = enc
        self.endpoint_for(node, ss.channel_id).record(ss)

    def propose_update(
        self, node: SimNode, channel_id: bytes, balances: tuple[int, int],
        contract: Program | None, contract_state: tuple[int, ...],
    ) -> None:
        state = node.tip_state()
        channel = state.channels.get(channel_id)
        if channel is None:
            raise ScenarioError(0, "channel unknown at proposer")
        endpoint = self.endpoint_for(node, channel_id)
        prev = endpoint.latest() or channels.nonce_zero_state(channel)
        contract_hash = contract.code_hash() if contract else None
        if contract:
            endpoint.programs[contract_hash] = contract
        unsigned = channels.make_update(channel, prev, balances, contract_hash, contract_state)
        half = channels.sign_state(unsigned, node.keypair, endpoint.side)
        endpoint.pending = half
        peer = channel.party_b if endpoint.side == "a" else channel.party_a
        peer_name = self._name_of(peer)
        payload = (channel_id, half.encode(), contract.encode() if contract else b"")
        self.log(node.name, "chan_propose", chan=channel_id.hex()[:16], nonce=half.nonce)
        self.send(node.name, peer_name, CHAN_PROPOSE, payload)

    def _on_propose(self, node: SimNode, src: str, payload: tuple) -> None:
        channel_id, ss_bytes, program_bytes = payload
        from .codec import Reader

        half = SignedState.read(Reader(ss_bytes))
        state = node.tip_state()
        channel = state.channels.get(channel_id)
        if channel is None:
            self.log(node.name, "chan_ignore", reason="unknown_channel")
            return
        endpoint = self.endpoint_for(node, channel_id)
        if half.nonce != endpoint.latest_nonce() + 1:
            self.log(node.name, "chan_ignore", reason="bad_nonce", nonce=half.nonce)
            return
        if half.balance_a + half.balance_b != channel.total:
            self.log(node.name, "chan_ignore", reason="bad_sum")
            return
        if program_bytes:
            program = Program.decode(program_bytes)
            endpoint.programs[program.code_hash()] = program
        full = channels.sign_state(half, node.keypair, endpoint.side)
        if not channels.state_sigs_ok(channel, full):
            self.log(node.name, "chan_ignore", reason="bad_sig")
            return
        self._register_signed(node, full)
        self.log(node.name, "chan_signed", chan=channel_id.hex()[:16], nonce=full.nonce)
        self.send(node.name, src, CHAN_ACK, (channel_id, full.encode()))

    def _on_ack(self, node: SimNode, src: str, payload: tuple) -> None:
        channel_id, ss_bytes = payload
        from .codec import Reader

        full = SignedState.read(Reader(ss_bytes))
        state = node.tip_state()
        channel = state.channels.get(channel_id)
        if channel is None or not channels.state_sigs_ok(channel, full):
            self.log(node.name, "chan_ignore", reason="bad_ack")
            return
        endpoint = self.endpoint_for(node, channel_id)
        endpoint.pending = None
        self._register_signed(node, full)
        self.log(node.name, "chan_ack", chan=channel_id.hex()[:16], nonce=full.nonce)

    def _resync(self) -> None:
        """After a heal or restart every online node re-offers its chain;
        orphan buffering absorbs out-of-order delivery."""
        for name in sorted(self.nodes):
            node = self.nodes[name]
            if not node.online:
                continue
            chain = []
            h = node.tip
            while True:
                block = node.blocks[h]
                chain.append(block)
                if block.header.height == 0:
                    break
                h = block.header.prev_hash
            for block in reversed(chain[:-1]):  # skip the shared genesis
                self.broadcast(name, BLOCK, (block.encode(),))

    def _name_of(self, address: bytes) -> str:
        for name, node in self.nodes.items():
            if node.address == address:
                return name
        raise ScenarioError(0, f"no node for address {address.hex()[:16]}")

    # --- event loop ---

    def dispatch(self, kind: str, data: tuple) -> None:
        if kind == COMMAND:
            line_no, argv = data
            self.run_command(line_no, argv)
            return
        src, dst, payload = data
        node = self.nodes[dst]
        if not node.online or not self._reachable(src, dst):
            self.log(dst, "drop", kind=kind, reason="offline_or_partitioned")
            return
        if kind == BLOCK:
            from .codec import Reader

            block = Block.read(Reader(payload[0]))
            self.accept_block(node, block, origin=src)
        elif kind == TX:
            t = txmod.decode_tx(payload[0])
            if isinstance(t, txmod.EpochTx):
                return  # system txs are assembled locally, never gossiped
            try:
                txmod.check_tx(node.tip_state(), t, self.cfg)
            except TxError:
                return
            h = txmod.tx_hash(t)
            if h not in node.mempool:
                node.mempool[h] = t
        elif kind == CHAN_PROPOSE:
            self._on_propose(node, src, payload)
        elif kind == CHAN_ACK:
            self._on_ack(node, src, payload)
        else:
            raise DeskchainError(f"unknown event kind {kind}")

    def run_scenario(self, text: str, base_dir: str = ".") -> SimResult:
        self.base_dir = base_dir
        last_time = 0
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                parts = shlex.split(line)
                at = int(parts[0])
            except ValueError as exc:
                raise ScenarioError(line_no, f"expected 'time command ...': {exc}") from exc
            if at < last_time:
                raise ScenarioError(line_no, "times must be non-decreasing")
            last_time = at
            self.schedule(at, COMMAND, (line_no, parts[1:]))
        while self.queue:
            self.events_processed += 1
            if self.events_processed > self.budget:
                raise ScenarioError(0, f"event budget {self.budget} exhausted")
            at, _, kind, data = heapq.heappop(self.queue)
            self.clock = at
            self.dispatch(kind, data)
        return self._result()

    def _result(self) -> SimResult:
        best_name = None
        best_key = None
        for name in sorted(self.nodes):
            node = self.nodes[name]
            header = node.tip_header()
            key = (-header.height, node.tip)
            if best_key is None or key < best_key:
                best_key = key
                best_name = name
        node = self.nodes[best_name]
        chain = []
        h = node.tip
        while True:
            block = node.blocks[h]
            chain.append(block)
            if block.header.height == 0:
                break
            h = block.header.prev_hash
        chain.reverse()
        receipts = []
        for block in chain:
            receipts.extend(node.receipts[block.header.block_hash()])
        tip = node.tip
        self.log(best_name, "final", height=node.tip_header().height, root=tip.hex())
        return SimResult(
            final_tip=tip,
            final_state_root=tip.hex(),
            receipts=receipts,
            event_log="\n".join(self.log_lines) + "\n",
            state=node.tip_state(),
            chain=chain,
            handles=dict(self.handles),
        )

    # --- scenario commands ---

    def _node(self, name: str, line_no: int) -> SimNode:
        node = self.nodes.get(name)
        if node is None:
            raise ScenarioError(line_no, f"unknown node {name!r}")
        return node

    def _addr(self, name: str) -> bytes:
        return KeyPair.from_name(name).address

    def _handle(self, token: str, line_no: int) -> bytes:
        if token.startswith("hex:"):
            return bytes.fromhex(token[4:])
        if token in self.handles:
            return self.handles[token]
        raise ScenarioError(line_no, f"unknown handle {token!r}")

    def _amount(self, token: str) -> int:
        return parse_amount(token)

    def _opts(self, args: list[str]) -> tuple[list[str], dict[str, str], str | None]:
        positional: list[str] = []
        opts: dict[str, str] = {}
        handle = None
        i = 0
        while i < len(args):
            token = args[i]
            if token == "as":
                handle = args[i + 1]
                i += 2
                continue
            if "=" in token and not token.startswith("hex:"):
                k, v = token.split("=", 1)
                opts[k] = v
                i += 1
                continue
            positional.append(token)
            i += 1
        return positional, opts, handle

    def _program_ref(self, token: str, line_no: int) -> Program:
        if token.startswith("template:"):
            name = token.split(":", 1)[1]
            program = templates.TEMPLATES.get(name)
            if program is None:
                raise ScenarioError(line_no, f"unknown template {name!r}")
            return program
        if token.startswith("asm:"):
            import os

            path = os.path.join(self.base_dir, token.split(":", 1)[1])
            with open(path, "r", encoding="utf-8") as fh:
                return assemble(fh.read())
        raise ScenarioError(line_no, f"expected template:NAME or asm:FILE, got {token!r}")

    def run_command(self, line_no: int, argv: list[str]) -> None:
        if not argv:
            return
        cmd, *rest = argv
        args, opts, handle = self._opts(rest)
        try:
            self._exec(line_no, cmd, args, opts, handle)
        except ScenarioError:
            raise
        except (TxError, LedgerError) as exc:
            # protocol-level rejection: logged, scenario continues
            self.log(args[0] if args else "-", "rejected", cmd=cmd, reason=getattr(exc, "code", str(exc)))
        except (KeyError, IndexError, ValueError) as exc:
            raise ScenarioError(line_no, f"{cmd}: {exc}") from exc

    def _exec(self, line_no: int, cmd: str, args: list[str], opts: dict, handle: str | None) -> None:
        cfg = self.cfg
        if cmd == "budget":
            self.budget = int(args[0])
            return
        if cmd == "partition":
            self.partitions = [set(group.split(",")) for group in args]
            self.log("-", "partition", groups=len(self.partitions))
            return
        if cmd == "heal":
            self.partitions = []
            self.log("-", "heal")
            self._resync()
            return

        node = self._node(args[0], line_no)
        if cmd == "crash":
            node.online = False
            node.mempool.clear()
            for endpoint in node.endpoints.values():
                endpoint.pending = None  # volatile half-signed state is lost
            self.log(node.name, "crash")
            return
        if cmd == "restart":
            node.online = True
            self.log(node.name, "restart", channels=len(node.endpoints))
            self._watch_channels(node)
            self._resync()
            return
        if not node.online:
            self.log(node.name, "skip", cmd=cmd, reason="offline")
            return

        if cmd == "mine":
            self.mine(node, int(args[1]) if len(args) > 1 else 1)
        elif cmd == "spend":
            sender = self._addr(args[1])
            t = txmod.Spend(
                sender, self._resolve_target(args[2], line_no), self._amount(args[3]),
                int(opts.get("fee", "1")), node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "data":
            sender = self._addr(args[1])
            t = txmod.DataOnly(
                sender, bytes.fromhex(args[2]), int(opts.get("gas_price", "1")),
                node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "name-claim":
            owner = self._addr(args[1])
            t = txmod.NameClaim(
                owner, args[2], self._resolve_target(args[3], line_no),
                int(opts.get("fee", "1")), node.next_counter(owner),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "delete-account":
            sender = self._addr(args[1])
            t = txmod.AccountDelete(
                sender, self._resolve_target(args[2], line_no),
                int(opts.get("fee", "1")), node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "contract-create":
            owner = self._addr(args[1])
            program = self._program_ref(args[2], line_no)
            gas, gas_price = int(args[5]), int(args[6])
            counter = node.next_counter(owner)
            call_data = tuple(int(v) for v in opts.get("call", "").split(",") if v)
            t = txmod.ContractCreate(
                owner, program, 1, self._amount(args[3]), self._amount(args[4]),
                gas, gas_price, call_data, gas * gas_price, counter,
            )
            if handle:
                self.handles[handle] = txmod.contract_address(owner, counter)
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "contract-call":
            caller = self._addr(args[1])
            gas, gas_price = int(args[4]), int(args[5])
            call_data = tuple(int(v) for v in opts.get("call", "").split(",") if v)
            t = txmod.ContractCall(
                caller, self._handle(args[2], line_no), self._amount(args[3]),
                gas, gas_price, call_data, gas * gas_price, node.next_counter(caller),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "channel-open":
            a, b = self._addr(args[1]), self._addr(args[2])
            counter = node.next_counter(a)
            t = txmod.ChannelOpen(
                a, b, self._amount(args[3]), self._amount(args[4]),
                int(opts.get("fee", "1")), counter,
            )
            t = replace(t, sig_b=KeyPair.from_name(args[2]).sign(t.signing_bytes()))
            t = txmod.sign_tx(t, KeyPair.from_name(args[1]))
            if handle:
                self.handles[handle] = channels.channel_id_for(a, b, counter)
            self.submit_tx(node, t)
        elif cmd == "channel-update":
            channel_id = self._handle(args[1], line_no)
            balances = (self._amount(args[2]), self._amount(args[3]))
            program = self._program_ref(opts["contract"], line_no) if "contract" in opts else None
            cstate = self._contract_state(opts.get("cstate", ""))
            self.propose_update(node, channel_id, balances, program, cstate)
        elif cmd == "channel-close-coop":
            channel_id = self._handle(args[1], line_no)
            endpoint = self.endpoint_for(node, channel_id)
            final = endpoint.latest()
            if final is None:
                raise ScenarioError(line_no, "no signed state to close with")
            sender = node.address
            t = txmod.ChannelCloseCoop(
                sender, channel_id, final, None, int(opts.get("fee", "1")),
                node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, node.keypair))
        elif cmd == "channel-close":
            channel_id = self._handle(args[1], line_no)
            endpoint = self.endpoint_for(node, channel_id)
            candidate = None
            if "nonce" in opts:
                candidate = endpoint.by_nonce(int(opts["nonce"]))
                if candidate is None:
                    raise ScenarioError(line_no, f"no recorded state with nonce {opts['nonce']}")
            else:
                candidate = endpoint.latest()
            program = None
            if candidate is not None and candidate.contract_hash:
                program = endpoint.programs.get(candidate.contract_hash)
            sender = node.address
            t = txmod.ChannelClose(
                sender, channel_id, candidate, program, int(opts.get("fee", "1")),
                node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, node.keypair))
        elif cmd == "channel-challenge":
            channel_id = self._handle(args[1], line_no)
            endpoint = self.endpoint_for(node, channel_id)
            mine = endpoint.latest()
            if mine is None:
                raise ScenarioError(line_no, "nothing better to challenge with")
            program = endpoint.programs.get(mine.contract_hash) if mine.contract_hash else None
            sender = node.address
            t = txmod.ChannelChallenge(
                sender, channel_id, mine, program, int(opts.get("fee", "1")),
                node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, node.keypair))
        elif cmd == "channel-finalize":
            channel_id = self._handle(args[1], line_no)
            state = node.tip_state()
            channel = state.channels.get(channel_id)
            program = None
            if channel and channel.candidate and channel.candidate.contract_hash:
                endpoint = self.endpoint_for(node, channel_id)
                program = endpoint.programs.get(channel.candidate.contract_hash)
            sender = node.address
            t = txmod.ChannelFinalize(
                sender, channel_id, None, program, int(opts.get("fee", "1")),
                node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, node.keypair))
        elif cmd == "oracle-ask":
            asker = self._addr(args[1])
            question_hash = hash256(args[2].encode("utf-8"))
            counter = node.next_counter(asker)
            t = txmod.OracleRegister(
                asker, question_hash, int(args[3]), int(args[4]),
                int(opts.get("fee", "1")), counter,
            )
            if handle:
                self.handles[handle] = oracles.question_id_for(asker, counter, question_hash)
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd in ("oracle-answer", "oracle-vote"):
            sender = self._addr(args[1])
            bit = {"yes": True, "no": False}[args[3]]
            cls = txmod.OracleAnswer if cmd == "oracle-answer" else txmod.OracleVote
            t = cls(
                sender, self._handle(args[2], line_no), bit,
                int(opts.get("fee", "1")), node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd in ("oracle-counter", "oracle-resolve"):
            sender = self._addr(args[1])
            cls = txmod.OracleCounter if cmd == "oracle-counter" else txmod.OracleResolve
            t = cls(
                sender, self._handle(args[2], line_no),
                int(opts.get("fee", "1")), node.next_counter(sender),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "storage-commit":
            payer = self._addr(args[1])
            provider_name = args[2]
            data = self._read_data(args[3], line_no)
            chunk_size = int(args[4])
            chunks, root = storage.commit_data(data, chunk_size)
            counter = node.next_counter(payer)
            contract_id = storage.contract_id_for(payer, counter)
            t = txmod.StorageCreate(
                payer, self._addr(provider_name), root, len(chunks), chunk_size,
                int(args[5]), self._amount(args[6]), self._amount(args[7]),
                int(opts.get("fee", "1")), counter,
            )
            if handle:
                self.handles[handle] = contract_id
            provider_node = self.nodes.get(provider_name)
            if provider_node is not None:
                provider_node.chunk_store[contract_id] = chunks
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "storage-prove":
            provider = self._addr(args[1])
            contract_id = self._handle(args[2], line_no)
            chunks = node.chunk_store.get(contract_id)
            if chunks is None:
                raise ScenarioError(line_no, "provider holds no chunks for that contract")
            prev_hash = node.tip
            index = storage.challenge_index(prev_hash, contract_id, len(chunks))
            proof = merkle_prove(chunks, index)
            t = txmod.StorageProof(
                provider, contract_id, chunks[index], proof,
                int(opts.get("fee", "1")), node.next_counter(provider),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "storage-close":
            payer = self._addr(args[1])
            t = txmod.StorageClose(
                payer, self._handle(args[2], line_no),
                int(opts.get("fee", "1")), node.next_counter(payer),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "az-create":
            owner = self._addr(args[1])
            counter = node.next_counter(owner)
            t = txmod.AzCreate(
                owner, self._amount(args[2]), int(opts.get("fee", "1")), counter
            )
            if handle:
                self.handles[handle] = rewards.az_id_for(owner, counter)
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "az-join":
            user = self._addr(args[1])
            t = txmod.AzJoin(
                user, self._handle(args[2], line_no), int(opts.get("fee", "1")),
                node.next_counter(user),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "az-refer":
            member = self._addr(args[1])
            t = txmod.AzRefer(
                member, self._addr(args[2]), self._handle(args[3], line_no),
                int(opts.get("fee", "1")), node.next_counter(member),
            )
            self.submit_tx(node, txmod.sign_tx(t, KeyPair.from_name(args[1])))
        elif cmd == "epoch-factors":
            import os

            path = os.path.join(self.base_dir, args[1])
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
            report = parse_factors(
                text, node.tip_state().pool.epoch_index + 1, self.handles
            )
            node.staged_epoch = report
            self.log(node.name, "epoch_staged", azs=len(report.az_rows))
        elif cmd == "advance-epoch":
            height = node.tip_header().height
            target = ((height // cfg.blocks_per_epoch) + 1) * cfg.blocks_per_epoch
            self.mine(node, target - height)
        else:
            raise ScenarioError(line_no, f"unknown command {cmd!r}")

    def _resolve_target(self, token: str, line_no: int) -> bytes:
        if token.startswith("hex:"):
            return bytes.fromhex(token[4:])
        if token in self.handles:
            return self.handles[token]
        return self._addr(token)

    def _contract_state(self, token: str) -> tuple[int, ...]:
        """csv integers/amounts, or `htlc:total,preimage,deadline,height`
        which expands to the hash-timelock template's input vector."""
        if not token:
            return ()
        if token.startswith("htlc:"):
            total, preimage, deadline, height = token[5:].split(",")
            return tuple(
                templates.hash_timelock_state(
                    parse_amount(total), int(preimage), int(deadline), int(height)
                )
            )
        return tuple(parse_amount(v) for v in token.split(",") if v)

    def _read_data(self, token: str, line_no: int) -> bytes:
        if token.startswith("hex:"):
            return bytes.fromhex(token[4:])
        if token.startswith("file:"):
            import os

            with open(os.path.join(self.base_dir, token[5:]), "rb") as fh:
                return fh.read()
        raise ScenarioError(line_no, f"expected hex:... or file:..., got {token!r}")


def parse_factors(text: str, epoch_index: int, handles: dict[str, bytes]) -> rewards.EpochReport:
    """Factor measurement file -> EpochReport.

    Lines: `weights w1 w2 ...`, `az <handle> raw1 raw2 ...`,
    `user <handle> <name> eps E theta T`, then `item alpha A s S beta B
    usage c1 c2 ...` rows attaching to the preceding user.
    """
    weights: tuple = ()
    az_rows: list[rewards.AZFactors] = []
    users: list[dict] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "weights":
            weights = tuple(parse_fraction(v) for v in parts[1:])
        elif key == "az":
            az_id = handles.get(parts[1]) or bytes.fromhex(parts[1])
            az_rows.append(rewards.AZFactors(az_id, tuple(int(v) for v in parts[2:])))
        elif key == "user":
            az_id = handles.get(parts[1]) or bytes.fromhex(parts[1])
            member = KeyPair.from_name(parts[2]).address
            kv = dict(zip(parts[3::2], parts[4::2]))
            users.append(
                dict(
                    az_id=az_id, member=member,
                    epsilon=parse_fraction(kv.get("eps", "1")),
                    theta=parse_fraction(kv.get("theta", "1")),
                    items=[],
                )
            )
        elif key == "item":
            if not users:
                raise ScenarioError(line_no, "item line before any user line")
            tokens = parts[1:]
            kv = {}
            i = 0
            while i < len(tokens):
                if tokens[i] == "usage":
                    kv["usage"] = tokens[i + 1 :]
                    break
                kv[tokens[i]] = tokens[i + 1]
                i += 2
            users[-1]["items"].append(
                rewards.WorkItem(
                    alpha=parse_fraction(kv.get("alpha", "1")),
                    s=parse_fraction(kv.get("s", "0")),
                    beta=parse_fraction(kv.get("beta", "1")),
                    usage=tuple(parse_fraction(v) for v in kv.get("usage", [])),
                )
            )
        else:
            raise ScenarioError(line_no, f"unknown factors key {key!r}")
    user_rows = tuple(
        rewards.UserContribution(
            u["az_id"], u["member"], u["epsilon"], u["theta"], tuple(u["items"])
        )
        for u in users
    )
    return rewards.EpochReport(epoch_index, weights, tuple(az_rows), user_rows)


def run(cfg: NetworkConfig, scenario_text: str, seed: int, base_dir: str = ".") -> SimResult:
    return Simulation(cfg, seed).run_scenario(scenario_text, base_dir)
