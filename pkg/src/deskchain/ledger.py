"""Chain data model: accounts, names, headers, blocks.

Headers commit to seven state-tree roots plus entropy; the PoW input is the
header encoding *without* the solution-derived fields (entropy, nonce,
cycle), and entropy is pinned separately as H(prev_entropy || miner ||
nonce) so a miner cannot grind it independently of the solution.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from . import pow
from .codec import Reader, Writer, check_amount
from .crypto import ADDRESS_SIZE, HASH_SIZE, ZERO32, hash256
from .errors import BlockError, LedgerError
from .merkle import MerkleProof, merkle_verify

EXTERNAL = "external"
CONTRACT = "contract"
MAX_NAME_BYTES = 64

_KIND_TAGS = {EXTERNAL: 0, CONTRACT: 1}
_KIND_NAMES = {v: k for k, v in _KIND_TAGS.items()}


@dataclass(frozen=True)
class Account:
    address: bytes
    balance: int
    counter: int = 0
    freshness: int = 0
    kind: str = EXTERNAL
    code_hash: bytes | None = None

    def __post_init__(self) -> None:
        if len(self.address) != ADDRESS_SIZE:
            raise LedgerError("BadFormat", "address must be 32 bytes")
        check_amount(self.balance, "balance")
        if self.kind not in _KIND_TAGS:
            raise LedgerError("BadFormat", f"unknown account kind {self.kind!r}")
        if self.kind == EXTERNAL and self.code_hash is not None:
            raise LedgerError("BadFormat", "external accounts carry no code")

    def encode(self) -> bytes:
        w = (
            Writer()
            .fixed(self.address, ADDRESS_SIZE)
            .u64(self.balance)
            .u64(self.counter)
            .u64(self.freshness)
            .u8(_KIND_TAGS[self.kind])
            .flag(self.code_hash is not None)
        )
        if self.code_hash is not None:
            w.fixed(self.code_hash, HASH_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "Account":
        address = r.fixed(ADDRESS_SIZE)
        balance = r.u64()
        counter = r.u64()
        freshness = r.u64()
        kind = _KIND_NAMES[r.u8()]
        code_hash = r.fixed(HASH_SIZE) if r.flag() else None
        return Account(address, balance, counter, freshness, kind, code_hash)


@dataclass(frozen=True)
class NameRecord:
    name: str
    target: bytes
    owner: bytes

    def __post_init__(self) -> None:
        if len(self.name.encode("utf-8")) > MAX_NAME_BYTES or not self.name:
            raise LedgerError("BadFormat", "name must be 1..64 utf-8 bytes")
        if len(self.target) != 32:
            raise LedgerError("BadFormat", "name target must be 32 bytes")

    def encode(self) -> bytes:
        return (
            Writer()
            .text(self.name)
            .fixed(self.target, 32)
            .fixed(self.owner, ADDRESS_SIZE)
            .done()
        )

    @staticmethod
    def read(r: Reader) -> "NameRecord":
        return NameRecord(r.text(), r.fixed(32), r.fixed(ADDRESS_SIZE))


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    tx_root: bytes
    account_root: bytes
    name_root: bytes
    wormhole_root: bytes
    oracle_open_root: bytes
    oracle_answer_root: bytes
    proof_root: bytes
    entropy: bytes
    miner: bytes
    pow_nonce: int
    pow_cycle: tuple[int, ...]

    def base_bytes(self) -> bytes:
        """PoW input: everything the miner fixes before searching."""
        return (
            Writer()
            .u64(self.height)
            .fixed(self.prev_hash, HASH_SIZE)
            .fixed(self.tx_root, HASH_SIZE)
            .fixed(self.account_root, HASH_SIZE)
            .fixed(self.name_root, HASH_SIZE)
            .fixed(self.wormhole_root, HASH_SIZE)
            .fixed(self.oracle_open_root, HASH_SIZE)
            .fixed(self.oracle_answer_root, HASH_SIZE)
            .fixed(self.proof_root, HASH_SIZE)
            .fixed(self.miner, ADDRESS_SIZE)
            .done()
        )

    def base_hash(self) -> bytes:
        return hash256(self.base_bytes())

    def encode(self) -> bytes:
        w = Writer()
        w.fixed(self.base_bytes(), len(self.base_bytes()))
        w.fixed(self.entropy, 32)
        w.u64(self.pow_nonce)
        w.u32(len(self.pow_cycle))
        for e in self.pow_cycle:
            w.u64(e)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "BlockHeader":
        height = r.u64()
        fields = [r.fixed(HASH_SIZE) for _ in range(7 + 1)]  # prev + 7 roots
        miner = r.fixed(ADDRESS_SIZE)
        entropy = r.fixed(32)
        pow_nonce = r.u64()
        cycle = tuple(r.u64() for _ in range(r.u32()))
        return BlockHeader(height, *fields, entropy, miner, pow_nonce, cycle)

    def block_hash(self) -> bytes:
        return hash256(self.encode())


def expected_entropy(prev_entropy: bytes, miner: bytes, pow_nonce: int) -> bytes:
    return hash256(prev_entropy + miner + pow_nonce.to_bytes(8, "big"))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple  # of tx kinds; see tx.py

    def encode(self) -> bytes:
        w = Writer()
        header = self.header.encode()
        w.blob(header)
        w.u32(len(self.transactions))
        for tx in self.transactions:
            w.blob(tx.encode())
        return w.done()

    @staticmethod
    def read(r: Reader) -> "Block":
        from .tx import decode_tx  # deferred: tx depends on ledger types

        header = BlockHeader.read(Reader(r.blob()))
        txs = tuple(decode_tx(r.blob()) for _ in range(r.u32()))
        return Block(header, txs)


def validate_header(header: BlockHeader, prev: BlockHeader | None, cfg) -> None:
    """Raise BlockError(BadLink|BadHeight|BadPow) unless header extends prev."""
    if prev is None:
        if header.height != 0:
            raise BlockError("BadHeight", f"genesis height {header.height}")
        if header.prev_hash != ZERO32:
            raise BlockError("BadLink", "genesis prev_hash must be zero")
        prev_entropy = ZERO32
    else:
        if header.height != prev.height + 1:
            raise BlockError("BadHeight", f"{header.height} after {prev.height}")
        if header.prev_hash != prev.block_hash():
            raise BlockError("BadLink", "prev_hash mismatch")
        prev_entropy = prev.entropy
    if header.entropy != expected_entropy(prev_entropy, header.miner, header.pow_nonce):
        raise BlockError("BadPow", "entropy not derived from solution")
    params = pow.PowParams.from_config(cfg)
    solution = pow.CuckooSolution(header.pow_nonce, header.pow_cycle)
    if not pow.verify(header.base_hash(), solution, params):
        raise BlockError("BadPow", "cuckoo solution rejected")


def header_ok(header: BlockHeader, prev: BlockHeader | None, cfg) -> bool:
    try:
        validate_header(header, prev, cfg)
        return True
    except BlockError:
        return False


def verify_light(headers: list[BlockHeader], tx_bytes: bytes, proof: MerkleProof, cfg) -> bool:
    """Header-only verification: chain links + PoW + inclusion in the tip."""
    if not headers:
        return False
    params = pow.PowParams.from_config(cfg)
    first = headers[0]
    if not pow.verify(first.base_hash(), pow.CuckooSolution(first.pow_nonce, first.pow_cycle), params):
        return False
    for prev, nxt in zip(headers, headers[1:]):
        if not header_ok(nxt, prev, cfg):
            return False
    leaf_count = 1 << len(proof.siblings)
    return merkle_verify(headers[-1].tx_root, tx_bytes, proof, leaf_count)


def charge_maintenance(
    account: Account, current_height: int, rate_per_block: int
) -> tuple[Account, int, int]:
    """Lazy per-block fee since last touch.

    Returns (updated account, collected, shortfall). Collected goes to burn
    accounting; shortfall is the uncollectable part of the charge.
    """
    if current_height < account.freshness:
        raise LedgerError("BadHeight", "maintenance into the past")
    charge = rate_per_block * (current_height - account.freshness)
    collected = min(account.balance, charge)
    updated = replace(account, balance=account.balance - collected, freshness=current_height)
    return updated, collected, charge - collected
