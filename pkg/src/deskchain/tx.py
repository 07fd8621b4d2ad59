"""Transaction taxonomy and the block-level state transition.

Application follows a six-step discipline: (1) format/signature/counter
checks, (2) escrow of deposit+fee+amount, (3) fee = gas*gas_price deducted
and the counter bumped, (4) value moved and contract code run, (5) on
failure everything is rolled back except the fee, which the miner keeps,
(6) on success unused gas is refunded at gas_price.

check_tx failures make a transaction inapplicable (an honest miner never
includes it; a block carrying one is invalid). Failures after that point
produce a reverted, fee-paying receipt. The split is what lets miners
include transactions without simulating their full outcome.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import channels, oracles, pow, rewards, storage
from .channels import SignedState
from .codec import Reader, Writer
from .crypto import ADDRESS_SIZE, HASH_SIZE, SIG_SIZE, ZERO32, ZERO_SIG, hash256, verify_sig
from .errors import BlockError, CodecError, LedgerError, TxError
from .ledger import Block, BlockHeader, CONTRACT, NameRecord, expected_entropy
from .merkle import MerkleProof, tree_root
from .state import ChainState
from .vm import HALTED, Program, VmEnv, execute

APPLIED = "applied"
REVERTED = "reverted"

# Error codes that invalidate a block outright when raised during apply;
# everything else rolls back to a fee-paying reverted receipt.
NON_REVERTIBLE = {"AddressCollision", "Conservation", "BadFormat", "BadCounter"}


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    status: str
    gas_used: int
    fee_paid: int
    miner_credit: int
    reason: str = ""  # revert diagnostics; not part of any commitment

    def render(self) -> str:
        tail = f" reason={self.reason}" if self.reason else ""
        return (
            f"tx={self.tx_hash.hex()} status={self.status} "
            f"gas_used={self.gas_used} fee={self.fee_paid} miner={self.miner_credit}{tail}"
        )


def contract_address(owner: bytes, counter: int) -> bytes:
    return hash256(owner + counter.to_bytes(8, "big"))


class _Revert(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


# --- transaction kinds -------------------------------------------------
#
# Encoding: u8 tag, kind fields in declaration order, then counter, fee,
# signature(s). signing_bytes() is the same encoding with zeroed sigs.


class TxBase:
    def encode(self) -> bytes:
        return self._encode(with_sig=True)

    def signing_bytes(self) -> bytes:
        return self._encode(with_sig=False)


@dataclass(frozen=True)
class Spend(TxBase):
    sender: bytes
    recipient: bytes
    amount: int
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 0

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.recipient, ADDRESS_SIZE)
            .u64(self.amount)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "Spend":
        return Spend(
            r.fixed(ADDRESS_SIZE), r.fixed(ADDRESS_SIZE), r.u64(), r.u64(),
            r.u64(), r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class ContractCreate(TxBase):
    owner: bytes
    code: Program
    vm_version: int
    deposit: int
    amount: int
    gas: int
    gas_price: int
    call_data: tuple[int, ...]
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 1

    def _encode(self, with_sig: bool) -> bytes:
        w = Writer().u8(self.TAG).fixed(self.owner, ADDRESS_SIZE)
        w.blob(self.code.encode())
        w.u8(self.vm_version)
        w.u64(self.deposit).u64(self.amount).u64(self.gas).u64(self.gas_price)
        w.u32(len(self.call_data))
        for v in self.call_data:
            w.i64(v)
        w.u64(self.fee).u64(self.counter)
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "ContractCreate":
        owner = r.fixed(ADDRESS_SIZE)
        code = Program.decode(r.blob())
        vm_version = r.u8()
        deposit, amount, gas, gas_price = r.u64(), r.u64(), r.u64(), r.u64()
        call_data = tuple(r.i64() for _ in range(r.u32()))
        fee, counter = r.u64(), r.u64()
        return ContractCreate(
            owner, code, vm_version, deposit, amount, gas, gas_price,
            call_data, fee, counter, r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class ContractCall(TxBase):
    caller: bytes
    contract: bytes
    amount: int
    gas: int
    gas_price: int
    call_data: tuple[int, ...]
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 2

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.caller, ADDRESS_SIZE)
            .fixed(self.contract, ADDRESS_SIZE)
            .u64(self.amount)
            .u64(self.gas)
            .u64(self.gas_price)
        )
        w.u32(len(self.call_data))
        for v in self.call_data:
            w.i64(v)
        w.u64(self.fee).u64(self.counter)
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "ContractCall":
        caller = r.fixed(ADDRESS_SIZE)
        contract = r.fixed(ADDRESS_SIZE)
        amount, gas, gas_price = r.u64(), r.u64(), r.u64()
        call_data = tuple(r.i64() for _ in range(r.u32()))
        fee, counter = r.u64(), r.u64()
        return ContractCall(
            caller, contract, amount, gas, gas_price, call_data, fee, counter,
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class DataOnly(TxBase):
    sender: bytes
    payload: bytes
    gas_price: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 3

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .blob(self.payload)
            .u64(self.gas_price)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "DataOnly":
        return DataOnly(r.fixed(ADDRESS_SIZE), r.blob(), r.u64(), r.u64(), r.fixed(SIG_SIZE))


@dataclass(frozen=True)
class NameClaim(TxBase):
    owner: bytes
    name: str
    target: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 4

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.owner, ADDRESS_SIZE)
            .text(self.name)
            .fixed(self.target, 32)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "NameClaim":
        return NameClaim(
            r.fixed(ADDRESS_SIZE), r.text(), r.fixed(32), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class AccountDelete(TxBase):
    sender: bytes
    target: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 5

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.target, ADDRESS_SIZE)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "AccountDelete":
        return AccountDelete(
            r.fixed(ADDRESS_SIZE), r.fixed(ADDRESS_SIZE), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class ChannelOpen(TxBase):
    party_a: bytes
    party_b: bytes
    deposit_a: int
    deposit_b: int
    fee: int
    counter: int
    sig: bytes = ZERO_SIG       # party A, the fee payer
    sig_b: bytes = ZERO_SIG     # party B consents to the lock
    TAG = 6

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.party_a, ADDRESS_SIZE)
            .fixed(self.party_b, ADDRESS_SIZE)
            .u64(self.deposit_a)
            .u64(self.deposit_b)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        w.fixed(self.sig_b if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "ChannelOpen":
        return ChannelOpen(
            r.fixed(ADDRESS_SIZE), r.fixed(ADDRESS_SIZE), r.u64(), r.u64(),
            r.u64(), r.u64(), r.fixed(SIG_SIZE), r.fixed(SIG_SIZE),
        )


def _encode_channel_close(tx, tag: int, with_sig: bool) -> bytes:
    w = (
        Writer()
        .u8(tag)
        .fixed(tx.sender, ADDRESS_SIZE)
        .fixed(tx.channel_id, HASH_SIZE)
        .flag(tx.state is not None)
    )
    if tx.state is not None:
        w.blob(tx.state.encode())
    w.flag(tx.program is not None)
    if tx.program is not None:
        w.blob(tx.program.encode())
    w.u64(tx.fee).u64(tx.counter)
    w.fixed(tx.sig if with_sig else ZERO_SIG, SIG_SIZE)
    return w.done()


def _read_channel_close(r: Reader, cls):
    sender = r.fixed(ADDRESS_SIZE)
    channel_id = r.fixed(HASH_SIZE)
    state = None
    if r.flag():
        sub = Reader(r.blob())
        state = SignedState.read(sub)
        sub.expect_end()
    program = Program.decode(r.blob()) if r.flag() else None
    fee, counter = r.u64(), r.u64()
    return cls(sender, channel_id, state, program, fee, counter, r.fixed(SIG_SIZE))


@dataclass(frozen=True)
class ChannelCloseCoop(TxBase):
    sender: bytes
    channel_id: bytes
    state: SignedState | None
    program: Program | None
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 7

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_channel_close(self, self.TAG, with_sig)

    @staticmethod
    def read(r: Reader) -> "ChannelCloseCoop":
        return _read_channel_close(r, ChannelCloseCoop)


@dataclass(frozen=True)
class ChannelClose(TxBase):
    sender: bytes
    channel_id: bytes
    state: SignedState | None   # None settles at the original deposits
    program: Program | None
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 8

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_channel_close(self, self.TAG, with_sig)

    @staticmethod
    def read(r: Reader) -> "ChannelClose":
        return _read_channel_close(r, ChannelClose)


@dataclass(frozen=True)
class ChannelChallenge(TxBase):
    sender: bytes
    channel_id: bytes
    state: SignedState | None
    program: Program | None
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 9

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_channel_close(self, self.TAG, with_sig)

    @staticmethod
    def read(r: Reader) -> "ChannelChallenge":
        return _read_channel_close(r, ChannelChallenge)


@dataclass(frozen=True)
class ChannelFinalize(TxBase):
    sender: bytes
    channel_id: bytes
    state: SignedState | None   # unused; kept for the shared wire shape
    program: Program | None
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 10

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_channel_close(self, self.TAG, with_sig)

    @staticmethod
    def read(r: Reader) -> "ChannelFinalize":
        return _read_channel_close(r, ChannelFinalize)


@dataclass(frozen=True)
class OracleRegister(TxBase):
    asker: bytes
    question_hash: bytes
    start: int
    end: int
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 11

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.asker, ADDRESS_SIZE)
            .fixed(self.question_hash, HASH_SIZE)
            .u64(self.start)
            .u64(self.end)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "OracleRegister":
        return OracleRegister(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.u64(), r.u64(),
            r.u64(), r.u64(), r.fixed(SIG_SIZE),
        )


def _encode_oracle_action(tx, tag: int, with_sig: bool, with_bit: bool) -> bytes:
    w = Writer().u8(tag).fixed(tx.sender, ADDRESS_SIZE).fixed(tx.question_id, HASH_SIZE)
    if with_bit:
        w.flag(tx.bit)
    w.u64(tx.fee).u64(tx.counter)
    w.fixed(tx.sig if with_sig else ZERO_SIG, SIG_SIZE)
    return w.done()


@dataclass(frozen=True)
class OracleAnswer(TxBase):
    sender: bytes
    question_id: bytes
    bit: bool
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 12

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_oracle_action(self, self.TAG, with_sig, True)

    @staticmethod
    def read(r: Reader) -> "OracleAnswer":
        return OracleAnswer(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.flag(), r.u64(),
            r.u64(), r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class OracleCounter(TxBase):
    sender: bytes
    question_id: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 13

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_oracle_action(self, self.TAG, with_sig, False)

    @staticmethod
    def read(r: Reader) -> "OracleCounter":
        return OracleCounter(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class OracleVote(TxBase):
    sender: bytes
    question_id: bytes
    bit: bool
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 14

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_oracle_action(self, self.TAG, with_sig, True)

    @staticmethod
    def read(r: Reader) -> "OracleVote":
        return OracleVote(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.flag(), r.u64(),
            r.u64(), r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class OracleResolve(TxBase):
    sender: bytes
    question_id: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 15

    def _encode(self, with_sig: bool) -> bytes:
        return _encode_oracle_action(self, self.TAG, with_sig, False)

    @staticmethod
    def read(r: Reader) -> "OracleResolve":
        return OracleResolve(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class StorageCreate(TxBase):
    payer: bytes
    provider: bytes
    data_root: bytes
    chunk_count: int
    chunk_size: int
    challenge_period_n: int
    reward_per_proof: int
    escrow: int
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 16

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.payer, ADDRESS_SIZE)
            .fixed(self.provider, ADDRESS_SIZE)
            .fixed(self.data_root, HASH_SIZE)
            .u64(self.chunk_count)
            .u64(self.chunk_size)
            .u64(self.challenge_period_n)
            .u64(self.reward_per_proof)
            .u64(self.escrow)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "StorageCreate":
        return StorageCreate(
            r.fixed(ADDRESS_SIZE), r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE),
            r.u64(), r.u64(), r.u64(), r.u64(), r.u64(), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class StorageProof(TxBase):
    sender: bytes               # the provider claiming the reward
    contract_id: bytes
    chunk: bytes
    proof: MerkleProof
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 17

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.contract_id, HASH_SIZE)
            .blob(self.chunk)
            .blob(self.proof.encode())
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "StorageProof":
        sender = r.fixed(ADDRESS_SIZE)
        contract_id = r.fixed(HASH_SIZE)
        chunk = r.blob()
        sub = Reader(r.blob())
        proof = MerkleProof.read(sub)
        sub.expect_end()
        return StorageProof(sender, contract_id, chunk, proof, r.u64(), r.u64(), r.fixed(SIG_SIZE))


@dataclass(frozen=True)
class StorageClose(TxBase):
    sender: bytes
    contract_id: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 18

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.contract_id, HASH_SIZE)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "StorageClose":
        return StorageClose(
            r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.u64(), r.u64(),
            r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class AzCreate(TxBase):
    owner: bytes
    join_price: int
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 19

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.owner, ADDRESS_SIZE)
            .u64(self.join_price)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "AzCreate":
        return AzCreate(r.fixed(ADDRESS_SIZE), r.u64(), r.u64(), r.u64(), r.fixed(SIG_SIZE))


@dataclass(frozen=True)
class AzJoin(TxBase):
    sender: bytes
    az_id: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 20

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.az_id, HASH_SIZE)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "AzJoin":
        return AzJoin(r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE), r.u64(), r.u64(), r.fixed(SIG_SIZE))


@dataclass(frozen=True)
class AzRefer(TxBase):
    sender: bytes
    user: bytes
    az_id: bytes
    fee: int
    counter: int
    sig: bytes = ZERO_SIG
    TAG = 21

    def _encode(self, with_sig: bool) -> bytes:
        w = (
            Writer()
            .u8(self.TAG)
            .fixed(self.sender, ADDRESS_SIZE)
            .fixed(self.user, ADDRESS_SIZE)
            .fixed(self.az_id, HASH_SIZE)
            .u64(self.fee)
            .u64(self.counter)
        )
        w.fixed(self.sig if with_sig else ZERO_SIG, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "AzRefer":
        return AzRefer(
            r.fixed(ADDRESS_SIZE), r.fixed(ADDRESS_SIZE), r.fixed(HASH_SIZE),
            r.u64(), r.u64(), r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class EpochTx(TxBase):
    """System transaction applied at epoch boundary blocks; unsigned."""

    report: rewards.EpochReport
    TAG = 22

    def _encode(self, with_sig: bool) -> bytes:
        return Writer().u8(self.TAG).blob(self.report.encode()).done()

    @staticmethod
    def read(r: Reader) -> "EpochTx":
        sub = Reader(r.blob())
        report = rewards.EpochReport.read(sub)
        sub.expect_end()
        return EpochTx(report)


TX_KINDS = (
    Spend, ContractCreate, ContractCall, DataOnly, NameClaim, AccountDelete,
    ChannelOpen, ChannelCloseCoop, ChannelClose, ChannelChallenge, ChannelFinalize,
    OracleRegister, OracleAnswer, OracleCounter, OracleVote, OracleResolve,
    StorageCreate, StorageProof, StorageClose, AzCreate, AzJoin, AzRefer, EpochTx,
)
_BY_TAG = {cls.TAG: cls for cls in TX_KINDS}
GAS_KINDS = (ContractCreate, ContractCall)


def encode_tx(tx) -> bytes:
    return tx._encode(with_sig=True)


def signing_bytes(tx) -> bytes:
    return tx._encode(with_sig=False)


def tx_hash(tx) -> bytes:
    return hash256(encode_tx(tx))


def decode_tx(data: bytes):
    r = Reader(data)
    tag = r.u8()
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise CodecError(f"unknown tx tag {tag}")
    tx = cls.read(r)
    r.expect_end()
    return tx


def tx_sender(tx) -> bytes:
    if isinstance(tx, ChannelOpen):
        return tx.party_a
    if isinstance(tx, (ContractCreate, NameClaim, AzCreate)):
        return tx.owner
    if isinstance(tx, ContractCall):
        return tx.caller
    if isinstance(tx, OracleRegister):
        return tx.asker
    if isinstance(tx, StorageCreate):
        return tx.payer
    return tx.sender


def effective_fee(tx) -> int:
    if isinstance(tx, DataOnly):
        return data_only_cost(len(tx.payload), tx.gas_price)
    return tx.fee


def data_only_cost(payload_len: int, gas_price: int) -> int:
    return gas_price * payload_len


def sign_tx(tx, keypair):
    return replace(tx, sig=keypair.sign(signing_bytes(tx)))


# --- checking ----------------------------------------------------------


def check_tx(state: ChainState, tx, cfg) -> None:
    """Format, signature, and counter checks; raises TxError."""
    if isinstance(tx, EpochTx):
        return  # system txs carry no envelope; apply_epoch validates them
    try:
        encode_tx(tx)  # exercises every range check in the codec
    except (CodecError, LedgerError) as exc:
        raise TxError("BadFormat", str(exc)) from exc
    if isinstance(tx, GAS_KINDS):
        if tx.gas < 1 or tx.gas_price < 1:
            raise TxError("BadFormat", "gas and gas_price must be >= 1")
        if tx.fee != tx.gas * tx.gas_price:
            raise TxError("BadFormat", f"fee {tx.fee} != gas*gas_price {tx.gas * tx.gas_price}")
    elif not isinstance(tx, DataOnly) and tx.fee < 1:
        # a reverted transaction must still pay something to the miner
        raise TxError("BadFormat", "fee must be at least 1 base unit")
    if isinstance(tx, ContractCreate) and tx.vm_version != tx.code.vm_version:
        raise TxError("BadFormat", "vm_version mismatch")
    if isinstance(tx, AccountDelete) and tx.target == tx.sender:
        raise TxError("BadFormat", "cannot delete the fee-paying account")
    if isinstance(tx, ChannelOpen) and tx.party_a == tx.party_b:
        raise TxError("BadFormat", "channel needs two distinct parties")
    if isinstance(tx, Spend):
        recipient = state.accounts.get(tx.recipient)
        if recipient is not None and recipient.kind == CONTRACT:
            raise TxError("SpendToContract", "contract accounts take no spends")

    sender = tx_sender(tx)
    msg = signing_bytes(tx)
    if tx.sig == ZERO_SIG:
        raise TxError("MissingSignature", "unsigned transaction")
    if not verify_sig(sender, msg, tx.sig):
        raise TxError("BadSignature", "envelope signature does not verify")
    if isinstance(tx, ChannelOpen):
        if tx.sig_b == ZERO_SIG:
            raise TxError("MissingSignature", "channel open needs both parties")
        if not verify_sig(tx.party_b, msg, tx.sig_b):
            raise TxError("BadSignature", "party B signature does not verify")

    account = state.accounts.get(sender)
    if account is None or tx.counter != account.counter + 1:
        have = account.counter if account else None
        raise TxError("BadCounter", f"counter {tx.counter}, account at {have}")
    if account.balance < effective_fee(tx):
        raise TxError("InsufficientForFee", f"{account.balance} < {effective_fee(tx)}")


# --- application -------------------------------------------------------


@dataclass
class ApplyCtx:
    miner: bytes
    height: int
    cfg: object
    prev_block_hash: bytes = ZERO32
    proof_leaves: list = field(default_factory=list)


def _register_program(state: ChainState, program: Program | None) -> None:
    if program is not None:
        state.code[program.code_hash()] = program


def _apply_inner(state: ChainState, tx, ctx: ApplyCtx) -> int:
    """Kind-specific value movement. Returns VM gas used (0 for non-VM)."""
    height, cfg = ctx.height, ctx.cfg
    if isinstance(tx, Spend):
        state.debit(tx.sender, tx.amount, height)
        state.credit(tx.recipient, tx.amount, height)
        return 0
    if isinstance(tx, ContractCreate):
        address = contract_address(tx.owner, tx.counter)
        if address in state.accounts:
            raise LedgerError("AddressCollision", address.hex())
        state.debit(tx.owner, tx.deposit + tx.amount, height)
        from .ledger import Account

        code_hash = tx.code.code_hash()
        state.accounts[address] = Account(
            address, tx.deposit + tx.amount, freshness=height, kind=CONTRACT,
            code_hash=code_hash,
        )
        state.code[code_hash] = tx.code
        env = _call_env(state, tx.owner, address)
        result = execute(tx.code, list(tx.call_data), env, tx.gas, cfg.pure_space)
        if result.status != HALTED:
            raise _Revert(result.status)
        return result.gas_used
    if isinstance(tx, ContractCall):
        state.debit(tx.caller, tx.amount, height)
        state.credit(tx.contract, tx.amount, height)
        target = state.accounts.get(tx.contract)
        if target is not None and target.kind == CONTRACT:
            program = state.code.get(target.code_hash)
            if program is None:
                raise LedgerError("BadFormat", "contract code missing from store")
            env = _call_env(state, tx.caller, tx.contract)
            result = execute(program, list(tx.call_data), env, tx.gas, cfg.pure_space)
            if result.status != HALTED:
                raise _Revert(result.status)
            return result.gas_used
        return 0
    if isinstance(tx, DataOnly):
        return len(tx.payload)  # payload is inert; its cost was the fee
    if isinstance(tx, NameClaim):
        if tx.name in state.names:
            raise _Revert("NameTaken")
        state.names[tx.name] = NameRecord(tx.name, tx.target, tx.owner)
        return 0
    if isinstance(tx, AccountDelete):
        state.touch(tx.target, height)
        state.delete_account(tx.target)
        reward = min(cfg.delete_reward, state.pool.endowment)
        if reward:
            state.pool = replace(state.pool, endowment=state.pool.endowment - reward)
            state.credit(tx.sender, reward, height)
        return 0
    if isinstance(tx, ChannelOpen):
        channels.open_channel(
            state, tx.party_a, tx.party_b, tx.deposit_a, tx.deposit_b, tx.counter, height
        )
        return 0
    if isinstance(tx, ChannelCloseCoop):
        if tx.state is None:
            raise LedgerError("BadFormat", "cooperative close needs a signed state")
        _register_program(state, tx.program)
        channels.cooperative_close(state, tx.channel_id, tx.state, height)
        return 0
    if isinstance(tx, ChannelClose):
        _register_program(state, tx.program)
        channels.unilateral_close(state, tx.channel_id, tx.state, height, cfg)
        return 0
    if isinstance(tx, ChannelChallenge):
        if tx.state is None:
            raise LedgerError("BadFormat", "challenge needs a signed state")
        _register_program(state, tx.program)
        channels.challenge(state, tx.channel_id, tx.state, height, cfg)
        return 0
    if isinstance(tx, ChannelFinalize):
        _register_program(state, tx.program)
        channels.finalize(state, tx.channel_id, height, cfg)
        return 0
    if isinstance(tx, OracleRegister):
        oracles.register(
            state, tx.asker, tx.question_hash, tx.start, tx.end, tx.counter, height, cfg
        )
        return 0
    if isinstance(tx, OracleAnswer):
        oracles.answer(state, tx.question_id, tx.sender, tx.bit, height)
        return 0
    if isinstance(tx, OracleCounter):
        oracles.counterclaim(state, tx.question_id, tx.sender, height, cfg)
        return 0
    if isinstance(tx, OracleVote):
        weight = pow.stake_weight(state, tx.sender)
        oracles.record_vote(state, tx.question_id, tx.sender, tx.bit, weight, height)
        return 0
    if isinstance(tx, OracleResolve):
        oracles.resolve(state, tx.question_id, height, cfg)
        return 0
    if isinstance(tx, StorageCreate):
        storage.create_contract(
            state, tx.payer, tx.provider, tx.data_root, tx.chunk_count,
            tx.chunk_size, tx.challenge_period_n, tx.reward_per_proof,
            tx.escrow, tx.counter, height,
        )
        return 0
    if isinstance(tx, StorageProof):
        storage.prove_and_pay(
            state, tx.contract_id, tx.chunk, tx.proof, height, ctx.prev_block_hash
        )
        ctx.proof_leaves.append(
            Writer()
            .fixed(tx.contract_id, HASH_SIZE)
            .u64(height)
            .u32(tx.proof.leaf_index)
            .fixed(hash256(tx.chunk), HASH_SIZE)
            .done()
        )
        return 0
    if isinstance(tx, StorageClose):
        storage.close_contract(state, tx.contract_id, tx.sender, height)
        return 0
    if isinstance(tx, AzCreate):
        rewards.az_create(state, tx.owner, tx.join_price, tx.counter, height, cfg)
        return 0
    if isinstance(tx, AzJoin):
        rewards.az_join(state, tx.sender, tx.az_id, height)
        return 0
    if isinstance(tx, AzRefer):
        rewards.az_refer(state, tx.sender, tx.user, tx.az_id)
        return 0
    raise LedgerError("BadFormat", f"unhandled tx kind {type(tx).__name__}")


def _call_env(state: ChainState, caller: bytes, contract: bytes) -> VmEnv:
    def balance_of(handle: int) -> int:
        address = {0: caller, 1: contract}.get(handle)
        account = state.accounts.get(address) if address else None
        return account.balance if account else 0

    return VmEnv(balance_of=balance_of, sig_ok=None)


def apply_tx(state: ChainState, tx, ctx: ApplyCtx) -> Receipt:
    """Mutates state; raises TxError if the transaction is inapplicable.

    Transactional: on any raise the state is exactly as it was, so callers
    may probe candidates and skip failures without replay divergence.
    """
    check_tx(state, tx, ctx.cfg)
    outer = state.clone()
    try:
        return _apply_checked(state, tx, ctx)
    except Exception:
        state.restore(outer)
        raise


def _apply_checked(state: ChainState, tx, ctx: ApplyCtx) -> Receipt:
    this_hash = tx_hash(tx)
    if isinstance(tx, EpochTx):
        if ctx.height == 0 or ctx.height % ctx.cfg.blocks_per_epoch != 0:
            raise TxError("BadFormat", f"epoch tx at non-boundary height {ctx.height}")
        rewards.apply_epoch(state, tx.report, ctx.height, ctx.cfg)
        return Receipt(this_hash, APPLIED, 0, 0, 0)

    sender = tx_sender(tx)
    fee = effective_fee(tx)
    height = ctx.height

    state.touch(sender, height)
    if state.accounts[sender].balance < fee:
        raise TxError("InsufficientForFee", "fee exceeds balance after maintenance")
    snapshot = state.clone()

    def charge_envelope() -> None:
        state.debit(sender, fee, height)
        account = state.accounts[sender]
        state.accounts[sender] = replace(account, counter=tx.counter)
        state.credit(ctx.miner, fee, height)

    charge_envelope()
    try:
        gas_used = _apply_inner(state, tx, ctx)
    except (_Revert, LedgerError) as exc:
        if isinstance(exc, LedgerError) and exc.code in NON_REVERTIBLE:
            raise
        state.restore(snapshot)
        charge_envelope()
        reverted_gas = tx.gas if isinstance(tx, GAS_KINDS) else 0
        reason = exc.code if isinstance(exc, LedgerError) else exc.reason
        return Receipt(this_hash, REVERTED, reverted_gas, fee, fee, reason)

    if isinstance(tx, GAS_KINDS):
        refund = (tx.gas - gas_used) * tx.gas_price
        if refund:
            state.debit(ctx.miner, refund, height)
            state.credit(sender, refund, height)
        net = gas_used * tx.gas_price
        return Receipt(this_hash, APPLIED, gas_used, net, net)
    return Receipt(this_hash, APPLIED, gas_used, fee, fee)


# --- blocks ------------------------------------------------------------


def state_roots(state: ChainState) -> dict[str, bytes]:
    return {
        "account_root": state.account_root(),
        "name_root": state.name_root(),
        "wormhole_root": state.wormhole_root(),
        "oracle_open_root": state.oracle_open_root(),
        "oracle_answer_root": state.oracle_answer_root(),
    }


def apply_block(state: ChainState, block: Block) -> tuple[ChainState, list[Receipt]]:
    """Pure block transition; the header must already be validated."""
    header = block.header
    cfg = state.cfg
    work = state.clone()
    work.height = header.height
    ctx = ApplyCtx(
        miner=header.miner,
        height=header.height,
        cfg=cfg,
        prev_block_hash=header.prev_hash,
    )
    receipts: list[Receipt] = []
    if header.height == 0:
        if block.transactions:
            raise BlockError("BadFormat", "genesis carries no transactions")
    else:
        work.mint(header.miner, pow.coinbase(header.height, cfg), header.height)
        for tx in block.transactions:
            try:
                receipts.append(apply_tx(work, tx, ctx))
            except TxError as exc:
                raise BlockError("BadTx", f"{exc}") from exc
            except LedgerError as exc:
                raise BlockError("BadTx", f"{exc}") from exc

    if header.tx_root != tree_root([encode_tx(t) for t in block.transactions]):
        raise BlockError("RootMismatch", "tx_root")
    if header.proof_root != tree_root(ctx.proof_leaves):
        raise BlockError("RootMismatch", "proof_root")
    for name, value in state_roots(work).items():
        if getattr(header, name) != value:
            raise BlockError("RootMismatch", name)
    work.check_invariants()
    return work, receipts


def build_block(
    state: ChainState,
    candidate_txs: list,
    miner: bytes,
    prev_header: BlockHeader | None,
    nonce_budget: int | None = None,
) -> Block | None:
    """Assemble and mine the next block.

    Candidate transactions are taken in (fee density, tx hash) order;
    inapplicable ones are dropped. Returns None if the PoW search exhausts
    its budget.
    """
    cfg = state.cfg
    height = 0 if prev_header is None else prev_header.height + 1
    work = state.clone()
    work.height = height
    prev_hash = ZERO32 if prev_header is None else prev_header.block_hash()
    ctx = ApplyCtx(miner=miner, height=height, cfg=cfg, prev_block_hash=prev_hash)

    included: list = []
    if height > 0:
        work.mint(miner, pow.coinbase(height, cfg), height)
        user_txs = [t for t in candidate_txs if not isinstance(t, EpochTx)]
        system_txs = [t for t in candidate_txs if isinstance(t, EpochTx)]
        user_txs.sort(key=_mempool_order)
        for tx in user_txs + system_txs:
            try:
                apply_tx(work, tx, ctx)
            except (LedgerError, CodecError):
                continue
            included.append(tx)

    roots = state_roots(work)
    header_base = dict(
        height=height,
        prev_hash=prev_hash,
        tx_root=tree_root([encode_tx(t) for t in included]),
        proof_root=tree_root(ctx.proof_leaves),
        miner=miner,
        **roots,
    )
    probe = BlockHeader(entropy=ZERO32, pow_nonce=0, pow_cycle=(), **header_base)
    params = pow.PowParams.from_config(cfg)
    budget = nonce_budget if nonce_budget is not None else cfg.pow_nonce_budget
    solution = pow.solve(probe.base_hash(), params, budget)
    if solution is None:
        return None
    prev_entropy = ZERO32 if prev_header is None else prev_header.entropy
    header = BlockHeader(
        entropy=expected_entropy(prev_entropy, miner, solution.nonce),
        pow_nonce=solution.nonce,
        pow_cycle=solution.edges,
        **header_base,
    )
    return Block(header, tuple(included))


def _mempool_order(tx):
    from fractions import Fraction

    size = len(encode_tx(tx))
    density = Fraction(effective_fee(tx), size) if size else Fraction(0)
    return (-density, tx_hash(tx))


def genesis_block(cfg) -> tuple[ChainState, Block]:
    state = ChainState.genesis(cfg)
    block = build_block(state, [], ZERO32, prev_header=None)
    if block is None:
        raise BlockError("BadPow", "genesis mining exhausted its nonce budget")
    applied, _ = apply_block(state, block)
    return applied, block
