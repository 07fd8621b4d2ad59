"""Wormhole state channels.

A channel locks two parties' deposits on-chain; everything after that is
doubly-signed off-chain states with strictly increasing nonces. The chain
re-enters the picture for cooperative close, unilateral close with a
countdown, higher-nonce challenges, and contract-driven settlement, where
the contract is a pure VM program mapping its recorded state to a final
split of the locked total.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .codec import Reader, Writer, check_amount
from .crypto import ADDRESS_SIZE, HASH_SIZE, SIG_SIZE, ZERO_SIG, hash256, verify_sig
from .errors import LedgerError, VmFailure
from .vm import Program, eval_pure

OPEN = "open"
CLOSING = "closing"
CLOSED = "closed"

_STATUS_TAGS = {OPEN: 0, CLOSING: 1, CLOSED: 2}
_STATUS_NAMES = {v: k for k, v in _STATUS_TAGS.items()}


@dataclass(frozen=True)
class SignedState:
    channel_id: bytes
    nonce: int
    balance_a: int
    balance_b: int
    contract_hash: bytes | None = None
    contract_state: tuple[int, ...] = ()
    sig_a: bytes = ZERO_SIG
    sig_b: bytes = ZERO_SIG

    def signing_bytes(self) -> bytes:
        return self._encode(with_sigs=False)

    def encode(self) -> bytes:
        return self._encode(with_sigs=True)

    def _encode(self, with_sigs: bool) -> bytes:
        w = (
            Writer()
            .fixed(self.channel_id, HASH_SIZE)
            .u64(self.nonce)
            .u64(self.balance_a)
            .u64(self.balance_b)
            .flag(self.contract_hash is not None)
        )
        if self.contract_hash is not None:
            w.fixed(self.contract_hash, HASH_SIZE)
        w.u32(len(self.contract_state))
        for v in self.contract_state:
            w.i64(v)
        if with_sigs:
            w.fixed(self.sig_a, SIG_SIZE).fixed(self.sig_b, SIG_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "SignedState":
        channel_id = r.fixed(HASH_SIZE)
        nonce = r.u64()
        bal_a = r.u64()
        bal_b = r.u64()
        contract_hash = r.fixed(HASH_SIZE) if r.flag() else None
        contract_state = tuple(r.i64() for _ in range(r.u32()))
        return SignedState(
            channel_id, nonce, bal_a, bal_b, contract_hash, contract_state,
            r.fixed(SIG_SIZE), r.fixed(SIG_SIZE),
        )


@dataclass(frozen=True)
class Channel:
    channel_id: bytes
    party_a: bytes
    party_b: bytes
    deposit_a: int
    deposit_b: int
    status: str = OPEN
    deadline: int = 0
    candidate: SignedState | None = None
    final_split: tuple[int, int] | None = None

    @property
    def total(self) -> int:
        return self.deposit_a + self.deposit_b

    def encode(self) -> bytes:
        w = (
            Writer()
            .fixed(self.channel_id, HASH_SIZE)
            .fixed(self.party_a, ADDRESS_SIZE)
            .fixed(self.party_b, ADDRESS_SIZE)
            .u64(self.deposit_a)
            .u64(self.deposit_b)
            .u8(_STATUS_TAGS[self.status])
            .u64(self.deadline)
            .flag(self.candidate is not None)
        )
        if self.candidate is not None:
            w.blob(self.candidate.encode())
        w.flag(self.final_split is not None)
        if self.final_split is not None:
            w.u64(self.final_split[0]).u64(self.final_split[1])
        return w.done()

    @staticmethod
    def read(r: Reader) -> "Channel":
        channel_id = r.fixed(HASH_SIZE)
        a = r.fixed(ADDRESS_SIZE)
        b = r.fixed(ADDRESS_SIZE)
        dep_a = r.u64()
        dep_b = r.u64()
        status = _STATUS_NAMES[r.u8()]
        deadline = r.u64()
        candidate = None
        if r.flag():
            sub = Reader(r.blob())
            candidate = SignedState.read(sub)
            sub.expect_end()
        final = (r.u64(), r.u64()) if r.flag() else None
        return Channel(channel_id, a, b, dep_a, dep_b, status, deadline, candidate, final)


def channel_id_for(a: bytes, b: bytes, counter_a: int) -> bytes:
    return hash256(b"chan" + a + b + counter_a.to_bytes(8, "big"))


def nonce_zero_state(channel: Channel) -> SignedState:
    """Implicit settlement when no update was ever signed: the deposits."""
    return SignedState(channel.channel_id, 0, channel.deposit_a, channel.deposit_b)


def state_sigs_ok(channel: Channel, ss: SignedState) -> bool:
    if ss.channel_id != channel.channel_id:
        return False
    if ss.nonce == 0:
        return ss == nonce_zero_state(channel)
    msg = ss.signing_bytes()
    return verify_sig(channel.party_a, msg, ss.sig_a) and verify_sig(
        channel.party_b, msg, ss.sig_b
    )


def make_update(
    channel: Channel,
    prev: SignedState,
    new_balances: tuple[int, int],
    contract_hash: bytes | None = None,
    contract_state: tuple[int, ...] = (),
) -> SignedState:
    """Next off-chain state, unsigned; parties sign the signing_bytes."""
    bal_a, bal_b = (check_amount(v, "balance") for v in new_balances)
    if bal_a + bal_b != channel.total:
        raise LedgerError(
            "BalanceSumMismatch", f"{bal_a}+{bal_b} != locked {channel.total}"
        )
    return SignedState(
        channel_id=channel.channel_id,
        nonce=prev.nonce + 1,
        balance_a=bal_a,
        balance_b=bal_b,
        contract_hash=contract_hash,
        contract_state=tuple(contract_state),
    )


def check_update_order(prev: SignedState, new: SignedState) -> None:
    if new.nonce != prev.nonce + 1:
        raise LedgerError("NonMonotonicNonce", f"{prev.nonce} -> {new.nonce}")


def sign_state(ss: SignedState, keypair, side: str) -> SignedState:
    sig = keypair.sign(ss.signing_bytes())
    if side == "a":
        return replace(ss, sig_a=sig)
    if side == "b":
        return replace(ss, sig_b=sig)
    raise ValueError(f"side must be 'a' or 'b', not {side!r}")


def settle_split(
    candidate: SignedState, total: int, program: Program | None, cfg
) -> tuple[int, int]:
    """Final (a, b) split; falls back to the candidate balances whenever the
    contract is missing, fails, or does not account for every locked unit."""
    fallback = (candidate.balance_a, candidate.balance_b)
    if candidate.contract_hash is None:
        return fallback
    if program is None or program.code_hash() != candidate.contract_hash:
        return fallback
    try:
        out = eval_pure(program, list(candidate.contract_state), cfg.pure_gas, cfg.pure_space)
    except VmFailure:
        return fallback
    if len(out) != 2 or out[0] < 0 or out[1] < 0 or out[0] + out[1] != total:
        return fallback
    return out[0], out[1]


# --- on-chain transitions (mutate a working ChainState) ---


def _get_channel(state, channel_id: bytes, *statuses: str) -> Channel:
    channel = state.channels.get(channel_id)
    if channel is None or (statuses and channel.status not in statuses):
        raise LedgerError("WrongChannel", channel_id.hex())
    return channel


def open_channel(state, a: bytes, b: bytes, deposit_a: int, deposit_b: int, counter_a: int, height: int) -> bytes:
    channel_id = channel_id_for(a, b, counter_a)
    if channel_id in state.channels:
        raise LedgerError("WrongChannel", "channel id already exists")
    state.debit(a, deposit_a, height)
    state.debit(b, deposit_b, height)
    state.channels[channel_id] = Channel(channel_id, a, b, deposit_a, deposit_b)
    return channel_id


def _apply_split(state, channel: Channel, split: tuple[int, int], height: int) -> None:
    if split[0] + split[1] != channel.total:
        raise LedgerError("BalanceSumMismatch", "settlement must conserve deposits")
    state.credit(channel.party_a, split[0], height)
    state.credit(channel.party_b, split[1], height)
    state.channels[channel.channel_id] = replace(
        channel, status=CLOSED, candidate=None, deadline=0, final_split=split
    )


def cooperative_close(state, channel_id: bytes, final: SignedState, height: int) -> None:
    channel = _get_channel(state, channel_id, OPEN)
    if not state_sigs_ok(channel, final):
        raise LedgerError("BadSignature", "cooperative close needs both signatures")
    _apply_split(state, channel, (final.balance_a, final.balance_b), height)


def unilateral_close(state, channel_id: bytes, candidate: SignedState | None, height: int, cfg) -> None:
    channel = _get_channel(state, channel_id, OPEN)
    candidate = candidate if candidate is not None else nonce_zero_state(channel)
    if not state_sigs_ok(channel, candidate):
        raise LedgerError("BadSignature", "candidate state is not doubly signed")
    state.channels[channel_id] = replace(
        channel,
        status=CLOSING,
        deadline=height + cfg.countdown_blocks,
        candidate=candidate,
    )


def challenge(state, channel_id: bytes, better: SignedState, height: int, cfg) -> None:
    channel = _get_channel(state, channel_id, CLOSING)
    if height >= channel.deadline:
        raise LedgerError("TooLate", f"deadline {channel.deadline} passed at {height}")
    if not state_sigs_ok(channel, better):
        raise LedgerError("BadSignature", "challenge state is not doubly signed")
    assert channel.candidate is not None
    if better.nonce <= channel.candidate.nonce:
        raise LedgerError("NotBetter", f"{better.nonce} <= {channel.candidate.nonce}")
    program = state.code.get(better.contract_hash) if better.contract_hash else None
    split = settle_split(better, channel.total, program, cfg)
    _apply_split(state, channel, split, height)


def finalize(state, channel_id: bytes, height: int, cfg) -> None:
    channel = _get_channel(state, channel_id, CLOSING)
    if height < channel.deadline:
        raise LedgerError("NotYet", f"countdown ends at {channel.deadline}")
    assert channel.candidate is not None
    candidate = channel.candidate
    program = state.code.get(candidate.contract_hash) if candidate.contract_hash else None
    split = settle_split(candidate, channel.total, program, cfg)
    _apply_split(state, channel, split, height)
