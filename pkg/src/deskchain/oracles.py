"""Yes/no oracle lifecycle.

A question escrows a deposit proportional to its answer window. The asker
answers for free inside the window; anyone may counter the answer with an
equal deposit, which moves the decision to a stake-weighted ballot. Expiry
without an answer burns the deposit. Every terminal path conserves the
escrow exactly: returned + burned = escrowed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .codec import Reader, Writer
from .crypto import ADDRESS_SIZE, HASH_SIZE, ZERO32, hash256
from .errors import LedgerError

PH_OPEN = "open"
PH_ANSWERED = "answered"
PH_CONTESTED = "contested"
PH_RESOLVED = "resolved"
PH_BURNED = "burned"

_PHASE_TAGS = {PH_OPEN: 0, PH_ANSWERED: 1, PH_CONTESTED: 2, PH_RESOLVED: 3, PH_BURNED: 4}
_PHASE_NAMES = {v: k for k, v in _PHASE_TAGS.items()}

PENDING = "pending"
BURNED = "burned"


@dataclass(frozen=True)
class Vote:
    voter: bytes
    bit: bool
    weight: int  # stake snapshot when the ballot entered a block

    def encode(self) -> bytes:
        return Writer().fixed(self.voter, ADDRESS_SIZE).flag(self.bit).u64(self.weight).done()

    @staticmethod
    def read(r: Reader) -> "Vote":
        return Vote(r.fixed(ADDRESS_SIZE), r.flag(), r.u64())


@dataclass(frozen=True)
class OracleQuestion:
    question_id: bytes
    asker: bytes
    question_hash: bytes
    start: int
    end: int
    deposit: int
    phase: str = PH_OPEN
    answer_bit: bool = False
    answer_height: int = 0
    counter_party: bytes = ZERO32
    counter_deposit: int = 0
    vote_end: int = 0
    votes: tuple[Vote, ...] = ()
    resolved_bit: bool = False

    def escrowed(self) -> int:
        """Deposits currently held by this question."""
        if self.phase in (PH_OPEN, PH_ANSWERED):
            return self.deposit
        if self.phase == PH_CONTESTED:
            return self.deposit + self.counter_deposit
        return 0

    def encode(self) -> bytes:
        w = (
            Writer()
            .fixed(self.question_id, HASH_SIZE)
            .fixed(self.asker, ADDRESS_SIZE)
            .fixed(self.question_hash, HASH_SIZE)
            .u64(self.start)
            .u64(self.end)
            .u64(self.deposit)
            .u8(_PHASE_TAGS[self.phase])
            .flag(self.answer_bit)
            .u64(self.answer_height)
            .fixed(self.counter_party, ADDRESS_SIZE)
            .u64(self.counter_deposit)
            .u64(self.vote_end)
            .u32(len(self.votes))
        )
        for v in self.votes:
            w.fixed(v.encode(), ADDRESS_SIZE + 1 + 8)
        w.flag(self.resolved_bit)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "OracleQuestion":
        question_id = r.fixed(HASH_SIZE)
        asker = r.fixed(ADDRESS_SIZE)
        question_hash = r.fixed(HASH_SIZE)
        start = r.u64()
        end = r.u64()
        deposit = r.u64()
        phase = _PHASE_NAMES[r.u8()]
        answer_bit = r.flag()
        answer_height = r.u64()
        counter_party = r.fixed(ADDRESS_SIZE)
        counter_deposit = r.u64()
        vote_end = r.u64()
        votes = tuple(Vote.read(r) for _ in range(r.u32()))
        resolved_bit = r.flag()
        return OracleQuestion(
            question_id, asker, question_hash, start, end, deposit, phase,
            answer_bit, answer_height, counter_party, counter_deposit,
            vote_end, votes, resolved_bit,
        )


def question_id_for(asker: bytes, counter: int, question_hash: bytes) -> bytes:
    return hash256(b"oracle" + asker + counter.to_bytes(8, "big") + question_hash)


def window_deposit(start: int, end: int, cfg) -> int:
    return cfg.oracle_deposit_rate * (end - start)


def _get(state, question_id: bytes) -> OracleQuestion:
    q = state.oracles.get(question_id)
    if q is None:
        raise LedgerError("NotFound", question_id.hex())
    return q


def register(state, asker: bytes, question_hash: bytes, start: int, end: int,
             counter: int, height: int, cfg) -> bytes:
    if end <= start or start < height:
        raise LedgerError("BadWindow", f"[{start}, {end}) at height {height}")
    deposit = window_deposit(start, end, cfg)
    state.debit(asker, deposit, height)
    question_id = question_id_for(asker, counter, question_hash)
    if question_id in state.oracles:
        raise LedgerError("BadFormat", "question id already exists")
    state.oracles[question_id] = OracleQuestion(
        question_id, asker, question_hash, start, end, deposit
    )
    return question_id


def answer(state, question_id: bytes, caller: bytes, bit: bool, height: int) -> None:
    q = _get(state, question_id)
    if q.phase != PH_OPEN:
        raise LedgerError("NotReady", f"phase {q.phase}")
    if caller != q.asker:
        raise LedgerError("NotAsker", "only the asker answers for free")
    if not q.start <= height <= q.end:
        raise LedgerError("OutsideWindow", f"height {height} not in [{q.start}, {q.end}]")
    state.oracles[question_id] = replace(
        q, phase=PH_ANSWERED, answer_bit=bit, answer_height=height
    )


def counterclaim(state, question_id: bytes, challenger: bytes, height: int, cfg) -> None:
    q = _get(state, question_id)
    if q.phase != PH_ANSWERED:
        raise LedgerError("NotReady", f"phase {q.phase}")
    if height > q.end + cfg.oracle_challenge_window:
        raise LedgerError("TooLate", "challenge window closed")
    state.debit(challenger, q.deposit, height)  # same deposit, exactly
    state.oracles[question_id] = replace(
        q,
        phase=PH_CONTESTED,
        counter_party=challenger,
        counter_deposit=q.deposit,
        vote_end=height + cfg.oracle_vote_window,
    )


def record_vote(state, question_id: bytes, voter: bytes, bit: bool, weight: int, height: int) -> None:
    q = _get(state, question_id)
    if q.phase != PH_CONTESTED:
        raise LedgerError("NotReady", f"phase {q.phase}")
    if height >= q.vote_end:
        raise LedgerError("TooLate", "vote window closed")
    if any(v.voter == voter for v in q.votes):
        raise LedgerError("AlreadyVoted", voter.hex())
    state.oracles[question_id] = replace(q, votes=q.votes + (Vote(voter, bit, weight),))


def tally(votes: tuple[Vote, ...]) -> tuple[int, int]:
    yes = sum(v.weight for v in votes if v.bit)
    no = sum(v.weight for v in votes if not v.bit)
    return yes, no


def resolve(state, question_id: bytes, height: int, cfg) -> None:
    q = _get(state, question_id)
    if q.phase == PH_OPEN:
        if height <= q.end:
            raise LedgerError("NotReady", "window still open")
        state.burn(q.deposit)
        state.oracles[question_id] = replace(q, phase=PH_BURNED)
    elif q.phase == PH_ANSWERED:
        if height <= q.end + cfg.oracle_challenge_window:
            raise LedgerError("NotReady", "challenge window still open")
        state.credit(q.asker, q.deposit, height)
        state.oracles[question_id] = replace(q, phase=PH_RESOLVED, resolved_bit=q.answer_bit)
    elif q.phase == PH_CONTESTED:
        if height < q.vote_end:
            raise LedgerError("NotReady", "vote window still open")
        yes, no = tally(q.votes)
        if yes == no:
            bit = q.answer_bit  # tie keeps the original answer
        else:
            bit = yes > no
        if bit == q.answer_bit:
            state.credit(q.asker, q.deposit, height)
            state.burn(q.counter_deposit)
        else:
            state.credit(q.counter_party, q.counter_deposit, height)
            state.burn(q.deposit)
        state.oracles[question_id] = replace(q, phase=PH_RESOLVED, resolved_bit=bit)
    else:
        raise LedgerError("NotReady", f"phase {q.phase} is terminal")


def read_answer(state, question_id: bytes):
    """True/False once resolved, PENDING while live, BURNED forever after expiry."""
    q = _get(state, question_id)
    if q.phase == PH_RESOLVED:
        return q.resolved_bit
    if q.phase == PH_BURNED:
        return BURNED
    return PENDING
