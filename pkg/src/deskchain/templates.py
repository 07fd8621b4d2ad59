"""Stock channel-contract programs.

Each template is a pure program that reads its inputs from the initial
stack and leaves exactly [amount_a, amount_b] behind; the two outputs must
sum to the channel total or settlement falls back to the last agreed
balances. Helpers build the matching contract_state vectors.
"""
from __future__ import annotations

from .crypto import hash256
from .vm import Program, assemble

# total ratio_a ratio_b -> a = total*ratio_a // (ratio_a+ratio_b), b = rest
PAYMENT_SPLIT = assemble(
    """
    ; stack in: total ratio_a ratio_b
    STORE 2
    STORE 1
    STORE 0
    LOAD 0
    LOAD 1
    MUL
    LOAD 1
    LOAD 2
    ADD
    DIV       ; a = total*ra / (ra+rb)
    STORE 3
    LOAD 0
    LOAD 3
    SUB       ; b = total - a
    STORE 4
    LOAD 3
    LOAD 4
    STOP
    """
)

# total hashlock deadline height preimage -> all to B on a timely reveal
HASH_TIMELOCK = assemble(
    """
    ; stack in: total hashlock deadline height preimage
    STORE 4
    STORE 3
    STORE 2
    STORE 1
    STORE 0
    LOAD 4
    HASH
    LOAD 1
    EQ        ; preimage opens the lock
    LOAD 2
    LOAD 3
    LT
    NOT       ; height <= deadline
    MUL       ; claim ok
    LOAD 0
    MUL       ; b = ok * total
    STORE 5
    LOAD 0
    LOAD 5
    SUB
    STORE 6
    LOAD 6
    LOAD 5
    STOP
    """
)

# total calls price -> provider earns min(total, calls*price)
METERED_API = assemble(
    """
    ; stack in: total calls_made price_per_call
    STORE 2
    STORE 1
    STORE 0
    LOAD 1
    LOAD 2
    MUL       ; cost
    STORE 3
    LOAD 0
    LOAD 3
    LOAD 3
    LOAD 0
    LT        ; cost < total
    SELECT    ; b = min(cost, total)
    STORE 4
    LOAD 0
    LOAD 4
    SUB
    LOAD 4
    STOP
    """
)

# escrow proofs_ok reward -> provider earns min(escrow, proofs_ok*reward)
STORAGE_PAYOUT = assemble(
    """
    ; stack in: escrow proofs_ok reward_per_proof
    STORE 2
    STORE 1
    STORE 0
    LOAD 1
    LOAD 2
    MUL
    STORE 3
    LOAD 0
    LOAD 3
    LOAD 3
    LOAD 0
    LT
    SELECT
    STORE 4
    LOAD 0
    LOAD 4
    SUB
    LOAD 4
    STOP
    """
)

TEMPLATES: dict[str, Program] = {
    "payment-split": PAYMENT_SPLIT,
    "hash-timelock": HASH_TIMELOCK,
    "metered-api": METERED_API,
    "storage-payout": STORAGE_PAYOUT,
}


def vm_hash_int(x: int) -> int:
    """The HASH instruction's mapping, for building hashlocks off-VM."""
    digest = hash256(x.to_bytes(8, "big", signed=True))
    return int.from_bytes(digest[:8], "big", signed=True)


def payment_split_state(total: int, ratio_a: int, ratio_b: int) -> list[int]:
    return [total, ratio_a, ratio_b]


def hash_timelock_state(total: int, preimage: int, deadline: int, height: int) -> list[int]:
    return [total, vm_hash_int(preimage), deadline, height, preimage]


def metered_api_state(total: int, calls_made: int, price_per_call: int) -> list[int]:
    return [total, calls_made, price_per_call]


def storage_payout_state(escrow: int, proofs_ok: int, reward_per_proof: int) -> list[int]:
    return [escrow, proofs_ok, reward_per_proof]
