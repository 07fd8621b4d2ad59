"""Deterministic stack machine with dual metering.

Every instruction costs exactly one gas unit; space is the running maximum
of stack depth plus occupied store cells and is a hard limit rather than a
priced resource. Values are 64-bit signed integers; any overflow, bad
division, or stack underflow traps the run with status "failed". The
machine is a pure function of its inputs: balance views are read-only and
results are returned, never applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .codec import I64_MAX, I64_MIN, Reader, Writer
from .errors import CodecError, LedgerError, VmFailure
from .crypto import hash256

MAX_PROGRAM_LEN = 65_536

# opcode table; order fixes the binary encoding
OPS = (
    "PUSH", "POP", "DUP", "SWAP", "ADD", "SUB", "MUL", "DIV", "LT", "EQ",
    "NOT", "SELECT", "HASH", "SIGOK", "BALANCE", "STORE", "LOAD", "STOP", "FAIL",
)
_OPCODE = {name: i for i, name in enumerate(OPS)}
_HAS_IMM = {"PUSH"}
_HAS_IDX = {"STORE", "LOAD"}
ENV_OPS = {"SIGOK", "BALANCE"}

HALTED = "halted"
FAILED = "failed"
OUT_OF_GAS = "out_of_gas"
OUT_OF_SPACE = "out_of_space"


@dataclass(frozen=True)
class Instr:
    op: str
    arg: int = 0

    def __post_init__(self) -> None:
        if self.op not in _OPCODE:
            raise LedgerError("BadFormat", f"unknown instruction {self.op!r}")
        if self.op in _HAS_IMM and not I64_MIN <= self.arg <= I64_MAX:
            raise LedgerError("BadFormat", f"PUSH immediate out of range: {self.arg}")
        if self.op in _HAS_IDX and not 0 <= self.arg <= 0xFFFF:
            raise LedgerError("BadFormat", f"store index out of range: {self.arg}")

    def __str__(self) -> str:
        if self.op in _HAS_IMM or self.op in _HAS_IDX:
            return f"{self.op} {self.arg}"
        return self.op


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instr, ...]
    vm_version: int = 1

    def __post_init__(self) -> None:
        if self.vm_version != 1:
            raise LedgerError("BadFormat", f"vm_version must be 1, got {self.vm_version}")
        if len(self.instructions) > MAX_PROGRAM_LEN:
            raise LedgerError("BadFormat", "program too long")

    def uses_env(self) -> bool:
        return any(i.op in ENV_OPS for i in self.instructions)

    def encode(self) -> bytes:
        w = Writer().u8(self.vm_version).u32(len(self.instructions))
        for ins in self.instructions:
            w.u8(_OPCODE[ins.op])
            if ins.op in _HAS_IMM:
                w.i64(ins.arg)
            elif ins.op in _HAS_IDX:
                w.u16(ins.arg)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "Program":
        version = r.u8()
        count = r.u32()
        instrs = []
        for _ in range(count):
            code = r.u8()
            if code >= len(OPS):
                raise CodecError(f"bad opcode {code}")
            op = OPS[code]
            if op in _HAS_IMM:
                instrs.append(Instr(op, r.i64()))
            elif op in _HAS_IDX:
                instrs.append(Instr(op, r.u16()))
            else:
                instrs.append(Instr(op))
        return Program(tuple(instrs), version)

    @staticmethod
    def decode(data: bytes) -> "Program":
        r = Reader(data)
        p = Program.read(r)
        r.expect_end()
        return p

    def code_hash(self) -> bytes:
        return hash256(self.encode())


def assemble(text: str) -> Program:
    """One instruction per line; ';' starts a comment."""
    instrs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op = parts[0].upper()
        if op not in _OPCODE:
            raise LedgerError("BadFormat", f"asm line {line_no}: unknown op {parts[0]!r}")
        wants_arg = op in _HAS_IMM or op in _HAS_IDX
        if wants_arg != (len(parts) == 2) or len(parts) > 2:
            raise LedgerError("BadFormat", f"asm line {line_no}: bad operands")
        instrs.append(Instr(op, int(parts[1], 10)) if wants_arg else Instr(op))
    return Program(tuple(instrs))


def disassemble(program: Program) -> str:
    return "\n".join(str(i) for i in program.instructions) + "\n"


class VmEnv:
    """Read-only chain views handed to on-chain contract runs."""

    def __init__(self, balance_of=None, sig_ok=None):
        self._balance_of = balance_of
        self._sig_ok = sig_ok

    def balance(self, handle: int) -> int:
        if self._balance_of is None:
            raise VmFailure(FAILED, "no balance view in this context")
        return self._balance_of(handle)

    def sig_ok(self, a: int, b: int) -> bool:
        if self._sig_ok is None:
            raise VmFailure(FAILED, "no signature view in this context")
        return self._sig_ok(a, b)


@dataclass(frozen=True)
class VmResult:
    status: str
    stack_top: int | None
    gas_used: int
    space_peak: int
    balance_effects: tuple = ()
    stack: tuple[int, ...] = field(default=(), repr=False)


class _Trap(Exception):
    pass


def execute(
    program: Program,
    call_data: list[int],
    env: VmEnv | None,
    gas_limit: int,
    space_limit: int,
) -> VmResult:
    env = env or VmEnv()
    stack: list[int] = []
    store: dict[int, int] = {}
    gas_used = 0
    space_peak = 0

    def check_range(v: int) -> int:
        if not I64_MIN <= v <= I64_MAX:
            raise _Trap("value out of 64-bit range")
        return v

    def push(v: int) -> None:
        stack.append(check_range(v))

    def pop() -> int:
        if not stack:
            raise _Trap("stack underflow")
        return stack.pop()

    def result(status: str) -> VmResult:
        # no instruction disburses funds in v1, so effects stay empty;
        # the field is part of the result contract regardless
        return VmResult(
            status=status,
            stack_top=stack[-1] if stack else None,
            gas_used=gas_used,
            space_peak=space_peak,
            balance_effects=(),
            stack=tuple(stack),
        )

    try:
        for v in call_data:
            push(v)
    except _Trap:
        return result(FAILED)
    space_peak = len(stack)
    if space_peak > space_limit:
        return result(OUT_OF_SPACE)

    for ins in program.instructions:
        if gas_used >= gas_limit:
            return result(OUT_OF_GAS)
        gas_used += 1
        op = ins.op
        try:
            if op == "PUSH":
                push(ins.arg)
            elif op == "POP":
                pop()
            elif op == "DUP":
                v = pop()
                push(v)
                push(v)
            elif op == "SWAP":
                y, x = pop(), pop()
                push(y)
                push(x)
            elif op == "ADD":
                y, x = pop(), pop()
                push(x + y)
            elif op == "SUB":
                y, x = pop(), pop()
                push(x - y)
            elif op == "MUL":
                y, x = pop(), pop()
                push(x * y)
            elif op == "DIV":
                y, x = pop(), pop()
                if y == 0:
                    raise _Trap("division by zero")
                push(x // y)
            elif op == "LT":
                y, x = pop(), pop()
                push(1 if x < y else 0)
            elif op == "EQ":
                y, x = pop(), pop()
                push(1 if x == y else 0)
            elif op == "NOT":
                push(1 if pop() == 0 else 0)
            elif op == "SELECT":
                cond, t, f = pop(), pop(), pop()
                push(t if cond != 0 else f)
            elif op == "HASH":
                digest = hash256(pop().to_bytes(8, "big", signed=True))
                push(int.from_bytes(digest[:8], "big", signed=True))
            elif op == "SIGOK":
                b, a = pop(), pop()
                push(1 if env.sig_ok(a, b) else 0)
            elif op == "BALANCE":
                push(env.balance(pop()))
            elif op == "STORE":
                store[ins.arg] = pop()
            elif op == "LOAD":
                push(store.get(ins.arg, 0))
            elif op == "STOP":
                return result(HALTED)
            elif op == "FAIL":
                return result(FAILED)
        except (_Trap, VmFailure):
            return result(FAILED)
        space_peak = max(space_peak, len(stack) + len(store))
        if len(stack) + len(store) > space_limit:
            return result(OUT_OF_SPACE)
    return result(HALTED)  # fell off the end of the code


def eval_pure(
    program: Program,
    state_in: list[int],
    gas_limit: int = 100_000,
    space_limit: int = 4_096,
) -> list[int]:
    """Channel-contract evaluation: state in on the stack, final stack out.

    Raises VmFailure unless the run halts cleanly; contracts that peek at
    chain state (BALANCE/SIGOK) are rejected up front.
    """
    if program.uses_env():
        raise VmFailure(FAILED, "pure contracts cannot use BALANCE/SIGOK")
    out = execute(program, state_in, None, gas_limit, space_limit)
    if out.status != HALTED:
        raise VmFailure(out.status)
    return list(out.stack)
