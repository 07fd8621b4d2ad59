"""Factored device-group MDP.

A group of N identical devices, each with M wear states, evolves under
per-device maintenance actions. Service capacity depends on the device
state and on the action (a device under repair serves nothing); the step
reward is the number of requests served: min(arrivals, total capacity).
Arrivals are either a constant rate or a seeded Poisson stream, so every
rollout is reproducible and the expected reward is available in closed
form for the value-iteration oracle.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

from ..errors import LedgerError

CONSTANT = "constant"
POISSON = "poisson"

State = tuple[int, ...]
Action = tuple[int, ...]


@dataclass(frozen=True)
class ReturnParams:
    beta: float
    dt: float
    horizon: int

    def __post_init__(self) -> None:
        if self.beta <= 0 or self.dt <= 0 or self.horizon < 1:
            raise LedgerError("BadFormat", "beta, dt must be positive; horizon >= 1")


def discounted_return(rewards, params: ReturnParams) -> float:
    """Left-Riemann discretization of the exponentially discounted return."""
    total = 0.0
    for k in range(params.horizon):
        total += math.exp(-params.beta * k * params.dt) * rewards[k] * params.dt
    return total


@dataclass(frozen=True)
class DeviceGroupMdp:
    n_devices: int
    n_states: int
    action_names: tuple[str, ...]
    # transitions[a][s][s'] shared by all devices; rows sum to 1 within 1e-12
    transitions: tuple[tuple[tuple[float, ...], ...], ...]
    # capacity[a][s]: requests one device can serve in state s under action a
    capacity: tuple[tuple[int, ...], ...]
    arrival_kind: str = CONSTANT
    arrival_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.n_devices < 1 or self.n_states < 1 or not self.action_names:
            raise LedgerError("BadFormat", "degenerate device group")
        if self.arrival_kind not in (CONSTANT, POISSON):
            raise LedgerError("BadFormat", f"unknown arrival kind {self.arrival_kind}")
        if len(self.transitions) != len(self.action_names) or len(self.capacity) != len(self.action_names):
            raise LedgerError("BadFormat", "one transition matrix and capacity row per action")
        for matrix in self.transitions:
            if len(matrix) != self.n_states:
                raise LedgerError("BadFormat", "transition matrix shape")
            for row in matrix:
                if len(row) != self.n_states or any(p < 0 for p in row):
                    raise LedgerError("BadFormat", "transition row shape")
                if abs(sum(row) - 1.0) > 1e-12:
                    raise LedgerError("BadFormat", f"row sums to {sum(row)!r}")

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def joint_size(self) -> int:
        return self.n_states ** self.n_devices

    def states(self):
        return itertools.product(range(self.n_states), repeat=self.n_devices)

    def actions(self):
        return itertools.product(range(self.n_actions), repeat=self.n_devices)

    def initial_state(self) -> State:
        return (0,) * self.n_devices

    def total_capacity(self, state: State, action: Action) -> int:
        return sum(self.capacity[a][s] for s, a in zip(state, action))

    def sample_arrivals(self, rng: random.Random) -> int:
        if self.arrival_kind == CONSTANT:
            return int(self.arrival_rate)
        # Knuth's method; rates stay small at desk scale
        limit = math.exp(-self.arrival_rate)
        k, p = 0, 1.0
        while True:
            p *= rng.random()
            if p <= limit:
                return k
            k += 1

    def reward(self, state: State, action: Action, arrivals: int) -> int:
        return min(arrivals, self.total_capacity(state, action))

    def expected_reward(self, state: State, action: Action) -> float:
        cap = self.total_capacity(state, action)
        if self.arrival_kind == CONSTANT:
            return float(min(int(self.arrival_rate), cap))
        # E[min(X, cap)] for X ~ Poisson(rate)
        rate = self.arrival_rate
        acc = 0.0
        tail = 1.0
        p = math.exp(-rate)
        for k in range(cap):
            acc += k * p
            tail -= p
            p *= rate / (k + 1)
        return acc + cap * tail

    def step(self, rng: random.Random, state: State, action: Action) -> tuple[State, int]:
        arrivals = self.sample_arrivals(rng)
        r = self.reward(state, action, arrivals)
        nxt = []
        for s, a in zip(state, action):
            row = self.transitions[a][s]
            u = rng.random()
            acc = 0.0
            pick = self.n_states - 1
            for j, p in enumerate(row):
                acc += p
                if u < acc:
                    pick = j
                    break
            nxt.append(pick)
        return tuple(nxt), r

    def transition_prob(self, state: State, action: Action, nxt: State) -> float:
        p = 1.0
        for s, a, t in zip(state, action, nxt):
            p *= self.transitions[a][s][t]
        return p


def three_state_fixture(arrival_rate: float = 1.0) -> DeviceGroupMdp:
    """One device, three wear states (fresh/worn/broken), run vs repair.

    Running serves while the device lasts; repairing serves nothing for a
    step but restores the device. The optimal policy repairs worn and
    broken devices and runs fresh ones (checked against exhaustive policy
    enumeration in the tests).
    """
    run = ((0.7, 0.3, 0.0), (0.0, 0.6, 0.4), (0.0, 0.0, 1.0))
    repair = ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    return DeviceGroupMdp(
        n_devices=1,
        n_states=3,
        action_names=("run", "repair"),
        transitions=(run, repair),
        capacity=((1, 1, 0), (0, 0, 0)),
        arrival_kind=CONSTANT,
        arrival_rate=arrival_rate,
    )
