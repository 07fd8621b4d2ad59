"""Tabular temporal-difference control and its value-iteration oracle.

The two update rules are the classic ones: SARSA bootstraps on the action
actually taken next, Q-learning on the greedy maximum. Training is seeded
and single-threaded, so a (seed, hyperparameters) pair pins the entire
QTable bit for bit.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..errors import LedgerError
from .mdp import Action, DeviceGroupMdp, State

ON_POLICY = "on_policy"
OFF_POLICY = "off_policy"


@dataclass
class QTable:
    values: dict[tuple[State, Action], float] = field(default_factory=dict)
    alpha: float | None = 0.1   # None: per-visit schedule 1/(1+visits)
    gamma_d: float = 0.9
    epsilon: float = 0.1

    def get(self, s: State, a: Action) -> float:
        return self.values.get((s, a), 0.0)

    def set(self, s: State, a: Action, v: float) -> None:
        self.values[(s, a)] = v


def best_action(q: QTable, s: State, actions: list[Action]) -> Action:
    # deterministic argmax: ties go to the lowest action tuple
    best = actions[0]
    best_v = q.get(s, best)
    for a in actions[1:]:
        v = q.get(s, a)
        if v > best_v:
            best, best_v = a, v
    return best


def max_q(q: QTable, s: State, actions: list[Action]) -> float:
    return max(q.get(s, a) for a in actions)


def sarsa_update(q: QTable, s: State, a: Action, r: float, s2: State, a2: Action, alpha: float | None = None) -> QTable:
    step = q.alpha if alpha is None else alpha
    delta = r + q.gamma_d * q.get(s2, a2) - q.get(s, a)
    q.set(s, a, q.get(s, a) + step * delta)
    return q


def q_update(q: QTable, s: State, a: Action, r: float, s2: State, actions: list[Action], alpha: float | None = None) -> QTable:
    step = q.alpha if alpha is None else alpha
    delta = r + q.gamma_d * max_q(q, s2, actions) - q.get(s, a)
    q.set(s, a, q.get(s, a) + step * delta)
    return q


def train(
    mdp: DeviceGroupMdp,
    q: QTable,
    episodes: int,
    seed: int,
    mode: str = OFF_POLICY,
    steps_per_episode: int = 100,
    epsilon_schedule=None,
) -> QTable:
    """Seeded epsilon-greedy rollouts applying the chosen update rule.

    With q.alpha set to None the step size decays per state-action visit
    as 1/(1+visits). epsilon_schedule maps the episode index to an
    exploration rate, defaulting to the constant q.epsilon.
    """
    if mdp.joint_size() > 1_000:
        raise LedgerError("BadFormat", "device group too large for tabular training")
    if mode not in (ON_POLICY, OFF_POLICY):
        raise LedgerError("BadFormat", f"unknown mode {mode}")
    rng = random.Random(seed)
    actions = list(mdp.actions())
    visits: dict[tuple[State, Action], int] = {}

    def step_size(s: State, a: Action) -> float:
        if q.alpha is not None:
            return q.alpha
        n = visits.get((s, a), 0)
        visits[(s, a)] = n + 1
        return 1.0 / (1.0 + n)

    def pick(s: State, eps: float) -> Action:
        if rng.random() < eps:
            return actions[rng.randrange(len(actions))]
        return best_action(q, s, actions)

    for episode in range(episodes):
        eps = q.epsilon if epsilon_schedule is None else epsilon_schedule(episode)
        s = mdp.initial_state()
        a = pick(s, eps)
        for _ in range(steps_per_episode):
            s2, r = mdp.step(rng, s, a)
            if mode == ON_POLICY:
                a2 = pick(s2, eps)
                sarsa_update(q, s, a, r, s2, a2, alpha=step_size(s, a))
                s, a = s2, a2
            else:
                q_update(q, s, a, r, s2, actions, alpha=step_size(s, a))
                s = s2
                a = pick(s, eps)
    return q


def value_iteration(mdp: DeviceGroupMdp, gamma_d: float, tol: float = 1e-12, max_iter: int = 1_000_000) -> dict[tuple[State, Action], float]:
    """Bellman-optimality fixed point over the enumerated joint MDP."""
    if mdp.joint_size() > 1_000:
        raise LedgerError("BadFormat", "device group too large to enumerate")
    states = list(mdp.states())
    actions = list(mdp.actions())
    expected = {
        (s, a): mdp.expected_reward(s, a) for s in states for a in actions
    }
    probs = {
        (s, a): [(s2, mdp.transition_prob(s, a, s2)) for s2 in states if mdp.transition_prob(s, a, s2) > 0.0]
        for s in states
        for a in actions
    }
    q = {(s, a): 0.0 for s in states for a in actions}
    for _ in range(max_iter):
        delta = 0.0
        new_q = {}
        value = {s: max(q[(s, a)] for a in actions) for s in states}
        for s in states:
            for a in actions:
                v = expected[(s, a)] + gamma_d * sum(p * value[s2] for s2, p in probs[(s, a)])
                new_q[(s, a)] = v
                delta = max(delta, abs(v - q[(s, a)]))
        q = new_q
        if delta < tol:
            return q
    raise LedgerError("NoConvergence", f"value iteration after {max_iter} sweeps")


def greedy_policy(q, mdp: DeviceGroupMdp) -> dict[State, Action]:
    actions = list(mdp.actions())
    if isinstance(q, QTable):
        return {s: best_action(q, s, actions) for s in mdp.states()}
    out = {}
    for s in mdp.states():
        best = actions[0]
        for a in actions[1:]:
            if q[(s, a)] > q[(s, best)]:
                best = a
        out[s] = best
    return out
