"""Cuckoo-Cycle proof of work, emission schedule, and stake weights.

The PoW relation: derive 2**edge_bits pseudo-random edges of a bipartite
graph from (header_hash, nonce), and exhibit a cycle of exactly cycle_len
edges whose sorted-edge digest clears the difficulty target. Verification
re-derives only the claimed edges, so it runs in O(cycle_len).

The solver walks edges in index order keeping a spanning forest with
labelled parent links (union by rerooting). An edge landing inside an
existing tree closes exactly one forest cycle; if its length matches and
its digest clears the target, that cycle is the solution. Edges closing
wrong-length cycles are discarded, which keeps the forest invariant. This
finds a per-nonce subset of all cycles, which is fine: the budget is
calibrated empirically (scripts/calibrate_pow.py) and verification, not the
search strategy, is the normative part.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .codec import Writer
from .errors import LedgerError


@dataclass(frozen=True)
class PowParams:
    edge_bits: int = 12
    cycle_len: int = 42
    target: bytes = b"\xff" * 32

    def __post_init__(self) -> None:
        if not 4 <= self.edge_bits <= 31:
            raise LedgerError("BadPowParams", f"edge_bits {self.edge_bits}")
        if self.cycle_len < 4 or self.cycle_len % 2 != 0:
            raise LedgerError("BadPowParams", f"cycle_len {self.cycle_len}")
        if len(self.target) != 32:
            raise LedgerError("BadPowParams", "target must be 32 bytes")

    @staticmethod
    def from_config(cfg) -> "PowParams":
        return PowParams(cfg.pow_edge_bits, cfg.pow_cycle_len, cfg.pow_target)


@dataclass(frozen=True)
class CuckooSolution:
    nonce: int
    edges: tuple[int, ...]


def derive_edge(header_hash: bytes, nonce: int, edge_index: int, edge_bits: int) -> tuple[int, int]:
    """Endpoints (u, v) of one edge; u lies in partition U, v in V."""
    mask = (1 << (edge_bits - 1)) - 1
    key = header_hash + nonce.to_bytes(8, "big")
    u = _node(key, edge_index, 0) & mask
    v = _node(key, edge_index, 1) & mask
    return u, v


def _node(key: bytes, edge_index: int, side: int) -> int:
    h = hashlib.blake2b(
        edge_index.to_bytes(8, "big") + bytes([side]), digest_size=8, key=key
    ).digest()
    return int.from_bytes(h, "big")


def solution_digest(header_hash: bytes, edges: tuple[int, ...]) -> bytes:
    w = Writer().fixed(header_hash, 32).u32(len(edges))
    for e in edges:
        w.u64(e)
    return hashlib.sha256(w.done()).digest()


def meets_target(digest: bytes, target: bytes) -> bool:
    return digest <= target


def verify(header_hash: bytes, solution: CuckooSolution, params: PowParams) -> bool:
    edges = solution.edges
    if len(edges) != params.cycle_len:
        return False
    limit = 1 << params.edge_bits
    if any(not 0 <= e < limit for e in edges):
        return False
    if any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        return False
    # Each node must touch exactly two of the claimed edges and the edges
    # must chain into one closed walk.
    endpoints = [derive_edge(header_hash, solution.nonce, e, params.edge_bits) for e in edges]
    incidence: dict[tuple[int, int], list[int]] = {}
    for i, (u, v) in enumerate(endpoints):
        incidence.setdefault((0, u), []).append(i)
        incidence.setdefault((1, v), []).append(i)
    if any(len(hits) != 2 for hits in incidence.values()):
        return False
    used = [False] * len(edges)
    i = 0
    node = (1, endpoints[0][1])  # leave edge 0 via its V endpoint
    used[0] = True
    for _ in range(len(edges) - 1):
        a, b = incidence[node]
        nxt = b if used[a] else a
        if used[nxt]:
            return False
        used[nxt] = True
        u, v = endpoints[nxt]
        node = (1, v) if node == (0, u) else (0, u)
    if node != (0, endpoints[0][0]):  # walk must re-enter edge 0
        return False
    return meets_target(solution_digest(header_hash, edges), params.target)


class _Forest:
    """Spanning forest with parent links labelled by edge index."""

    def __init__(self) -> None:
        self.parent: dict[tuple[int, int], tuple[int, int]] = {}
        self.via: dict[tuple[int, int], int] = {}

    def path_to_root(self, node: tuple[int, int]) -> list[tuple[int, int]]:
        path = [node]
        while path[-1] in self.parent:
            path.append(self.parent[path[-1]])
        return path

    def reroot(self, node: tuple[int, int]) -> None:
        path = self.path_to_root(node)
        for child, par in zip(path, path[1:]):
            edge = self.via[child]
            del self.parent[child]
            del self.via[child]
            self.parent[par] = child
            self.via[par] = edge

    def link(self, a: tuple[int, int], b: tuple[int, int], edge: int) -> None:
        self.reroot(a)
        self.parent[a] = b
        self.via[a] = edge


def _cycle_edges(forest: _Forest, a, b, closing_edge: int) -> tuple[int, ...] | None:
    pa = forest.path_to_root(a)
    pb = forest.path_to_root(b)
    if pa[-1] != pb[-1]:
        return None
    sa = {node: i for i, node in enumerate(pa)}
    meet = next(i for i, node in enumerate(pb) if node in sa)
    edges = [closing_edge]
    edges += [forest.via[node] for node in pa[: sa[pb[meet]]]]
    edges += [forest.via[node] for node in pb[:meet]]
    return tuple(sorted(edges))


def solve(
    header_hash: bytes, params: PowParams, nonce_budget: int, stop=None
) -> CuckooSolution | None:
    """Search ascending nonces; returns the first qualifying solution.

    ``stop`` is an optional zero-argument callable polled between nonces so
    a caller can abandon the search; the function itself is side-effect
    free.
    """
    n_edges = 1 << params.edge_bits
    for nonce in range(nonce_budget):
        if stop is not None and stop():
            return None
        forest = _Forest()
        for idx in range(n_edges):
            eu, ev = derive_edge(header_hash, nonce, idx, params.edge_bits)
            a, b = (0, eu), (1, ev)
            if forest.path_to_root(a)[-1] != forest.path_to_root(b)[-1]:
                forest.link(a, b, idx)
                continue
            cycle = _cycle_edges(forest, a, b, idx)
            if cycle is None or len(cycle) != params.cycle_len:
                continue  # wrong length; drop the edge, forest unchanged
            if len(set(cycle)) != params.cycle_len:
                continue
            digest = solution_digest(header_hash, cycle)
            if meets_target(digest, params.target):
                candidate = CuckooSolution(nonce, cycle)
                if verify(header_hash, candidate, params):
                    return candidate
    return None


def coinbase(height: int, cfg) -> int:
    """Block subsidy: cfg.coinbase_initial halving every cfg.coinbase_halving_blocks."""
    if height < 1:
        raise LedgerError("BadHeight", "no coinbase below height 1")
    halvings = (height - 1) // cfg.coinbase_halving_blocks
    return cfg.coinbase_initial >> halvings


def emission_through(height: int, cfg) -> int:
    """Closed-form sum of coinbase(1..height)."""
    total = 0
    period = cfg.coinbase_halving_blocks
    k = 0
    remaining = height
    while remaining > 0:
        reward = cfg.coinbase_initial >> k
        if reward == 0:
            break
        span = min(period, remaining)
        total += span * reward
        remaining -= span
        k += 1
    return total


def stake_weight(state, address: bytes) -> int:
    """On-chain balance in base units; locked deposits do not count."""
    account = state.accounts.get(address)
    return account.balance if account is not None else 0
