"""Exact sum-product belief propagation on tree factor graphs.

Two passes (leaves to a root, then back) over a tree of discrete variables
with strictly positive unary and pairwise potentials yield exact marginals.
The node set and message order are deterministic, and results match joint
enumeration to floating-point accuracy; the brute-force on small trees
lives in the test suite as the independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LedgerError


@dataclass(frozen=True)
class TreeFactorGraph:
    domains: dict[str, int]
    unaries: dict[str, np.ndarray]
    # edges as (u, v, potential) with potential shaped (|u|, |v|)
    edges: tuple[tuple[str, str, np.ndarray], ...]

    def __post_init__(self) -> None:
        if not self.domains:
            raise LedgerError("BadFormat", "graph needs at least one variable")
        for var, size in self.domains.items():
            unary = self.unaries.get(var)
            if unary is None or unary.shape != (size,):
                raise LedgerError("BadFormat", f"unary for {var!r} must have shape ({size},)")
            if not np.all(unary > 0):
                raise LedgerError("BadFormat", f"unary for {var!r} must be strictly positive")
        seen = set()
        for u, v, pot in self.edges:
            if u not in self.domains or v not in self.domains:
                raise LedgerError("BadFormat", f"edge ({u}, {v}) references unknown variable")
            key = (min(u, v), max(u, v))
            if u == v or key in seen:
                raise LedgerError("NotATree", f"duplicate or self edge ({u}, {v})")
            seen.add(key)
            if pot.shape != (self.domains[u], self.domains[v]):
                raise LedgerError("BadFormat", f"potential shape for edge ({u}, {v})")
            if not np.all(pot > 0):
                raise LedgerError("BadFormat", "potentials must be strictly positive")

    def neighbors(self) -> dict[str, list[tuple[str, np.ndarray]]]:
        adj: dict[str, list[tuple[str, np.ndarray]]] = {v: [] for v in self.domains}
        for u, v, pot in self.edges:
            adj[u].append((v, pot))
            adj[v].append((u, pot.T))
        return adj

    def check_tree(self) -> None:
        n = len(self.domains)
        if len(self.edges) != n - 1:
            raise LedgerError("NotATree", f"{len(self.edges)} edges for {n} variables")
        adj = self.neighbors()
        root = min(self.domains)
        seen = {root}
        frontier = [root]
        while frontier:
            node = frontier.pop()
            for other, _ in adj[node]:
                if other not in seen:
                    seen.add(other)
                    frontier.append(other)
        if len(seen) != n:
            raise LedgerError("NotATree", "graph is disconnected")


def bp_marginals(graph: TreeFactorGraph) -> dict[str, np.ndarray]:
    """Per-variable marginals, each normalized to sum to one."""
    graph.check_tree()
    adj = graph.neighbors()
    root = min(graph.domains)

    # upward order: children before parents
    parent: dict[str, str | None] = {root: None}
    order: list[str] = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        for child, _ in sorted(adj[node], key=lambda e: e[0]):
            if child not in parent:
                parent[child] = node
                stack.append(child)

    # messages[(src, dst)] over dst's domain
    messages: dict[tuple[str, str], np.ndarray] = {}

    def product_at(node: str, skip: str | None) -> np.ndarray:
        belief = graph.unaries[node].astype(float).copy()
        for other, _ in adj[node]:
            if other != skip:
                belief *= messages[(other, node)]
        return belief

    for node in reversed(order):  # leaves first
        par = parent[node]
        if par is None:
            continue
        pot = next(p for other, p in adj[node] if other == par)
        messages[(node, par)] = product_at(node, skip=par) @ pot

    for node in order:  # root first
        for child, _ in adj[node]:
            if parent.get(child) != node:
                continue
            pot = next(p for other, p in adj[node] if other == child)
            messages[(node, child)] = product_at(node, skip=child) @ pot

    marginals = {}
    for var in graph.domains:
        belief = product_at(var, skip=None)
        marginals[var] = belief / belief.sum()
    return marginals
