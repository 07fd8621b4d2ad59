"""Binary Merkle trees over canonical-encoded leaves.

Conventions (fixed network-wide):
  - leaf nodes are H(leaf bytes);
  - a level with an odd node count duplicates its last node;
  - parent = H(left || right);
  - a single-leaf tree hashes its lone node once more, so the root of [L]
    is H(H(L)) and a leaf value can never collide with its own root.

Proofs are (leaf_index, bottom-up sibling list); length is
ceil(log2(leaf_count)) for leaf_count >= 2 and zero for a single leaf.
"""
from __future__ import annotations

from dataclasses import dataclass

from .codec import Reader, Writer
from .crypto import HASH_SIZE, ZERO32, hash256
from .errors import LedgerError


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[bytes, ...]

    def encode(self) -> bytes:
        w = Writer().u32(self.leaf_index).u32(len(self.siblings))
        for s in self.siblings:
            w.fixed(s, HASH_SIZE)
        return w.done()

    @staticmethod
    def read(r: Reader) -> "MerkleProof":
        idx = r.u32()
        n = r.u32()
        return MerkleProof(idx, tuple(r.fixed(HASH_SIZE) for _ in range(n)))


def proof_len(leaf_count: int) -> int:
    if leaf_count <= 1:
        return 0
    return (leaf_count - 1).bit_length()


def _level_up(nodes: list[bytes]) -> list[bytes]:
    if len(nodes) % 2 == 1:
        nodes = nodes + [nodes[-1]]
    return [hash256(nodes[i] + nodes[i + 1]) for i in range(0, len(nodes), 2)]


def merkle_root(leaves: list[bytes]) -> bytes:
    if not leaves:
        raise LedgerError("EmptyLeaves", "merkle_root over zero leaves")
    nodes = [hash256(leaf) for leaf in leaves]
    if len(nodes) == 1:
        return hash256(nodes[0])
    while len(nodes) > 1:
        nodes = _level_up(nodes)
    return nodes[0]


def merkle_prove(leaves: list[bytes], index: int) -> MerkleProof:
    if not leaves:
        raise LedgerError("EmptyLeaves", "merkle_prove over zero leaves")
    if not 0 <= index < len(leaves):
        raise LedgerError("BadIndex", f"leaf index {index} of {len(leaves)}")
    siblings: list[bytes] = []
    nodes = [hash256(leaf) for leaf in leaves]
    i = index
    while len(nodes) > 1:
        if len(nodes) % 2 == 1:
            nodes = nodes + [nodes[-1]]
        siblings.append(nodes[i ^ 1])
        nodes = [hash256(nodes[j] + nodes[j + 1]) for j in range(0, len(nodes), 2)]
        i //= 2
    return MerkleProof(index, tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof, leaf_count: int) -> bool:
    if leaf_count < 1 or not 0 <= proof.leaf_index < leaf_count:
        return False
    if len(proof.siblings) != proof_len(leaf_count):
        return False
    acc = hash256(leaf)
    if leaf_count == 1:
        return hash256(acc) == root
    i = proof.leaf_index
    for sibling in proof.siblings:
        if i % 2 == 0:
            acc = hash256(acc + sibling)
        else:
            acc = hash256(sibling + acc)
        i //= 2
    return acc == root


def tree_root(items: list[bytes]) -> bytes:
    """Root of a possibly-empty state tree; the all-zero hash marks empty."""
    return merkle_root(items) if items else ZERO32
