"""deskchain: a desk-scale proof-of-work ledger with wormhole state channels.

Subsystems: canonical codec, Merkle trees, Cuckoo-Cycle PoW, a dual-metered
stack VM, the transaction engine, off-chain channels with on-chain dispute
settlement, yes/no oracles, storage challenges, POV/POC reward economics,
a TD-learning device optimizer, and a deterministic network simulator.
"""

__version__ = "0.1.0"
