"""Network configuration and genesis description.

One flat key=value text format serves both: consensus constants and the
genesis allocation live in the same file so a single artifact pins a whole
network. Unknown keys are rejected loudly; silently-ignored config is how
desk experiments stop being reproducible.

Amounts accept either bare base units ("2500000") or a DSD suffix
("2.5dsd"); 1 DSD = 10**6 base units, and anything that does not land on an
integer number of base units is an error. Rationals ("1/10" or "0.1") are
parsed exactly via Fraction.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .codec import check_amount
from .errors import DeskchainError

BASE_UNITS_PER_DSD = 1_000_000


class ConfigError(DeskchainError):
    pass


def parse_amount(text: str) -> int:
    t = text.strip().lower()
    if t.endswith("dsd"):
        frac = Fraction(t[:-3]) * BASE_UNITS_PER_DSD
        if frac.denominator != 1:
            raise ConfigError(f"amount {text!r} is not a whole number of base units")
        return check_amount(int(frac), text)
    return check_amount(int(t, 10), text)


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad rational {text!r}: {exc}") from exc


@dataclass(frozen=True)
class NetworkConfig:
    # consensus-pow (desk-scale defaults; production Cuckoo runs 2^29, 42)
    pow_edge_bits: int = 10
    pow_cycle_len: int = 8
    pow_target: bytes = b"\xff" * 32
    pow_nonce_budget: int = 10_000
    coinbase_initial: int = 50 * BASE_UNITS_PER_DSD
    coinbase_halving_blocks: int = 100_000
    # ledger
    maintenance_rate: int = 0
    delete_reward: int = 1_000
    # channels
    countdown_blocks: int = 20
    # oracles
    oracle_deposit_rate: int = 1
    oracle_challenge_window: int = 10
    oracle_vote_window: int = 20
    # storage
    retrieval_unit: int = 65_536
    retrieval_rate: int = 100_000
    # rewards
    blocks_per_epoch: int = 30
    az_creation_price: int = 1 * BASE_UNITS_PER_DSD
    pool_alpha: Fraction = Fraction(1, 10)
    pool_mu: Fraction = Fraction(9, 10)
    pool_q0: int = 0
    # vm meters for in-channel pure evaluation
    pure_gas: int = 100_000
    pure_space: int = 4_096
    # simulator
    sim_latency_min: int = 1
    sim_latency_max: int = 3
    sim_drop_rate: Fraction = Fraction(0)
    sim_max_events: int = 100_000
    sim_auto_challenge: bool = True
    # genesis: (name, address, balance); names are simulator/CLI handles
    genesis_accounts: tuple[tuple[str, bytes, int], ...] = ()
    genesis_endowment: int = 0

    @property
    def genesis_total(self) -> int:
        return sum(b for _, _, b in self.genesis_accounts) + self.genesis_endowment


_INT_KEYS = {
    "pow.edge_bits": "pow_edge_bits",
    "pow.cycle_len": "pow_cycle_len",
    "pow.nonce_budget": "pow_nonce_budget",
    "coinbase.halving_blocks": "coinbase_halving_blocks",
    "channel.countdown_blocks": "countdown_blocks",
    "oracle.challenge_window": "oracle_challenge_window",
    "oracle.vote_window": "oracle_vote_window",
    "storage.retrieval_unit": "retrieval_unit",
    "epoch.blocks": "blocks_per_epoch",
    "vm.pure_gas": "pure_gas",
    "vm.pure_space": "pure_space",
    "sim.latency_min": "sim_latency_min",
    "sim.latency_max": "sim_latency_max",
    "sim.max_events": "sim_max_events",
}

_AMOUNT_KEYS = {
    "coinbase.initial": "coinbase_initial",
    "maintenance.rate": "maintenance_rate",
    "delete.reward": "delete_reward",
    "oracle.deposit_rate": "oracle_deposit_rate",
    "storage.retrieval_rate": "retrieval_rate",
    "az.creation_price": "az_creation_price",
    "pool.q0": "pool_q0",
    "genesis.endowment": "genesis_endowment",
}

_FRACTION_KEYS = {
    "pool.alpha": "pool_alpha",
    "pool.mu": "pool_mu",
    "sim.drop_rate": "sim_drop_rate",
}


def parse_config(text: str, base: NetworkConfig | None = None) -> NetworkConfig:
    from .crypto import KeyPair  # local import to keep config standalone

    cfg = base or NetworkConfig()
    updates: dict[str, object] = {}
    accounts: list[tuple[str, bytes, int]] = list(cfg.genesis_accounts)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _INT_KEYS:
            updates[_INT_KEYS[key]] = int(value, 10)
        elif key in _AMOUNT_KEYS:
            updates[_AMOUNT_KEYS[key]] = parse_amount(value)
        elif key in _FRACTION_KEYS:
            updates[_FRACTION_KEYS[key]] = parse_fraction(value)
        elif key == "pow.target_hex":
            target = bytes.fromhex(value)
            if len(target) != 32:
                raise ConfigError(f"line {line_no}: target must be 32 bytes of hex")
            updates["pow_target"] = target
        elif key == "sim.auto_challenge":
            updates["sim_auto_challenge"] = value.lower() in ("1", "true", "yes")
        elif key == "genesis.account":
            # "<name> <amount>"; the address derives from the name's keypair
            parts = value.split()
            if len(parts) != 2:
                raise ConfigError(f"line {line_no}: genesis.account wants 'name amount'")
            name, amount = parts
            accounts.append((name, KeyPair.from_name(name).address, parse_amount(amount)))
        else:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
    updates["genesis_accounts"] = tuple(accounts)
    return replace(cfg, **updates)


def load_config(path: str, base: NetworkConfig | None = None) -> NetworkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
