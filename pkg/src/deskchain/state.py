"""Aggregate chain state and its tree commitments.

The state is an in-memory container of frozen records; cloning copies the
dicts but shares the records, which makes per-transaction snapshots cheap.
Seven Merkle roots commit the state: accounts, names, a combined wormhole
tree (channels, storage contracts, AZs, and the reward pool, i.e. all
contract-ish objects), two oracle trees split by liveness, plus the
per-block transaction and possession-proof trees.

Conservation is a hard invariant: genesis total + minted coinbase must
always equal circulating balances + locks + deposits + pool funds + burned.
Maintenance is charged lazily: any credit, debit, or touch of an existing
account first settles the per-block fee accrued since its freshness height.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .channels import CLOSED, Channel
from .codec import check_amount
from .config import NetworkConfig
from .errors import LedgerError
from .ledger import Account, NameRecord, charge_maintenance
from .merkle import tree_root
from .oracles import OracleQuestion
from .rewards import AZ, RewardPoolState
from .storage import StorageContract
from .vm import Program


@dataclass
class ChainState:
    cfg: NetworkConfig
    accounts: dict[bytes, Account]
    names: dict[str, NameRecord]
    channels: dict[bytes, Channel]
    oracles: dict[bytes, OracleQuestion]
    storage_contracts: dict[bytes, StorageContract]
    azs: dict[bytes, AZ]
    pool: RewardPoolState
    code: dict[bytes, Program]
    height: int = 0
    genesis_total: int = 0
    minted_total: int = 0
    burned_total: int = 0

    @staticmethod
    def genesis(cfg: NetworkConfig) -> "ChainState":
        accounts = {}
        for _, address, balance in cfg.genesis_accounts:
            if address in accounts:
                raise LedgerError("BadFormat", "duplicate genesis account")
            accounts[address] = Account(address, balance)
        return ChainState(
            cfg=cfg,
            accounts=accounts,
            names={},
            channels={},
            oracles={},
            storage_contracts={},
            azs={},
            pool=RewardPoolState(q=cfg.pool_q0, endowment=cfg.genesis_endowment),
            code={},
            genesis_total=cfg.genesis_total,
        )

    def clone(self) -> "ChainState":
        return ChainState(
            cfg=self.cfg,
            accounts=dict(self.accounts),
            names=dict(self.names),
            channels=dict(self.channels),
            oracles=dict(self.oracles),
            storage_contracts=dict(self.storage_contracts),
            azs=dict(self.azs),
            pool=self.pool,
            code=dict(self.code),
            height=self.height,
            genesis_total=self.genesis_total,
            minted_total=self.minted_total,
            burned_total=self.burned_total,
        )

    def restore(self, snapshot: "ChainState") -> None:
        other = snapshot.clone()
        for name in (
            "cfg", "accounts", "names", "channels", "oracles", "storage_contracts",
            "azs", "pool", "code", "height", "genesis_total", "minted_total",
            "burned_total",
        ):
            setattr(self, name, getattr(other, name))

    # --- account plumbing ---

    def _maintain(self, address: bytes, height: int) -> Account:
        account = self.accounts[address]
        updated, collected, _ = charge_maintenance(account, height, self.cfg.maintenance_rate)
        if collected:
            self.burned_total += collected
        self.accounts[address] = updated
        return updated

    def touch(self, address: bytes, height: int) -> Account:
        """Apply lazy maintenance before any use of an account."""
        if address not in self.accounts:
            raise LedgerError("NotFound", address.hex())
        return self._maintain(address, height)

    def credit(self, address: bytes, amount: int, height: int) -> Account:
        check_amount(amount, "credit")
        if address in self.accounts:
            account = self._maintain(address, height)
        else:
            account = Account(address, 0, freshness=height)
        account = replace(account, balance=account.balance + amount, freshness=height)
        self.accounts[address] = account
        return account

    def debit(self, address: bytes, amount: int, height: int) -> Account:
        check_amount(amount, "debit")
        account = self._maintain(address, height) if address in self.accounts else None
        if account is None or account.balance < amount:
            have = account.balance if account else 0
            raise LedgerError("InsufficientFunds", f"{have} < {amount}")
        account = replace(account, balance=account.balance - amount, freshness=height)
        self.accounts[address] = account
        return account

    def burn(self, amount: int) -> None:
        self.burned_total += check_amount(amount, "burn")

    def mint(self, address: bytes, amount: int, height: int) -> None:
        self.minted_total += check_amount(amount, "mint")
        self.credit(address, amount, height)

    def delete_account(self, address: bytes) -> None:
        account = self.accounts.get(address)
        if account is None:
            raise LedgerError("NotFound", address.hex())
        if account.balance != 0:
            raise LedgerError("NonZeroBalance", f"balance {account.balance}")
        del self.accounts[address]

    def resolve_name(self, name: str) -> bytes:
        record = self.names.get(name)
        if record is None:
            raise LedgerError("NotFound", name)
        return record.target

    # --- commitments ---

    def account_root(self) -> bytes:
        items = [self.accounts[k].encode() for k in sorted(self.accounts)]
        return tree_root(items)

    def name_root(self) -> bytes:
        items = [self.names[k].encode() for k in sorted(self.names)]
        return tree_root(items)

    def wormhole_root(self) -> bytes:
        items = [b"C" + self.channels[k].encode() for k in sorted(self.channels)]
        items += [b"S" + self.storage_contracts[k].encode() for k in sorted(self.storage_contracts)]
        items += [b"Z" + self.azs[k].encode() for k in sorted(self.azs)]
        items.append(b"P" + self.pool.encode())
        return tree_root(items)

    def oracle_open_root(self) -> bytes:
        live = [k for k in sorted(self.oracles) if self.oracles[k].phase in ("open", "answered", "contested")]
        return tree_root([self.oracles[k].encode() for k in live])

    def oracle_answer_root(self) -> bytes:
        done = [k for k in sorted(self.oracles) if self.oracles[k].phase in ("resolved", "burned")]
        return tree_root([self.oracles[k].encode() for k in done])

    # --- invariants ---

    def locked_in_channels(self) -> int:
        return sum(c.total for c in self.channels.values() if c.status != CLOSED)

    def oracle_deposits(self) -> int:
        return sum(q.escrowed() for q in self.oracles.values())

    def storage_escrow(self) -> int:
        return sum(s.escrow for s in self.storage_contracts.values())

    def circulating(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def conservation_sides(self) -> tuple[int, int]:
        sources = self.genesis_total + self.minted_total
        sinks = (
            self.circulating()
            + self.locked_in_channels()
            + self.oracle_deposits()
            + self.storage_escrow()
            + self.pool.pool_balance
            + self.pool.endowment
            + self.burned_total
        )
        return sources, sinks

    def check_invariants(self) -> None:
        sources, sinks = self.conservation_sides()
        if sources != sinks:
            raise LedgerError("Conservation", f"{sources} != {sinks}")
        for name, record in self.names.items():
            if record.name != name:
                raise LedgerError("BadFormat", f"name key mismatch for {name!r}")
        for address, account in self.accounts.items():
            if account.address != address:
                raise LedgerError("BadFormat", "account key mismatch")
            if account.freshness > self.height:
                raise LedgerError("BadHeight", "freshness beyond chain height")
