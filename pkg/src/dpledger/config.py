"""Service configuration, loaded from a JSON file.

Relative paths in the file resolve against the file's own directory, so a
config can travel with its dataset and state directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .ledger import FeeSchedule, new_account_id
from .queries import Schema


@dataclass(frozen=True)
class ServiceConfig:
    dataset_path: Path
    schema: Schema
    epsilon_budget: float
    delta_budget: float
    data_dir: Path
    fees: FeeSchedule = field(default_factory=FeeSchedule)
    initial_accounts: dict[str, float] = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = 8080
    seed: int | None = None
    static_dir: Path | None = None

    @property
    def ledger_path(self) -> Path:
        return self.data_dir / "ledger.jsonl"

    @property
    def accounts_path(self) -> Path:
        return self.data_dir / "accounts.json"

    @property
    def budget_path(self) -> Path:
        return self.data_dir / "budget.json"

    @property
    def journal_path(self) -> Path:
        return self.data_dir / "journal.json"


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def config_from_dict(raw: dict[str, Any], base_dir: Path) -> ServiceConfig:
    dataset = raw["dataset"]
    budget = raw["budget"]
    fees_raw = raw.get("fees", {})
    accounts: dict[str, float] = {}
    for entry in raw.get("accounts", []):
        account_id = entry.get("account_id") or new_account_id()
        if account_id in accounts:
            raise ValueError(f"duplicate account id {account_id!r} in config")
        accounts[account_id] = float(entry.get("balance", 0.0))
    listen = raw.get("listen", {})
    static_dir = raw.get("static_dir")
    return ServiceConfig(
        dataset_path=_resolve(base_dir, dataset["path"]),
        schema=Schema.from_dict(dataset["columns"]),
        epsilon_budget=float(budget["epsilon"]),
        delta_budget=float(budget["delta"]),
        data_dir=_resolve(base_dir, raw["data_dir"]),
        fees=FeeSchedule(
            base_fee=float(fees_raw.get("base_fee", 0.001)),
            per_byte_fee=float(fees_raw.get("per_byte_fee", 1e-6)),
        ),
        initial_accounts=accounts,
        host=str(listen.get("host", "127.0.0.1")),
        port=int(listen.get("port", 8080)),
        seed=None if raw.get("seed") is None else int(raw["seed"]),
        static_dir=None if static_dir is None else _resolve(base_dir, static_dir),
    )


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return config_from_dict(raw, path.resolve().parent)
