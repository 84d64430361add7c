import json
from pathlib import Path

import pytest

from dpledger.config import ServiceConfig, config_from_dict
from dpledger.queries import ColumnSpec, Predicate, QueryDescriptor, QueryKind, Schema

ACCOUNT_A = "0x" + "ab" * 20
ACCOUNT_B = "0x" + "cd" * 20

PEOPLE_CSV = """age,salary
25,52000
31,61000
40,88000
30,45000
28,39000
"""


@pytest.fixture
def schema() -> Schema:
    return Schema(
        (
            ColumnSpec("age", 0.0, 120.0),
            ColumnSpec("salary", 0.0, 200000.0),
        )
    )


@pytest.fixture
def count_all() -> QueryDescriptor:
    return QueryDescriptor(kind=QueryKind.COUNT)


@pytest.fixture
def count_over_30() -> QueryDescriptor:
    return QueryDescriptor(
        kind=QueryKind.COUNT, predicate=Predicate("age", ">", 30.0)
    )


def write_dataset(path: Path, text: str = PEOPLE_CSV) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def make_config(
    tmp_path: Path,
    *,
    epsilon_budget: float = 100.0,
    delta_budget: float = 0.01,
    balances: dict[str, float] | None = None,
    seed: int | None = 12345,
    csv_text: str = PEOPLE_CSV,
    data_dir: str = "state",
) -> ServiceConfig:
    dataset = write_dataset(tmp_path / "people.csv", csv_text)
    raw = {
        "dataset": {
            "path": str(dataset),
            "columns": [
                {"name": "age", "lo": 0, "hi": 120},
                {"name": "salary", "lo": 0, "hi": 200000},
            ],
        },
        "budget": {"epsilon": epsilon_budget, "delta": delta_budget},
        "fees": {"base_fee": 0.001, "per_byte_fee": 1e-6},
        "accounts": [
            {"account_id": a, "balance": b}
            for a, b in (balances or {ACCOUNT_A: 10.0, ACCOUNT_B: 0.001}).items()
        ],
        "data_dir": str(tmp_path / data_dir),
        "seed": seed,
    }
    return config_from_dict(raw, tmp_path)


def write_config_file(tmp_path: Path, **kwargs) -> Path:
    """Write a config JSON that load_config can consume (for CLI tests)."""
    config = make_config(tmp_path, **kwargs)
    raw = {
        "dataset": {
            "path": str(config.dataset_path),
            "columns": config.schema.to_dict(),
        },
        "budget": {"epsilon": config.epsilon_budget, "delta": config.delta_budget},
        "fees": {
            "base_fee": config.fees.base_fee,
            "per_byte_fee": config.fees.per_byte_fee,
        },
        "accounts": [
            {"account_id": a, "balance": b}
            for a, b in config.initial_accounts.items()
        ],
        "data_dir": str(config.data_dir),
        "seed": config.seed,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw, indent=2), encoding="utf-8")
    return path
