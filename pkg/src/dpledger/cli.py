"""Operator command line: serve the API, verify a ledger, run simulations.

The ``simulate`` subcommand drives the full in-process pipeline over a
workload file and emits one CSV row per query:

    index,reuse_kind,charged_epsilon,cum_actual_epsilon,cum_naive_epsilon

Workload files are CSV with header ``kind,column,comparator,constant,
epsilon,delta,repeats``; empty cells mean "absent". With a fixed seed the
output is byte-reproducible, so simulations double as regression fixtures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .config import ServiceConfig, load_config
from .ledger import LedgerCorruptError, read_records, verify_file
from .mechanism import PrivacyParams
from .queries import Predicate, QueryDescriptor, QueryKind, validate_descriptor
from .service import QueryService

SIMULATION_CSV_HEADER = "index,reuse_kind,charged_epsilon,cum_actual_epsilon,cum_naive_epsilon"


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    config = load_config(args.config)
    if args.host:
        config = dataclasses.replace(config, host=args.host)
    if args.port:
        config = dataclasses.replace(config, port=args.port)
    service = QueryService(config)
    app = create_app(service)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    result = verify_file(args.ledger)
    if result.ok:
        print("OK")
        return 0
    print(f"BROKEN at record {result.first_bad_index}")
    return 1


@dataclasses.dataclass(frozen=True)
class WorkloadItem:
    descriptor: QueryDescriptor
    epsilon: float
    delta: float
    repeats: int


def _load_workload(path: Path) -> list[WorkloadItem]:
    expected = ["kind", "column", "comparator", "constant", "epsilon", "delta", "repeats"]
    items: list[WorkloadItem] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise ValueError(f"workload header must be {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            column = row["column"].strip() or None
            comparator = row["comparator"].strip() or None
            constant = row["constant"].strip() or None
            if (comparator is None) != (constant is None):
                raise ValueError(f"{path}:{lineno}: predicate needs both comparator and constant")
            predicate = None
            if comparator is not None:
                pred_col = column
                if pred_col is None:
                    raise ValueError(f"{path}:{lineno}: predicate needs a column")
                predicate = Predicate(pred_col, comparator, float(constant))
            kind = QueryKind(row["kind"].strip())
            descriptor = QueryDescriptor(
                kind=kind,
                column=None if kind is QueryKind.COUNT else column,
                predicate=predicate,
            )
            repeats = int(row["repeats"])
            if repeats < 1:
                raise ValueError(f"{path}:{lineno}: repeats must be >= 1, got {repeats}")
            items.append(
                WorkloadItem(
                    descriptor=descriptor,
                    epsilon=float(row["epsilon"]),
                    delta=float(row["delta"]),
                    repeats=repeats,
                )
            )
    if not items:
        raise ValueError(f"{path}: workload is empty")
    return items


def _run_simulation(
    config: ServiceConfig, items: list[WorkloadItem], account_id: str
) -> list[str]:
    service = QueryService(config)
    rows = [SIMULATION_CSV_HEADER]
    try:
        for item in items:
            for _ in range(item.repeats):
                resp = service.submit_query(
                    account_id, item.descriptor, item.epsilon, item.delta
                )
                budget = service.get_budget()
                rows.append(
                    ",".join(
                        (
                            str(resp.record_index),
                            resp.reuse_kind,
                            repr(resp.privacy_cost_epsilon),
                            repr(budget["actual_epsilon_total"]),
                            repr(budget["naive_epsilon_total"]),
                        )
                    )
                )
    finally:
        service.close()
    return rows


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    # Validate everything before touching the filesystem: a bad workload
    # must not leave a half-created state directory behind.
    items = _load_workload(Path(args.workload))
    for item in items:
        validate_descriptor(item.descriptor, config.schema)
        PrivacyParams(epsilon=item.epsilon, delta=item.delta)
    if config.ledger_path.exists() and config.ledger_path.stat().st_size > 0:
        raise ValueError(
            f"{config.ledger_path} already holds records; simulations need a fresh "
            f"state directory so reuse decisions are reproducible"
        )
    if args.account is not None:
        account_id = args.account
    else:
        if not config.initial_accounts:
            raise ValueError("config declares no accounts; pass --account")
        account_id = next(iter(config.initial_accounts))
    rows = _run_simulation(config, items, account_id)
    out = Path(args.out)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows) - 1} rows to {out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    records = read_records(args.ledger)
    actual = 0.0
    naive = 0.0
    for rec in records:
        actual += rec.charged_epsilon
        naive += rec.requested_epsilon
    ratio = 0.0 if naive == 0.0 else actual / naive
    print(
        json.dumps(
            {
                "naive_epsilon_total": naive,
                "actual_epsilon_total": actual,
                "savings_ratio": ratio,
                "query_count": len(records),
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpledger", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(func=_cmd_serve)

    p_verify = sub.add_parser("verify", help="check a ledger file's hash chain")
    p_verify.add_argument("--ledger", required=True)
    p_verify.set_defaults(func=_cmd_verify)

    p_sim = sub.add_parser("simulate", help="run a workload through the pipeline")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--workload", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--account", default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_rep = sub.add_parser("report", help="recompute cost totals from a ledger")
    p_rep.add_argument("--ledger", required=True)
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, LedgerCorruptError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
