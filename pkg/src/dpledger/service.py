"""End-to-end query orchestration with an all-or-nothing commit protocol.

One query runs entirely inside the service's critical section:

    validate params -> calibrate sigma -> reuse decision -> price fee ->
    check funds -> check budget -> evaluate true answer (only the fresh and
    partial paths need it) -> draw noise -> commit.

The ledger append is the commit point. Mutations around it follow a
write-ahead protocol so a crash at any instant leaves a recoverable state:

    1. journal the pending mutation            (fsync)
    2. persist debited balances                (atomic replace)
    3. persist charged budget                  (atomic replace)
    4. append the record to the ledger         (fsync)   <- commit
    5. clear the journal

On restart, recovery replays the ledger (the source of truth) over the
configured initial state. A journal entry whose record made it into the
ledger was committed and is kept; one whose record is missing or torn was
aborted — the torn tail is truncated and the snapshots are rolled back by
the replay. Snapshot files that disagree with the replay are overwritten.

Failure checks are ordered so a request that will be refused costs nothing
and reveals as little as possible: validation first, then funds, then
budget — an account with no credits cannot probe the budget's state.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import accountant
from .accountant import BudgetState
from .config import ServiceConfig
from .dataset import DatasetError, evaluate, load_csv
from .ledger import (
    AccountStore,
    Ledger,
    ReleaseRecord,
    VerifyResult,
    atomic_write_json,
    encode_for_hash,
    make_record,
    record_to_dict,
)
from .mechanism import PrivacyParams, compute_sigma, sensitivity_of
from .queries import (
    COMPARATORS,
    QueryDescriptor,
    QueryKind,
    UnsupportedQueryError,
    canonical_key,
    validate_descriptor,
)
from .reuse import (
    Fresh,
    HistoryEntry,
    HistoryIndex,
    PartialReuse,
    charged_cost,
    decide,
    execute,
)

logger = logging.getLogger(__name__)

# Test-only crash injection: a callable invoked with a named point inside
# the commit sequence; production passes None.
Failpoint = Callable[[str], None]


class StorageError(Exception):
    """A durable write failed; the query was rolled back."""


@dataclass(frozen=True)
class QueryResponse:
    """The output card for one answered query."""

    query_id: str
    query_type: str
    noisy_response: float
    sigma: float
    blockchain_price: float
    privacy_cost_epsilon: float
    remaining_budget_epsilon: float
    reuse_kind: str
    record_index: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class CommitJournal:
    """Single-slot write-ahead journal for the in-flight mutation.

    The journal is written before any snapshot is touched, so a torn
    journal write implies nothing else changed and the entry can be
    discarded.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def begin(self, entry: dict[str, Any]) -> None:
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(entry, fh)
            fh.flush()
            os.fsync(fh.fileno())

    def pending(self) -> dict[str, Any] | None:
        if not self.path.exists():
            return None
        try:
            with open(self.path, encoding="utf-8") as fh:
                entry = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError):
            logger.warning("discarding torn journal entry at %s", self.path)
            return None
        if not isinstance(entry, dict) or "index" not in entry:
            logger.warning("discarding malformed journal entry at %s", self.path)
            return None
        return entry

    def clear(self) -> None:
        self.path.unlink(missing_ok=True)


class QueryService:
    """Owns one dataset epoch: its ledger, accounts, budget, and history."""

    def __init__(self, config: ServiceConfig, failpoint: Failpoint | None = None):
        self.config = config
        self._failpoint = failpoint
        self._lock = threading.Lock()
        self._dataset = load_csv(config.dataset_path, config.schema)
        self._rng = np.random.default_rng(config.seed)
        config.data_dir.mkdir(parents=True, exist_ok=True)
        self._journal = CommitJournal(config.journal_path)
        self._recover()
        self._history = HistoryIndex()
        for rec in self._ledger.records():
            self._history.add(
                rec.query_key, HistoryEntry(rec.index, rec.sigma, rec.noisy_answer)
            )

    # -- recovery ------------------------------------------------------------

    def _recover(self) -> None:
        pending = self._journal.pending()
        self._ledger = Ledger.open(
            self.config.ledger_path,
            truncate_torn_tail_at=None if pending is None else int(pending["index"]),
        )
        if pending is not None:
            committed = int(pending["index"]) < self._ledger.next_index
            logger.warning(
                "recovering in-doubt query at index %s: %s",
                pending["index"],
                "committed, rolling forward" if committed else "aborted, rolling back",
            )
        balances, budget = self._replay()
        self._accounts = AccountStore.load(
            self.config.accounts_path, initial=self.config.initial_accounts
        )
        if self._accounts.balances() != balances:
            if self.config.accounts_path.exists():
                logger.warning("account snapshot disagrees with ledger replay; rebuilding")
            self._accounts.replace_all(balances)
        self._accounts.save()
        persisted = self._load_budget_snapshot()
        if persisted is not None and persisted != budget:
            logger.warning("budget snapshot disagrees with ledger replay; rebuilding")
        self._budget = budget
        self._save_budget()
        self._journal.clear()

    def _replay(self) -> tuple[dict[str, float], BudgetState]:
        """Recompute balances and budget from the ledger, the ground truth.

        Accumulation order matches the live path record by record, so a
        clean shutdown's snapshots compare bit-identical to the replay.
        """
        balances = dict(self.config.initial_accounts)
        eps_spent = 0.0
        delta_spent = 0.0
        naive_total = 0.0
        for rec in self._ledger.records():
            if rec.account_id not in balances:
                raise DatasetError(
                    f"ledger references account {rec.account_id!r} missing from config"
                )
            balances[rec.account_id] -= rec.fee
            eps_spent += rec.charged_epsilon
            delta_spent += rec.charged_delta
            naive_total += rec.requested_epsilon
        budget = BudgetState(
            epsilon_budget=self.config.epsilon_budget,
            delta_budget=self.config.delta_budget,
            epsilon_spent=eps_spent,
            delta_spent=delta_spent,
            naive_epsilon_total=naive_total,
            query_count=len(self._ledger),
        )
        return balances, budget

    def _load_budget_snapshot(self) -> BudgetState | None:
        if not self.config.budget_path.exists():
            return None
        try:
            with open(self.config.budget_path, encoding="utf-8") as fh:
                raw = json.load(fh)
            return BudgetState(**raw)
        except (json.JSONDecodeError, TypeError, ValueError):
            logger.warning("unreadable budget snapshot at %s", self.config.budget_path)
            return None

    def _save_budget(self) -> None:
        atomic_write_json(self.config.budget_path, asdict(self._budget))

    def _fail(self, point: str) -> None:
        if self._failpoint is not None:
            self._failpoint(point)

    # -- the query pipeline ----------------------------------------------------

    def submit_query(
        self,
        account_id: str,
        descriptor: QueryDescriptor,
        epsilon: float,
        delta: float,
    ) -> QueryResponse:
        with self._lock:
            params = PrivacyParams(epsilon=epsilon, delta=delta)
            validate_descriptor(descriptor, self.config.schema)
            if descriptor.kind is QueryKind.MEAN and self._dataset.n == 0:
                raise DatasetError("MEAN is undefined on an empty dataset")
            sens = sensitivity_of(descriptor, self.config.schema, n_public=self._dataset.n)
            if sens == 0.0:
                raise UnsupportedQueryError(
                    f"query {descriptor.render()} has zero sensitivity; nothing to protect"
                )
            sigma_new = compute_sigma(params, sens)
            key = canonical_key(descriptor)
            decision = decide(key, sigma_new, self._history)
            actual = charged_cost(decision, params, sens)
            naive = (params.epsilon, params.delta)

            index = self._ledger.next_index
            query_id = f"Q{index:06d}"
            base_index = None if isinstance(decision, Fresh) else decision.base_record_index

            # Fee pricing: the canonical encoding is fixed-width in every
            # numeric field, so the size (hence the fee) is known before
            # the answer or the fee value itself exists.
            provisional = self._build_record(
                index, query_id, key, descriptor, decision.kind.value, base_index,
                params, actual, sigma=sigma_new, answer=0.0, fee=0.0, timestamp_ms=0,
                account_id=account_id,
            )
            fee = self.config.fees.price_of(len(encode_for_hash(provisional)))

            self._accounts.check_debit(account_id, fee)
            new_budget = accountant.charge(self._budget, actual, naive)

            needs_true = isinstance(decision, (Fresh, PartialReuse))
            true_value = evaluate(descriptor, self._dataset) if needs_true else math.nan
            release = execute(decision, true_value, params, sens, self._rng)

            record = self._build_record(
                index, query_id, key, descriptor, decision.kind.value, base_index,
                params, actual, sigma=release.sigma, answer=release.answer, fee=fee,
                timestamp_ms=time.time_ns() // 1_000_000, account_id=account_id,
            )
            self._commit(record, new_budget)
            self._history.add(key, HistoryEntry(index, record.sigma, record.noisy_answer))
            return QueryResponse(
                query_id=query_id,
                query_type=descriptor.render(),
                noisy_response=record.noisy_answer,
                sigma=record.sigma,
                blockchain_price=fee,
                privacy_cost_epsilon=record.charged_epsilon,
                remaining_budget_epsilon=self._budget.epsilon_remaining,
                reuse_kind=record.reuse_kind,
                record_index=index,
            )

    def _build_record(
        self,
        index: int,
        query_id: str,
        key: bytes,
        descriptor: QueryDescriptor,
        reuse_kind: str,
        base_index: int | None,
        params: PrivacyParams,
        actual: tuple[float, float],
        *,
        sigma: float,
        answer: float,
        fee: float,
        timestamp_ms: int,
        account_id: str,
    ) -> ReleaseRecord:
        return make_record(
            index=index,
            query_id=query_id,
            query_key=key,
            descriptor=descriptor,
            sigma=sigma,
            noisy_answer=answer,
            reuse_kind=reuse_kind,
            base_record_index=base_index,
            requested_epsilon=params.epsilon,
            requested_delta=params.delta,
            charged_epsilon=actual[0],
            charged_delta=actual[1],
            fee=fee,
            account_id=account_id,
            timestamp_ms=timestamp_ms,
            prev_hash=self._ledger.tip_hash,
        )

    def _commit(self, record: ReleaseRecord, new_budget: BudgetState) -> None:
        self._journal.begin(
            {
                "index": record.index,
                "record_hash": record.record_hash.hex(),
                "account_id": record.account_id,
                "fee": record.fee,
                "charged_epsilon": record.charged_epsilon,
                "charged_delta": record.charged_delta,
                "requested_epsilon": record.requested_epsilon,
            }
        )
        self._fail("journal")
        old_budget = self._budget
        self._accounts.debit(record.account_id, record.fee)
        self._accounts.save()
        self._fail("accounts")
        self._budget = new_budget
        self._save_budget()
        self._fail("budget")
        try:
            self._ledger.append(record, failpoint=self._failpoint)
        except OSError as e:
            self._accounts.credit(record.account_id, record.fee)
            self._accounts.save()
            self._budget = old_budget
            self._save_budget()
            self._journal.clear()
            raise StorageError(f"ledger append failed: {e}") from e
        self._fail("append")
        self._journal.clear()

    # -- read-side views ---------------------------------------------------------

    def get_account(self, account_id: str) -> dict[str, Any]:
        with self._lock:
            return {"account_id": account_id, "balance": self._accounts.balance(account_id)}

    def get_budget(self) -> dict[str, Any]:
        with self._lock:
            rep = accountant.report(self._budget)
            return {
                "epsilon_budget": self._budget.epsilon_budget,
                "delta_budget": self._budget.delta_budget,
                "epsilon_spent": self._budget.epsilon_spent,
                "delta_spent": self._budget.delta_spent,
                "epsilon_remaining": self._budget.epsilon_remaining,
                "delta_remaining": self._budget.delta_remaining,
                "naive_epsilon_total": rep.naive_epsilon_total,
                "actual_epsilon_total": rep.actual_epsilon_total,
                "savings_ratio": rep.savings_ratio,
                "query_count": rep.query_count,
            }

    def get_history(self, query_key: bytes | None = None) -> list[dict[str, Any]]:
        with self._lock:
            records = (
                self._ledger.records()
                if query_key is None
                else self._ledger.history(query_key)
            )
        return [record_to_dict(r) for r in records]

    def verify_ledger(self) -> VerifyResult:
        # Deliberately lock-free: verification re-reads the file and
        # tolerates an in-flight append (prefix-consistent view).
        return self._ledger.verify()

    def meta(self) -> dict[str, Any]:
        with self._lock:
            return {
                "schema": self.config.schema.to_dict(),
                "query_kinds": [k.value for k in QueryKind],
                "comparators": list(COMPARATORS),
                "fees": {
                    "base_fee": self.config.fees.base_fee,
                    "per_byte_fee": self.config.fees.per_byte_fee,
                },
                "dataset": {"rows": self._dataset.n},
                "accounts": self._accounts.account_ids(),
            }

    def close(self) -> None:
        self._ledger.close()
