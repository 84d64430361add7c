"""Differentially private query service with noise reuse and a hash-chained ledger.

Answers COUNT/SUM/MEAN queries over a frozen tabular dataset via the
Gaussian mechanism, reuses previously released noise (exact match, full
reuse, partial reuse) to cut the accumulated privacy cost, and records
every release on an append-only, tamper-evident ledger with per-release
fees and a per-dataset privacy budget.
"""

__version__ = "0.1.0"

from .accountant import BudgetExceededError, BudgetState, CostReport
from .dataset import Dataset, EmptySelectionError, evaluate, load_csv
from .ledger import (
    FeeSchedule,
    InsufficientFundsError,
    Ledger,
    LedgerCorruptError,
    ReleaseRecord,
    UnknownAccountError,
    VerifyResult,
    verify_file,
)
from .mechanism import (
    PrivacyParams,
    compute_sigma,
    epsilon_for_sigma,
    gaussian_mechanism,
    sensitivity_of,
    verify_dp_guarantee,
)
from .queries import (
    ColumnSpec,
    Predicate,
    QueryDescriptor,
    QueryKind,
    Schema,
    canonical_key,
)
from .reuse import (
    ExactMatch,
    Fresh,
    FullReuse,
    HistoryEntry,
    HistoryIndex,
    PartialReuse,
    Release,
    ReuseKind,
    decide,
    execute,
    partial_params,
)
from .service import QueryResponse, QueryService

__all__ = [
    "BudgetExceededError",
    "BudgetState",
    "ColumnSpec",
    "CostReport",
    "Dataset",
    "EmptySelectionError",
    "ExactMatch",
    "FeeSchedule",
    "Fresh",
    "FullReuse",
    "HistoryEntry",
    "HistoryIndex",
    "InsufficientFundsError",
    "Ledger",
    "LedgerCorruptError",
    "PartialReuse",
    "Predicate",
    "PrivacyParams",
    "QueryDescriptor",
    "QueryKind",
    "QueryResponse",
    "QueryService",
    "Release",
    "ReleaseRecord",
    "ReuseKind",
    "Schema",
    "UnknownAccountError",
    "VerifyResult",
    "canonical_key",
    "compute_sigma",
    "decide",
    "epsilon_for_sigma",
    "evaluate",
    "execute",
    "gaussian_mechanism",
    "load_csv",
    "partial_params",
    "sensitivity_of",
    "verify_dp_guarantee",
    "verify_file",
]
