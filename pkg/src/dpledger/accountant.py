"""Per-dataset privacy budget: charge costs atomically, report savings.

Two running totals are kept side by side. The actual track sums what each
query really cost after reuse; the naive track sums the full requested
epsilon of every query, repeats included — what plain linear composition
would have charged with no reuse at all. Their ratio is the headline
savings figure.

Composition is basic (linear) on both epsilon and delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class BudgetExceededError(Exception):
    """Charging this query would overrun the budget; nothing was changed."""

    def __init__(self, which: str, remaining: float):
        self.which = which
        self.remaining = remaining
        super().__init__(f"{which} budget exceeded; remaining {which} = {remaining}")


@dataclass(frozen=True)
class BudgetState:
    """Immutable snapshot of one dataset's budget and spend."""

    epsilon_budget: float
    delta_budget: float
    epsilon_spent: float = 0.0
    delta_spent: float = 0.0
    naive_epsilon_total: float = 0.0
    query_count: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon_budget) and self.epsilon_budget > 0):
            raise ValueError(f"epsilon budget must be positive, got {self.epsilon_budget}")
        if not (0 < self.delta_budget < 1):
            raise ValueError(f"delta budget must be in (0, 1), got {self.delta_budget}")

    @property
    def epsilon_remaining(self) -> float:
        return self.epsilon_budget - self.epsilon_spent

    @property
    def delta_remaining(self) -> float:
        return self.delta_budget - self.delta_spent


@dataclass(frozen=True)
class CostReport:
    naive_epsilon_total: float
    actual_epsilon_total: float
    savings_ratio: float
    query_count: int


def charge(
    state: BudgetState,
    actual: tuple[float, float],
    naive: tuple[float, float],
) -> BudgetState:
    """Apply one query's cost, or raise leaving ``state`` untouched.

    ``actual`` is the (epsilon, delta) really spent; ``naive`` the requested
    cost the no-reuse baseline would have paid. Returns a new state; the
    input is never mutated, so a rejected charge is atomic by construction.
    """
    actual_eps, actual_delta = actual
    naive_eps, _ = naive
    if actual_eps < 0 or actual_delta < 0:
        raise ValueError(f"charges must be non-negative, got {actual}")
    if actual_eps > naive_eps:
        raise ValueError(
            f"actual epsilon {actual_eps} exceeds naive (requested) epsilon {naive_eps}"
        )
    if state.epsilon_spent + actual_eps > state.epsilon_budget:
        raise BudgetExceededError("epsilon", state.epsilon_remaining)
    if state.delta_spent + actual_delta > state.delta_budget:
        raise BudgetExceededError("delta", state.delta_remaining)
    return replace(
        state,
        epsilon_spent=state.epsilon_spent + actual_eps,
        delta_spent=state.delta_spent + actual_delta,
        naive_epsilon_total=state.naive_epsilon_total + naive_eps,
        query_count=state.query_count + 1,
    )


def report(state: BudgetState) -> CostReport:
    """Accumulated naive-vs-actual totals; 0/0 ratio is defined as 0."""
    if state.naive_epsilon_total == 0.0:
        ratio = 0.0
    else:
        ratio = state.epsilon_spent / state.naive_epsilon_total
    return CostReport(
        naive_epsilon_total=state.naive_epsilon_total,
        actual_epsilon_total=state.epsilon_spent,
        savings_ratio=ratio,
        query_count=state.query_count,
    )
