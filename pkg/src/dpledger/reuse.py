"""Noise reuse: answer a repeated query from prior releases where possible.

Given the history of releases for one query key, a new request at target
std ``sigma_new`` takes one of four paths:

  exact match    an earlier release used (to within 1e-12 relative) the
                 same sigma: return that answer verbatim. Cost 0.
  full reuse     sigma_new >= the smallest sigma ever used for this key:
                 take the prior release with the largest sigma <= sigma_new
                 and add independent top-up noise with
                 sigma_topup^2 = sigma_new^2 - sigma_base^2. Because sums
                 of independent Gaussians are Gaussian, the result is
                 distributed exactly like a fresh release at sigma_new,
                 yet is computed purely from already-public data, so it is
                 post-processing. Cost 0.
  partial reuse  sigma_new < every prior sigma: keep a fraction f of the
                 old noise and add fresh noise,
                     answer = true + f * noise_old + N(0, sigma_extra^2),
                     f = sigma_new^2 / sigma_old^2,
                     sigma_extra^2 = sigma_new^2 - f^2 sigma_old^2.
                 f is chosen to minimize the fresh information disclosed;
                 see below for the price.
  fresh          no history: a plain calibrated release at sigma_new.

Partial-reuse accounting (an implementation choice, not a theorem): given
the earlier release at sigma_old, observing the new answer is equivalent to
observing the true value plus Gaussian noise at the effective std

    1 / sigma_eff^2 = 1 / sigma_new^2 - 1 / sigma_old^2

(the precision increment between the two releases). We charge the epsilon
that the standard calibration assigns to sigma_eff at the requested delta.
This is conservative, closed-form, and always strictly below the fresh
charge; delta is charged at its full requested value, never discounted.
After a partial reuse the new (smaller) sigma joins the history, so later
charges are measured against the most precise release so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .mechanism import PrivacyParams, epsilon_for_sigma, gaussian_mechanism

# Two sigmas closer than this (relative) count as the same release target.
# Sigma is a deterministic function of (epsilon, delta, sensitivity), so a
# genuinely repeated request reproduces the stored sigma bit-for-bit; the
# tolerance only absorbs round-off from callers that recompute it.
SIGMA_MATCH_RTOL = 1e-12


class ReuseKind(str, Enum):
    FRESH = "fresh"
    EXACT_MATCH = "exact_match"
    FULL_REUSE = "full_reuse"
    PARTIAL_REUSE = "partial_reuse"


@dataclass(frozen=True)
class Fresh:
    sigma_new: float
    kind = ReuseKind.FRESH


@dataclass(frozen=True)
class ExactMatch:
    base_record_index: int
    base_answer: float
    sigma_base: float
    kind = ReuseKind.EXACT_MATCH


@dataclass(frozen=True)
class FullReuse:
    base_record_index: int
    base_answer: float
    sigma_base: float
    sigma_topup: float
    sigma_new: float
    kind = ReuseKind.FULL_REUSE


@dataclass(frozen=True)
class PartialReuse:
    base_record_index: int
    base_answer: float
    sigma_base: float
    fraction: float
    sigma_extra: float
    sigma_eff: float
    sigma_new: float
    kind = ReuseKind.PARTIAL_REUSE


ReuseDecision = Fresh | ExactMatch | FullReuse | PartialReuse


@dataclass(frozen=True)
class Release:
    """One answered query: the value released and what it cost."""

    answer: float
    charged_epsilon: float
    charged_delta: float
    decision: ReuseDecision
    sigma: float


@dataclass(frozen=True)
class HistoryEntry:
    record_index: int
    sigma: float
    answer: float


@dataclass
class HistoryIndex:
    """Per-key view of prior releases, ordered by ledger index.

    Owned by the service; rebuildable from the ledger at any time. The
    minimum sigma per key is cached because every decision consults it.
    """

    _entries: dict[bytes, list[HistoryEntry]] = field(default_factory=dict)
    _min: dict[bytes, HistoryEntry] = field(default_factory=dict)

    def add(self, key: bytes, entry: HistoryEntry) -> None:
        bucket = self._entries.setdefault(key, [])
        if bucket and entry.record_index <= bucket[-1].record_index:
            raise ValueError(
                f"history entries must arrive in ledger order; "
                f"got index {entry.record_index} after {bucket[-1].record_index}"
            )
        bucket.append(entry)
        cur = self._min.get(key)
        if cur is None or entry.sigma < cur.sigma:
            self._min[key] = entry

    def entries(self, key: bytes) -> list[HistoryEntry]:
        return list(self._entries.get(key, ()))

    def min_entry(self, key: bytes) -> HistoryEntry | None:
        return self._min.get(key)


def _sigmas_match(a: float, b: float) -> bool:
    return abs(a - b) <= SIGMA_MATCH_RTOL * max(abs(a), abs(b))


def decide(key: bytes, sigma_new: float, index: HistoryIndex) -> ReuseDecision:
    """Pick the cheapest way to answer a query at target std ``sigma_new``.

    Pure function of its inputs. Exact matches resolve to the earliest
    matching release so repeats stay byte-identical; full reuse extends the
    prior release with the largest sigma not above sigma_new (least fresh
    randomness injected, earliest release on ties); partial reuse always
    starts from the minimum-sigma release, which minimizes the charge.
    """
    if not (math.isfinite(sigma_new) and sigma_new > 0):
        raise ValueError(f"sigma_new must be a positive finite real, got {sigma_new}")
    entries = index.entries(key)
    if not entries:
        return Fresh(sigma_new=sigma_new)
    for e in entries:
        if _sigmas_match(e.sigma, sigma_new):
            return ExactMatch(
                base_record_index=e.record_index,
                base_answer=e.answer,
                sigma_base=e.sigma,
            )
    lowest = index.min_entry(key)
    assert lowest is not None
    if sigma_new >= lowest.sigma:
        base = None
        for e in entries:
            if e.sigma <= sigma_new and (base is None or e.sigma > base.sigma):
                base = e
        assert base is not None
        topup = math.sqrt(max(sigma_new**2 - base.sigma**2, 0.0))
        return FullReuse(
            base_record_index=base.record_index,
            base_answer=base.answer,
            sigma_base=base.sigma,
            sigma_topup=topup,
            sigma_new=sigma_new,
        )
    f, sigma_extra, sigma_eff = partial_params(sigma_new, lowest.sigma)
    return PartialReuse(
        base_record_index=lowest.record_index,
        base_answer=lowest.answer,
        sigma_base=lowest.sigma,
        fraction=f,
        sigma_extra=sigma_extra,
        sigma_eff=sigma_eff,
        sigma_new=sigma_new,
    )


def partial_params(sigma_new: float, sigma_old: float) -> tuple[float, float, float]:
    """Fraction of old noise to keep, fresh noise to add, effective sigma.

    Requires 0 < sigma_new < sigma_old. The kept fraction
    f = sigma_new^2 / sigma_old^2 is the minimizer of
    (1 - f) / sqrt(sigma_new^2 - f^2 sigma_old^2) over f in
    (0, sigma_new/sigma_old), i.e. it discloses the least fresh information
    per unit of achieved precision. The returned sigma_eff satisfies
    1/sigma_eff^2 = 1/sigma_new^2 - 1/sigma_old^2 and diverges as
    sigma_new approaches sigma_old, driving the charge to zero.
    """
    if not (math.isfinite(sigma_new) and math.isfinite(sigma_old)):
        raise ValueError("sigmas must be finite")
    if not 0 < sigma_new < sigma_old:
        raise ValueError(
            f"partial reuse needs 0 < sigma_new < sigma_old, "
            f"got sigma_new={sigma_new}, sigma_old={sigma_old}"
        )
    f = sigma_new**2 / sigma_old**2
    sigma_extra = math.sqrt(max(sigma_new**2 - (f * sigma_old) ** 2, 0.0))
    sigma_eff = sigma_old * sigma_new / math.sqrt(sigma_old**2 - sigma_new**2)
    return f, sigma_extra, sigma_eff


def charged_cost(
    decision: ReuseDecision, requested: PrivacyParams, sensitivity: float
) -> tuple[float, float]:
    """(epsilon, delta) actually spent by executing ``decision``.

    Deterministic and draw-free, so budget checks can run before any noise
    is generated.
    """
    if isinstance(decision, Fresh):
        return requested.epsilon, requested.delta
    if isinstance(decision, (ExactMatch, FullReuse)):
        return 0.0, 0.0
    if isinstance(decision, PartialReuse):
        eps = epsilon_for_sigma(decision.sigma_eff, requested.delta, sensitivity)
        return eps, requested.delta
    raise TypeError(f"unknown decision type {type(decision)!r}")


def execute(
    decision: ReuseDecision,
    true_value: float,
    requested: PrivacyParams,
    sensitivity: float,
    rng: np.random.Generator,
) -> Release:
    """Produce the released answer for a decision made by :func:`decide`.

    ``true_value`` is only consulted on the fresh and partial paths; exact
    match and full reuse are computed entirely from the prior release (pass
    NaN to assert that). Draws are deterministic under a seeded generator.
    """
    eps, delta = charged_cost(decision, requested, sensitivity)
    if isinstance(decision, Fresh):
        answer = gaussian_mechanism(true_value, decision.sigma_new, rng)
        return Release(answer, eps, delta, decision, decision.sigma_new)
    if isinstance(decision, ExactMatch):
        return Release(decision.base_answer, eps, delta, decision, decision.sigma_base)
    if isinstance(decision, FullReuse):
        answer = gaussian_mechanism(decision.base_answer, decision.sigma_topup, rng)
        return Release(answer, eps, delta, decision, decision.sigma_new)
    if isinstance(decision, PartialReuse):
        noise_old = decision.base_answer - true_value
        kept = true_value + decision.fraction * noise_old
        answer = gaussian_mechanism(kept, decision.sigma_extra, rng)
        return Release(answer, eps, delta, decision, decision.sigma_new)
    raise TypeError(f"unknown decision type {type(decision)!r}")
