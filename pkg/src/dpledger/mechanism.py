"""Calibrated Gaussian noise: sensitivity, sigma, sampling, verification.

Pure math, no I/O, no state. The guarantee model throughout is
(epsilon, delta) indistinguishability between datasets that differ by
adding or removing one record:

    Pr[Y(D) in S]  <=  e^epsilon * Pr[Y(D') in S] + delta

for every measurable output set S. Answers are released as

    true_value + N(0, sigma^2),   sigma = sqrt(2 ln(1.25/delta)) * dq / epsilon

where dq bounds how far the true answer can move between neighboring
datasets.

Sensitivities are closed-form under the add/remove-one-record model:

    COUNT      -> 1
    SUM(col)   -> max(|lo|, |hi|)          (column values clamped at load)
    MEAN(col)  -> (hi - lo) / n            (n treated as public and fixed)

The MEAN bound is the standard public-n approximation: it ignores the
change in the divisor itself, so callers should treat MEAN answers as
approximately protected and must keep n fixed for the dataset's lifetime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .queries import (
    QueryDescriptor,
    QueryKind,
    Schema,
    UnsupportedQueryError,
)

# ln(1.25/delta) must stay positive with margin; larger deltas are
# meaningless relaxations and are rejected outright.
MAX_DELTA = 0.5


@dataclass(frozen=True)
class PrivacyParams:
    """One query's requested (epsilon, delta) privacy target."""

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be a positive finite real, got {self.epsilon}")
        if not (0 < self.delta <= MAX_DELTA):
            raise ValueError(f"delta must be in (0, {MAX_DELTA}], got {self.delta}")


def sensitivity_of(desc: QueryDescriptor, schema: Schema, n_public: int = 1) -> float:
    """Worst-case change of the true answer when one record is added/removed.

    Args:
        desc: The query being asked. Predicates do not change the bound:
            one extra record flips at most one row in or out of the filter.
        schema: Declared column bounds; values outside them never enter a
            dataset, so ``max(|lo|, |hi|)`` caps any single row's SUM share.
        n_public: Dataset size, treated as public. Only the MEAN formula
            uses it; it must be >= 1 there.

    Returns:
        The sensitivity in query-output units (always finite, >= 0).
    """
    if desc.kind is QueryKind.COUNT:
        return 1.0
    assert desc.column is not None
    col = schema.column(desc.column)
    if desc.kind is QueryKind.SUM:
        return max(abs(col.lo), abs(col.hi))
    if desc.kind is QueryKind.MEAN:
        if n_public < 1:
            raise ValueError(f"MEAN sensitivity needs a public size >= 1, got {n_public}")
        return (col.hi - col.lo) / n_public
    raise UnsupportedQueryError(f"unsupported query kind {desc.kind!r}")


def compute_sigma(params: PrivacyParams, sensitivity: float) -> float:
    """Noise standard deviation meeting the (epsilon, delta) target.

    sigma = sqrt(2 ln(1.25/delta)) * sensitivity / epsilon. Strictly
    decreasing in epsilon, strictly increasing in sensitivity; scaling
    epsilon by k scales sigma by 1/k exactly.
    """
    if not (math.isfinite(sensitivity) and sensitivity >= 0):
        raise ValueError(f"sensitivity must be a finite non-negative real, got {sensitivity}")
    return math.sqrt(2.0 * math.log(1.25 / params.delta)) * sensitivity / params.epsilon


def epsilon_for_sigma(sigma: float, delta: float, sensitivity: float) -> float:
    """Invert the calibration: the epsilon a given sigma corresponds to.

    This is the price tag used when a release is equivalent to fresh noise
    at some effective sigma (see the reuse engine).
    """
    if not (math.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be a positive finite real, got {sigma}")
    if not (0 < delta <= MAX_DELTA):
        raise ValueError(f"delta must be in (0, {MAX_DELTA}], got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) * sensitivity / sigma


def gaussian_mechanism(true_value: float, sigma: float, rng: np.random.Generator) -> float:
    """Release ``true_value`` plus one zero-mean Gaussian draw of std sigma.

    The draw comes from the caller-owned numpy ``Generator`` (PCG64 stream,
    ziggurat normal sampler), so a fixed seed replays identical outputs.
    ``sigma == 0`` returns the true value unchanged. The generator is not
    thread-safe; callers sharing one must serialize access.
    """
    if not math.isfinite(true_value):
        raise ValueError(f"true value must be finite, got {true_value}")
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ValueError(f"sigma must be a finite non-negative real, got {sigma}")
    return float(true_value + rng.normal(0.0, sigma))


def gaussian_upper_tail(t: float, mean: float, sigma: float) -> float:
    """Exact Pr[N(mean, sigma^2) >= t] via erfc (no sampling)."""
    return 0.5 * math.erfc((t - mean) / (sigma * math.sqrt(2.0)))


def threshold_grid(sensitivity: float, sigma: float, points: int = 10_000) -> np.ndarray:
    """Evenly spaced thresholds spanning [-10 sigma, sensitivity + 10 sigma]."""
    return np.linspace(-10.0 * sigma, sensitivity + 10.0 * sigma, points)


def verify_dp_guarantee(
    params: PrivacyParams,
    sensitivity: float,
    grid: Sequence[float],
    sigma: float | None = None,
) -> bool:
    """Numerically check the guarantee on threshold events, both directions.

    Places the two neighboring true answers at 0 and ``sensitivity``, adds
    N(0, sigma^2) to each, and tests at every threshold t in ``grid``:

        Pr[Y(D)  >= t] <= e^epsilon * Pr[Y(D') >= t] + delta
        Pr[Y(D') >= t] <= e^epsilon * Pr[Y(D)  >= t] + delta

    using exact Gaussian tails. For equal-variance shifted Gaussians the
    likelihood ratio is monotone in the output, so one-sided threshold
    events are the worst-case sets; lower-tail events map onto reflected
    upper-tail events, which the two-directional check over a symmetric
    grid already covers. Passing this check on a dense grid is therefore
    evidence for the full guarantee, not just a spot check.

    ``sigma`` defaults to the calibrated value; pass an explicit one to
    probe deliberately mis-scaled noise. The grid must span at least
    [-10 sigma, sensitivity + 10 sigma].
    """
    if sigma is None:
        sigma = compute_sigma(params, sensitivity)
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ValueError(f"sigma must be a finite non-negative real, got {sigma}")
    if sigma == 0.0:
        # Degenerate point masses: identical iff the answers coincide.
        return sensitivity == 0.0
    thresholds = np.asarray(grid, dtype=float)
    if thresholds.size == 0:
        raise ValueError("threshold grid is empty")
    if thresholds.min() > -10.0 * sigma or thresholds.max() < sensitivity + 10.0 * sigma:
        raise ValueError(
            f"grid [{thresholds.min()}, {thresholds.max()}] must span "
            f"[{-10.0 * sigma}, {sensitivity + 10.0 * sigma}]"
        )
    bound = math.exp(params.epsilon)
    for t in thresholds:
        p0 = gaussian_upper_tail(t, 0.0, sigma)
        p1 = gaussian_upper_tail(t, sensitivity, sigma)
        if p1 > bound * p0 + params.delta:
            return False
        if p0 > bound * p1 + params.delta:
            return False
    return True
