"""Placebo-assignment enumeration, permutation quantiles, and the test itself.

The evaluated set of assignments always has the identity assignment first,
so the observed statistic is a member of the placebo distribution. That
membership is what makes the quantile rule and the p-value rule provably
equivalent, and it also caps the p-value below at 1/N.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .model import (
    Assignment,
    ClusterLayout,
    EstimateVector,
    FewClustersError,
    GroupTooSmall,
    TestConfig,
    TestResult,
    TooManyAssignments,
)

ENUMERATION_CAP = 10_000_000

ZERO_POWER_WARNING = (
    "zero power: the placebo set is smaller than 1/alpha, so the observed "
    "statistic can never exceed the critical value"
)


def enumerate_assignments(
    layout: ClusterLayout, cap: int = ENUMERATION_CAP
) -> list[Assignment]:
    """All C(q, q1) treated-index combinations, identity first, lexicographic."""
    total = math.comb(layout.q, layout.q1)
    if total > cap:
        raise TooManyAssignments(
            f"C({layout.q}, {layout.q1}) = {total} exceeds the cap of {cap}; "
            "use subsampling (max_assignments) instead"
        )
    return [
        Assignment(combo)
        for combo in itertools.combinations(range(layout.q), layout.q1)
    ]


def subsample_assignments(
    layout: ClusterLayout, m: int, seed: int
) -> list[Assignment]:
    """Identity plus m i.i.d. uniform draws (with replacement) of assignments."""
    if m < 1:
        raise FewClustersError(f"number of subsampled assignments must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    draws = [Assignment.identity(layout)]
    for _ in range(m):
        picked = rng.choice(layout.q, size=layout.q1, replace=False)
        draws.append(Assignment(tuple(int(i) for i in picked)))
    return draws


def permutation_quantile(stats: Sequence[float], alpha: float) -> float:
    """The k-th smallest placebo statistic, k = ceil(N * (1 - alpha)).

    k is computed as N - floor(N * alpha), which is the same integer but
    avoids spurious float round-up at exact multiples.
    """
    values = np.sort(np.asarray(stats, dtype=float))
    n = values.shape[0]
    if n == 0:
        raise FewClustersError("cannot take a quantile of an empty statistic set")
    if not 0.0 < alpha < 1.0:
        raise FewClustersError(f"alpha must be in (0, 1), got {alpha}")
    k = n - math.floor(n * alpha)
    return float(values[k - 1])


def p_value(observed: float, stats: Sequence[float]) -> float:
    """Fraction of placebo statistics >= the observed one (ties count)."""
    values = np.asarray(stats, dtype=float)
    return float(np.count_nonzero(values >= observed)) / values.shape[0]


def randomized_threshold(
    stats: Sequence[float], alpha: float
) -> tuple[float, float]:
    """Critical value plus the tie-splitting probability of the randomized test."""
    values = np.asarray(stats, dtype=float)
    c = permutation_quantile(values, alpha)
    n = values.shape[0]
    n_greater = int(np.count_nonzero(values > c))
    n_equal = int(np.count_nonzero(values == c))
    delta = (n * alpha - n_greater) / n_equal
    return c, delta


@lru_cache(maxsize=64)
def _enumerated_mask(q1: int, q0: int) -> np.ndarray:
    layout = ClusterLayout(q1=q1, q0=q0)
    mask = _mask_matrix(enumerate_assignments(layout), layout.q)
    mask.setflags(write=False)
    return mask


def _mask_matrix(assignments: Sequence[Assignment], q: int) -> np.ndarray:
    mask = np.zeros((len(assignments), q), dtype=bool)
    for row, a in enumerate(assignments):
        mask[row, list(a.treated_set)] = True
    return mask


def placebo_statistics(
    values: np.ndarray, mask: np.ndarray, q1: int, adjusted: bool
) -> np.ndarray:
    """Evaluate the placebo statistic for every assignment row of ``mask``.

    Row 0 must be the identity assignment. With adjustment, a degenerate
    placebo split (zero two-sample variance away from the identity) maps to
    a signed infinity, or 0.0 when its comparison of means is also zero;
    this keeps quantiles and p-values well defined for degenerate inputs.
    """
    v = np.asarray(values, dtype=float)
    q = v.shape[0]
    q0 = q - q1
    fmask = mask.astype(float)
    sum_t = fmask @ v
    mean_diff = sum_t / q1 - (np.sum(v) - sum_t) / q0
    if not adjusted:
        return mean_diff

    sumsq_t = fmask @ (v * v)
    sumsq_u = np.sum(v * v) - sumsq_t
    sum_u = np.sum(v) - sum_t
    ss_t = np.maximum(sumsq_t - sum_t**2 / q1, 0.0)
    ss_u = np.maximum(sumsq_u - sum_u**2 / q0, 0.0)
    s2 = ss_t / (q1 * (q1 - 1)) + ss_u / (q0 * (q0 - 1))

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        stats = mean_diff * np.sqrt(s2[0] / s2)
    degenerate = s2 == 0.0
    if np.any(degenerate):
        with np.errstate(invalid="ignore"):
            stats[degenerate] = np.sign(mean_diff[degenerate]) * np.inf
        stats[degenerate & (mean_diff == 0.0)] = 0.0
    # identity ratio is exactly one by construction
    stats[0] = mean_diff[0]
    return stats


def _one_sided_greater(
    stats: np.ndarray, alpha: float
) -> tuple[float, float, float, float, bool, bool]:
    observed = float(stats[0])
    c, delta = randomized_threshold(stats, alpha)
    p = p_value(observed, stats)
    reject = observed > c
    zero_power = math.floor(stats.shape[0] * alpha) == 0
    return observed, c, delta, p, reject, zero_power


def _assignment_mask(x: EstimateVector, cfg: TestConfig) -> np.ndarray:
    layout = x.layout
    total = math.comb(layout.q, layout.q1)
    if cfg.max_assignments is not None and total > cfg.max_assignments:
        draws = subsample_assignments(layout, cfg.max_assignments, cfg.seed)
        return _mask_matrix(draws, layout.q)
    return _enumerated_mask(layout.q1, layout.q0)


def run_placebo_test(x: EstimateVector, cfg: TestConfig) -> TestResult:
    """Run the full placebo test on a vector of per-cluster estimates.

    One-sided "greater" rejects when the observed statistic exceeds the
    permutation quantile. "less" runs the greater-sided test on the negated
    estimates. "two_sided" runs both one-sided tests at alpha/2 and doubles
    the smaller p-value (capped at 1). The tie-splitting probability of the
    randomized test is reported but never used for the decision.
    """
    layout = x.layout
    adjusted = cfg.adjustment == "adjusted"
    if adjusted and (layout.q1 < 2 or layout.q0 < 2):
        raise GroupTooSmall(
            "the adjusted placebo statistic needs at least two clusters per "
            f"group, got ({layout.q1}, {layout.q0}); use adjustment='unadjusted'"
        )
    mask = _assignment_mask(x, cfg)
    stats = placebo_statistics(x.values, mask, layout.q1, adjusted)
    n = stats.shape[0]
    warnings: list[str] = []

    if cfg.side in ("greater", "less"):
        signed = stats if cfg.side == "greater" else -stats
        observed, c, delta, p, reject, zero_power = _one_sided_greater(
            signed, cfg.alpha
        )
        if zero_power:
            warnings.append(ZERO_POWER_WARNING)
        return TestResult(
            statistic=float(stats[0]),
            critical_value=c,
            p_value=p,
            reject=reject,
            n_assignments=n,
            side=cfg.side,
            adjustment=cfg.adjustment,
            randomized_threshold=delta,
            warnings=tuple(warnings),
        )

    half = cfg.alpha / 2.0
    obs_plus, c_plus, delta_plus, p_plus, rej_plus, zp_plus = _one_sided_greater(
        stats, half
    )
    _, c_minus, _, p_minus, rej_minus, _ = _one_sided_greater(-stats, half)
    if zp_plus:
        warnings.append(ZERO_POWER_WARNING)
    p_two = min(1.0, 2.0 * min(p_plus, p_minus))
    return TestResult(
        statistic=obs_plus,
        critical_value=c_plus,
        p_value=p_two,
        reject=rej_plus or rej_minus,
        n_assignments=n,
        side="two_sided",
        adjustment=cfg.adjustment,
        randomized_threshold=delta_plus,
        warnings=tuple(warnings),
    )
