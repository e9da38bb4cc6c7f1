"""Competing inference methods used as benchmarks for the placebo test.

Implemented here: the two-sample t test on per-cluster estimates, the
sign-change permutation test on matched-pair estimates, pooled OLS with a
cluster-robust variance estimator (CRVE), the t(q-1) test based on it, and
the wild cluster bootstrap with 6-point weights and the null imposed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import t as student_t

from .model import (
    Assignment,
    ClusterDataset,
    EstimateVector,
    FewClustersError,
    RankDeficient,
    TestResult,
    UnbalancedGroups,
)
from . import engine, stats

# 6-point bootstrap weight support (mean 0, variance 1), each point 1/6
WEBB_POINTS = np.array(
    [
        -math.sqrt(1.5),
        -1.0,
        -math.sqrt(0.5),
        math.sqrt(0.5),
        1.0,
        math.sqrt(1.5),
    ]
)


@dataclass(frozen=True)
class PooledFit:
    """Pooled OLS treatment coefficient with its cluster-robust t statistic."""

    beta_hat: float
    se_crve: float
    t_stat: float
    n: int
    q: int
    d: int


def im_t_test(x: EstimateVector, alpha: float, side: str = "greater") -> TestResult:
    """Two-sample t test on per-cluster estimates, df = min(q1, q0) - 1."""
    identity = Assignment.identity(x.layout)
    numerator = stats.comparison_of_means(x, identity)
    s = math.sqrt(stats.two_sample_variance(x, identity))
    if s == 0.0:
        stat = math.copysign(math.inf, numerator) if numerator != 0.0 else 0.0
    else:
        stat = numerator / s
    df = min(x.layout.q1, x.layout.q0) - 1
    if side == "greater":
        crit = float(student_t.ppf(1.0 - alpha, df))
        p = float(student_t.sf(stat, df))
        reject = stat > crit
    elif side == "less":
        crit = float(student_t.ppf(alpha, df))
        p = float(student_t.cdf(stat, df))
        reject = stat < crit
    else:
        crit = float(student_t.ppf(1.0 - alpha / 2.0, df))
        p = float(2.0 * student_t.sf(abs(stat), df))
        reject = abs(stat) > crit
    return TestResult(
        statistic=stat,
        critical_value=crit,
        p_value=p,
        reject=bool(reject),
        n_assignments=0,
        side=side,
    )


def pair_clusters(
    dataset: ClusterDataset,
    strategy: str = "random",
    seed: Optional[int] = None,
) -> list[tuple[int, int]]:
    """Match each treated cluster to one untreated cluster.

    "random" shuffles the untreated side with the given seed; "by_size"
    sorts both groups by cluster size and pairs rank to rank. Returns
    (treated index, untreated index) pairs into the canonical ordering.
    """
    layout = dataset.layout
    if layout.q1 != layout.q0:
        raise UnbalancedGroups(
            f"pairing needs q1 == q0, got ({layout.q1}, {layout.q0})"
        )
    treated = list(layout.treated_indices)
    untreated = list(layout.untreated_indices)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        untreated = [untreated[i] for i in rng.permutation(len(untreated))]
    elif strategy == "by_size":
        treated.sort(key=lambda i: dataset.clusters[i].size)
        untreated.sort(key=lambda i: dataset.clusters[i].size)
    else:
        raise ValueError(f"unknown pairing strategy {strategy!r}")
    return list(zip(treated, untreated))


def _sign_flip_statistics(beta_hats: np.ndarray) -> np.ndarray:
    """The matched-pair statistic under every sign vector, identity first."""
    q1 = beta_hats.shape[0]
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=q1)))
    flipped = signs * beta_hats
    means = flipped.mean(axis=1)
    denom = np.sqrt(np.sum((flipped - means[:, None]) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        values = means / denom
    degenerate = denom == 0.0
    if np.any(degenerate):
        values[degenerate] = np.sign(means[degenerate]) * np.inf
        values[degenerate & (means == 0.0)] = 0.0
    return values


def crs_sign_test(
    beta_hats: Sequence[float],
    alpha: float,
    randomized: bool = False,
    seed: Optional[int] = None,
) -> TestResult:
    """Sign-change permutation test on matched-pair treatment estimates.

    Evaluates the studentized mean under all 2^q1 sign vectors. The
    nonrandomized decision uses the ascending-quantile rule; the randomized
    variant draws one uniform against the tie-splitting test function.
    """
    b = np.asarray(beta_hats, dtype=float)
    if b.shape[0] < 2:
        raise FewClustersError("sign test needs at least two pair estimates")
    values = _sign_flip_statistics(b)
    observed = float(values[0])
    c, delta = engine.randomized_threshold(values, alpha)
    p = engine.p_value(observed, values)
    if randomized:
        u = float(np.random.default_rng(seed).uniform())
        phi = 1.0 if observed > c else (delta if observed == c else 0.0)
        reject = phi >= u
    else:
        reject = observed > c
    warnings: tuple[str, ...] = ()
    if not randomized and math.floor(values.shape[0] * alpha) == 0:
        warnings = (engine.ZERO_POWER_WARNING,)
    return TestResult(
        statistic=observed,
        critical_value=c,
        p_value=p,
        reject=bool(reject),
        n_assignments=int(values.shape[0]),
        randomized_threshold=delta,
        warnings=warnings,
    )


def _pooled_design(dataset: ClusterDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack (intercept, treatment dummy, covariates), outcomes, cluster sizes."""
    blocks = []
    outcomes = []
    sizes = []
    for cluster in dataset.clusters:
        m = cluster.size
        d_col = np.full(m, 1.0 if cluster.treated else 0.0)
        blocks.append(
            np.column_stack([np.ones(m), d_col, cluster.covariate_matrix])
        )
        outcomes.append(cluster.outcomes)
        sizes.append(m)
    return np.vstack(blocks), np.concatenate(outcomes), np.asarray(sizes)


def crve_dof_factor(n: int, d: int, q: int) -> float:
    """Degrees-of-freedom correction (n-1)q / ((n-d)(q-1)) for the CRVE."""
    return (n - 1) * q / ((n - d) * (q - 1))


def _fit_with_crve(
    design: np.ndarray, y: np.ndarray, sizes: np.ndarray, coef_index: int
) -> tuple[np.ndarray, float, float]:
    """OLS coefficients plus the CRVE standard error of one coefficient."""
    n, d = design.shape
    q = sizes.shape[0]
    xtx = design.T @ design
    if np.linalg.matrix_rank(xtx) < d:
        raise RankDeficient("pooled design matrix is rank deficient")
    xtx_inv = np.linalg.inv(xtx)
    coef = xtx_inv @ (design.T @ y)
    resid = y - design @ coef
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    meat = np.zeros((d, d))
    for k in range(q):
        score = design[bounds[k] : bounds[k + 1]].T @ resid[bounds[k] : bounds[k + 1]]
        meat += np.outer(score, score)
    cov = crve_dof_factor(n, d, q) * xtx_inv @ meat @ xtx_inv
    se = math.sqrt(max(cov[coef_index, coef_index], 0.0))
    return coef, se, float(coef[coef_index])


def pooled_ols_crve(dataset: ClusterDataset) -> PooledFit:
    """Pooled OLS of outcome on (1, treatment, covariates) with CRVE."""
    design, y, sizes = _pooled_design(dataset)
    coef, se, beta = _fit_with_crve(design, y, sizes, coef_index=1)
    t_stat = beta / se if se > 0.0 else math.copysign(math.inf, beta) if beta else 0.0
    return PooledFit(
        beta_hat=beta,
        se_crve=se,
        t_stat=t_stat,
        n=design.shape[0],
        q=sizes.shape[0],
        d=design.shape[1],
    )


def bch_t_test(fit: PooledFit, alpha: float, side: str = "greater") -> TestResult:
    """Compare the pooled CRVE t statistic to a t(q-1) critical value."""
    df = fit.q - 1
    stat = fit.t_stat
    if side == "greater":
        crit = float(student_t.ppf(1.0 - alpha, df))
        p = float(student_t.sf(stat, df))
        reject = stat > crit
    elif side == "less":
        crit = float(student_t.ppf(alpha, df))
        p = float(student_t.cdf(stat, df))
        reject = stat < crit
    else:
        crit = float(student_t.ppf(1.0 - alpha / 2.0, df))
        p = float(2.0 * student_t.sf(abs(stat), df))
        reject = abs(stat) > crit
    return TestResult(
        statistic=stat,
        critical_value=crit,
        p_value=p,
        reject=bool(reject),
        n_assignments=0,
        side=side,
    )


def webb_weights(rng: np.random.Generator, size) -> np.ndarray:
    """Draws from the 6-point bootstrap weight distribution."""
    return WEBB_POINTS[rng.integers(0, 6, size=size)]


def wild_cluster_bootstrap_test(
    dataset: ClusterDataset,
    alpha: float,
    side: str = "greater",
    b_reps: int = 199,
    seed: Optional[int] = None,
) -> TestResult:
    """Wild cluster bootstrap of the pooled CRVE t statistic, null imposed.

    The restricted fit drops the treatment dummy. Each bootstrap draw scales
    every cluster's restricted residuals by one 6-point weight, rebuilds the
    outcomes, refits the unrestricted regression, and recomputes the t
    statistic. The p-value is the plain fraction of bootstrap statistics at
    least as extreme as the observed one.
    """
    design, y, sizes = _pooled_design(dataset)
    n, d = design.shape
    q = sizes.shape[0]
    bounds = np.concatenate([[0], np.cumsum(sizes)])

    observed = pooled_ols_crve(dataset).t_stat

    restricted = np.delete(design, 1, axis=1)
    coef_r, *_ = np.linalg.lstsq(restricted, y, rcond=None)
    if np.linalg.matrix_rank(restricted) < restricted.shape[1]:
        raise RankDeficient("restricted pooled design is rank deficient")
    fitted_r = restricted @ coef_r
    resid_r = y - fitted_r

    xtx = design.T @ design
    if np.linalg.matrix_rank(xtx) < d:
        raise RankDeficient("pooled design matrix is rank deficient")
    xtx_inv = np.linalg.inv(xtx)
    # row vector extracting the treatment coefficient from X'y*
    g = design @ xtx_inv[:, 1]

    rng = np.random.default_rng(seed)
    w_cluster = webb_weights(rng, size=(q, b_reps))
    w_obs = np.repeat(w_cluster, sizes, axis=0)
    y_star = fitted_r[:, None] + w_obs * resid_r[:, None]

    coefs = xtx_inv @ (design.T @ y_star)
    resid = y_star - design @ coefs
    beta_star = g @ y_star
    var_star = np.zeros(b_reps)
    for k in range(q):
        sl = slice(bounds[k], bounds[k + 1])
        var_star += (g[sl] @ resid[sl]) ** 2
    se_star = np.sqrt(crve_dof_factor(n, d, q) * var_star)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = beta_star / se_star
    t_star[se_star == 0.0] = np.sign(beta_star[se_star == 0.0]) * np.inf

    if side == "greater":
        p = float(np.count_nonzero(t_star >= observed)) / b_reps
    elif side == "less":
        p = float(np.count_nonzero(t_star <= observed)) / b_reps
    else:
        p = float(np.count_nonzero(np.abs(t_star) >= abs(observed))) / b_reps
    crit = float(np.quantile(t_star, 1.0 - alpha))
    return TestResult(
        statistic=observed,
        critical_value=crit,
        p_value=p,
        reject=p <= alpha,
        n_assignments=b_reps,
        side=side,
    )


def pair_beta_ols(
    dataset: ClusterDataset, pairs: Sequence[tuple[int, int]]
) -> np.ndarray:
    """Per-pair treatment coefficient from pooled OLS of each matched pair."""
    betas = np.empty(len(pairs))
    for i, (ti, ui) in enumerate(pairs):
        pair = ClusterDataset(
            clusters=(dataset.clusters[ti], dataset.clusters[ui]),
            layout=type(dataset.layout)(q1=1, q0=1),
        )
        design, y, _ = _pooled_design(pair)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        betas[i] = coef[1]
    return betas


def pair_beta_probit(
    dataset: ClusterDataset, pairs: Sequence[tuple[int, int]]
) -> np.ndarray:
    """Per-pair treatment coefficient from a probit fit of each matched pair."""
    from .estimators import _probit_newton

    betas = np.empty(len(pairs))
    for i, (ti, ui) in enumerate(pairs):
        pair = ClusterDataset(
            clusters=(dataset.clusters[ti], dataset.clusters[ui]),
            layout=type(dataset.layout)(q1=1, q0=1),
        )
        design, y, _ = _pooled_design(pair)
        y01 = (y > 0).astype(float)
        coef, _ = _probit_newton(design, y01)
        betas[i] = coef[1]
    return betas
