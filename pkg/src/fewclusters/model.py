"""Shared domain types: clustered data, layouts, assignments, configs, results.

All types are immutable after construction. Clusters are kept in a canonical
treated-first order, established once by :func:`validate_dataset`; every
downstream index computation relies on that ordering.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

Side = str  # "greater" | "less" | "two_sided"

SIDES = ("greater", "less", "two_sided")
ADJUSTMENTS = ("adjusted", "unadjusted")


class FewClustersError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FewClustersError):
    """Invalid input data."""


class NoTreatedClusters(DataError):
    pass


class NoUntreatedClusters(DataError):
    pass


class EmptyCluster(DataError):
    pass


class RaggedCovariates(DataError):
    pass


class GroupTooSmall(FewClustersError):
    """A group has too few clusters for the requested computation."""


class DegenerateVariance(FewClustersError):
    """Two-sample variance of a placebo split is exactly zero."""


class TooManyAssignments(FewClustersError):
    """Full enumeration would exceed the configured cap; subsample instead."""


class RankDeficient(FewClustersError):
    """Design matrix does not have full column rank."""


class MissingPeriodFlag(DataError):
    """An observation lacks the pre/post indicator required for DiD."""


class Separation(FewClustersError):
    """Binary outcome is (quasi-)separated; the moment condition has no zero."""


class NoConvergence(FewClustersError):
    """Iterative fit failed to converge."""


class UnbalancedGroups(FewClustersError):
    """Operation requires equally many treated and untreated clusters."""


class MethodInapplicable(FewClustersError):
    """Requested inference method does not apply to the given setting."""


class HOutOfRange(FewClustersError):
    """Dependence length h outside {0, ..., m - 1}."""


class EstimationError(FewClustersError):
    """Per-cluster estimation failed; carries the offending cluster id."""

    def __init__(self, cluster_id: str, cause: Exception):
        super().__init__(f"estimation failed for cluster {cluster_id!r}: {cause}")
        self.cluster_id = cluster_id
        self.cause = cause


@dataclass(frozen=True)
class Observation:
    """One row of data: an outcome, optional covariates, optional post flag."""

    outcome: float
    covariates: tuple[float, ...] = ()
    period_post: Optional[bool] = None


@dataclass(frozen=True)
class Cluster:
    """A block of observations sharing one cluster-level treatment flag."""

    id: str
    treated: bool
    observations: tuple[Observation, ...]

    def __post_init__(self):
        if len(self.observations) == 0:
            raise EmptyCluster(f"cluster {self.id!r} has no observations")
        dims = {len(o.covariates) for o in self.observations}
        if len(dims) > 1:
            raise RaggedCovariates(
                f"cluster {self.id!r} mixes covariate dimensions {sorted(dims)}"
            )

    @classmethod
    def from_arrays(
        cls,
        id: str,
        treated: bool,
        outcomes: Iterable[float],
        covariates: Optional[np.ndarray] = None,
        post: Optional[Iterable[bool]] = None,
    ) -> "Cluster":
        outcomes = np.asarray(outcomes, dtype=float)
        m = outcomes.shape[0]
        if covariates is None:
            covariates = np.empty((m, 0))
        else:
            covariates = np.asarray(covariates, dtype=float).reshape(m, -1)
        posts: Sequence[Optional[bool]]
        posts = [None] * m if post is None else [bool(p) for p in post]
        obs = tuple(
            Observation(float(outcomes[i]), tuple(covariates[i]), posts[i])
            for i in range(m)
        )
        return cls(id=id, treated=treated, observations=obs)

    @property
    def size(self) -> int:
        return len(self.observations)

    @property
    def covariate_dim(self) -> int:
        return len(self.observations[0].covariates)

    @cached_property
    def outcomes(self) -> np.ndarray:
        return np.array([o.outcome for o in self.observations], dtype=float)

    @cached_property
    def covariate_matrix(self) -> np.ndarray:
        return np.array(
            [o.covariates for o in self.observations], dtype=float
        ).reshape(self.size, self.covariate_dim)

    @cached_property
    def post_flags(self) -> np.ndarray:
        """0/1 post-period indicators; raises if any observation lacks one."""
        flags = [o.period_post for o in self.observations]
        if any(f is None for f in flags):
            raise MissingPeriodFlag(
                f"cluster {self.id!r} has observations without a post indicator"
            )
        return np.array(flags, dtype=float)


@dataclass(frozen=True)
class ClusterLayout:
    """Counts of treated and untreated clusters under the canonical ordering.

    Indices 0..q1-1 are treated, q1..q-1 untreated.
    """

    q1: int
    q0: int

    def __post_init__(self):
        if self.q1 < 1:
            raise NoTreatedClusters("need at least one treated cluster")
        if self.q0 < 1:
            raise NoUntreatedClusters("need at least one untreated cluster")

    @property
    def q(self) -> int:
        return self.q1 + self.q0

    @property
    def treated_indices(self) -> range:
        return range(self.q1)

    @property
    def untreated_indices(self) -> range:
        return range(self.q1, self.q)


@dataclass(frozen=True)
class ClusterDataset:
    """Validated clusters in canonical treated-first order, plus their layout."""

    clusters: tuple[Cluster, ...]
    layout: ClusterLayout

    def __iter__(self):
        return iter(self.clusters)

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def n(self) -> int:
        return sum(c.size for c in self.clusters)

    def content_hash(self) -> str:
        """Stable digest of all numeric content, used by the debug shared-data log."""
        h = hashlib.sha256()
        for c in self.clusters:
            h.update(c.id.encode())
            h.update(b"1" if c.treated else b"0")
            h.update(c.outcomes.tobytes())
            h.update(c.covariate_matrix.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class EstimateVector:
    """Per-cluster scalar estimates, treated entries first."""

    values: np.ndarray
    layout: ClusterLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.shape[0] != self.layout.q:
            raise FewClustersError(
                f"estimate vector has length {values.shape}, layout needs {self.layout.q}"
            )
        if not np.all(np.isfinite(values)):
            raise FewClustersError("estimate vector contains non-finite entries")

    def negated(self) -> "EstimateVector":
        return EstimateVector(-self.values, self.layout)


@dataclass(frozen=True)
class Assignment:
    """A placebo labeling: the sorted 0-based indices designated treated."""

    treated_set: tuple[int, ...]

    def __post_init__(self):
        ts = tuple(sorted(int(i) for i in self.treated_set))
        if len(set(ts)) != len(ts):
            raise FewClustersError("treated_set has duplicate indices")
        object.__setattr__(self, "treated_set", ts)

    @classmethod
    def identity(cls, layout: ClusterLayout) -> "Assignment":
        return cls(tuple(range(layout.q1)))

    def is_identity(self, layout: ClusterLayout) -> bool:
        return self.treated_set == tuple(range(layout.q1))

    def complement(self, layout: ClusterLayout) -> tuple[int, ...]:
        treated = set(self.treated_set)
        return tuple(i for i in range(layout.q) if i not in treated)


@dataclass(frozen=True)
class TestConfig:
    """Settings for one placebo test run."""

    __test__ = False  # not a pytest class, despite the name

    alpha: float = 0.05
    side: Side = "greater"
    adjustment: str = "adjusted"
    max_assignments: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise FewClustersError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.side not in SIDES:
            raise FewClustersError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.adjustment not in ADJUSTMENTS:
            raise FewClustersError(
                f"adjustment must be one of {ADJUSTMENTS}, got {self.adjustment!r}"
            )
        if self.max_assignments is not None and self.max_assignments < 1:
            raise FewClustersError("max_assignments must be >= 1 when given")


@dataclass(frozen=True)
class TestResult:
    """Outcome of a single hypothesis test."""

    __test__ = False  # not a pytest class, despite the name

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    n_assignments: int
    side: Side = "greater"
    adjustment: str = "unadjusted"
    randomized_threshold: Optional[float] = None
    warnings: tuple[str, ...] = field(default=())


def validate_dataset(clusters: Sequence[Cluster]) -> ClusterDataset:
    """Check a collection of clusters and put it into canonical order.

    Treated clusters come first, preserving the input order within each
    group (stable partition). Requires at least one treated and one
    untreated cluster; cluster-level invariants (non-empty, homogeneous
    covariate dimension) are enforced by ``Cluster`` itself.
    """
    clusters = list(clusters)
    treated = [c for c in clusters if c.treated]
    untreated = [c for c in clusters if not c.treated]
    if not treated:
        raise NoTreatedClusters("dataset has no treated cluster")
    if not untreated:
        raise NoUntreatedClusters("dataset has no untreated cluster")
    dims = {c.covariate_dim for c in clusters}
    if len(dims) > 1:
        raise RaggedCovariates(f"clusters mix covariate dimensions {sorted(dims)}")
    layout = ClusterLayout(q1=len(treated), q0=len(untreated))
    return ClusterDataset(clusters=tuple(treated + untreated), layout=layout)
