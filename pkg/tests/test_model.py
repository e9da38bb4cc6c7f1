"""Tests for the shared domain types and dataset validation."""

import numpy as np
import pytest

from fewclusters.model import (
    Assignment,
    Cluster,
    ClusterLayout,
    EmptyCluster,
    EstimateVector,
    FewClustersError,
    NoTreatedClusters,
    NoUntreatedClusters,
    RaggedCovariates,
    Observation,
    TestConfig,
    validate_dataset,
)


def make_cluster(cid, treated, outcomes=(1.0, 2.0)):
    return Cluster.from_arrays(cid, treated, outcomes)


class TestValidateDataset:
    def test_counts(self):
        clusters = [make_cluster(f"t{i}", True) for i in range(3)] + [
            make_cluster(f"u{i}", False) for i in range(3)
        ]
        ds = validate_dataset(clusters)
        assert ds.layout == ClusterLayout(q1=3, q0=3)

    def test_no_treated(self):
        with pytest.raises(NoTreatedClusters):
            validate_dataset([make_cluster("a", False), make_cluster("b", False)])

    def test_no_untreated(self):
        with pytest.raises(NoUntreatedClusters):
            validate_dataset([make_cluster("a", True)])

    def test_interleaved_reordered_stably(self):
        clusters = [
            make_cluster("t1", True),
            make_cluster("u1", False),
            make_cluster("t2", True),
            make_cluster("u2", False),
        ]
        ds = validate_dataset(clusters)
        assert [c.id for c in ds.clusters] == ["t1", "t2", "u1", "u2"]
        assert ds.layout == ClusterLayout(q1=2, q0=2)

    def test_reordering_is_permutation(self):
        rng = np.random.default_rng(0)
        clusters = [
            make_cluster(f"c{i}", bool(rng.integers(0, 2))) for i in range(8)
        ]
        clusters[0] = make_cluster("c0", True)
        clusters[1] = make_cluster("c1", False)
        ds = validate_dataset(clusters)
        assert sorted(c.id for c in ds.clusters) == sorted(c.id for c in clusters)

    def test_ragged_covariates_across_clusters(self):
        a = Cluster.from_arrays("a", True, [1.0], covariates=np.ones((1, 2)))
        b = Cluster.from_arrays("b", False, [1.0], covariates=np.ones((1, 3)))
        with pytest.raises(RaggedCovariates):
            validate_dataset([a, b])


class TestCluster:
    def test_empty_cluster(self):
        with pytest.raises(EmptyCluster):
            Cluster(id="x", treated=True, observations=())

    def test_ragged_within_cluster(self):
        obs = (Observation(1.0, (1.0,)), Observation(2.0, (1.0, 2.0)))
        with pytest.raises(RaggedCovariates):
            Cluster(id="x", treated=True, observations=obs)

    def test_array_accessors(self):
        c = Cluster.from_arrays(
            "x", True, [1.0, 2.0], covariates=[[3.0], [4.0]], post=[False, True]
        )
        np.testing.assert_array_equal(c.outcomes, [1.0, 2.0])
        np.testing.assert_array_equal(c.covariate_matrix, [[3.0], [4.0]])
        np.testing.assert_array_equal(c.post_flags, [0.0, 1.0])


class TestEstimateVector:
    def test_length_checked(self):
        with pytest.raises(FewClustersError):
            EstimateVector(np.zeros(3), ClusterLayout(2, 2))

    def test_finite_checked(self):
        with pytest.raises(FewClustersError):
            EstimateVector(np.array([1.0, np.nan, 0.0, 0.0]), ClusterLayout(2, 2))


class TestAssignment:
    def test_identity(self):
        assert Assignment.identity(ClusterLayout(3, 2)).treated_set == (0, 1, 2)

    def test_sorted(self):
        assert Assignment((3, 1)).treated_set == (1, 3)

    def test_complement(self):
        assert Assignment((0, 2)).complement(ClusterLayout(2, 2)) == (1, 3)


class TestTestConfig:
    def test_alpha_range(self):
        with pytest.raises(FewClustersError):
            TestConfig(alpha=1.5)

    def test_bad_side(self):
        with pytest.raises(FewClustersError):
            TestConfig(side="sideways")

    def test_max_assignments_positive(self):
        with pytest.raises(FewClustersError):
            TestConfig(max_assignments=0)
