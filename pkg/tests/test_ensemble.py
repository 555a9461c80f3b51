import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tekiflow.ensemble import Ensemble, compute_mean, compute_stats, ensemble_spread


def direct_moments(members, g_values):
    """Independent direct-summation oracle for all moments."""
    members = np.asarray(members, float)
    g_values = np.asarray(g_values, float)
    n = members.shape[0]
    mean = sum(members[j] for j in range(n)) / n
    g_mean = sum(g_values[j] for j in range(n)) / n
    cov = sum(np.outer(members[j] - mean, members[j] - mean) for j in range(n)) / n
    cross = sum(np.outer(members[j] - mean, g_values[j] - g_mean) for j in range(n)) / n
    out = sum(np.outer(g_values[j] - g_mean, g_values[j] - g_mean) for j in range(n)) / n
    spread = sum(float(np.dot(members[j] - mean, members[j] - mean)) for j in range(n)) / n
    return mean, g_mean, cov, cross, out, spread


class TestEnsemble:
    def test_requires_two_members(self):
        with pytest.raises(ValueError, match="at least 2"):
            Ensemble(np.ones((1, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Ensemble(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_shape_properties(self):
        e = Ensemble(np.zeros((4, 7)))
        assert e.size == 4 and e.dim == 7


class TestComputeMean:
    def test_symmetric_pair(self):
        assert np.allclose(compute_mean(np.array([[1.0, 0.0], [0.0, 1.0]])), [0.5, 0.5])

    def test_identical_particles(self):
        v = np.array([2.0, -1.0, 3.0])
        assert np.allclose(compute_mean(np.tile(v, (3, 1))), v)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(42)
        members = rng.standard_normal((5, 3))
        expected = sum(members[j] for j in range(5)) / 5
        np.testing.assert_allclose(compute_mean(members), expected, rtol=1e-14)

    def test_empty_ensemble(self):
        with pytest.raises(ValueError, match="empty ensemble"):
            compute_mean(np.zeros((0, 3)))


class TestComputeStats:
    def test_identical_members_zero_moments(self):
        members = np.tile([1.0, 2.0], (4, 1))
        g = np.tile([0.5], (4, 1))
        stats = compute_stats(members, g)
        assert np.all(stats.cov == 0) and np.all(stats.cross_cov == 0)
        assert stats.spread == 0.0

    def test_two_particle_hand_values(self):
        members = np.array([[1.0, 0.0], [0.0, 1.0]])
        stats = compute_stats(members, members.copy())
        np.testing.assert_allclose(stats.cov, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)
        assert stats.spread == pytest.approx(0.5, rel=1e-14)

    def test_random_instance_matches_oracle(self):
        rng = np.random.default_rng(3)
        members = rng.standard_normal((4, 3))
        g = rng.standard_normal((4, 2))
        stats = compute_stats(members, g)
        mean, g_mean, cov, cross, out, spread = direct_moments(members, g)
        np.testing.assert_allclose(stats.mean, mean, atol=1e-14)
        np.testing.assert_allclose(stats.g_mean, g_mean, atol=1e-14)
        np.testing.assert_allclose(stats.cov, cov, atol=1e-14)
        np.testing.assert_allclose(stats.cross_cov, cross, atol=1e-14)
        np.testing.assert_allclose(stats.out_cov, out, atol=1e-14)
        assert stats.spread == pytest.approx(spread, rel=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="one row per member"):
            compute_stats(np.zeros((3, 2)), np.zeros((2, 2)))

    def test_cov_factor_reproduces_cov(self):
        rng = np.random.default_rng(11)
        members = rng.standard_normal((6, 4))
        stats = compute_stats(members, rng.standard_normal((6, 2)))
        np.testing.assert_allclose(stats.cov_factor @ stats.cov_factor.T, stats.cov, atol=1e-14)


class TestEnsembleSpread:
    def test_identical_particles(self):
        assert ensemble_spread(np.tile([1.0, 2.0, 3.0], (5, 1))) == 0.0

    def test_two_particle_value(self):
        assert ensemble_spread(np.array([[1.0, 0.0], [0.0, 1.0]])) == pytest.approx(0.5)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(5)
        members = rng.standard_normal((4, 3))
        base = ensemble_spread(members)
        assert ensemble_spread(2.5 * members) == pytest.approx(2.5**2 * base, rel=1e-13)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty ensemble"):
            ensemble_spread(np.zeros((0, 2)))


finite_members = arrays(
    np.float64,
    (4, 3),
    elements=st.floats(min_value=-100, max_value=100, allow_nan=False),
)


@given(members=finite_members)
@settings(max_examples=50, deadline=None, derandomize=True)
def test_trace_equals_spread(members):
    stats = compute_stats(members, np.zeros((4, 1)))
    assert abs(np.trace(stats.cov) - stats.spread) <= 1e-13 * (1.0 + stats.spread)


@given(members=finite_members)
@settings(max_examples=50, deadline=None, derandomize=True)
def test_cov_annihilates_orthogonal_complement(members):
    stats = compute_stats(members, np.zeros((4, 1)))
    dev = members - stats.mean
    # a vector orthogonal to every spread vector
    u, s, vt = np.linalg.svd(dev, full_matrices=True)
    z = vt[-1]
    if s.size >= 3 and s[-1] > 1e-9:
        return  # spread spans the full space; no orthogonal direction exists
    scale = max(np.linalg.norm(stats.cov), 1.0)
    assert np.linalg.norm(stats.cov @ z) <= 1e-12 * scale


def test_rank_bounded_by_members():
    rng = np.random.default_rng(9)
    members = rng.standard_normal((4, 10))
    stats = compute_stats(members, np.zeros((4, 1)))
    sv = np.linalg.svd(stats.cov, compute_uv=False)
    assert np.all(sv[3:] <= 1e-12 * sv[0])


def test_cross_cov_linear_map_identity():
    # with g = A u the cross covariance equals cov @ A.T exactly
    rng = np.random.default_rng(17)
    members = rng.standard_normal((6, 4))
    a = rng.standard_normal((3, 4))
    stats = compute_stats(members, members @ a.T)
    np.testing.assert_allclose(
        stats.cross_cov, stats.cov @ a.T, rtol=1e-12, atol=1e-14
    )
