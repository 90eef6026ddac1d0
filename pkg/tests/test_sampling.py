import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import BINGHAM_CASES, bingham_angle_density, bingham_moments
from seqgibbs.errors import DataError
from seqgibbs.sampling import (
    BinghamParams,
    MhConfig,
    RngStream,
    adaptive_mh,
    as_generator,
    sample_acg,
    sample_bingham,
    sample_bingham_batch,
    sample_multivariate_normal,
    sample_truncated_normal_positive,
    truncated_normal_positive_from_uniform,
)


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(5, (1, 2)).generator.random(4)
    b = RngStream(5, (1, 2)).generator.random(4)
    c = RngStream(5, (1, 3)).generator.random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    np.testing.assert_array_equal(RngStream(5, (1,)).child(2).generator.random(4), a)


def test_rng_stream_rejects_negative():
    with pytest.raises(DataError):
        RngStream(-1)


def test_as_generator_variants():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert isinstance(as_generator(3), np.random.Generator)
    with pytest.raises(DataError):
        as_generator("seed")


def test_bingham_params_validation():
    with pytest.raises(DataError):
        BinghamParams(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DataError):
        BinghamParams(np.ones((1, 1)))
    assert BinghamParams(np.eye(3)).dim == 3


def test_bingham_draws_are_unit_vectors():
    x = sample_bingham(np.diag([4.0, 1.0, 0.0]), RngStream(0), size=500)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)
    assert sample_bingham(np.eye(2), RngStream(0)).shape == (2,)


def test_bingham_zero_matrix_is_uniform_on_circle():
    x = sample_bingham(np.zeros((2, 2)), RngStream(1), size=20000)
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi) / (2 * np.pi)
    assert stats.kstest(theta, "uniform").pvalue > 0.01


def test_bingham_angle_histogram_matches_quadrature():
    A = np.array([[2.0, 1.5], [1.5, -1.0]])
    x = sample_bingham(A, RngStream(2), size=100000)
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    edges = np.linspace(0, 2 * np.pi, 21)
    observed, _ = np.histogram(theta, edges)
    expected = bingham_angle_density(A, edges) * x.shape[0]
    chi2 = np.sum((observed - expected) ** 2 / expected)
    assert chi2 < stats.chi2.ppf(0.99, df=19)


@pytest.mark.parametrize("A", BINGHAM_CASES[3][1:3])
def test_bingham_second_moments_small_sample(A):
    x = sample_bingham(A, RngStream(3), size=20000)
    m2, var = bingham_moments(A)
    emp = x.T @ x / x.shape[0]
    se = np.sqrt(var / x.shape[0])
    assert np.all(np.abs(emp - m2) <= 4 * se + 1e-12)


def test_bingham_acceptance_rate_reasonable():
    _, rate = sample_bingham(np.diag([200.0, 0, 0, 0, 0]), RngStream(0), size=5000,
                             return_stats=True)
    assert rate > 0.2


def test_bingham_batch_matches_single_moments():
    A = np.diag([6.0, 1.0, 0.0])
    x = sample_bingham_batch(np.broadcast_to(A, (20000, 3, 3)).copy(), RngStream(4))
    m2, var = bingham_moments(A)
    se = np.sqrt(var / x.shape[0])
    assert np.all(np.abs(x.T @ x / x.shape[0] - m2) <= 4 * se + 1e-12)


def test_bingham_batch_shape_check():
    with pytest.raises(DataError):
        sample_bingham_batch(np.eye(3), RngStream(0))


def test_sample_acg_is_unit_and_symmetric():
    x = sample_acg(np.diag([1.0, 4.0]), RngStream(0), size=20000)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0)
    # heavier precision on coordinate 2 pushes mass towards coordinate 1
    assert np.mean(x[:, 0] ** 2) > np.mean(x[:, 1] ** 2)
    assert abs(np.mean(x[:, 0] * x[:, 1])) < 0.02


def test_sample_acg_rejects_indefinite():
    with pytest.raises(DataError):
        sample_acg(np.diag([1.0, -1.0]), RngStream(0))


def test_truncated_normal_matches_scipy():
    x = sample_truncated_normal_positive(0.5, 1.2, RngStream(0), size=20000)
    assert np.all(x > 0)
    dist = stats.truncnorm(-0.5 / 1.2, np.inf, loc=0.5, scale=1.2)
    assert stats.kstest(x, dist.cdf).pvalue > 0.01


def test_truncated_normal_deep_tail_is_finite():
    x = truncated_normal_positive_from_uniform(np.array([-40.0]), np.array([1.0]),
                                               np.array([0.5]))
    assert np.isfinite(x).all() and (x > 0).all()
    assert x[0] < 0.1


@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(1e-6, 1.0))
def test_truncated_normal_transform_is_positive_and_monotone(mean, sd, u):
    x1 = truncated_normal_positive_from_uniform(mean, sd, u)
    x2 = truncated_normal_positive_from_uniform(mean, sd, min(1.0, u * 1.01))
    assert x1 > 0
    assert x2 <= x1 + 1e-12


def test_truncated_normal_rejects_bad_sd():
    with pytest.raises(DataError):
        sample_truncated_normal_positive(0.0, 0.0, RngStream(0))


def test_multivariate_normal_moments():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = sample_multivariate_normal([1.0, -1.0], cov, RngStream(0), size=50000)
    np.testing.assert_allclose(x.mean(0), [1.0, -1.0], atol=0.03)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.05)


def test_mh_config_validation():
    with pytest.raises(DataError):
        MhConfig(target_window=(0.6, 0.5))
    with pytest.raises(DataError):
        MhConfig(initial_step=0.0)
    with pytest.raises(DataError):
        MhConfig(adapt_factor=1.0)


def test_mh_recovers_gaussian_target():
    cfg = MhConfig(initial_step=5.0, burn_in=2000, n_samples=20000)
    res = adaptive_mh(lambda t: -0.5 * np.sum((t - 2.0) ** 2 / np.array([1.0, 4.0])),
                      np.zeros(2), cfg, RngStream(0))
    assert res.chain.shape == (20000, 2)
    np.testing.assert_allclose(res.chain.mean(0), [2.0, 2.0], atol=0.15)
    np.testing.assert_allclose(res.chain.var(0), [1.0, 4.0], rtol=0.2)
    assert 0.15 < res.acceptance_rate < 0.6


def test_mh_adaptation_reaches_window():
    cfg = MhConfig(initial_step=100.0, burn_in=3000, n_samples=2000)
    res = adaptive_mh(lambda t: -0.5 * float(t @ t), np.zeros(1), cfg, RngStream(1))
    lo, hi = cfg.target_window
    assert lo - 0.1 <= res.acceptance_rate <= hi + 0.1


def test_mh_positive_coordinate_stays_positive():
    cfg = MhConfig(initial_step=0.5, burn_in=500, n_samples=5000)
    # Exponential(1) target on (0, inf)
    res = adaptive_mh(lambda t: -float(t[0]) if t[0] > 0 else -np.inf, np.array([1.0]), cfg,
                      RngStream(2), positive=[True])
    assert np.all(res.chain > 0)
    assert res.chain.mean() == pytest.approx(1.0, abs=0.15)


def test_mh_lockstep_chains_match_single_runs():
    cfg = MhConfig(initial_step=1.0, burn_in=200, n_samples=300, block=64)
    centers = np.array([[0.0], [3.0], [-2.0]])

    def batch(T):
        return -0.5 * np.sum((T - centers) ** 2, axis=1)

    streams = [RngStream(9, (r,)) for r in range(3)]
    res = adaptive_mh(batch, centers.copy(), cfg, streams)
    for r in range(3):
        one = adaptive_mh(lambda t, c=centers[r]: -0.5 * float(np.sum((t - c) ** 2)),
                          centers[r].copy(), cfg, RngStream(9, (r,)))
        np.testing.assert_array_equal(res.chain[r], one.chain)


def test_mh_requires_finite_start():
    with pytest.raises(DataError):
        adaptive_mh(lambda t: -np.inf, np.zeros(1), MhConfig(), RngStream(0))
