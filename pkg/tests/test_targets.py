import json
import math

import numpy as np
import pytest

from difflab import (
    GaussianMixture,
    ScheduleParams,
    build_schedule,
    forward_marginal,
    gaussian_target,
    load_target,
    log_density,
    projected_cdf,
    sample_forward,
    sample_target,
    score,
    standard_normal_target,
)
from difflab.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    NotUnitVector,
    TargetLoadFailed,
)
from difflab.targets import check_second_moment, sample


def two_component_1d():
    return GaussianMixture(
        weights=np.array([0.3, 0.7]),
        means=np.array([[-2.0], [1.5]]),
        covariances=np.array([[[0.5]], [[1.2]]]),
    )


def random_mixture(rng, d, K):
    weights = rng.uniform(0.2, 1.0, K)
    weights /= weights.sum()
    means = rng.uniform(-2.0, 2.0, (K, d))
    covs = np.empty((K, d, d))
    for i in range(K):
        a = rng.standard_normal((d, d))
        covs[i] = a @ a.T / d + 0.5 * np.eye(d)
    return GaussianMixture(weights, means, covs)


def test_mixture_validation():
    with pytest.raises(InvalidParams):
        GaussianMixture(np.array([0.5, 0.6]), np.zeros((2, 1)), np.ones((2, 1, 1)))
    with pytest.raises(InvalidParams):
        GaussianMixture(np.array([1.0]), np.zeros((1, 2)),
                        np.array([[[1.0, 0.0], [0.0, -1.0]]]))
    with pytest.raises(InvalidParams):
        GaussianMixture(np.array([1.0]), np.zeros((1, 2)),
                        np.array([[[1.0, 0.5], [0.4, 1.0]]]))  # asymmetric


def test_second_moment_bound():
    gm = two_component_1d()
    expected = 0.3 * (0.5 + 4.0) + 0.7 * (1.2 + 2.25)
    assert abs(gm.second_moment() - expected) < 1e-12
    assert check_second_moment(gm, T=16)


def test_forward_marginal_stationary():
    target = standard_normal_target(3)
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, d=3))
    for t in [0, 1, 8, 16]:
        law = forward_marginal(target, s, t)
        assert np.allclose(law.mixture.means, 0.0)
        assert np.allclose(law.mixture.covariances[0], np.eye(3))


def test_forward_marginal_scaling():
    mu = np.array([2.0, -1.0])
    target = gaussian_target(mu, np.eye(2))
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, d=2))
    # hunt for the transformation at whatever abar the schedule provides
    t = 8
    abar = s.alpha_bar_at(t)
    law = forward_marginal(target, s, t)
    assert np.allclose(law.mixture.means[0], np.sqrt(abar) * mu)
    assert np.allclose(law.mixture.covariances[0], np.eye(2))


def test_forward_marginal_two_component_moment_match():
    # components scale as (sqrt(abar) m_i, abar s_i^2 + 1 - abar); cross-check
    # against Monte Carlo draws of the one-shot noising identity.
    gm = two_component_1d()
    s = build_schedule(ScheduleParams(T=32, c0=2.0, c1=2.0, d=1))
    t = 20
    abar = s.alpha_bar_at(t)
    law = forward_marginal(gm, s, t)
    assert np.allclose(law.mixture.means[:, 0], np.sqrt(abar) * gm.means[:, 0])
    assert np.allclose(law.mixture.covariances[:, 0, 0],
                       abar * gm.covariances[:, 0, 0] + (1 - abar))

    rng = np.random.default_rng(7)
    n = 1_000_000
    x0 = sample_target(gm, n, rng)
    draws = np.sqrt(abar) * x0 + np.sqrt(1 - abar) * rng.standard_normal((n, 1))
    mean_a, cov_a = law.mixture.moments()
    se_mean = math.sqrt(float(cov_a[0, 0]) / n)
    assert abs(draws.mean() - mean_a[0]) < 3 * se_mean
    fourth = np.mean((draws[:, 0] - draws.mean()) ** 4)
    se_var = math.sqrt((fourth - cov_a[0, 0] ** 2) / n)
    assert abs(draws.var() - cov_a[0, 0]) < 3 * se_var


def test_forward_marginal_limits():
    gm = two_component_1d()
    s = build_schedule(ScheduleParams(T=256, c0=4.0, c1=4.0, d=1))
    assert forward_marginal(gm, s, 0).mixture is gm  # t = 0 is the target
    # at the horizon the cumulative rate is ~T^-4: every covariance ~ I
    law = forward_marginal(gm, s, 256)
    assert np.allclose(law.mixture.covariances, np.eye(1), atol=1e-8)
    assert np.allclose(law.mixture.means, 0.0, atol=1e-4)


def test_log_density_standard_normal_peak():
    target = standard_normal_target(1)
    value = log_density(target, np.zeros(1))
    assert abs(value - (-0.5 * math.log(2 * math.pi))) < 1e-12
    assert abs(value - (-0.9189385)) < 5e-8


def test_log_density_symmetry():
    mu = np.array([1.0, -0.5])
    cov = np.array([[1.0, 0.3], [0.3, 0.8]])
    gm = GaussianMixture(np.array([0.5, 0.5]), np.stack([-mu, mu]),
                         np.stack([cov, cov]))
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.standard_normal(2) * 2
        assert log_density(gm, x) == pytest.approx(log_density(gm, -x), abs=1e-12)


def test_log_density_matches_quadrature_1d():
    from scipy.integrate import quad

    rng = np.random.default_rng(11)
    gm = random_mixture(rng, d=1, K=3)
    total, _ = quad(lambda u: math.exp(log_density(gm, np.array([u]))),
                    -np.inf, np.inf)
    assert abs(total - 1.0) < 1e-8
    # adaptive quadrature of exp(log_density) reproduces the closed-form CDF
    for _ in range(5):
        q = float(rng.uniform(-3, 3))
        integral, _ = quad(lambda u: math.exp(log_density(gm, np.array([u]))),
                           -np.inf, q)
        assert abs(integral - projected_cdf(gm, np.array([1.0]), q)) < 1e-8


def test_score_standard_normal():
    target = standard_normal_target(2)
    assert np.allclose(score(target, np.array([2.0, 0.0])), [-2.0, 0.0])


def test_score_symmetric_mixture_zero_at_origin():
    gm = GaussianMixture(
        np.array([0.5, 0.5]),
        np.array([[1.0, 2.0], [-1.0, -2.0]]),
        np.stack([np.eye(2), np.eye(2)]),
    )
    assert np.allclose(score(gm, np.zeros(2)), 0.0, atol=1e-15)


def finite_difference_score(law, x, h=1e-5):
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (log_density(law, x + e) - log_density(law, x - e)) / (2 * h)
    return grad


def test_score_matches_finite_differences():
    rng = np.random.default_rng(2024)
    s = build_schedule(ScheduleParams(T=16, c0=2.0, c1=1.0, d=3))
    for _ in range(25):
        gm = random_mixture(rng, d=3, K=2)
        t = int(rng.integers(0, 17))
        law = forward_marginal(gm, s, t)
        x = rng.standard_normal(3) * 1.5
        exact = score(law, x)
        fd = finite_difference_score(law, x)
        assert np.max(np.abs(exact - fd)) <= 1e-6


def test_score_batch_consistent_with_single():
    rng = np.random.default_rng(5)
    gm = random_mixture(rng, d=2, K=3)
    xs = rng.standard_normal((10, 2))
    batch = score(gm, xs)
    for i in range(10):
        assert np.allclose(batch[i], score(gm, xs[i]))


def test_sampling_deterministic_and_moment_sane():
    target = standard_normal_target(2)
    a = sample_target(target, 1000, np.random.default_rng(99))
    b = sample_target(target, 1000, np.random.default_rng(99))
    assert np.array_equal(a, b)

    n = 1_000_000
    draws = sample_target(target, n, np.random.default_rng(1))
    assert np.all(np.abs(draws.mean(axis=0)) < 4 / math.sqrt(n))


def test_sample_forward_matches_marginal_covariance():
    gm = two_component_1d()
    s = build_schedule(ScheduleParams(T=32, c0=2.0, c1=2.0, d=1))
    n = 200_000
    draws = sample_forward(gm, s, 32, n, np.random.default_rng(12))
    law = forward_marginal(gm, s, 32)
    mean_a, cov_a = law.mixture.moments()
    se_mean = math.sqrt(float(cov_a[0, 0]) / n)
    assert abs(draws.mean() - mean_a[0]) < 4 * se_mean
    fourth = np.mean((draws[:, 0] - mean_a[0]) ** 4)
    se_var = math.sqrt((fourth - cov_a[0, 0] ** 2) / n)
    assert abs(draws.var() - cov_a[0, 0]) < 5 * se_var


def test_projected_cdf_basics():
    target = standard_normal_target(3)
    u = np.array([1.0, 0.0, 0.0])
    assert projected_cdf(target, u, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert projected_cdf(target, u, 40.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NotUnitVector):
        projected_cdf(target, 2 * u, 0.0)
    with pytest.raises(DimensionMismatch):
        projected_cdf(target, np.array([1.0, 0.0]), 0.0)


def test_projected_cdf_matches_monte_carlo():
    gm = two_component_1d()
    u = np.array([1.0])
    n = 10_000_000
    draws = sample_target(gm, n, np.random.default_rng(4))
    q = 1.0
    analytic = projected_cdf(gm, u, q)
    empirical = np.mean(draws[:, 0] <= q)
    se = math.sqrt(analytic * (1 - analytic) / n)
    assert abs(empirical - analytic) < 3 * se


def test_marginal_index_range():
    target = standard_normal_target(1)
    s = build_schedule(ScheduleParams(T=8, c0=1.0, c1=0.5, d=1))
    with pytest.raises(IndexOutOfRange):
        forward_marginal(target, s, 9)
    with pytest.raises(IndexOutOfRange):
        forward_marginal(target, s, -1)


def test_load_target_roundtrip(tmp_path):
    spec = {
        "d": 2,
        "components": [
            {"weight": 0.4, "mean": [1.0, 0.0], "cov": [[1.0, 0.2], [0.2, 0.5]]},
            {"weight": 0.6, "mean": [-1.0, 1.0], "cov_scale": 0.7},
        ],
    }
    path = tmp_path / "target.json"
    path.write_text(json.dumps(spec))
    gm = load_target(str(path))
    assert gm.K == 2 and gm.d == 2
    assert np.allclose(gm.covariances[1], 0.7 * np.eye(2))

    bad = tmp_path / "bad.json"
    bad.write_text("{\"d\": 2}")
    with pytest.raises(TargetLoadFailed):
        load_target(str(bad))
    with pytest.raises(TargetLoadFailed):
        load_target(str(tmp_path / "missing.json"))


def test_sample_accepts_marginal_law():
    gm = two_component_1d()
    s = build_schedule(ScheduleParams(T=8, c0=1.0, c1=0.5, d=1))
    law = forward_marginal(gm, s, 3)
    draws = sample(law, 32, np.random.default_rng(0))
    assert draws.shape == (32, 1)
