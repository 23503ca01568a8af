import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from phipursuit.errors import DegenerateAxis, DimensionMismatch, ZeroDirection
from phipursuit.kde import EXACT_LIMIT, Kde1d, KdeNd, WhitenedKde, kde_eval, project_and_fit, scott_bandwidth
from phipursuit.models import fit_instrumental

INV_SQRT_2PI = 1 / math.sqrt(2 * math.pi)


def unit_sd(m, k):
    # columns with sample standard deviation exactly 1
    x = np.random.default_rng(m * 10 + k).standard_normal((m, k))
    x = x - x.mean(axis=0)
    return x / x.std(axis=0, ddof=1)


def test_scott_examples():
    assert scott_bandwidth(unit_sd(50, 1)) == pytest.approx([50 ** (-1 / 5)])
    assert scott_bandwidth(unit_sd(50, 1))[0] == pytest.approx(0.45730, abs=1e-5)
    # 50 ** (-1 / 7) = 0.571860 (evaluated directly)
    assert scott_bandwidth(unit_sd(50, 3)) == pytest.approx([0.571860] * 3, abs=1e-6)


@given(m=st.integers(5, 500), scale=st.floats(0.01, 100))
def test_scott_rate_and_scale(m, scale):
    x = unit_sd(m, 2) * scale
    assert scott_bandwidth(x) == pytest.approx([scale * m ** (-1 / 6)] * 2, rel=1e-9)


def test_scott_zero_spread():
    with pytest.raises(DegenerateAxis):
        scott_bandwidth(np.array([[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]]))


def test_single_point_kernel():
    assert Kde1d([0.0], 1.0)(np.array([0.0]))[0] == pytest.approx(INV_SQRT_2PI)
    assert KdeNd(np.zeros((1, 1)), [1.0])(np.array([0.0])) == pytest.approx(INV_SQRT_2PI)


def test_two_point_kernel():
    assert Kde1d([-1.0, 1.0], 1.0)(np.array([0.0]))[0] == pytest.approx(INV_SQRT_2PI * math.exp(-0.5))
    assert float(Kde1d([-1.0, 1.0], 1.0)(np.array([0.0]))[0]) == pytest.approx(0.24197, abs=5e-6)


def test_large_sample_consistency(rng):
    x = rng.standard_normal(10_000)
    assert abs(Kde1d(x, scott_bandwidth(x)[0])(np.array([0.0]))[0] - 0.39894) < 0.02


@given(seed=st.integers(0, 10_000), m=st.integers(2, 200))
def test_1d_matches_scipy(seed, m):
    x = np.random.default_rng(seed).standard_normal(m) * 3 + 1
    if x.std() == 0:
        return
    ours = Kde1d(x, scott_bandwidth(x)[0])
    # scipy scales a unit kernel by the sample sd times its factor, here Scott's m^{-1/5}
    ref = stats.gaussian_kde(x, bw_method="scott")
    q = np.linspace(x.min() - 2, x.max() + 2, 17)
    assert np.allclose(ours(q), ref(q), rtol=1e-10, atol=1e-300)


@given(seed=st.integers(0, 10_000), d=st.integers(1, 3))
def test_nd_matches_brute_force(seed, d):
    rng = np.random.default_rng(seed)
    x, q, h = rng.standard_normal((30, d)), rng.standard_normal((7, d)), rng.uniform(0.2, 2, d)
    z = (q[:, None, :] - x[None, :, :]) / h
    brute = np.exp(-0.5 * (z * z).sum(-1)).mean(1) / np.prod(h * math.sqrt(2 * math.pi))
    assert np.allclose(KdeNd(x, h)(q), brute, rtol=1e-10)


def test_nd_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        KdeNd(np.zeros((3, 2)), [1.0, 1.0])(np.zeros((1, 3)))


@given(seed=st.integers(0, 10_000))
def test_leave_one_out(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((25, 2))
    k = KdeNd(x, [0.5, 0.7])
    brute = [KdeNd(np.delete(x, i, 0), [0.5, 0.7])(x[i]) for i in range(25)]
    assert np.allclose(k.loo(), brute, rtol=1e-10)
    k1 = Kde1d(x[:, 0], 0.4)
    brute1 = [Kde1d(np.delete(x[:, 0], i), 0.4)(x[i:i + 1, 0])[0] for i in range(25)]
    assert np.allclose(k1.loo(), brute1, rtol=1e-10)


def test_binned_path_accuracy(rng):
    x = rng.gumbel(size=5000)
    k = Kde1d(x, scott_bandwidth(x)[0])
    q = np.linspace(np.quantile(x, 0.001), np.quantile(x, 0.999), 400)
    assert q.size * k.m > EXACT_LIMIT
    assert np.max(np.abs(k.evaluate(q) / k.exact(q) - 1)) < 2e-3


def test_log_evaluate_far_tail():
    k = Kde1d([0.0, 1.0], 0.1)
    t = np.array([50.0])
    expected = -0.5 * (49.0 / 0.1) ** 2 - math.log(2 * 0.1 * math.sqrt(2 * math.pi))
    assert k.log_evaluate(t)[0] == pytest.approx(expected, rel=1e-9)


def test_cdf_and_sample(rng):
    k = Kde1d(rng.standard_normal(300), 0.3)
    draws = k.sample(4000, np.random.default_rng(1))
    assert stats.kstest(draws, k.cdf).pvalue > 0.01
    t = np.linspace(-3, 3, 5)
    assert np.all(np.diff(k.cdf(t)) > 0)


def test_relative_variance_matches_simulation():
    # Var(f_m(0)) / f(0)^2 across repeated samples against the plug-in formula
    m, h = 400, 0.3
    vals = [Kde1d(np.random.default_rng(s).standard_normal(m), h)(np.array([0.0]))[0] for s in range(400)]
    empirical = np.var(vals) / np.mean(vals) ** 2
    x = np.random.default_rng(999).standard_normal(m)
    est = Kde1d(x, h).relative_variance(np.array([0.0]))[0]
    assert est == pytest.approx(empirical, rel=0.3)


def test_projection_of_gaussian_sample_is_gaussian(rng):
    x = rng.multivariate_normal([1, -1], [[2, 0.5], [0.5, 1]], size=3000)
    g = fit_instrumental(x)
    for a in (np.array([1.0, 0.0]), np.array([0.6, -0.8])):
        mean, var = g.project(a)
        assert stats.kstest(x @ a, stats.norm(mean, math.sqrt(var)).cdf).pvalue > 0.01


@given(seed=st.integers(0, 10_000), lam=st.floats(0.01, 100))
def test_projected_fit_scale_equivariance(seed, lam):
    x = np.random.default_rng(seed).standard_normal((60, 3))
    a = np.array([0.3, -0.5, 0.8])
    k1, k2 = project_and_fit(x, a), project_and_fit(x, lam * a)
    t = x[:5] @ a
    assert np.allclose(k1(t), lam * k2(lam * t), rtol=1e-9)


def test_project_and_fit_rate():
    x = np.column_stack([unit_sd(80, 1)[:, 0], np.zeros(80)])
    assert project_and_fit(x, [1, 0]).bandwidth == pytest.approx(80 ** (-1 / 5))
    assert project_and_fit(x, [1, 0], rate_dim=3).bandwidth == pytest.approx(80 ** (-1 / 7))
    with pytest.raises(ZeroDirection):
        project_and_fit(x, [0, 0])


def test_whitened_kde_is_a_density(rng):
    x = rng.multivariate_normal([0, 0], [[4, 1.9], [1.9, 1]], size=400)
    w = np.linalg.inv(np.linalg.cholesky(np.cov(x.T)))
    k = WhitenedKde.fit(x, w)
    g = np.linspace(-9, 9, 181)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    assert k(pts).sum() * (g[1] - g[0]) ** 2 == pytest.approx(1.0, abs=1e-3)
    assert np.allclose(k.loo()[:3], [WhitenedKde.fit(np.delete(x, i, 0), w).kde.__class__(
        np.delete(x, i, 0) @ w.T, k.kde.bandwidths)(x[i] @ w.T) * k.jacobian for i in range(3)])


def test_kde_eval_dispatch():
    k = Kde1d([0.0], 1.0)
    assert kde_eval(k, 0.0) == pytest.approx(INV_SQRT_2PI)
    with pytest.raises(DimensionMismatch):
        kde_eval(k, np.zeros((2, 2)))


def test_round_trip():
    k = Kde1d([0.1, 0.2, 0.7], 0.25)
    again = Kde1d.from_dict(k.to_dict())
    assert np.array_equal(again.points, k.points) and again.bandwidth == k.bandwidth
