import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from phipursuit.divergence import QuadratureGrid, integrate_on_grid
from phipursuit.errors import DegenerateConstraint, DimensionMismatch, ParamError, SingularCovariance, ZeroDirection
from phipursuit.models import (
    ClaytonCopulaPair,
    EllipticalModel,
    Exponential,
    Gaussian,
    GaussianCopulaPair,
    Gumbel,
    LinearMap,
    Product,
    conditional_model,
    distribution_from_dict,
    draw_scenario,
    elliptical_density,
    fit_instrumental,
    marginal_of,
    orthonormal_complement,
    project_params,
)


def spd(seed, d):
    a = np.random.default_rng(seed).standard_normal((d, d))
    return a @ a.T + d * np.eye(d)


def test_fit_instrumental_standard_normal(rng):
    m = fit_instrumental(rng.standard_normal((10_000, 2)))
    assert np.all(np.abs(m.mu) < 0.05)
    assert np.all(np.abs(m.sigma - np.eye(2)) < 0.1)


def test_fit_instrumental_unbiased_covariance():
    x = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0], [3.0, 5.0]])
    assert np.allclose(fit_instrumental(x).sigma, np.cov(x, rowvar=False, ddof=1))


@pytest.mark.parametrize("x", [np.zeros((2, 2)) + [[0, 0], [1, 1]], np.ones((20, 2))])
def test_fit_instrumental_singular(x):
    with pytest.raises(SingularCovariance):
        fit_instrumental(x)


def test_density_examples():
    assert elliptical_density(EllipticalModel([0.0], [[1.0]]), [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert elliptical_density(EllipticalModel(np.zeros(2), np.eye(2)), [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi))
    s = spd(1, 3)
    mu = np.array([1.0, -2.0, 0.5])
    expected = (2 * math.pi) ** -1.5 / math.sqrt(np.linalg.det(s))
    assert elliptical_density(EllipticalModel(mu, s), mu) == pytest.approx(expected, rel=1e-12)


@given(seed=st.integers(0, 10_000), d=st.integers(1, 4))
def test_density_matches_scipy(seed, d):
    rng = np.random.default_rng(seed)
    s, mu = spd(seed, d), rng.standard_normal(d)
    x = rng.standard_normal((5, d)) * 2
    ours = EllipticalModel(mu, s).pdf(x)
    assert np.allclose(ours, stats.multivariate_normal(mu, s).pdf(x), rtol=1e-10)


def test_density_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        elliptical_density(EllipticalModel(np.zeros(2), np.eye(2)), [0.0, 0.0, 0.0])


@pytest.mark.parametrize(
    "mu, sigma, a, expected",
    [
        ([0, 0], np.eye(2), [1, 0], (0, 1)),
        ([1, 2], np.eye(2), [1, 1], (3, 2)),
        ([0, 0], [[2, 1], [1, 2]], [1, -1], (0, 2)),
    ],
)
def test_project_params(mu, sigma, a, expected):
    assert project_params(EllipticalModel(mu, sigma), a) == pytest.approx(expected)


def test_project_zero_direction():
    with pytest.raises(ZeroDirection):
        project_params(EllipticalModel(np.zeros(2), np.eye(2)), [0, 0])


def test_marginal_of_matches_projection(rng):
    m = EllipticalModel([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
    a = np.array([0.6, 0.8])
    g = marginal_of(m, a)
    t = np.linspace(-4, 4, 7)
    mean, var = m.project(a)
    assert np.allclose(g(t), stats.norm.pdf(t, mean, math.sqrt(var)))
    assert np.allclose(g.cdf(t), stats.norm.cdf(t, mean, math.sqrt(var)))


def test_conditional_independent_coordinates():
    c = conditional_model(EllipticalModel(np.zeros(2), np.eye(2)), [[0, 1]], [5.0])
    assert c.model.mu == pytest.approx([0.0])
    assert c.model.sigma[0, 0] == pytest.approx(1.0)


def test_conditional_bivariate_textbook():
    c = conditional_model(EllipticalModel(np.zeros(2), [[1, 0.5], [0.5, 1]]), [[0, 1]], [2.0])
    # free coordinate is x1 (up to the canonical sign of the complement)
    assert abs(c.basis[0] @ [1, 0]) == pytest.approx(1.0)
    assert c.model.mu[0] * c.basis[0, 0] == pytest.approx(1.0)
    assert c.model.sigma[0, 0] == pytest.approx(0.75)


def test_conditional_point_mass():
    c = conditional_model(EllipticalModel(np.zeros(2), np.eye(2)), np.eye(2), [1.0, 2.0])
    assert c.point_mass
    with pytest.raises(DegenerateConstraint):
        c.pdf([[1.0, 2.0]])


def test_conditional_dependent_rows():
    with pytest.raises(DegenerateConstraint):
        conditional_model(EllipticalModel(np.zeros(3), np.eye(3)), [[1, 0, 0], [2, 0, 0]], [0, 0])


@given(seed=st.integers(0, 10_000))
def test_conditional_matches_schur_complement(seed):
    rng = np.random.default_rng(seed)
    d = 3
    s, mu = spd(seed, d), rng.standard_normal(d)
    c = rng.standard_normal((1, d))
    v = rng.standard_normal(1)
    cond = conditional_model(EllipticalModel(mu, s), c, v)
    # joint law of (c x, U x) and the textbook conditional
    t = np.vstack([c, cond.basis])
    m2, s2 = t @ mu, t @ s @ t.T
    gain = s2[1:, :1] / s2[0, 0]
    assert np.allclose(cond.model.mu, m2[1:] + gain[:, 0] * (v - m2[0]))
    assert np.allclose(cond.model.sigma, s2[1:, 1:] - gain @ s2[:1, 1:])


@given(seed=st.integers(0, 10_000), k=st.integers(1, 3))
def test_orthonormal_complement(seed, k):
    dirs = np.random.default_rng(seed).standard_normal((k, 4))
    u = orthonormal_complement(dirs)
    assert u.shape == (4 - k, 4)
    assert np.allclose(u @ u.T, np.eye(4 - k), atol=1e-12)
    assert np.allclose(u @ dirs.T, 0, atol=1e-10)


def test_exponential_mean():
    x = draw_scenario(Exponential(2.0), 100_000, 1)
    assert abs(x.mean() - 0.5) < 0.01


def test_gumbel_mean():
    x = draw_scenario(Gumbel(-5.0, 1.0), 100_000, 2)
    assert abs(x.mean() - (-5 + np.euler_gamma)) < 0.02


def test_gaussian_copula_correlation():
    x = draw_scenario(GaussianCopulaPair(0.5, Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[1.0]])), 100_000, 3)
    assert abs(np.corrcoef(x.T)[0, 1] - 0.5) < 0.02


def test_gaussian_copula_keeps_margins():
    x = draw_scenario(GaussianCopulaPair(0.5, Gumbel(-1.0, 1.0), Exponential(2.0)), 5000, 4)
    assert stats.kstest(x[:, 0], stats.gumbel_r(-1, 1).cdf).pvalue > 0.01
    assert stats.kstest(x[:, 1], stats.expon(scale=0.5).cdf).pvalue > 0.01


@pytest.mark.parametrize("theta", [1.0, 5.0])
def test_clayton_kendall_tau(theta):
    # Kendall's tau of the Clayton copula is theta / (theta + 2)
    x = draw_scenario(ClaytonCopulaPair(theta, Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[1.0]])), 4000, 5)
    tau = stats.kendalltau(x[:, 0], x[:, 1]).statistic
    assert abs(tau - theta / (theta + 2)) < 0.03


@pytest.mark.parametrize(
    "dist",
    [
        GaussianCopulaPair(0.5, Gumbel(-1.0, 1.0), Gaussian([0.0], [[1.0]])),
        ClaytonCopulaPair(2.0, Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[1.0]])),
        LinearMap(Product((Gumbel(0.0, 1.0), Gaussian([0.0], [[1.0]]))), [[1.0, 1.0], [0.0, 2.0]]),
    ],
)
def test_bivariate_pdfs_integrate_to_one(dist):
    grid = QuadratureGrid((-12, -12), (12, 12), (481, 481))
    assert integrate_on_grid(dist.pdf(grid.points()), grid) == pytest.approx(1.0, abs=2e-3)


def test_linear_map_moments():
    base = Product((Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[4.0]])))
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    x = draw_scenario(LinearMap(base, a, [1.0, 2.0]), 50_000, 6)
    assert np.allclose(x.mean(axis=0), [1, 2], atol=0.05)
    assert np.allclose(np.cov(x.T), a @ np.diag([1, 4]) @ a.T, atol=0.15)


def test_distribution_round_trip():
    dist = LinearMap(Product((Gumbel(-3.0, 4.0), GaussianCopulaPair(0.3, Exponential(1.5), Gaussian([0.0], [[2.0]])))),
                     np.eye(3) + 0.1)
    again = distribution_from_dict(dist.to_dict())
    assert again.to_dict() == dist.to_dict()
    assert np.array_equal(draw_scenario(dist, 50, 7), draw_scenario(again, 50, 7))


@pytest.mark.parametrize("spec", [{"kind": "beta"}, {"kind": "gumbel", "loc": 0}, {"kind": "exponential", "rate": -1}])
def test_distribution_from_dict_errors(spec):
    with pytest.raises(ParamError):
        distribution_from_dict(spec)


def test_draw_is_seeded():
    d = Gumbel(0.0, 1.0)
    assert np.array_equal(draw_scenario(d, 10, 3), draw_scenario(d, 10, 3))
    assert not np.array_equal(draw_scenario(d, 10, 3), draw_scenario(d, 10, 4))
