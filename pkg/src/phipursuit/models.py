"""Elliptical instrumental densities and the data-generating distributions.

Only the Gaussian generator ``xi(t) = exp(-t)`` is implemented. The
normaliser is ``c_d / |Sigma|^{1/2}`` so that the generator reproduces the
multivariate normal density exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import gamma as gamma_fn

from .errors import (
    DegenerateConstraint,
    DimensionMismatch,
    ParamError,
    SingularCovariance,
    ZeroDirection,
)

GENERATORS = ("gaussian",)


def _generator_constant(kind: str, d: int) -> float:
    """``c_d`` such that ``c_d * xi(||z||^2 / 2)`` integrates to one."""
    if kind == "gaussian":
        # Gamma(d/2) / (2 pi)^{d/2} / int_0^inf t^{d/2-1} e^{-t} dt
        return gamma_fn(d / 2) / (2 * np.pi) ** (d / 2) / gamma_fn(d / 2)
    raise ParamError(f"unsupported generator {kind!r}")


@dataclass(frozen=True, eq=False)
class EllipticalModel:
    mu: np.ndarray
    sigma: np.ndarray
    generator: str = "gaussian"
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise DimensionMismatch(f"sigma shape {sigma.shape} does not match mean length {mu.size}")
        if self.generator not in GENERATORS:
            raise ParamError(f"unsupported generator {self.generator!r}")
        if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
            raise SingularCovariance("sigma is not symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise SingularCovariance("sigma is not positive definite") from None
        if np.min(np.diag(chol)) <= 1e-12 * max(1.0, np.max(np.abs(np.diag(chol)))):
            raise SingularCovariance("sigma is numerically singular")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @property
    def peak_density(self) -> float:
        return float(np.exp(self.logpdf(self.mu[None, :])[0]))

    def mahalanobis2(self, x):
        x = self._rows(x)
        z = np.linalg.solve(self._chol, (x - self.mu).T)
        return np.sum(z * z, axis=0)

    def logpdf(self, x):
        q = self.mahalanobis2(x)
        c = _generator_constant(self.generator, self.d)
        return np.log(c) - 0.5 * self.log_det - 0.5 * q

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, n: int, rng: np.random.Generator):
        z = rng.standard_normal((n, self.d))
        return self.mu + z @ self._chol.T

    def project(self, a):
        a = _direction(a, self.d)
        return float(a @ self.mu), float(a @ self.sigma @ a)

    def _rows(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :] if self.d > 1 or x.size == 1 else x[:, None]
        if x.shape[-1] != self.d:
            raise DimensionMismatch(f"points have dimension {x.shape[-1]}, model has {self.d}")
        return x

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "generator": self.generator}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mu"]), np.array(d["sigma"]), d.get("generator", "gaussian"))


def _direction(a, d=None):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if d is not None and a.size != d:
        raise DimensionMismatch(f"direction has length {a.size}, expected {d}")
    if not np.any(a != 0):
        raise ZeroDirection("direction must be nonzero")
    return a


def fit_instrumental(sample) -> EllipticalModel:
    """Gaussian model with the sample mean and unbiased sample covariance."""
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < d + 1:
        raise SingularCovariance(f"need at least d + 1 = {d + 1} points, got {n}")
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return EllipticalModel(x.mean(axis=0), 0.5 * (cov + cov.T))


def elliptical_density(model: EllipticalModel, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.size != model.d:
        raise DimensionMismatch(f"point has dimension {x.size}, model has {model.d}")
    vals = model.pdf(x)
    return float(vals[0]) if x.ndim == 1 else vals


def project_params(model: EllipticalModel, a):
    return model.project(a)


def _canonical_sign(v):
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


@dataclass(frozen=True)
class GaussianMarginal:
    """Closed-form law of ``a^T Y`` under a Gaussian model; same evaluation API as ``Kde1d``."""

    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ParamError("variance must be positive")

    def log_evaluate(self, t):
        t = np.asarray(t, dtype=float)
        return -0.5 * (t - self.mean) ** 2 / self.var - 0.5 * np.log(2.0 * np.pi * self.var)

    def evaluate(self, t):
        return np.exp(self.log_evaluate(t))

    __call__ = evaluate

    def cdf(self, t):
        return stats.norm.cdf(t, self.mean, np.sqrt(self.var))

    def to_dict(self):
        return {"kind": "gaussian", "mean": float(self.mean), "var": float(self.var)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["var"])


def marginal_of(model: EllipticalModel, a) -> GaussianMarginal:
    mean, var = model.project(a)
    return GaussianMarginal(float(mean), float(var))


def orthonormal_complement(dirs: np.ndarray) -> np.ndarray:
    """Rows spanning the orthogonal complement of the row space of ``dirs``."""
    dirs = np.atleast_2d(dirs)
    k, d = dirs.shape
    q, _ = np.linalg.qr(np.concatenate([dirs.T, np.eye(d)], axis=1))
    comp = q[:, k:d].T
    return np.array([_canonical_sign(row) for row in comp]).reshape(d - k, d)


@dataclass(frozen=True, eq=False)
class ConditionalModel:
    """Law of the free coordinates ``basis @ x`` given the constrained ones.

    ``model`` is ``None`` when every direction is constrained (point mass).
    """

    model: EllipticalModel | None
    basis: np.ndarray
    constrained: np.ndarray
    values: np.ndarray

    @property
    def point_mass(self) -> bool:
        return self.model is None

    def pdf(self, x):
        """Conditional density at full-space points ``x`` (free part only)."""
        if self.model is None:
            raise DegenerateConstraint("conditional law is a point mass")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.model.pdf(x @ self.basis.T)


def conditional_model(model: EllipticalModel, constrained_dirs, values) -> ConditionalModel:
    """Gaussian conditional of the unconstrained block given ``C x = values``.

    Coordinates are rotated into the orthonormal basis ``[C; U]`` where ``U``
    completes the constrained rows; the result lives in the ``U`` coordinates.
    """
    if model.generator != "gaussian":
        raise ParamError("conditionals are implemented for the gaussian generator only")
    c = np.atleast_2d(np.asarray(constrained_dirs, dtype=float))
    values = np.atleast_1d(np.asarray(values, dtype=float))
    k, d = c.shape
    if d != model.d or values.size != k:
        raise DimensionMismatch("constraint shapes do not match the model")
    if np.linalg.matrix_rank(c) < k:
        raise DegenerateConstraint("constrained directions are linearly dependent")
    s_cc = c @ model.sigma @ c.T
    if np.linalg.cond(s_cc) > 1e12:
        raise DegenerateConstraint("constrained block of sigma is singular")
    if k == d:
        return ConditionalModel(None, np.zeros((0, d)), c, values)
    u = orthonormal_complement(c)
    mu_c, mu_u = c @ model.mu, u @ model.mu
    s_uc = u @ model.sigma @ c.T
    s_uu = u @ model.sigma @ u.T
    gain = np.linalg.solve(s_cc, s_uc.T).T
    mean = mu_u + gain @ (values - mu_c)
    cov = s_uu - gain @ s_uc.T
    return ConditionalModel(EllipticalModel(mean, 0.5 * (cov + cov.T)), u, c, values)


# ---------------------------------------------------------------------------
# data-generating distributions
# ---------------------------------------------------------------------------


class ScenarioDistribution:
    dim: int = 1

    def sample(self, n, rng):  # pragma: no cover - interface
        raise NotImplementedError

    def pdf(self, x):  # pragma: no cover - interface
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Gaussian(ScenarioDistribution):
    mu: Sequence[float]
    sigma: Sequence[Sequence[float]]

    def __post_init__(self):
        object.__setattr__(self, "_model", EllipticalModel(np.atleast_1d(self.mu), np.atleast_2d(self.sigma)))

    @property
    def dim(self):
        return self._model.d

    def sample(self, n, rng):
        return self._model.sample(n, rng)

    def pdf(self, x):
        return self._model.pdf(np.atleast_2d(x) if self.dim > 1 else np.reshape(x, (-1, 1)))

    def cdf(self, t):
        return stats.norm.cdf(t, self._model.mu[0], np.sqrt(self._model.sigma[0, 0]))

    def ppf(self, u):
        return stats.norm.ppf(u, self._model.mu[0], np.sqrt(self._model.sigma[0, 0]))

    def to_dict(self):
        return {"kind": "gaussian", "mu": np.atleast_1d(self.mu).tolist(), "sigma": np.atleast_2d(self.sigma).tolist()}


class _Univariate(ScenarioDistribution):
    dim = 1

    def _frozen(self):
        raise NotImplementedError

    def sample(self, n, rng):
        return self._frozen().rvs(size=(n, 1), random_state=rng)

    def pdf(self, x):
        return self._frozen().pdf(np.reshape(x, -1))

    def cdf(self, t):
        return self._frozen().cdf(t)

    def ppf(self, u):
        return self._frozen().ppf(u)

    def mean(self):
        return float(self._frozen().mean())


@dataclass(frozen=True)
class Gumbel(_Univariate):
    """Maximum-type Gumbel, CDF ``exp(-exp(-(x - loc) / scale))``."""

    loc: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ParamError("gumbel scale must be positive")

    def _frozen(self):
        return stats.gumbel_r(self.loc, self.scale)

    def to_dict(self):
        return {"kind": "gumbel", "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class Exponential(_Univariate):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ParamError("exponential rate must be positive")

    def _frozen(self):
        return stats.expon(scale=1.0 / self.rate)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Laplace(_Univariate):
    loc: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ParamError("laplace scale must be positive")

    def _frozen(self):
        return stats.laplace(self.loc, self.scale)

    def to_dict(self):
        return {"kind": "laplace", "loc": self.loc, "scale": self.scale}


def _normal_margin(m):
    return m if m is not None else Gaussian([0.0], [[1.0]])


@dataclass(frozen=True, eq=False)
class GaussianCopulaPair(ScenarioDistribution):
    """Bivariate law with Gaussian copula ``rho`` and the given margins."""

    rho: float
    margin1: ScenarioDistribution
    margin2: ScenarioDistribution
    dim = 2

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ParamError("copula correlation must satisfy |rho| < 1")

    def sample(self, n, rng):
        z = rng.standard_normal((n, 2))
        z[:, 1] = self.rho * z[:, 0] + np.sqrt(1 - self.rho ** 2) * z[:, 1]
        u = stats.norm.cdf(z)
        return np.column_stack([self.margin1.ppf(u[:, 0]), self.margin2.ppf(u[:, 1])])

    def pdf(self, x):
        x = np.atleast_2d(x)
        u1 = np.clip(self.margin1.cdf(x[:, 0]), 1e-15, 1 - 1e-15)
        u2 = np.clip(self.margin2.cdf(x[:, 1]), 1e-15, 1 - 1e-15)
        z1, z2, r = stats.norm.ppf(u1), stats.norm.ppf(u2), self.rho
        log_c = -0.5 * np.log(1 - r * r) - (r * r * (z1 ** 2 + z2 ** 2) - 2 * r * z1 * z2) / (2 * (1 - r * r))
        return np.exp(log_c) * self.margin1.pdf(x[:, 0]) * self.margin2.pdf(x[:, 1])

    def to_dict(self):
        return {"kind": "gaussian_copula_pair", "rho": self.rho,
                "margin1": self.margin1.to_dict(), "margin2": self.margin2.to_dict()}


@dataclass(frozen=True, eq=False)
class ClaytonCopulaPair(ScenarioDistribution):
    """Bivariate law with a Clayton copula; used as a negative control only."""

    theta: float
    margin1: ScenarioDistribution
    margin2: ScenarioDistribution
    dim = 2

    def __post_init__(self):
        if not self.theta > 0:
            raise ParamError("clayton theta must be positive")

    def sample(self, n, rng):
        # conditional inversion of the Clayton copula
        u = rng.uniform(size=n)
        w = rng.uniform(size=n)
        t = self.theta
        v = (u ** (-t) * (w ** (-t / (1 + t)) - 1) + 1) ** (-1 / t)
        return np.column_stack([self.margin1.ppf(u), self.margin2.ppf(v)])

    def pdf(self, x):
        x = np.atleast_2d(x)
        u = np.clip(self.margin1.cdf(x[:, 0]), 1e-15, 1 - 1e-15)
        v = np.clip(self.margin2.cdf(x[:, 1]), 1e-15, 1 - 1e-15)
        t = self.theta
        c = (1 + t) * (u * v) ** (-1 - t) * (u ** (-t) + v ** (-t) - 1) ** (-2 - 1 / t)
        return c * self.margin1.pdf(x[:, 0]) * self.margin2.pdf(x[:, 1])

    def to_dict(self):
        return {"kind": "clayton_copula_pair", "theta": self.theta,
                "margin1": self.margin1.to_dict(), "margin2": self.margin2.to_dict()}


@dataclass(frozen=True, eq=False)
class Product(ScenarioDistribution):
    """Independent blocks stacked side by side."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ParamError("product needs at least one part")

    @property
    def dim(self):
        return sum(p.dim for p in self.parts)

    def sample(self, n, rng):
        return np.column_stack([np.reshape(p.sample(n, rng), (n, p.dim)) for p in self.parts])

    def pdf(self, x):
        x = np.atleast_2d(x)
        out = np.ones(x.shape[0])
        col = 0
        for p in self.parts:
            out = out * p.pdf(x[:, col:col + p.dim] if p.dim > 1 else x[:, col])
            col += p.dim
        return out

    def to_dict(self):
        return {"kind": "product", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True, eq=False)
class LinearMap(ScenarioDistribution):
    """Law of ``matrix @ Z + shift`` for ``Z`` drawn from ``base``."""

    base: ScenarioDistribution
    matrix: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape != (self.base.dim, self.base.dim):
            raise ParamError("linear map must be square and match the base dimension")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ParamError("linear map must be invertible")
        s = np.zeros(m.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @property
    def dim(self):
        return self.base.dim

    def sample(self, n, rng):
        z = np.reshape(self.base.sample(n, rng), (n, self.dim))
        return z @ self.matrix.T + self.shift

    def pdf(self, x):
        x = np.atleast_2d(x)
        z = np.linalg.solve(self.matrix, (x - self.shift).T).T
        return self.base.pdf(z) / abs(np.linalg.det(self.matrix))

    def to_dict(self):
        return {"kind": "linear_map", "base": self.base.to_dict(),
                "matrix": self.matrix.tolist(), "shift": self.shift.tolist()}


def distribution_from_dict(spec: dict) -> ScenarioDistribution:
    """Build a distribution from its config mapping (``kind`` plus parameters)."""
    kind = spec.get("kind")
    try:
        if kind == "gaussian":
            return Gaussian(spec["mu"], spec["sigma"])
        if kind == "normal":
            return Gaussian([spec.get("mean", 0.0)], [[spec.get("var", 1.0)]])
        if kind == "gumbel":
            return Gumbel(float(spec["loc"]), float(spec["scale"]))
        if kind == "exponential":
            return Exponential(float(spec["rate"]))
        if kind == "laplace":
            return Laplace(float(spec["loc"]), float(spec["scale"]))
        if kind == "gaussian_copula_pair":
            return GaussianCopulaPair(float(spec["rho"]), distribution_from_dict(spec["margin1"]),
                                      distribution_from_dict(spec["margin2"]))
        if kind == "clayton_copula_pair":
            return ClaytonCopulaPair(float(spec["theta"]), distribution_from_dict(spec["margin1"]),
                                     distribution_from_dict(spec["margin2"]))
        if kind == "product":
            return Product(tuple(distribution_from_dict(p) for p in spec["parts"]))
        if kind == "linear_map":
            return LinearMap(distribution_from_dict(spec["base"]), np.array(spec["matrix"], dtype=float),
                             None if spec.get("shift") is None else np.array(spec["shift"], dtype=float))
    except KeyError as exc:
        raise ParamError(f"{kind}: missing parameter {exc.args[0]!r}") from None
    raise ParamError(f"unknown distribution kind {kind!r}")


def draw_scenario(dist: ScenarioDistribution, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ParamError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return np.reshape(np.asarray(dist.sample(n, rng), dtype=float), (n, dist.dim))
