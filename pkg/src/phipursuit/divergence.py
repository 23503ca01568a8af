"""Convex functions of the supported Phi-divergences and a quadrature oracle.

Every member is normalised so that ``phi(1) = 0``. The conjugate composite
``phi*(phi'(x))`` is computed through the Fenchel identity
``x * phi'(x) - phi(x)``, which is exact for strictly convex, differentiable
``phi`` and keeps one code path for all members.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, ParamError, SupportError

KINDS = ("relative_entropy", "hellinger", "chi_squared", "power", "l1")

_ALIASES = {
    "kl": "relative_entropy",
    "relative_entropy": "relative_entropy",
    "kullback": "relative_entropy",
    "hellinger": "hellinger",
    "chi2": "chi_squared",
    "chi_squared": "chi_squared",
    "power": "power",
    "cressie_read": "power",
    "l1": "l1",
}


@dataclass(frozen=True)
class DivergenceSpec:
    """Which convex ``phi`` is in force.

    ``gamma`` is only meaningful for the power family. ``l1`` is registered
    for completeness but has no derivative at 1, so it cannot drive the dual
    estimator.
    """

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParamError(f"unknown divergence kind {self.kind!r}")
        if self.kind == "power":
            if self.gamma is None:
                raise ParamError("power divergence requires gamma")
            if self.gamma in (0.0, 1.0):
                raise ParamError("power divergence requires gamma not in {0, 1}")
        elif self.gamma is not None:
            raise ParamError(f"gamma is only used by the power family, not {self.kind}")

    @classmethod
    def from_name(cls, name: str, gamma: float | None = None) -> "DivergenceSpec":
        try:
            kind = _ALIASES[name.lower()]
        except KeyError:
            raise ParamError(f"unknown divergence name {name!r}") from None
        return cls(kind, float(gamma) if kind == "power" and gamma is not None else None)

    @property
    def name(self) -> str:
        return {"relative_entropy": "kl", "chi_squared": "chi2"}.get(self.kind, self.kind)

    @property
    def differentiable(self) -> bool:
        return self.kind != "l1"

    def to_dict(self) -> dict:
        return {"name": self.name, "gamma": self.gamma}

    # -- vectorised evaluations -------------------------------------------

    def phi(self, x):
        x = _check_nonneg(x)
        k = self.kind
        if k == "relative_entropy":
            with np.errstate(divide="ignore", invalid="ignore"):
                xlogx = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
            return xlogx - x + 1.0
        if k == "hellinger":
            return 2.0 * (np.sqrt(x) - 1.0) ** 2
        if k == "chi_squared":
            return 0.5 * (x - 1.0) ** 2
        if k == "l1":
            return np.abs(x - 1.0)
        g = self.gamma
        if g < 0 and np.any(x == 0):
            raise DomainError(f"phi(0) is infinite for power gamma={g}")
        return (x ** g - g * x + g - 1.0) / (g * (g - 1.0))

    def phi_prime(self, x):
        x = _check_nonneg(x)
        k = self.kind
        if k == "l1":
            raise DomainError("the L1 divergence is not differentiable at 1")
        if k in ("relative_entropy", "hellinger") and np.any(x == 0):
            raise DomainError(f"phi' of {k} is undefined at 0")
        if k == "relative_entropy":
            return np.log(x)
        if k == "hellinger":
            return 2.0 - 2.0 / np.sqrt(x)
        if k == "chi_squared":
            return x - 1.0
        g = self.gamma
        if g < 1 and np.any(x == 0):
            raise DomainError(f"phi' is unbounded at 0 for power gamma={g}")
        return (x ** (g - 1.0) - 1.0) / (g - 1.0)

    def conjugate(self, x):
        """``phi*(phi'(x))`` via the Fenchel identity."""
        x = np.asarray(x, dtype=float)
        return x * self.phi_prime(x) - self.phi(x)


def _check_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError("divergence functions are defined on [0, inf)")
    return x


def eval_phi(spec: DivergenceSpec, x):
    """Return ``(phi(x), phi'(x), phi*(phi'(x)))``.

    Scalars in, scalars out; arrays are handled elementwise.
    """
    phi = spec.phi(x)
    dphi = spec.phi_prime(x)
    conj = np.asarray(x, dtype=float) * dphi - phi
    if np.ndim(phi) == 0:
        return float(phi), float(dphi), float(conj)
    return phi, dphi, conj


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor grid for composite Simpson quadrature; ``counts`` should be odd."""

    lows: Sequence[float]
    highs: Sequence[float]
    counts: Sequence[int]

    @classmethod
    def line(cls, low, high, count=4001):
        return cls((low,), (high,), (count,))

    @property
    def dim(self):
        return len(self.counts)

    def axes(self):
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lows, self.highs, self.counts)]

    def points(self):
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def integrate_on_grid(values, grid: QuadratureGrid) -> float:
    vals = np.asarray(values, dtype=float).reshape(tuple(grid.counts))
    for ax in reversed(grid.axes()):
        vals = simpson(vals, x=ax, axis=-1)
    return float(vals)


def divergence_quadrature(
    spec: DivergenceSpec,
    q: Callable,
    p: Callable,
    grid: QuadratureGrid,
    *,
    support_tol: float = 1e-300,
) -> float:
    """``integral phi(q/p) p dx`` by deterministic quadrature.

    ``q`` and ``p`` take an ``(N, d)`` array of points and return densities.
    Test oracle only; the pursuit loop never calls this.
    """
    pts = grid.points()
    qv = np.asarray(q(pts), dtype=float).reshape(-1)
    pv = np.asarray(p(pts), dtype=float).reshape(-1)
    dead = pv <= support_tol
    if np.any(dead & (qv > support_tol)):
        raise SupportError("q is not absolutely continuous with respect to p on the grid")
    ratio = np.where(dead, 1.0, qv / np.where(dead, 1.0, pv))
    integrand = np.where(dead, 0.0, spec.phi(ratio) * pv)
    return integrate_on_grid(integrand, grid)
