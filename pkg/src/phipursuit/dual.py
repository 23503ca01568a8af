"""Empirical dual estimate of the criterion and its ingredients.

A :class:`DualContext` freezes everything that does not depend on the
direction: the truncated data sample ``x`` (density ``f``), the truncated
instrumental sample ``y`` (density ``g``), and the joint density values
``f_n`` and ``g`` at both samples. Per-direction quantities (projected
density values) come from a marginal provider and are cached.

With ``r_c(x) = g(x) f_c(c'x) / (f(x) g_c(c'x))`` and ``w_a = f_a / g_a``
the estimate is

    P_n M(c, a) = mean_y[ phi'(r_c(Y)) w_a(a'Y) ] - mean_x[ phi*(phi'(r_c(X))) ]

Passing ``None`` for both directions gives the unprojected version
``r = g / f``, ``w = 1`` used for the level-0 null test.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .divergence import DivergenceSpec
from .errors import DimensionMismatch, FloorViolation, ParamError, TooFewRetained, ZeroVariance
from .kde import KdeNd, WhitenedKde, project_and_fit, scott_bandwidth
from .optimizer import canonicalize


@dataclass(frozen=True)
class TruncationConfig:
    """Truncation sequence ``theta_m = scale * m ** -nu``.

    ``relative_floor`` sets ``scale`` as a fraction of the instrumental
    peak density, which keeps the threshold meaningful for data of any
    spread. ``relative_floor=None`` gives the bare ``m ** -nu``.
    ``nu=None`` picks the midpoint ``0.5 / (4 + d)`` of the admissible range.
    """

    nu: float | None = None
    min_retained: int = 10
    relative_floor: float | None = 0.03

    def __post_init__(self):
        if self.nu is not None and not self.nu > 0:
            raise ParamError("nu must be positive")
        if self.min_retained < 2:
            raise ParamError("min_retained must be at least 2")
        if self.relative_floor is not None and not self.relative_floor > 0:
            raise ParamError("relative_floor must be positive")

    def nu_for(self, d) -> float:
        return 0.5 / (4 + d) if self.nu is None else self.nu

    def check_dimension(self, d):
        if self.nu is not None and not self.nu < 1.0 / (4 + d):
            raise ParamError(f"nu must lie in (0, 1/(4+d)) = (0, {1.0 / (4 + d):.4g}) for d={d}")

    def scale(self, peak_density: float) -> float:
        return 1.0 if self.relative_floor is None else self.relative_floor * peak_density

    def to_dict(self):
        return {"nu": self.nu, "min_retained": self.min_retained, "relative_floor": self.relative_floor}


class Truncation(NamedTuple):
    kept_x: np.ndarray
    kept_y: np.ndarray
    theta: float


def truncation_threshold(m: int, nu: float, scale: float = 1.0) -> float:
    return scale * float(m) ** (-nu)


def truncate(sample_x, sample_y, f_kde, g_side: Callable, cfg: TruncationConfig, *,
             density_scale: float = 1.0, f_x=None, g_y=None) -> Truncation:
    """Indices of the points whose density estimates clear ``theta``.

    ``f_x`` and ``g_y`` may carry precomputed values of ``f_kde`` at the
    data and ``g_side`` at the instrumental sample. Without them ``f_kde``
    is evaluated leave-one-out when it was fitted on ``sample_x``.
    """
    x = np.asarray(sample_x, dtype=float)
    y = np.asarray(sample_y, dtype=float)
    m = x.shape[0]
    if m < 2:
        raise TooFewRetained("truncation needs at least two points")
    theta = truncation_threshold(m, cfg.nu_for(x.shape[1] if x.ndim == 2 else 1), density_scale)
    if f_x is None:
        f_x = f_kde.loo() if isinstance(f_kde, KdeNd) and f_kde.points is x else f_kde(x)
    if g_y is None:
        g_y = g_side(y)
    kept_x = np.flatnonzero(np.asarray(f_x) >= theta)
    kept_y = np.flatnonzero(np.asarray(g_y) >= theta)
    if kept_x.size < cfg.min_retained or kept_y.size < cfg.min_retained:
        raise TooFewRetained(
            f"kept {kept_x.size} data and {kept_y.size} instrumental points, "
            f"need {cfg.min_retained} (theta={theta:.4g})"
        )
    return Truncation(kept_x, kept_y, theta)


class Projected(NamedTuple):
    """Projected density values at both samples for one direction.

    ``v_x``/``v_y`` hold the estimated relative variance of the 1-d factor
    ``f_a / g_a`` (zero for exact marginals).
    """

    fa_x: np.ndarray
    fa_y: np.ndarray
    ga_x: np.ndarray
    ga_y: np.ndarray
    floor: float
    v_x: np.ndarray | float = 0.0
    v_y: np.ndarray | float = 0.0


class KdeMarginals:
    """1-d kernel estimates of ``f_a`` (from ``x``) and ``g_a`` (from ``y``).

    Each estimate is evaluated leave-one-out on its own sample. The
    per-direction floor is ``scale`` times the largest ``g_a`` value on the
    instrumental sample, or ``scale`` itself when ``relative`` is false.
    """

    def __init__(self, x, y, scale, relative=True, rate_dim=1):
        self.x = x
        self.y = y
        self.scale = scale
        self.relative = relative
        self.rate_dim = rate_dim

    def fit(self, a):
        return (project_and_fit(self.x, a, rate_dim=self.rate_dim),
                project_and_fit(self.y, a, rate_dim=self.rate_dim))

    def floor(self, ga_y):
        return self.scale * float(ga_y.max()) if self.relative else self.scale

    def __call__(self, a) -> Projected:
        px, py = self.x @ a, self.y @ a
        fk, gk = self.fit(a)
        fa_x = np.maximum(fk.loo(), 0.0)
        ga_y = np.maximum(gk.loo(), 0.0)
        v_x = fk.relative_variance(px, loo=True) + gk.relative_variance(px)
        v_y = fk.relative_variance(py) + gk.relative_variance(py, loo=True)
        return Projected(fa_x, fk.evaluate(py), gk.evaluate(px), ga_y, self.floor(ga_y), v_x, v_y)


class ExactMarginals:
    """Projected densities from callables ``f_a(a, t)`` and ``g_a(a, t)``."""

    def __init__(self, x, y, f_a, g_a, floor=0.0):
        self.x, self.y = x, y
        self.f_a, self.g_a = f_a, g_a
        self.floor = floor

    def __call__(self, a) -> Projected:
        px, py = self.x @ a, self.y @ a
        return Projected(self.f_a(a, px), self.f_a(a, py), self.g_a(a, px), self.g_a(a, py), self.floor)


class Evaluation(NamedTuple):
    value: float
    per_point_x: np.ndarray  # -phi*(phi'(r_c(X_i))), zero where masked
    per_point_y: np.ndarray  # phi'(r_c(Y_i)) w_a(Y_i), zero where masked


@dataclass(eq=False)
class DualContext:
    """Direction-independent state of the dual estimate at one level.

    ``v_x``/``v_y`` are the estimated relative variances of the joint ratio
    ``g / f`` at the two samples; they feed :meth:`noise_correction`.
    """

    spec: DivergenceSpec
    x: np.ndarray
    y: np.ndarray
    f_x: np.ndarray
    f_y: np.ndarray
    g_x: np.ndarray
    g_y: np.ndarray
    theta: float
    marginals: Callable[[np.ndarray], Projected]
    f_density: Callable | None = None
    g_density: Callable | None = None
    v_x: np.ndarray | None = None
    v_y: np.ndarray | None = None
    cache_size: int = 64
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        if not self.spec.differentiable:
            raise ParamError(f"{self.spec.kind} cannot drive the dual estimate")
        if self.x.ndim != 2 or self.y.ndim != 2 or self.x.shape[1] != self.y.shape[1]:
            raise DimensionMismatch("data and instrumental samples must be n x d with equal d")
        for name in ("f_x", "g_x", "f_y", "g_y"):
            if np.any(~(getattr(self, name) > 0)):
                raise FloorViolation(f"non-positive stored density in {name}")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def n_y(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def projected(self, a) -> Projected:
        a = canonicalize(a)
        key = a.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        out = self.marginals(a)
        self._cache[key] = out
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return out

    # -- ratio pieces ------------------------------------------------------

    def ratios(self, c):
        """``(r_c(X), r_c(Y), mask_x, mask_y)``; masked entries are set to 1."""
        if c is None:
            return self.g_x / self.f_x, self.g_y / self.f_y, np.ones(self.n, bool), np.ones(self.n_y, bool)
        p = self.projected(c)
        mx = (p.ga_x >= p.floor) & (p.ga_x > 0) & (p.fa_x > 0)
        my = (p.ga_y >= p.floor) & (p.ga_y > 0) & (p.fa_y > 0)
        rx = np.ones(self.n)
        ry = np.ones(self.n_y)
        rx[mx] = self.g_x[mx] * p.fa_x[mx] / (self.f_x[mx] * p.ga_x[mx])
        ry[my] = self.g_y[my] * p.fa_y[my] / (self.f_y[my] * p.ga_y[my])
        return rx, ry, mx, my

    def weights(self, a):
        """``w_a(Y) = f_a / g_a`` on the instrumental sample, with its mask."""
        if a is None:
            return np.ones(self.n_y), np.ones(self.n_y, bool)
        p = self.projected(a)
        my = (p.ga_y >= p.floor) & (p.ga_y > 0)
        w = np.zeros(self.n_y)
        w[my] = p.fa_y[my] / p.ga_y[my]
        return w, my

    def evaluate(self, c, a) -> Evaluation:
        rx, ry, mx, my = self.ratios(c)
        w, mw = self.weights(a)
        keep_y = my & mw
        px = np.zeros(self.n)
        px[mx] = -self.spec.conjugate(rx[mx])
        py = np.zeros(self.n_y)
        py[keep_y] = self.spec.phi_prime(ry[keep_y]) * w[keep_y]
        return Evaluation(float(py.mean() + px.mean()), px, py)

    def noise_correction(self, c) -> float:
        """Second-order bias of ``P_n M(c, c)`` caused by noisy ratios.

        Expanding ``phi'`` and ``phi*(phi')`` around 1 (every supported
        ``phi`` has ``phi''(1) = 1``) with relative errors ``D`` in the
        joint factor and ``P`` in the projected factor, the bias of the
        estimate is ``-E[D^2]/2 + E[P^2]/2``; the cross terms cancel when the
        weight uses the same projected estimates. The returned value is the
        amount to add to remove that bias.
        """
        if self.v_x is None or self.v_y is None:
            return 0.0
        _, _, mx, my = self.ratios(c)
        vd = np.concatenate([self.v_x[mx], self.v_y[my]])
        out = 0.5 * float(np.mean(vd[np.isfinite(vd)])) if vd.size else 0.0
        if c is not None:
            p = self.projected(c)
            vp = np.concatenate([np.broadcast_to(p.v_x, mx.shape)[mx], np.broadcast_to(p.v_y, my.shape)[my]])
            if vp.size:
                out -= 0.5 * float(np.mean(vp[np.isfinite(vp)]))
        return out


def build_context(spec, x, y, *, g_eval=None, truncation: TruncationConfig = TruncationConfig(),
                  density_scale=1.0, f_eval=None, marginals=None, pair=True,
                  whiten=None, matched=False) -> DualContext:
    """Truncate both samples and assemble a :class:`DualContext`.

    ``f`` is always a kernel estimate of ``x`` unless ``f_eval`` supplies an
    exact density. ``g`` is a kernel estimate of ``y`` unless ``g_eval``
    supplies the instrumental density. Kernel estimates are evaluated
    leave-one-out at their own sample. ``marginals`` may replace the
    projected kernel estimates (see :class:`ExactMarginals`).

    ``theta = density_scale * m ** -nu``. With ``pair`` both samples are cut
    to the same retained size by keeping the first points.

    ``whiten`` (a d x d matrix) fits the joint kernel estimates in the
    coordinates ``x @ whiten.T``; with ``matched`` the 1-d estimates use the
    joint rate ``m ** (-1 / (4 + d))`` so that their smoothing along each
    direction agrees with the joint estimates.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise DimensionMismatch("data and instrumental samples must be n x d with equal d")
    truncation.check_dimension(x.shape[1])
    zeros_x, zeros_y = np.zeros(x.shape[0]), np.zeros(y.shape[0])
    v_x, v_y = zeros_x.copy(), zeros_y.copy()
    if f_eval is None:
        f_kde = KdeNd(x, scott_bandwidth(x)) if whiten is None else WhitenedKde.fit(x, whiten)
        f_x, f_y = f_kde.loo(), f_kde(y)
        v_x += f_kde.relative_variance(x, loo=True)
        v_y += f_kde.relative_variance(y)
        f_eval = f_kde
    else:
        f_x, f_y = np.asarray(f_eval(x), float), np.asarray(f_eval(y), float)
    if g_eval is None:
        g_kde = KdeNd(y, scott_bandwidth(y)) if whiten is None else WhitenedKde.fit(y, whiten)
        g_x, g_y = g_kde(x), g_kde.loo()
        v_x += g_kde.relative_variance(x)
        v_y += g_kde.relative_variance(y, loo=True)
        g_eval = g_kde
    else:
        g_x, g_y = np.asarray(g_eval(x), float), np.asarray(g_eval(y), float)
    tr = truncate(x, y, None, None, truncation, density_scale=density_scale, f_x=f_x, g_y=g_y)
    # the ratios also divide by f at the instrumental points
    kept_y = tr.kept_y[f_y[tr.kept_y] >= tr.theta]
    kept_x = tr.kept_x[g_x[tr.kept_x] > 0]
    if min(kept_x.size, kept_y.size) < truncation.min_retained:
        raise TooFewRetained(f"kept {kept_x.size} data and {kept_y.size} instrumental points")
    if pair:
        n = min(kept_x.size, kept_y.size)
        kept_x, kept_y = kept_x[:n], kept_y[:n]
    xs, ys = x[kept_x], y[kept_y]
    rel = float(x.shape[0]) ** (-truncation.nu_for(x.shape[1]))
    if marginals is None:
        rate = x.shape[1] if matched else 1
        if truncation.relative_floor is None:
            marginals = KdeMarginals(xs, ys, rel, relative=False, rate_dim=rate)
        else:
            marginals = KdeMarginals(xs, ys, truncation.relative_floor * rel, rate_dim=rate)
    elif isinstance(marginals, ExactMarginals):
        marginals = ExactMarginals(xs, ys, marginals.f_a, marginals.g_a, marginals.floor)
    return DualContext(spec, xs, ys, f_x[kept_x], f_y[kept_y], g_x[kept_x], g_y[kept_y],
                       tr.theta, marginals, f_density=f_eval, g_density=g_eval,
                       v_x=v_x[kept_x], v_y=v_y[kept_y])


def density_ratio(ctx: DualContext, b, x) -> np.ndarray:
    """``g(x) f_b(b'x) / (f(x) g_b(b'x))`` at arbitrary points ``x``.

    Raises :class:`FloorViolation` when a factor falls below its floor,
    i.e. for points that truncation would have removed.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != ctx.d:
        raise DimensionMismatch(f"points have dimension {x.shape[1]}, context has {ctx.d}")
    if ctx.f_density is None or ctx.g_density is None:
        raise ParamError("context carries no joint density callables")
    b = canonicalize(b)
    m = ctx.marginals
    if isinstance(m, KdeMarginals):
        fk, gk = m.fit(b)
        fb, gb = fk(x @ b), gk(x @ b)
        floor = m.floor(np.maximum(gk.loo(), 0.0))
    else:
        fb, gb = m.f_a(b, x @ b), m.g_a(b, x @ b)
        floor = m.floor
    f_val = np.asarray(ctx.f_density(x), dtype=float)
    g_val = np.asarray(ctx.g_density(x), dtype=float)
    if np.any(f_val < ctx.theta) or np.any(gb < floor) or np.any(~(fb > 0)) or np.any(~(gb > 0)):
        raise FloorViolation("a density factor is below its truncation floor")
    return g_val * fb / (f_val * gb)


def pn_m(ctx: DualContext, c, a):
    """``(P_n M(c, a), per-point X-side terms)``."""
    ev = ctx.evaluate(c, a)
    return ev.value, ev.per_point_x


def variance_m(ctx: DualContext, c, a, *, two_sample: bool = False) -> float:
    """Sample variance of the X-side per-point terms of ``M``.

    With ``two_sample`` the result is the variance of the estimate scaled
    by ``n``: ``var_x + (n / n_y) var_y``, which also counts the Monte Carlo
    noise of the instrumental-side average.
    """
    ev = ctx.evaluate(c, a)
    return _variance(ev, ctx, two_sample)


def _variance(ev: Evaluation, ctx: DualContext, two_sample: bool) -> float:
    if ctx.n < 2:
        raise ZeroVariance("variance needs at least two points")
    v = float(np.var(ev.per_point_x, ddof=1))
    if two_sample:
        v += ctx.n / ctx.n_y * float(np.var(ev.per_point_y, ddof=1))
    if not v > 1e-300:
        raise ZeroVariance("per-point contributions are constant")
    return v


def bootstrap_se(ctx: DualContext, c, a, *, reps: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of ``P_n M(c, a)`` holding densities fixed.

    Resamples the per-point terms of both averages independently.
    """
    ev = ctx.evaluate(c, a)
    rng = np.random.default_rng(seed)
    ix = rng.integers(0, ctx.n, size=(reps, ctx.n))
    iy = rng.integers(0, ctx.n_y, size=(reps, ctx.n_y))
    vals = ev.per_point_x[ix].mean(axis=1) + ev.per_point_y[iy].mean(axis=1)
    return float(vals.std(ddof=1))
