"""Stopping test, confidence-region membership, copula test and regression."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .dual import DualContext, _variance
from .errors import (
    BasisDegenerate,
    DegeneratePredictor,
    DimensionMismatch,
    ParamError,
    StructureMismatch,
)
from .models import conditional_model, fit_instrumental
from .optimizer import AnnealConfig, anneal_minimize, angle_deg, canonicalize

# The replication threshold: the 0.6 standard-normal quantile printed in the
# original simulation tables, used regardless of alpha.
PAPER_QUANTILE = 0.2533


@dataclass(frozen=True)
class StoppingConfig:
    """How the stopping statistic is formed.

    ``search_fraction`` of the anneal budget goes to the local search for
    the maximising ``c``. ``two_sample_variance`` adds the instrumental-side
    Monte Carlo noise to the normaliser; ``noise_correction`` removes the
    second-order bias caused by noisy density ratios.
    """

    alpha: float = 0.1
    anneal: AnnealConfig = AnnealConfig()
    search_fraction: float = 0.2
    paper_threshold: bool = False
    two_sample_variance: bool = True
    noise_correction: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParamError("alpha must lie in (0, 1)")
        if not 0.0 <= self.search_fraction <= 1.0:
            raise ParamError("search_fraction must lie in [0, 1]")

    @property
    def quantile(self) -> float:
        if self.paper_threshold:
            return PAPER_QUANTILE
        return float(stats.norm.ppf(1.0 - self.alpha / 2.0))

    def to_dict(self):
        out = asdict(self)
        out["anneal"] = self.anneal.to_dict()
        return out


@dataclass(frozen=True)
class TestReport:
    statistic: float
    variance: float
    p_value: float
    quantile: float
    accept_h0: bool
    direction: list | None
    level_index: int
    estimate: float = 0.0
    correction: float = 0.0
    sup_direction: list | None = None
    n: int = 0

    __test__ = False  # not a pytest class

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _report(ctx, value, ev, gamma, c, corr, cfg, level_index):
    var = _variance(ev, ctx, cfg.two_sample_variance)
    stat = float(np.sqrt(ctx.n) * value / np.sqrt(var))
    q = cfg.quantile
    return TestReport(
        statistic=stat,
        variance=var,
        p_value=float(2.0 * stats.norm.sf(abs(stat))),
        quantile=q,
        accept_h0=bool(abs(stat) <= q),
        direction=None if gamma is None else [float(v) for v in gamma],
        level_index=int(level_index),
        estimate=float(ev.value),
        correction=float(corr),
        sup_direction=None if c is None else [float(v) for v in c],
        n=int(ctx.n),
    )


def stopping_test(ctx: DualContext, gamma, cfg: StoppingConfig = StoppingConfig(), *,
                  level_index: int = 0) -> TestReport:
    """Normalised criterion at ``(c_hat, gamma)`` with ``c_hat`` the local maximiser.

    ``gamma=None`` tests the unprojected null ``g = f`` (level 0).
    """
    if gamma is None:
        c = None
    else:
        gamma = canonicalize(gamma)
        c = gamma
        if cfg.search_fraction > 0 and ctx.d > 1:
            local = cfg.anneal.local(cfg.search_fraction, seed=cfg.anneal.seed + 7919 * (level_index + 1))
            res = anneal_minimize(lambda b: -ctx.evaluate(b, gamma).value, ctx.d, local, start=gamma)
            if -res.value > ctx.evaluate(gamma, gamma).value:
                c = res.best
    ev = ctx.evaluate(c, gamma)
    corr = ctx.noise_correction(c) if cfg.noise_correction else 0.0
    return _report(ctx, ev.value + corr, ev, gamma, c, corr, cfg, level_index)


def criterion_statistic(ctx: DualContext, b, cfg: StoppingConfig = StoppingConfig()) -> TestReport:
    """Normalised ``P_n M(b, b)`` without the search over ``c``."""
    b = canonicalize(b)
    ev = ctx.evaluate(b, b)
    corr = ctx.noise_correction(b) if cfg.noise_correction else 0.0
    return _report(ctx, ev.value + corr, ev, b, b, corr, cfg, 0)


def ellipsoid_membership(ctx: DualContext, b, alpha: float = 0.1, *,
                         cfg: StoppingConfig | None = None) -> bool:
    """Whether ``b`` lies in the confidence region: statistic at ``(b, b)`` below the quantile."""
    cfg = StoppingConfig(alpha=alpha) if cfg is None else replace(cfg, alpha=alpha)
    rep = criterion_statistic(ctx, b, cfg)
    return bool(rep.statistic <= rep.quantile)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

def least_squares(data, response: int = 0, predictor: int = 1):
    """Ordinary least squares of one column on another: ``(intercept, slope, correlation)``."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("data must be an m x d matrix")
    yv, xv = x[:, response], x[:, predictor]
    xc = xv - xv.mean()
    sxx = float(xc @ xc)
    if not sxx > 1e-300 * max(1.0, xv.size):
        raise DegeneratePredictor("predictor has zero variance")
    yc = yv - yv.mean()
    slope = float(xc @ yc) / sxx
    syy = float(yc @ yc)
    corr = 0.0 if syy == 0.0 else float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    return float(yv.mean() - slope * xv.mean()), slope, corr


def _slope_se(data, response, predictor, intercept, slope):
    x = np.asarray(data, dtype=float)
    m = x.shape[0]
    resid = x[:, response] - intercept - slope * x[:, predictor]
    xc = x[:, predictor] - x[:, predictor].mean()
    return float(np.sqrt(resid @ resid / max(m - 2, 1) / (xc @ xc)))


@dataclass(frozen=True)
class RegressionReport:
    pursuit_coefficients: list  # [intercept, slope, ...]
    least_squares_coefficients: list
    correlation_pursuit: float
    correlation_data: float
    slope_standard_error: float = 0.0
    response: int = 0
    predictor: int = 1
    moments: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _model_sample(result, data, size, seed):
    from .pursuit import sample_gk

    cfg = result.config
    y, _ = sample_gk(result.model, size, seed, proposal_factor=cfg.proposal_factor,
                     resample=data if cfg.resample_projections else None)
    return y


def regress_via_pursuit(data, result, *, response: int = 0, predictor: int = 1,
                        tolerance_deg: float = 15.0, sample_size: int | None = None,
                        seed: int | None = None) -> RegressionReport:
    """Regression of ``X[response]`` on ``X[predictor]`` read off the pursuit model.

    The coefficients are the Gaussian conditional expectation built from the
    moments of a sample of the final model ``g^(k)``. Every extracted
    direction must lie within ``tolerance_deg`` of a coordinate axis.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise DimensionMismatch("regress_via_pursuit needs m x 2 data")
    if result.model.d != 2:
        raise DimensionMismatch("pursuit result is not bivariate")
    for lv in result.levels:
        worst = min(angle_deg(lv.direction, e) for e in np.eye(2))
        if worst > tolerance_deg:
            raise StructureMismatch(
                f"direction {np.round(lv.direction, 4).tolist()} is {worst:.1f} deg from the nearest axis "
                f"(tolerance {tolerance_deg})")
    ls = least_squares(x, response, predictor)
    size = sample_size or x.shape[0]
    seed = result.config.seed + 104729 if seed is None else seed
    y = _model_sample(result, x, size, seed)
    mean = y.mean(axis=0)
    cov = np.cov(y, rowvar=False, ddof=1)
    var_p = cov[predictor, predictor]
    if not var_p > 0:
        raise DegeneratePredictor("predictor has zero variance under the model")
    slope = cov[response, predictor] / var_p
    intercept = mean[response] - slope * mean[predictor]
    corr = cov[response, predictor] / np.sqrt(cov[response, response] * var_p)
    return RegressionReport(
        pursuit_coefficients=[float(intercept), float(slope)],
        least_squares_coefficients=[ls[0], ls[1]],
        correlation_pursuit=float(np.clip(corr, -1.0, 1.0)),
        correlation_data=ls[2],
        slope_standard_error=_slope_se(x, response, predictor, ls[0], ls[1]),
        response=response,
        predictor=predictor,
        moments={"mean_response": float(mean[response]), "mean_predictor": float(mean[predictor]),
                 "covariance": float(cov[response, predictor]), "variance_predictor": float(var_p),
                 "sample_size": int(size)},
    )


def regress_general(data, result, *, sample_size: int | None = None, seed: int | None = None) -> dict:
    """Regression of the complementary projections on the extracted ones.

    The extracted directions ``A`` are completed by Gram-Schmidt to an
    orthonormal basis ``[A; U]``; ``E[U X | A X = v]`` is the Gaussian
    conditional of the model-sample moments, linear in ``v``.
    Returns ``{"basis", "intercept", "gain"}`` with ``U X ~ intercept + gain @ v``.
    """
    x = np.asarray(data, dtype=float)
    if result.model.k == 0:
        raise StructureMismatch("no extracted direction to regress on")
    a = np.array([lv.direction for lv in result.levels])
    if a.shape[0] >= x.shape[1]:
        raise StructureMismatch("every direction is extracted; nothing left to regress")
    if np.linalg.cond(a @ a.T) > 1e12:
        raise BasisDegenerate("extracted directions are numerically dependent")
    size = sample_size or x.shape[0]
    seed = result.config.seed + 104729 if seed is None else seed
    fitted = fit_instrumental(_model_sample(result, x, size, seed))
    k = a.shape[0]
    base = conditional_model(fitted, a, np.zeros(k))
    gain = np.column_stack([conditional_model(fitted, a, e).model.mu - base.model.mu for e in np.eye(k)])
    return {"directions": a.tolist(), "basis": base.basis.tolist(),
            "intercept": base.model.mu.tolist(), "gain": gain.tolist()}


# ---------------------------------------------------------------------------
# copula goodness of fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CopulaReport:
    basis: np.ndarray
    final_test: TestReport
    verdict: bool
    level_tests: list
    condition_number: float

    def to_dict(self):
        return {
            "basis": np.asarray(self.basis).tolist(),
            "final_test": self.final_test.to_dict(),
            "verdict": bool(self.verdict),
            "level_tests": [t.to_dict() for t in self.level_tests],
            "condition_number": float(self.condition_number),
        }


def copula_gof(data, cfg=None, *, result=None) -> CopulaReport:
    """Test whether the copula of ``data`` in the extracted basis is the instrumental one.

    Runs exactly ``d`` pursuit levels; the verdict is the last level's test.
    A precomputed forced ``result`` may be passed in to avoid rerunning.
    """
    from .pursuit import PursuitConfig, run_pursuit

    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("data must be an m x d matrix")
    d = x.shape[1]
    if result is None:
        cfg = PursuitConfig() if cfg is None else cfg
        result = run_pursuit(x, replace(cfg, max_k=d, force_levels=True))
    if result.model.k != d:
        raise StructureMismatch(f"copula test needs {d} levels, got {result.model.k}")
    basis = np.array([lv.direction for lv in result.levels])
    cond = float(np.linalg.cond(basis))
    if not cond <= 1e6:
        raise BasisDegenerate(f"extracted basis has condition number {cond:.3g}")
    tests = [lv.test for lv in result.levels]
    return CopulaReport(basis, tests[-1], bool(tests[-1].accept_h0), tests, cond)
