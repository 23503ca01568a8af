"""The pursuit loop: update the instrumental density one direction at a time.

Level ``k`` replaces the law of ``a_k' X`` under the current model by the
kernel estimate of the data projection:

    g_k(x) = g_{k-1}(x) * f_{a_k}(a_k' x) / [g_{k-1}]_{a_k}(a_k' x)

where the denominator is a kernel estimate built from a sample of
``g_{k-1}``. The loop stops once the stopping test accepts.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .divergence import DivergenceSpec
from .dual import DualContext, TruncationConfig, bootstrap_se, build_context
from .errors import DegenerateWeights, DimensionMismatch, ParamError, PursuitError, StepError
from .inference import StoppingConfig, TestReport, stopping_test
from .kde import Kde1d, project_and_fit
from .models import EllipticalModel, GaussianMarginal, fit_instrumental, marginal_of
from .optimizer import AnnealConfig, anneal_minimize, canonicalize


@dataclass(frozen=True, eq=False)
class PursuitLevel:
    """One multiplicative update ``numerator / max(denominator, floor)`` along ``direction``.

    Level 1 divides by the closed-form Gaussian marginal of the base model;
    deeper levels divide by a kernel estimate built from a model sample,
    floored so that the ratio stays bounded beyond that sample's range.
    """

    direction: np.ndarray
    numerator: Kde1d
    denominator: Kde1d | GaussianMarginal
    divergence_estimate: float
    test: TestReport | None = None
    diagnostics: dict = field(default_factory=dict)
    floor: float = 0.0

    def log_denominator(self, t):
        out = self.denominator.log_evaluate(t)
        return np.maximum(out, np.log(self.floor)) if self.floor > 0 else out

    def log_ratio(self, x):
        t = np.atleast_2d(x) @ self.direction
        return self.numerator.log_evaluate(t) - self.log_denominator(t)

    def to_dict(self):
        return {
            "direction": [float(v) for v in self.direction],
            "numerator": self.numerator.to_dict(),
            "denominator": self.denominator.to_dict(),
            "divergence_estimate": float(self.divergence_estimate),
            "floor": float(self.floor),
            "test": None if self.test is None else self.test.to_dict(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        den = d["denominator"]
        return cls(
            np.array(d["direction"], dtype=float),
            Kde1d.from_dict(d["numerator"]),
            GaussianMarginal.from_dict(den) if den.get("kind") == "gaussian" else Kde1d.from_dict(den),
            d["divergence_estimate"],
            None if d.get("test") is None else TestReport.from_dict(d["test"]),
            d.get("diagnostics", {}),
            d.get("floor", 0.0),
        )


@dataclass(frozen=True, eq=False)
class PursuitModel:
    base: EllipticalModel
    levels: tuple = ()

    @property
    def k(self):
        return len(self.levels)

    @property
    def d(self):
        return self.base.d

    def with_level(self, level: PursuitLevel) -> "PursuitModel":
        return PursuitModel(self.base, self.levels + (level,))

    def truncated(self, k) -> "PursuitModel":
        return PursuitModel(self.base, self.levels[:k])

    def log_eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise DimensionMismatch(f"points have dimension {x.shape[1]}, model has {self.d}")
        out = self.base.logpdf(x)
        for lv in self.levels:
            out = out + lv.log_ratio(x)
        return out

    def to_dict(self):
        return {"base": self.base.to_dict(), "levels": [lv.to_dict() for lv in self.levels]}

    @classmethod
    def from_dict(cls, d):
        return cls(EllipticalModel.from_dict(d["base"]), tuple(PursuitLevel.from_dict(v) for v in d["levels"]))


def eval_gk(model: PursuitModel, x):
    """Base density times the product of the level ratios."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = np.exp(model.log_eval(x))
    return float(out[0]) if single else out


def _replace_projection(model: EllipticalModel, y, a, t):
    # shift along Sigma a: the Gaussian conditional given a'Y does not depend on a'Y
    sa = model.sigma @ a
    return y + np.outer(t - y @ a, sa / (a @ sa))


def sample_gk(model: PursuitModel, n: int, seed, *, proposal_factor: int = 10, resample=None):
    """Draw ``n`` points from the level-``k`` model.

    Level 0 is plain Gaussian sampling and level 1 exact conditional
    replacement. Deeper models use sampling-importance-resampling from the
    level-1 sampler; the weights also carry the factor ``[g]_{a_1} /
    denominator_1`` (identically 1 for the closed-form level-1 denominator)
    so that the resampled law is exactly ``eval_gk``.
    With ``resample`` (the data matrix) the level-1 projections are drawn
    from the data projections instead of the level-1 numerator; the weights
    are unchanged because they do not involve the numerator.
    Returns ``(sample, diagnostics)``.
    """
    if n < 1:
        raise ParamError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    base = model.base
    if model.k == 0:
        return base.sample(n, rng), {"method": "gaussian", "ess": float(n), "proposals": n}
    first = model.levels[0]
    a = first.direction
    n_prop = n if model.k == 1 else proposal_factor * n
    y = base.sample(n_prop, rng)
    if resample is None:
        t = first.numerator.sample(n_prop, rng)
    else:
        t = rng.choice(np.asarray(resample, dtype=float) @ a, size=n_prop, replace=True)
    y = _replace_projection(base, y, a, t)
    if model.k == 1:
        return y, {"method": "conditional", "ess": float(n), "proposals": n}
    ta = y @ a
    # zero when the level-1 denominator is the exact Gaussian marginal
    logw = marginal_of(base, a).log_evaluate(ta) - first.log_denominator(ta)
    for lv in model.levels[1:]:
        logw = logw + lv.log_ratio(y)
    w = np.exp(logw - logw.max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    diag = {"method": "sir", "ess": ess, "proposals": n_prop}
    if ess < n / 10:
        raise DegenerateWeights(f"effective sample size {ess:.1f} is below n/10 = {n / 10:.1f}")
    idx = rng.choice(n_prop, size=n, replace=True, p=w / w.sum())
    return y[idx], diag


@dataclass(frozen=True)
class PursuitConfig:
    spec: DivergenceSpec = DivergenceSpec("relative_entropy")
    max_k: int | None = None
    alpha: float = 0.1
    truncation: TruncationConfig = TruncationConfig()
    anneal: AnnealConfig = AnnealConfig()
    instrumental_sample_size: int | None = None
    seed: int = 0
    paper_threshold: bool = False
    search_fraction: float = 0.2
    proposal_factor: int = 10
    force_levels: bool = False
    bootstrap_reps: int = 200
    sphere: bool = True
    matched_marginals: bool = True
    resample_projections: bool = True
    null_gate: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParamError("alpha must lie in (0, 1)")
        if self.max_k is not None and self.max_k < 0:
            raise ParamError("max_k must be non-negative")
        if self.instrumental_sample_size is not None and self.instrumental_sample_size < 2:
            raise ParamError("instrumental_sample_size must be at least 2")

    def stopping(self, seed) -> StoppingConfig:
        return StoppingConfig(alpha=self.alpha, anneal=replace(self.anneal, seed=seed),
                              search_fraction=self.search_fraction,
                              paper_threshold=self.paper_threshold)

    def to_dict(self):
        return {
            "divergence": self.spec.to_dict(),
            "max_k": self.max_k,
            "alpha": self.alpha,
            "truncation": self.truncation.to_dict(),
            "anneal": self.anneal.to_dict(),
            "instrumental_sample_size": self.instrumental_sample_size,
            "seed": self.seed,
            "paper_threshold": self.paper_threshold,
            "search_fraction": self.search_fraction,
            "proposal_factor": self.proposal_factor,
            "force_levels": self.force_levels,
            "bootstrap_reps": self.bootstrap_reps,
            "sphere": self.sphere,
            "matched_marginals": self.matched_marginals,
            "resample_projections": self.resample_projections,
            "null_gate": self.null_gate,
        }


def _level_seeds(seed, k):
    s = np.random.SeedSequence([int(seed), int(k)]).generate_state(3)
    return int(s[0]), int(s[1]), int(s[2])


def level_context(model: PursuitModel, data, cfg: PursuitConfig, k: int):
    """Instrumental sample of ``g_{k-1}`` and the dual context built on it."""
    sample_seed, _, _ = _level_seeds(cfg.seed, k)
    m = data.shape[0]
    size = cfg.instrumental_sample_size or m
    y, diag = sample_gk(model, size, sample_seed, proposal_factor=cfg.proposal_factor,
                        resample=data if cfg.resample_projections else None)
    whiten = np.linalg.inv(np.linalg.cholesky(model.base.sigma)) if cfg.sphere else None
    ctx = build_context(cfg.spec, data, y, truncation=cfg.truncation,
                        density_scale=cfg.truncation.scale(model.base.peak_density),
                        whiten=whiten, matched=cfg.matched_marginals)
    diag = dict(diag, retained=int(ctx.n), theta=float(ctx.theta))
    return y, ctx, diag


def pursuit_step(model: PursuitModel, data, cfg: PursuitConfig, k: int) -> PursuitLevel:
    """Extract the direction of level ``k`` (1-based) on top of ``model``."""
    if model.k != k - 1:
        raise ParamError(f"level {k} needs a model with {k - 1} levels, got {model.k}")
    data = np.asarray(data, dtype=float)
    _, anneal_seed, test_seed = _level_seeds(cfg.seed, k)
    y, ctx, diag = level_context(model, data, cfg, k)
    res = anneal_minimize(lambda a: ctx.evaluate(a, a).value, ctx.d,
                          replace(cfg.anneal, seed=anneal_seed))
    a = canonicalize(res.best)
    estimate = ctx.evaluate(a, a).value
    report = stopping_test(ctx, a, cfg.stopping(test_seed), level_index=k)
    diag.update(
        bootstrap_se=bootstrap_se(ctx, a, a, reps=cfg.bootstrap_reps, seed=test_seed),
        corrected_estimate=estimate + report.correction,
        anneal_evaluations=len(res.trace),
    )
    if k == 1:
        den, floor = marginal_of(model.base, a), 0.0
    else:
        den = project_and_fit(y, a)
        tr = cfg.truncation
        rel = float(y.shape[0]) ** (-tr.nu_for(ctx.d))
        floor = rel if tr.relative_floor is None else tr.relative_floor * rel * float(den(y @ a).max())
    return PursuitLevel(a, project_and_fit(data, a), den, estimate, report, diag, floor)


@dataclass(frozen=True, eq=False)
class PursuitResult:
    model: PursuitModel
    stopped_at: int
    trace: list
    reports: list
    null_diagnostics: dict
    config: PursuitConfig

    @property
    def levels(self):
        return self.model.levels

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "stopped_at": self.stopped_at,
            "trace": [float(v) for v in self.trace],
            "reports": [r.to_dict() for r in self.reports],
            "null_diagnostics": self.null_diagnostics,
            "config": self.config.to_dict(),
        }


def null_test(model: PursuitModel, data, cfg: PursuitConfig):
    """Level-0 test of ``f = g`` with the unprojected ratio ``g / f``."""
    _, _, test_seed = _level_seeds(cfg.seed, 0)
    _, ctx, diag = level_context(model, data, cfg, 0)
    report = stopping_test(ctx, None, cfg.stopping(test_seed), level_index=0)
    diag.update(bootstrap_se=bootstrap_se(ctx, None, None, reps=cfg.bootstrap_reps, seed=test_seed),
                corrected_estimate=report.estimate + report.correction)
    return report, diag


def run_pursuit(data, cfg: PursuitConfig = PursuitConfig()) -> PursuitResult:
    """Fit the instrumental model and add levels until the test accepts.

    The level-0 test of ``f = g`` always runs and is reported first; with
    ``cfg.null_gate`` its acceptance stops the loop before any level is
    extracted, otherwise at least one level is built. With
    ``cfg.force_levels`` exactly ``max_k`` levels are built regardless of
    the tests.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionMismatch("data must be an m x d matrix")
    m, d = data.shape
    if m < d + 1:
        raise ParamError(f"need at least d + 1 = {d + 1} observations, got {m}")
    max_k = d if cfg.max_k is None else cfg.max_k
    model = PursuitModel(fit_instrumental(data))
    trace, reports = [], []

    def partial():
        return PursuitResult(model, model.k, list(trace), list(reports), null_diag, cfg)

    null_diag = {}
    try:
        report, null_diag = null_test(model, data, cfg)
    except PursuitError as exc:
        raise StepError(0, exc, None) from exc
    trace.append(report.estimate)
    reports.append(report)
    accepted = report.accept_h0 and cfg.null_gate
    k = 0
    while k < max_k and (cfg.force_levels or not accepted):
        k += 1
        try:
            level = pursuit_step(model, data, cfg, k)
        except PursuitError as exc:
            raise StepError(k, exc, partial()) from exc
        model = model.with_level(level)
        trace.append(level.divergence_estimate)
        reports.append(level.test)
        accepted = level.test.accept_h0
    return PursuitResult(model, model.k, trace, reports, null_diag, cfg)
