"""Bundled data-generating scenarios and the scenario config type."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .divergence import DivergenceSpec
from .dual import TruncationConfig
from .errors import ConfigError, ParamError
from .models import (
    ClaytonCopulaPair,
    Gaussian,
    GaussianCopulaPair,
    Gumbel,
    Exponential,
    LinearMap,
    Product,
    ScenarioDistribution,
    distribution_from_dict,
    draw_scenario,
)
from .optimizer import AnnealConfig
from .pursuit import PursuitConfig

EULER_GAMMA = float(np.euler_gamma)

# sim41: the third independent component (Gumbel) sits on x0 + x1
SIM41_MIXING = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    distribution: ScenarioDistribution
    n: int
    pursuit: PursuitConfig
    outliers: tuple = ()
    tasks: tuple = ()  # any of "copula", "regress", "deconvolution"
    truth: dict = field(default_factory=dict)
    notes: str = ""
    output_dir: str = "phipursuit-out"

    def __post_init__(self):
        d = self.d
        if self.n < d + 1:
            raise ConfigError("n", f"need at least d + 1 = {d + 1} observations")
        for i, p in enumerate(self.outliers):
            if len(p) != d:
                raise ConfigError(f"outliers[{i}]", f"has dimension {len(p)}, expected {d}")
        for t in self.tasks:
            if t not in ("copula", "regress", "deconvolution"):
                raise ConfigError("tasks", f"unknown task {t!r}")

    @property
    def d(self) -> int:
        return self.distribution.dim

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, pursuit=replace(self.pursuit, seed=int(seed)))

    def draw(self) -> np.ndarray:
        """Data for this config: ``n - len(outliers)`` draws followed by the outliers."""
        k = len(self.outliers)
        x = draw_scenario(self.distribution, self.n - k, self.pursuit.seed)
        if k:
            x = np.vstack([x, np.asarray(self.outliers, dtype=float)])
        return x

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "distribution": self.distribution.to_dict(),
            "n": self.n,
            "d": self.d,
            "outliers": [list(map(float, p)) for p in self.outliers],
            "tasks": list(self.tasks),
            "truth": self.truth,
            "notes": self.notes,
            "output_dir": self.output_dir,
            "pursuit": self.pursuit.to_dict(),
        }


def _normal(mean=0.0, var=1.0):
    return Gaussian([mean], [[var]])


def sim41(seed=0, n=200, **kw) -> ScenarioConfig:
    base = Product((_normal(-5.0, 2.0), _normal(1.0, 1.0), Gumbel(-3.0, 4.0)))
    dist = LinearMap(base, np.linalg.inv(SIM41_MIXING))
    return ScenarioConfig(
        "sim41", dist, n,
        _pursuit("chi2", seed, **kw),
        truth={"directions": [[1.0, 1.0, 0.0]], "levels": 1},
        notes="independent N(-5,2), N(1,1), Gumbel(-3,4) components on the rows of "
              "[[0,1,1],[1,0,1],[1,1,0]]; only the Gumbel row (1,1,0) is non-Gaussian",
    )


def sim42(seed=0, n=2000, d=5, divergence="hellinger", **kw) -> ScenarioConfig:
    if d < 2:
        raise ParamError("sim42 needs d >= 2")
    dist = Product((Gumbel(-5.0, 1.0), Gaussian(np.zeros(d - 1), np.eye(d - 1))))
    out = tuple(tuple([2.0] + [0.0] * (d - 1)) for _ in range(2))
    return ScenarioConfig(
        "sim42", dist, n, _pursuit(divergence, seed, **kw), outliers=out,
        truth={"directions": [[1.0] + [0.0] * (d - 1)], "levels": 1},
        notes=f"Gumbel(-5,1) first coordinate, standard normal rest, d={d}, two outliers at (2,0,...,0)",
    )


def sim43(seed=0, n=1000, **kw) -> ScenarioConfig:
    dist = Product((Gumbel(-5.0, 1.0), _normal(0.0, 1.0)))
    return ScenarioConfig(
        "sim43", dist, n, _pursuit("power", seed, gamma=1.25, **kw), tasks=("regress",),
        truth={"directions": [[1.0, 0.0]], "levels": 1, "intercept": -5.0 + EULER_GAMMA, "slope": 0.0},
        notes="Gumbel(-5,1) x N(0,1), power divergence gamma=1.25, regression of x0 on x1",
    )


def sim44(seed=0, n=1000, **kw) -> ScenarioConfig:
    dist = GaussianCopulaPair(0.5, Gumbel(-1.0, 1.0), Exponential(2.0))
    return ScenarioConfig(
        "sim44", dist, n, _pursuit("kl", seed, max_k=2, **kw), tasks=("copula",),
        truth={"directions": [[1.0, 0.0], [0.0, 1.0]], "levels": 2, "copula_gaussian": True},
        notes="Gaussian copula rho=0.5 with Gumbel(-1,1) and Exponential(2) margins",
    )


def clayton(seed=0, n=1000, theta=5.0, **kw) -> ScenarioConfig:
    dist = ClaytonCopulaPair(theta, _normal(), _normal())
    return ScenarioConfig(
        "clayton", dist, n, _pursuit("kl", seed, max_k=2, **kw), tasks=("copula",),
        truth={"levels": 2, "copula_gaussian": False},
        notes=f"Clayton copula theta={theta} with standard normal margins (negative control)",
    )


def deconvolution(seed=0, n=500, noise=0.5, **kw) -> ScenarioConfig:
    # X = Z1 + Z2 with Z1 = (Gumbel, normal) and Z2 ~ N(0, noise^2 I)
    signal = Product((Gumbel(0.0, 1.0), _normal()))
    dist = _Convolution(signal, Gaussian(np.zeros(2), noise ** 2 * np.eye(2)))
    return ScenarioConfig(
        "deconvolution", dist, n, _pursuit("kl", seed, **kw), tasks=("deconvolution",),
        truth={"directions": [[1.0, 0.0]], "levels": 1},
        notes=f"sum of a Gumbel x normal signal and N(0, {noise}^2 I) noise",
    )


def null(seed=0, n=2000, d=2, **kw) -> ScenarioConfig:
    dist = Gaussian(np.zeros(d), np.eye(d))
    return ScenarioConfig("null", dist, n, _pursuit("kl", seed, **kw),
                          truth={"levels": 0}, notes=f"standard normal in d={d}")


@dataclass(frozen=True, eq=False)
class _Convolution(ScenarioDistribution):
    signal: ScenarioDistribution
    noise: ScenarioDistribution

    @property
    def dim(self):
        return self.signal.dim

    def sample(self, n, rng):
        return np.reshape(self.signal.sample(n, rng), (n, self.dim)) + np.reshape(self.noise.sample(n, rng), (n, self.dim))

    def to_dict(self):
        return {"kind": "convolution", "signal": self.signal.to_dict(), "noise": self.noise.to_dict()}


def _pursuit(divergence, seed, *, gamma=None, max_k=None, **kw) -> PursuitConfig:
    spec = DivergenceSpec.from_name(divergence, gamma)
    return PursuitConfig(spec=spec, max_k=max_k, seed=int(seed), **kw)


SCENARIOS = {
    "sim41": sim41,
    "sim42": sim42,
    "sim43": sim43,
    "sim44": sim44,
    "clayton": clayton,
    "deconvolution": deconvolution,
    "null": null,
}


def get_scenario(name: str, **kw) -> ScenarioConfig:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError("scenario", f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return factory(**kw)


def scenario_from_dict(cfg: dict) -> ScenarioConfig:
    """Build a config from a mapping (as read from a JSON config file).

    ``scenario`` names a bundled scenario (``params`` go to its factory) whose
    fields the remaining keys override; otherwise ``distribution`` and ``n`` are required.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a mapping")
    pursuit = _pursuit_from_dict(cfg.get("pursuit", {}))
    if "scenario" in cfg:
        params = dict(cfg.get("params", {}), **{k: cfg[k] for k in ("n",) if k in cfg})
        try:
            base = get_scenario(cfg["scenario"], **params)
        except TypeError as exc:
            raise ConfigError("params", str(exc)) from None
        merged = replace(base.pursuit, **{k: getattr(pursuit, k) for k in cfg.get("pursuit", {}) if k in _PURSUIT_KEYS})
        if "divergence" in cfg.get("pursuit", {}) or "gamma" in cfg.get("pursuit", {}):
            merged = replace(merged, spec=pursuit.spec)
        out = replace(base, pursuit=merged)
        if "output_dir" in cfg:
            out = replace(out, output_dir=cfg["output_dir"])
        return out
    for key in ("distribution", "n"):
        if key not in cfg:
            raise ConfigError(key, "required field is missing")
    try:
        dist = distribution_from_dict(cfg["distribution"])
    except ParamError as exc:
        raise ConfigError("distribution", str(exc)) from None
    tasks = tuple(cfg.get("tasks", ()))
    return ScenarioConfig(
        cfg.get("name", "custom"), dist, int(cfg["n"]), pursuit,
        outliers=tuple(tuple(map(float, p)) for p in cfg.get("outliers", ())),
        tasks=tasks, truth=cfg.get("truth", {}), notes=cfg.get("notes", ""),
        output_dir=cfg.get("output_dir", "phipursuit-out"),
    )


_PURSUIT_KEYS = {"max_k", "alpha", "instrumental_sample_size", "seed", "paper_threshold",
                 "search_fraction", "proposal_factor", "force_levels", "bootstrap_reps",
                 "truncation", "anneal", "sphere", "matched_marginals",
                 "resample_projections", "null_gate"}


def _pursuit_from_dict(p: dict) -> PursuitConfig:
    if not isinstance(p, dict):
        raise ConfigError("pursuit", "must be a mapping")
    unknown = set(p) - _PURSUIT_KEYS - {"divergence", "gamma"}
    if unknown:
        raise ConfigError(f"pursuit.{sorted(unknown)[0]}", "unknown field")
    try:
        spec = DivergenceSpec.from_name(p.get("divergence", "kl"), p.get("gamma"))
        kw = {k: v for k, v in p.items() if k in _PURSUIT_KEYS - {"truncation", "anneal"}}
        if "truncation" in p:
            kw["truncation"] = TruncationConfig(**p["truncation"])
        if "anneal" in p:
            kw["anneal"] = AnnealConfig(**p["anneal"])
        return PursuitConfig(spec=spec, **kw)
    except (ParamError, TypeError) as exc:
        raise ConfigError("pursuit", str(exc)) from None
