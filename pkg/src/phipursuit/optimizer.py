"""Simulated annealing over the unit sphere.

The pursuit criterion is invariant under positive rescaling of the
direction, so the search space is the sphere modulo sign. Every visited
point is renormalised and given a canonical sign before evaluation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import ParamError, ZeroDirection


@dataclass(frozen=True)
class AnnealConfig:
    steps: int = 2000
    restarts: int = 4
    initial_temperature: float = 1.0
    cooling_factor: float = 0.995
    proposal_stddev: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ParamError("steps and restarts must be at least 1")
        if not 0.0 < self.cooling_factor < 1.0:
            raise ParamError("cooling_factor must lie in (0, 1)")
        if not (self.initial_temperature > 0 and self.proposal_stddev > 0):
            raise ParamError("temperature and proposal scale must be positive")

    @property
    def budget(self) -> int:
        return self.steps * self.restarts

    def local(self, fraction=0.2, seed=None) -> "AnnealConfig":
        """Single short chain for refining around a known point.

        Uses ``fraction`` of the full evaluation budget, a cold start and a
        narrow proposal.
        """
        steps = max(1, int(round(fraction * self.budget)))
        return replace(
            self,
            steps=steps,
            restarts=1,
            initial_temperature=self.initial_temperature * 1e-3,
            cooling_factor=float(np.exp(np.log(1e-2) / steps)),
            proposal_stddev=self.proposal_stddev / 3.0,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self):
        return asdict(self)


class AnnealResult(NamedTuple):
    best: np.ndarray
    value: float
    trace: list  # (restart, step, best-so-far value)


def canonicalize(v) -> np.ndarray:
    """Unit vector with its largest-magnitude coordinate made positive."""
    v = np.asarray(v, dtype=float).reshape(-1)
    norm = np.linalg.norm(v)
    if not norm > 0 or not np.isfinite(norm):
        raise ZeroDirection("cannot canonicalize a zero or non-finite vector")
    u = v / norm
    # first coordinate of largest magnitude; ties resolved by index
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return u


def angle_deg(u, v) -> float:
    """Angle between the lines spanned by ``u`` and ``v``, in degrees."""
    u = canonicalize(u)
    v = canonicalize(v)
    c = min(1.0, abs(float(u @ v)))
    return float(np.degrees(np.arccos(c)))


def random_direction(d, rng) -> np.ndarray:
    while True:
        v = rng.standard_normal(d)
        if np.linalg.norm(v) > 1e-12:
            return canonicalize(v)


def _propose(a, scale, rng):
    step = rng.standard_normal(a.size) * scale
    step -= (step @ a) * a  # tangent to the sphere at a
    cand = a + step
    if np.linalg.norm(cand) < 1e-12:
        return a
    return canonicalize(cand)


def _better(val, coords, best_val, best_coords):
    if val < best_val:
        return True
    return val == best_val and tuple(coords) < tuple(best_coords)


def anneal_minimize(
    objective: Callable[[np.ndarray], float],
    d: int,
    cfg: AnnealConfig = AnnealConfig(),
    start=None,
) -> AnnealResult:
    """Metropolis annealing of ``objective`` over unit directions in R^d.

    Restarts draw their own streams from ``cfg.seed``; with ``start`` every
    restart begins there, otherwise at a uniform random direction.
    Non-finite objective values are treated as +inf (rejected moves).
    """
    if d < 1:
        raise ParamError("dimension must be at least 1")
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def f(a):
        v = float(objective(a))
        return v if np.isfinite(v) else np.inf

    best_coords, best_val = None, np.inf
    trace = []
    for r, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        cur = canonicalize(start) if start is not None else random_direction(d, rng)
        if d == 1:
            cur = np.ones(1)
        cur_val = f(cur)
        run_best, run_val = cur, cur_val
        trace.append((r, 0, run_val))
        temp = cfg.initial_temperature
        # on the 1-sphere modulo sign there is nothing to search
        for j in range(1, cfg.steps + 1 if d > 1 else 1):
            temp *= cfg.cooling_factor
            scale = cfg.proposal_stddev * np.sqrt(temp / cfg.initial_temperature)
            cand = _propose(cur, scale, rng)
            cand_val = f(cand)
            delta = cand_val - cur_val
            u = rng.random()
            if delta <= 0 or (np.isfinite(delta) and u < np.exp(-delta / temp)):
                cur, cur_val = cand, cand_val
                if _better(cur_val, cur, run_val, run_best):
                    run_best, run_val = cur, cur_val
            trace.append((r, j, run_val))
        if best_coords is None or _better(run_val, run_best, best_val, best_coords):
            best_coords, best_val = run_best, run_val
    return AnnealResult(best_coords, best_val, trace)
