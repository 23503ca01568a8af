"""Run a scenario or a user data set end to end and persist the artifacts."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import PursuitError, StepError
from .io import GridSpec, emit_density_grid, write_result
from .inference import copula_gof, regress_via_pursuit
from .kde import fit_kde
from .pursuit import PursuitConfig, PursuitResult, eval_gk, run_pursuit
from .scenarios import ScenarioConfig


@dataclass(frozen=True)
class RunArtifacts:
    result_file: Path
    density_grid_files: tuple
    log: Path
    document: dict
    ok: bool = True


def _logger(path: Path) -> logging.Logger:
    log = logging.getLogger(f"phipursuit.run.{path}")
    log.handlers.clear()
    log.propagate = False
    log.setLevel(logging.INFO)
    h = logging.FileHandler(path, mode="w")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    return log


def deconvolution_trace(data, result: PursuitResult, counts: int = 31) -> list:
    """Sup-norm gap between each ``g^(k)`` and a dense KDE of the data on a 2-axis grid."""
    data = np.asarray(data, dtype=float)
    grid = GridSpec.around(data, axes=(0, 1), counts=counts)
    pts = grid.points()
    target = fit_kde(data)(pts)
    return [float(np.max(np.abs(eval_gk(result.model.truncated(k), pts) - target)))
            for k in range(result.model.k + 1)]


def run_on_data(name: str, data, pursuit: PursuitConfig, *, tasks=(), output_dir="phipursuit-out",
                scenario: dict | None = None, grid_counts: int = 41,
                regress_options: dict | None = None) -> RunArtifacts:
    """Pursuit plus requested tasks on ``data``; writes ``<name>.json``, grids and a log.

    Numerical failures are recorded in the log and in a result document with
    ``status: failed`` holding whatever partial model exists.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{name}.log"
    log = _logger(log_path)
    data = np.asarray(data, dtype=float)
    m, d = data.shape
    log.info("run %s: m=%d d=%d divergence=%s seed=%d", name, m, d, pursuit.spec.name, pursuit.seed)
    doc = {
        "schema_version": 1,
        "status": "ok",
        "error": None,
        "scenario": scenario or {"name": name},
        "data": {"m": m, "d": d, "mean": data.mean(axis=0), "covariance": np.cov(data, rowvar=False).reshape(d, d)},
        "pursuit": None,
        "copula": None,
        "regression": None,
        "deconvolution": None,
    }
    grids = []
    result = None
    t0 = time.perf_counter()
    try:
        if "copula" in tasks:
            result = run_pursuit(data, _forced(pursuit, d))
            doc["copula"] = copula_gof(data, result=result).to_dict()
        else:
            result = run_pursuit(data, pursuit)
        log.info("pursuit stopped at level %d after %.1fs", result.stopped_at, time.perf_counter() - t0)
        for r in result.reports:
            log.info("level %d: T=%.4f p=%.4f accept=%s", r.level_index, r.statistic, r.p_value, r.accept_h0)
        if "regress" in tasks:
            doc["regression"] = regress_via_pursuit(data, result, **(regress_options or {})).to_dict()
        if "deconvolution" in tasks:
            doc["deconvolution"] = {"sup_norm_gap": deconvolution_trace(data, result)}
    except StepError as exc:
        log.error("numerical failure: %s", exc)
        doc["status"] = "failed"
        doc["error"] = {"level": exc.level, "type": type(exc.cause).__name__, "message": str(exc.cause)}
        result = exc.partial
    except PursuitError as exc:
        log.error("numerical failure: %s", exc)
        doc["status"] = "failed"
        doc["error"] = {"level": None, "type": type(exc).__name__, "message": str(exc)}
    if result is not None:
        doc["pursuit"] = result.to_dict()
        grids.append(emit_density_grid(result.model, GridSpec.around(data, counts=grid_counts),
                                       out / f"{name}.grid.csv"))
    result_file = write_result(out / f"{name}.json", doc)
    log.info("wrote %s (%s)", result_file, doc["status"])
    for h in list(log.handlers):
        h.close()
        log.removeHandler(h)
    return RunArtifacts(result_file, tuple(grids), log_path, doc, doc["status"] == "ok")


def _forced(cfg: PursuitConfig, d: int) -> PursuitConfig:
    return replace(cfg, max_k=d, force_levels=True)


def run_scenario(cfg: ScenarioConfig) -> RunArtifacts:
    """Draw the scenario data (outliers appended) and run it."""
    name = f"{cfg.name}-seed{cfg.pursuit.seed}"
    return run_on_data(name, cfg.draw(), cfg.pursuit, tasks=cfg.tasks, output_dir=cfg.output_dir,
                       scenario=cfg.to_dict())
