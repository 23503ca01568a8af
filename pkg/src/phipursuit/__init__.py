"""Projection pursuit density estimation with phi-divergences."""
from .divergence import DivergenceSpec, QuadratureGrid, divergence_quadrature, eval_phi, integrate_on_grid
from .dual import DualContext, TruncationConfig, build_context, density_ratio, pn_m, truncate, variance_m
from .errors import *  # noqa: F401,F403
from .harness import RunArtifacts, run_on_data, run_scenario
from .inference import (
    CopulaReport,
    RegressionReport,
    StoppingConfig,
    TestReport,
    copula_gof,
    ellipsoid_membership,
    least_squares,
    regress_general,
    regress_via_pursuit,
    stopping_test,
)
from .io import GridSpec, emit_density_grid, ingest_csv, read_result, write_csv, write_result
from .kde import Kde1d, KdeNd, kde_eval, project_and_fit, scott_bandwidth
from .models import EllipticalModel, conditional_model, elliptical_density, fit_instrumental, project_params
from .optimizer import AnnealConfig, anneal_minimize
from .pursuit import PursuitConfig, PursuitLevel, PursuitModel, PursuitResult, eval_gk, run_pursuit, sample_gk
from .scenarios import SCENARIOS, ScenarioConfig, get_scenario

__version__ = "0.1.0"
