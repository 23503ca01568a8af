import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phipursuit import cli
from phipursuit.errors import ConfigError, DimensionMismatch, EmptyData, ParseError
from phipursuit.harness import run_on_data
from phipursuit.io import GridSpec, emit_density_grid, ingest_csv, read_result, result_bytes, write_csv
from phipursuit.models import EllipticalModel
from phipursuit.optimizer import AnnealConfig
from phipursuit.pursuit import PursuitConfig, PursuitModel
from phipursuit.scenarios import SCENARIOS, get_scenario, scenario_from_dict

FAST = PursuitConfig(max_k=1, instrumental_sample_size=200, bootstrap_reps=20,
                     anneal=AnnealConfig(steps=200, restarts=2))
FAST_FLAGS = ["--max-k", "1", "--instrumental-size", "200", "--anneal-steps", "200", "--anneal-restarts", "2"]


def test_ingest_with_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4\n5,6\n")
    assert np.array_equal(ingest_csv(p), [[1, 2], [3, 4], [5, 6]])
    assert np.array_equal(ingest_csv(p, columns=["b"]), [[2], [4], [6]])


def test_ingest_without_header_and_delimiter(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("1\t2\n3\t4\n")
    assert ingest_csv(p, delimiter="\t", header=False).shape == (2, 2)


def test_ingest_parse_error_names_the_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ParseError) as info:
        ingest_csv(p)
    assert (info.value.row, info.value.column) == (3, 2)


@pytest.mark.parametrize("body, exc", [("", EmptyData), ("a,b\n", EmptyData), ("1,2\n3\n", ParseError),
                                       ("1,nan\n", ParseError), ("1,2\n3,\n", ParseError)])
def test_ingest_errors(tmp_path, body, exc):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(exc):
        ingest_csv(p)


def test_unknown_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        ingest_csv(p, columns=["c"])


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)),
              elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_csv_round_trip_is_exact(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("rt") / "x.csv"
    write_csv(p, x)
    assert np.array_equal(ingest_csv(p, header=False), x)


def test_grid_constant_density(tmp_path):
    g = GridSpec((0, 1), (0, 0), (1, 1), (3, 3), (0.0, 0.0))
    path = emit_density_grid(lambda p: np.ones(len(p)), g, tmp_path / "g.csv")
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (9, 3) and np.all(rows[:, 2] == 1)


def test_grid_base_gaussian_at_origin(tmp_path):
    model = PursuitModel(EllipticalModel(np.zeros(2), np.eye(2)))
    g = GridSpec((0, 1), (-1, -1), (1, 1), (3, 3), (0.0, 0.0))
    rows = np.loadtxt(emit_density_grid(model, g, tmp_path / "g.csv"), delimiter=",", skiprows=1)
    origin = rows[(rows[:, 0] == 0) & (rows[:, 1] == 0)]
    assert origin[0, 2] == pytest.approx(1 / (2 * math.pi))


def test_grid_validation(tmp_path):
    with pytest.raises(ConfigError):
        GridSpec((0, 1, 2), (0,) * 3, (1,) * 3, (2,) * 3, (0.0,) * 3)
    with pytest.raises(DimensionMismatch):
        emit_density_grid(PursuitModel(EllipticalModel(np.zeros(3), np.eye(3))),
                          GridSpec((0,), (0,), (1,), (2,), (0.0, 0.0)), tmp_path / "g.csv")


def test_grid_fixed_coordinates():
    g = GridSpec((1,), (-1,), (1,), (5,), (7.0, 0.0, -2.0))
    pts = g.points()
    assert pts.shape == (5, 3) and np.all(pts[:, 0] == 7.0) and np.all(pts[:, 2] == -2.0)


def test_result_bytes_are_canonical():
    doc = {"schema_version": 1, "status": "ok", "scenario": {"name": "x"}, "data": {"m": 3, "d": 1},
           "pursuit": None, "extra": np.array([1.0, np.inf])}
    b = result_bytes(doc)
    assert json.loads(b)["extra"] == [1.0, None]
    assert result_bytes(dict(reversed(list(doc.items())))) == b


def test_scenarios_validate():
    for name in SCENARIOS:
        cfg = get_scenario(name)
        assert cfg.draw().shape == (cfg.n, cfg.d)
    with pytest.raises(ConfigError):
        get_scenario("sim99")
    with pytest.raises(ConfigError):
        get_scenario("sim41", n=3)


def test_sim42_outliers_are_appended():
    x = get_scenario("sim42", n=100).draw()
    assert np.array_equal(x[-2:], [[2, 0, 0, 0, 0]] * 2)


@pytest.mark.parametrize("cfg, path", [
    ({"n": 10}, "distribution"),
    ({"distribution": {"kind": "gumbel", "loc": 0, "scale": 1}, "n": 10, "tasks": ["fly"]}, "tasks"),
    ({"scenario": "null", "pursuit": {"colour": 1}}, "pursuit.colour"),
    ({"distribution": {"kind": "nope"}, "n": 10}, "distribution"),
])
def test_config_errors_name_the_field(cfg, path):
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(cfg)
    assert info.value.path == path


def test_config_overrides_bundled_scenario():
    cfg = scenario_from_dict({"scenario": "sim43", "n": 300, "pursuit": {"alpha": 0.05, "seed": 4}})
    assert cfg.n == 300 and cfg.pursuit.alpha == 0.05 and cfg.pursuit.seed == 4
    assert cfg.pursuit.spec.gamma == 1.25


def test_run_on_data_writes_artifacts(tmp_path):
    x = get_scenario("null", n=300).draw()
    art = run_on_data("t", x, FAST, output_dir=tmp_path)
    assert art.ok and art.result_file.exists() and art.log.exists()
    doc = read_result(art.result_file)
    assert doc["pursuit"]["stopped_at"] == len(doc["pursuit"]["model"]["levels"])
    assert len(art.density_grid_files) == 1


def test_failed_run_is_recorded(tmp_path):
    x = get_scenario("null", n=300).draw()
    art = run_on_data("t", x, FAST, tasks=("regress",), output_dir=tmp_path,
                      regress_options={"tolerance_deg": 0.0})
    assert not art.ok
    assert read_result(art.result_file)["error"]["type"] == "StructureMismatch"


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["simulate", "sim99"]) == cli.EXIT_CONFIG
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", str(bad)]) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_cli_parse_error_exit_code(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,oops\n")
    assert cli.main(["run", str(p)]) == cli.EXIT_CONFIG


def test_cli_run_and_emit_grid(tmp_path, capsys):
    rng = np.random.default_rng(0)
    data = tmp_path / "d.csv"
    write_csv(data, rng.standard_normal((200, 2)), header=["u", "v"])
    code = cli.main(["run", str(data), *FAST_FLAGS, "--output", str(tmp_path)])
    assert code == cli.EXIT_OK
    assert "level 0" in capsys.readouterr().out
    out = tmp_path / "grid.csv"
    code = cli.main(["emit-grid", str(tmp_path / "d.json"), "--counts", "4", "5", "--output", str(out)])
    assert code == cli.EXIT_OK
    assert np.loadtxt(out, delimiter=",", skiprows=1).shape == (20, 3)


def test_cli_regress_structure_mismatch_exit_code(tmp_path):
    data = tmp_path / "d.csv"
    write_csv(data, np.random.default_rng(1).standard_normal((200, 2)))
    code = cli.main(["regress", str(data), "--no-header", *FAST_FLAGS, "--tolerance", "0",
                     "--output", str(tmp_path)])
    assert code == cli.EXIT_NUMERIC


def test_cli_overrides():
    args = cli.build_parser().parse_args(["run", "x.csv", "--divergence", "power", "--anneal-steps", "50"])
    cfg = cli._override(PursuitConfig(), args)
    assert cfg.spec.gamma == cli.DEFAULT_GAMMA
    assert cfg.anneal.steps == 50 and cfg.anneal.restarts == PursuitConfig().anneal.restarts
