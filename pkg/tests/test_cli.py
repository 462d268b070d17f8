import json
import sys
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from ghostvar.analysis import RunConfig, load_report_schema, run_analysis
from ghostvar.cli import main
from ghostvar.data import ingest_csv
from ghostvar.errors import AnalysisError, ConfigError


def _write_csv(tmp_path, name="data.csv", n=80, p=3, seed=0, collinear=False):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    if collinear:
        X[:, -1] = X[:, 0] * 2.0
    y = X @ np.arange(1, p + 1) + 0.5 * rng.standard_normal(n)
    path = tmp_path / name
    header = ",".join([f"x{i}" for i in range(p)] + ["y"])
    rows = [",".join(repr(float(v)) for v in row) + f",{float(t)!r}" for row, t in zip(X, y)]
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


# ---------------------------------------------------------------------------
# run_analysis
# ---------------------------------------------------------------------------

def test_run_analysis_scenario_end_to_end(tmp_path):
    config = RunConfig(
        scenario="ex1",
        seed=4,
        methods=("ghost", "permutation", "omission"),
        out_dir=str(tmp_path / "out"),
    )
    bundle = run_analysis(config)
    assert bundle.mspe == pytest.approx(1.0, abs=0.1)
    ghost = bundle.results["ghost"]
    assert ghost.relevance[0] > ghost.relevance[1]
    assert ghost.relevance[0] > ghost.relevance[2]
    assert bundle.critical_value is not None
    assert bundle.partial_correlations is not None
    assert bundle.partial_correlations.values[1, 2] == pytest.approx(0.95, abs=0.01)
    # omission close to ghost for a linear model
    om = bundle.results["omission"].relevance
    assert om == pytest.approx(ghost.relevance, rel=0.10)
    names = {path.name for path in bundle.written_files}
    assert {"report.json", "relevance.csv", "relevance_ghost.svg"} <= names


def test_run_analysis_is_deterministic(tmp_path):
    config = RunConfig(scenario="ex2", model="basis", seed=11, n1=300, n2=200)
    a = run_analysis(config)
    b = run_analysis(config)
    assert json.dumps(a.to_json_dict(), sort_keys=True) == json.dumps(
        b.to_json_dict(), sort_keys=True
    )


def test_run_analysis_methods_subset():
    config = RunConfig(scenario="ex1", seed=4, n1=200, n2=120, methods=("permutation",))
    bundle = run_analysis(config)
    assert set(bundle.results) == {"permutation"}
    assert bundle.partial_correlations is None
    assert bundle.critical_value is None
    payload = bundle.to_json_dict()
    assert set(payload["methods"]) == {"permutation"}


def test_run_analysis_report_validates_against_schema(tmp_path):
    config = RunConfig(
        scenario="ex1",
        seed=4,
        n1=250,
        n2=150,
        methods=("ghost", "permutation", "omission"),
        out_dir=str(tmp_path),
    )
    run_analysis(config)
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, load_report_schema())


def test_run_analysis_figures_are_wellformed_and_do_not_touch_numbers(tmp_path):
    config_plain = RunConfig(scenario="ex1", seed=4, n1=250, n2=150)
    config_files = RunConfig(scenario="ex1", seed=4, n1=250, n2=150, out_dir=str(tmp_path))
    plain = run_analysis(config_plain)
    written = run_analysis(config_files)
    for path in written.written_files:
        if path.suffix == ".svg":
            ET.parse(path)
    for method in plain.results:
        assert np.array_equal(
            plain.results[method].relevance, written.results[method].relevance
        )
        assert np.array_equal(plain.results[method].matrix, written.results[method].matrix)


def test_run_analysis_csv_input(tmp_path):
    path = _write_csv(tmp_path, n=120, p=3, seed=5)
    config = RunConfig(
        input_path=str(path),
        response="y",
        seed=3,
        methods=("ghost",),
        split_fraction=0.6,
    )
    bundle = run_analysis(config)
    assert bundle.n1 == 72 and bundle.n2 == 48
    # strongest true coefficient should dominate ghost relevance
    assert np.argmax(bundle.results["ghost"].relevance) == 2


def test_run_analysis_mlp_family(tmp_path):
    config = RunConfig(
        scenario="ex1",
        seed=4,
        n1=400,
        n2=200,
        model="mlp",
        epochs=800,
        methods=("ghost",),
    )
    bundle = run_analysis(config)
    assert bundle.model_family == "mlp"
    assert np.argmax(bundle.results["ghost"].relevance) == 0


def test_run_analysis_ghost_source_switch():
    base = RunConfig(scenario="ex1", seed=4, n1=300, n2=200, methods=("ghost",))
    from_train = RunConfig(
        scenario="ex1", seed=4, n1=300, n2=200, methods=("ghost",), ghost_source="train"
    )
    a = run_analysis(base).results["ghost"].relevance
    b = run_analysis(from_train).results["ghost"].relevance
    assert not np.array_equal(a, b)
    # both estimate the same population quantity
    assert b == pytest.approx(a, rel=0.25)


def test_run_analysis_permutation_repeats_average():
    one = RunConfig(scenario="ex1", seed=4, n1=300, n2=200, methods=("permutation",))
    many = RunConfig(
        scenario="ex1",
        seed=4,
        n1=300,
        n2=200,
        methods=("permutation",),
        permutation_repeats=5,
    )
    a = run_analysis(one).results["permutation"].relevance
    b = run_analysis(many).results["permutation"].relevance
    assert not np.array_equal(a, b)
    assert b == pytest.approx(a, rel=0.5)
    again = run_analysis(many).results["permutation"].relevance
    assert np.array_equal(b, again)


def test_run_analysis_config_errors():
    with pytest.raises(ConfigError):
        run_analysis(RunConfig())
    with pytest.raises(ConfigError):
        run_analysis(RunConfig(scenario="ex1", methods=()))
    with pytest.raises(ConfigError):
        run_analysis(RunConfig(scenario="ex1", model="external"))
    with pytest.raises(ConfigError):
        run_analysis(
            RunConfig(
                scenario="ex1",
                model="external",
                predictor_cmd="cat",
                methods=("omission",),
            )
        )


def test_run_analysis_wraps_stage_errors(tmp_path):
    bad = _write_csv(tmp_path, collinear=True)
    config = RunConfig(input_path=str(bad), response="y", methods=("ghost",))
    with pytest.raises(AnalysisError) as exc:
        run_analysis(config)
    assert exc.value.stage == "model"


# ---------------------------------------------------------------------------
# External predictor round trip through the pipeline
# ---------------------------------------------------------------------------

LINEAR_SERVER = """
import sys
lines = sys.stdin.read().strip().split("\\n")
header = lines[0].split(",")
coef = {json_coef}
intercept = {json_intercept}
for line in lines[1:]:
    vals = [float(v) for v in line.split(",")]
    print(repr(intercept + sum(c * v for c, v in zip(coef, vals))))
"""


def test_external_predictor_matches_in_process(tmp_path):
    from ghostvar.predictors import fit_linear
    from ghostvar.synthetic import ScenarioSpec, gen_example1

    data = gen_example1(ScenarioSpec("ex1", n1=300, n2=200, seed=4))
    model = fit_linear(data.split.train)
    script = tmp_path / "server.py"
    script.write_text(
        LINEAR_SERVER.format(
            json_coef=[float(c) for c in model.ols.slopes],
            json_intercept=float(model.ols.coefficients[0]),
        )
    )
    in_process = run_analysis(
        RunConfig(scenario="ex1", seed=4, n1=300, n2=200, methods=("ghost",))
    )
    wrapped = run_analysis(
        RunConfig(
            scenario="ex1",
            seed=4,
            n1=300,
            n2=200,
            model="external",
            predictor_cmd=f"{sys.executable} {script}",
            methods=("ghost",),
        )
    )
    a = in_process.results["ghost"].relevance
    b = wrapped.results["ghost"].relevance
    assert np.max(np.abs(a - b)) < 1e-9


# ---------------------------------------------------------------------------
# CLI entry point
# ---------------------------------------------------------------------------

def test_cli_analyze_scenario(tmp_path, capsys):
    out = tmp_path / "results"
    code = main(
        [
            "analyze",
            "--scenario",
            "ex1",
            "--seed",
            "4",
            "--n1",
            "250",
            "--n2",
            "150",
            "--methods",
            "ghost,perm",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert str(out / "report.json") in printed
    assert (out / "relevance.csv").exists()
    report = json.loads((out / "report.json").read_text())
    assert set(report["methods"]) == {"ghost", "permutation"}


def test_cli_scenario_export_round_trips(tmp_path, capsys):
    code = main(
        ["scenario", "--id", "ex2", "--seed", "9", "--n1", "60", "--n2", "40", "--out", str(tmp_path)]
    )
    assert code == 0
    train = ingest_csv(tmp_path / "ex2_train.csv", "y")
    test = ingest_csv(tmp_path / "ex2_test.csv", "y")
    assert train.n == 60 and test.n == 40 and train.p == 5
    from ghostvar.synthetic import ScenarioSpec, gen_example2

    data = gen_example2(ScenarioSpec("ex2", n1=60, n2=40, seed=9))
    assert np.array_equal(train.features, data.split.train.features)
    assert np.array_equal(test.y, data.split.test.y)


def test_cli_exit_code_config_error(tmp_path, capsys):
    code = main(
        [
            "analyze",
            "--scenario",
            "ex1",
            "--model",
            "external",
            "--predictor-cmd",
            "cat",
            "--methods",
            "omission",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 2
    assert "ghostvar: error: config:" in capsys.readouterr().err


def test_cli_exit_code_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,y\n1,NA,3\n")
    code = main(
        ["analyze", "--input", str(bad), "--response", "y", "--out", str(tmp_path / "o")]
    )
    assert code == 3
    assert "ghostvar: error: data:" in capsys.readouterr().err


def test_cli_exit_code_numeric_error(tmp_path, capsys):
    bad = _write_csv(tmp_path, collinear=True)
    code = main(
        ["analyze", "--input", str(bad), "--response", "y", "--out", str(tmp_path / "o")]
    )
    assert code == 4
    assert "ghostvar: error: model:" in capsys.readouterr().err
