import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from osnr.bench import (ExperimentConfig, cost_probe, emit_plotdata, group_label, read_config,
                        run_experiment)
from osnr.cli import main
from osnr.errors import InvalidArgumentError
from osnr.matpower import fixture_path, write_case, load_case

TRACK = dict(experiment="track", n=20, m=18, T=100, runs=3, rhos=(0.25, 1.0),
             algorithms=("osnr", "ogd"))


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def track_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("track")
    return run_experiment(ExperimentConfig(**TRACK, out=str(out)))


@pytest.fixture(scope="module")
def opf_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("opf")
    return run_experiment(ExperimentConfig(experiment="opf", T=50, runs=5, out=str(out)))


# -- configuration -------------------------------------------------------------------

def test_defaults_per_experiment():
    t = ExperimentConfig()
    assert (t.n, t.m, t.T, t.runs, t.rhos) == (20, 18, 1000, 20, (0.05, 0.25, 1.0))
    o = ExperimentConfig(experiment="opf")
    assert (o.case, o.T, o.runs, o.algorithms) == ("case9", 200, 50, ("osnr_ec",))


@pytest.mark.parametrize("kw", [dict(rhos=(0.0,)), dict(rhos=(1.5,)), dict(runs=0), dict(T=0),
                                dict(jobs=0), dict(experiment="bandit"), dict(eta=-1.0),
                                dict(algorithms=("osnr_ec",)), dict(alpha_rule="x"),
                                dict(experiment="root-demo", n=3, m=4), dict(rhos=())])
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(**kw)


def test_groups_and_labels():
    cfg = ExperimentConfig(**TRACK)
    assert cfg.groups() == [("osnr", 0.25), ("osnr", 1.0), ("ogd", None)]
    assert group_label("osnr", 0.25) == "osnr_rho0.25" and group_label("ogd", None) == "ogd"
    assert ExperimentConfig(algorithms=("onm",)).groups() == [("onm", 1.0)]


def test_read_config(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nexperiment = track\nT = 50\nrho = 0.1, 0.5\n"
                    "algorithms = osnr ogd\nseed = 9\nrecord_decisions = yes\n")
    kw = read_config(path)
    assert kw == {"experiment": "track", "T": 50, "rhos": (0.1, 0.5),
                  "algorithms": ("osnr", "ogd"), "base_seed": 9, "record_decisions": True}
    path.write_text("[experiment]\ncolour = blue\n")
    with pytest.raises(InvalidArgumentError, match="colour"):
        read_config(path)
    path.write_text("[other]\n")
    with pytest.raises(InvalidArgumentError):
        read_config(path)
    path.write_text("[experiment]\nT = many\n")
    with pytest.raises(InvalidArgumentError):
        read_config(path)


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.ini")):
        ExperimentConfig(**read_config(path))


# -- bundles ------------------------------------------------------------------------------

def test_track_bundle_file_counts(track_bundle):
    assert len(list((track_bundle / "runs").glob("*.csv"))) == 9
    assert len(list((track_bundle / "aggregate").glob("*.csv"))) == 3
    manifest = json.loads((track_bundle / "manifest.json").read_text())
    assert manifest["config"]["runs"] == 3 and manifest["failures"] == []
    assert set(manifest["versions"]) >= {"osnr", "numpy", "scipy", "python"}
    assert len(manifest["wall_seconds"]) == 9


def test_csv_format(track_bundle):
    raw = (track_bundle / "runs" / "osnr_rho0.25_seed1.csv").read_bytes()
    assert b"\r" not in raw
    rows = read_rows(track_bundle / "runs" / "osnr_rho0.25_seed1.csv")
    assert len(rows) == 100 and rows[0]["round"] == "1"
    assert "step_seconds" not in rows[0]
    # 17 significant digits round-trip the doubles exactly
    value = rows[5]["residual_norm"]
    assert float(format(float(value), ".17g")) == float(value)
    total = sum(float(r["residual_norm"]) for r in rows)
    assert float(rows[99]["regret_zero"]) == pytest.approx(total, rel=1e-13)


def test_seed_i_shared_across_algorithms(track_bundle):
    a = read_rows(track_bundle / "runs" / "osnr_rho1_seed2.csv")
    b = read_rows(track_bundle / "runs" / "ogd_seed2.csv")
    assert a[0]["residual_norm"] == b[0]["residual_norm"]  # same problem, same start


def test_aggregate_matches_runs(track_bundle):
    agg = read_rows(track_bundle / "aggregate" / "osnr_rho0.25.csv")
    finals = [float(read_rows(track_bundle / "runs" / f"osnr_rho0.25_seed{s}.csv")[-1]["regret_zero"])
              for s in range(3)]
    assert float(agg[-1]["regret_zero_mean"]) == pytest.approx(np.mean(finals), rel=1e-14)
    assert float(agg[-1]["regret_zero_std"]) == pytest.approx(np.std(finals, ddof=1), rel=1e-12)
    assert agg[-1]["runs"] == "3"


def test_identical_configs_identical_csv(tmp_path):
    cfg = dict(TRACK, T=60, runs=2)
    a = run_experiment(ExperimentConfig(**cfg, out=str(tmp_path / "a")))
    b = run_experiment(ExperimentConfig(**cfg, out=str(tmp_path / "b"), jobs=2))
    names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert names == sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_adding_an_algorithm_keeps_existing_runs(tmp_path):
    a = run_experiment(ExperimentConfig(**dict(TRACK, T=30, runs=2, algorithms=("osnr",)),
                                        out=str(tmp_path / "a")))
    b = run_experiment(ExperimentConfig(**dict(TRACK, T=30, runs=2), out=str(tmp_path / "b")))
    for s in range(2):
        name = f"runs/osnr_rho0.25_seed{s}.csv"
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_opf_violation_equals_rhs_variation(opf_bundle):
    for rho in ("0.05", "0.25", "1"):
        rows = read_rows(opf_bundle / "aggregate" / f"osnr_ec_rho{rho}.csv")
        for r in rows:
            assert abs(float(r["violation_mean"]) - float(r["b_variation_mean"])) <= 1e-8
        assert float(rows[-1]["regret_dynamic_mean"]) > 0


def test_record_decisions_columns(tmp_path):
    b = run_experiment(ExperimentConfig(**dict(TRACK, T=5, runs=1, algorithms=("ogd",)),
                                        record_decisions=True, out=str(tmp_path)))
    rows = read_rows(b / "runs" / "ogd_seed0.csv")
    assert "x19" in rows[0] and "x20" not in rows[0]


def test_failures_recorded_for_every_run(tmp_path):
    case = load_case(fixture_path("case2"))
    tiny = case.__class__(case.base_mva, case.buses,
                          (case.branches[0].__class__(1, 2, 0.1, 1.0),), case.gens, case.gencosts)
    path = tmp_path / "tiny.m"
    path.write_text(write_case(tiny, "tiny"))
    cfg = ExperimentConfig(experiment="opf", case=str(path), T=5, runs=2, rhos=(1.0,),
                           alpha_rule="inverse-square", out=str(tmp_path / "out"))
    bundle = run_experiment(cfg)
    manifest = json.loads((bundle / "manifest.json").read_text())
    assert len(manifest["failures"]) == 2
    assert manifest["failures"][0]["round"] == 1
    assert "1-2" in manifest["failures"][0]["error"]
    assert manifest["groups"][0]["aggregate"] is None


def test_root_demo_runs(tmp_path):
    b = run_experiment(ExperimentConfig(experiment="root-demo", T=20, runs=2,
                                        algorithms=("osnr", "ogd", "onm"), out=str(tmp_path)))
    assert len(list((b / "aggregate").glob("*.csv"))) == 4


# -- plot data ------------------------------------------------------------------------------

def test_plotdata_regret_shape(track_bundle):
    rows = list(csv.reader(io.StringIO(emit_plotdata(track_bundle, "regret"))))
    assert rows[0] == ["round", "algorithm", "rho", "mean", "std"]
    assert len(rows) - 1 == 100 * 3
    assert {r[1] for r in rows[1:]} == {"osnr", "ogd"}
    assert {r[2] for r in rows[1:] if r[1] == "ogd"} == {""}


def test_plotdata_steptime_averages_step_seconds(track_bundle, tmp_path):
    out = tmp_path / "steps.csv"
    text = emit_plotdata(track_bundle, "steptime", out=out)
    assert out.read_text() == text
    manifest = json.loads((track_bundle / "manifest.json").read_text())
    rows = read_rows(out)
    assert len(rows) == 300
    first = manifest["groups"][0]["step_seconds_mean"][0]
    assert float(rows[0]["mean"]) == pytest.approx(first, rel=1e-15)


def test_plotdata_violation(track_bundle, opf_bundle):
    lines = emit_plotdata(track_bundle, "violation").splitlines()
    assert lines[0] == "round,algorithm,rho,mean,std"
    assert len(lines) == 2 and lines[1].startswith("# warning")
    rows = list(csv.DictReader(io.StringIO(emit_plotdata(opf_bundle, "violation"))))
    assert len(rows) == 50 * 3


def test_plotdata_errors(track_bundle, tmp_path):
    with pytest.raises(InvalidArgumentError):
        emit_plotdata(track_bundle, "latency")
    with pytest.raises(InvalidArgumentError):
        emit_plotdata(tmp_path, "regret")


# -- command line -----------------------------------------------------------------------

def test_cli_run_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nexperiment = track\nT = 500\nruns = 7\nrho = 0.5\n")
    out = tmp_path / "bundle"
    code = main(["run", "--config", str(cfg), "--T", "10", "--runs", "2", "--rho", "0.25",
                 "--rho", "1.0", "--n", "6", "--m", "5", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["T"] == 10 and manifest["config"]["rhos"] == [0.25, 1.0]
    assert manifest["config"]["n"] == 6 and manifest["config"]["runs"] == 2


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", "--rho", "2", "--out", str(tmp_path)]) == 1
    assert main(["run", "--experiment", "opf", "--case", str(tmp_path / "none.m"),
                 "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as err:
        main(["run", "--T", "ten"])
    assert err.value.code == 1


def test_cli_runtime_failure_exit_code(tmp_path, capsys):
    case = load_case(fixture_path("case2"))
    tiny = case.__class__(case.base_mva, case.buses,
                          (case.branches[0].__class__(1, 2, 0.1, 1.0),), case.gens, case.gencosts)
    path = tmp_path / "tiny.m"
    path.write_text(write_case(tiny, "tiny"))
    code = main(["run", "--experiment", "opf", "--case", str(path), "--T", "3", "--runs", "1",
                 "--alpha-rule", "inverse-square", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "round 1" in capsys.readouterr().err


def test_cli_parse_case(capsys, tmp_path):
    assert main(["parse-case", "case9"]) == 0
    out = capsys.readouterr().out
    assert "buses: 9" in out and "gens: 3" in out and "base_mva: 100.0" in out
    bad = tmp_path / "bad.m"
    bad.write_text("mpc.bus = [\n1 3 0;\n];\n")
    assert main(["parse-case", str(bad)]) == 1
    assert "baseMVA" in capsys.readouterr().err


def test_cli_plot_data(track_bundle, capsys):
    assert main(["plot-data", str(track_bundle), "regret"]) == 0
    assert capsys.readouterr().out.startswith("round,algorithm,rho,mean,std\n")
    assert main(["plot-data", str(track_bundle), "speed"]) == 1


def test_cost_probe_report(tmp_path):
    report = cost_probe(n=60, rhos=(0.1, 1.0), steps=3)
    assert set(report["seconds_per_step"]) == {format(0.1, ".17g"), "1"}
    assert all(v > 0 for v in report["seconds_per_step"].values())
    out = tmp_path / "probe.json"
    assert main(["cost-probe", "--n", "40", "--steps", "2", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["n"] == 40
    assert main(["cost-probe", "--rho", "0"]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "osnr", "parse-case", "case2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "buses: 2" in res.stdout
