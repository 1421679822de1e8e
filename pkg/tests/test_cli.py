import json

import pytest

from dplab import experiments
from dplab.cli import main
from dplab.dynamics import BlowUpError, EvolutionTrace
from dplab.experiments import ConfigError, ExperimentConfig, loglog_slope

SMALL = ["--grid-n", "1024"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_landmarks(tmp_path, capsys):
    code, out = run(tmp_path, "landmarks", "--speed", "2")
    assert code == 0
    data = json.loads((out / "landmarks.json").read_text())
    assert json.loads((out / "config.json").read_text())["speed"] == 2.0
    assert "PASS" in capsys.readouterr().out
    assert data  # table is non-empty


def test_verify_lemmas_passes(tmp_path):
    code, out = run(tmp_path, "verify-lemmas", "--grid-n", "4096", "--ensemble-size", "8", "--seed", "3")
    assert code == 0
    rep = json.loads((out / "lemmas_report.json").read_text())
    assert rep["passed"] is True
    assert len(rep["ensemble"]) == 8
    assert all(v["status"] == "PASS" for v in rep["lemmas"].values())


def test_verify_lemmas_fails_on_coarse_grid(tmp_path):
    code, out = run(tmp_path, "verify-lemmas", "--grid-n", "16", "--ensemble-size", "0")
    assert code == 1
    assert json.loads((out / "lemmas_report.json").read_text())["passed"] is False


@pytest.mark.parametrize(
    "args, message",
    [
        (["verify-lemmas", "--speed", "-1"], "stability requires c>0"),
        (["simulate", "--speed", "0"], "speed must be finite and nonzero"),
        (["stability-sweep", "--eps", "0.02"], "need ≥3 values for slope fit"),
        (["stability-sweep", "--eps", "0.02", "0.02", "0.04"], "need ≥3 values for slope fit"),
        (["simulate", "--eps", "0.01", "0.02"], "single eps"),
        (["simulate", "--grid-n", "1000"], ""),
        (["simulate", "--t-end", "-1"], "t_end must be positive"),
        (["stability-sweep", "--jobs", "0", "--eps", "0.02", "0.04", "0.08"], "jobs must be >= 1"),
    ],
)
def test_invalid_configuration_exit_2(tmp_path, capsys, args, message):
    code, _ = run(tmp_path, *args)
    assert code == 2
    assert message in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid_n": 1024, "bogus": 1}))
    code, _ = run(tmp_path, "landmarks", "--config", str(cfg))
    assert code == 2
    assert "bogus" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    code, _ = run(tmp_path, "landmarks", "--config", str(tmp_path / "missing.json"))
    assert code == 2


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid_n": 1024, "speed": 1.5, "t_end": 0.2, "eps": [0.01]}))
    code, out = run(tmp_path, "simulate", "--config", str(cfg), "--speed", "1.0")
    assert code == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["speed"] == 1.0  # flag wins
    assert resolved["grid_n"] == 1024 and resolved["t_end"] == 0.2
    assert resolved["eps"] == [0.01]


def test_defaults_by_command():
    sim = ExperimentConfig(command="simulate").with_defaults()
    sweep = ExperimentConfig(command="stability-sweep").with_defaults()
    assert (sim.t_end, sim.eps, sim.monitor_stride) == (5.0, [0.0], 10)
    assert (sweep.t_end, sweep.eps, sweep.monitor_stride) == (10.0, [0.02, 0.04, 0.08], 50)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "simulate", "nope": 1})


def test_simulate_outputs_reproducible(tmp_path):
    args = ["simulate", *SMALL, "--t-end", "0.5", "--eps", "0.02", "--snapshot-every", "3"]
    code_a, a = run(tmp_path, *args, name="a")
    code_b, b = run(tmp_path, *args, name="b")
    assert code_a == code_b == 0
    header = (a / "trace.csv").read_text().splitlines()[0]
    assert header == "t,E,F,xi,M,delta,h_distance,min_y"
    for f in ("trace.csv", "trace.svg", "summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    snaps = sorted(p.name for p in (a / "snapshots").iterdir())
    assert snaps and snaps[0] == "u_00000.csv"
    summary = json.loads((a / "summary.json").read_text())
    assert all(v == "PASS" for v in summary["checks"].values())
    assert (a / "trace.svg").read_text().startswith("<svg")


def test_blowup_exit_3(tmp_path, monkeypatch, capsys):
    def explode(y0, c, cfg):
        tr = EvolutionTrace(c)
        for name in ("times", "E_series", "F_series", "xi_series", "M_series",
                     "delta_series", "h_distance_series", "min_y_series"):
            getattr(tr, name).append(0.0)
        tr.aborted = True
        raise BlowUpError("blow-up at t = 0.1", tr)

    monkeypatch.setattr(experiments, "evolve", explode)
    code, out = run(tmp_path, "simulate", *SMALL, "--t-end", "0.5")
    assert code == 3
    assert "blow-up" in capsys.readouterr().err
    assert len((out / "trace.csv").read_text().splitlines()) == 2


def test_sweep_jobs_do_not_change_outputs(tmp_path):
    args = ["stability-sweep", *SMALL, "--t-end", "0.5", "--eps", "0.02", "0.04", "0.08", "0.2"]
    code_a, a = run(tmp_path, *args, "--jobs", "1", name="a")
    code_b, b = run(tmp_path, *args, "--jobs", "2", name="b")
    assert code_a == code_b
    assert code_a in (0, 1)
    for f in ("sweep.csv", "sweep.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    data = json.loads((a / "sweep.json").read_text())
    assert data["out_of_hypothesis"] == [0.2]
    assert data["fit_eps"] == [0.02, 0.04, 0.08]
    assert len(data["rows"]) == 4
    traces = sorted(p.name for p in (a / "sweep_traces").iterdir())
    assert "baseline.csv" in traces and len(traces) == 5


def test_loglog_slope_exact():
    xs = [0.02, 0.04, 0.08]
    assert loglog_slope(xs, [3 * x**0.5 for x in xs]) == pytest.approx(0.5, abs=1e-12)
    assert loglog_slope(xs, [x for x in xs]) == pytest.approx(1.0, abs=1e-12)
