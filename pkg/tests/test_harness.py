import math
from pathlib import Path

import numpy as np
import pytest

from dcreward.cli import main
from dcreward.harness import (
    REPORT_COLUMNS,
    ConfigError,
    ExperimentConfig,
    build_scenario,
    export_report,
    load_config,
    read_report,
    run_experiment,
)

DATA = Path(__file__).parent / "data"
SMALL = DATA / "small.yaml"


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.tau == 168 and cfg.d_values == [0, 1, 2, 5, 10, 15]

    def test_overrides_win(self):
        cfg = load_config(SMALL, tau=12, seed=None)
        assert cfg.tau == 12 and cfg.seed == 3

    @pytest.mark.parametrize(
        "text",
        ["tau: 0\n", "modes: [hover]\n", "d_values: [-1]\n", "d_values: [1.5]\n", "tol: 0\n",
         "bogus: 1\n", "[1, 2]\n", "tau: [\n"],
    )
    def test_rejects(self, tmp_path, text):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_fleet_sized_from_peak(self):
        sc = build_scenario(load_config(SMALL))
        assert sc.fleet.N == math.ceil(sc.demand.lam.max() / (0.9 * 20.0))
        assert sc.green is not None and sc.green.g.shape == (24,)

    def test_one_based_window_slots(self):
        cfg = ExperimentConfig(tau=4, windows=[{"slots": [1, 2], "beta": 3.0}, {"start": 3, "stop": 4, "beta": 1.0}])
        sc = build_scenario(cfg)
        assert [list(w.slots) for w in sc.billing.windows] == [[0, 1], [2, 3]]


class TestReport:
    def test_zero_horizon_normalizes_to_one(self):
        rep = run_experiment(load_config(SMALL, modes=["base"], d_values=[0]))
        row = rep.row("base", 0)
        assert row.peak_norm == pytest.approx(1.0, rel=1e-9)
        assert row.cost_norm == pytest.approx(1.0, rel=1e-9)

    def test_empty_sweep(self, tmp_path):
        rep = run_experiment(load_config(SMALL, modes=[], d_values=[]))
        lines = export_report(rep, tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert len(lines) == 2 and lines[1].startswith("baseline,0,")

    def test_round_trip(self, tmp_path):
        rep = run_experiment(load_config(SMALL, modes=["base"], d_values=[2]))
        rows = read_report(export_report(rep, tmp_path / "r.csv"))
        for parsed, row in zip(rows, rep.all_rows):
            for col in REPORT_COLUMNS[2:-1]:
                assert parsed[col] == pytest.approx(getattr(row, col), rel=1e-12)

    def test_byte_stable(self, tmp_path):
        cfg = load_config(SMALL)
        a = export_report(run_experiment(cfg), tmp_path / "a.csv").read_bytes()
        b = export_report(run_experiment(cfg), tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_matches_golden(self):
        golden = read_report(DATA / "small_report.csv")
        rows = run_experiment(load_config(SMALL)).all_rows
        assert [(r["mode"], r["D"]) for r in golden] == [(r.mode, r.D) for r in rows]
        for g, r in zip(golden, rows):
            assert r.status == g["status"] == "ok"
            for col in ("peak_kw", "cost_usd", "reward_usd", "wear_usd"):
                assert getattr(r, col) == pytest.approx(g[col], rel=1e-6, abs=1e-6)

    def test_sweep_shape(self):
        rep = run_experiment(load_config(SMALL))
        assert [(r.mode, r.D) for r in rep.rows] == [
            (m, d) for m in ("base", "shutdown", "renewable") for d in (0, 2)
        ]
        assert not rep.failed

    def test_infeasible_run_becomes_row(self):
        cfg = load_config(SMALL, modes=["shutdown"], d_values=[1],
                          shutdown={"m0": 0, "e_tog": 1e4, "c_wear": 1e4})
        row = run_experiment(cfg).rows[0]
        assert row.status == "infeasible" and math.isnan(row.cost_usd)


class TestCli:
    def test_baseline(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        assert main(["baseline", "--config", str(SMALL), "--out", str(out)]) == 0
        assert len(read_report(out)) == 1
        assert "baseline" in capsys.readouterr().out

    def test_optimize(self, tmp_path):
        out = tmp_path / "o.csv"
        assert main(["optimize", "--config", str(SMALL), "--mode", "base", "--dmax", "2", "--out", str(out)]) == 0
        rows = read_report(out)
        assert [(r["mode"], r["D"]) for r in rows] == [("baseline", 0), ("base", 2)]

    def test_sweep(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--config", str(SMALL), "--out", str(out)]) == 0
        assert len(read_report(out)) == 7

    def test_verify(self, capsys):
        assert main(["verify", "--config", str(SMALL), "--mode", "renewable", "--dmax", "2"]) == 0
        text = capsys.readouterr().out
        assert "profit" in text and "VIOLATED" not in text

    def test_trace_flag(self, tmp_path):
        trace = tmp_path / "t.csv"
        trace.write_text("slot,requests\n" + "".join(f"{i},{100 + 50 * (i % 5)}\n" for i in range(1, 25)))
        assert main(["optimize", "--config", str(SMALL), "--trace", str(trace), "--mode", "base"]) == 0

    def test_config_error_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("tau: -3\n")
        assert main(["sweep", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_short_trace_is_config_error(self, tmp_path):
        trace = tmp_path / "t.csv"
        trace.write_text("slot,requests\n1,5\n")
        assert main(["baseline", "--config", str(SMALL), "--trace", str(trace)]) == 2

    def test_infeasible_code(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(SMALL.read_text() + "shutdown: {m0: 0, e_tog: 10000.0, c_wear: 10000.0}\n")
        assert main(["optimize", "--config", str(cfg), "--mode", "shutdown", "--dmax", "1"]) == 3
        assert main(["verify", "--config", str(cfg), "--mode", "shutdown", "--dmax", "1"]) == 3

    def test_no_convergence_code(self, monkeypatch):
        import dcreward.harness as harness
        from dcreward.optimizer import ConvergenceError

        def stall(*a, **k):
            raise ConvergenceError("stalled")

        monkeypatch.setattr(harness, "solve", stall)
        assert main(["sweep", "--config", str(SMALL), "--mode", "base"]) == 4

    def test_unwritable_output(self, tmp_path):
        assert main(["baseline", "--config", str(SMALL), "--out", str(tmp_path / "no" / "x.csv")]) == 2
