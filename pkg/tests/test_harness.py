"""Tests for experiment configuration, runs, persistence and the CLI."""
import csv
import os

import pytest

import ris_anm_sim.harness as harness
from ris_anm_sim.exceptions import ConfigurationError
from ris_anm_sim.harness import (
    CSV_COLUMNS,
    CSV_VERSION_COMMENT,
    ExperimentConfig,
    emit_plot_script,
    main,
    run,
    sweep_distance,
)


def tiny_config(**kw):
    defaults = dict(p_t_dbm=(20.0,), d_x=(15.0,), trials=1, seed=5, out_dir="unused")
    defaults.update(kw)
    return ExperimentConfig.from_named_setup("setup2", **defaults)


class TestConfig:
    def test_named_setups_match_table(self):
        rows = {
            "setup1": (32, 4, 4, 5, 8, 8, 8),
            "setup2": (32, 2, 2, 5, 8, 8, 8),
            "setup3": (64, 8, 8, 7, 8, 8, 8),
            "setup4": (64, 6, 6, 7, 8, 8, 8),
        }
        for name, (n_r, m, n_rfr, k, t, n_cb, n_rfb) in rows.items():
            cfg = ExperimentConfig.from_named_setup(name)
            assert (cfg.n_r, cfg.m, cfg.n_rfr, cfg.k, cfg.t, cfg.n_cb, cfg.n_rfb) == (
                n_r, m, n_rfr, k, t, n_cb, n_rfb
            )

    def test_unknown_setup_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_named_setup("setup9")

    def test_empty_sweep_rejected(self):
        with pytest.raises(ConfigurationError):
            tiny_config(p_t_dbm=())

    def test_from_toml(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[setup]\n"
            'setup = "setup1"\n'
            "trials = 7\n"
            "seed = 99\n"
            "p_t_dbm = [0.0, 10.0]\n"
            "d_x = [15.0]\n"
        )
        cfg = ExperimentConfig.from_toml(path)
        assert cfg.setup == "setup1" and cfg.m == 4
        assert cfg.trials == 7 and cfg.seed == 99
        assert cfg.p_t_dbm == (0.0, 10.0)

    def test_from_toml_unknown_key(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[setup]\nnot_a_key = 3\n")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(path)

    def test_from_toml_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(tmp_path / "absent.toml")

    def test_grid_order(self):
        cfg = tiny_config(p_t_dbm=(0.0, 10.0), d_x=(5.0, 7.0))
        assert cfg.grid() == [(0.0, 5.0), (0.0, 7.0), (10.0, 5.0), (10.0, 7.0)]


class TestRun:
    def test_single_trial_single_point(self, tmp_path):
        cfg = tiny_config()
        summary = run(cfg, out_dir=str(tmp_path))
        assert summary["rows"] == 1
        assert summary["failures"] == 0
        with open(summary["csv"]) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == CSV_VERSION_COMMENT
        assert lines[1].split(",") == CSV_COLUMNS
        assert len(lines) == 3

    def test_deterministic_given_seed(self, tmp_path):
        cfg = tiny_config()
        a = run(cfg, out_dir=str(tmp_path / "a"))
        b = run(cfg, out_dir=str(tmp_path / "b"))
        assert open(a["csv"], "rb").read() == open(b["csv"], "rb").read()

    def test_row_counting_crlb_only(self, tmp_path):
        cfg = tiny_config(p_t_dbm=(0.0, 10.0, 20.0), trials=4)
        summary = run(cfg, crlb_only=True, out_dir=str(tmp_path))
        assert summary["rows"] == 12
        with open(summary["csv"]) as fh:
            next(fh)
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12
        assert all(r["status"] == "crlb_only" for r in rows)
        assert all(r["mse_theta_mr"] == "nan" for r in rows)

    def test_failure_accounting(self, tmp_path, monkeypatch):
        cfg = tiny_config(trials=3)
        real = harness.run_trial

        def flaky(config, grid_index, trial_index, crlb_only=False):
            if trial_index == 1:
                raise ConfigurationError("synthetic failure for accounting test")
            return real(config, grid_index, trial_index, crlb_only=True)

        monkeypatch.setattr(harness, "run_trial", flaky)
        summary = run(cfg, out_dir=str(tmp_path))
        assert summary["rows"] + summary["failures"] == 3
        assert summary["failures"] == 1
        with open(summary["failures_csv"]) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["trial"] == "1"

    def test_trial_rng_independent_of_execution(self):
        cfg = tiny_config(p_t_dbm=(0.0, 20.0), trials=2)
        row_a = harness.run_trial(cfg, 1, 1, crlb_only=True)[0]
        row_b = harness.run_trial(cfg, 1, 1, crlb_only=True)[0]
        assert row_a == row_b


class TestSweepDistance:
    def test_requires_single_power(self):
        cfg = tiny_config(p_t_dbm=(0.0, 10.0))
        with pytest.raises(ConfigurationError):
            sweep_distance(cfg)

    def test_summary_written(self, tmp_path):
        cfg = tiny_config(d_x=(10.0, 20.0), trials=1)
        summary = sweep_distance(cfg, out_dir=str(tmp_path))
        assert summary["rows"] == 2
        with open(summary["distance_summary"]) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "d_x_m,median_mse_theta_mr"
        assert lines[-1].startswith("monotone_increasing,")


class TestPlotScript:
    def write_csv(self, path, rows):
        with open(path, "w", newline="") as fh:
            fh.write(CSV_VERSION_COMMENT + "\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in rows:
                writer.writerow(r)

    def fake_row(self, setup, p, mse_v, se_v):
        row = {c: "1.0e+00" for c in CSV_COLUMNS}
        row.update(setup=setup, p_t_dbm=f"{p:.1f}", trial="0", d_x_m="15.0",
                   mse_theta_mr=f"{mse_v:.3e}", se_bits=f"{se_v:.3e}", status="ok")
        return [row[c] for c in CSV_COLUMNS]

    def test_empty_data_warning(self, tmp_path):
        path = tmp_path / "empty.csv"
        self.write_csv(path, [])
        script = open(emit_plot_script(str(path))).read()
        assert "no plottable rows" in script

    def test_single_series(self, tmp_path):
        path = tmp_path / "one.csv"
        self.write_csv(path, [self.fake_row("setup1", 0.0, 1e-3, 2.0),
                              self.fake_row("setup1", 10.0, 1e-4, 3.0)])
        script = open(emit_plot_script(str(path))).read()
        assert script.count("$data_setup1") >= 2
        assert "logscale y" in script

    def test_three_setups_three_curves(self, tmp_path):
        path = tmp_path / "three.csv"
        rows = []
        for name in ("setup1", "setup2", "setup3"):
            rows.append(self.fake_row(name, 0.0, 1e-3, 2.0))
        self.write_csv(path, rows)
        script = open(emit_plot_script(str(path))).read()
        for name in ("setup1", "setup2", "setup3"):
            assert f"title '{name}'" in script

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        self.write_csv(path, [self.fake_row("setup1", 0.0, 1e-3, 2.0)])
        with open(path, "a") as fh:
            fh.write("only,three,fields\n")
        with pytest.raises(ConfigurationError, match=":4:"):
            emit_plot_script(str(path))

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "noheader.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ConfigurationError, match=":1:"):
            emit_plot_script(str(path))


class TestCli:
    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.toml")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_run_via_cli(self, tmp_path, capsys):
        config_path = tmp_path / "exp.toml"
        config_path.write_text(
            "[setup]\n"
            'setup = "setup2"\n'
            "trials = 1\n"
            "p_t_dbm = [20.0]\n"
            "d_x = [15.0]\n"
        )
        code = main([
            "run", "--config", str(config_path), "--seed", "3",
            "--out", str(tmp_path / "out"), "--crlb-only", "--emit-plots",
        ])
        assert code == 0
        assert os.path.exists(tmp_path / "out" / "results.csv")
        assert os.path.exists(tmp_path / "out" / "plots.gp")
        assert "wrote 1 rows" in capsys.readouterr().out

    def test_solver_failure_exit_code(self, tmp_path, monkeypatch):
        config_path = tmp_path / "exp.toml"
        config_path.write_text(
            '[setup]\nsetup = "setup2"\ntrials = 1\np_t_dbm = [20.0]\nd_x = [15.0]\n'
        )

        def always_fail(config, grid_index, trial_index, crlb_only=False):
            raise ConfigurationError("synthetic failure")

        monkeypatch.setattr(harness, "run_trial", always_fail)
        code = main(["run", "--config", str(config_path), "--out", str(tmp_path / "out")])
        assert code == 3
