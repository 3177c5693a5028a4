"""CLI behavior: strict config parsing, exit codes, artifacts, determinism."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from scaling_lens import cli


def write_config(tmp_path, text, name="run.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run_cli(argv):
    return cli.main(argv)


THRESHOLD_OK = "R = 1000\nT = 4500\nd_t = 6\nepsilon = 0.5\n"


class TestConfigValidation:
    def test_unknown_key_rejected_with_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "R = 10\nbogus = 3\nT = 20\nd_t = 2\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        err = capsys.readouterr().err
        assert "unknown key 'bogus'" in err
        assert ":2:" in err
        assert list(tmp_path.iterdir()) == [tmp_path / "run.txt"]

    def test_duplicate_key_cites_first_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "R = 10\nT = 20\nR = 11\nd_t = 2\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        err = capsys.readouterr().err
        assert "duplicate key 'R'" in err
        assert "first on line 1" in err

    def test_invalid_value_with_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "R = 10\nT = 20\nd_t = abc\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        err = capsys.readouterr().err
        assert "invalid value 'abc'" in err
        assert ":3:" in err

    def test_missing_required_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "R = 10\nd_t = 2\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        assert "missing required key 'T'" in capsys.readouterr().err

    def test_malformed_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "R = 10\njust words\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        err = capsys.readouterr().err
        assert "expected 'key = value'" in err
        assert ":2:" in err

    def test_negative_degree_rejected_without_output(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, "R = 10\nT = 20\nd_t = -1\n")
        assert run_cli(["threshold", "--config", cfg]) == 1
        assert "invalid configuration" in capsys.readouterr().err
        assert list(tmp_path.iterdir()) == [tmp_path / "run.txt"]

    def test_comments_and_blank_lines(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            "# header comment\n\nR = 12\nT = 24  # inline comment\nd_t = 3\n"
            "out = t.csv\n",
        )
        assert run_cli(["threshold", "--config", cfg]) == 0
        assert (tmp_path / "t.csv").exists()

    def test_budget_sources_are_exclusive(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            "budgets = 6e4, 6e5\nbudget_min = 6e4\nbudget_max = 6e5\n"
            "budget_count = 3\n",
        )
        assert run_cli(["frontier", "--config", cfg]) == 1
        assert "not both" in capsys.readouterr().err
        cfg2 = write_config(tmp_path, "d_t = 6\n", name="none.txt")
        assert run_cli(["frontier", "--config", cfg2]) == 1
        assert "budgets missing" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        assert run_cli(["threshold", "--config", str(tmp_path / "gone.txt")]) == 1
        assert "cannot read config" in capsys.readouterr().err


class TestExitCodes:
    def test_numeric_failure_echoes_parameters(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path, "R = 100000\nT = 100000\nd_t = 50000\nmode = learned\n"
        )
        assert run_cli(["peel-sim", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "numeric failure" in err
        assert "parameters" in err
        assert "100000" in err
        assert list(tmp_path.iterdir()) == [tmp_path / "run.txt"]

    def test_bad_flag_exits_one(self, tmp_path):
        cfg = write_config(tmp_path, THRESHOLD_OK)
        with pytest.raises(SystemExit) as exc:
            run_cli(["threshold", "--config", cfg, "--bogus"])
        assert exc.value.code == 1

    def test_version_flag(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["--version"])
        assert exc.value.code == 0


class TestThresholdCommand:
    def test_solved_model_csv(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, THRESHOLD_OK + "out = t.csv\n")
        assert run_cli(["threshold", "--config", cfg]) == 0
        raw = (tmp_path / "t.csv").read_bytes()
        lines = raw.split(b"\r\n")
        assert raw.endswith(b"\r\n")
        assert lines[0].decode() == (
            "R,T,d_t,epsilon,eps_star,x_star,nu_star,alpha,no_transition,"
            "matching_upper_bound,bit_erasure_rate"
        )
        cells = lines[1].decode().split(",")
        np.testing.assert_allclose(float(cells[4]), 0.498874070122838, rtol=1e-9)
        assert cells[8] == "0"

    def test_no_transition_uses_empty_cells(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, "R = 1000\nT = 800\nd_t = 0.9\nout = s.csv\n")
        assert run_cli(["threshold", "--config", cfg]) == 0
        cells = (tmp_path / "s.csv").read_bytes().split(b"\r\n")[1].decode().split(",")
        assert cells[4] == "1"  # sentinel eps_star
        assert cells[5] == cells[6] == cells[7] == ""  # x_star, nu_star, alpha
        assert cells[8] == "1"
        assert cells[10] == "0"
        meta = json.loads((tmp_path / "s.csv.meta.json").read_text())
        assert any("NoTransition" in w for w in meta["warnings"])

    def test_json_format_matches_csv_values(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, THRESHOLD_OK + "out = t.csv\n")
        assert run_cli(["threshold", "--config", cfg]) == 0
        assert run_cli(
            ["threshold", "--config", cfg, "--out", "t.json", "--format", "json"]
        ) == 0
        doc = json.loads((tmp_path / "t.json").read_text())
        assert set(doc) == {"columns", "rows"}
        row = doc["rows"][0]
        csv_cells = (tmp_path / "t.csv").read_bytes().split(b"\r\n")[1].decode().split(",")
        assert row["eps_star"] == float(csv_cells[4])
        assert row["no_transition"] is False


class TestPeelSimCommand:
    CFG = "R = 60\nT = 120\nd_t = 4\nmode = learned\ntrials = 40\nseed = 5\n"

    def test_default_output_name_and_meta(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, self.CFG)
        assert run_cli(["peel-sim", "--config", cfg]) == 0
        assert (tmp_path / "peel_sim.csv").exists()
        meta = json.loads((tmp_path / "peel_sim.csv.meta.json").read_text())
        assert meta["command"] == "peel-sim"
        assert meta["seed"] == 5
        assert meta["trials"] == 40
        assert meta["rows"] == 40
        assert "mean" in meta and "stderr" in meta
        # defaults are recorded even when the config omits them
        assert meta["resolved_params"]["epsilon"] == 0.5
        assert meta["resolved_params"]["format"] == "csv"

    def test_flag_overrides(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, self.CFG)
        assert run_cli(
            ["peel-sim", "--config", cfg, "--seed", "9", "--trials", "12",
             "--out", "o.csv"]
        ) == 0
        meta = json.loads((tmp_path / "o.csv.meta.json").read_text())
        assert meta["seed"] == 9
        assert meta["rows"] == 12

    def test_seed_changes_data(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, self.CFG)
        run_cli(["peel-sim", "--config", cfg, "--out", "a.csv"])
        run_cli(["peel-sim", "--config", cfg, "--out", "b.csv", "--seed", "6"])
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()

    def test_trials_validated(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.CFG.replace("trials = 40", "trials = 0"))
        assert run_cli(["peel-sim", "--config", cfg]) == 1
        assert "trials" in capsys.readouterr().err


class TestBudgetCommands:
    def test_isoflop_artifact(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            "budgets = 60000\npoints_per_decade = 16\nd_t = 6\nout = iso.csv\n",
        )
        assert run_cli(["isoflop", "--config", cfg]) == 0
        rows = (tmp_path / "iso.csv").read_bytes().decode().strip().split("\r\n")
        assert rows[0] == "C,R,T,objective,eps_star"
        assert len(rows) > 20
        for line in rows[1:]:
            c, r, t, obj, eps = line.split(",")
            assert int(r) * int(t) <= 10000
            assert math.isfinite(float(obj)) and math.isfinite(float(eps))
        meta = json.loads((tmp_path / "iso.csv.meta.json").read_text())
        assert meta["interior_maxima_after_smoothing"] == {"60000": 1}

    def test_frontier_fit_with_five_budgets(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            "budget_min = 6e4\nbudget_max = 6e6\nbudget_count = 5\nd_t = 6\n"
            "out = f.csv\n",
        )
        assert run_cli(["frontier", "--config", cfg]) == 0
        rows = (tmp_path / "f.csv").read_bytes().decode().strip().split("\r\n")
        assert len(rows) == 6
        meta = json.loads((tmp_path / "f.csv.meta.json").read_text())
        fit = meta["scaling_fit"]
        assert 0.3 < fit["a"] < 0.7 and 0.3 < fit["b"] < 0.7

    def test_frontier_without_fit_notes_it(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            "budgets = 6e4, 6e5, 6e6\nd_t = 6\nout = f3.csv\n",
        )
        assert run_cli(["frontier", "--config", cfg]) == 0
        meta = json.loads((tmp_path / "f3.csv.meta.json").read_text())
        assert "scaling_fit" not in meta
        assert any("fewer than 5 budgets" in w for w in meta["warnings"])

    def test_loss_flags_constant_discrepancy(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path, "budgets = 6e4, 6e5, 6e6\nd_t = 6\nout = l.csv\n"
        )
        assert run_cli(["loss", "--config", cfg]) == 0
        rows = (tmp_path / "l.csv").read_bytes().decode().strip().split("\r\n")
        assert rows[0] == (
            "C,R_star,N_star,P_b,P_e_train_exact,P_e_train_approx,"
            "excess_entropy_lb"
        )
        meta = json.loads((tmp_path / "l.csv.meta.json").read_text())
        flag = meta["approx_constant_discrepancy"]
        assert flag["flag"] == "training-error-approx-constant-discrepancy"
        assert flag["approx_over_exact_ratio"] == 8.0


EMERGENCE_CFG = (
    "budget_min = 6e4\nbudget_max = 6e7\nbudget_count = 10\nd_t = 6\n"
    "levels = 5\nskills_per_level = 50\ntask = homogeneous\n"
    "task_level = 1\ntask_m = 2\n"
)


class TestEmergenceCommands:
    def test_curve_with_plateau_report(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            EMERGENCE_CFG + "slope_tol = 0.02\nmin_width_decades = 0.3\n"
            "out = e.csv\n",
        )
        assert run_cli(["emergence", "--config", cfg]) == 0
        rows = (tmp_path / "e.csv").read_bytes().decode().strip().split("\r\n")
        assert rows[0] == "C,N_star,accuracy_lower_bound"
        assert len(rows) == 11
        accs = [float(r.split(",")[2]) for r in rows[1:]]
        assert all(0.0 <= a <= 1.0 for a in accs)
        meta = json.loads((tmp_path / "e.csv.meta.json").read_text())
        report = meta["plateau_report"]
        assert {"segments", "interior_plateaus", "rises"} <= set(report)

    def test_curve_without_tols_has_no_report(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, EMERGENCE_CFG + "out = e2.csv\n")
        assert run_cli(["emergence", "--config", cfg]) == 0
        meta = json.loads((tmp_path / "e2.csv.meta.json").read_text())
        assert "plateau_report" not in meta

    def test_per_level_table(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path, EMERGENCE_CFG + "per_level = true\nout = pl.csv\n"
        )
        assert run_cli(["emergence", "--config", cfg]) == 0
        rows = (tmp_path / "pl.csv").read_bytes().decode().strip().split("\r\n")
        assert rows[0] == "C,l,p_rr,p_l,mean_degree,gamma_l"
        assert len(rows) == 1 + 10 * 5

    def test_plateaus_command_segments(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(
            tmp_path,
            EMERGENCE_CFG + "slope_tol = 0.02\nmin_width_decades = 0.3\n"
            "out = seg.csv\n",
        )
        assert run_cli(["plateaus", "--config", cfg]) == 0
        rows = (tmp_path / "seg.csv").read_bytes().decode().strip().split("\r\n")
        assert rows[0] == (
            "start_C,end_C,kind,width_decades,start_accuracy,end_accuracy"
        )
        kinds = {r.split(",")[2] for r in rows[1:]}
        assert kinds <= {"plateau", "rise"}

    def test_task_validation(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            "budgets = 6e4, 6e5\nlevels = 5\nskills_per_level = 50\n"
            "task = homogeneous\n",
        )
        assert run_cli(["emergence", "--config", cfg]) == 1
        assert "task_level" in capsys.readouterr().err
        cfg2 = write_config(
            tmp_path,
            "budgets = 6e4, 6e5\nlevels = 5\nskills_per_level = 50\n"
            "task = homogeneous\ntask_level = 9\ntask_m = 1\n",
            name="deep.txt",
        )
        assert run_cli(["emergence", "--config", cfg2]) == 1
        assert "level 9" in capsys.readouterr().err


class TestShippedConfigs:
    CONFIG_COMMANDS = {
        "threshold_rate_half.txt": "threshold",
        "peel_sim_small.txt": "peel-sim",
        "isoflop_desk.txt": "isoflop",
        "frontier_paper_scale.txt": "frontier",
        "loss_frontier_sweep.txt": "loss",
        "emergence_single_level_step.txt": "emergence",
        "emergence_unimodal_scurve.txt": "emergence",
        "emergence_multimodal_plateaus.txt": "plateaus",
    }

    def test_every_shipped_config_parses(self):
        root = os.path.join(os.path.dirname(__file__), "..", "configs")
        names = sorted(os.listdir(root))
        assert names == sorted(self.CONFIG_COMMANDS)
        for name, command in self.CONFIG_COMMANDS.items():
            params = cli.parse_config(os.path.join(root, name), command)
            assert params["out"], name

    def test_plateau_config_also_valid_for_emergence(self):
        root = os.path.join(os.path.dirname(__file__), "..", "configs")
        cli.parse_config(
            os.path.join(root, "emergence_multimodal_plateaus.txt"), "emergence"
        )


class TestDeterminism:
    CFG = (
        "R = 200\nT = 400\nd_t = 4\nmode = parent-erasure\ntrials = 50\n"
        "seed = 3\n"
    )

    def _run(self, tmp_path, out, extra=(), env_threads=None):
        cfg = tmp_path / "det.txt"
        if not cfg.exists():
            cfg.write_text(self.CFG, encoding="utf-8")
        env = dict(os.environ)
        env.pop("SCALING_LENS_THREADS", None)
        if env_threads is not None:
            env["SCALING_LENS_THREADS"] = str(env_threads)
        proc = subprocess.run(
            [sys.executable, "-m", "scaling_lens", "peel-sim",
             "--config", str(cfg), "--out", out, *extra],
            cwd=tmp_path, env=env, capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        return (tmp_path / out).read_bytes()

    def test_data_bytes_stable_across_threads_and_reruns(self, tmp_path):
        one = self._run(tmp_path, "t1.csv", ["--threads", "1"])
        four = self._run(tmp_path, "t4.csv", ["--threads", "4"])
        rerun = self._run(tmp_path, "t1b.csv", ["--threads", "1"])
        via_env = self._run(tmp_path, "tenv.csv", env_threads=3)
        assert one == four == rerun == via_env

    def test_meta_sidecar_written_by_module_entry(self, tmp_path):
        self._run(tmp_path, "m.csv", ["--threads", "2"])
        meta = json.loads((tmp_path / "m.csv.meta.json").read_text())
        assert meta["command"] == "peel-sim"
        assert meta["rows"] == 50
