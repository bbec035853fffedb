import csv
import json
import os

import numpy as np
import pytest

from neurodiff.cli import main

FAST = ["--epochs", "3", "--batch-size", "32", "--seed", "0"]


def run(argv):
    return main(argv)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestSolveArtifacts:
    def test_writes_metrics_solution_checkpoint_manifest(self, tmp_path):
        out = str(tmp_path / "run")
        assert run(["solve", "decay", "--out", out] + FAST) == 0
        rows = read_csv(os.path.join(out, "metrics.csv"))
        assert rows[0] == ["epoch", "train_loss", "valid_loss", "loss_kind", "lr"]
        assert len(rows) == 4  # header + 3 epochs
        sol = read_csv(os.path.join(out, "solution.csv"))
        assert sol[0] == ["t", "u_pred", "u_true", "abs_err"]
        assert len(sol) == 101
        assert os.path.exists(os.path.join(out, "net0.ckpt"))
        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["preset"] == "decay"
        assert manifest["flags"]["epochs"] == 3

    def test_deterministic_metrics_across_runs(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        run(["solve", "decay", "--out", out1] + FAST)
        run(["solve", "decay", "--out", out2] + FAST)
        m1 = open(os.path.join(out1, "metrics.csv")).read()
        m2 = open(os.path.join(out2, "metrics.csv")).read()
        assert m1 == m2

    def test_manifest_reproduces_run(self, tmp_path):
        out1 = str(tmp_path / "a")
        run(["solve", "decay", "--out", out1] + FAST)
        out2 = str(tmp_path / "b")
        run(["solve", "decay", "--out", out2, "--manifest",
             os.path.join(out1, "manifest.json")])
        m1 = open(os.path.join(out1, "metrics.csv")).read()
        m2 = open(os.path.join(out2, "metrics.csv")).read()
        assert m1 == m2

    def test_seed_env_variable(self, tmp_path, monkeypatch):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        monkeypatch.setenv("NEURODIFF_SEED", "7")
        run(["solve", "decay", "--out", out1, "--epochs", "2",
             "--batch-size", "32"])
        run(["solve", "decay", "--out", out2, "--epochs", "2",
             "--batch-size", "32", "--seed", "7"])
        m1 = open(os.path.join(out1, "metrics.csv")).read()
        m2 = open(os.path.join(out2, "metrics.csv")).read()
        assert m1 == m2

    def test_heat_dim_gate(self, tmp_path, capsys):
        out = str(tmp_path / "h")
        code = run(["solve", "heat", "--dim", "4", "--out", out] + FAST)
        assert code == 2
        assert "allow-large" in capsys.readouterr().err

    def test_hidden_and_loss_flags(self, tmp_path):
        out = str(tmp_path / "run")
        assert run(["solve", "decay", "--out", out, "--hidden", "8",
                    "--loss", "l1"] + FAST) == 0
        rows = read_csv(os.path.join(out, "metrics.csv"))
        assert rows[1][3] == "l1"

    def test_unknown_preset_exits_2(self):
        with pytest.raises(SystemExit) as e:
            run(["solve", "wave"])
        assert e.value.code == 2


class TestLossSwitch:
    def test_switch_records_single_transition(self, tmp_path):
        out = str(tmp_path / "run")
        assert run(["solve", "decay", "--out", out, "--epochs", "60",
                    "--batch-size", "64", "--seed", "0",
                    "--switch-loss", "l1", "--switch-delta", "0.5",
                    "--switch-window", "3"]) == 0
        kinds = [r[3] for r in read_csv(os.path.join(out, "metrics.csv"))[1:]]
        transitions = sum(1 for a, b in zip(kinds, kinds[1:]) if a != b)
        assert transitions == 1
        assert kinds[0] == "mse" and kinds[-1] == "l1"


class TestBundleInvert:
    def _train_bundle(self, tmp_path):
        out = str(tmp_path / "bundle")
        assert run(["bundle", "decay-bundle", "--out", out] + FAST) == 0
        return out

    def test_bundle_artifacts(self, tmp_path):
        out = self._train_bundle(tmp_path)
        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["command"] == "bundle"
        assert "u0" in manifest["layout"]["theta_ic"]
        assert os.path.exists(os.path.join(out, "net0.ckpt"))

    def _write_data(self, tmp_path):
        path = str(tmp_path / "obs.csv")
        t = np.linspace(0, 2, 10)
        u = 1.0 * np.exp(-1.0 * t)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "u"])
            for ti, ui in zip(t, u):
                w.writerow([ti, ui])
        return path

    def test_invert_zero_steps_returns_midpoint_init(self, tmp_path):
        bundle = self._train_bundle(tmp_path)
        data = self._write_data(tmp_path)
        out = str(tmp_path / "inv")
        assert run(["invert", "decay-bundle", "--data", data,
                    "--bundle-dir", bundle, "--steps", "0",
                    "--out", out]) == 0
        with open(os.path.join(out, "theta.json")) as f:
            result = json.load(f)
        # midpoint of the [0.5, 2.0] ranges
        assert result["theta"]["u0"] == pytest.approx(1.25)
        assert result["theta"]["lam"] == pytest.approx(1.25)

    def test_invert_init_theta_flag(self, tmp_path):
        bundle = self._train_bundle(tmp_path)
        data = self._write_data(tmp_path)
        out = str(tmp_path / "inv")
        assert run(["invert", "decay-bundle", "--data", data,
                    "--bundle-dir", bundle, "--steps", "0",
                    "--init-theta", "u0=0.9,lam=1.7", "--out", out]) == 0
        with open(os.path.join(out, "theta.json")) as f:
            result = json.load(f)
        assert result["theta"] == {"u0": 0.9, "lam": 1.7}

    def test_invert_unknown_parameter_exits_2(self, tmp_path, capsys):
        bundle = self._train_bundle(tmp_path)
        data = self._write_data(tmp_path)
        code = run(["invert", "decay-bundle", "--data", data,
                    "--bundle-dir", bundle, "--init-theta", "gamma=1.0",
                    "--out", str(tmp_path / "inv")])
        assert code == 2
        assert "unknown parameter" in capsys.readouterr().err

    def test_invert_bad_header_exits_2(self, tmp_path, capsys):
        bundle = self._train_bundle(tmp_path)
        bad = str(tmp_path / "bad.csv")
        with open(bad, "w", newline="") as f:
            csv.writer(f).writerows([["t", "x", "u"], [0.0, 0.0, 1.0]])
        code = run(["invert", "decay-bundle", "--data", bad,
                    "--bundle-dir", bundle, "--out", str(tmp_path / "inv")])
        assert code == 2

    def test_invert_missing_checkpoints(self, tmp_path):
        data = self._write_data(tmp_path)
        with pytest.raises(FileNotFoundError):
            run(["invert", "decay-bundle", "--data", data,
                 "--bundle-dir", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "inv")])


class TestBench:
    def test_bench_csv(self, tmp_path):
        out = str(tmp_path / "bench.csv")
        assert run(["bench-operators", "--sizes", "32", "--repeats", "1",
                    "--out", out, "--seed", "0"]) == 0
        rows = read_csv(out)
        assert rows[0][0] == "system"
        assert len(rows) == 1 + 15  # 3 systems x 5 operators
        assert all(r[-1] == "ok" for r in rows[1:])


class TestDivergenceExit:
    def test_exit_code_1(self, tmp_path, capsys):
        # an absurd learning rate drives the loss non-finite
        with np.errstate(all="ignore"):
            code = run(["solve", "decay", "--out", str(tmp_path / "run"),
                        "--epochs", "50", "--batch-size", "16",
                        "--lr", "1e160", "--seed", "0"])
        assert code == 1
        assert "aborted" in capsys.readouterr().err
