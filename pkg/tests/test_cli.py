import json

import pytest

import drotrain.verify as verify_mod
from drotrain.cli import main
from drotrain.dro_core import kl_dual_derivative

MINIMAL_CONFIG = """
iterations: 2
batch_size: 2
loss_kind: cat
use_utility: false
model_lr: 0.05
seed: 9
vocab_size: 8
embed_dim: 4
dro:
  epsilon: 0.1
  kappa: 0.1
  lambda_mode: optimized
attack:
  budget: 0.3
  steps: 3
  step_size: 0.05
task:
  n_adv: 6
  n_util: 4
"""

ABLATION_EPSILON = """
ablation:
  parameter: epsilon
  values: [0.05, 0.1, 0.3]
  seeds: [1, 2]
base:
  iterations: 2
  batch_size: 2
  loss_kind: cat
  use_utility: true
  vocab_size: 8
  embed_dim: 4
  dro:
    epsilon: 0.1
    kappa: 0.1
    lambda_mode: optimized
  attack:
    budget: 0.3
    steps: 2
    step_size: 0.05
  task:
    n_adv: 6
    n_util: 4
"""

ABLATION_TREATMENT = """
ablation:
  parameter: lambda_treatment
  values: [fixed, learnable, optimized]
  seeds: [3]
base:
  iterations: 2
  batch_size: 2
  loss_kind: cat
  use_utility: false
  vocab_size: 8
  embed_dim: 4
  dro:
    epsilon: 0.1
    kappa: 0.1
    lambda_mode: optimized
  attack:
    budget: 0.3
    steps: 2
    step_size: 0.05
  task:
    n_adv: 6
    n_util: 0
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(MINIMAL_CONFIG)
    return path


class TestCmdTrain:
    def test_missing_config_names_path(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)])
        assert rc == 1
        assert "missing.yaml" in capsys.readouterr().err

    def test_minimal_run_writes_artifacts(self, config_file, tmp_path):
        out = tmp_path / "out"
        rc = main(["train", "--config", str(config_file), "--out", str(out)])
        assert rc == 0
        assert (out / "log.csv").exists()
        assert (out / "final_params.ckpt").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert "final_p90_adv_loss" in summary
        assert "final_lambda" in summary
        assert "wall_time_s" in summary

    def test_rerun_is_byte_identical(self, config_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(config_file), "--out", str(out1)]) == 0
        assert main(["train", "--config", str(config_file), "--out", str(out2)]) == 0
        assert (out1 / "log.csv").read_bytes() == (out2 / "log.csv").read_bytes()
        assert (out1 / "final_params.ckpt").read_bytes() == (out2 / "final_params.ckpt").read_bytes()

    def test_invalid_config_exit_usage(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("dro: {epsilon: -3}\n")
        rc = main(["train", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "epsilon" in capsys.readouterr().err


class TestCmdAblate:
    def test_epsilon_grid_cardinality_and_sorting(self, tmp_path):
        spec = tmp_path / "spec.yaml"
        spec.write_text(ABLATION_EPSILON)
        out = tmp_path / "out"
        rc = main(["ablate", "--spec", str(spec), "--out", str(out)])
        assert rc == 0
        logs = sorted(out.glob("log_*.csv"))
        assert len(logs) == 6
        lines = (out / "ablation_summary.csv").read_text().strip().split("\n")
        assert (
            lines[0]
            == "parameter,value,seed,final_p90_adv_loss,final_mean_adv_loss,final_utility_loss,status"
        )
        rows = [ln.split(",") for ln in lines[1:]]
        assert len(rows) == 6
        keys = [(float(r[1]), int(r[2])) for r in rows]
        assert keys == sorted(keys)
        for r in rows:
            float(r[3]), float(r[4]), float(r[5])  # numerically parseable
            assert r[6] == "ok"

    def test_lambda_treatment_modes(self, tmp_path):
        spec = tmp_path / "spec.yaml"
        spec.write_text(ABLATION_TREATMENT)
        out = tmp_path / "out"
        rc = main(["ablate", "--spec", str(spec), "--out", str(out)])
        assert rc == 0
        lines = (out / "ablation_summary.csv").read_text().strip().split("\n")
        values = [ln.split(",")[1] for ln in lines[1:]]
        assert sorted(values) == ["fixed", "learnable", "optimized"]
        # no utility data: recorded as nan but still parseable
        for ln in lines[1:]:
            assert ln.split(",")[5] == "nan"

    def test_bad_parameter_rejected(self, tmp_path, capsys):
        spec = tmp_path / "spec.yaml"
        spec.write_text("ablation: {parameter: bogus, values: [1], seeds: [1]}\nbase: {}\n")
        rc = main(["ablate", "--spec", str(spec), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err


class TestCmdVerify:
    def test_small_suite_passes(self, capsys):
        rc = main(["verify", "--trials", "2", "--seed", "0"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "duality_kl" in out
        assert "max observed duality gap" in out
        assert "all checks passed" in out

    def test_corrupted_derivative_fails_bisection_check(self, capsys, monkeypatch):
        monkeypatch.setattr(
            verify_mod,
            "kl_dual_derivative",
            lambda batch, lam, cfg: 1.01 * kl_dual_derivative(batch, lam, cfg),
        )
        rc = main(["verify", "--trials", "2", "--seed", "0"])
        captured = capsys.readouterr()
        assert rc == 2
        assert "bisection" in captured.err

    def test_zero_trials_usage_error(self, capsys):
        rc = main(["verify", "--trials", "0"])
        assert rc == 1


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 1

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1
