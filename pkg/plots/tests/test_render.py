import numpy as np
import pytest

from droplot.io import SchemaError, read_ablation_summary, read_run_log
from droplot.render import PlotJob, PlotKind, render

RUN_LOG_HEADER = "step,lambda,agg_loss,utility_loss,p50,p90,max,weights_entropy"
ABLATION_HEADER = (
    "parameter,value,seed,final_p90_adv_loss,final_mean_adv_loss,final_utility_loss,status"
)


def write_run_log(path, steps=20, seed=0):
    rng = np.random.default_rng(seed)
    lines = [RUN_LOG_HEADER]
    lam = 5.0
    for s in range(steps):
        lam *= 0.9
        lines.append(
            f"{s},{lam},{1.0 - 0.01 * s + rng.normal(0, 0.01)},{2.5 - 0.002 * s},"
            f"{-0.01 * s},{0.05 - 0.001 * s},{0.1},{2.7}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_epsilon_summary(path):
    lines = [ABLATION_HEADER]
    for eps in (0.05, 0.1, 0.3):
        for seed in (1, 2):
            lines.append(
                f"epsilon,{eps},{seed},{0.05 - 0.01 * eps + 0.001 * seed},"
                f"{-0.2 - 0.05 * eps},{2.7 + 0.01 * seed},ok"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_treatment_summary(path):
    lines = [ABLATION_HEADER]
    for mode, p90 in (("fixed", 0.07), ("learnable", 0.05), ("optimized", 0.02)):
        for seed in (1, 2):
            lines.append(
                f"lambda_treatment,{mode},{seed},{p90 + 0.002 * seed},{-0.2},{2.7},ok"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def run_log(tmp_path):
    return write_run_log(tmp_path / "log_a.csv")


class TestReaders:
    def test_run_log_round_trip(self, run_log):
        log = read_run_log(run_log)
        assert len(log["step"]) == 20
        assert log["lambda"][0] == pytest.approx(4.5)

    def test_missing_column_is_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("step,lambda,agg_loss\n0,1.0,0.5\n")
        with pytest.raises(SchemaError, match="'utility_loss'"):
            read_run_log(path)

    def test_header_only_names_zero_rows(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(RUN_LOG_HEADER + "\n")
        with pytest.raises(SchemaError, match="zero data rows"):
            read_run_log(path)

    def test_empty_utility_field_parses_as_nan(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text(RUN_LOG_HEADER + "\n0,1.0,0.5,,0.1,0.2,0.3,2.0\n")
        log = read_run_log(path)
        assert np.isnan(log["utility_loss"][0])

    def test_ablation_summary_parses(self, tmp_path):
        rows = read_ablation_summary(write_epsilon_summary(tmp_path / "s.csv"))
        assert len(rows) == 6
        assert rows[0]["status"] == "ok"


class TestRenderKinds:
    def test_lambda_trajectory(self, tmp_path, run_log):
        out = tmp_path / "lam.png"
        render(PlotJob(kind=PlotKind.LAMBDA_TRAJECTORY, inputs=[run_log], output=out))
        assert out.stat().st_size > 0

    def test_loss_dynamics_multiple_runs(self, tmp_path, run_log):
        other = write_run_log(tmp_path / "log_b.csv", seed=1)
        out = tmp_path / "loss.png"
        render(PlotJob(kind=PlotKind.LOSS_DYNAMICS, inputs=[run_log, other], output=out))
        assert out.stat().st_size > 0

    def test_epsilon_sweep_three_points_two_seeds(self, tmp_path):
        summary = write_epsilon_summary(tmp_path / "summary.csv")
        out = tmp_path / "sweep.png"
        render(PlotJob(kind=PlotKind.EPSILON_SWEEP, inputs=[summary], output=out))
        assert out.stat().st_size > 0

    def test_treatment_comparison(self, tmp_path):
        summary = write_treatment_summary(tmp_path / "summary.csv")
        out = tmp_path / "bars.png"
        render(PlotJob(kind=PlotKind.TREATMENT_COMPARISON, inputs=[summary], output=out))
        assert out.stat().st_size > 0

    def test_deterministic_bytes(self, tmp_path, run_log):
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
        render(PlotJob(kind=PlotKind.LAMBDA_TRAJECTORY, inputs=[run_log], output=out1))
        render(PlotJob(kind=PlotKind.LAMBDA_TRAJECTORY, inputs=[run_log], output=out2))
        assert out1.read_bytes() == out2.read_bytes()

    def test_inputs_never_mutated(self, tmp_path, run_log):
        before = run_log.read_bytes()
        render(
            PlotJob(
                kind=PlotKind.LOSS_DYNAMICS, inputs=[run_log], output=tmp_path / "x.png"
            )
        )
        assert run_log.read_bytes() == before

    def test_schema_violation_raises_named_column(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("parameter,value,seed\nepsilon,0.1,1\n")
        with pytest.raises(SchemaError, match="'final_p90_adv_loss'"):
            render(
                PlotJob(
                    kind=PlotKind.EPSILON_SWEEP, inputs=[bad], output=tmp_path / "x.png"
                )
            )
