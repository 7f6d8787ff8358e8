import pytest

from droplot.cli import main

from test_render import RUN_LOG_HEADER, write_epsilon_summary, write_run_log


class TestCli:
    def test_render_each_kind_end_to_end(self, tmp_path):
        log = write_run_log(tmp_path / "log.csv")
        summary = write_epsilon_summary(tmp_path / "summary.csv")
        for kind, src in [
            ("lambda-trajectory", log),
            ("loss-dynamics", log),
            ("epsilon-sweep", summary),
            ("treatment-comparison", summary),
        ]:
            out = tmp_path / f"{kind}.png"
            rc = main([kind, "--in", str(src), "--out", str(out)])
            assert rc == 0
            assert out.stat().st_size > 0

    def test_missing_column_exits_nonzero_and_names_it(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("step,lambda\n0,1\n")
        rc = main(["loss-dynamics", "--in", str(bad), "--out", str(tmp_path / "o.png")])
        assert rc == 2
        assert "agg_loss" in capsys.readouterr().err

    def test_header_only_exits_nonzero(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text(RUN_LOG_HEADER + "\n")
        rc = main(["lambda-trajectory", "--in", str(empty), "--out", str(tmp_path / "o.png")])
        assert rc == 2
        assert "zero data rows" in capsys.readouterr().err

    def test_unknown_kind_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["sparkline", "--in", "x.csv", "--out", "y.png"])
        assert exc.value.code == 1
