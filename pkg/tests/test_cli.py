"""
Tests for the command-line interface.
Run with: pytest tests/test_cli.py -v
"""

from typer.testing import CliRunner

from app.cli import cli
from app.harness.report import VOLUMES_HEADER
from app.sim.acoustics import TRACE_HEADER

runner = CliRunner()


class TestCli:
    """Test sim, replay and report end to end."""

    def test_sim_replay_report(self, tmp_path):
        session_dir = tmp_path / "flask"
        result = runner.invoke(cli, ["sim", "--scenario", "flask-250", "--out", str(session_dir)])
        assert result.exit_code == 0, result.output
        assert (session_dir / "session.json").is_file()
        assert (session_dir / "frames.bin").is_file()

        result = runner.invoke(cli, ["replay", "--in", str(session_dir)])
        assert result.exit_code == 0, result.output
        assert "all match" in result.output

        report_dir = tmp_path / "report"
        result = runner.invoke(cli, ["report", "--in", str(session_dir), "--out-dir", str(report_dir)])
        assert result.exit_code == 0, result.output
        assert (report_dir / "volumes.dat").read_text().startswith(VOLUMES_HEADER)

    def test_trace_export(self, tmp_path):
        traces = tmp_path / "traces"
        result = runner.invoke(
            cli, ["sim", "--scenario", "flask-250", "--noiseless", "--out", str(tmp_path / "s"), "--traces-dir", str(traces)]
        )
        assert result.exit_code == 0, result.output
        exported = sorted(p.name for p in traces.iterdir())
        assert exported == ["trace_t1.dat", "trace_t2.dat", "trace_t3.dat", "trace_t4.dat"]
        assert (traces / "trace_t1.dat").read_text().splitlines()[0] == TRACE_HEADER

    def test_scenario_file(self, tmp_path):
        config = tmp_path / "small.yaml"
        config.write_text(
            "format: ubvm-scenario/1\nname: small\nbase: volume-sweep\n"
            "phantoms:\n  - {volume_ml: 150}\nsample_times_min: [0]\naccuracy_bound: null\n",
            encoding="utf-8",
        )
        result = runner.invoke(cli, ["sim", "--config", str(config), "--out", str(tmp_path / "s")])
        assert result.exit_code == 0, result.output
        assert "mL" in result.output

    def test_needs_one_source(self):
        result = runner.invoke(cli, ["sim"])
        assert result.exit_code != 0

    def test_unknown_scenario(self, tmp_path):
        result = runner.invoke(cli, ["sim", "--scenario", "nothing", "--out", str(tmp_path)])
        assert result.exit_code == 1

    def test_list_scenarios(self):
        result = runner.invoke(cli, ["list-scenarios"])
        assert result.exit_code == 0
        assert "micturition-linear" in result.output

    def test_replay_missing_files(self, tmp_path):
        result = runner.invoke(cli, ["replay", "--in", str(tmp_path)])
        assert result.exit_code == 1
