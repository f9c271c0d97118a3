"""
Tests for the command-line interface
"""
import pytest
from typer.testing import CliRunner

from qsp_lab.cli import app
from qsp_lab.output import dump_field

runner = CliRunner()

SMALL = """
[grid]
R = 12.0
N = 300

[model]
eps = 0.5
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


class TestValidateAndThresholds:
    """Commands that only inspect the parameters"""

    def test_validate_defaults(self):
        result = runner.invoke(app, ["validate"])
        assert result.exit_code == 0
        assert "SUCCESS" in result.stdout

    def test_validate_reports_bad_theta(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[model]\ntheta = 5.5\n")
        result = runner.invoke(app, ["validate", "--config", str(path)])
        assert result.exit_code == 2
        assert "invalid" in result.stdout

    def test_thresholds(self, config_file):
        result = runner.invoke(app, ["thresholds", "--config", str(config_file)])
        assert result.exit_code == 0
        assert "sobolev_bound" in result.stdout


class TestConfigErrors:
    """Exit code 2 for configuration problems"""

    def test_missing_config(self, tmp_path):
        result = runner.invoke(app, ["solve", "--config", str(tmp_path / "none.toml")])
        assert result.exit_code == 2
        assert "Error" in result.stdout

    def test_invalid_model_blocks_runs(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[model]\ntheta = 5.5\n")
        result = runner.invoke(app, ["solve", "--config", str(path)])
        assert result.exit_code == 2

    def test_supercritical_without_cap(self, config_file, tmp_path):
        result = runner.invoke(
            app, ["supercritical", "--config", str(config_file), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2


class TestSolvePhi:
    """Potential-only runs"""

    def test_from_config(self, config_file, tmp_path):
        out = tmp_path / "phi"
        result = runner.invoke(app, ["solve-phi", "--config", str(config_file), "--out", str(out)])
        assert result.exit_code == 0
        assert (out / "phi.txt").exists()
        assert (out / "resolved_config.json").exists()

    def test_from_rho_file(self, tmp_path, gaussian):
        rho = dump_field(gaussian * gaussian, tmp_path / "rho_in.txt")
        out = tmp_path / "phi"
        result = runner.invoke(app, ["solve-phi", "--rho", str(rho), "--out", str(out), "-v"])
        assert result.exit_code == 0
        assert (out / "phi.txt").exists()

    def test_bad_rho_file(self, tmp_path):
        path = tmp_path / "rho.txt"
        path.write_text("1.0\n0.0\n")
        result = runner.invoke(app, ["solve-phi", "--rho", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 1


class TestCheck:
    """Invariant suite from the command line"""

    def test_quick_check_passes(self, tmp_path):
        result = runner.invoke(app, ["check", "--quick", "--out", str(tmp_path)])
        assert result.exit_code == 0
        assert (tmp_path / "checks.csv").exists()

    def test_fault_injection_fails(self):
        result = runner.invoke(app, ["check", "--quick", "--corrupt-weights"])
        assert result.exit_code == 1


@pytest.mark.slow
class TestSolve:
    """Full mountain-pass run on a coarse grid"""

    def test_solve(self, config_file, tmp_path):
        out = tmp_path / "solve"
        result = runner.invoke(
            app, ["solve", "--config", str(config_file), "--out", str(out), "--plot"]
        )
        assert result.exit_code == 0
        assert (out / "solve.csv").exists()
        assert (out / "solve.svg").exists()
        assert (out / "fields" / "solve_manifest.json").exists()
