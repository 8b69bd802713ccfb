"""Tests for the ``lps-forward`` command line."""

import json

import pytest

from lps_forward.cli import (
    EXIT_CHECK,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_SOLVER,
    build_parser,
    exit_code,
    main,
)


def _set(overrides):
    args = []
    for key, value in overrides.items():
        args += ["--set", f"{key}={value}"]
    return args


class TestExitCode:
    """Test the result to exit status mapping."""

    @pytest.mark.parametrize(
        "result, expected",
        [
            ({"success": True}, EXIT_OK),
            ({"success": True, "passed": True}, EXIT_OK),
            ({"success": True, "passed": False}, EXIT_CHECK),
            ({"success": False, "error_type": "config_error"}, EXIT_INPUT),
            ({"success": False, "error_type": "invalid_input"}, EXIT_INPUT),
            ({"success": False, "error_type": "io_error"}, EXIT_INPUT),
            ({"success": False, "error_type": "non_convergence"}, EXIT_SOLVER),
            ({"success": False, "error_type": "stage_failure"}, EXIT_SOLVER),
            ({"success": False, "error_type": "overflow"}, EXIT_SOLVER),
        ],
    )
    def test_mapping(self, result, expected):
        """Input errors give 2, solver errors 3, failed checks 4."""
        assert exit_code(result) == expected


class TestParser:
    """Test argument parsing."""

    def test_set_pairs(self):
        """--set collects key/value pairs."""
        args = build_parser().parse_args(["scale", "--set", "laser.sigma_um = 30"])
        assert args.overrides == [("laser.sigma_um", "30")]

    def test_bad_set(self):
        """--set without '=' is a usage error."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["scale", "--set", "laser.sigma_um"])

    def test_coefficients(self):
        """Coefficient lists are comma separated."""
        args = build_parser().parse_args(["series-check", "--psi", "0.1,0.2", "--order", "1"])
        assert args.psi == [0.1, 0.2]
        assert args.phin is None

    def test_command_required(self):
        """A subcommand is mandatory."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMain:
    """Test complete command-line runs."""

    def test_scale(self, capsys):
        """scale prints JSON and exits 0."""
        code = main(["scale", "--set", "laser.sigma_um=30"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["success"] is True
        assert payload["material"] == "si"

    def test_missing_sigma(self, capsys):
        """A configuration error exits with 2."""
        assert main(["scale"]) == EXIT_INPUT
        assert json.loads(capsys.readouterr().out)["error_type"] == "config_error"

    def test_config_file(self, tmp_path, capsys):
        """--config reads a key = value file."""
        path = tmp_path / "run.cfg"
        path.write_text("laser.sigma_um = 30\n")
        assert main(["scale", "--config", str(path)]) == EXIT_OK
        capsys.readouterr()

    def test_series_check(self, capsys):
        """series-check with explicit coefficients."""
        code = main(
            ["series-check", "--order", "1", "--psi", "0.1,0.2", "--phin", "0,0.1",
             "--phip", "0.2,-0.1"]
        )
        payload = json.loads(capsys.readouterr().out)
        assert payload["success"] is True
        assert code == (EXIT_OK if payload["passed"] else EXIT_CHECK)

    def test_solve_asym(self, tmp_path, small_run, capsys):
        """solve-asym exits 0 when every bound holds, 4 otherwise."""
        code = main(["solve-asym", "--x0", "0.4", "--out", str(tmp_path)] + _set(small_run))
        payload = json.loads(capsys.readouterr().out)
        assert payload["success"] is True
        assert code == (EXIT_OK if payload["passed"] else EXIT_CHECK)
        assert (tmp_path / "asymptotic").is_dir()

    def test_scan_threads(self, tmp_path, small_run, capsys):
        """--threads reaches the scan."""
        code = main(["scan", "--threads", "2", "--out", str(tmp_path)] + _set(small_run))
        payload = json.loads(capsys.readouterr().out)
        assert payload["points"] == 4
        assert code in (EXIT_OK, EXIT_CHECK)
        assert (tmp_path / "scan.csv").exists()
