"""Command-line interface: subcommands, outputs, exit codes, config file."""

import json
import os

import pytest

from moistsw.cli import cli_main


def run_cli(args):
    return cli_main(args)


class TestRun:
    def test_steady_jet_smoke(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(
            [
                "run",
                "--case", "steady-jet",
                "--nx", "16",
                "--dt", "900",
                "--days", "0.05",
                "--placement", "final",
                "--out", str(out),
            ]
        )
        assert code == 0
        rundir = out / "steady-jet" / "final" / "dt864"
        assert (rundir / "diagnostics.csv").exists()
        assert (rundir / "summary.json").exists()
        assert any(f.startswith("D_t") for f in os.listdir(rundir / "fields"))

    def test_integrated_formulation(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            [
                "run",
                "--case", "gravity-wave",
                "--formulation", "integrated",
                "--nx", "16",
                "--dt", "900",
                "--days", "0.02",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "gravity-wave" / "integrated").is_dir()

    def test_grid_too_small_is_config_error(self, tmp_path, capsys):
        code = run_cli(
            ["run", "--case", "steady-jet", "--nx", "3", "--dt", "300", "--out", str(tmp_path)]
        )
        assert code == 1
        assert "grid too small" in capsys.readouterr().err

    def test_missing_dt_is_config_error(self, tmp_path, capsys):
        code = run_cli(["run", "--case", "steady-jet", "--nx", "16", "--out", str(tmp_path)])
        assert code == 1

    def test_unknown_flag_exits_one_with_usage(self, capsys):
        code = run_cli(["run", "--frobnicate", "7"])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_placement_solver_mismatch(self, tmp_path, capsys):
        code = run_cli(
            [
                "run",
                "--case", "steady-jet",
                "--nx", "16",
                "--dt", "300",
                "--placement", "inner-loop",
                "--solver", "dry",
                "--out", str(tmp_path),
            ]
        )
        assert code == 1

    def test_config_file_overrides_flags(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"nx": 16, "dt": 900.0, "days": 0.02}))
        out = tmp_path / "out"
        code = run_cli(
            [
                "run",
                "--case", "steady-jet",
                "--nx", "4000",  # overridden by the config file
                "--dt", "1",
                "--config", str(cfgfile),
                "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads(
            next((out / "steady-jet" / "final").glob("dt*/summary.json")).read_text()
        )
        assert summary["config"]["nx"] == 16

    def test_bad_config_key(self, tmp_path, capsys):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"frobnicate": 1}))
        code = run_cli(
            ["run", "--case", "steady-jet", "--nx", "16", "--dt", "300",
             "--config", str(cfgfile), "--out", str(tmp_path)]
        )
        assert code == 1


class TestSweeps:
    def test_sweep_dx(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(
            ["sweep-dx", "--resolutions", "8,16", "--days", "0.05", "--out", str(out)]
        )
        assert code == 0
        assert (out / "steady-jet" / "convergence_dx.csv").exists()
        assert "slope" in capsys.readouterr().out

    def test_sweep_dt(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            [
                "sweep-dt",
                "--nx", "12",
                "--dts", "1800,900",
                "--ref-dt", "450",
                "--days", "0.05",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "gravity-wave" / "convergence_dt_final.csv").exists()

    def test_compare_coupling(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            [
                "compare-coupling",
                "--nx", "12",
                "--dts", "1800",
                "--ref-dt", "900",
                "--days", "0.03",
                "--out", str(out),
            ]
        )
        assert code == 0
        table = (out / "gravity-wave" / "coupling_table.csv").read_text().splitlines()
        assert table[0] == "placement,dt,field,l2_error"
        # five placements x one dt x six fields
        assert len(table) == 1 + 5 * 6
        summary = json.loads((out / "gravity-wave" / "summary.json").read_text())
        assert len(summary["placements"]) == 5

    def test_increasing_dts_rejected(self, tmp_path, capsys):
        code = run_cli(
            ["sweep-dt", "--nx", "12", "--dts", "400,800", "--ref-dt", "50",
             "--days", "0.01", "--out", str(tmp_path)]
        )
        assert code == 1
