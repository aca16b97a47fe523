"""Renderers against fabricated harness outputs in the documented formats."""

import json
import os

import numpy as np
import pytest

from swfigures import FigureInputError, PlotSpec, render
from swfigures.cli import cli_main

PLACEMENTS = ["final", "pre-loop", "outer-loop", "inner-loop-beta1", "inner-loop-beta0.5"]
DTS = [800.0, 400.0, 200.0, 100.0]
FIELDS = ["u", "v", "D", "b", "q_v", "q_c"]


def write_coupling_dir(base):
    """Fabricate a completed coupling-sweep directory."""
    os.makedirs(base, exist_ok=True)
    rows = []
    for ip, placement in enumerate(PLACEMENTS):
        lines = ["placement,dt,field,l2_error"]
        for dt in DTS:
            for k, field in enumerate(FIELDS):
                err = (1.0 + ip) * 1e-4 * (dt / 800.0) * (1.0 + 0.1 * k)
                rows.append((placement, dt, field, err))
                lines.append(f"{placement},{dt:g},{field},{err:.17g}")
        with open(os.path.join(base, f"convergence_dt_{placement}.csv"), "w") as fh:
            fh.write("\n".join(lines[:1] + [
                f"{p},{dt:g},{f},{e:.17g}" for p, dt, f, e in rows
                if p == placement
            ]) + "\n")
    with open(os.path.join(base, "coupling_table.csv"), "w") as fh:
        fh.write("placement,dt,field,l2_error\n")
        for p, dt, f, e in rows:
            fh.write(f"{p},{dt:g},{f},{e:.17g}\n")
    summary = {
        "sweep": "coupling",
        "case": "gravity-wave",
        "placements": PLACEMENTS,
        "dts": DTS,
        "ref_dt": 50.0,
        "n_rows": len(rows),
    }
    with open(os.path.join(base, "summary.json"), "w") as fh:
        json.dump(summary, fh)
    return summary


def write_dx_dir(base):
    os.makedirs(base, exist_ok=True)
    lines = ["nx,dx,dt,formulation,field,l2_error"]
    n_rows = 0
    for formulation in ("split", "integrated"):
        for nx in (32, 64, 128):
            dx = 1e7 / nx
            for k, field in enumerate(FIELDS):
                err = 1e-3 * (dx / 1e5) ** 2 * (1 + 0.1 * k)
                lines.append(f"{nx},{dx:.10g},{0.1 * dx / 20:.10g},{formulation},{field},{err:.17g}")
                n_rows += 1
    with open(os.path.join(base, "convergence_dx.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(base, "summary.json"), "w") as fh:
        json.dump({"sweep": "resolution", "resolutions": [32, 64, 128], "n_rows": n_rows}, fh)
    return n_rows


def write_run_dir(base, nx=12, ny=10, times=(0.0, 432000.0), fields=("D", "b")):
    fdir = os.path.join(base, "fields")
    os.makedirs(fdir, exist_ok=True)
    rng = np.random.default_rng(0)
    for t in times:
        for name in fields:
            arr = rng.normal(size=(nx, ny))
            path = os.path.join(fdir, f"{name}_t{t:.0f}.dat")
            with open(path, "w") as fh:
                fh.write(f"{nx} {ny} {1e5:.17g} {1e5:.17g} {t:.17g} {name}\n")
                for row in arr:
                    fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


class TestCouplingPanel:
    def test_panel_and_point_counts_match_summary(self, tmp_path):
        base = tmp_path / "gravity-wave"
        summary = write_coupling_dir(str(base))
        out = tmp_path / "coupling.png"
        counts = render(PlotSpec(indir=str(base), kind="coupling-panel", outpath=str(out)))
        assert out.exists() and out.stat().st_size > 0
        assert counts["panels"] == len(summary["placements"])
        assert counts["points"] == summary["n_rows"]

    def test_field_restriction(self, tmp_path):
        base = tmp_path / "gravity-wave"
        write_coupling_dir(str(base))
        out = tmp_path / "coupling_b.png"
        counts = render(
            PlotSpec(indir=str(base), kind="coupling-panel", outpath=str(out), field="b")
        )
        assert counts["points"] == len(PLACEMENTS) * len(DTS)

    def test_missing_table_errors(self, tmp_path):
        with pytest.raises(FigureInputError):
            render(PlotSpec(indir=str(tmp_path), kind="coupling-panel",
                            outpath=str(tmp_path / "x.png")))
        assert not (tmp_path / "x.png").exists()

    def test_empty_table_errors_without_image(self, tmp_path):
        base = tmp_path / "gravity-wave"
        os.makedirs(base)
        (base / "coupling_table.csv").write_text("placement,dt,field,l2_error\n")
        out = tmp_path / "x.png"
        with pytest.raises(FigureInputError):
            render(PlotSpec(indir=str(base), kind="coupling-panel", outpath=str(out)))
        assert not out.exists()


class TestConvergence:
    def test_dx_two_panels(self, tmp_path):
        base = tmp_path / "steady-jet"
        n_rows = write_dx_dir(str(base))
        out = tmp_path / "dx.png"
        counts = render(PlotSpec(indir=str(base), kind="convergence-dx", outpath=str(out)))
        assert out.exists()
        assert counts["panels"] == 2  # split and integrated
        assert counts["points"] == n_rows

    def test_dt_from_per_placement_tables(self, tmp_path):
        base = tmp_path / "gravity-wave"
        write_coupling_dir(str(base))
        out = tmp_path / "dt.png"
        counts = render(PlotSpec(indir=str(base), kind="convergence-dt", outpath=str(out)))
        assert out.exists()
        assert counts["panels"] == len(PLACEMENTS)

    def test_unknown_field_errors(self, tmp_path):
        base = tmp_path / "steady-jet"
        write_dx_dir(str(base))
        with pytest.raises(FigureInputError):
            render(PlotSpec(indir=str(base), kind="convergence-dx",
                            outpath=str(tmp_path / "x.png"), field="zeta"))


class TestFieldMap:
    def test_all_fields_latest_time(self, tmp_path):
        base = tmp_path / "run"
        write_run_dir(str(base), fields=("D", "b", "q_v"))
        out = tmp_path / "map.png"
        counts = render(PlotSpec(indir=str(base), kind="field-map", outpath=str(out)))
        assert out.exists()
        assert counts["panels"] == 3

    def test_single_field_all_times(self, tmp_path):
        base = tmp_path / "run"
        write_run_dir(str(base), times=(0.0, 216000.0, 432000.0), fields=("D",))
        out = tmp_path / "mapD.png"
        counts = render(
            PlotSpec(indir=str(base), kind="field-map", outpath=str(out), field="D")
        )
        assert counts["panels"] == 3

    def test_malformed_dump_errors(self, tmp_path):
        fdir = tmp_path / "run" / "fields"
        os.makedirs(fdir)
        (fdir / "D_t0.dat").write_text("4 4 1 1 0 D\n1 2 3\n")  # too few values
        with pytest.raises(FigureInputError):
            render(PlotSpec(indir=str(tmp_path / "run"), kind="field-map",
                            outpath=str(tmp_path / "x.png")))


class TestCli:
    def test_smoke(self, tmp_path, capsys):
        base = tmp_path / "gravity-wave"
        write_coupling_dir(str(base))
        out = tmp_path / "cli.png"
        code = cli_main(["coupling-panel", "--in", str(base), "--out", str(out)])
        assert code == 0
        assert out.exists()
        assert "panel(s)" in capsys.readouterr().out

    def test_missing_input_exits_nonzero(self, tmp_path, capsys):
        code = cli_main(
            ["coupling-panel", "--in", str(tmp_path), "--out", str(tmp_path / "x.png")]
        )
        assert code == 1
        assert "figures:" in capsys.readouterr().err

    def test_bad_kind_exits_nonzero(self, tmp_path):
        code = cli_main(["pie-chart", "--in", str(tmp_path), "--out", "x.png"])
        assert code not in (0, None)

    def test_idempotent_rerender(self, tmp_path):
        base = tmp_path / "steady-jet"
        write_dx_dir(str(base))
        out = tmp_path / "dx.png"
        assert cli_main(["convergence-dx", "--in", str(base), "--out", str(out)]) == 0
        first = out.stat().st_size
        assert cli_main(["convergence-dx", "--in", str(base), "--out", str(out)]) == 0
        assert out.stat().st_size == first
