"""End-to-end: srkit CLI output -> figure files.

The experiment CSVs are produced through the srkit command line (the only
interface this package depends on), then rendered here.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from srplots import FigSpecError, FigureSpec, render
from srplots.cli import main


def run_srkit(tmp: Path, name: str, spec: dict) -> Path:
    cfg = tmp / f"{name}.json"
    cfg.write_text(json.dumps(spec))
    out = tmp / name
    proc = subprocess.run(
        [sys.executable, "-m", "srkit.cli", "experiment",
         "--config", str(cfg), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out / "metrics.csv"


@pytest.fixture(scope="session")
def micro_csv(tmp_path_factory) -> Path:
    tmp = tmp_path_factory.mktemp("micro")
    return run_srkit(tmp, "micro", {
        "kind": "micro_train", "seed": 3, "repetitions": 1,
        "params": {"task": "linreg", "steps": 48, "eval_every": 8,
                   "policies": ["fp32_master", "bf16_nr", "bf16_sr"],
                   "lr_grid": [3e-3]},
    })


@pytest.fixture(scope="session")
def hitting_csv(tmp_path_factory) -> Path:
    tmp = tmp_path_factory.mktemp("hitting")
    return run_srkit(tmp, "hits", {
        "kind": "hitting_time", "seed": 5, "repetitions": 3000,
        "params": {"eps": 0.1},
    })


def test_curves_series_cardinality(micro_csv, tmp_path):
    spec = FigureSpec(inputs=(str(micro_csv),), kind="curves",
                      output=str(tmp_path / "curves.png"))
    info = render(spec)
    assert info.series == 3  # one per policy cell
    assert info.path.exists() and info.path.stat().st_size > 0


def test_hitting_with_analytic_overlay(hitting_csv, tmp_path):
    spec = FigureSpec(inputs=(str(hitting_csv),), kind="hitting",
                      output=str(tmp_path / "hits.png"))
    info = render(spec)
    assert info.path.exists()

    # the overlay is mandatory: a CSV without the analytic row is rejected
    stripped = tmp_path / "stripped.csv"
    lines = hitting_csv.read_text().splitlines()
    stripped.write_text("\n".join(l for l in lines if "analytic_mean" not in l) + "\n")
    with pytest.raises(FigSpecError, match="analytic_mean"):
        render(FigureSpec(inputs=(str(stripped),), kind="hitting",
                          output=str(tmp_path / "bad.png")))


def test_rerun_byte_identical(hitting_csv, micro_csv, tmp_path):
    for kind, csv_path in (("hitting", hitting_csv), ("curves", micro_csv)):
        a = tmp_path / f"{kind}_a.png"
        b = tmp_path / f"{kind}_b.png"
        for out in (a, b):
            render(FigureSpec(inputs=(str(csv_path),), kind=kind, output=str(out)))
        assert a.read_bytes() == b.read_bytes()


def test_cli_render(micro_csv, tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "inputs": [str(micro_csv)], "kind": "curves",
        "output": str(tmp_path / "cli.png"), "title": "micro training",
    }))
    assert main(["render", "--spec", str(spec_path)]) == 0
    assert (tmp_path / "cli.png").exists()
    out = capsys.readouterr().out
    assert "3 series" in out


def test_cli_missing_column_named(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,step,metric,value\nx,0,loss,1.0\n")
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "inputs": [str(bad)], "kind": "curves",
        "output": str(tmp_path / "no.png"),
    }))
    assert main(["render", "--spec", str(spec_path)]) == 2
    assert "repetition" in capsys.readouterr().err


def test_bounds_figure(tmp_path):
    cfg = tmp_path / "bound.json"
    cfg.write_text(json.dumps({
        "constants": {"d": 100, "R": 1.0, "L": 10.0, "f0_minus_fstar": 5.0,
                      "alpha": 1e-3, "beta2": 0.95, "eps": 1e-8,
                      "delta": 0.01, "horizon": 10_000},
        "axis": "delta", "values": [0.0, 0.005, 0.01, 0.02, 0.04],
    }))
    proc = subprocess.run(
        [sys.executable, "-m", "srkit.cli", "bound", "--config", str(cfg),
         "--out", str(tmp_path / "sweep")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    info = render(FigureSpec(inputs=(str(tmp_path / "sweep" / "bounds.csv"),),
                             kind="bounds", output=str(tmp_path / "bounds.png")))
    assert info.series == 2
    assert info.path.exists()

    # the data behind the figure keeps stochastic at or below nearest
    import csv as csv_mod
    with open(tmp_path / "sweep" / "bounds.csv", newline="") as f:
        for row in csv_mod.DictReader(f):
            assert float(row["sr_total"]) <= float(row["nr_total"])


def test_correlation_figure(tmp_path):
    csvs = []
    for i, delta in enumerate((0.0, 1.0, 2.0)):
        csvs.append(str(run_srkit(tmp_path, f"corr{i}", {
            "kind": "correlation", "seed": 7, "repetitions": 5,
            "params": {"rho": 1.0, "delta": delta, "d": 3000, "horizon": 4},
        })))
    info = render(FigureSpec(inputs=tuple(csvs), kind="correlation",
                             output=str(tmp_path / "corr.png")))
    assert info.series == 4
    assert info.path.exists()


def test_spec_validation():
    with pytest.raises(FigSpecError, match="kind"):
        FigureSpec.from_dict({"inputs": ["a.csv"], "kind": "pie", "output": "x.png"})
    with pytest.raises(FigSpecError, match="unknown fields"):
        FigureSpec.from_dict({"inputs": ["a.csv"], "kind": "curves",
                              "output": "x.png", "color": "red"})
