"""Render srkit experiment CSVs into figures.

Reads only the documented long-format schema
``experiment,repetition,step,metric,value`` (and the bounds sweep CSV from
the bound subcommand). Rendering is deterministic: fixed style, fixed DPI,
no timestamps in the output, so re-running a spec on unchanged data
reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .figspec import FigSpecError, FigureSpec

DPI = 120
_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "srkit-plots",
}
_METADATA = {"Software": "srkit-plots"}


@dataclass(frozen=True)
class RenderInfo:
    """What a render produced, for callers that want to assert on it."""

    path: Path
    kind: str
    series: int


def _read_metrics(path: str) -> list[dict]:
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise FigSpecError(f"inputs: cannot read {path}: {e}") from e
    if not rows:
        raise FigSpecError(f"inputs: {path} has no data rows")
    need = {"experiment", "repetition", "step", "metric", "value"}
    missing = need - set(rows[0])
    if missing:
        raise FigSpecError(f"inputs: {path} is missing columns {sorted(missing)}")
    return rows


def _series_for(rows: list[dict], metric: str, group_by: str) -> dict:
    series: dict[str, tuple[list[float], list[float], bool]] = {}
    diverged_keys = {r[group_by] for r in rows if r["metric"] == "diverged"}
    for r in rows:
        if r["metric"] != metric:
            continue
        key = r[group_by]
        xs, ys, _ = series.setdefault(key, ([], [], key in diverged_keys))
        xs.append(float(r["step"]))
        ys.append(float(r["value"]))
    return series


def _render_curves(spec: FigureSpec, ax) -> int:
    rows = []
    for p in spec.inputs:
        rows.extend(_read_metrics(p))
    series = _series_for(rows, spec.metric, spec.group_by)
    if not series:
        raise FigSpecError(f"inputs: no rows with metric {spec.metric!r} "
                           f"(column 'metric')")
    for key in sorted(series):
        xs, ys, diverged = series[key]
        order = np.argsort(xs, kind="stable")
        xs = np.asarray(xs)[order]
        ys = np.asarray(ys)[order]
        line, = ax.plot(xs, ys, label=key)
        if diverged:
            ax.plot(xs[-1], ys[-1], marker="x", markersize=10,
                    color=line.get_color())
    ax.set_xlabel(spec.xlabel or "step")
    ax.set_ylabel(spec.ylabel or spec.metric)
    ax.legend(fontsize=8)
    return len(series)


def _render_hitting(spec: FigureSpec, ax) -> int:
    rows = []
    for p in spec.inputs:
        rows.extend(_read_metrics(p))
    hits = [float(r["value"]) for r in rows if r["metric"] == "hit_step"]
    analytic = [float(r["value"]) for r in rows if r["metric"] == "analytic_mean"]
    if not hits:
        raise FigSpecError("inputs: no rows with metric 'hit_step'")
    if not analytic:
        raise FigSpecError("inputs: no rows with metric 'analytic_mean'")
    bins = min(80, max(10, int(max(hits)) - int(min(hits)) + 1))
    ax.hist(hits, bins=bins, color="#4878d0", alpha=0.8, label="empirical")
    ax.axvline(analytic[0], color="#d65f5f", linestyle="--",
               label=f"closed-form mean = {analytic[0]:g}")
    ax.axvline(float(np.mean(hits)), color="#333333", linestyle=":",
               label=f"empirical mean = {np.mean(hits):.2f}")
    ax.set_xlabel(spec.xlabel or "first-passage step")
    ax.set_ylabel(spec.ylabel or "count")
    ax.legend(fontsize=8)
    return 1


def _delta_of(path: str, fallback: float) -> float:
    manifest = Path(path).parent / "manifest.json"
    if manifest.exists():
        try:
            return float(json.loads(manifest.read_text())["spec"]["params"]["delta"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            pass
    return fallback


def _render_correlation(spec: FigureSpec, ax) -> int:
    points = []
    for i, p in enumerate(spec.inputs):
        rows = _read_metrics(p)
        vals = {r["metric"]: float(r["value"]) for r in rows}
        missing = {"corr", "corr_sr", "analytic_corr", "analytic_corr_sr"} - set(vals)
        if missing:
            raise FigSpecError(f"inputs: {p} is missing metrics {sorted(missing)}")
        points.append((_delta_of(p, float(i)), vals))
    points.sort(key=lambda t: t[0])
    deltas = [d for d, _ in points]
    for metric, label, style in (
            ("corr", "plain", "o-"), ("corr_sr", "with rounding noise", "s-")):
        ax.plot(deltas, [v[metric] for _, v in points], style, label=label)
    for metric, label in (("analytic_corr", "analytic plain"),
                          ("analytic_corr_sr", "analytic with noise")):
        ax.plot(deltas, [v[metric] for _, v in points], "--", alpha=0.6,
                label=label)
    ax.set_xlabel(spec.xlabel or "noise scale")
    ax.set_ylabel(spec.ylabel or "time-domain gradient correlation")
    ax.legend(fontsize=8)
    return 4


def _render_bounds(spec: FigureSpec, ax) -> int:
    count = 0
    for p in spec.inputs:
        try:
            with open(p, newline="") as f:
                rows = list(csv.DictReader(f))
        except OSError as e:
            raise FigSpecError(f"inputs: cannot read {p}: {e}") from e
        if not rows:
            raise FigSpecError(f"inputs: {p} has no data rows")
        cols = list(rows[0])
        for needed in ("sr_total", "nr_total"):
            if needed not in cols:
                raise FigSpecError(f"inputs: {p} is missing column {needed!r}")
        axis = cols[0]
        xs = [float(r[axis]) for r in rows]
        ax.plot(xs, [float(r["sr_total"]) for r in rows], "o-",
                label="stochastic rounding")
        ax.plot(xs, [float(r["nr_total"]) for r in rows], "s-",
                label="nearest rounding")
        ax.set_xlabel(spec.xlabel or axis)
        count += 2
    ax.set_ylabel(spec.ylabel or "convergence bound")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    return count


_RENDERERS = {
    "curves": _render_curves,
    "hitting": _render_hitting,
    "correlation": _render_correlation,
    "bounds": _render_bounds,
}


def render(spec: FigureSpec) -> RenderInfo:
    """Render one figure spec to its output path; returns what was drawn."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            series = _RENDERERS[spec.kind](spec, ax)
            if spec.title:
                ax.set_title(spec.title)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, dpi=DPI, metadata=_METADATA)
        finally:
            plt.close(fig)
    return RenderInfo(path=Path(spec.output), kind=spec.kind, series=series)
