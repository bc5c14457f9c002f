"""CSV tables and static SVG plots for decision, frontier, noise and fit results.

Output bytes depend only on the inputs: floats are written with ``repr`` and
SVGs are rendered with a fixed hash salt and no timestamp.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import FrontierPoint, NoiseSpreadPoint, pareto_frontier  # noqa: E402
from .decision import DecisionReport  # noqa: E402
from .scaling import FitResult  # noqa: E402

DECISION_COLUMNS = [
    "method", "task", "scale", "step", "metric", "flops", "percent_of_target",
    "decision_accuracy", "da_std", "n_attempts", "n_pairs", "n_excluded_pairs",
]
NOISE_COLUMNS = ["task", "metric", "size", "noise", "spread", "n_recipes", "n_seeds", "decision_accuracy"]
FRONTIER_COLUMNS = ["method", "flops", "decision_accuracy", "std"]
FIT_COLUMNS = ["recipe", "task", "variant", "subset", "stage", "params", "sse", "n_points", "converged", "n_restarts_used"]

_SVG_RC = {"svg.hashsalt": "scaledecide", "svg.fonttype": "none", "path.simplify": False}
# fixed margins: tight_layout costs a text-extent pass per figure
_MARGINS = {"left": 0.14, "bottom": 0.13, "right": 0.97, "top": 0.9}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_table(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def read_table(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def decision_row(report: DecisionReport, task: str = "macro") -> dict:
    m = report.method
    b = report.budget
    return {
        "method": m.label if m else "",
        "task": task,
        "scale": m.scale if m else "",
        "step": m.step if m and m.step is not None else None,
        "metric": m.metric if m else "",
        "flops": float(b.flops) if b else None,
        "percent_of_target": float(b.percent_of_target) if b else None,
        "decision_accuracy": float(report.decision_accuracy),
        "da_std": float(report.da_std or 0.0),
        "n_attempts": report.n_attempts,
        "n_pairs": report.n_pairs,
        "n_excluded_pairs": report.n_excluded_pairs,
    }


def noise_row(p: NoiseSpreadPoint) -> dict:
    return {
        "task": p.task, "metric": p.metric, "size": p.size_label, "noise": float(p.noise),
        "spread": float(p.spread), "n_recipes": p.n_recipes, "n_seeds": p.n_seeds,
        "decision_accuracy": None if p.decision_accuracy is None else float(p.decision_accuracy),
    }


def frontier_row(p: FrontierPoint) -> dict:
    return {"method": p.method, "flops": float(p.flops), "decision_accuracy": float(p.decision_accuracy), "std": float(p.std)}


def fit_rows(recipe: str, task: str, subset: str, fits: Sequence[FitResult]) -> list[dict]:
    return [
        {
            "recipe": recipe, "task": task, "variant": f.variant, "subset": subset, "stage": f.stage,
            "params": json.dumps({k: v for k, v in f.params.as_dict().items()}, sort_keys=True),
            "sse": float(f.sse), "n_points": f.n_points, "converged": f.converged,
            "n_restarts_used": f.n_restarts_used,
        }
        for f in fits
    ]


def write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e
    return path


# --------------------------------------------------------------------------- plots

def _save_svg(fig, path) -> Path:
    buf = io.StringIO()
    with plt.rc_context(_SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return write_text(path, buf.getvalue())


def plot_frontier(points: Sequence[FrontierPoint], path, title: str = "") -> Path:
    """All methods as markers plus the Pareto frontier as a step line, log-compute x axis."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        if points:
            xs = [p.flops for p in points]
            ys = [p.decision_accuracy for p in points]
            ax.errorbar(xs, ys, yerr=[p.std for p in points], fmt="none", ecolor="0.7", lw=0.8, gid="errorbars")
            ax.plot(xs, ys, "o", ms=4, color="tab:blue", gid="points")
            front = pareto_frontier(points)
            ax.step(
                [p.flops for p in front], [p.decision_accuracy for p in front],
                where="post", color="tab:red", lw=1.2, gid="frontier",
            )
        ax.set_xscale("log")
        ax.set_xlabel("compute (FLOPs)")
        ax.set_ylabel("decision accuracy")
        if title:
            ax.set_title(title)
        fig.subplots_adjust(**_MARGINS)
    return _save_svg(fig, path)


def plot_noise_spread(points: Sequence[NoiseSpreadPoint], path, title: str = "") -> Path:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        if points:
            ax.plot([p.noise for p in points], [p.spread for p in points], "o", ms=4, gid="points")
            for p in points:
                ax.annotate(p.task, (p.noise, p.spread), fontsize=6, xytext=(2, 2), textcoords="offset points")
        ax.set_xlabel("noise (seed std)")
        ax.set_ylabel("spread (recipe std)")
        if title:
            ax.set_title(title)
        fig.subplots_adjust(**_MARGINS)
    return _save_svg(fig, path)


def plot_decisions(rows: Sequence[Mapping], path, title: str = "") -> Path:
    """Decision accuracy against compute, one series per method family."""
    series: dict[str, list] = {}
    for r in rows:
        fam = str(r["method"]).split(":")[0] if not str(r["method"]).startswith("single") else f"single:{r['scale']}"
        series.setdefault(fam, []).append(r)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for i, (fam, rs) in enumerate(sorted(series.items())):
            rs = sorted(rs, key=lambda r: float(r["flops"]))
            xs = [float(r["flops"]) for r in rs]
            ys = [float(r["decision_accuracy"]) for r in rs]
            ax.plot(xs, ys, "o-" if fam.startswith("single") else "*", ms=4, lw=0.8, label=fam, gid=f"series-{i}")
        ax.set_xscale("log")
        ax.set_xlabel("compute (FLOPs)")
        ax.set_ylabel("decision accuracy")
        if series:
            ax.legend(fontsize=6, ncol=2)
        if title:
            ax.set_title(title)
        fig.subplots_adjust(**_MARGINS)
    return _save_svg(fig, path)


def emit_report(items: Sequence, path, format: str = "table", kind: str | None = None) -> Path:
    """Write decision reports, noise/spread points or frontier points as a table or SVG plot.

    ``kind`` ("decision", "noise" or "frontier") is inferred from the items;
    pass it to choose the columns of an empty report.
    """
    kind = kind or _kind(items)
    if kind not in ("decision", "noise", "frontier"):
        raise ValueError(f"unknown report kind {kind!r}")
    if format == "table":
        if kind == "decision":
            return write_text(path, render_table([decision_row(r) for r in items], DECISION_COLUMNS))
        if kind == "noise":
            return write_text(path, render_table([noise_row(p) for p in items], NOISE_COLUMNS))
        return write_text(path, render_table([frontier_row(p) for p in items], FRONTIER_COLUMNS))
    if format in ("svg", "vector-plot"):
        if kind == "decision":
            return plot_decisions([decision_row(r) for r in items], path)
        if kind == "noise":
            return plot_noise_spread(list(items), path)
        return plot_frontier(list(items), path)
    raise ValueError(f"unknown report format {format!r}")


def _kind(items) -> str:
    if not items:
        return "frontier"
    first = items[0]
    if isinstance(first, DecisionReport):
        return "decision"
    if isinstance(first, NoiseSpreadPoint):
        return "noise"
    if isinstance(first, FrontierPoint):
        return "frontier"
    raise TypeError(f"cannot report on {type(first).__name__}")


def frontier_from_rows(rows: Sequence[Mapping]) -> list[FrontierPoint]:
    out = []
    for r in rows:
        flops = float(r["flops"])
        da = float(r["decision_accuracy"])
        if flops > 0 and not math.isnan(da):
            out.append(FrontierPoint(f"{r['method']}|{r.get('task', '')}", flops, da, float(r.get("da_std") or 0.0)))
    return out
