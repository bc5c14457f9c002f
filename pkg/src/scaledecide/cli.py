"""Command-line entry point.

Subcommands communicate only through files:

    simulate  -> points.csv (+ items.jsonl), gold.csv, manifest.json
    metrics   items.jsonl -> points.csv
    validate  coverage of items/points against the manifest
    fit       points.csv -> fits.csv
    rank      points.csv -> predictions.csv (single-scale)
    decide    points.csv + fits.csv / predictions.csv -> decisions.csv
    frontier  decisions.csv -> frontier tables and SVG plots
    analyze   points.csv -> noise/spread tables and SVG plots

Exit status: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import InsufficientSamplesError, noise_spread, pareto_frontier
from .decision import (
    Method,
    Prediction,
    decision_accuracy,
    fit_recipe,
    gold_targets,
    predict_multi_scale,
    prediction_error,
    rank_single_scale,
    seed_attempts,
)
from .budget import BudgetReport
from .ingest import (
    ManifestError,
    RecordError,
    SuiteManifest,
    coverage_report,
    dump_item_records,
    dump_manifest,
    parse_item_records,
    parse_manifest,
    read_metric_points,
    write_metric_points,
)
from .metrics import ALL_METRICS, DEFAULT_LOSS_METRIC, LOSS_METRICS, parse_metric_name
from .report import (
    DECISION_COLUMNS,
    FIT_COLUMNS,
    FRONTIER_COLUMNS,
    NOISE_COLUMNS,
    decision_row,
    fit_rows,
    frontier_from_rows,
    frontier_row,
    noise_row,
    plot_decisions,
    plot_frontier,
    plot_noise_spread,
    read_table,
    render_table,
    write_text,
)
from .scaling import (
    VARIANTS,
    FitChain,
    FitResult,
    NDParams,
    PowerLawParams,
    SigmoidParams,
    SingleStepParams,
    resolve_subset,
    subset_labels,
)
from .synthetic import gen_suite, true_gold, truths_from_manifest

log = logging.getLogger("scaledecide")

BUNDLED_MANIFEST = Path(__file__).with_name("data") / "synthetic_noiseless.yaml"
PREDICTION_COLUMNS = ["method", "size", "step", "seed", "metric", "task", "recipe", "predicted", "flops", "target_flops"]
GOLD_COLUMNS = ["recipe", "metric", "size", "value"]


class ValidationFailure(Exception):
    """Input is well-formed but fails a check; maps to exit status 1."""


# --------------------------------------------------------------------------- io helpers

def _read(path: str | Path) -> str:
    p = Path(path)
    if not p.exists():
        raise ValidationFailure(f"no such file: {p}")
    return p.read_text()


def _manifest(path) -> SuiteManifest:
    return parse_manifest(_read(path))


def _points(path):
    return read_metric_points(_read(path))


def _tasks(args, manifest):
    return tuple(args.tasks) if args.tasks else manifest.target.tasks


def _map(fn, items, jobs):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------- subcommands

def cmd_validate(args) -> int:
    manifest = _manifest(args.manifest)
    records = []
    if args.items:
        records.extend(parse_item_records(_read(args.items)))
    if args.points:
        records.extend(_points(args.points))
    report = coverage_report(records, manifest)
    counts = defaultdict(int)
    for cell in report.cells:
        counts[cell.status] += 1
    print(f"runs: {len(report.cells)} " + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    for cell in report.flagged:
        log.warning("%s run %s/%s/%s (max step %s, %.0f%%)", cell.status, cell.recipe, cell.size_label, cell.seed,
                    cell.max_step, 100 * cell.fraction)
    for run in report.unknown_runs:
        log.error("run not declared in manifest: %s/%s/%s", *run)
    for key in report.out_of_range:
        log.error("checkpoint beyond declared training: %s/%s/%s step %d", key.recipe, key.size_label, key.seed, key.step)
    if report.unknown_runs or report.out_of_range:
        return 1
    return 0


def cmd_metrics(args) -> int:
    records = parse_item_records(_read(args.items))
    metrics = args.metric or list(ALL_METRICS) + [DEFAULT_LOSS_METRIC]
    for m in metrics:
        parse_metric_name(m)
    from .metrics import compute_all

    points = compute_all(records, metrics, jobs=args.jobs)
    write_text(args.out, write_metric_points(points))
    print(f"wrote {len(points)} metric points to {args.out}")
    return 0


def _fit_job(job):
    points, manifest, recipe, task, variant, subset, sizes, metric, loss_metric = job
    chain = fit_recipe(points, manifest, recipe, task, variant, sizes, metric=metric, loss_metric=loss_metric)
    return fit_rows(recipe, task, subset, chain.fits)


def _fit_ladder(manifest, include_target: bool):
    sizes = list(manifest.size_labels)
    if not include_target:
        sizes = [s for s in sizes if s != manifest.target.size_label]
    return sizes


def cmd_fit(args) -> int:
    manifest = _manifest(args.manifest)
    points = _points(args.points)
    tasks = _tasks(args, manifest)
    metric = args.metric or manifest.target.metric
    ladder = _fit_ladder(manifest, args.include_target)
    subsets = []
    for label in args.subset or ["all"]:
        if label == "sweep":
            subsets.extend(subset_labels(ladder))
        else:
            subsets.append((label, resolve_subset(label, ladder)))
    by_recipe = defaultdict(list)
    for p in points:
        by_recipe[p.key.recipe].append(p)
    jobs = [
        (by_recipe[recipe], manifest, recipe, task, variant, label, sizes, metric, args.loss_metric)
        for variant in args.variant or ["three_param"]
        for label, sizes in subsets
        for recipe in manifest.recipes
        for task in tasks
    ]
    rows = [r for chunk in _map(_fit_job, jobs, args.jobs) for r in chunk]
    write_text(args.out, render_table(rows, FIT_COLUMNS))
    n_bad = sum(1 for r in rows if not r["converged"])
    print(f"wrote {len(rows)} fit rows to {args.out} ({n_bad} not converged)")
    return 0


def cmd_rank(args) -> int:
    manifest = _manifest(args.manifest)
    points = _points(args.points)
    tasks = _tasks(args, manifest)
    metric = args.metric or manifest.target.metric
    sizes = args.sizes or list(manifest.size_labels)
    checkpoints = defaultdict(set)
    for p in points:
        if p.metric == metric and p.key.size_label in sizes:
            checkpoints[(p.key.size_label, p.key.seed)].add(p.key.step)
    rows = []
    for size in sizes:
        for seed in manifest.seeds:
            for step in sorted(checkpoints.get((size, seed), ())):
                for task_group in [(t,) for t in tasks] + ([tasks] if len(tasks) > 1 else []):
                    try:
                        pred = rank_single_scale(points, manifest, size, step, seed, metric, task_group)
                    except ValueError:
                        # not every recipe reached this checkpoint
                        continue
                    task = task_group[0] if len(task_group) == 1 else "macro"
                    for recipe, v in pred.values.items():
                        rows.append({
                            "method": "single", "size": size, "step": step, "seed": seed, "metric": metric,
                            "task": task, "recipe": recipe, "predicted": float(v),
                            "flops": float(pred.budget.flops), "target_flops": float(pred.budget.target_flops),
                        })
    write_text(args.out, render_table(rows, PREDICTION_COLUMNS))
    print(f"wrote {len(rows)} single-scale predictions to {args.out}")
    return 0


def _params_from_row(row) -> object:
    d = json.loads(row["params"])
    if row["stage"] == "acc":
        return SigmoidParams(**d)
    if row["stage"] == "single":
        return SingleStepParams(**d)
    if row["variant"] == "five_param_nd":
        return NDParams(**d)
    return PowerLawParams(**d)


def chains_from_rows(rows) -> dict:
    """{(variant, subset): {recipe: {task: FitChain}}} from a fits table."""
    stages = defaultdict(dict)
    for r in rows:
        fit = FitResult(
            variant=r["variant"], stage=r["stage"], params=_params_from_row(r), sse=float(r["sse"]),
            n_points=int(r["n_points"]), converged=r["converged"] == "true", n_restarts_used=int(r["n_restarts_used"]),
        )
        stages[(r["variant"], r["subset"], r["recipe"], r["task"])][r["stage"]] = fit
    out = defaultdict(lambda: defaultdict(dict))
    for (variant, subset, recipe, task), st in stages.items():
        acc = st.get("acc") or st.get("single")
        out[(variant, subset)][recipe][task] = FitChain(variant, acc, st.get("loss"))
    return out


def cmd_decide(args) -> int:
    if not args.fits and not args.predictions:
        raise UsageError("decide needs --fits and/or --predictions")
    manifest = _manifest(args.manifest)
    points = _points(args.points)
    tasks = _tasks(args, manifest)
    gold_metric = args.gold_metric or manifest.target.metric
    golds = {t: gold_targets(points, manifest, gold_metric, [t]) for t in tasks}
    golds["macro"] = gold_targets(points, manifest, gold_metric, tasks)
    rows, error_rows = [], []

    if args.predictions:
        preds = read_table(_read(args.predictions))
        groups = defaultdict(lambda: defaultdict(dict))
        meta = {}
        for r in preds:
            g = (r["size"], int(r["step"]), r["metric"], r["task"])
            groups[g][r["seed"]][r["recipe"]] = float(r["predicted"])
            meta[(g, r["seed"])] = (float(r["flops"]), float(r["target_flops"]))
        for g in sorted(groups, key=lambda g: (manifest.size_labels.index(g[0]), g[1], g[2], g[3])):
            size, step, metric, task = g
            if task not in golds:
                continue
            attempts = []
            for seed, values in sorted(groups[g].items()):
                flops, tflops = meta[(g, seed)]
                method = Method("single", metric, size=size, step=step, seed=seed)
                attempts.append(Prediction(values, method, BudgetReport(flops, tflops)))
            report = seed_attempts(attempts, golds[task])
            rows.append(decision_row(report, task))

    if args.fits:
        chains = chains_from_rows(read_table(_read(args.fits)))
        for (variant, subset), per_recipe in sorted(chains.items(), key=lambda kv: (kv[0][0], _subset_order(kv[0][1]))):
            sizes = _fit_sizes(subset, manifest, args.include_target)
            task_names = sorted({t for v in per_recipe.values() for t in v})
            for task in task_names + (["macro"] if len(task_names) > 1 else []):
                if task == "macro":
                    fits = {r: {t: c for t, c in v.items() if t in tasks} for r, v in per_recipe.items()}
                else:
                    fits = {r: v[task] for r, v in per_recipe.items() if task in v}
                pred = predict_multi_scale(fits, manifest, sizes, subset=subset, best_effort=args.best_effort)
                gold = golds.get(task) or gold_targets(points, manifest, gold_metric, [task])
                report = decision_accuracy(pred, gold)
                rows.append(decision_row(report, task))
                err = prediction_error(pred, gold)
                error_rows.append({
                    "method": pred.method.label, "task": task,
                    "mean_absolute_error": float(err.mean_absolute), "mean_relative_error": float(err.mean_relative),
                })

    write_text(args.out, render_table(rows, DECISION_COLUMNS))
    if args.errors:
        write_text(args.errors, render_table(error_rows, ["method", "task", "mean_absolute_error", "mean_relative_error"]))
    for r in rows:
        if r["task"] == "macro" or len(tasks) == 1:
            print(f"{r['method']:<32} {r['task']:<10} flops={r['flops']:.3e} ({r['percent_of_target']:.4f}%) "
                  f"decision_accuracy={r['decision_accuracy']:.4f}")
    return 0


def _subset_order(label: str):
    kind, _, arg = label.partition(":")
    return (kind, int(arg) if arg.isdigit() else 0, arg)


def _fit_sizes(subset: str, manifest, include_target: bool) -> tuple[str, ...]:
    return resolve_subset(subset, _fit_ladder(manifest, include_target))


def cmd_frontier(args) -> int:
    rows = read_table(_read(args.decisions))
    out = Path(args.out_dir)
    by_task = defaultdict(list)
    for r in rows:
        by_task[(r["task"], r["metric"])].append(r)
    if not by_task:
        write_text(out / "frontier.csv", render_table([], FRONTIER_COLUMNS))
        return 0
    for (task, metric), rs in sorted(by_task.items()):
        if args.task and task not in args.task:
            continue
        pts = frontier_from_rows(rs)
        front = pareto_frontier(pts)
        write_text(out / f"frontier-{task}-{metric}.csv", render_table([frontier_row(p) for p in front], FRONTIER_COLUMNS))
        plot_frontier(pts, out / f"frontier-{task}-{metric}.svg", title=f"{task} ({metric})")
        plot_decisions(rs, out / f"decisions-{task}-{metric}.svg", title=f"{task} ({metric})")
        print(f"{task}/{metric}: {len(front)} of {len(pts)} methods on the frontier")
    return 0


def cmd_analyze(args) -> int:
    manifest = _manifest(args.manifest)
    points = _points(args.points)
    tasks = _tasks(args, manifest)
    size = args.size or manifest.target.size_label
    metrics = args.metric or [manifest.target.metric]
    da_lookup = {}
    if args.decisions:
        for r in read_table(_read(args.decisions)):
            if r["method"].startswith("single") and r["scale"] == size:
                da_lookup.setdefault((r["task"], r["metric"]), []).append((int(r["step"] or 0), float(r["decision_accuracy"])))
    out = Path(args.out_dir)
    rows_all = []
    for metric in metrics:
        res = []
        for task in tasks:
            da = max(da_lookup.get((task, metric), [(0, None)]))[1]
            try:
                res.append(noise_spread(points, manifest, size, task, metric, da))
            except InsufficientSamplesError as e:
                log.warning("%s/%s: %s", task, metric, e)
        rows_all.extend(noise_row(p) for p in res)
        plot_noise_spread(res, out / f"noise-{size}-{metric}.svg", title=f"{size} ({metric})")
    write_text(out / f"noise-{size}.csv", render_table(rows_all, NOISE_COLUMNS))
    for r in rows_all:
        print(f"{r['task']:<16} {r['metric']:<28} noise={r['noise']:.5f} spread={r['spread']:.5f}")
    return 0


def cmd_simulate(args) -> int:
    manifest = _manifest(args.manifest or BUNDLED_MANIFEST)
    section = manifest.extensions.get("synthetic", {})
    truths = truths_from_manifest(manifest)
    rng_seed = args.rng_seed if args.rng_seed is not None else int(section.get("rng_seed", 0))
    suite = gen_suite(
        truths,
        manifest,
        rng_seed,
        n_checkpoints=int(section.get("n_checkpoints", 8)),
        loss_metric=section.get("loss_metric", DEFAULT_LOSS_METRIC),
        items=args.items,
        n_items=int(section.get("n_items", 4)),
    )
    out = Path(args.out_dir)
    write_text(out / "manifest.json", dump_manifest(manifest))
    write_text(out / "points.csv", write_metric_points(suite.points))
    if args.items:
        write_text(out / "items.jsonl", dump_item_records(suite.items))
    gold = true_gold(truths, manifest)
    write_text(out / "gold.csv", render_table(
        [{"recipe": r, "metric": gold.metric, "size": gold.size_label, "value": float(v)} for r, v in gold.values.items()],
        GOLD_COLUMNS,
    ))
    print(f"simulated {len(manifest.recipes)} recipes x {len(manifest.ladder)} sizes x {len(manifest.seeds)} seeds "
          f"-> {out}")
    return 0


# --------------------------------------------------------------------------- parser

class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scaledecide", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp, jobs=False):
        sp.add_argument("--rng-seed", type=int, default=None, help="seed for every random draw")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("validate", help="coverage report of records against a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--items")
    sp.add_argument("--points")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("metrics", help="item records -> metric points")
    sp.add_argument("--items", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metric", action="append", choices=list(ALL_METRICS) + list(LOSS_METRICS))
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("fit", help="scaling-law fits per recipe and task")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--points", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant", action="append", choices=sorted(VARIANTS))
    sp.add_argument("--subset", action="append", help="prefix:k, suffix:k, sizes:a,b,c, all, or sweep")
    sp.add_argument("--metric")
    sp.add_argument("--loss-metric", default=DEFAULT_LOSS_METRIC)
    sp.add_argument("--tasks", nargs="+")
    sp.add_argument("--include-target", action="store_true", help="allow the target size in fits")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("rank", help="single-scale predictions at every checkpoint")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--points", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metric")
    sp.add_argument("--tasks", nargs="+")
    sp.add_argument("--sizes", nargs="+")
    common(sp)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("decide", help="decision accuracy of predictions against gold")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--points", required=True)
    sp.add_argument("--fits")
    sp.add_argument("--predictions")
    sp.add_argument("--out", required=True)
    sp.add_argument("--errors", help="also write mean prediction errors of multi-scale fits")
    sp.add_argument("--gold-metric")
    sp.add_argument("--tasks", nargs="+")
    sp.add_argument("--include-target", action="store_true")
    sp.add_argument("--best-effort", action="store_true", help="use fits that did not converge")
    common(sp)
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("frontier", help="Pareto frontier tables and plots from decisions")
    sp.add_argument("--decisions", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--task", action="append")
    common(sp)
    sp.set_defaults(func=cmd_frontier)

    sp = sub.add_parser("analyze", help="noise vs spread at a fully trained size")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--points", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--size")
    sp.add_argument("--metric", action="append")
    sp.add_argument("--tasks", nargs="+")
    sp.add_argument("--decisions")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="synthetic suite from the manifest's ground truths")
    sp.add_argument("--manifest", help="defaults to the bundled noiseless config")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--items", action="store_true", help="also write item records")
    common(sp)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"scaledecide: error: {e}", file=sys.stderr)
        return 2
    except (ValidationFailure, ManifestError, RecordError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"scaledecide: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
