"""Gold rankings, single- and multi-scale predictions, and pairwise decision scoring."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .budget import BudgetReport, multi_scale_budget, single_scale_budget
from .ingest import MetricPoint, SuiteManifest
from .metrics import DEFAULT_LOSS_METRIC
from .scaling import (
    FitChain,
    fit_chain,
    get_variant,
    predict_at_target,
    smooth_final_loss,
)


class MissingCellsError(ValueError):
    def __init__(self, message: str, cells: Sequence[tuple]):
        self.cells = tuple(cells)
        shown = ", ".join("/".join(map(str, c)) for c in self.cells[:10])
        more = f" (+{len(self.cells) - 10} more)" if len(self.cells) > 10 else ""
        super().__init__(f"{message}: {shown}{more}")


class RecipeMismatchError(ValueError):
    def __init__(self, only_pred: Sequence[str], only_gold: Sequence[str]):
        self.only_pred = tuple(sorted(only_pred))
        self.only_gold = tuple(sorted(only_gold))
        parts = []
        if self.only_pred:
            parts.append(f"predicted but not in gold: {', '.join(self.only_pred)}")
        if self.only_gold:
            parts.append(f"in gold but not predicted: {', '.join(self.only_gold)}")
        super().__init__("recipe sets differ; " + "; ".join(parts))


@dataclass(frozen=True)
class Method:
    """What produced a prediction."""

    kind: str  # single | multi
    metric: str
    size: str | None = None
    step: int | None = None
    seed: str | None = None
    variant: str | None = None
    subset: str | None = None
    sizes: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        if self.kind == "single":
            return f"single:{self.size}@{self.step}"
        return f"{self.variant}:{self.subset}"

    @property
    def scale(self) -> str:
        return self.size if self.kind == "single" else (self.subset or ",".join(self.sizes))


@dataclass(frozen=True)
class GoldRanking:
    values: Mapping[str, float]
    metric: str
    size_label: str
    tasks: tuple[str, ...]


@dataclass(frozen=True)
class Prediction:
    values: Mapping[str, float]
    method: Method
    budget: BudgetReport
    tasks: tuple[str, ...] = ()


@dataclass(frozen=True)
class PairOutcome:
    a: str
    b: str
    gold_sign: int
    pred_sign: int

    @property
    def excluded(self) -> bool:
        return self.gold_sign == 0

    @property
    def correct(self) -> bool:
        return not self.excluded and self.pred_sign == self.gold_sign


@dataclass(frozen=True)
class DecisionReport:
    decision_accuracy: float
    n_pairs: int
    n_excluded_pairs: int
    pairs: tuple[PairOutcome, ...]
    budget: BudgetReport | None = None
    method: Method | None = None
    tasks: tuple[str, ...] = ()
    da_mean: float | None = None
    da_std: float | None = None
    std_defined: bool = True
    n_attempts: int = 1
    attempts: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class PredictionErrorReport:
    absolute: Mapping[str, float]  # percentage points
    relative: Mapping[str, float | None]  # percent; None where actual == 0
    undefined_relative: tuple[str, ...]

    @property
    def mean_absolute(self) -> float:
        return statistics.fmean(self.absolute.values())

    @property
    def mean_relative(self) -> float:
        vals = [v for v in self.relative.values() if v is not None]
        return statistics.fmean(vals) if vals else math.nan


# --------------------------------------------------------------------------- helpers over metric points

def _mean(values) -> float:
    # exact-fraction mean: averaging equal values returns that value
    return float(statistics.mean(values))


def _select(points: Sequence[MetricPoint], metric: str, tasks: Sequence[str] | None = None, size: str | None = None):
    tasks = None if tasks is None else set(tasks)
    for p in points:
        if p.metric != metric:
            continue
        if tasks is not None and p.task not in tasks:
            continue
        if size is not None and p.key.size_label != size:
            continue
        yield p


def final_values(points, metric, tasks, size) -> dict[tuple[str, str, str], tuple[int, float]]:
    """{(recipe, seed, task): (final step, value)} at the max step of each run."""
    out: dict = {}
    for p in _select(points, metric, tasks, size):
        k = (p.key.recipe, p.key.seed, p.task)
        if k not in out or p.key.step > out[k][0]:
            out[k] = (p.key.step, p.value)
    return out


def gold_targets(
    points: Sequence[MetricPoint],
    manifest: SuiteManifest,
    metric: str | None = None,
    tasks: Sequence[str] | None = None,
) -> GoldRanking:
    """Per recipe: macro-average over tasks at the target size's final checkpoint, then mean over seeds."""
    metric = metric or manifest.target.metric
    tasks = tuple(tasks or manifest.target.tasks)
    size = manifest.target.size_label
    finals = final_values(points, metric, tasks, size)
    missing = [
        (r, size, s, t)
        for r in manifest.recipes
        for s in manifest.seeds
        for t in tasks
        if (r, s, t) not in finals
    ]
    if missing:
        raise MissingCellsError("missing target-scale final checkpoints (recipe/size/seed/task)", missing)
    values = {}
    for r in manifest.recipes:
        per_seed = [_mean(finals[(r, s, t)][1] for t in tasks) for s in manifest.seeds]
        values[r] = _mean(per_seed)
    return GoldRanking(values, metric, size, tasks)


def rank_single_scale(
    points: Sequence[MetricPoint],
    manifest: SuiteManifest,
    size: str,
    step: int | None = None,
    seed: str | None = None,
    metric: str | None = None,
    tasks: Sequence[str] | None = None,
) -> Prediction:
    """Predict each recipe by its own (macro-averaged) metric at one small-scale checkpoint.

    ``step=None`` uses each run's final checkpoint.
    """
    metric = metric or manifest.target.metric
    tasks = tuple(tasks or manifest.target.tasks)
    seed = seed or manifest.default_seed
    manifest.config(size)
    by_cell: dict = {}
    for p in _select(points, metric, tasks, size):
        if p.key.seed != seed:
            continue
        cell = (p.key.recipe, p.task)
        if step is None:
            if cell not in by_cell or p.key.step > by_cell[cell].key.step:
                by_cell[cell] = p
        elif p.key.step == step:
            by_cell[cell] = p
    missing = [(r, size, seed, step, t) for r in manifest.recipes for t in tasks if (r, t) not in by_cell]
    if missing:
        raise MissingCellsError("missing single-scale points (recipe/size/seed/step/task)", missing)
    values = {r: _mean(by_cell[(r, t)].value for t in tasks) for r in manifest.recipes}
    # one checkpoint across recipes is the norm; charge the largest if they differ
    tokens = max(by_cell[(r, t)].key.tokens_seen for r in manifest.recipes for t in tasks)
    steps = {by_cell[(r, t)].key.step for r in manifest.recipes for t in tasks}
    used_step = step if step is not None else max(steps)
    budget = single_scale_budget(manifest, size, tokens)
    method = Method("single", metric, size=size, step=used_step, seed=seed)
    return Prediction(values, method, budget, tasks)


def fit_recipe(
    points: Sequence[MetricPoint],
    manifest: SuiteManifest,
    recipe: str,
    task: str,
    variant: str,
    sizes: Sequence[str],
    metric: str | None = None,
    loss_metric: str = DEFAULT_LOSS_METRIC,
    seed: str | None = None,
) -> FitChain:
    """Fit one scaling-law chain for ``recipe`` on ``task`` using the runs of ``sizes``."""
    spec = get_variant(variant)
    metric = metric or manifest.target.metric
    seed = seed or manifest.default_seed
    sizes = tuple(sizes)
    size_set = set(sizes)
    loss_series: dict = defaultdict(dict)
    metric_series: dict = defaultdict(dict)
    for p in points:
        k = p.key
        if k.recipe != recipe or k.seed != seed or p.task != task or k.size_label not in size_set:
            continue
        if p.metric == metric:
            metric_series[k.size_label][k.step] = p
        if p.metric == loss_metric:
            loss_series[k.size_label][k.step] = p

    ckpt_x, ckpt_nd, ckpt_loss, ckpt_val, ckpt_step, ckpt_run = [], [], [], [], [], []
    for size in sizes:
        cfg = manifest.config(size)
        for step in sorted(metric_series[size]):
            mp = metric_series[size][step]
            if spec.two_step:
                lp = loss_series[size].get(step)
                if lp is None:
                    continue
                ckpt_loss.append(lp.value)
            elif mp.key.tokens_seen <= 0:
                continue
            ckpt_val.append(mp.value)
            ckpt_step.append(step)
            ckpt_run.append(size)
            ckpt_x.append(6.0 * cfg.non_embedding_params * mp.key.tokens_seen)
            ckpt_nd.append((cfg.non_embedding_params, mp.key.tokens_seen))

    if not spec.two_step:
        x = (np.array([n for n, _ in ckpt_nd], float), np.array([d for _, d in ckpt_nd], float)) if spec.uses_nd else ckpt_x
        return fit_chain(spec, ckpt_x=x, ckpt_values=ckpt_val)

    final_c, final_n, final_d, final_l = [], [], [], []
    not_final = []
    for size in sizes:
        cfg = manifest.config(size)
        series = loss_series[size]
        if not series or max(series) < cfg.train_steps:
            not_final.append((recipe, size, seed, task))
            continue
        steps = sorted(series)
        final_l.append(smooth_final_loss(steps, [series[s].value for s in steps]))
        final_c.append(cfg.flops)
        final_n.append(cfg.non_embedding_params)
        final_d.append(cfg.tokens_trained)
    if not_final:
        raise MissingCellsError(f"no fully trained '{loss_metric}' series for", not_final)
    final_x = (np.array(final_n, float), np.array(final_d, float)) if spec.uses_nd else final_c
    return fit_chain(
        spec,
        final_x=final_x,
        final_losses=final_l,
        ckpt_losses=ckpt_loss,
        ckpt_values=ckpt_val,
        ckpt_steps=ckpt_step,
        ckpt_runs=ckpt_run,
    )


def target_scale(manifest: SuiteManifest) -> tuple[float, float]:
    cfg = manifest.target_config
    return (float(cfg.non_embedding_params), float(cfg.tokens_trained))


def predict_multi_scale(
    fits: Mapping[str, FitChain | Mapping[str, FitChain]],
    manifest: SuiteManifest,
    sizes: Sequence[str],
    subset: str | None = None,
    metric: str | None = None,
    best_effort: bool = False,
) -> Prediction:
    """Extrapolate every recipe's fit chain(s) to the target scale.

    ``fits`` maps recipe -> chain, or recipe -> {task: chain}; per-task
    predictions are macro-averaged.
    """
    target = target_scale(manifest)
    variants = set()
    task_sets = set()
    values = {}
    for recipe, entry in fits.items():
        chains = entry if isinstance(entry, Mapping) else {"": entry}
        task_sets.add(tuple(sorted(chains)))
        preds = []
        for chain in chains.values():
            variants.add(chain.variant)
            preds.append(predict_at_target(chain, target, best_effort=best_effort))
        values[recipe] = _mean(preds)
    if len(variants) > 1:
        raise ValueError(f"fits mix scaling-law variants: {sorted(variants)}")
    if len(task_sets) > 1:
        raise ValueError("fits cover different task sets across recipes")
    (variant,) = variants or {None}
    tasks = tuple(t for t in (next(iter(task_sets)) if task_sets else ()) if t)
    method = Method(
        "multi",
        metric or manifest.target.metric,
        variant=variant,
        subset=subset or "sizes:" + ",".join(sizes),
        sizes=tuple(sizes),
    )
    return Prediction(values, method, multi_scale_budget(manifest, sizes), tasks)


# --------------------------------------------------------------------------- scoring

def _sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


def _check_recipes(pred: Mapping[str, float], gold: Mapping[str, float]) -> list[str]:
    if set(pred) != set(gold):
        raise RecipeMismatchError(set(pred) - set(gold), set(gold) - set(pred))
    return sorted(gold)


def decision_accuracy(pred: Prediction, gold: GoldRanking) -> DecisionReport:
    """Fraction of recipe pairs whose predicted winner matches the gold winner.

    Pairs tied in gold are excluded (and counted); predicted ties score as wrong.
    """
    recipes = _check_recipes(pred.values, gold.values)
    pairs = []
    for a, b in combinations(recipes, 2):
        pairs.append(
            PairOutcome(a, b, _sign(gold.values[a] - gold.values[b]), _sign(pred.values[a] - pred.values[b]))
        )
    scored = [p for p in pairs if not p.excluded]
    da = sum(p.correct for p in scored) / len(scored) if scored else math.nan
    return DecisionReport(
        decision_accuracy=da,
        n_pairs=len(pairs),
        n_excluded_pairs=len(pairs) - len(scored),
        pairs=tuple(pairs),
        budget=pred.budget,
        method=pred.method,
        tasks=pred.tasks or gold.tasks,
        da_mean=da,
        da_std=0.0,
        attempts=(da,),
    )


def seed_attempts(preds: Sequence[Prediction], gold: GoldRanking) -> DecisionReport:
    """Score several attempts (e.g. one per seed) and summarize mean and sample std."""
    if not preds:
        raise ValueError("need at least one prediction attempt")
    reports = [decision_accuracy(p, gold) for p in preds]
    accs = [r.decision_accuracy for r in reports]
    mean = statistics.fmean(accs)
    if len(accs) > 1:
        std, defined = statistics.stdev(accs), True
    else:
        std, defined = 0.0, False
    first = reports[0]
    return DecisionReport(
        decision_accuracy=mean,
        n_pairs=first.n_pairs,
        n_excluded_pairs=first.n_excluded_pairs,
        pairs=first.pairs,
        budget=first.budget,
        method=first.method,
        tasks=first.tasks,
        da_mean=mean,
        da_std=std,
        std_defined=defined,
        n_attempts=len(accs),
        attempts=tuple(accs),
    )


def prediction_error(pred: Prediction, gold: GoldRanking) -> PredictionErrorReport:
    """Absolute error in percentage points and relative error in percent, per recipe."""
    recipes = _check_recipes(pred.values, gold.values)
    absolute, relative, undefined = {}, {}, []
    for r in recipes:
        diff = abs(pred.values[r] - gold.values[r])
        absolute[r] = diff * 100.0
        if gold.values[r] == 0:
            relative[r] = None
            undefined.append(r)
        else:
            relative[r] = diff / abs(gold.values[r]) * 100.0
    return PredictionErrorReport(absolute, relative, tuple(undefined))
