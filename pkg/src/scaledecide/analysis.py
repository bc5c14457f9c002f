"""Seed noise vs recipe spread, and the compute / decision-accuracy frontier."""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ingest import MetricPoint, SuiteManifest


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpreadPoint:
    task: str
    metric: str
    size_label: str
    noise: float
    spread: float
    n_recipes: int
    n_seeds: int
    decision_accuracy: float | None = None


@dataclass(frozen=True)
class FrontierPoint:
    method: str
    flops: float
    decision_accuracy: float
    std: float = 0.0

    def __post_init__(self):
        if not self.flops > 0:
            raise ValueError("frontier points need positive flops")


def noise_spread(
    points: Sequence[MetricPoint],
    manifest: SuiteManifest,
    size: str,
    task: str,
    metric: str,
    decision_accuracy: float | None = None,
) -> NoiseSpreadPoint:
    """Seed-to-seed noise and recipe spread for fully trained runs of one size.

    noise = mean over recipes of the sample std over seeds;
    spread = sample std over recipes of each recipe's seed mean.
    Only runs that reached ``train_steps`` count.
    """
    train_steps = manifest.config(size).train_steps
    finals: dict[tuple[str, str], tuple[int, float]] = {}
    for p in points:
        if p.metric != metric or p.task != task or p.key.size_label != size:
            continue
        k = (p.key.recipe, p.key.seed)
        if k not in finals or p.key.step > finals[k][0]:
            finals[k] = (p.key.step, p.value)
    per_recipe: dict[str, list[float]] = defaultdict(list)
    for (recipe, _seed), (step, value) in sorted(finals.items()):
        if step >= train_steps:
            per_recipe[recipe].append(value)
    if not per_recipe:
        raise InsufficientSamplesError(f"no fully trained runs for {size}/{task}/{metric}")

    noisy = [v for v in per_recipe.values() if len(v) >= 2]
    if not noisy:
        raise InsufficientSamplesError("noise needs at least 2 fully trained seeds for some recipe")
    if len(per_recipe) < 2:
        raise InsufficientSamplesError("spread needs at least 2 recipes")
    noise = statistics.fmean(statistics.stdev(v) for v in noisy)
    spread = statistics.stdev(statistics.fmean(v) for v in per_recipe.values())
    return NoiseSpreadPoint(
        task=task,
        metric=metric,
        size_label=size,
        noise=noise,
        spread=spread,
        n_recipes=len(per_recipe),
        n_seeds=max(len(v) for v in per_recipe.values()),
        decision_accuracy=decision_accuracy,
    )


def pareto_frontier(points: Iterable[FrontierPoint]) -> list[FrontierPoint]:
    """Non-dominated points (cheaper-or-equal and at-least-as-accurate), by ascending flops.

    Exact duplicates collapse to one representative.
    """
    ordered = sorted(points, key=lambda p: (p.flops, -p.decision_accuracy, p.method, p.std))
    front: list[FrontierPoint] = []
    best = float("-inf")
    for p in ordered:
        # sorted by flops then accuracy desc, so p is dominated iff an earlier point reached its accuracy
        if p.decision_accuracy > best:
            front.append(p)
            best = p.decision_accuracy
    return front
