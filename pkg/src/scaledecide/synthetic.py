"""Synthetic suites generated from known scaling curves.

Each recipe has a compute -> loss law and a loss -> metric sigmoid. Noise is
drawn from a generator keyed by the cell's indices, so any cell can be
regenerated on its own and parallel generation matches serial generation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .decision import GoldRanking
from .ingest import CheckpointKey, Choice, ItemScoreRecord, MetricPoint, SuiteManifest
from .metrics import DEFAULT_LOSS_METRIC
from .scaling import NDParams, PowerLawParams, SigmoidParams

Law = PowerLawParams | NDParams


@dataclass(frozen=True)
class GroundTruthRecipe:
    recipe: str
    law: Law
    link: SigmoidParams
    sigma: float = 0.0
    crossover: Mapping[str, Any] | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.law.A <= 0 or (isinstance(self.law, NDParams) and self.law.B <= 0):
            raise ValueError(f"{self.recipe}: law amplitudes must be positive")
        if self.link.a < 0:
            raise ValueError(f"{self.recipe}: sigmoid span a must be >= 0")

    def loss(self, params: float, tokens: float) -> float:
        if isinstance(self.law, NDParams):
            return float(self.law(params, tokens))
        return float(self.law(6.0 * params * tokens))

    def value(self, params: float, tokens: float) -> float:
        return float(self.link(self.loss(params, tokens)))


@dataclass(frozen=True)
class SyntheticSuite:
    points: tuple[MetricPoint, ...]
    items: tuple[ItemScoreRecord, ...] = ()


def cell_rng(rng_seed: int, *parts) -> np.random.Generator:
    """A generator keyed by ``rng_seed`` and the cell's identifying parts."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([int(rng_seed)] + words)


def checkpoint_steps(train_steps: int, n_checkpoints: int, stop_fraction: float = 1.0) -> list[int]:
    """Evenly spaced checkpoints, truncated at ``stop_fraction`` of training (the stop step is kept)."""
    last = train_steps if stop_fraction >= 1.0 else max(1, math.ceil(stop_fraction * train_steps))
    steps = {round(train_steps * j / n_checkpoints) for j in range(1, n_checkpoints + 1)}
    steps = {s for s in steps if 0 < s <= last}
    steps.add(last)
    return sorted(steps)


def _run_stop_fraction(manifest: SuiteManifest, size: str, seed: str) -> float:
    if size == manifest.target.size_label:
        return 1.0
    return manifest.early_stop_for(seed)


def gen_suite(
    truths: Sequence[GroundTruthRecipe],
    manifest: SuiteManifest,
    rng_seed: int,
    n_checkpoints: int = 8,
    metric: str | None = None,
    loss_metric: str = DEFAULT_LOSS_METRIC,
    tasks: Sequence[str] | None = None,
    items: bool = False,
    n_items: int = 4,
    n_choices: int = 4,
) -> SyntheticSuite:
    """Metric (and loss) points for every recipe x size x seed x checkpoint x task.

    Metric values are ``link(law(compute))`` plus Gaussian noise of the
    recipe's sigma; loss values are exact. With ``items=True``, item records
    are also produced whose ``nll_per_char`` equals the loss and whose
    ``norm_correct_prob_per_char`` equals the metric value.
    """
    if not manifest.ladder:
        raise ValueError("manifest ladder is empty")
    metric = metric or manifest.target.metric
    tasks = tuple(tasks or manifest.target.tasks)
    by_recipe = {t.recipe: t for t in truths}
    missing = [r for r in manifest.recipes if r not in by_recipe]
    if missing:
        raise ValueError(f"no ground truth for recipes: {missing}")

    points: list[MetricPoint] = []
    records: list[ItemScoreRecord] = []
    for recipe in manifest.recipes:
        truth = by_recipe[recipe]
        for cfg in manifest.ladder:
            for seed in manifest.seeds:
                frac = _run_stop_fraction(manifest, cfg.size_label, seed)
                for step in checkpoint_steps(cfg.train_steps, n_checkpoints, frac):
                    tokens = round(cfg.tokens_trained * step / cfg.train_steps)
                    key = CheckpointKey(recipe, cfg.size_label, seed, step, tokens)
                    loss = truth.loss(cfg.non_embedding_params, tokens)
                    clean = float(truth.link(loss))
                    for task in tasks:
                        value = clean
                        if truth.sigma > 0:
                            rng = cell_rng(rng_seed, recipe, cfg.size_label, seed, step, task)
                            value = clean + float(rng.normal(0.0, truth.sigma))
                        points.append(MetricPoint(key, task, loss_metric, loss))
                        points.append(MetricPoint(key, task, metric, value))
                        if items:
                            records.extend(_items_for(key, task, loss, value, n_items, n_choices, rng_seed))
    return SyntheticSuite(tuple(points), tuple(records))


def _items_for(key, task, loss, value, n_items, n_choices, rng_seed):
    # every item shares the same per-char scores, so means equal the per-item values
    v = min(max(value, 1e-6), 1 - 1e-6)
    log_pc = -loss
    log_q = log_pc + math.log((1.0 / v - 1.0) / (n_choices - 1))
    if log_q > 0:
        raise ValueError(f"metric value {value} is too small to realize at loss {loss}")
    rng = cell_rng(rng_seed, "items", key.recipe, key.size_label, key.seed, key.step, task)
    out = []
    for i in range(n_items):
        correct_at = int(rng.integers(n_choices))
        choices = []
        for j in range(n_choices):
            chars = int(rng.integers(8, 64))
            tokens = max(1, chars // 4)
            lp = (log_pc if j == correct_at else log_q) * chars
            choices.append(Choice(logprob=lp, tokens=tokens, chars=chars, correct=j == correct_at))
        out.append(ItemScoreRecord(key, task, f"{task}-{i:04d}", tuple(choices)))
    return out


def true_gold(
    truths: Sequence[GroundTruthRecipe],
    manifest: SuiteManifest,
    metric: str | None = None,
    tasks: Sequence[str] | None = None,
) -> GoldRanking:
    """Noise-free metric of every recipe at the target model's full training."""
    cfg = manifest.target_config
    by_recipe = {t.recipe: t for t in truths}
    recipes = [r for r in manifest.recipes if r in by_recipe] or [t.recipe for t in truths]
    values = {r: by_recipe[r].value(cfg.non_embedding_params, cfg.tokens_trained) for r in recipes}
    return GoldRanking(values, metric or manifest.target.metric, cfg.size_label, tuple(tasks or manifest.target.tasks))


# --------------------------------------------------------------------------- crossovers

def crossing_law(base: PowerLawParams, alpha: float, at_compute: float) -> PowerLawParams:
    """A law with exponent ``alpha`` that meets ``base`` exactly at ``at_compute``.

    With ``alpha > base.alpha`` the new law is worse below the crossing and better above it.
    """
    A = base.A * math.exp((alpha - base.alpha) * math.log(at_compute))
    return PowerLawParams(A, alpha, base.E)


def crossover_compute(first: PowerLawParams, second: PowerLawParams) -> float:
    """Compute at which two laws with equal irreducible loss give the same loss."""
    if first.E != second.E:
        raise ValueError("closed form needs equal irreducible loss")
    if first.alpha == second.alpha:
        raise ValueError("parallel laws never cross")
    return math.exp(math.log(second.A / first.A) / (second.alpha - first.alpha))


# --------------------------------------------------------------------------- manifest extension

def truth_from_dict(d: Mapping[str, Any]) -> GroundTruthRecipe:
    law = d["law"]
    if "B" in law:
        law = NDParams(float(law["A"]), float(law["alpha"]), float(law["B"]), float(law["beta"]), float(law["E"]))
    else:
        law = PowerLawParams(float(law["A"]), float(law["alpha"]), float(law.get("E", 0.0)))
    link = d["link"]
    link = SigmoidParams(float(link["a"]), float(link["b"]), float(link["k"]), float(link["L0"]))
    return GroundTruthRecipe(str(d["recipe"]), law, link, float(d.get("sigma", 0.0)), d.get("crossover"))


def truth_to_dict(t: GroundTruthRecipe) -> dict:
    d = {"recipe": t.recipe, "law": t.law.as_dict(), "link": t.link.as_dict(), "sigma": t.sigma}
    if t.crossover is not None:
        d["crossover"] = dict(t.crossover)
    return d


def truths_from_manifest(manifest: SuiteManifest) -> list[GroundTruthRecipe]:
    section = manifest.extensions.get("synthetic")
    if not section or "truths" not in section:
        raise ValueError("manifest has no synthetic.truths section")
    return [truth_from_dict(d) for d in section["truths"]]


def spread_truths(
    recipes: Sequence[str],
    base: PowerLawParams = PowerLawParams(200.0, 0.15, 0.8),
    link: SigmoidParams = SigmoidParams(0.6, 0.25, -5.0, 1.2),
    step: float = 0.02,
    sigma: float = 0.0,
) -> list[GroundTruthRecipe]:
    """Recipes sharing one curve shape, offset in irreducible loss so they never cross."""
    return [
        GroundTruthRecipe(r, PowerLawParams(base.A, base.alpha, base.E + step * i), link, sigma)
        for i, r in enumerate(recipes)
    ]
