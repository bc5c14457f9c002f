"""Training-compute accounting (FLOPs = 6ND) and budgets as a share of the target run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .ingest import SuiteManifest


@dataclass(frozen=True)
class BudgetReport:
    flops: float
    target_flops: float

    @property
    def percent_of_target(self) -> float:
        return percent_of_target(self.flops, self.target_flops)


def flops(params: float, tokens: float) -> float:
    if params < 0 or tokens < 0:
        raise ValueError("params and tokens must be non-negative")
    return 6.0 * params * tokens


def percent_of_target(c: float, C: float) -> float:
    if C <= 0:
        raise ValueError("target budget must be positive")
    return c / C * 100.0


def target_flops(manifest: SuiteManifest) -> float:
    return manifest.target_config.flops


def single_scale_budget(manifest: SuiteManifest, size_label: str, tokens_seen: float) -> BudgetReport:
    """Cost of training one model of ``size_label`` up to ``tokens_seen`` tokens."""
    cfg = manifest.config(size_label)
    return BudgetReport(flops(cfg.non_embedding_params, tokens_seen), target_flops(manifest))


def multi_scale_budget(manifest: SuiteManifest, sizes: Iterable[str]) -> BudgetReport:
    """Full training cost of every size used by a scaling-law fit."""
    total = 0.0
    for s in sizes:
        total += manifest.config(s).flops
    return BudgetReport(total, target_flops(manifest))


def budget_of_prediction(method: dict, manifest: SuiteManifest) -> BudgetReport:
    """Budget for a method described as ``{"size": ..., "tokens_seen": ...}``
    (single scale; omit tokens_seen for the final checkpoint) or ``{"sizes": [...]}``.
    """
    if "sizes" in method:
        return multi_scale_budget(manifest, method["sizes"])
    size = method["size"]
    tokens = method.get("tokens_seen")
    if tokens is None:
        tokens = manifest.config(size).tokens_trained
    return single_scale_budget(manifest, size, tokens)
