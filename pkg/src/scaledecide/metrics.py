"""Proxy metrics over multiple-choice likelihoods.

Every metric works on per-choice "probabilities" ``exp(logprob / length)``
where length is 1 (raw), the token count or the character count. The same
five formulas then apply in every normalization mode.
"""

from __future__ import annotations

import math
from collections import defaultdict
from enum import Enum
from typing import Iterable, Sequence

from .ingest import ItemScoreRecord, MetricPoint


class NormalizationMode(str, Enum):
    RAW = "raw"
    PER_TOKEN = "per_token"
    PER_CHAR = "per_char"


BASE_METRICS = ("correct_prob", "margin", "norm_correct_prob", "total_prob", "accuracy")
MODES = tuple(NormalizationMode)

# task loss series: mean negative log-likelihood of the correct continuation
LOSS_METRICS = ("nll", "nll_per_token", "nll_per_char")
DEFAULT_LOSS_METRIC = "nll_per_char"


def metric_name(base: str, mode: NormalizationMode | str) -> str:
    mode = NormalizationMode(mode)
    if base not in BASE_METRICS:
        raise ValueError(f"unknown metric {base!r}")
    return base if mode is NormalizationMode.RAW else f"{base}_{mode.value}"


ALL_METRICS = tuple(metric_name(b, m) for b in BASE_METRICS for m in MODES)


def parse_metric_name(name: str) -> tuple[str, NormalizationMode]:
    """Split e.g. ``margin_per_char`` into ("margin", PER_CHAR)."""
    for mode in (NormalizationMode.PER_TOKEN, NormalizationMode.PER_CHAR):
        suffix = "_" + mode.value
        if name.endswith(suffix) and name[: -len(suffix)] in BASE_METRICS + ("nll",):
            return name[: -len(suffix)], mode
    if name in BASE_METRICS or name == "nll":
        return name, NormalizationMode.RAW
    raise ValueError(f"unknown metric name {name!r}")


def choice_prob(logprob_sum: float, n_tokens: int, n_chars: int, mode: NormalizationMode | str) -> float:
    if n_tokens <= 0 or n_chars <= 0:
        raise ValueError("choice lengths must be positive")
    mode = NormalizationMode(mode)
    if mode is NormalizationMode.RAW:
        return math.exp(logprob_sum)
    if mode is NormalizationMode.PER_TOKEN:
        return math.exp(logprob_sum / n_tokens)
    return math.exp(logprob_sum / n_chars)


def _norm_logprob(logprob: float, tokens: int, chars: int, mode: NormalizationMode) -> float:
    if mode is NormalizationMode.RAW:
        return logprob
    return logprob / (tokens if mode is NormalizationMode.PER_TOKEN else chars)


def item_score(record: ItemScoreRecord, base: str, mode: NormalizationMode) -> float:
    """Per-item value of one metric."""
    logs = [_norm_logprob(c.logprob, c.tokens, c.chars, mode) for c in record.choices]
    ci = record.correct_index
    if base == "nll":
        return -logs[ci]
    if base == "accuracy":
        # compare log scores so exp underflow cannot manufacture ties
        best = max(logs)
        winners = [i for i, v in enumerate(logs) if v == best]
        return 1.0 if winners == [ci] else 0.0
    probs = [math.exp(v) for v in logs]
    pc = probs[ci]
    if base == "correct_prob":
        return pc
    if base == "margin":
        return pc - max(p for i, p in enumerate(probs) if i != ci)
    if base == "total_prob":
        return math.fsum(probs)
    if base == "norm_correct_prob":
        # shift by the max log score so the ratio survives underflow
        m = max(logs)
        return math.exp(logs[ci] - m) / math.fsum(math.exp(v - m) for v in logs)
    raise ValueError(f"unknown metric {base!r}")


def compute_metric(records: Sequence[ItemScoreRecord], metric: str) -> MetricPoint:
    """Mean per-item metric over records sharing one checkpoint key and task."""
    if not records:
        raise ValueError("cannot compute a metric over zero items")
    key, task = records[0].key, records[0].task
    for r in records:
        if r.key != key or r.task != task:
            raise ValueError("records span more than one (checkpoint, task) group")
    base, mode = parse_metric_name(metric)
    ordered = sorted(records, key=lambda r: r.item)
    value = math.fsum(item_score(r, base, mode) for r in ordered) / len(ordered)
    return MetricPoint(key=key, task=task, metric=metric, value=value)


def compute_all(
    records: Iterable[ItemScoreRecord],
    metrics: Sequence[str] = ALL_METRICS,
    jobs: int = 1,
) -> list[MetricPoint]:
    """One point per (checkpoint, task, metric), sorted by key/task/metric order given."""
    groups: dict = defaultdict(list)
    for r in records:
        groups[(r.key, r.task)].append(r)
    for m in metrics:
        parse_metric_name(m)
    keys = sorted(groups)
    tasks = [(groups[k], tuple(metrics)) for k in keys]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_group_points, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_group_points(t) for t in tasks]
    return [p for group in results for p in group]


def _group_points(args) -> list[MetricPoint]:
    recs, metrics = args
    return [compute_metric(recs, m) for m in metrics]
