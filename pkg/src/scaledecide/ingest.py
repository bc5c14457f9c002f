"""Experiment-grid data model plus readers/writers for manifests, item records
and aggregated metric tables."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence, TextIO

import yaml


class ManifestError(ValueError):
    """Base class for manifest problems."""


class ManifestParseError(ManifestError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ManifestValidationError(ManifestError):
    def __init__(self, rule: str, message: str):
        self.rule = rule
        super().__init__(f"[{rule}] {message}")


class RecordError(ValueError):
    """A single item record failed validation."""

    def __init__(self, message: str, line: int | None = None, item: str | None = None):
        self.line = line
        self.item = item
        where = []
        if line is not None:
            where.append(f"line {line}")
        if item is not None:
            where.append(f"item '{item}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DuplicateKeyError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    size_label: str
    non_embedding_params: int
    tokens_trained: int
    train_steps: int
    batch_size: int
    hidden_dim: int
    n_heads: int
    n_layers: int
    learning_rate: float

    @property
    def flops(self) -> float:
        """Full training cost, 6 * params * tokens."""
        return 6.0 * self.non_embedding_params * self.tokens_trained


@dataclass(frozen=True)
class TargetSpec:
    size_label: str
    tasks: tuple[str, ...]
    metric: str


@dataclass(frozen=True)
class SuiteManifest:
    ladder: tuple[ModelConfig, ...]
    recipes: tuple[str, ...]
    seeds: tuple[str, ...]
    target: TargetSpec
    early_stop_fraction: float | Mapping[str, float] = 0.25
    token_param_ratio: float | None = None
    ratio_tolerance: float = 0.05
    extensions: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def default_seed(self) -> str:
        return self.seeds[0]

    @property
    def size_labels(self) -> tuple[str, ...]:
        return tuple(c.size_label for c in self.ladder)

    def config(self, size_label: str) -> ModelConfig:
        for c in self.ladder:
            if c.size_label == size_label:
                return c
        raise KeyError(f"unknown size label {size_label!r}")

    @property
    def target_config(self) -> ModelConfig:
        return self.config(self.target.size_label)

    def early_stop_for(self, seed: str) -> float:
        """Fraction of steps a non-default seed is expected to reach (1.0 for the default)."""
        if seed == self.default_seed:
            return 1.0
        if isinstance(self.early_stop_fraction, Mapping):
            return float(self.early_stop_fraction.get(seed, 1.0))
        return float(self.early_stop_fraction)


@dataclass(frozen=True, order=True)
class CheckpointKey:
    recipe: str
    size_label: str
    seed: str
    step: int
    tokens_seen: int

    @property
    def run(self) -> tuple[str, str, str]:
        return (self.recipe, self.size_label, self.seed)


@dataclass(frozen=True)
class Choice:
    logprob: float
    tokens: int
    chars: int
    correct: bool


@dataclass(frozen=True)
class ItemScoreRecord:
    key: CheckpointKey
    task: str
    item: str
    choices: tuple[Choice, ...]

    def __post_init__(self):
        _check_record(self)

    @property
    def correct_index(self) -> int:
        return next(i for i, c in enumerate(self.choices) if c.correct)


@dataclass(frozen=True)
class MetricPoint:
    key: CheckpointKey
    task: str
    metric: str
    value: float

    @property
    def ident(self) -> tuple:
        return (self.key, self.task, self.metric)


def _check_record(rec: ItemScoreRecord) -> None:
    if len(rec.choices) < 2:
        raise RecordError(f"needs at least 2 choices, got {len(rec.choices)}", item=rec.item)
    n_correct = sum(1 for c in rec.choices if c.correct)
    if n_correct != 1:
        raise RecordError(f"expected exactly one correct choice, got {n_correct}", item=rec.item)
    for c in rec.choices:
        if not math.isfinite(c.logprob) or c.logprob > 0:
            raise RecordError(f"logprob must be finite and <= 0, got {c.logprob!r}", item=rec.item)
        if c.tokens < 1 or c.chars < 1:
            raise RecordError("choice lengths must be >= 1", item=rec.item)


# --------------------------------------------------------------------------- manifest

_MODEL_FIELDS = {
    "size_label": str,
    "non_embedding_params": int,
    "tokens_trained": int,
    "train_steps": int,
    "batch_size": int,
    "hidden_dim": int,
    "n_heads": int,
    "n_layers": int,
    "learning_rate": float,
}


def _node_lines(node: yaml.Node, path: str, out: dict[str, int]) -> None:
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _node_lines(v, f"{path}.{k.value}" if path else str(k.value), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _node_lines(v, f"{path}[{i}]", out)


def _coerce(value: Any, kind: type, path: str, lines: dict[str, int]):
    if kind is str:
        if isinstance(value, (str, int)) and not isinstance(value, bool):
            return str(value)
    elif kind is int:
        if isinstance(value, bool):
            pass
        elif isinstance(value, int):
            return value
        elif isinstance(value, float) and value.is_integer():
            return int(value)
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    raise ManifestParseError(f"expected {kind.__name__}, got {value!r}", lines.get(path), path)


def _require(d: Mapping, key: str, path: str, lines: dict[str, int]):
    if not isinstance(d, Mapping):
        raise ManifestParseError("expected a mapping", lines.get(path), path or "<root>")
    if key not in d:
        full = f"{path}.{key}" if path else key
        raise ManifestParseError("missing required field", lines.get(path), full)
    return d[key]


def parse_manifest(text: str) -> SuiteManifest:
    """Parse a YAML (or JSON) manifest document and validate its invariants."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ManifestParseError(str(e.problem or e), mark.line + 1 if mark else None) from e
    lines: dict[str, int] = {}
    if node is not None:
        _node_lines(node, "", lines)
    if not isinstance(doc, Mapping):
        raise ManifestParseError("manifest must be a mapping", 1)

    raw_ladder = _require(doc, "ladder", "", lines)
    if not isinstance(raw_ladder, list) or not raw_ladder:
        raise ManifestParseError("ladder must be a non-empty list", lines.get("ladder"), "ladder")
    ladder = []
    for i, entry in enumerate(raw_ladder):
        path = f"ladder[{i}]"
        kwargs = {}
        for name, kind in _MODEL_FIELDS.items():
            kwargs[name] = _coerce(_require(entry, name, path, lines), kind, f"{path}.{name}", lines)
        ladder.append(ModelConfig(**kwargs))

    recipes = _require(doc, "recipes", "", lines)
    seeds = _require(doc, "seeds", "", lines)
    for name, seq in (("recipes", recipes), ("seeds", seeds)):
        if not isinstance(seq, list):
            raise ManifestParseError("expected a list", lines.get(name), name)
    recipes = tuple(_coerce(r, str, f"recipes[{i}]", lines) for i, r in enumerate(recipes))
    seeds = tuple(_coerce(s, str, f"seeds[{i}]", lines) for i, s in enumerate(seeds))

    t = _require(doc, "target", "", lines)
    tasks = _require(t, "tasks", "target", lines)
    if isinstance(tasks, str):
        tasks = [tasks]
    if not isinstance(tasks, list) or not tasks:
        raise ManifestParseError("expected a non-empty list", lines.get("target.tasks"), "target.tasks")
    target = TargetSpec(
        size_label=_coerce(_require(t, "size", "target", lines), str, "target.size", lines),
        tasks=tuple(_coerce(x, str, f"target.tasks[{i}]", lines) for i, x in enumerate(tasks)),
        metric=_coerce(_require(t, "metric", "target", lines), str, "target.metric", lines),
    )

    esf = doc.get("early_stop_fraction", 0.25)
    if isinstance(esf, Mapping):
        esf = {str(k): _coerce(v, float, f"early_stop_fraction.{k}", lines) for k, v in esf.items()}
    else:
        esf = _coerce(esf, float, "early_stop_fraction", lines)
    ratio = doc.get("token_param_ratio")
    if ratio is not None:
        ratio = _coerce(ratio, float, "token_param_ratio", lines)
    tol = _coerce(doc.get("ratio_tolerance", 0.05), float, "ratio_tolerance", lines)

    extensions = {k: v for k, v in doc.items() if k not in _MANIFEST_KEYS}
    manifest = SuiteManifest(
        ladder=tuple(ladder),
        recipes=recipes,
        seeds=seeds,
        target=target,
        early_stop_fraction=esf,
        token_param_ratio=ratio,
        ratio_tolerance=tol,
        extensions=extensions,
    )
    validate_manifest(manifest)
    return manifest


_MANIFEST_KEYS = {
    "ladder", "recipes", "seeds", "target", "early_stop_fraction", "token_param_ratio", "ratio_tolerance",
}


def validate_manifest(m: SuiteManifest) -> None:
    for c in m.ladder:
        if c.non_embedding_params <= 0:
            raise ManifestValidationError("positive-params", f"{c.size_label}: non_embedding_params must be > 0")
        if c.tokens_trained <= 0:
            raise ManifestValidationError("positive-tokens", f"{c.size_label}: tokens_trained must be > 0")
        if c.train_steps <= 0:
            raise ManifestValidationError("positive-steps", f"{c.size_label}: train_steps must be > 0")
        if m.token_param_ratio is not None:
            ratio = c.tokens_trained / c.non_embedding_params
            if abs(ratio / m.token_param_ratio - 1.0) > m.ratio_tolerance:
                raise ManifestValidationError(
                    "token-param-ratio",
                    f"{c.size_label}: tokens/params = {ratio:.2f}, declared {m.token_param_ratio:g} "
                    f"(tolerance {m.ratio_tolerance:.0%})",
                )
    labels = [c.size_label for c in m.ladder]
    if len(set(labels)) != len(labels):
        raise ManifestValidationError("unique-sizes", "duplicate size labels in ladder")
    for a, b in zip(m.ladder, m.ladder[1:]):
        if b.non_embedding_params <= a.non_embedding_params:
            raise ManifestValidationError(
                "ascending-ladder",
                f"ladder must be strictly increasing in non_embedding_params ({a.size_label} >= {b.size_label})",
            )
    if m.target.size_label not in labels:
        raise ManifestValidationError("target-in-ladder", f"target size {m.target.size_label!r} not in ladder")
    if not m.seeds:
        raise ManifestValidationError("min-seeds", "at least one seed is required")
    if len(set(m.seeds)) != len(m.seeds):
        raise ManifestValidationError("unique-seeds", "duplicate seed ids")
    if len(set(m.recipes)) != len(m.recipes):
        raise ManifestValidationError("unique-recipes", "duplicate recipe ids")
    fractions = m.early_stop_fraction.values() if isinstance(m.early_stop_fraction, Mapping) else [m.early_stop_fraction]
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ManifestValidationError("early-stop-range", f"early_stop_fraction must be in (0, 1], got {f}")


def manifest_to_dict(m: SuiteManifest) -> dict:
    doc: dict[str, Any] = {
        "ladder": [{k: getattr(c, k) for k in _MODEL_FIELDS} for c in m.ladder],
        "recipes": list(m.recipes),
        "seeds": list(m.seeds),
        "target": {"size": m.target.size_label, "tasks": list(m.target.tasks), "metric": m.target.metric},
        "early_stop_fraction": dict(m.early_stop_fraction)
        if isinstance(m.early_stop_fraction, Mapping)
        else m.early_stop_fraction,
    }
    if m.token_param_ratio is not None:
        doc["token_param_ratio"] = m.token_param_ratio
        doc["ratio_tolerance"] = m.ratio_tolerance
    doc.update(m.extensions)
    return doc


def dump_manifest(m: SuiteManifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2) + "\n"


# --------------------------------------------------------------------------- item records

def _record_from_obj(obj: Any, line: int | None) -> ItemScoreRecord:
    if not isinstance(obj, Mapping):
        raise RecordError("record must be an object", line)
    item = obj.get("item")
    try:
        key = CheckpointKey(
            recipe=str(obj["recipe"]),
            size_label=str(obj["size"]),
            seed=str(obj["seed"]),
            step=int(obj["step"]),
            tokens_seen=int(obj["tokens_seen"]),
        )
        raw_choices = obj["choices"]
        choices = tuple(
            Choice(
                logprob=float(c["logprob"]),
                tokens=int(c["tokens"]),
                chars=int(c["chars"]),
                correct=bool(c["correct"]),
            )
            for c in raw_choices
        )
        task = str(obj["task"])
    except KeyError as e:
        raise RecordError(f"missing field {e.args[0]!r}", line, None if item is None else str(item)) from None
    except (TypeError, ValueError) as e:
        raise RecordError(f"bad field value: {e}", line, None if item is None else str(item)) from None
    try:
        return ItemScoreRecord(key=key, task=task, item=str(item), choices=choices)
    except RecordError as e:
        raise RecordError(
            f"{e.args[0].split(': ', 1)[-1]} (recipe={key.recipe}, size={key.size_label}, "
            f"seed={key.seed}, step={key.step}, task={task})",
            line,
            str(item),
        ) from None


def iter_item_records(stream: Iterable[str]) -> Iterator[ItemScoreRecord]:
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordError(f"invalid JSON: {e.msg}", lineno) from None
        yield _record_from_obj(obj, lineno)


def parse_item_records(stream: Iterable[str] | str) -> list[ItemScoreRecord]:
    """Parse line-delimited JSON item records, preserving input order."""
    if isinstance(stream, str):
        stream = stream.splitlines()
    return list(iter_item_records(stream))


def record_to_obj(rec: ItemScoreRecord) -> dict:
    k = rec.key
    return {
        "recipe": k.recipe,
        "size": k.size_label,
        "seed": k.seed,
        "step": k.step,
        "tokens_seen": k.tokens_seen,
        "task": rec.task,
        "item": rec.item,
        "choices": [
            {"logprob": c.logprob, "tokens": c.tokens, "chars": c.chars, "correct": c.correct}
            for c in rec.choices
        ],
    }


def dump_item_records(records: Iterable[ItemScoreRecord]) -> str:
    return "".join(json.dumps(record_to_obj(r), separators=(",", ":")) + "\n" for r in records)


# --------------------------------------------------------------------------- coverage

@dataclass(frozen=True)
class CoverageCell:
    recipe: str
    size_label: str
    seed: str
    max_step: int | None
    fraction: float
    n_checkpoints: int
    status: str  # complete | early-stop consistent | incomplete | absent


@dataclass(frozen=True)
class CoverageReport:
    cells: tuple[CoverageCell, ...]
    unknown_runs: tuple[tuple[str, str, str], ...]
    out_of_range: tuple[CheckpointKey, ...]

    @property
    def flagged(self) -> tuple[CoverageCell, ...]:
        return tuple(c for c in self.cells if c.status in ("incomplete", "absent"))

    @property
    def ok(self) -> bool:
        return not self.flagged and not self.unknown_runs and not self.out_of_range


# checkpoints are saved at a fixed interval, so an early-stopped run may end slightly short of the nominal fraction
EARLY_STOP_SLACK = 0.95


def coverage_report(records: Iterable, manifest: SuiteManifest) -> CoverageReport:
    """Summarize which (recipe, size, seed) runs are present and how far they got.

    Accepts anything with a ``key`` attribute (item records or metric points).
    Missing cells are reported, never raised.
    """
    steps: dict[tuple[str, str, str], set[int]] = defaultdict(set)
    out_of_range = set()
    sizes = {c.size_label: c for c in manifest.ladder}
    for r in records:
        k = r.key
        steps[k.run].add(k.step)
        cfg = sizes.get(k.size_label)
        if cfg is not None and (k.step > cfg.train_steps or k.tokens_seen > cfg.tokens_trained):
            out_of_range.add(k)

    cells = []
    known = set()
    for recipe in manifest.recipes:
        for cfg in manifest.ladder:
            for seed in manifest.seeds:
                run = (recipe, cfg.size_label, seed)
                known.add(run)
                seen = steps.get(run)
                if not seen:
                    cells.append(CoverageCell(recipe, cfg.size_label, seed, None, 0.0, 0, "absent"))
                    continue
                max_step = max(seen)
                frac = min(max_step, cfg.train_steps) / cfg.train_steps
                if max_step >= cfg.train_steps:
                    status = "complete"
                elif (
                    seed != manifest.default_seed
                    and cfg.size_label != manifest.target.size_label
                    and frac >= manifest.early_stop_for(seed) * EARLY_STOP_SLACK
                ):
                    status = "early-stop consistent"
                else:
                    status = "incomplete"
                cells.append(CoverageCell(recipe, cfg.size_label, seed, max_step, frac, len(seen), status))
    unknown = tuple(sorted(set(steps) - known))
    return CoverageReport(tuple(cells), unknown, tuple(sorted(out_of_range)))


# --------------------------------------------------------------------------- metric tables

METRIC_COLUMNS = ["recipe", "size", "seed", "step", "tokens_seen", "task", "metric", "value"]


def write_metric_points(points: Iterable[MetricPoint], out: TextIO | None = None) -> str:
    """Render points as CSV; floats use repr so they parse back exactly."""
    buf = out if out is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    seen = set()
    for p in points:
        if p.ident in seen:
            raise DuplicateKeyError(f"duplicate metric point {_describe(p)}")
        seen.add(p.ident)
        k = p.key
        w.writerow([k.recipe, k.size_label, k.seed, k.step, k.tokens_seen, p.task, p.metric, repr(float(p.value))])
    return buf.getvalue() if out is None else ""


def read_metric_points(document: str | TextIO) -> list[MetricPoint]:
    buf = io.StringIO(document) if isinstance(document, str) else document
    reader = csv.reader(buf)
    header = next(reader, None)
    if header is None:
        return []
    if header != METRIC_COLUMNS:
        raise ValueError(f"unexpected metric table header {header!r}")
    points = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(METRIC_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(METRIC_COLUMNS)} columns, got {len(row)}")
        recipe, size, seed, step, tokens, task, metric, value = row
        p = MetricPoint(CheckpointKey(recipe, size, seed, int(step), int(tokens)), task, metric, float(value))
        if not math.isfinite(p.value):
            raise ValueError(f"line {lineno}: non-finite value")
        if p.ident in seen:
            raise DuplicateKeyError(f"line {lineno}: duplicate metric point {_describe(p)}")
        seen.add(p.ident)
        points.append(p)
    return points


def _describe(p: MetricPoint) -> str:
    k = p.key
    return f"(recipe={k.recipe}, size={k.size_label}, seed={k.seed}, step={k.step}, task={p.task}, metric={p.metric})"


def index_points(points: Sequence[MetricPoint]) -> dict[tuple[str, str], dict[tuple[str, str, str], dict[int, MetricPoint]]]:
    """Index points as {(task, metric): {run: {step: point}}}."""
    idx: dict = defaultdict(lambda: defaultdict(dict))
    for p in points:
        idx[(p.task, p.metric)][p.key.run][p.key.step] = p
    return idx
