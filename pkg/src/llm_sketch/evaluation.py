"""Legal output ratio, task metrics and batch evaluation runs."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .backends import ModelBackend
from .errors import BackendError, EmptyBatch, FormatFailure, InstanceInvalid, SchemaError
from .generation import GenerationConfig, GenerationOutcome, generate
from .json_schema import JsonValue, ValidationReport, Violation, json_equal, parse_json, serialize_canonical, validate
from .seeds import derive_seed
from .tasks import Catalog, TaskInstance, instance_from_document, load_instance

METRICS = ("micro_f1_entities", "micro_f1_relations", "accuracy_single_label")
DEFAULT_MATCH_FIELDS = {
    "micro_f1_entities": ("name", "entity_type"),
    "micro_f1_relations": ("head", "relation", "tail"),
}


class _Invalid:
    def __repr__(self) -> str:
        return "INVALID"


INVALID: Any = _Invalid()  # prediction placeholder for an output that failed the legality check


def fmt_metric(x: float) -> str:
    if x == 0:
        return "0.0"
    if x == 1:
        return "1.0"
    return f"{x:.3f}"


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class LegalOutputStats:
    total: int
    parsed: int
    valid: int

    @property
    def ratio(self) -> float:
        return self.valid / self.total

    def to_json(self) -> dict:
        return {"total": self.total, "parsed": self.parsed, "valid": self.valid}


def legal_output_ratio(outcomes: Sequence[GenerationOutcome]) -> LegalOutputStats:
    if not outcomes:
        raise EmptyBatch("legal output ratio of an empty batch")
    parsed = sum(1 for o in outcomes if o.parsed)
    valid = sum(1 for o in outcomes if o.parsed and o.valid)
    return LegalOutputStats(len(outcomes), parsed, valid)


def _check_lengths(predictions: Sequence, golds: Sequence) -> None:
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions for {len(golds)} gold values")


def _label(value: JsonValue, label_field: str | None) -> JsonValue:
    if label_field is not None and isinstance(value, dict):
        return value.get(label_field, INVALID)
    return value


def _labels_match(a: JsonValue, b: JsonValue) -> bool:
    if a is INVALID or b is INVALID:
        return False
    if isinstance(a, list) and isinstance(b, list):
        # multiple-choice answers compare as label sets
        return sorted(map(serialize_canonical, a)) == sorted(map(serialize_canonical, b))
    return json_equal(a, b)


def score_accuracy(predictions: Sequence, golds: Sequence, label_field: str | None = "tag") -> float:
    """Exact match on ``label_field``; INVALID predictions count as wrong."""
    _check_lengths(predictions, golds)
    if not golds:
        raise EmptyBatch("accuracy of an empty batch")
    hits = sum(
        1
        for p, g in zip(predictions, golds)
        if p is not INVALID and _labels_match(_label(p, label_field), _label(g, label_field))
    )
    return hits / len(golds)


def _items(value: JsonValue) -> list:
    if isinstance(value, list):
        return value
    if isinstance(value, dict):
        for member in value.values():
            if isinstance(member, list):
                return member
    return []


def _tuples(value: JsonValue, match_fields: Sequence[str]) -> set[tuple]:
    if value is INVALID:
        return set()
    out = set()
    for item in _items(value):
        if isinstance(item, dict):
            out.add(tuple(serialize_canonical(item.get(f)) for f in match_fields))
        else:
            out.add((serialize_canonical(item),))
    return out


def micro_prf(predictions: Sequence, golds: Sequence, match_fields: Sequence[str] = ("name", "entity_type")) -> dict:
    _check_lengths(predictions, golds)
    tp = fp = fn = 0
    for p, g in zip(predictions, golds):
        pred, gold = _tuples(p, match_fields), _tuples(g, match_fields)
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision, "recall": recall, "f1": f1}


def score_micro_f1(predictions: Sequence, golds: Sequence, match_fields: Sequence[str] = ("name", "entity_type")) -> float:
    """Micro-averaged F1 over per-sample tuple sets; 0 when degenerate."""
    return micro_prf(predictions, golds, match_fields)["f1"]


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class EvalDataset:
    name: str
    task_instance: TaskInstance
    samples: tuple[tuple[str, JsonValue], ...]
    metric: str = "accuracy_single_label"
    match_fields: tuple[str, ...] | None = None
    label_field: str = "tag"

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise SchemaError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if not self.samples:
            raise EmptyBatch(f"dataset {self.name!r} has no samples")
        violations = []
        for i, (_, gold) in enumerate(self.samples):
            report = validate(gold, self.task_instance.output_format, lenient=True)
            violations.extend(
                Violation(f"samples[{i}].gold{v.path[1:]}", v.keyword, v.message) for v in report.violations
            )
        if violations:
            raise InstanceInvalid(ValidationReport(tuple(violations)), "gold values do not satisfy the output format")

    @property
    def fields_to_match(self) -> tuple[str, ...]:
        return self.match_fields or DEFAULT_MATCH_FIELDS.get(self.metric, ("name", "entity_type"))

    def score(self, predictions: Sequence) -> float:
        golds = [g for _, g in self.samples]
        if self.metric == "accuracy_single_label":
            return score_accuracy(predictions, golds, self.label_field)
        return score_micro_f1(predictions, golds, self.fields_to_match)


def load_dataset(path: str | Path, catalog: Catalog | None = None) -> EvalDataset:
    path = Path(path)
    doc = parse_json(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise SchemaError("eval dataset must be a JSON object")
    for key in ("name", "taskInstance", "metric", "samples"):
        if key not in doc:
            raise SchemaError(f"eval dataset is missing {key!r}")
    ref = doc["taskInstance"]
    if isinstance(ref, str):
        instance = load_instance(path.parent / ref, catalog)
    else:
        instance = instance_from_document(ref, catalog)
    samples = []
    for i, entry in enumerate(doc["samples"]):
        if not isinstance(entry, dict) or not isinstance(entry.get("input"), str) or "gold" not in entry:
            raise SchemaError(f"samples[{i}] needs a string input and a gold value")
        samples.append((entry["input"], entry["gold"]))
    match = doc.get("matchFields")
    return EvalDataset(
        name=doc["name"],
        task_instance=instance,
        samples=tuple(samples),
        metric=doc["metric"],
        match_fields=tuple(match) if match else None,
        label_field=doc.get("labelField", "tag"),
    )


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class SampleResult:
    index: int
    status: str  # valid | invalid | unparsed | backend_error
    raw_text: str
    value: JsonValue = None
    error: str | None = None

    def to_json(self) -> dict:
        out = {"index": self.index, "status": self.status, "rawText": self.raw_text}
        if self.status == "valid":
            out["value"] = self.value
        if self.error:
            out["error"] = self.error
        return out


@dataclass
class DatasetResult:
    name: str
    system: str
    mode: str
    metric: str
    stats: LegalOutputStats
    metric_value: float
    samples: list[SampleResult] = field(default_factory=list)

    @property
    def legal_output_ratio(self) -> float:
        return self.stats.ratio

    def to_json(self, include_samples: bool = True) -> dict:
        out = {
            "name": self.name,
            "system": self.system,
            "mode": self.mode,
            "metric": self.metric,
            "legalOutputRatio": self.stats.ratio,
            "metricValue": self.metric_value,
            "counts": self.stats.to_json(),
        }
        if include_samples:
            out["samples"] = [s.to_json() for s in self.samples]
        return out


@dataclass
class EvalReport:
    results: list[DatasetResult]

    def systems(self) -> list[str]:
        seen: list[str] = []
        for r in self.results:
            if r.system not in seen:
                seen.append(r.system)
        return seen

    def averages(self, system: str) -> tuple[float, float]:
        rows = [r for r in self.results if r.system == system]
        return (
            sum(r.legal_output_ratio for r in rows) / len(rows),
            sum(r.metric_value for r in rows) / len(rows),
        )

    def to_json(self) -> dict:
        overall = {}
        for system in self.systems():
            lor, metric = self.averages(system)
            overall[system] = {"legalOutputRatio": lor, "metricValue": metric}
        return {"datasets": [r.to_json() for r in self.results], "overall": overall}

    def render_table(self) -> str:
        """Aligned text table: one L.O.R. row and one F1/Acc. row per system."""
        names: list[str] = []
        for r in self.results:
            if r.name not in names:
                names.append(r.name)
        header = ["Model", "Metric", *names, "Avg."]
        rows = [header]
        for system in self.systems():
            by_name = {r.name: r for r in self.results if r.system == system}
            lor_avg, metric_avg = self.averages(system)
            lor = [fmt_metric(by_name[n].legal_output_ratio) if n in by_name else "-" for n in names]
            met = [fmt_metric(by_name[n].metric_value) if n in by_name else "-" for n in names]
            rows.append([system, "L.O.R.", *lor, fmt_metric(lor_avg)])
            rows.append(["", "F1/Acc.", *met, fmt_metric(metric_avg)])
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _run_one(
    backend: ModelBackend, instance: TaskInstance, index: int, text: str, config: GenerationConfig
) -> tuple[GenerationOutcome, SampleResult]:
    sample_config = dataclasses.replace(config, seed=derive_seed(config.seed, index))
    try:
        outcome = generate(backend, instance, text, sample_config)
    except FormatFailure as exc:
        outcome = exc.outcome
    except BackendError as exc:
        outcome = GenerationOutcome(
            "", None, False, ValidationReport((Violation("$", "backend", str(exc)),)), mode_used=config.mode
        )
        return outcome, SampleResult(index, "backend_error", "", error=str(exc))
    if outcome.valid:
        status = "valid"
    elif outcome.parsed:
        status = "invalid"
    else:
        status = "unparsed"
    return outcome, SampleResult(index, status, outcome.raw_text, outcome.value)


def run_eval(
    backend: ModelBackend,
    dataset: EvalDataset,
    config: GenerationConfig | None = None,
    workers: int = 1,
    system: str | None = None,
) -> DatasetResult:
    """Generate for every sample and score both metrics; per-sample seeds come from (run seed, index)."""
    config = config or GenerationConfig(attempts=1)
    instance = dataset.task_instance
    jobs = list(enumerate(text for text, _ in dataset.samples))
    if workers > 1 and backend.concurrent_safe:
        with ThreadPoolExecutor(workers) as pool:
            pairs = list(pool.map(lambda job: _run_one(backend, instance, job[0], job[1], config), jobs))
    else:
        pairs = [_run_one(backend, instance, i, text, config) for i, text in jobs]
    outcomes = [o for o, _ in pairs]
    predictions = [o.value if o.valid else INVALID for o in outcomes]
    return DatasetResult(
        name=dataset.name,
        system=system or f"{backend.name} ({config.mode})",
        mode=config.mode,
        metric=dataset.metric,
        stats=legal_output_ratio(outcomes),
        metric_value=dataset.score(predictions),
        samples=[s for _, s in pairs],
    )
