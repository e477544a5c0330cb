"""Task schema catalog and task instantiation."""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import BadOutputFormat, InstanceInvalid, SchemaError, UnknownSchema
from .json_schema import SchemaDoc, parse_json, parse_schema, serialize_canonical, serialize_pretty, validate

CATEGORIES = ("text_classification", "text_generation", "information_extraction")

ALIASES = {
    "ner": "named_entity_recognition",
    "re": "relation_extraction",
    "ee": "event_extraction",
    "asa": "aspect_sentiment_analysis",
    "topic": "topic_classification",
    "cls": "topic_classification",
    "nli": "natural_language_inference",
}

# Members whose values name labels; the prompt renders these under the
# label architecture section.
LABEL_FIELDS = ("labelSet", "entityTypes", "relationTypes", "eventTypes", "sentimentTypes")


@dataclass(frozen=True)
class TaskSchema:
    name: str
    title: str
    category: str
    meta_schema: SchemaDoc
    document: dict
    order: int = 0

    @property
    def required_fields(self) -> frozenset[str]:
        return self.meta_schema.required

    def summary(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "category": self.category,
            "requiredFields": [f for f in self.document.get("required", [])],
        }


def _load_entry(doc: Any, origin: str) -> TaskSchema:
    if not isinstance(doc, dict) or not {"name", "category", "schema"} <= doc.keys():
        raise SchemaError(f"{origin}: catalog entry needs name, category and schema")
    if doc["category"] not in CATEGORIES:
        raise SchemaError(f"{origin}: unknown category {doc['category']!r}")
    meta_schema = parse_schema(doc["schema"])
    if meta_schema.kind != "object" or not {"taskDesc", "outputFormat"} <= meta_schema.required:
        raise SchemaError(f"{origin}: task schemas must require taskDesc and outputFormat")
    return TaskSchema(
        name=doc["name"],
        title=doc.get("title", doc["name"]),
        category=doc["category"],
        meta_schema=meta_schema,
        document=doc["schema"],
        order=int(doc.get("order", 1000)),
    )


class Catalog:
    """Builtin task schemas, optionally overridden by files in a user directory."""

    def __init__(self, schemas: Iterable[TaskSchema]):
        self._schemas = {s.name: s for s in schemas}

    @classmethod
    def load(cls, schema_dir: str | os.PathLike | None = None) -> "Catalog":
        entries: dict[str, TaskSchema] = {}
        root = resources.files("llm_sketch") / "catalog"
        for item in sorted(root.iterdir(), key=lambda p: p.name):
            if item.name.endswith(".json"):
                entry = _load_entry(parse_json(item.read_text("utf-8")), item.name)
                entries[entry.name] = entry
        if schema_dir is not None:
            for path in sorted(Path(schema_dir).glob("*.json")):
                entry = _load_entry(parse_json(path.read_text("utf-8")), str(path))
                entries[entry.name] = entry
        return cls(entries.values())

    def resolve(self, name: str) -> str:
        if name in self._schemas:
            return name
        alias = ALIASES.get(name)
        if alias in self._schemas:
            return alias
        raise UnknownSchema(name)

    def get(self, name: str) -> TaskSchema:
        return self._schemas[self.resolve(name)]

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except UnknownSchema:
            return False
        return True

    def __iter__(self):
        return iter(sorted(self._schemas.values(), key=lambda s: (s.order, s.name)))

    def __len__(self) -> int:
        return len(self._schemas)


_DEFAULT: Catalog | None = None


def default_catalog() -> Catalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Catalog.load()
    return _DEFAULT


def list_schemas(catalog: Catalog | None = None) -> list[dict]:
    return [s.summary() for s in (catalog or default_catalog())]


@dataclass(frozen=True, eq=False)
class TaskInstance:
    schema_name: str
    fields: dict
    output_format: SchemaDoc

    @property
    def task_desc(self) -> str:
        return self.fields["taskDesc"]

    def to_json(self) -> dict:
        return {"schemaName": self.schema_name, "fields": self.fields}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskInstance):
            return NotImplemented
        return serialize_canonical(self.to_json()) == serialize_canonical(other.to_json())

    def __hash__(self) -> int:
        return hash(serialize_canonical(self.to_json()))


def instantiate(schema_name: str, fields: Mapping, catalog: Catalog | None = None) -> TaskInstance:
    """Validate ``fields`` against the named task schema and parse its outputFormat."""
    catalog = catalog or default_catalog()
    schema = catalog.get(schema_name)
    report = validate(fields, schema.meta_schema)
    if not report.valid:
        raise InstanceInvalid(report)
    try:
        output_format = parse_schema(fields["outputFormat"], "#/outputFormat")
    except SchemaError as exc:
        raise BadOutputFormat(str(exc)) from None
    return TaskInstance(schema.name, dict(fields), output_format)


def save_instance(instance: TaskInstance, path: str | os.PathLike) -> None:
    Path(path).write_text(serialize_pretty(instance.to_json()) + "\n", encoding="utf-8")


def instance_from_document(doc: Any, catalog: Catalog | None = None) -> TaskInstance:
    if not isinstance(doc, dict) or "schemaName" not in doc or "fields" not in doc:
        raise SchemaError("task instance file needs schemaName and fields members")
    if not isinstance(doc["fields"], dict):
        raise SchemaError("task instance fields must be an object")
    return instantiate(doc["schemaName"], doc["fields"], catalog)


def load_instance(path: str | os.PathLike, catalog: Catalog | None = None) -> TaskInstance:
    text = Path(path).read_text(encoding="utf-8")
    return instance_from_document(parse_json(text), catalog)
