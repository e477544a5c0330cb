"""JSON values, canonical serialization and a validator for the schema subset.

JSON values are plain Python objects: ``None``, ``bool``, ``int``,
``decimal.Decimal`` (non-integral numbers), ``str``, ``list`` and ``dict``
(insertion ordered).  Floats are accepted on input to the serializer but the
parser never produces them.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from typing import Any, Iterator, Mapping, Union

from .errors import DuplicateKeyError, ParseError, SchemaError, UnsupportedSchema

JsonValue = Union[None, bool, int, Decimal, float, str, list, dict]

SCALAR_KINDS = ("string", "number", "integer", "boolean", "null")
TYPE_NAMES = ("object", "array") + SCALAR_KINDS
# "enum" = enum without a type, "any" = neither type nor enum
KINDS = TYPE_NAMES + ("enum", "any")

MODELED_KEYWORDS = frozenset(
    {"type", "properties", "required", "items", "enum", "description", "minItems", "maxItems"}
)
# annotations that carry no validation semantics
ANNOTATION_KEYWORDS = frozenset({"title", "$schema", "$id", "$comment", "default", "examples"})


# ---------------------------------------------------------------------------
# parsing / serialization


def _pairs_hook(pairs: list[tuple[str, Any]]) -> dict:
    out: dict = {}
    for key, value in pairs:
        if key in out:
            raise DuplicateKeyError(f"duplicate object member {key!r}")
        out[key] = value
    return out


def _reject_constant(name: str) -> Any:
    raise ParseError(f"{name} is not valid JSON")


# beyond the decimal module's exponent range; parses back to infinity
_HUGE_EXPONENT = "1e1000000000000000000"


def _parse_float(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        # exponent out of range: overflow to infinity, underflow to zero (as float parsing does)
        mantissa, _, exponent = text.lower().partition("e")
        negative = mantissa.startswith("-")
        if exponent.startswith("-") or Decimal(mantissa) == 0:
            return Decimal("-0" if negative else "0")
        return Decimal("-Infinity" if negative else "Infinity")


def _parse_int(text: str) -> int | Decimal:
    try:
        return int(text)
    except ValueError:
        # past the interpreter's int digit limit
        return Decimal(text)


_DECODER = json.JSONDecoder(
    object_pairs_hook=_pairs_hook,
    parse_float=_parse_float,
    parse_int=_parse_int,
    parse_constant=_reject_constant,
)


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8", "surrogatepass"))


def parse_json(text: str | bytes) -> JsonValue:
    """Parse a single JSON document, preserving member order."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("input is not valid UTF-8", exc.start) from None
    try:
        return _DECODER.decode(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, _byte_offset(text, exc.pos)) from None
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        # e.g. integers beyond the interpreter's digit limit
        raise ParseError(str(exc)) from None


def raw_decode(text: str, start: int = 0) -> tuple[JsonValue, int]:
    """Decode one JSON value starting exactly at ``start``; returns (value, end)."""
    try:
        return _DECODER.raw_decode(text, start)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, _byte_offset(text, exc.pos)) from None
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from None


_SURROGATE = re.compile("[\ud800-\udfff]")


def _dump_string(s: str) -> str:
    out = json.dumps(s, ensure_ascii=False)
    if _SURROGATE.search(out):
        # lone surrogates have no UTF-8 spelling; keep them as escapes
        out = _SURROGATE.sub(lambda m: "\\u%04x" % ord(m.group()), out)
    return out


def _dump_number(v: int | Decimal | float) -> str:
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Decimal):
        if v.is_infinite():
            return "-" + _HUGE_EXPONENT if v < 0 else _HUGE_EXPONENT
        if not v.is_finite():
            raise ValueError(f"non-finite number {v}")
        return str(v)
    text = repr(float(v))
    if text in ("inf", "-inf", "nan"):
        raise ValueError(f"non-finite number {v}")
    return text


def _dump(v: Any, out: list[str]) -> None:
    if v is None:
        out.append("null")
    elif v is True:
        out.append("true")
    elif v is False:
        out.append("false")
    elif isinstance(v, str):
        out.append(_dump_string(v))
    elif isinstance(v, (int, Decimal, float)):
        out.append(_dump_number(v))
    elif isinstance(v, (list, tuple)):
        out.append("[")
        for i, item in enumerate(v):
            if i:
                out.append(",")
            _dump(item, out)
        out.append("]")
    elif isinstance(v, Mapping):
        out.append("{")
        for i, (key, item) in enumerate(v.items()):
            if not isinstance(key, str):
                raise TypeError(f"object member names must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(_dump_string(key))
            out.append(":")
            _dump(item, out)
        out.append("}")
    else:
        raise TypeError(f"not a JSON value: {v!r}")


def serialize_canonical(value: JsonValue) -> str:
    """Compact, order-preserving JSON text."""
    out: list[str] = []
    _dump(value, out)
    return "".join(out)


def serialize_pretty(value: JsonValue, indent: int = 2) -> str:
    """Indented variant of the canonical form (same member order and escapes)."""

    def render(v: Any, depth: int) -> str:
        pad, inner = " " * (indent * depth), " " * (indent * (depth + 1))
        if isinstance(v, (list, tuple)) and v:
            body = ",\n".join(inner + render(item, depth + 1) for item in v)
            return f"[\n{body}\n{pad}]"
        if isinstance(v, Mapping) and v:
            body = ",\n".join(
                f"{inner}{_dump_string(k)}: {render(item, depth + 1)}" for k, item in v.items()
            )
            return f"{{\n{body}\n{pad}}}"
        return serialize_canonical(v)

    return render(value, 0)


def is_number(v: Any) -> bool:
    return isinstance(v, (int, Decimal, float)) and not isinstance(v, bool)


def is_integral(v: Any) -> bool:
    if not is_number(v):
        return False
    if isinstance(v, int):
        return True
    if isinstance(v, Decimal):
        return v.is_finite() and v == v.to_integral_value()
    return float(v).is_integer()


def json_type(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "boolean"
    if is_number(v):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, (list, tuple)):
        return "array"
    if isinstance(v, Mapping):
        return "object"
    raise TypeError(f"not a JSON value: {v!r}")


def json_equal(a: Any, b: Any) -> bool:
    """JSON equality: numbers compare by value, booleans never equal numbers."""
    ta, tb = json_type(a), json_type(b)
    if ta != tb:
        return False
    if ta == "array":
        return len(a) == len(b) and all(json_equal(x, y) for x, y in zip(a, b))
    if ta == "object":
        return a.keys() == b.keys() and all(json_equal(a[k], b[k]) for k in a)
    return a == b


def identical(a: Any, b: Any) -> bool:
    """Equality that also requires the same member order (round-trip check)."""
    if not json_equal(a, b):
        return False
    if isinstance(a, Mapping):
        return list(a) == list(b) and all(identical(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)):
        return all(identical(x, y) for x, y in zip(a, b))
    return True


# ---------------------------------------------------------------------------
# schema AST


@dataclass(frozen=True, eq=False)
class SchemaDoc:
    kind: str
    properties: tuple[tuple[str, "SchemaDoc"], ...] = ()
    required: frozenset[str] = frozenset()
    items: "SchemaDoc | None" = None
    enum: tuple | None = None
    description: str | None = None
    min_items: int | None = None
    max_items: int | None = None
    unsupported_keywords: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown schema kind {self.kind!r}")
        names = [name for name, _ in self.properties]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate property names")
        missing = [r for r in sorted(self.required) if r not in names]
        if missing:
            raise SchemaError(f"required names not in properties: {missing}")
        if self.enum is not None:
            if not self.enum:
                raise SchemaError("enum must be non-empty")
            for i, a in enumerate(self.enum):
                for b in self.enum[i + 1 :]:
                    if json_equal(a, b):
                        raise SchemaError(f"enum members are not distinct: {serialize_canonical(a)}")
        for bound in (self.min_items, self.max_items):
            if bound is not None and (isinstance(bound, bool) or not isinstance(bound, int) or bound < 0):
                raise SchemaError("minItems/maxItems must be non-negative integers")
        if self.min_items is not None and self.max_items is not None and self.min_items > self.max_items:
            raise SchemaError("minItems exceeds maxItems")

    @property
    def property_map(self) -> dict[str, "SchemaDoc"]:
        return dict(self.properties)

    def to_json(self) -> dict:
        """Schema document for the modeled keywords, in a fixed key order."""
        doc: dict[str, Any] = {}
        if self.kind in TYPE_NAMES:
            doc["type"] = self.kind
        if self.description is not None:
            doc["description"] = self.description
        if self.properties:
            doc["properties"] = {name: sub.to_json() for name, sub in self.properties}
        if self.required:
            doc["required"] = [name for name, _ in self.properties if name in self.required]
        if self.items is not None:
            doc["items"] = self.items.to_json()
        if self.min_items is not None:
            doc["minItems"] = self.min_items
        if self.max_items is not None:
            doc["maxItems"] = self.max_items
        if self.enum is not None:
            doc["enum"] = list(self.enum)
        return doc

    @cached_property
    def fingerprint(self) -> str:
        return serialize_canonical([self.to_json(), list(self.unsupported_keywords)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SchemaDoc):
            return NotImplemented
        return self.fingerprint == other.fingerprint

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def walk(self, pointer: str = "") -> Iterator[tuple[str, "SchemaDoc"]]:
        yield pointer, self
        for name, sub in self.properties:
            yield from sub.walk(f"{pointer}/properties/{_escape_pointer(name)}")
        if self.items is not None:
            yield from self.items.walk(f"{pointer}/items")

    def all_unsupported(self) -> list[str]:
        """JSON-pointer locations of every unmodeled keyword in the tree."""
        return [
            f"{pointer}/{_escape_pointer(kw)}"
            for pointer, node in self.walk()
            for kw in node.unsupported_keywords
        ]


def _escape_pointer(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def schema_hash(schema: SchemaDoc) -> str:
    return hashlib.sha256(schema.fingerprint.encode("utf-8")).hexdigest()


def _non_negative_int(value: Any, keyword: str, where: str) -> int:
    if isinstance(value, bool) or not is_integral(value) or value < 0:
        raise SchemaError(f"{where}: {keyword} must be a non-negative integer")
    return int(value)


def parse_schema(value: JsonValue, _where: str = "#") -> SchemaDoc:
    """Build a SchemaDoc, recording (not rejecting) unmodeled keywords."""
    if not isinstance(value, Mapping):
        raise SchemaError(f"{_where}: schema must be an object")

    unsupported: list[str] = []
    kind: str | None = None
    type_value = value.get("type")
    if "type" in value:
        if isinstance(type_value, str):
            if type_value not in TYPE_NAMES:
                raise SchemaError(f"{_where}: unknown type {type_value!r}")
            kind = type_value
        else:
            unsupported.append("type")

    enum = None
    if "enum" in value:
        if not isinstance(value["enum"], list):
            raise SchemaError(f"{_where}: enum must be an array")
        enum = tuple(value["enum"])
    if kind is None:
        kind = "enum" if enum is not None else "any"

    properties: list[tuple[str, SchemaDoc]] = []
    if "properties" in value:
        props = value["properties"]
        if not isinstance(props, Mapping):
            raise SchemaError(f"{_where}: properties must be an object")
        for name, sub in props.items():
            properties.append((name, parse_schema(sub, f"{_where}/properties/{_escape_pointer(name)}")))

    required: frozenset[str] = frozenset()
    if "required" in value:
        req = value["required"]
        if not isinstance(req, list) or not all(isinstance(r, str) for r in req):
            raise SchemaError(f"{_where}: required must be an array of strings")
        if len(set(req)) != len(req):
            raise SchemaError(f"{_where}: required names must be unique")
        names = {name for name, _ in properties}
        missing = [r for r in req if r not in names]
        if missing:
            raise SchemaError(f"{_where}: required names absent from properties: {missing}")
        required = frozenset(req)

    items = None
    if "items" in value:
        if isinstance(value["items"], Mapping):
            items = parse_schema(value["items"], f"{_where}/items")
        else:
            unsupported.append("items")

    min_items = max_items = None
    if "minItems" in value:
        min_items = _non_negative_int(value["minItems"], "minItems", _where)
    if "maxItems" in value:
        max_items = _non_negative_int(value["maxItems"], "maxItems", _where)

    description = value.get("description")
    if description is not None and not isinstance(description, str):
        raise SchemaError(f"{_where}: description must be a string")

    for key in value:
        if key not in MODELED_KEYWORDS and key not in ANNOTATION_KEYWORDS:
            unsupported.append(key)

    try:
        return SchemaDoc(
            kind=kind,
            properties=tuple(properties),
            required=required,
            items=items,
            enum=enum,
            description=description,
            min_items=min_items,
            max_items=max_items,
            unsupported_keywords=tuple(unsupported),
        )
    except SchemaError as exc:
        raise SchemaError(f"{_where}: {exc}") from None


# ---------------------------------------------------------------------------
# validation

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def member_path(parent: str, name: str) -> str:
    if _IDENT.match(name):
        return f"{parent}.{name}"
    return f"{parent}[{_dump_string(name)}]"


@dataclass(frozen=True)
class Violation:
    path: str
    keyword: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"path": v.path, "keyword": v.keyword, "message": v.message} for v in self.violations
            ],
        }


def _matches_type(value: Any, kind: str) -> bool:
    if kind == "integer":
        return is_integral(value)
    if kind in ("enum", "any"):
        return True
    return json_type(value) == kind


def _check(value: Any, schema: SchemaDoc, path: str, out: list[Violation]) -> None:
    if not _matches_type(value, schema.kind):
        out.append(Violation(path, "type", f"expected {schema.kind}, got {json_type(value)}"))
        return
    if schema.enum is not None and not any(json_equal(value, m) for m in schema.enum):
        out.append(Violation(path, "enum", f"{serialize_canonical(value)} is not one of the enum members"))

    if isinstance(value, Mapping):
        for name, sub in schema.properties:
            if name in value:
                _check(value[name], sub, member_path(path, name), out)
            elif name in schema.required:
                out.append(Violation(path, "required", f"missing required property {name!r}"))
    elif isinstance(value, (list, tuple)):
        n = len(value)
        if schema.min_items is not None and n < schema.min_items:
            out.append(Violation(path, "minItems", f"{n} items, at least {schema.min_items} required"))
        if schema.max_items is not None and n > schema.max_items:
            out.append(Violation(path, "maxItems", f"{n} items, at most {schema.max_items} allowed"))
        if schema.items is not None:
            for i, item in enumerate(value):
                _check(item, schema.items, f"{path}[{i}]", out)


def validate(value: JsonValue, schema: SchemaDoc, lenient: bool = False) -> ValidationReport:
    """Check ``value`` against ``schema``; unlisted object members are allowed.

    Raises UnsupportedSchema when the schema carries unmodeled keywords,
    unless ``lenient`` is set, in which case those keywords are ignored.
    """
    if not lenient:
        offending = schema.all_unsupported()
        if offending:
            raise UnsupportedSchema(offending)
    out: list[Violation] = []
    _check(value, schema, "$", out)
    return ValidationReport(tuple(out))
