"""Byte-level regular expression AST and the lowering from SchemaDoc.

The language produced for a schema is the set of compact serializations of
values that validate against it, with object members in declaration order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import UnsupportedSchema
from ..json_schema import SchemaDoc, serialize_canonical, validate


class Node:
    __slots__ = ()

    def __hash__(self) -> int:
        # cached: trees are hashed repeatedly while memoizing compilation
        return self._hash  # type: ignore[attr-defined]


def _cache_hash(node: Node, *parts: object) -> None:
    object.__setattr__(node, "_hash", hash((type(node).__name__,) + parts))


@dataclass(frozen=True, eq=True)
class Literal(Node):
    data: bytes

    def __post_init__(self) -> None:
        _cache_hash(self, self.data)

    __hash__ = Node.__hash__


@dataclass(frozen=True, eq=True)
class ByteClass(Node):
    """Set of single bytes as a 256-bit mask; mask 0 matches nothing."""

    mask: int

    def __post_init__(self) -> None:
        if not 0 <= self.mask < (1 << 256):
            raise ValueError("byte class mask out of range")
        _cache_hash(self, self.mask)

    __hash__ = Node.__hash__

    def bytes(self) -> list[int]:
        return [b for b in range(256) if self.mask >> b & 1]


@dataclass(frozen=True, eq=True)
class Concat(Node):
    parts: tuple[Node, ...]

    def __post_init__(self) -> None:
        _cache_hash(self, self.parts)

    __hash__ = Node.__hash__


@dataclass(frozen=True, eq=True)
class Alt(Node):
    options: tuple[Node, ...]

    def __post_init__(self) -> None:
        _cache_hash(self, self.options)

    __hash__ = Node.__hash__


@dataclass(frozen=True, eq=True)
class Repeat(Node):
    node: Node
    min: int
    max: int | None = None

    def __post_init__(self) -> None:
        if self.min < 0 or (self.max is not None and self.max < self.min):
            raise ValueError(f"bad repetition bounds {{{self.min},{self.max}}}")
        _cache_hash(self, self.node, self.min, self.max)

    __hash__ = Node.__hash__


@dataclass(frozen=True, eq=True)
class Group(Node):
    node: Node

    def __post_init__(self) -> None:
        _cache_hash(self, self.node)

    __hash__ = Node.__hash__


EMPTY = ByteClass(0)
EPSILON = Literal(b"")


def lit(data: str | bytes) -> Literal:
    return Literal(data.encode("utf-8") if isinstance(data, str) else bytes(data))


def byte_range(*ranges: tuple[int, int] | int) -> ByteClass:
    mask = 0
    for r in ranges:
        lo, hi = (r, r) if isinstance(r, int) else r
        for b in range(lo, hi + 1):
            mask |= 1 << b
    return ByteClass(mask)


def seq(*parts: Node) -> Node:
    flat: list[Node] = []
    for p in parts:
        if isinstance(p, Concat):
            flat.extend(p.parts)
        elif p != EPSILON:
            flat.append(p)
    if not flat:
        return EPSILON
    return flat[0] if len(flat) == 1 else Concat(tuple(flat))


def alt(*options: Node) -> Node:
    flat: list[Node] = []
    for o in options:
        for item in o.options if isinstance(o, Alt) else (o,):
            if item != EMPTY and item not in flat:
                flat.append(item)
    if not flat:
        return EMPTY
    return flat[0] if len(flat) == 1 else Alt(tuple(flat))


def opt(node: Node) -> Node:
    return Repeat(node, 0, 1)


def star(node: Node) -> Node:
    return Repeat(node, 0, None)


# ---------------------------------------------------------------------------
# rendering, mostly for debugging and as an input to Python's `re` matcher


def _class_pattern(mask: int) -> bytes:
    if mask == 0:
        return rb"(?!)"
    parts = []
    b = 0
    while b < 256:
        if mask >> b & 1:
            lo = b
            while b + 1 < 256 and mask >> (b + 1) & 1:
                b += 1
            parts.append(b"\\x%02x" % lo if lo == b else b"\\x%02x-\\x%02x" % (lo, b))
        b += 1
    return b"[" + b"".join(parts) + b"]"


def to_pattern(node: Node) -> bytes:
    """Render as a `re`-compatible bytes pattern."""
    if isinstance(node, Literal):
        return re.escape(node.data)
    if isinstance(node, ByteClass):
        return _class_pattern(node.mask)
    if isinstance(node, Concat):
        return b"".join(b"(?:" + to_pattern(p) + b")" for p in node.parts)
    if isinstance(node, Alt):
        return b"(?:" + b"|".join(to_pattern(o) for o in node.options) + b")"
    if isinstance(node, Repeat):
        hi = b"" if node.max is None else str(node.max).encode()
        return b"(?:" + to_pattern(node.node) + b"){%d,%s}" % (node.min, hi)
    if isinstance(node, Group):
        return b"(?:" + to_pattern(node.node) + b")"
    raise TypeError(f"not a regex node: {node!r}")


# ---------------------------------------------------------------------------
# JSON building blocks

_DIGIT = byte_range((0x30, 0x39))
_DIGIT19 = byte_range((0x31, 0x39))
_HEX = byte_range((0x30, 0x39), (0x41, 0x46), (0x61, 0x66))
_CONT = byte_range((0x80, 0xBF))

_INT_PART = seq(opt(lit("-")), alt(lit("0"), seq(_DIGIT19, star(_DIGIT))))
INTEGER = Group(_INT_PART)
NUMBER = Group(
    seq(
        _INT_PART,
        opt(seq(lit("."), Repeat(_DIGIT, 1))),
        opt(seq(byte_range(0x65, 0x45), opt(byte_range(0x2B, 0x2D)), Repeat(_DIGIT, 1))),
    )
)

# one UTF-8 encoded scalar value other than '"', '\' and controls
_UTF8_CHAR = alt(
    byte_range((0x20, 0x21), (0x23, 0x5B), (0x5D, 0x7F)),
    seq(byte_range((0xC2, 0xDF)), _CONT),
    seq(lit(b"\xe0"), byte_range((0xA0, 0xBF)), _CONT),
    seq(byte_range((0xE1, 0xEC), (0xEE, 0xEF)), _CONT, _CONT),
    seq(lit(b"\xed"), byte_range((0x80, 0x9F)), _CONT),
    seq(lit(b"\xf0"), byte_range((0x90, 0xBF)), _CONT, _CONT),
    seq(byte_range((0xF1, 0xF3)), _CONT, _CONT, _CONT),
    seq(lit(b"\xf4"), byte_range((0x80, 0x8F)), _CONT, _CONT),
)
_ESCAPE = seq(
    lit("\\"),
    alt(byte_range(0x22, 0x5C, 0x2F, 0x62, 0x66, 0x6E, 0x72, 0x74), seq(lit("u"), _HEX, _HEX, _HEX, _HEX)),
)
STRING = Group(seq(lit('"'), star(alt(_UTF8_CHAR, _ESCAPE)), lit('"')))
BOOLEAN = alt(lit("true"), lit("false"))
NULL = lit("null")


def _object_regex(schema: SchemaDoc, pointer: str) -> Node:
    members = [
        (name in schema.required, seq(lit(serialize_canonical(name) + ":"), _lower(sub, f"{pointer}/properties/{name}")))
        for name, sub in schema.properties
    ]
    comma = lit(",")
    # after[i]: members i.. when at least one member was already written
    after: list[Node] = [EPSILON] * (len(members) + 1)
    for i in range(len(members) - 1, -1, -1):
        required, member = members[i]
        step = seq(comma, member)
        after[i] = seq(step if required else opt(step), after[i + 1])
    # first[i]: members i.. when nothing was written yet
    first: list[Node] = [EPSILON] * (len(members) + 1)
    for i in range(len(members) - 1, -1, -1):
        required, member = members[i]
        taken = seq(member, after[i + 1])
        first[i] = taken if required else alt(taken, first[i + 1])
    return seq(lit("{"), first[0], lit("}"))


def _array_regex(schema: SchemaDoc, pointer: str) -> Node:
    lo = schema.min_items or 0
    hi = schema.max_items
    if schema.items is None:
        if lo > 0:
            raise UnsupportedSchema([f"{pointer}/minItems"], "array with minItems but no items schema")
        return lit("[]")
    if hi == 0:
        return lit("[]")
    item = _lower(schema.items, f"{pointer}/items")
    rest_max = None if hi is None else hi - 1
    body = seq(item, Repeat(seq(lit(","), item), max(lo - 1, 0), rest_max))
    if lo == 0:
        body = opt(body)
    return seq(lit("["), body, lit("]"))


def _lower(schema: SchemaDoc, pointer: str) -> Node:
    if schema.enum is not None:
        members = [m for m in schema.enum if validate(m, schema).valid]
        return alt(*(lit(serialize_canonical(m)) for m in members))
    kind = schema.kind
    if kind == "null":
        return NULL
    if kind == "boolean":
        return BOOLEAN
    if kind == "integer":
        return INTEGER
    if kind == "number":
        return NUMBER
    if kind == "string":
        return STRING
    if kind == "object":
        return _object_regex(schema, pointer)
    if kind == "array":
        return _array_regex(schema, pointer)
    raise UnsupportedSchema([pointer or "/"], f"{pointer or '/'}: a schema without type or enum has no finite-state form")


def schema_to_regex(schema: SchemaDoc) -> Node:
    offending = schema.all_unsupported()
    if offending:
        raise UnsupportedSchema(offending)
    return _lower(schema, "")
