"""Independent reference implementations used as test oracles.

Nothing here imports the package's validator, automaton or serializer, so
agreement with them is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
from decimal import Decimal
from functools import lru_cache

from llm_sketch.constraint import regex as rx


# ---------------------------------------------------------------------------
# brute-force semantic checker over raw schema dicts


def _is_num(v) -> bool:
    return isinstance(v, (int, Decimal, float)) and not isinstance(v, bool)


def same(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if _is_num(a) and _is_num(b):
        return Decimal(str(a)) == Decimal(str(b))
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return set(a) == set(b) and all(same(a[k], b[k]) for k in a)
    if a is None or b is None:
        return a is b
    return type(a) is type(b) and a == b


def oracle_valid(value, schema: dict) -> bool:
    if "enum" in schema and not any(same(value, m) for m in schema["enum"]):
        return False
    kind = schema.get("type")
    if kind is None:
        return True
    if kind == "null":
        return value is None
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "string":
        return isinstance(value, str)
    if kind == "number":
        return _is_num(value)
    if kind == "integer":
        return _is_num(value) and Decimal(str(value)) == Decimal(str(value)).to_integral_value()
    if kind == "array":
        if not isinstance(value, list):
            return False
        if len(value) < schema.get("minItems", 0):
            return False
        if "maxItems" in schema and len(value) > schema["maxItems"]:
            return False
        return "items" not in schema or all(oracle_valid(v, schema["items"]) for v in value)
    if kind == "object":
        if not isinstance(value, dict):
            return False
        if any(name not in value for name in schema.get("required", [])):
            return False
        props = schema.get("properties", {})
        return all(oracle_valid(value[k], props[k]) for k in value if k in props)
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# position-set matcher over the regex AST


def ast_fullmatch(node: rx.Node, data: bytes) -> bool:
    @lru_cache(maxsize=None)
    def ends(n: rx.Node, pos: int) -> frozenset[int]:
        if isinstance(n, rx.Literal):
            return frozenset([pos + len(n.data)]) if data.startswith(n.data, pos) else frozenset()
        if isinstance(n, rx.ByteClass):
            return frozenset([pos + 1]) if pos < len(data) and (n.mask >> data[pos]) & 1 else frozenset()
        if isinstance(n, rx.Group):
            return ends(n.node, pos)
        if isinstance(n, rx.Alt):
            return frozenset().union(*(ends(o, pos) for o in n.options))
        if isinstance(n, rx.Concat):
            current = frozenset([pos])
            for part in n.parts:
                current = frozenset().union(*(ends(part, p) for p in current))
                if not current:
                    break
            return current
        if isinstance(n, rx.Repeat):

            def step(positions):
                return frozenset().union(*(ends(n.node, p) for p in positions))

            current = frozenset([pos])
            for _ in range(n.min):
                current = step(current)
            out = set(current)
            if n.max is None:
                frontier = current
                while frontier:
                    frontier = step(frontier) - out
                    out |= frontier
            else:
                for _ in range(n.max - n.min):
                    current = step(current)
                    if not current:
                        break
                    out |= current
            return frozenset(out)
        raise TypeError(n)

    return len(data) in ends(node, 0)


# ---------------------------------------------------------------------------
# finite pools for exhaustive checks

SCALAR_POOL = (None, True, False, 0, -3, Decimal("1.5"), Decimal("2.0"), "a", "b", "")
MEMBER_POOL = ("a", 0, Decimal("1.5"))


def pool_values(scalars=SCALAR_POOL, members=MEMBER_POOL, depth: int = 2) -> list:
    """Scalars plus every array/object of depth 2 whose members come from the 3-member pool."""
    values = list(scalars)
    if depth < 2:
        return values
    small = list(members)
    size = len(small)
    for n in range(size + 1):
        values.extend(list(c) for c in itertools.product(small, repeat=n))
    keys = ("a", "b")
    for present in itertools.product([False, True], repeat=len(keys)):
        chosen = [k for k, p in zip(keys, present) if p]
        for combo in itertools.product(small, repeat=len(chosen)):
            values.append(dict(zip(chosen, combo)))
    return values


def pool_schemas() -> list[dict]:
    scalars = [{"type": t} for t in ("null", "boolean", "string", "number", "integer")]
    enums = [{"enum": ["a", 0]}, {"type": "string", "enum": ["a", "b"]}, {"enum": [True, None]}]
    leaves = scalars + enums + [{}]
    out = list(leaves)
    for item in scalars[:3] + enums[:1]:
        out.append({"type": "array", "items": item})
        out.append({"type": "array", "items": item, "minItems": 1, "maxItems": 2})
    out.append({"type": "array", "maxItems": 0})
    for a, b in itertools.product([scalars[2], scalars[4], enums[0]], repeat=2):
        for required in ([], ["a"], ["a", "b"]):
            doc = {"type": "object", "properties": {"a": a, "b": b}}
            if required:
                doc["required"] = required
            out.append(doc)
    return out
