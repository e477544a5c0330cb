"""Schema-following training data: random schemas, conforming instances,
the value-selection task, value mutation, corpus building and task/sf mixing.
"""

from __future__ import annotations

import copy
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from . import templates
from .errors import PoolTooSmall
from .json_schema import (
    JsonValue,
    SchemaDoc,
    json_equal,
    parse_json,
    parse_schema,
    schema_hash,
    serialize_canonical,
    serialize_pretty,
    validate,
)
from .prompt import package
from .seeds import derive_seed
from .tasks import TaskInstance, instance_from_document

DEFAULT_KIND_WEIGHTS = {
    "object": 0.3,
    "array": 0.2,
    "string": 0.15,
    "integer": 0.1,
    "number": 0.1,
    "boolean": 0.05,
    "enum": 0.1,
}
CONTAINER_KINDS = ("object", "array")

_WORDS = (
    "alpha amber anchor apple arrow atlas aurora badge banner basil beacon birch blossom bolt bridge "
    "cactus canyon carbon cedar cipher citrus comet coral crane crystal delta desert dune eagle echo "
    "ember falcon fern fjord flint forest fossil frost galaxy garnet glacier granite harbor hazel "
    "horizon indigo iris island ivory jade jasmine jungle kernel kiwi lagoon lantern lava lemon lotus "
    "maple marble meadow meteor mint nebula nectar nova oasis ocean onyx orbit orchid pebble pepper "
    "pine pixel planet prism quartz quill radar raven reef ridge river ruby saffron sage sierra "
    "signal slate solar spruce storm summit tango thunder tidal topaz tulip tundra umber valley "
    "vapor velvet violet vortex willow zephyr zinc"
).split()
_FIELD_WORDS = (
    "id name title label kind status count score value amount price total level rank index size "
    "color city country email phone owner author source target date year month day note comment "
    "tags items entries details meta info summary category group region code flag enabled active "
    "visible ratio weight height width depth length speed version lang text message"
).split()
_ODD_STRINGS = ('say "hi"', "back\\slash", "line\nbreak", "tab\there", "café", "数据", "emoji 😀", "\x01ctl")


@dataclass(frozen=True)
class SchemaGenConfig:
    max_depth: int = 5
    max_width: int = 5
    seed: int = 0
    kind_weights: tuple[tuple[str, float], ...] = tuple(DEFAULT_KIND_WEIGHTS.items())
    enum_pool_size: int = 6
    description_prob: float = 0.2
    bounded_array_prob: float = 0.5
    root_object: bool = True

    def __post_init__(self) -> None:
        if self.max_depth < 1 or self.max_width < 1:
            raise ValueError("max_depth and max_width must be >= 1")
        weights = dict(self.kind_weights)
        if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
            raise ValueError("kind weights must be non-negative and not all zero")
        unknown = set(weights) - set(DEFAULT_KIND_WEIGHTS) - {"null"}
        if unknown:
            raise ValueError(f"unknown kinds in weights: {sorted(unknown)}")
        if self.enum_pool_size < 1:
            raise ValueError("enum_pool_size must be >= 1")

    @property
    def weights(self) -> dict[str, float]:
        return dict(self.kind_weights)

    def to_json(self) -> dict:
        return {
            "maxDepth": self.max_depth,
            "maxWidth": self.max_width,
            "seed": self.seed,
            "kindWeights": {k: Decimal(str(w)) for k, w in self.kind_weights},
            "enumPoolSize": self.enum_pool_size,
        }


# ---------------------------------------------------------------------------
# random schemas


def _pick_kind(weights: dict[str, float], allowed: Iterable[str], rng: random.Random) -> str:
    kinds = [k for k in allowed if weights.get(k, 0) > 0]
    if not kinds:
        return "string"
    return rng.choices(kinds, weights=[weights[k] for k in kinds])[0]


def _enum_doc(config: SchemaGenConfig, rng: random.Random) -> dict:
    n = rng.randint(1, config.enum_pool_size)
    members: list = rng.sample(_WORDS, n)
    if rng.random() < 0.3:
        # untyped enum mixing strings and integers
        members = [m if rng.random() < 0.5 else rng.randint(-50, 50) for m in members]
        unique: list = []
        for m in members:
            if not any(json_equal(m, u) for u in unique):
                unique.append(m)
        return {"enum": unique}
    return {"type": "string", "enum": members}


def _schema_doc(config: SchemaGenConfig, depth: int, rng: random.Random, kind: str | None = None) -> dict:
    weights = config.weights
    if kind is None:
        leaf_only = depth >= config.max_depth
        pool = [k for k in weights if not (leaf_only and k in CONTAINER_KINDS)]
        kind = _pick_kind(weights, pool, rng)

    if kind == "enum":
        doc = _enum_doc(config, rng)
    elif kind == "object":
        n = rng.randint(1, config.max_width)
        names = rng.sample(_FIELD_WORDS, n)
        props = {name: _schema_doc(config, depth + 1, rng) for name in names}
        required = [name for name in names if rng.random() < 0.6]
        doc = {"type": "object", "properties": props}
        if required:
            doc["required"] = required
    elif kind == "array":
        doc = {"type": "array", "items": _schema_doc(config, depth + 1, rng)}
        if rng.random() < config.bounded_array_prob:
            hi = rng.randint(1, config.max_width)
            if rng.random() < 0.5:
                doc["minItems"] = rng.randint(0, hi)
            doc["maxItems"] = hi
    else:
        doc = {"type": kind}
    if rng.random() < config.description_prob:
        doc = {**doc, "description": f"{rng.choice(_WORDS)} {rng.choice(_WORDS)}"}
    return doc


def random_schema_document(config: SchemaGenConfig, rng: random.Random) -> dict:
    root_kind = None
    if config.max_depth >= 2 and config.root_object and config.weights.get("object", 0) > 0:
        root_kind = "object"
    return _schema_doc(config, 1, rng, root_kind)


def random_schema(config: SchemaGenConfig, rng: random.Random) -> SchemaDoc:
    """Random schema with depth <= max_depth (root = 1) and width <= max_width."""
    return parse_schema(random_schema_document(config, rng))


def schema_depth(schema: SchemaDoc) -> int:
    children = [sub for _, sub in schema.properties]
    if schema.items is not None:
        children.append(schema.items)
    return 1 + max((schema_depth(c) for c in children), default=0)


def schema_width(schema: SchemaDoc) -> int:
    own = max(len(schema.properties), schema.max_items or 0)
    children = [sub for _, sub in schema.properties]
    if schema.items is not None:
        children.append(schema.items)
    return max([own, *(schema_width(c) for c in children)])


# ---------------------------------------------------------------------------
# conforming instances


def _random_string(rng: random.Random) -> str:
    r = rng.random()
    if r < 0.1:
        return rng.choice(_ODD_STRINGS)
    if r < 0.15:
        return ""
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 3)))


def _random_number(rng: random.Random) -> int | Decimal:
    if rng.random() < 0.3:
        return rng.randint(-1000, 1000)
    return Decimal(rng.randint(-100000, 100000)).scaleb(-rng.randint(1, 3))


def _random_scalar(rng: random.Random) -> JsonValue:
    return rng.choice([_random_string, _random_number, lambda r: r.random() < 0.5, lambda r: r.randint(0, 99)])(rng)


def _enum_choices(schema: SchemaDoc) -> list:
    return [m for m in schema.enum or () if validate(m, schema, lenient=True).valid]


def conforming_instance(schema: SchemaDoc, rng: random.Random, unbounded_max: int = 3) -> JsonValue:
    """A value that validates against ``schema`` (object members in declaration order)."""
    if schema.enum is not None:
        choices = _enum_choices(schema)
        if not choices:
            raise ValueError("schema admits no value")
        return copy.deepcopy(rng.choice(choices))
    kind = schema.kind
    if kind == "null":
        return None
    if kind == "boolean":
        return rng.random() < 0.5
    if kind == "integer":
        return rng.randint(-1000, 1000)
    if kind == "number":
        return _random_number(rng)
    if kind == "string":
        return _random_string(rng)
    if kind == "object":
        out = {}
        for name, sub in schema.properties:
            if name in schema.required or rng.random() < 0.5:
                out[name] = conforming_instance(sub, rng, unbounded_max)
        return out
    if kind == "array":
        lo = schema.min_items or 0
        hi = schema.max_items if schema.max_items is not None else max(lo, unbounded_max)
        n = rng.randint(lo, hi)
        if schema.items is None:
            return [_random_scalar(rng) for _ in range(n)]
        return [conforming_instance(schema.items, rng, unbounded_max) for _ in range(n)]
    return _random_scalar(rng)


# ---------------------------------------------------------------------------
# leaves, value selection, mutation

KeyPath = tuple  # sequence of member names / indexes


def leaves(value: JsonValue, schema: SchemaDoc, path: KeyPath = ()) -> list[tuple[KeyPath, SchemaDoc, JsonValue]]:
    """(path, governing schema, value) for every scalar or enum-governed leaf."""
    if schema.enum is None:
        if isinstance(value, dict):
            props = schema.property_map
            out = []
            for name, item in value.items():
                out.extend(leaves(item, props.get(name, SchemaDoc("any")), path + (name,)))
            return out
        if isinstance(value, list):
            items = schema.items or SchemaDoc("any")
            out = []
            for i, item in enumerate(value):
                out.extend(leaves(item, items, path + (i,)))
            return out
    return [(path, schema, value)]


@dataclass(frozen=True)
class TrainingSample:
    prompt: str
    response: str
    kind: str  # "task" | "schema_following"
    schema_hash: str

    def to_json(self) -> dict:
        return {"prompt": self.prompt, "response": self.response, "kind": self.kind, "schema_hash": self.schema_hash}

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingSample":
        return cls(doc["prompt"], doc["response"], doc["kind"], doc["schema_hash"])


def value_selection_prompt(schema: SchemaDoc, candidates: Sequence[JsonValue]) -> str:
    return "\n".join(
        [
            templates.VALUE_SELECTION_INSTRUCTION,
            templates.SCHEMA_LINE_PREFIX + serialize_canonical(schema.to_json()),
            templates.CANDIDATES_LINE_PREFIX + serialize_canonical(list(candidates)),
        ]
    )


def embedded_schema(prompt: str) -> SchemaDoc:
    for line in prompt.splitlines():
        if line.startswith(templates.SCHEMA_LINE_PREFIX):
            return parse_schema(parse_json(line[len(templates.SCHEMA_LINE_PREFIX) :]))
    raise ValueError("prompt carries no schema line")


def embedded_candidates(prompt: str) -> list:
    for line in prompt.splitlines():
        if line.startswith(templates.CANDIDATES_LINE_PREFIX):
            return parse_json(line[len(templates.CANDIDATES_LINE_PREFIX) :])
    raise ValueError("prompt carries no candidate line")


def value_selection_task(
    schema: SchemaDoc, instance: JsonValue, rng: random.Random, distractors: int | None = None
) -> TrainingSample:
    found = leaves(instance, schema)
    values = [v for _, _, v in found]
    k = min(len(values), 20) if distractors is None else distractors
    extra = []
    for _ in range(k):
        _, leaf_schema, current = found[rng.randrange(len(found))]
        candidate = current
        for _ in range(8):
            candidate = conforming_instance(leaf_schema, rng)
            if not any(json_equal(candidate, v) for v in values + extra):
                break
        extra.append(candidate)
    candidates = values + extra
    rng.shuffle(candidates)
    return TrainingSample(
        prompt=value_selection_prompt(schema, candidates),
        response=serialize_canonical(instance),
        kind="schema_following",
        schema_hash=schema_hash(schema),
    )


@dataclass(frozen=True)
class MutationResult:
    value: JsonValue
    changed: bool

    @property
    def no_mutation_possible(self) -> bool:
        return not self.changed


def _alternative(schema: SchemaDoc, current: JsonValue, rng: random.Random) -> tuple[bool, JsonValue]:
    """(found, value) with value != current that still satisfies ``schema``."""
    if schema.enum is not None:
        others = [m for m in _enum_choices(schema) if not json_equal(m, current)]
        return (True, copy.deepcopy(rng.choice(others))) if others else (False, current)
    kind = schema.kind
    if kind == "null":
        return False, current
    if kind == "boolean":
        return True, not current
    for _ in range(8):
        candidate = conforming_instance(schema, rng) if kind != "any" else _random_scalar(rng)
        if not json_equal(candidate, current):
            return True, candidate
    if kind in ("integer", "number"):
        return True, current + 1
    if kind == "string":
        return True, current + "x"
    if kind == "any":
        return True, None if current is not None else 0
    return False, current


def _set_path(root: JsonValue, path: KeyPath, value: JsonValue) -> JsonValue:
    if not path:
        return value
    node = root
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return root


def mutate_values(instance: JsonValue, schema: SchemaDoc, rng: random.Random) -> MutationResult:
    """Change at least one leaf value while keeping keys and array lengths."""
    result = copy.deepcopy(instance)
    options = []
    for path, leaf_schema, current in leaves(result, schema):
        found, value = _alternative(leaf_schema, current, rng)
        if found:
            options.append((path, value))
    if not options:
        return MutationResult(result, False)
    count = rng.randint(1, len(options))
    for path, value in rng.sample(options, count):
        result = _set_path(result, path, value)
    return MutationResult(result, True)


# ---------------------------------------------------------------------------
# corpus


def _draw_schema(config: SchemaGenConfig, index: int, attempt: int) -> SchemaDoc:
    return random_schema(config, random.Random(derive_seed(config.seed, "schema", index, attempt)))


def _draw_first(args: tuple[SchemaGenConfig, int, int]) -> list[SchemaDoc]:
    config, lo, hi = args
    return [_draw_schema(config, i, 0) for i in range(lo, hi)]


def _samples_for(args: tuple[SchemaGenConfig, int, SchemaDoc, int]) -> list[TrainingSample]:
    config, index, schema, per_schema = args
    rng = random.Random(derive_seed(config.seed, "samples", index))
    base = conforming_instance(schema, rng)
    out = []
    for _ in range(per_schema):
        mutated = mutate_values(base, schema, rng).value
        out.append(value_selection_task(schema, mutated, rng))
    return out


def _samples_chunk(args: tuple[SchemaGenConfig, int, list[SchemaDoc], int]) -> list[TrainingSample]:
    config, lo, schemas, per_schema = args
    out = []
    for offset, schema in enumerate(schemas):
        out.extend(_samples_for((config, lo + offset, schema, per_schema)))
    return out


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / (workers * 4)))
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def generate_schemas(count: int, config: SchemaGenConfig, workers: int = 1) -> list[SchemaDoc]:
    """``count`` structurally distinct schemas; a collision re-draws that index."""
    if count < 1:
        raise ValueError("schema count must be positive")
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_draw_first, [(config, lo, hi) for lo, hi in _chunks(count, workers)])
            first = [s for part in parts for s in part]
    else:
        first = [_draw_schema(config, i, 0) for i in range(count)]
    seen: set[str] = set()
    out = []
    for i, schema in enumerate(first):
        attempt = 0
        digest = schema_hash(schema)
        while digest in seen:
            attempt += 1
            schema = _draw_schema(config, i, attempt)
            digest = schema_hash(schema)
        seen.add(digest)
        out.append(schema)
    return out


def build_corpus(
    schema_count: int, samples_per_schema: int, config: SchemaGenConfig | None = None, workers: int = 1
) -> list[TrainingSample]:
    config = config or SchemaGenConfig()
    if samples_per_schema < 1:
        raise ValueError("samples per schema must be positive")
    schemas = generate_schemas(schema_count, config, workers)
    if workers > 1:
        jobs = [(config, lo, schemas[lo:hi], samples_per_schema) for lo, hi in _chunks(len(schemas), workers)]
        with ProcessPoolExecutor(workers) as pool:
            return [s for part in pool.map(_samples_chunk, jobs) for s in part]
    return _samples_chunk((config, 0, schemas, samples_per_schema))


# ---------------------------------------------------------------------------
# task data and mixing


def task_sample(instance: TaskInstance, input_text: str, gold: JsonValue) -> TrainingSample:
    return TrainingSample(
        prompt=package(instance, input_text).text,
        response=serialize_canonical(gold),
        kind="task",
        schema_hash=schema_hash(instance.output_format),
    )


@dataclass(frozen=True)
class MixConfig:
    task_count: int
    schema_following_count: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.task_count < 0 or self.schema_following_count < 0:
            raise ValueError("counts must be non-negative")

    @property
    def ratio(self) -> str:
        a, b = self.task_count, self.schema_following_count
        g = math.gcd(a, b) or 1
        return f"{a // g}:{b // g}"


@dataclass
class MixResult:
    samples: list[TrainingSample]
    manifest: dict = field(default_factory=dict)


def mix(
    task_samples: Sequence[TrainingSample], sf_samples: Sequence[TrainingSample], config: MixConfig
) -> MixResult:
    if len(task_samples) < config.task_count:
        raise PoolTooSmall(f"task pool has {len(task_samples)} samples, {config.task_count} requested")
    if len(sf_samples) < config.schema_following_count:
        raise PoolTooSmall(
            f"schema-following pool has {len(sf_samples)} samples, {config.schema_following_count} requested"
        )
    rng = random.Random(derive_seed(config.seed, "mix"))
    chosen = rng.sample(list(task_samples), config.task_count) + rng.sample(
        list(sf_samples), config.schema_following_count
    )
    rng.shuffle(chosen)
    manifest = {
        "taskCount": config.task_count,
        "schemaFollowingCount": config.schema_following_count,
        "total": len(chosen),
        "ratio": config.ratio,
        "seed": config.seed,
    }
    return MixResult(chosen, manifest)


# ---------------------------------------------------------------------------
# files


def write_jsonl(samples: Iterable[TrainingSample], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            fh.write(serialize_canonical(sample.to_json()))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[TrainingSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(TrainingSample.from_json(parse_json(line)))
    return out


def manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def write_manifest(manifest: dict, path: str | Path) -> Path:
    target = manifest_path(path)
    target.write_text(serialize_pretty(manifest) + "\n", encoding="utf-8")
    return target


# ---------------------------------------------------------------------------
# synthetic task data from the bundled demo instances

_PEOPLE = ("Ada Lovelace", "Alan Turing", "Grace Hopper", "Marie Curie", "Nelson Mandela", "Frida Kahlo")
_PLACES = ("Paris", "Nairobi", "Lima", "Osaka", "Toronto", "Cairo")
_ORGS = ("Acme Corp", "the United Nations", "Globex", "the Red Cross", "Initech", "Umbrella Labs")
_TOPIC_TEMPLATES = {
    "World": ("Leaders met in {place} to discuss the border crisis.", "Elections in {place} drew record turnout."),
    "Sports": ("The {place} team won the final in extra time.", "{person} broke the marathon record in {place}."),
    "Business": ("Shares of {org} rose after strong earnings.", "{org} agreed to buy a rival for $2 billion."),
    "Sci/Tech": ("{org} unveiled a faster quantum chip.", "Researchers in {place} mapped a new exoplanet."),
}


def demo_instance(name: str) -> TaskInstance:
    text = resources.files(__package__).joinpath("instances", f"{name}.json").read_text(encoding="utf-8")
    return instance_from_document(parse_json(text))


def _ner_example(rng: random.Random) -> tuple[str, list]:
    person, place, org = rng.choice(_PEOPLE), rng.choice(_PLACES), rng.choice(_ORGS)
    pattern = rng.randrange(3)
    if pattern == 0:
        return f"{person} visited {place} on Monday.", [
            {"name": person, "entity_type": "person"},
            {"name": place, "entity_type": "location"},
        ]
    if pattern == 1:
        return f"{org} hired {person} as an adviser.", [
            {"name": org, "entity_type": "organization"},
            {"name": person, "entity_type": "person"},
        ]
    return "Nothing notable happened today.", []


def _topic_example(rng: random.Random) -> tuple[str, dict]:
    tag = rng.choice(sorted(_TOPIC_TEMPLATES))
    text = rng.choice(_TOPIC_TEMPLATES[tag]).format(
        person=rng.choice(_PEOPLE), place=rng.choice(_PLACES), org=rng.choice(_ORGS)
    )
    return text, {"tag": tag}


def synthetic_task_samples(count: int, seed: int = 0) -> list[TrainingSample]:
    """Task samples from templated inputs over the bundled NER and topic instances."""
    ner, topic = demo_instance("named_entity_recognition"), demo_instance("topic_classification")
    out = []
    for i in range(count):
        rng = random.Random(derive_seed(seed, "task", i))
        if rng.random() < 0.5:
            text, gold = _ner_example(rng)
            out.append(task_sample(ner, text, gold))
        else:
            text, gold = _topic_example(rng)
            out.append(task_sample(topic, text, gold))
    return out
