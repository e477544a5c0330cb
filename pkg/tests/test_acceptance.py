"""End-to-end acceptance checks, one test per criterion.

Each test carries an ``acceptance`` marker; conftest prints a PASS/FAIL
line per criterion at the end of the run.
"""

from __future__ import annotations

import json
import random
import time

import pytest

from llm_sketch.backends import ScriptedBackend, UniformBackend
from llm_sketch.cli import main
from llm_sketch.constraint import compile_schema, sample_accepted
from llm_sketch.dataset import (
    SchemaGenConfig,
    conforming_instance,
    demo_instance,
    embedded_schema,
    generate_schemas,
    read_jsonl,
    schema_depth,
    schema_width,
)
from llm_sketch.evaluation import EvalDataset, fmt_metric, legal_output_ratio, run_eval, score_accuracy, score_micro_f1
from llm_sketch.generation import GenerationConfig, generate, validate_outcome
from llm_sketch.json_schema import parse_json, parse_schema, schema_hash, serialize_canonical, validate
from llm_sketch.tasks import instantiate
from conftest import HEADLINE_FIELDS, HEADLINE_INPUT, HEADLINE_OUTPUT
from oracles import oracle_valid, pool_schemas, pool_values


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


@pytest.mark.acceptance(1, "strict mode: 200 random schemas, uniform backend, L.O.R. exactly 1.000")
def test_strict_mode_guarantee():
    with Budget(120):
        config = SchemaGenConfig(seed=11)
        schemas = generate_schemas(200, config)
        assert all(schema_depth(s) <= 5 and schema_width(s) <= 5 for s in schemas)
        backend = UniformBackend()
        gen = GenerationConfig(mode="strict", attempts=1, max_tokens=4096)
        outcomes = []
        for i, schema in enumerate(schemas):
            instance = instantiate("keyword_extraction", {"taskDesc": "Fill the fields.", "outputFormat": schema.to_json()})
            outcome = generate(backend, instance, f"document {i}", GenerationConfig(**{**gen.__dict__, "seed": i}))
            assert oracle_valid(outcome.value, schema.to_json())
            outcomes.append(outcome)
        stats = legal_output_ratio(outcomes)
    assert fmt_metric(stats.ratio) == "1.0"
    assert stats.valid == stats.total == 200


@pytest.mark.acceptance(2, "free mode on the NER format: L.O.R. <= 0.01 over 200 samples")
def test_free_mode_gap():
    with Budget(60):
        ner = demo_instance("named_entity_recognition")
        samples = tuple((f"Sample sentence number {i} about Paris.", []) for i in range(200))
        dataset = EvalDataset("ner", ner, samples, "micro_f1_entities")
        free = run_eval(UniformBackend(), dataset, GenerationConfig(mode="free", attempts=1, seed=0))
    assert free.stats.total == 200
    assert free.legal_output_ratio <= 0.01


@pytest.mark.acceptance(3, "compiler/validator agreement: 50 schemas x 1000 accepted strings, instances accepted")
def test_compiler_validator_agreement():
    with Budget(300):
        rng = random.Random(33)
        accepted_checked = instances_checked = 0
        for schema in generate_schemas(50, SchemaGenConfig(seed=33)):
            dfa = compile_schema(schema)
            for _ in range(1000):
                text = sample_accepted(dfa, rng)
                value = parse_json(text.decode("utf-8"))
                assert validate(value, schema).valid, (text, schema.to_json())
                accepted_checked += 1
            for _ in range(100):
                value = conforming_instance(schema, rng)
                assert dfa.accepts(serialize_canonical(value).encode("utf-8")), value
                instances_checked += 1
    assert accepted_checked == 50_000 and instances_checked == 5_000


@pytest.mark.acceptance(4, "validator matches a brute-force checker on every pool value")
def test_validator_oracle_equivalence():
    values, docs = pool_values(), pool_schemas()
    verdicts = 0
    for doc in docs:
        schema = parse_schema(doc)
        for value in values:
            assert validate(value, schema).valid == oracle_valid(value, doc), (value, doc)
            verdicts += 1
    assert verdicts == len(values) * len(docs) > 2500


@pytest.mark.acceptance(5, "dataset pipeline: 10000 schemas x 2 = 20000 valid samples; mix 17500/2500 is 7:1")
def test_dataset_pipeline(workdir, capsys):
    with Budget(600):
        argv = ["dataset", "samples", "--schemas", "10000", "--per-schema", "2", "--seed", "0", "--out", "sf.jsonl"]
        assert main(argv) == 0
        samples = read_jsonl(workdir / "sf.jsonl")
        assert len(samples) == 20_000
        assert len({s.schema_hash for s in samples}) == 10_000
        schemas: dict[str, object] = {}
        for sample in samples:
            schema = schemas.get(sample.schema_hash)
            if schema is None:
                schema = schemas[sample.schema_hash] = embedded_schema(sample.prompt)
                assert schema_hash(schema) == sample.schema_hash
            assert validate(parse_json(sample.response), schema).valid
        capsys.readouterr()
        assert main(["dataset", "mix", "--task", "17500", "--sf", "2500", "--seed", "0", "--out", "mix.jsonl"]) == 0
        manifest = parse_json(capsys.readouterr().out)
    assert manifest["ratio"] == "7:1"
    assert manifest["total"] == 20_000
    kinds = [s.kind for s in read_jsonl(workdir / "mix.jsonl")]
    assert kinds.count("task") == 17_500 and kinds.count("schema_following") == 2_500


@pytest.mark.acceptance(6, "metric fixtures: L.O.R. 0.833, micro-F1 0.500, accuracy 0.900")
def test_metric_fixtures():
    tag = parse_schema({"type": "object", "properties": {"tag": {"type": "string"}}, "required": ["tag"]})
    lor = legal_output_ratio([validate_outcome(t, tag) for t in ['{"tag":"x"}'] * 5 + ["{"]]).ratio

    pred = [[{"name": "Kamala Harris", "entity_type": "person"}, {"name": "Harris", "entity_type": "person"}]]
    gold = [[{"name": "Kamala Harris", "entity_type": "person"}, {"name": "Chicago", "entity_type": "location"}]]
    f1 = score_micro_f1(pred, gold)

    golds = [{"tag": t} for t in ["World", "Sports", "Business", "Sci/Tech", "World"] * 2]
    preds = golds[:9] + [{"tag": "Sports"}]
    acc = score_accuracy(preds, golds)

    assert (fmt_metric(lor), fmt_metric(f1), fmt_metric(acc)) == ("0.833", "0.500", "0.900")


@pytest.mark.acceptance(7, "headline replay prints the exact canonical output")
def test_headline_replay(workdir, capsys):
    instance = instantiate("named_entity_recognition", HEADLINE_FIELDS)
    backend = ScriptedBackend({HEADLINE_INPUT: '[{"name": "Kamala Harris", "entity_type": "person"}]'})
    for mode in ("strict", "free"):
        outcome = generate(backend, instance, HEADLINE_INPUT, GenerationConfig(mode=mode))
        assert outcome.valid
        assert serialize_canonical(outcome.value) == HEADLINE_OUTPUT

    (workdir / "task.json").write_text(json.dumps({"schemaName": "ner", "fields": HEADLINE_FIELDS}))
    (workdir / "script.json").write_text(json.dumps({HEADLINE_INPUT: HEADLINE_OUTPUT}))
    argv = ["generate", "--task", "task.json", "--input", HEADLINE_INPUT, "--backend", "scripted", "--script", "script.json"]
    assert main(argv) == 0
    assert capsys.readouterr().out == '[{"name":"Kamala Harris","entity_type":"person"}]\n'


@pytest.mark.acceptance(8, "determinism: reruns and worker counts 1 vs 8 give byte-identical files")
def test_determinism(workdir, capsys):
    (workdir / "task.json").write_text(json.dumps({"schemaName": "ner", "fields": HEADLINE_FIELDS}))
    dataset = {
        "name": "ner",
        "taskInstance": "task.json",
        "metric": "micro_f1_entities",
        "samples": [{"input": f"Sentence {i} about Ada Lovelace.", "gold": []} for i in range(12)],
    }
    (workdir / "ds.json").write_text(json.dumps(dataset))

    def run(tag: str, workers: str) -> list[bytes]:
        commands = [
            ["dataset", "schemas", "--count", "300", "--seed", "8", "--workers", workers, "--out", f"s{tag}.jsonl"],
            ["dataset", "samples", "--schemas", "300", "--seed", "8", "--workers", workers, "--out", f"f{tag}.jsonl"],
            ["dataset", "tasks", "--count", "200", "--seed", "8", "--out", f"t{tag}.jsonl"],
            ["dataset", "mix", "--task", "70", "--sf", "10", "--seed", "8", "--workers", workers, "--out", f"m{tag}.jsonl"],
            ["eval", "--dataset", "ds.json", "--mode", "both", "--seed", "8", "--workers", workers, "--out", f"r{tag}.json"],
        ]
        for argv in commands:
            assert main(argv) == 0, argv
        assert main(["generate", "--task", "task.json", "--input", "a", "--input", "b", "--seed", "8"]) == 0
        out = capsys.readouterr().out.encode()
        names = [f"s{tag}.jsonl", f"f{tag}.jsonl", f"t{tag}.jsonl", f"m{tag}.jsonl", f"r{tag}.json",
                 f"s{tag}.manifest.json", f"f{tag}.manifest.json", f"m{tag}.manifest.json"]
        return [(workdir / n).read_bytes() for n in names] + [out]

    first = run("a", "1")
    assert run("b", "1") == first
    assert run("c", "8") == first
