"""Command line entry point: ``sketch schemas|task|generate|dataset|eval``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from . import dataset as ds
from .backends import HttpBackend, ModelBackend, ScriptedBackend, UniformBackend
from .constraint import Vocabulary
from .errors import (
    BackendError,
    BadOutputFormat,
    EmptyInput,
    FormatFailure,
    InstanceInvalid,
    ParseError,
    PoolTooSmall,
    SchemaError,
    StateBlowup,
    UnknownSchema,
    UnsupportedSchema,
)
from .evaluation import EvalReport, load_dataset, run_eval
from .generation import GenerationConfig, generate
from .json_schema import SchemaDoc, parse_json, serialize_canonical, serialize_pretty, validate
from .prompt import load_template
from .tasks import Catalog, TaskInstance, instance_from_document, instantiate, load_instance, save_instance

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_FORMAT, EXIT_UNSUPPORTED = 0, 2, 3, 4, 5
BACKENDS = ("mock_uniform", "scripted", "http")
CONFIG_FILE = "sketch.toml"
CONFIG_KEYS = {
    "schema_dir": str,
    "backend": str,
    "base_url": str,
    "model": str,
    "template": str,
    "vocab": str,
    "seed": int,
    "mode": str,
    "max_tokens": int,
    "attempts": int,
    "temperature": float,
    "workers": int,
}
DEFAULTS = {"backend": "mock_uniform", "model": "default", "seed": 0, "mode": "strict", "max_tokens": 4096,
            "attempts": 3, "temperature": 1.0, "workers": 1}


class UsageError(Exception):
    pass


def load_config(path: str | None) -> dict:
    """Flat key/value TOML; ``path`` None means ./sketch.toml when present."""
    if path is None:
        if not Path(CONFIG_FILE).is_file():
            return {}
        path = CONFIG_FILE
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    out = {}
    for key, value in doc.items():
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except (TypeError, ValueError):
            raise UsageError(f"{path}: bad value for {key!r}") from None
    return out


def setting(args: argparse.Namespace, key: str) -> Any:
    value = getattr(args, key, None)
    if value is not None:
        return value
    return args.config_values.get(key, DEFAULTS.get(key))


def require_seed(args: argparse.Namespace) -> int:
    seed = setting(args, "seed")
    if os.environ.get("SKETCH_CI") == "1" and getattr(args, "seed", None) is None:
        raise UsageError("SKETCH_CI=1: randomized commands need an explicit --seed")
    return seed


def catalog_for(args: argparse.Namespace) -> Catalog:
    schema_dir = setting(args, "schema_dir")
    if schema_dir and not Path(schema_dir).is_dir():
        raise UsageError(f"schema directory not found: {schema_dir}")
    return Catalog.load(schema_dir)


def read_json_file(path: str) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    return parse_json(text)


def print_report(report, out: TextIO) -> None:
    for v in report.violations:
        print(f"  {v.path}: [{v.keyword}] {v.message}", file=out)


# ---------------------------------------------------------------------------
# schemas


def cmd_schemas(args: argparse.Namespace) -> int:
    catalog = catalog_for(args)
    if args.action == "list":
        width = max(len(s.name) for s in catalog)
        for schema in catalog:
            required = ", ".join(schema.document.get("required", []))
            print(f"{schema.name.ljust(width)}  {schema.category:<24} {schema.title}  [required: {required}]")
        return EXIT_OK
    if not args.name:
        raise UsageError("schemas show needs a schema name")
    schema = catalog.get(args.name)
    print(f"# {schema.title} ({schema.name}, {schema.category})")
    print(serialize_pretty(schema.document))
    return EXIT_OK


# ---------------------------------------------------------------------------
# task new


def _split_labels(text: str, item: SchemaDoc) -> list | None:
    """``a, b, c`` for an array whose items need exactly one string member."""
    if item.kind != "object" or len(item.required) != 1:
        return None
    (key,) = item.required
    if item.property_map.get(key, SchemaDoc("any")).kind != "string":
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return [{key: p} for p in parts]


def _read_field(name: str, sub: SchemaDoc, required: bool, ask, out: TextIO) -> tuple[bool, Any]:
    hint = sub.description or ""
    if sub.enum is not None:
        hint = f"{hint} one of: {', '.join(map(str, sub.enum))}".strip()
    elif sub.kind in ("object", "array"):
        hint = f"{hint} (JSON {sub.kind})".strip()
    while True:
        text = ask(f"{name}{'' if required else ' (optional, blank to skip)'}{': ' + hint if hint else ''}\n> ")
        if not text.strip():
            if not required:
                return False, None
            print("  a value is required", file=out)
            continue
        if sub.kind == "string" and sub.enum is None:
            value: Any = text
        else:
            try:
                value = parse_json(text)
            except ParseError as exc:
                if sub.enum is not None:
                    # bare words stand for strings; the enum check below reports misses
                    value = text.strip()
                else:
                    value = _split_labels(text, sub.items) if sub.kind == "array" and sub.items else None
                    if value is None:
                        print(f"  not valid JSON: {exc}", file=out)
                        continue
        report = validate(value, sub, lenient=True)
        if report.valid:
            return True, value
        print("  invalid entry:", file=out)
        print_report(report, out)


def run_wizard(schema_name: str, catalog: Catalog, ask=None, out: TextIO | None = None) -> TaskInstance:
    """Prompt for each field (required first), validating entries as they are typed."""
    ask = ask or input
    out = out or sys.stderr
    schema = catalog.get(schema_name)
    print(f"New {schema.title} task", file=out)
    props = schema.meta_schema.properties
    required = schema.meta_schema.required
    ordered = [p for p in props if p[0] in required] + [p for p in props if p[0] not in required]
    fields: dict = {}
    for name, sub in ordered:
        given, value = _read_field(name, sub, name in required, ask, out)
        if given:
            fields[name] = value
    return instantiate(schema.name, {n: fields[n] for n, _ in props if n in fields}, catalog)


def cmd_task_new(args: argparse.Namespace) -> int:
    catalog = catalog_for(args)
    if args.interactive:
        if not args.schema:
            raise UsageError("--interactive needs --schema")
        try:
            instance = run_wizard(args.schema, catalog)
        except EOFError:
            raise UsageError("input ended before the task was complete") from None
    else:
        doc = read_json_file(args.from_file)
        if isinstance(doc, dict) and "schemaName" in doc and "fields" in doc:
            if args.schema and catalog.resolve(args.schema) != catalog.resolve(doc["schemaName"]):
                raise UsageError(f"--schema {args.schema} disagrees with the file's schemaName")
            instance = instance_from_document(doc, catalog)
        else:
            if not args.schema:
                raise UsageError("a bare field document needs --schema")
            if not isinstance(doc, dict):
                raise UsageError("task document must be a JSON object")
            instance = instantiate(args.schema, doc, catalog)
    if args.out:
        save_instance(instance, args.out)
        print(f"wrote {args.out} ({instance.schema_name})", file=sys.stderr)
    else:
        print(serialize_pretty(instance.to_json()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# backends and generate


def _script_responses(path: str) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = parse_json(text)
    except ParseError:
        return text.rstrip("\n")
    if isinstance(doc, dict):
        return {k: v if isinstance(v, str) else serialize_canonical(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [v if isinstance(v, str) else serialize_canonical(v) for v in doc]
    return text


def make_backend(args: argparse.Namespace, gold_script: dict | None = None) -> ModelBackend:
    name = setting(args, "backend")
    vocab_path = setting(args, "vocab")
    vocab = Vocabulary.load(vocab_path) if vocab_path else None
    if name == "mock_uniform":
        return UniformBackend(vocab)
    if name == "scripted":
        if args.script:
            if not Path(args.script).is_file():
                raise UsageError(f"script file not found: {args.script}")
            return ScriptedBackend(_script_responses(args.script), vocab)
        if gold_script:
            return ScriptedBackend(gold_script, vocab)
        raise UsageError("the scripted backend needs --script")
    if name == "http":
        base_url = setting(args, "base_url")
        if not base_url:
            raise UsageError("the http backend needs --base-url")
        return HttpBackend(base_url, setting(args, "model"))
    raise UsageError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def generation_config(args: argparse.Namespace, backend: ModelBackend, mode: str | None = None,
                      attempts: int | None = None) -> GenerationConfig:
    mode = mode or setting(args, "mode")
    if isinstance(backend, HttpBackend) and mode == "strict":
        print("note: the http backend cannot score tokens; using free mode", file=sys.stderr)
        mode = "free"
    template = setting(args, "template")
    return GenerationConfig(
        mode=mode,
        max_tokens=setting(args, "max_tokens"),
        attempts=attempts or setting(args, "attempts"),
        temperature=setting(args, "temperature"),
        seed=require_seed(args),
        lenient_parse=getattr(args, "lenient", False),
        template=load_template(template) if template else None,
    )


def _task_from(args: argparse.Namespace) -> TaskInstance:
    if not Path(args.task).is_file():
        raise UsageError(f"task file not found: {args.task}")
    return load_instance(args.task, catalog_for(args))


def cmd_generate(args: argparse.Namespace) -> int:
    instance = _task_from(args)
    if args.input_file:
        try:
            inputs = [line for line in Path(args.input_file).read_text(encoding="utf-8").splitlines() if line.strip()]
        except FileNotFoundError:
            raise UsageError(f"input file not found: {args.input_file}") from None
        if not inputs:
            raise EmptyInput("input file has no non-empty lines")
    else:
        inputs = args.input
    backend = make_backend(args)
    config = generation_config(args, backend)
    for text in inputs:
        outcome = generate(backend, instance, text, config)
        print(serialize_canonical(outcome.value))
    return EXIT_OK


# ---------------------------------------------------------------------------
# dataset


def _schema_config(args: argparse.Namespace) -> ds.SchemaGenConfig:
    return ds.SchemaGenConfig(max_depth=args.max_depth, max_width=args.max_width, seed=require_seed(args))


def _finish_dataset(manifest: dict, out: str) -> int:
    path = ds.write_manifest(manifest, out)
    print(serialize_canonical(manifest))
    print(f"wrote {out} and {path}", file=sys.stderr)
    return EXIT_OK


def cmd_dataset(args: argparse.Namespace) -> int:
    workers = setting(args, "workers")
    if args.action == "schemas":
        config = _schema_config(args)
        schemas = ds.generate_schemas(args.count, config, workers)
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            for schema in schemas:
                fh.write(serialize_canonical(schema.to_json()) + "\n")
        return _finish_dataset({"kind": "schemas", "count": len(schemas), "config": config.to_json()}, args.out)

    if args.action == "samples":
        config = _schema_config(args)
        samples = ds.build_corpus(args.schemas, args.per_schema, config, workers)
        n = ds.write_jsonl(samples, args.out)
        manifest = {"kind": "schema_following", "schemas": args.schemas, "perSchema": args.per_schema,
                    "samples": n, "config": config.to_json()}
        return _finish_dataset(manifest, args.out)

    if args.action == "tasks":
        seed = require_seed(args)
        n = ds.write_jsonl(ds.synthetic_task_samples(args.count, seed), args.out)
        return _finish_dataset({"kind": "task", "samples": n, "seed": seed}, args.out)

    seed = require_seed(args)
    task_pool = ds.read_jsonl(args.task_pool) if args.task_pool else ds.synthetic_task_samples(args.task, seed)
    if args.sf_pool:
        sf_pool = ds.read_jsonl(args.sf_pool)
    else:
        config = ds.SchemaGenConfig(max_depth=args.max_depth, max_width=args.max_width, seed=seed)
        sf_pool = ds.build_corpus(max(1, math.ceil(args.sf / 2)), 2, config, workers) if args.sf else []
    result = ds.mix(task_pool, sf_pool, ds.MixConfig(args.task, args.sf, seed))
    ds.write_jsonl(result.samples, args.out)
    return _finish_dataset(result.manifest, args.out)


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    catalog = catalog_for(args)
    datasets = []
    for path in args.dataset:
        if not Path(path).is_file():
            raise UsageError(f"dataset file not found: {path}")
        datasets.append(load_dataset(path, catalog))
    modes = ["strict", "free"] if args.mode == "both" else [args.mode or setting(args, "mode")]
    workers = setting(args, "workers")
    results = []
    for data in datasets:
        gold_script = {text: serialize_canonical(gold) for text, gold in data.samples}
        backend = make_backend(args, gold_script)
        for mode in modes:
            config = generation_config(args, backend, mode, attempts=args.attempts or 1)
            try:
                results.append(run_eval(backend, data, config, workers))
            except UnsupportedSchema as exc:
                print(f"{data.name}: strict mode unavailable ({exc}); skipped", file=sys.stderr)
    if not results:
        raise UsageError("nothing was evaluated")
    report = EvalReport(results)
    Path(args.out).write_text(serialize_pretty(report.to_json()) + "\n", encoding="utf-8")
    print(report.render_table())
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--script", help="scripted backend responses (JSON object input->response, JSON list, or text)")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--vocab", help="vocabulary file (JSON or TSV); default is byte-level")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--template", help="prompt template file with {taskDesc} {labelArchitecture} {outputFormat} {input}")
    p.add_argument("--lenient", action="store_true", help="extract a JSON value embedded in surrounding text")


def _gen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-depth", dest="max_depth", type=int, default=5)
    p.add_argument("--max-width", dest="max_width", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketch", description="Schema-guided task prompting and structured generation")
    parser.add_argument("--config", help=f"settings file (default ./{CONFIG_FILE} if present)")
    parser.add_argument("--schema-dir", dest="schema_dir", help="extra task schemas (override built-ins by name)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schemas", help="list or show task schemas")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_schemas)

    p = sub.add_parser("task", help="create a task instance")
    tsub = p.add_subparsers(dest="action", required=True)
    p = tsub.add_parser("new")
    p.add_argument("--schema")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--interactive", action="store_true")
    src.add_argument("--from", dest="from_file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_task_new)

    p = sub.add_parser("generate", help="run a task on input text")
    p.add_argument("--task", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", action="append")
    src.add_argument("--input-file", dest="input_file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="mode", action="store_const", const="strict")
    mode.add_argument("--free", dest="mode", action="store_const", const="free")
    p.add_argument("--attempts", type=int)
    _backend_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("dataset", help="build training data")
    dsub = p.add_subparsers(dest="action", required=True)
    q = dsub.add_parser("schemas")
    q.add_argument("--count", type=int, required=True)
    q.add_argument("--out", required=True)
    _gen_flags(q)
    q = dsub.add_parser("samples")
    q.add_argument("--schemas", type=int, required=True)
    q.add_argument("--per-schema", dest="per_schema", type=int, default=2)
    q.add_argument("--out", required=True)
    _gen_flags(q)
    q = dsub.add_parser("tasks")
    q.add_argument("--count", type=int, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--seed", type=int)
    q = dsub.add_parser("mix")
    q.add_argument("--task", type=int, required=True)
    q.add_argument("--sf", type=int, required=True)
    q.add_argument("--task-pool", dest="task_pool")
    q.add_argument("--sf-pool", dest="sf_pool")
    q.add_argument("--out", required=True)
    _gen_flags(q)
    for q in dsub.choices.values():
        q.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="score a backend on eval datasets")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--mode", choices=["strict", "free", "both"])
    p.add_argument("--attempts", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="report.json")
    _backend_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        args.config_values = load_config(args.config)
        if getattr(args, "input", None) is not None and not all(t.strip() for t in args.input):
            raise EmptyInput("--input is empty")
        return args.func(args)
    except FormatFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.outcome is not None:
            print_report(exc.outcome.report, sys.stderr)
            print(exc.outcome.raw_text, file=sys.stderr)
        return EXIT_FORMAT
    except (UnsupportedSchema, StateBlowup) as exc:
        print(f"error: unsupported schema: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except InstanceInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        print_report(exc.report, sys.stderr)
        return EXIT_INVALID
    except (BadOutputFormat, PoolTooSmall) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UnknownSchema as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, EmptyInput, ParseError, SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"error: backend: {exc}", file=sys.stderr)
        return 1


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
