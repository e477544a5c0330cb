"""Strict (mask-constrained) and free generation with validation and resampling."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backends import ModelBackend
from .constraint import DEFAULT_STATE_CAP, TokenMaskIndex, mask_index_for
from .errors import BackendError, FormatFailure, LengthExceeded, ParseError
from .json_schema import JsonValue, SchemaDoc, ValidationReport, Violation, parse_json, raw_decode, validate
from .prompt import package
from .seeds import derive_seed
from .tasks import TaskInstance

MODES = ("strict", "free")


@dataclass(frozen=True)
class GenerationConfig:
    mode: str = "strict"
    max_tokens: int = 4096
    attempts: int = 3
    temperature: float = 1.0
    seed: int = 0
    lenient_parse: bool = False
    pretty_prompt: bool = False
    template: str | None = None
    state_cap: int = DEFAULT_STATE_CAP
    # strict mode: mask tokens after which the shortest completion no longer fits in max_tokens
    length_guard: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.max_tokens < 1 or self.attempts < 1:
            raise ValueError("max_tokens and attempts must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class GenerationOutcome:
    raw_text: str
    value: JsonValue
    parsed: bool
    report: ValidationReport
    attempts_used: int = 1
    mode_used: str = "free"

    @property
    def valid(self) -> bool:
        return self.report.valid


def _extract_embedded(text: str) -> JsonValue:
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = raw_decode(text, i)
            except ParseError:
                continue
            return value
    raise ParseError("no embedded JSON value found")


def _parse(raw_text: str, lenient_parse: bool) -> tuple[bool, JsonValue, ParseError | None]:
    try:
        return True, parse_json(raw_text), None
    except ParseError as exc:
        if lenient_parse:
            try:
                return True, _extract_embedded(raw_text), None
            except ParseError:
                pass
        return False, None, exc


def validate_outcome(raw_text: str, output_format: SchemaDoc, lenient_parse: bool = False) -> GenerationOutcome:
    """Two-step legality check: parse as JSON, then validate against the output format."""
    parsed, value, error = _parse(raw_text, lenient_parse)
    if not parsed:
        report = ValidationReport((Violation("$", "parse", str(error)),))
        return GenerationOutcome(raw_text, None, False, report)
    # unmodeled keywords cannot be enforced here; they are ignored rather than fatal
    return GenerationOutcome(raw_text, value, True, validate(value, output_format, lenient=True))


def _sample(scores: np.ndarray, allowed: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    s = scores[allowed]
    if temperature == 0:
        # allowed is sorted, and argmax returns the first maximum: ties -> lowest id
        return int(allowed[int(np.argmax(s))])
    top = np.max(s)
    if not np.isfinite(top):
        return int(allowed[int(rng.integers(len(allowed)))])
    weights = np.exp((s - top) / temperature)
    cumulative = np.cumsum(weights)
    pick = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return int(allowed[min(pick, len(allowed) - 1)])


def constrained_decode(
    backend: ModelBackend,
    index: TokenMaskIndex,
    prompt_tokens: Sequence[int],
    config: GenerationConfig,
    seed: int | None = None,
) -> list[int]:
    """Masked sampling; returns the emitted tokens ending with EOS."""
    if not backend.supports_scored:
        raise ValueError(f"strict mode needs a scored backend; {backend.name} cannot score")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    vocab = index.vocab
    prompt_tokens = tuple(prompt_tokens)
    generated: list[int] = []
    state = index.start
    if config.length_guard and index.tokens_to_finish[state] > config.max_tokens:
        raise LengthExceeded(generated)
    for step in range(config.max_tokens):
        scores = np.asarray(backend.scored(prompt_tokens, generated), dtype=float)
        if scores.shape != (vocab.size,):
            raise BackendError(f"backend returned {scores.shape} scores for a vocabulary of {vocab.size}")
        if config.length_guard:
            allowed = index.allowed_within(state, config.max_tokens - step)
        else:
            allowed = index.allowed_tokens(state)
        token = _sample(scores, allowed, config.temperature, rng)
        generated.append(token)
        if token == vocab.eos_id:
            return generated
        state = index.destination(state, token)
    raise LengthExceeded(generated)


def generate(
    backend: ModelBackend,
    instance: TaskInstance,
    input_text: str,
    config: GenerationConfig | None = None,
) -> GenerationOutcome:
    config = config or GenerationConfig()
    prompt = package(instance, input_text, pretty=config.pretty_prompt, template=config.template)
    output_format = instance.output_format

    index = None
    prompt_tokens: list[int] = []
    if config.mode == "strict":
        if not backend.supports_scored:
            raise ValueError(f"strict mode needs a scored backend; {backend.name} cannot score")
        index = mask_index_for(output_format, backend.vocab, config.state_cap)
        prompt_tokens = backend.tokenize(prompt.text)

    outcome = None
    with backend.session():
        for attempt in range(1, config.attempts + 1):
            seed = derive_seed(config.seed, attempt)
            if index is not None:
                try:
                    tokens = constrained_decode(backend, index, prompt_tokens, config, seed)
                except LengthExceeded as exc:
                    tokens = exc.tokens
                raw = index.vocab.decode(tokens).decode("utf-8", errors="replace")
            else:
                raw = backend.complete(prompt.text, seed=seed, max_tokens=config.max_tokens)
            outcome = validate_outcome(raw, output_format, config.lenient_parse)
            outcome = dataclasses.replace(outcome, attempts_used=attempt, mode_used=config.mode)
            if outcome.valid:
                return outcome
    raise FormatFailure(outcome)
