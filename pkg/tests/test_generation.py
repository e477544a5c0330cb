from __future__ import annotations

import json
import threading

import httpx
import numpy as np
import pytest

from llm_sketch.backends import FunctionBackend, HttpBackend, ScriptedBackend, UniformBackend
from llm_sketch.constraint import Vocabulary, index_vocabulary, mask_index_for
from llm_sketch.errors import BackendError, FormatFailure, LengthExceeded
from llm_sketch.generation import GenerationConfig, constrained_decode, generate, validate_outcome
from llm_sketch.json_schema import parse_json, parse_schema
from llm_sketch.seeds import derive_seed
from llm_sketch.tasks import instantiate
from conftest import HEADLINE_INPUT, HEADLINE_OUTPUT

BOOLEAN = parse_schema({"type": "boolean"})


def _strict(**kw):
    return GenerationConfig(mode="strict", **kw)


def _free(**kw):
    return GenerationConfig(mode="free", **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(mode="loose")
    with pytest.raises(ValueError):
        GenerationConfig(attempts=0)
    with pytest.raises(ValueError):
        GenerationConfig(temperature=-1)


def test_derive_seed_is_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(1, 0)
    assert 0 <= derive_seed("x") < 2**63


# ---------------------------------------------------------------------------
# free mode


def test_scripted_free_headline(headline_fields):
    backend = ScriptedBackend({HEADLINE_INPUT: HEADLINE_OUTPUT})
    outcome = generate(backend, instantiate("ner", headline_fields), HEADLINE_INPUT, _free())
    assert outcome.valid and outcome.parsed
    assert outcome.attempts_used == 1 and outcome.mode_used == "free"
    assert outcome.value == [{"name": "Kamala Harris", "entity_type": "person"}]


def test_chatty_prefix_needs_lenient_parse():
    schema = parse_schema({"type": "object", "properties": {"tag": {"type": "string"}}, "required": ["tag"]})
    text = 'Sure! Here is the answer: {"tag": "Sports"} Hope that helps.'
    strict_parse = validate_outcome(text, schema)
    assert not strict_parse.parsed and not strict_parse.valid
    lenient = validate_outcome(text, schema, lenient_parse=True)
    assert lenient.parsed and lenient.valid and lenient.value == {"tag": "Sports"}


def test_parsed_but_invalid(topic_fields):
    outcome = validate_outcome('{"tag":3}', instantiate("topic", topic_fields).output_format)
    assert outcome.parsed and not outcome.valid
    assert [(v.path, v.keyword) for v in outcome.report.violations] == [("$.tag", "type")]


def test_resampling_until_valid(topic_fields):
    backend = ScriptedBackend(["nope", '{"tag":"Golf"}', '{"tag":"Sports"}'])
    outcome = generate(backend, instantiate("topic", topic_fields), "match report", _free(attempts=3))
    assert outcome.valid and outcome.attempts_used == 3


def test_format_failure_carries_last_outcome(topic_fields):
    backend = ScriptedBackend(["nope"])
    with pytest.raises(FormatFailure) as info:
        generate(backend, instantiate("topic", topic_fields), "x", _free(attempts=2))
    assert info.value.outcome.raw_text == "nope"
    assert info.value.outcome.attempts_used == 2


def test_uniform_free_rarely_valid(ner_fields):
    instance = instantiate("ner", ner_fields)
    backend = UniformBackend()
    valid = 0
    for i in range(100):
        try:
            generate(backend, instance, "text", _free(attempts=1, seed=i))
            valid += 1
        except FormatFailure:
            pass
    assert valid <= 1


# ---------------------------------------------------------------------------
# strict mode


def _decode_text(backend, index, config, seed):
    tokens = constrained_decode(backend, index, [], config, seed)
    return index.vocab.decode(tokens).decode()


def test_uniform_strict_boolean_always_valid():
    backend = UniformBackend()
    index = mask_index_for(BOOLEAN, backend.vocab)
    counts = {"true": 0, "false": 0}
    for seed in range(1000):
        counts[_decode_text(backend, index, _strict(), seed)] += 1
    # the first byte is a fair coin between "t" and "f"
    assert 420 <= counts["true"] <= 580


def test_temperature_zero_picks_lowest_id():
    toy = Vocabulary((b"tr", b"ue", b"false", b""), 3)
    backend = UniformBackend(toy)
    index = index_vocabulary(mask_index_for(BOOLEAN, toy).dfa, toy)
    tokens = constrained_decode(backend, index, [], _strict(temperature=0))
    assert tokens == [0, 1, 3]


def test_scores_steer_the_choice():
    vocab = Vocabulary.byte_level()

    def prefer_f(prompt, generated):
        scores = np.zeros(vocab.size)
        scores[ord("f")] = 50.0
        return scores

    backend = FunctionBackend(prefer_f, vocab)
    index = mask_index_for(BOOLEAN, vocab)
    assert _decode_text(backend, index, _strict(), 0) == "false"


def test_strict_ner_too_short_budget(ner_fields):
    instance = instantiate("ner", ner_fields)
    backend = UniformBackend()
    index = mask_index_for(instance.output_format, backend.vocab)
    with pytest.raises(LengthExceeded):
        constrained_decode(backend, index, [], _strict(max_tokens=2))
    with pytest.raises(FormatFailure):
        generate(backend, instance, "x", _strict(max_tokens=2, attempts=2))


def test_length_guard_keeps_outputs_within_budget(ner_fields):
    instance = instantiate("ner", ner_fields)
    backend = UniformBackend()
    index = mask_index_for(instance.output_format, backend.vocab)
    for seed in range(30):
        tokens = constrained_decode(backend, index, [], _strict(max_tokens=40), seed)
        assert len(tokens) <= 40
        value = parse_json(backend.vocab.decode(tokens).decode())
        assert isinstance(value, list)


def test_without_length_guard_uniform_runs_out():
    backend = UniformBackend()
    index = mask_index_for(parse_schema({"type": "string"}), backend.vocab)
    config = _strict(max_tokens=8, length_guard=False)
    failures = 0
    for seed in range(50):
        try:
            constrained_decode(backend, index, [], config, seed)
        except LengthExceeded:
            failures += 1
    assert failures > 0


def test_strict_is_deterministic(ner_fields):
    instance = instantiate("ner", ner_fields)
    a = generate(UniformBackend(), instance, "text", _strict(seed=9))
    b = generate(UniformBackend(), instance, "text", _strict(seed=9))
    c = generate(UniformBackend(), instance, "text", _strict(seed=10))
    assert a.raw_text == b.raw_text
    assert a.valid and c.valid


def test_scripted_strict_replays_headline(headline_fields):
    backend = ScriptedBackend({HEADLINE_INPUT: HEADLINE_OUTPUT})
    outcome = generate(backend, instantiate("ner", headline_fields), HEADLINE_INPUT, _strict())
    assert outcome.raw_text == HEADLINE_OUTPUT
    assert outcome.mode_used == "strict"


def test_strict_needs_scored_backend(topic_fields):
    backend = HttpBackend("http://localhost", transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(ValueError):
        generate(backend, instantiate("topic", topic_fields), "x", _strict())


def test_bad_score_shape():
    backend = FunctionBackend(lambda p, g: np.zeros(3))
    index = mask_index_for(BOOLEAN, backend.vocab)
    with pytest.raises(BackendError):
        constrained_decode(backend, index, [], _strict())


def test_sequence_script_is_serialized():
    backend = ScriptedBackend(["a", "b"])
    assert not backend.concurrent_safe
    assert ScriptedBackend({"x": "y"}).concurrent_safe
    assert isinstance(backend.session(), type(threading.Lock()))


# ---------------------------------------------------------------------------
# http backend


def _chat(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_http_payload_and_auth(monkeypatch):
    monkeypatch.setenv("SKETCH_API_KEY", "k-123")
    seen = []

    def handler(request):
        seen.append(request)
        return _chat('{"tag":"World"}')

    backend = HttpBackend("http://model.test/v1/", model="m1", transport=httpx.MockTransport(handler))
    assert backend.complete("hello", seed=5, max_tokens=7) == '{"tag":"World"}'
    request = seen[0]
    assert str(request.url) == "http://model.test/v1/chat/completions"
    assert request.headers["Authorization"] == "Bearer k-123"
    assert json.loads(request.content) == {
        "model": "m1",
        "messages": [{"role": "user", "content": "hello"}],
        "max_tokens": 7,
        "seed": 5,
    }


def test_http_retries_server_errors():
    statuses = iter([503, 502, 200])

    def handler(request):
        code = next(statuses)
        return _chat("ok") if code == 200 else httpx.Response(code)

    backend = HttpBackend("http://m", transport=httpx.MockTransport(handler), backoff=0)
    assert backend.complete("p") == "ok"


def test_http_gives_up_after_retries():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500)

    backend = HttpBackend("http://m", transport=httpx.MockTransport(handler), backoff=0, max_retries=2)
    with pytest.raises(BackendError):
        backend.complete("p")
    assert len(calls) == 3


def test_http_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    backend = HttpBackend("http://m", transport=httpx.MockTransport(handler), backoff=0)
    with pytest.raises(BackendError, match="401"):
        backend.complete("p")
    assert len(calls) == 1


def test_http_malformed_body():
    backend = HttpBackend("http://m", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})), backoff=0)
    with pytest.raises(BackendError):
        backend.complete("p")


def test_http_free_generation(topic_fields):
    backend = HttpBackend("http://m", transport=httpx.MockTransport(lambda r: _chat('{"tag":"Sports"}')))
    outcome = generate(backend, instantiate("topic", topic_fields), "final score", _free())
    assert outcome.valid
