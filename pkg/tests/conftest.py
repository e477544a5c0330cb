from __future__ import annotations

import copy

import pytest

from llm_sketch.constraint import INDEX_CACHE

HEADLINE_INPUT = "Kamala Harris pledges 'new way forward' in historic convention speech"
HEADLINE_OUTPUT = '[{"name":"Kamala Harris","entity_type":"person"}]'

NER_FIELDS = {
    "taskDesc": "Extract named entities from the text provided.",
    "entityTypes": [{"name": "person"}, {"name": "location"}, {"name": "organization"}, {"name": "others"}],
    "outputFormat": {
        "type": "array",
        "items": {
            "type": "object",
            "properties": {
                "name": {"type": "string", "description": "the entity name"},
                "entity_type": {
                    "type": "string",
                    "description": "entity type",
                    "enum": ["person", "organization", "location", "others"],
                },
            },
            "required": ["name", "entity_type"],
        },
    },
}

HEADLINE_FIELDS = {
    "taskDesc": "Extract the named entities from the given text.",
    "entityTypes": [{"name": "person"}, {"name": "organization"}, {"name": "location"}],
    "outputFormat": {
        "type": "array",
        "items": {
            "type": "object",
            "properties": {
                "name": {"type": "string", "description": "the entity name"},
                "entity_type": {
                    "type": "string",
                    "description": "entity type",
                    "enum": ["person", "organization", "location"],
                },
            },
            "required": ["name", "entity_type"],
        },
    },
}

TOPIC_FIELDS = {
    "taskDesc": "Select a topic tag from the given options based on the article's content.",
    "labelSet": [{"tag": "World"}, {"tag": "Sports"}, {"tag": "Business"}, {"tag": "Sci/Tech"}],
    "choiceType": "single",
    "outputFormat": {
        "type": "object",
        "properties": {"tag": {"type": "string", "enum": ["World", "Sports", "Business", "Sci/Tech"]}},
        "required": ["tag"],
    },
}

TRANSLATION_FIELDS = {
    "taskDesc": "Translate the given text into target language.",
    "outputFormat": {
        "type": "object",
        "properties": {"translation": {"type": "string"}},
        "required": ["translation"],
    },
}


@pytest.fixture
def ner_fields():
    return copy.deepcopy(NER_FIELDS)


@pytest.fixture
def headline_fields():
    return copy.deepcopy(HEADLINE_FIELDS)


@pytest.fixture
def topic_fields():
    return copy.deepcopy(TOPIC_FIELDS)


@pytest.fixture
def translation_fields():
    return copy.deepcopy(TRANSLATION_FIELDS)


@pytest.fixture(autouse=True)
def _fresh_index_cache():
    INDEX_CACHE.clear()
    yield


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SKETCH_CI", raising=False)
    return tmp_path


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    status = "PASS" if report.passed else "FAIL"
    _ACCEPTANCE[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, seconds = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({seconds:.1f}s)")
