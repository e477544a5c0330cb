from __future__ import annotations

import json
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llm_sketch.errors import DuplicateKeyError, ParseError, SchemaError, UnsupportedSchema
from llm_sketch.json_schema import (
    SchemaDoc,
    identical,
    json_equal,
    parse_json,
    parse_schema,
    schema_hash,
    serialize_canonical,
    serialize_pretty,
    validate,
)
from oracles import oracle_valid, pool_schemas, pool_values, same

json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers()
    | st.decimals(allow_nan=False, allow_infinity=False)
    | st.text(),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=6), children, max_size=4),
    max_leaves=20,
)


# ---------------------------------------------------------------------------
# parsing / serialization


def test_parse_headline_output():
    value = parse_json('[{"name": "Kamala Harris", "entity_type": "person"}]')
    assert value == [{"name": "Kamala Harris", "entity_type": "person"}]


def test_parse_null_and_whitespace():
    assert parse_json("null") is None
    assert parse_json("  \n[1, 2]\t ") == [1, 2]


@pytest.mark.parametrize("text", ['{"a":1,} ', "[1,]", "NaN", "{'a':1}", "[1] [2]", "", "01"])
def test_malformed_json_is_rejected(text):
    with pytest.raises(ParseError):
        parse_json(text)


def test_parse_error_reports_byte_offset():
    with pytest.raises(ParseError) as info:
        parse_json('["é", x]')
    # "é" is two bytes in UTF-8, so the x at character 6 sits at byte 7
    assert info.value.offset == 7
    assert "byte offset 7" in str(info.value)


def test_duplicate_member_names_rejected():
    with pytest.raises(DuplicateKeyError):
        parse_json('{"a": 1, "a": 2}')


def test_member_order_preserved():
    assert list(parse_json('{"z":1,"a":2,"m":3}')) == ["z", "a", "m"]


def test_numbers_keep_exact_values():
    value = parse_json("[12345678901234567890123, 0.1, 1e400, -0.0]")
    assert value[0] == 12345678901234567890123
    assert value[1] == Decimal("0.1")
    assert value[2] == Decimal("1e400")
    assert serialize_canonical(value) == "[12345678901234567890123,0.1,1E+400,-0.0]"


def test_out_of_range_exponent_overflows_to_infinity():
    value = parse_json("[1e99999999999999999999, 2e-99999999999999999999]")
    assert value[0] == Decimal("Infinity")
    assert value[1] == 0
    assert parse_json(serialize_canonical(value)) == value


@pytest.mark.parametrize(
    "value, text",
    [
        ({"tag": "Sports"}, '{"tag":"Sports"}'),
        ([], "[]"),
        ({}, "{}"),
        ("a\"b\\c\n\x01é", '"a\\"b\\\\c\\n\\u0001é"'),
        ([True, False, None], "[true,false,null]"),
    ],
)
def test_canonical_examples(value, text):
    assert serialize_canonical(value) == text


def test_canonical_ner_round_trip(ner_fields):
    text = serialize_canonical(ner_fields)
    assert "\n" not in text and ": " not in text and ", " not in text
    assert identical(parse_json(text), ner_fields)


def test_lone_surrogate_is_escaped():
    text = serialize_canonical("\ud800x")
    assert text == '"\\ud800x"'
    assert parse_json(text) == "\ud800x"


@settings(max_examples=300, deadline=None)
@given(json_values)
def test_round_trip_identity(value):
    text = serialize_canonical(value)
    back = parse_json(text)
    assert json_equal(back, value)
    assert identical(back, value)
    assert serialize_canonical(back) == text


@settings(max_examples=200, deadline=None)
@given(json_values)
def test_canonical_agrees_with_stdlib_parse(value):
    # an independent parser reads the canonical text back to the same structure
    back = json.loads(serialize_canonical(value), parse_float=Decimal)
    assert same(back, value)


@settings(max_examples=100, deadline=None)
@given(json_values)
def test_pretty_reparses_equal(value):
    assert identical(parse_json(serialize_pretty(value)), value)


def test_json_equal_numbers_and_booleans():
    assert json_equal(1, Decimal("1.0"))
    assert not json_equal(True, 1)
    assert not json_equal(False, 0)
    assert json_equal({"a": 1, "b": 2}, {"b": 2, "a": 1})
    assert not identical({"a": 1, "b": 2}, {"b": 2, "a": 1})


# ---------------------------------------------------------------------------
# schema AST


def test_parse_ner_output_format(ner_fields):
    schema = parse_schema(ner_fields["outputFormat"])
    assert schema.kind == "array"
    item = schema.items
    assert item.kind == "object"
    assert item.required == frozenset({"name", "entity_type"})
    assert item.property_map["entity_type"].enum == ("person", "organization", "location", "others")
    assert item.property_map["name"].description == "the entity name"


@pytest.mark.parametrize(
    "doc",
    [
        {"type": "object", "required": ["x"]},
        {"enum": []},
        {"enum": [1, 1.0]},
        {"type": "array", "minItems": 3, "maxItems": 1},
        {"type": "array", "minItems": -1},
        {"type": "blob"},
        {"type": "object", "properties": {"a": 5}},
        "not a schema",
    ],
)
def test_structural_errors(doc):
    with pytest.raises(SchemaError):
        parse_schema(doc)


def test_unsupported_keywords_recorded():
    schema = parse_schema({"type": "string", "pattern": "^a"})
    assert schema.unsupported_keywords == ("pattern",)
    nested = parse_schema({"type": "object", "properties": {"a": {"type": "string", "format": "date"}}, "oneOf": []})
    assert nested.unsupported_keywords == ("oneOf",)
    assert nested.all_unsupported() == ["/oneOf", "/properties/a/format"]
    # a type union is a use of "type" outside the modeled subset
    assert parse_schema({"type": ["string", "null"]}).unsupported_keywords == ("type",)


def test_annotations_are_not_unsupported():
    schema = parse_schema({"type": "string", "title": "t", "$schema": "x", "default": "a", "examples": ["b"]})
    assert schema.unsupported_keywords == ()


def test_enum_only_and_any_kinds():
    assert parse_schema({"enum": ["a", 1]}).kind == "enum"
    assert parse_schema({}).kind == "any"
    assert parse_schema({"type": "string", "enum": ["a"]}).kind == "string"


def test_schema_hash_is_structural():
    a = parse_schema({"type": "object", "properties": {"x": {"type": "integer"}}, "required": ["x"]})
    b = parse_schema({"required": ["x"], "properties": {"x": {"type": "integer"}}, "type": "object"})
    c = parse_schema({"type": "object", "properties": {"x": {"type": "number"}}, "required": ["x"]})
    assert schema_hash(a) == schema_hash(b)
    assert a == b
    assert schema_hash(a) != schema_hash(c)


def test_to_json_round_trip(ner_fields):
    schema = parse_schema(ner_fields["outputFormat"])
    assert parse_schema(schema.to_json()) == schema


# ---------------------------------------------------------------------------
# validation


def test_headline_output_valid(ner_fields):
    schema = parse_schema(ner_fields["outputFormat"])
    assert validate([{"name": "Kamala Harris", "entity_type": "person"}], schema).valid


def test_enum_violation_path(topic_fields):
    report = validate({"tag": "Football"}, parse_schema(topic_fields["outputFormat"]))
    assert not report.valid
    assert [(v.path, v.keyword) for v in report.violations] == [("$.tag", "enum")]


def test_nested_paths(ner_fields):
    schema = parse_schema(ner_fields["outputFormat"])
    value = [{"name": "a", "entity_type": "person"}, {"name": 3, "entity_type": "person"}, {"name": "b"}]
    report = validate(value, schema)
    assert [(v.path, v.keyword) for v in report.violations] == [("$[1].name", "type"), ("$[2]", "required")]


def test_bracket_path_for_odd_member_names():
    schema = parse_schema({"type": "object", "properties": {"a b": {"type": "integer"}}})
    report = validate({"a b": "x"}, schema)
    assert report.violations[0].path == '$["a b"]'


def test_extra_members_allowed_and_integer_semantics():
    schema = parse_schema({"type": "object", "properties": {"n": {"type": "integer"}}})
    assert validate({"n": 3, "extra": [1]}, schema).valid
    assert validate({"n": Decimal("3.0")}, schema).valid
    assert not validate({"n": Decimal("3.5")}, schema).valid
    assert not validate({"n": True}, schema).valid


def test_unsupported_raises_unless_lenient():
    schema = parse_schema({"type": "string", "maxLength": 3})
    with pytest.raises(UnsupportedSchema) as info:
        validate("abcd", schema)
    assert info.value.keywords == ["/maxLength"]
    assert validate("abcd", schema, lenient=True).valid


def test_report_to_json():
    report = validate(1, SchemaDoc("string"))
    assert report.to_json() == {
        "valid": False,
        "violations": [{"path": "$", "keyword": "type", "message": "expected string, got number"}],
    }


def test_exhaustive_pool_agrees_with_oracle():
    values = pool_values()
    for doc in pool_schemas():
        schema = parse_schema(doc)
        for value in values:
            assert validate(value, schema).valid == oracle_valid(value, doc), (value, doc)


def test_enum_pool_exactness():
    values = pool_values()
    for doc in pool_schemas():
        if "enum" not in doc:
            continue
        schema = parse_schema(doc)
        for value in values:
            member = any(same(value, m) for m in doc["enum"])
            if not member:
                assert not validate(value, schema).valid


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(pool_schemas()), st.sampled_from(pool_values()))
def test_dropping_required_is_monotone(doc, value):
    if "required" not in doc:
        return
    schema = parse_schema(doc)
    relaxed = parse_schema({k: v for k, v in doc.items() if k != "required"})
    if validate(value, schema).valid:
        assert validate(value, relaxed).valid
