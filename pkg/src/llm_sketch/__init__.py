"""Schema-guided task prompting and structured JSON generation."""

from .backends import FunctionBackend, HttpBackend, ModelBackend, ScriptedBackend, UniformBackend
from .constraint import Vocabulary, compile_schema, index_vocabulary, mask_index_for, schema_to_regex
from .errors import (
    BackendError,
    FormatFailure,
    InstanceInvalid,
    LengthExceeded,
    ParseError,
    SketchError,
    UnknownSchema,
    UnsupportedSchema,
)
from .evaluation import EvalDataset, legal_output_ratio, run_eval, score_accuracy, score_micro_f1
from .generation import GenerationConfig, GenerationOutcome, constrained_decode, generate, validate_outcome
from .json_schema import SchemaDoc, parse_json, parse_schema, serialize_canonical, validate
from .prompt import package
from .tasks import Catalog, TaskInstance, default_catalog, instantiate, list_schemas, load_instance, save_instance

__all__ = [
    "BackendError",
    "Catalog",
    "EvalDataset",
    "FormatFailure",
    "FunctionBackend",
    "GenerationConfig",
    "GenerationOutcome",
    "HttpBackend",
    "InstanceInvalid",
    "LengthExceeded",
    "ModelBackend",
    "ParseError",
    "SchemaDoc",
    "ScriptedBackend",
    "SketchError",
    "TaskInstance",
    "UniformBackend",
    "UnknownSchema",
    "UnsupportedSchema",
    "Vocabulary",
    "compile_schema",
    "constrained_decode",
    "default_catalog",
    "generate",
    "index_vocabulary",
    "instantiate",
    "legal_output_ratio",
    "list_schemas",
    "load_instance",
    "mask_index_for",
    "package",
    "parse_json",
    "parse_schema",
    "run_eval",
    "save_instance",
    "schema_to_regex",
    "score_accuracy",
    "score_micro_f1",
    "serialize_canonical",
    "validate",
    "validate_outcome",
]
