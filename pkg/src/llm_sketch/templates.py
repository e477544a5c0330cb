"""Fixed prompt wording.  Bump TEMPLATE_VERSION whenever any string changes."""

TEMPLATE_VERSION = "1"

SECTION_HEADERS = {
    "Task Description": "[Task Description]",
    "Label Architecture": "[Label Architecture]",
    "Output Format": "[Output Format (Json Schema)]",
    "Input Data": "[Input Data]",
}

OUTPUT_FORMAT_INSTRUCTION = (
    "Respond with a single JSON value that conforms to the following JSON Schema. "
    "Do not add any text before or after it."
)

INPUT_BEGIN = "<<<BEGIN INPUT>>>"
INPUT_END = "<<<END INPUT>>>"

CHOICE_TYPE_LINES = {
    "single": "Choose exactly one label.",
    "multiple": "Choose one or more labels.",
}

LANGUAGE_LINES = {
    "sourceLang": "Source language: {}",
    "targetLang": "Target language: {}",
}

# Placeholders accepted by user-supplied templates.
PLACEHOLDERS = ("taskDesc", "labelArchitecture", "outputFormat", "input")

VALUE_SELECTION_INSTRUCTION = (
    "Construct a JSON value that conforms to the JSON Schema below, "
    "using only values taken from the candidate list. "
    "Respond with the JSON value only."
)
SCHEMA_LINE_PREFIX = "Schema: "
CANDIDATES_LINE_PREFIX = "Candidate values: "
