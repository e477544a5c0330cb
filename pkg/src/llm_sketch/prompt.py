"""Prompt packaging: task instance + input text -> model prompt."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import templates
from .errors import EmptyInput
from .json_schema import serialize_canonical, serialize_pretty
from .tasks import LABEL_FIELDS, TaskInstance


@dataclass(frozen=True)
class PackagedPrompt:
    text: str
    sections: tuple[tuple[str, str], ...]

    def section(self, label: str) -> str | None:
        for name, content in self.sections:
            if name == label:
                return content
        return None


def _describe(entry: object, key: str) -> str:
    if isinstance(entry, dict):
        name = entry.get(key, entry.get("name", entry.get("tag", "")))
        desc = entry.get("description")
        return f"- {name}: {desc}" if desc else f"- {name}"
    return f"- {entry}"


def label_architecture(fields: dict) -> str:
    lines: list[str] = []
    for field in LABEL_FIELDS:
        if field not in fields:
            continue
        key = "tag" if field == "labelSet" else "name"
        lines.append(f"{field}:")
        lines.extend(_describe(entry, key) for entry in fields[field])
    choice = fields.get("choiceType")
    if choice is not None:
        lines.append(templates.CHOICE_TYPE_LINES.get(choice, f"Choice type: {choice}"))
    return "\n".join(lines)


def _task_description(fields: dict) -> str:
    lines = [fields["taskDesc"]]
    for key, line in templates.LANGUAGE_LINES.items():
        if key in fields:
            lines.append(line.format(fields[key]))
    return "\n".join(lines)


_PLACEHOLDER = re.compile(r"\{(" + "|".join(templates.PLACEHOLDERS) + r")\}")


def load_template(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def package(
    instance: TaskInstance,
    input_text: str,
    *,
    pretty: bool = False,
    template: str | None = None,
) -> PackagedPrompt:
    if not input_text.strip():
        raise EmptyInput("input is empty")

    output_format = instance.fields["outputFormat"]
    schema_text = serialize_pretty(output_format) if pretty else serialize_canonical(output_format)
    labels = label_architecture(instance.fields)
    input_block = f"{templates.INPUT_BEGIN}\n{input_text}\n{templates.INPUT_END}"

    sections = [("Task Description", _task_description(instance.fields))]
    if labels:
        sections.append(("Label Architecture", labels))
    sections.append(("Output Format", schema_text))
    sections.append(("Input Data", input_block))

    if template is not None:
        values = {
            "taskDesc": sections[0][1],
            "labelArchitecture": labels,
            "outputFormat": schema_text,
            "input": input_text,
        }
        # single pass so substituted text is never rescanned for placeholders
        text = _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)
        return PackagedPrompt(text, tuple(sections))

    blocks = []
    for label, content in sections:
        header = templates.SECTION_HEADERS[label]
        if label == "Output Format":
            content = f"{templates.OUTPUT_FORMAT_INSTRUCTION}\n{content}"
        blocks.append(f"{header}\n{content}")
    return PackagedPrompt("\n\n".join(blocks) + "\n", tuple(sections))
