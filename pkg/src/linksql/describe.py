"""Schema understanding: natural-language column descriptions.

One zero-shot role-prompted call per question over the linked schema; the
verbatim reply is what flows into the generation prompt, while a parsed
per-column map exists for inspection and tests. Parsing failures degrade
gracefully; the raw text always survives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backend import ModelEndpoint
from .linking import LinkedTables
from .prompts import build_admin_prompt
from .schema import DatabaseSchema, render_schema

_DESCRIPTION_LINE_RE = re.compile(
    r"^\s*[-*•]?\s*`?([A-Za-z_][\w ]*?)`?\s*\.\s*`?([A-Za-z_]\w*)`?\s*:\s*(.+?)\s*$"
)


@dataclass(frozen=True)
class SchemaDescription:
    per_column: dict[tuple[str, str], str] = field(default_factory=dict)
    raw_text: str = ""
    empty: bool = False

    @classmethod
    def absent(cls) -> "SchemaDescription":
        return cls(empty=True)


def parse_descriptions(text: str, schema: DatabaseSchema, tables: frozenset[str]) -> dict[tuple[str, str], str]:
    """Best-effort parse of `table.column: description` lines.

    Keys are canonical (table, column) pairs restricted to the linked
    tables; lines that match nothing are ignored.
    """
    linked_lower = {t.lower() for t in tables}
    parsed: dict[tuple[str, str], str] = {}
    for line in text.splitlines():
        m = _DESCRIPTION_LINE_RE.match(line)
        if not m:
            continue
        table_name, column_name, description = m.groups()
        canonical_table = schema.resolve_table(table_name)
        if canonical_table is None or canonical_table.lower() not in linked_lower:
            continue
        for column in schema.table(canonical_table).columns:
            if column.name.lower() == column_name.lower():
                parsed[(canonical_table, column.name)] = description
                break
    return parsed


def describe(
    linked: LinkedTables,
    schema: DatabaseSchema,
    endpoint: ModelEndpoint,
    backend,
    question: str,
) -> SchemaDescription:
    """One completion describing every column of the linked tables.

    An empty completion yields an empty, flagged SchemaDescription; the
    pipeline then proceeds without descriptions.
    """
    if not linked.tables:
        raise ValueError("describe requires a non-empty linked table set")
    prompt = build_admin_prompt(render_schema(schema, linked.tables), question)
    completion = backend.complete(endpoint, prompt.text)
    if not completion.text.strip():
        return SchemaDescription.absent()
    return SchemaDescription(
        per_column=parse_descriptions(completion.text, schema, linked.tables),
        raw_text=completion.text,
    )
