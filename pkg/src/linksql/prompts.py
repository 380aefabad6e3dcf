"""Deterministic prompt builders for the four pipeline stages.

Every builder is a pure function returning the full prompt text plus a map
of section tags to byte ranges, so tests can assert each input lands in
the prompt exactly once. Wording is frozen by golden-file tests.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class PromptKind(enum.Enum):
    LINKING = "linking"
    ADMIN = "admin"
    GENERATION = "generation"
    DEBUGGING = "debugging"


MANDATORY_SECTIONS = {
    PromptKind.LINKING: ("schemas", "foreign_keys", "question", "answer_marker"),
    PromptKind.ADMIN: ("role_instruction", "schema", "question"),
    PromptKind.GENERATION: ("instruction", "rules", "schema", "foreign_keys", "question"),
    PromptKind.DEBUGGING: ("instruction", "sql", "error", "schema", "foreign_keys",
                           "descriptions", "question"),
}

ANSWER_MARKER = "### Needed schema names"

_LINKING_INSTRUCTION = (
    "List the tables needed to answer the question, given the candidate table "
    "schemas and the foreign keys below. Reply with the needed table names only, "
    "separated by commas."
)

_ADMIN_INSTRUCTION = (
    "You are a database expert. Using the column names and the sample column "
    "values, explain in natural language what every column of the schema below "
    "means. Write one line per column in the form table.column: description. "
    "When a column can be used to connect different tables, say so in its "
    "description."
)

_GENERATION_INSTRUCTION = (
    "You are a SQLite expert. Answer the question by writing one SQLite query "
    "for the schema below. Reply with the query inside a ```sql fenced block."
)

_GENERATION_RULES = (
    "- Use only tables and columns that appear in the schema.\n"
    "- Select only the columns needed to answer the question; avoid SELECT *.\n"
    "- Join tables through the listed foreign keys.\n"
    "- Use the smallest number of tables sufficient to answer the question.\n"
    "- Output exactly one SQLite statement."
)

_DEBUGGING_INSTRUCTION = (
    "You are a SQLite expert. The SQL query below failed when executed against "
    "the database. Fix it using the error message, the linked schema, the "
    "foreign keys, and the schema descriptions. Reply with one corrected SQLite "
    "query inside a ```sql fenced block."
)


@dataclass(frozen=True)
class RenderedPrompt:
    kind: PromptKind
    text: str
    section_spans: dict[str, tuple[int, int]]

    def __post_init__(self):
        spans = sorted(self.section_spans.values())
        for (_, end), (start, _) in zip(spans, spans[1:]):
            if start < end:
                raise ValueError("section spans overlap")
        missing = [s for s in MANDATORY_SECTIONS[self.kind] if s not in self.section_spans]
        if missing:
            raise ValueError(f"prompt lacks mandatory sections: {missing}")

    def section_text(self, tag: str) -> str:
        start, end = self.section_spans[tag]
        return self.text.encode("utf-8")[start:end].decode("utf-8")


def _section(header: str, body: str) -> str:
    return header if body == "" else f"{header}\n{body}"


def _assemble(kind: PromptKind, parts: list[tuple[str, str]]) -> RenderedPrompt:
    spans: dict[str, tuple[int, int]] = {}
    pieces = []
    offset = 0
    for i, (tag, chunk) in enumerate(parts):
        if i:
            offset += 2  # the "\n\n" separator
        encoded = chunk.encode("utf-8")
        spans[tag] = (offset, offset + len(encoded))
        offset += len(encoded)
        pieces.append(chunk)
    return RenderedPrompt(kind=kind, text="\n\n".join(pieces), section_spans=spans)


def build_linking_prompt(schema_text: str, fk_text: str, question: str) -> RenderedPrompt:
    """Candidate schemas, foreign keys, question, then the answer marker.

    The text ends with the literal marker line after which the model is to
    emit the needed table names.
    """
    return _assemble(
        PromptKind.LINKING,
        [
            ("instruction", _LINKING_INSTRUCTION),
            ("schemas", _section("### Candidate table schemas", schema_text)),
            ("foreign_keys", _section("### Foreign keys", fk_text)),
            ("question", _section("### Question", question)),
            ("answer_marker", ANSWER_MARKER),
        ],
    )


def build_admin_prompt(linked_schema_text: str, question: str) -> RenderedPrompt:
    """Database-expert role prompt asking for per-column descriptions."""
    return _assemble(
        PromptKind.ADMIN,
        [
            ("role_instruction", _ADMIN_INSTRUCTION),
            ("schema", _section("### Linked schema", linked_schema_text)),
            ("question", _section("### Question", question)),
        ],
    )


def build_generation_prompt(
    linked_schema_text: str,
    descriptions: str | None,
    fk_filtered_text: str,
    question: str,
) -> RenderedPrompt:
    """SQL-generation prompt over the linked schema.

    `descriptions` of None omits the schema-descriptions section entirely
    (the understanding-stage ablation).
    """
    parts = [
        ("instruction", _GENERATION_INSTRUCTION),
        ("rules", _section("### Optimization rules", _GENERATION_RULES)),
        ("schema", _section("### Linked schema", linked_schema_text)),
    ]
    if descriptions is not None:
        parts.append(("descriptions", _section("### Schema descriptions", descriptions)))
    parts += [
        ("foreign_keys", _section("### Foreign keys", fk_filtered_text)),
        ("question", _section("### Question", question)),
    ]
    return _assemble(PromptKind.GENERATION, parts)


def build_debugging_prompt(
    prior_sql: str,
    error_message: str,
    linked_schema_text: str,
    fk_text: str,
    descriptions: str,
    question: str,
) -> RenderedPrompt:
    """One-round repair prompt carrying the failed SQL and engine error."""
    if not error_message:
        raise ValueError("debugging prompt requires a non-empty error message")
    return _assemble(
        PromptKind.DEBUGGING,
        [
            ("instruction", _DEBUGGING_INSTRUCTION),
            ("sql", _section("### Failed SQL", prior_sql)),
            ("error", _section("### Error message", error_message)),
            ("schema", _section("### Linked schema", linked_schema_text)),
            ("foreign_keys", _section("### Foreign keys", fk_text)),
            ("descriptions", _section("### Schema descriptions", descriptions)),
            ("question", _section("### Question", question)),
        ],
    )


_FENCE_RE = re.compile(r"```(?:sql)?[ \t]*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_SQL_LINE_RE = re.compile(r"^\s*(select|with)\b", re.IGNORECASE)


def extract_sql(text: str) -> str | None:
    """Model-reply SQL per the reply convention.

    Takes the first fenced code block; failing that, lines from the first
    SELECT/WITH line up to a terminating semicolon or blank line.
    """
    match = _FENCE_RE.search(text)
    if match:
        sql = match.group(1).strip()
        return sql or None
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if not _SQL_LINE_RE.match(line):
            continue
        collected = []
        for candidate in lines[i:]:
            if not candidate.strip():
                break
            collected.append(candidate)
            if candidate.rstrip().endswith(";"):
                break
        return "\n".join(collected).strip() or None
    return None
