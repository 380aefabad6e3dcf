"""Spider-format benchmark ingestion and gold-table extraction.

Question files are JSON arrays of {db_id, question, query?}; databases live
at <db_root>/<db_id>/<db_id>.sqlite. Gold table sets are extracted from the
gold SQL with a lightweight tokenizer validated against the known schema.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import MissingDatabaseError, ParseError, UnparseableGoldSQLError
from .schema import DatabaseSchema

_TOKEN_RE = re.compile(
    r"""
      '(?:[^']|'')*'
    | "(?:[^"]|"")*"
    | `(?:[^`]|``)*`
    | \[[^\]]*\]
    | [A-Za-z_][A-Za-z0-9_$]*
    | \d+(?:\.\d*)?
    | \s+
    | .
    """,
    re.VERBOSE,
)

_REF_STOP_WORDS = {"as", "on", "where", "group", "order", "having", "limit", "join",
                   "inner", "left", "right", "full", "outer", "cross", "natural",
                   "union", "intersect", "except", "select", "from"}


@dataclass(frozen=True)
class SpiderQuestion:
    index: int
    db_id: str
    question: str
    gold_sql: str | None = None
    gold_tables: frozenset[str] | None = None


@dataclass(frozen=True)
class Benchmark:
    split_name: str
    questions: tuple[SpiderQuestion, ...]
    db_root: Path

    def db_path(self, db_id: str) -> Path:
        return Path(self.db_root) / db_id / f"{db_id}.sqlite"


def load_split(questions_path, db_root, split_name: str | None = None) -> Benchmark:
    """Parse a question file and pair every entry with its database.

    Raises ParseError for malformed input and MissingDatabaseError when a
    db_id has no database file under db_root.
    """
    questions_path = Path(questions_path)
    db_root = Path(db_root)
    try:
        raw = json.loads(questions_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{questions_path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{questions_path}: expected a JSON array of question objects")

    questions = []
    seen_dbs: set[str] = set()
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "db_id" not in entry or "question" not in entry:
            raise ParseError(f"{questions_path}: entry {i} lacks db_id/question")
        db_id = entry["db_id"]
        if db_id not in seen_dbs:
            db_file = db_root / db_id / f"{db_id}.sqlite"
            if not db_file.is_file():
                raise MissingDatabaseError(db_id, db_file)
            seen_dbs.add(db_id)
        gold_sql = entry.get("query")
        questions.append(
            SpiderQuestion(index=i, db_id=db_id, question=entry["question"], gold_sql=gold_sql)
        )
    return Benchmark(
        split_name=split_name or questions_path.stem,
        questions=tuple(questions),
        db_root=db_root,
    )


def tokenize_sql(sql: str) -> list[str]:
    tokens = []
    for m in _TOKEN_RE.finditer(sql):
        tok = m.group(0)
        if tok.isspace():
            continue
        if tok in ("'", '"', "`", "["):
            raise UnparseableGoldSQLError(f"unterminated quote in SQL: {sql!r}")
        tokens.append(tok)
    return tokens


def _unquote(token: str) -> str | None:
    """Identifier text of a token, or None if it is not an identifier."""
    if token.startswith('"') and token.endswith('"'):
        return token[1:-1].replace('""', '"')
    if token.startswith("`") and token.endswith("`"):
        return token[1:-1].replace("``", "`")
    if token.startswith("[") and token.endswith("]"):
        return token[1:-1]
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_$]*", token):
        return token
    return None


def derive_gold_tables(question: SpiderQuestion, schema: DatabaseSchema) -> frozenset[str]:
    """Schema table names referenced by the gold query (FROM/JOIN positions).

    Descends into subqueries; alias-insensitive; names are returned in the
    schema's canonical casing. Raises UnparseableGoldSQLError when no known
    table can be extracted.
    """
    if question.gold_sql is None:
        raise UnparseableGoldSQLError("question has no gold SQL")
    tokens = tokenize_sql(question.gold_sql)
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        word = tokens[i].lower()
        if word not in ("from", "join"):
            i += 1
            continue
        i += 1
        # one comma-separated list of table references follows
        while i < len(tokens):
            name = _unquote(tokens[i])
            if name is None or name.lower() in _REF_STOP_WORDS:
                break
            canonical = schema.resolve_table(name)
            if canonical is not None:
                found.add(canonical)
            i += 1
            # skip an optional alias ("AS x" or bare)
            if i < len(tokens) and tokens[i].lower() == "as":
                i += 2
            elif i < len(tokens):
                alias = _unquote(tokens[i])
                if alias is not None and alias.lower() not in _REF_STOP_WORDS:
                    i += 1
            if i < len(tokens) and tokens[i] == ",":
                i += 1
                continue
            break
    if not found:
        raise UnparseableGoldSQLError(f"no known tables found in {question.gold_sql!r}")
    return frozenset(found)


def annotate_gold_tables(benchmark: Benchmark, schemas: dict[str, DatabaseSchema]) -> tuple[Benchmark, list[int]]:
    """Benchmark copy with gold_tables filled in; returns skipped indices.

    Questions whose gold SQL is missing or unextractable keep gold_tables
    None (excluded from linking recall, retained for execution scoring).
    """
    annotated = []
    skipped = []
    for q in benchmark.questions:
        tables = None
        if q.gold_sql is not None:
            try:
                tables = derive_gold_tables(q, schemas[q.db_id])
            except UnparseableGoldSQLError:
                skipped.append(q.index)
        else:
            skipped.append(q.index)
        annotated.append(replace(q, gold_tables=tables))
    return replace(benchmark, questions=tuple(annotated)), skipped


def crosscheck_tables_json(tables_json_path, schemas: dict[str, DatabaseSchema]) -> list[str]:
    """Compare a Spider tables.json against introspected schemas.

    The database file is ground truth; mismatches come back as warning
    strings, never errors.
    """
    warnings = []
    entries = json.loads(Path(tables_json_path).read_text(encoding="utf-8"))
    for entry in entries:
        db_id = entry.get("db_id")
        schema = schemas.get(db_id)
        if schema is None:
            continue
        declared = {name.lower() for name in entry.get("table_names_original", [])}
        actual = {name.lower() for name in schema.table_names()}
        for missing in sorted(declared - actual):
            warnings.append(f"{db_id}: tables.json lists {missing!r} but the database lacks it")
        for extra in sorted(actual - declared):
            warnings.append(f"{db_id}: database has {extra!r} but tables.json omits it")

        table_names = entry.get("table_names_original", [])
        columns = entry.get("column_names_original", [])
        declared_cols: dict[str, set[str]] = {}
        for table_idx, col_name in columns:
            if 0 <= table_idx < len(table_names):
                declared_cols.setdefault(table_names[table_idx].lower(), set()).add(col_name.lower())
        for table in schema.tables:
            expected = declared_cols.get(table.name.lower())
            if expected is None:
                continue
            actual_cols = {c.name.lower() for c in table.columns}
            if expected != actual_cols:
                warnings.append(
                    f"{db_id}.{table.name}: column sets differ "
                    f"(tables.json-only: {sorted(expected - actual_cols)}, "
                    f"db-only: {sorted(actual_cols - expected)})"
                )

        def col_ref(idx):
            if 0 <= idx < len(columns):
                table_idx, col_name = columns[idx]
                if 0 <= table_idx < len(table_names):
                    return (table_names[table_idx].lower(), col_name.lower())
            return None

        declared_fks = set()
        for from_idx, to_idx in entry.get("foreign_keys", []):
            a, b = col_ref(from_idx), col_ref(to_idx)
            if a and b:
                declared_fks.add(frozenset((a, b)))
        actual_fks = {
            frozenset((
                (fk.from_table.lower(), fk.from_column.lower()),
                (fk.to_table.lower(), fk.to_column.lower()),
            ))
            for fk in schema.foreign_keys
        }
        if declared_fks != actual_fks:
            warnings.append(f"{db_id}: foreign keys differ between tables.json and the database")
    return warnings
