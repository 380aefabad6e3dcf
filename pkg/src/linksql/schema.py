"""SQLite schema introspection and prompt-oriented rendering.

Produces a structured catalog of one database (tables, columns, foreign
keys, sample column values) and renders it as the CREATE-style text block
used in prompts. Sample values appear as an inline comment per column.
"""

from __future__ import annotations

import re
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IntrospectionError, NotADatabaseError, UnknownTableError

SAMPLE_VALUE_COUNT = 3
VALUE_TRUNCATE_AT = 64
TRUNCATION_MARKER = "..."

_SYSTEM_TABLE_PREFIX = "sqlite_"


@dataclass(frozen=True)
class ColumnInfo:
    """One column: identifier, declared type, and rendered sample literals."""

    name: str
    declared_type: str
    is_primary_key: bool
    sample_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class TableInfo:
    name: str
    columns: tuple[ColumnInfo, ...]
    create_statement: str

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)


@dataclass(frozen=True)
class ForeignKeyInfo:
    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class DatabaseSchema:
    """Immutable catalog of one database; safe to share across threads."""

    db_id: str
    tables: tuple[TableInfo, ...]
    foreign_keys: tuple[ForeignKeyInfo, ...]
    _by_lower: dict[str, TableInfo] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        by_lower: dict[str, TableInfo] = {}
        for table in self.tables:
            key = table.name.lower()
            if key in by_lower:
                raise IntrospectionError(
                    self.db_id, f"duplicate table name (case-insensitive): {table.name}"
                )
            by_lower[key] = table
        object.__setattr__(self, "_by_lower", by_lower)
        for fk in self.foreign_keys:
            for tbl, col in ((fk.from_table, fk.from_column), (fk.to_table, fk.to_column)):
                table = by_lower.get(tbl.lower())
                if table is None:
                    raise IntrospectionError(self.db_id, f"foreign key references unknown table {tbl}")
                if col.lower() not in (c.name.lower() for c in table.columns):
                    raise IntrospectionError(
                        self.db_id, f"foreign key references unknown column {tbl}.{col}"
                    )

    def table_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)

    def resolve_table(self, name: str) -> str | None:
        """Canonical table name for a case-insensitive lookup, or None."""
        table = self._by_lower.get(name.lower())
        return table.name if table is not None else None

    def table(self, name: str) -> TableInfo:
        table = self._by_lower.get(name.lower())
        if table is None:
            raise UnknownTableError(name)
        return table


def render_value(value) -> str:
    """Render one cell as a prompt literal: text quoted, numbers bare.

    Values longer than VALUE_TRUNCATE_AT characters are cut and marked.
    """
    if isinstance(value, bytes):
        text = value.hex()
        if len(text) > VALUE_TRUNCATE_AT:
            text = text[:VALUE_TRUNCATE_AT] + TRUNCATION_MARKER
        return f"X'{text}'"
    if isinstance(value, bool) or not isinstance(value, str):
        return repr(value) if isinstance(value, float) else str(value)
    text = value
    if len(text) > VALUE_TRUNCATE_AT:
        text = text[:VALUE_TRUNCATE_AT] + TRUNCATION_MARKER
    return "'" + text.replace("'", "''") + "'"


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _render_create(table_name: str, columns: tuple[ColumnInfo, ...], with_samples: bool) -> str:
    lines = [f"CREATE TABLE {_quote_ident(table_name)} ("]
    for i, col in enumerate(columns):
        piece = f"  {_quote_ident(col.name)}"
        if col.declared_type:
            piece += f" {col.declared_type}"
        if col.is_primary_key:
            piece += " PRIMARY KEY"
        if i < len(columns) - 1:
            piece += ","
        if with_samples and col.sample_values:
            piece += " -- examples: " + ", ".join(col.sample_values)
        lines.append(piece)
    lines.append(");")
    return "\n".join(lines)


def parse_create_columns(create_statement: str) -> list[str]:
    """Column names, in order, from a rendered CREATE TABLE statement."""
    names = []
    for line in create_statement.splitlines()[1:]:
        m = re.match(r'\s*"((?:[^"]|"")*)"', line)
        if m:
            names.append(m.group(1).replace('""', '"'))
    return names


def _collect_samples(conn: sqlite3.Connection, table_name: str, n_columns: int) -> list[list]:
    """First SAMPLE_VALUE_COUNT distinct non-null values per column, row order."""
    samples: list[list] = [[] for _ in range(n_columns)]
    pending = set(range(n_columns))
    cursor = conn.execute(f"SELECT * FROM {_quote_ident(table_name)}")
    while pending:
        rows = cursor.fetchmany(256)
        if not rows:
            break
        for row in rows:
            for i in list(pending):
                value = row[i]
                if value is None or value in samples[i]:
                    continue
                samples[i].append(value)
                if len(samples[i]) >= SAMPLE_VALUE_COUNT:
                    pending.discard(i)
            if not pending:
                break
    return samples


def introspect(db_path) -> DatabaseSchema:
    """Read one SQLite file into a DatabaseSchema.

    Opens a private read-only connection; deterministic for a fixed file.
    Raises FileNotFoundError, NotADatabaseError, or IntrospectionError.
    """
    path = Path(db_path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    try:
        try:
            rows = conn.execute(
                "SELECT name FROM sqlite_master WHERE type = 'table'"
            ).fetchall()
        except sqlite3.DatabaseError as exc:
            raise NotADatabaseError(path, str(exc)) from exc
        table_names = [r[0] for r in rows if not r[0].lower().startswith(_SYSTEM_TABLE_PREFIX)]

        tables = []
        foreign_keys = []
        try:
            for name in table_names:
                info = conn.execute(f"PRAGMA table_info({_quote_ident(name)})").fetchall()
                if not info:
                    raise IntrospectionError(path, f"table {name} has no columns")
                samples = _collect_samples(conn, name, len(info))
                columns = tuple(
                    ColumnInfo(
                        name=row[1],
                        declared_type=row[2] or "",
                        is_primary_key=row[5] > 0,
                        sample_values=tuple(render_value(v) for v in samples[i]),
                    )
                    for i, row in enumerate(info)
                )
                tables.append(
                    TableInfo(
                        name=name,
                        columns=columns,
                        create_statement=_render_create(name, columns, with_samples=False),
                    )
                )
            primary_key_of = {
                t.name.lower(): next((c.name for c in t.columns if c.is_primary_key), None)
                for t in tables
            }
            for table in tables:
                fk_rows = conn.execute(
                    f"PRAGMA foreign_key_list({_quote_ident(table.name)})"
                ).fetchall()
                # rows are (id, seq, referenced table, local column, referenced column, ...)
                for fk in fk_rows:
                    to_table, from_col, to_col = fk[2], fk[3], fk[4]
                    if to_col is None:
                        to_col = primary_key_of.get(to_table.lower())
                        if to_col is None:
                            raise IntrospectionError(
                                path,
                                f"foreign key {table.name}.{from_col} references "
                                f"{to_table} without a resolvable primary key",
                            )
                    foreign_keys.append(
                        ForeignKeyInfo(
                            from_table=table.name,
                            from_column=from_col,
                            to_table=to_table,
                            to_column=to_col,
                        )
                    )
        except sqlite3.Error as exc:
            raise IntrospectionError(path, str(exc)) from exc
        try:
            return DatabaseSchema(
                db_id=path.stem,
                tables=tuple(tables),
                foreign_keys=tuple(foreign_keys),
            )
        except IntrospectionError as exc:
            raise IntrospectionError(path, exc.message) from exc
    finally:
        conn.close()


def render_table(schema: DatabaseSchema, name: str) -> str:
    """CREATE-style block for one table with per-column sample comments."""
    table = schema.table(name)
    return _render_create(table.name, table.columns, with_samples=True)


def render_schema(schema: DatabaseSchema, tables=None) -> str:
    """Prompt-schema text for the selected tables, in schema order.

    `tables` is an optional collection of names (matched case-insensitively);
    None selects every table. Byte-deterministic for a fixed input.
    """
    if tables is None:
        selected = schema.table_names()
    else:
        wanted = set()
        for name in tables:
            canonical = schema.resolve_table(name)
            if canonical is None:
                raise UnknownTableError(name)
            wanted.add(canonical)
        selected = tuple(t for t in schema.table_names() if t in wanted)
    return "\n\n".join(render_table(schema, name) for name in selected)


def render_foreign_keys(fks) -> str:
    """One `from.col = to.col` line per foreign key, source order."""
    return "\n".join(
        f"{fk.from_table}.{fk.from_column} = {fk.to_table}.{fk.to_column}" for fk in fks
    )
