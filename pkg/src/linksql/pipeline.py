"""SQL generation, execution against SQLite, and one-round debugging.

The end-to-end per-question pipeline is: link tables, describe them,
generate SQL, execute read-only, and, only when execution errored,
one corrective call carrying the engine error. Stage failures are
recorded in the trace; a trace is always produced.
"""

from __future__ import annotations

import logging
import sqlite3
import threading
import time
from dataclasses import dataclass, field, replace

from .backend import Component, RoutingConfig, route
from .dataset import SpiderQuestion
from .describe import SchemaDescription, describe
from .errors import LinkingFailedError, TransportError
from .linking import DEFAULT_NUM_SHUFFLES, LinkedTables, LinkingCase, ShuffleRound, link
from .prompts import build_debugging_prompt, build_generation_prompt, extract_sql
from .schema import DatabaseSchema, ForeignKeyInfo, render_foreign_keys, render_schema

logger = logging.getLogger(__name__)

TRACE_VERSION = 1


@dataclass(frozen=True)
class ExecutionResult:
    ok: bool
    rows: tuple[tuple, ...] | None = None
    error: str | None = None

    @classmethod
    def success(cls, rows) -> "ExecutionResult":
        return cls(ok=True, rows=tuple(tuple(r) for r in rows))

    @classmethod
    def failure(cls, message: str) -> "ExecutionResult":
        return cls(ok=False, error=message)


@dataclass(frozen=True)
class SqlAttempt:
    sql: str
    stage: str  # "initial" | "debugged"
    execution: ExecutionResult | None = None
    no_sql_found: bool = False


@dataclass(frozen=True)
class PipelineOptions:
    num_shuffles: int = DEFAULT_NUM_SHUFFLES
    rng_seed: int = 0
    no_linking: bool = False
    no_admin: bool = False
    no_debugging: bool = False
    execution_timeout: float = 30.0
    debug_filtered_fks: bool = False


@dataclass
class PipelineTrace:
    index: int
    db_id: str
    question: str
    linked: LinkedTables
    description: SchemaDescription | None
    attempts: list[SqlAttempt]
    final_sql: str
    timings: dict[str, float] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= len(self.attempts) <= 2:
            raise ValueError(f"trace must hold 1 or 2 attempts, got {len(self.attempts)}")
        if len(self.attempts) == 2:
            first = self.attempts[0].execution
            if first is None or first.ok:
                raise ValueError("second attempt recorded without a failed first execution")
        if self.final_sql != self.attempts[-1].sql:
            raise ValueError("final_sql must equal the last attempt's sql")


def filter_foreign_keys(schema: DatabaseSchema, linked) -> list[ForeignKeyInfo]:
    """Foreign keys with both endpoints inside the linked set, schema order."""
    linked_lower = {name.lower() for name in linked}
    return [
        fk
        for fk in schema.foreign_keys
        if fk.from_table.lower() in linked_lower and fk.to_table.lower() in linked_lower
    ]


def execute(sql: str, db_path, timeout: float = 30.0) -> ExecutionResult:
    """Run one query read-only with a wall-clock timeout.

    Every failure (engine error, write attempt, timeout, empty SQL) comes
    back as the error variant; nothing is raised past this boundary.
    """
    if not sql.strip():
        return ExecutionResult.failure("no SQL to execute")
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        return ExecutionResult.failure(str(exc))
    timer = threading.Timer(timeout, conn.interrupt)
    timer.start()
    try:
        rows = conn.execute(sql).fetchall()
        return ExecutionResult.success(rows)
    except (sqlite3.Error, sqlite3.Warning) as exc:
        message = str(exc)
        if "interrupted" in message:
            message = f"execution timed out after {timeout:g}s"
        return ExecutionResult.failure(message)
    finally:
        timer.cancel()
        conn.close()


def _descriptions_or_none(description: SchemaDescription | None) -> str | None:
    if description is None or description.empty:
        return None
    return description.raw_text


def generate(
    case: LinkingCase,
    linked: LinkedTables,
    description: SchemaDescription | None,
    routing: RoutingConfig,
    backend,
) -> SqlAttempt:
    """Initial SQL attempt from the linked schema, descriptions, and K'.

    Not yet executed; extraction failure yields an empty, flagged attempt.
    """
    if not linked.tables:
        raise ValueError("generate requires a non-empty linked table set")
    prompt = build_generation_prompt(
        render_schema(case.schema, linked.tables),
        _descriptions_or_none(description),
        render_foreign_keys(filter_foreign_keys(case.schema, linked.tables)),
        case.question,
    )
    completion = backend.complete(route(routing, Component.GENERATION), prompt.text)
    sql = extract_sql(completion.text)
    if sql is None:
        logger.warning("no SQL found in generation reply")
        return SqlAttempt(sql="", stage="initial", no_sql_found=True)
    return SqlAttempt(sql=sql, stage="initial")


def debug_once(
    prior: SqlAttempt,
    case: LinkingCase,
    linked: LinkedTables,
    description: SchemaDescription | None,
    routing: RoutingConfig,
    backend,
    filtered_fks: bool = False,
) -> SqlAttempt:
    """Exactly one corrective call for a failed attempt; never recursive.

    The repair prompt carries the unfiltered foreign keys unless
    `filtered_fks` narrows them to the linked set. If no SQL can be
    extracted from the reply, the prior SQL is kept, flagged.
    """
    assert prior.execution is not None and not prior.execution.ok, (
        "debug_once requires a failed prior attempt"
    )
    fks = (
        filter_foreign_keys(case.schema, linked.tables)
        if filtered_fks
        else list(case.schema.foreign_keys)
    )
    descriptions = _descriptions_or_none(description) or ""
    prompt = build_debugging_prompt(
        prior.sql,
        prior.execution.error or "unknown error",
        render_schema(case.schema, linked.tables),
        render_foreign_keys(fks),
        descriptions,
        case.question,
    )
    completion = backend.complete(route(routing, Component.DEBUGGING), prompt.text)
    sql = extract_sql(completion.text)
    if sql is None:
        logger.warning("no SQL found in debugging reply; keeping prior SQL")
        return SqlAttempt(sql=prior.sql, stage="debugged", no_sql_found=True)
    return SqlAttempt(sql=sql, stage="debugged")


def run_pipeline(
    question: SpiderQuestion,
    schema: DatabaseSchema,
    db_path,
    routing: RoutingConfig,
    backend,
    options: PipelineOptions = PipelineOptions(),
) -> PipelineTrace:
    """Full per-question pipeline with ablation switches.

    Disabling linking links the full schema; disabling descriptions drops
    them from the generation prompt; disabling debugging caps attempts at
    one. Stage failures land in trace.errors, never raise.
    """
    timings: dict[str, float] = {}
    errors: list[str] = []
    case = LinkingCase(schema=schema, question=question.question)

    started = time.perf_counter()
    if options.no_linking:
        linked = LinkedTables.full_schema(schema)
    else:
        try:
            linked = link(
                case,
                route(routing, Component.LINKING),
                backend,
                num_shuffles=options.num_shuffles,
                rng_seed=options.rng_seed,
            )
        except (LinkingFailedError, TransportError) as exc:
            errors.append(f"linking: {exc}")
            linked = LinkedTables.full_schema(schema)
    timings["linking"] = time.perf_counter() - started

    started = time.perf_counter()
    if options.no_admin:
        description = None
    else:
        try:
            description = describe(
                linked, schema, route(routing, Component.ADMIN), backend, question.question
            )
        except TransportError as exc:
            errors.append(f"describe: {exc}")
            description = SchemaDescription.absent()
    timings["admin"] = time.perf_counter() - started

    started = time.perf_counter()
    try:
        attempt = generate(case, linked, description, routing, backend)
    except TransportError as exc:
        errors.append(f"generation: {exc}")
        attempt = SqlAttempt(sql="", stage="initial", no_sql_found=True)
    timings["generation"] = time.perf_counter() - started

    started = time.perf_counter()
    attempt = replace(attempt, execution=execute(attempt.sql, db_path, options.execution_timeout))
    timings["execution"] = time.perf_counter() - started
    attempts = [attempt]

    if not attempt.execution.ok and not options.no_debugging:
        started = time.perf_counter()
        try:
            debugged = debug_once(
                attempt, case, linked, description, routing, backend,
                filtered_fks=options.debug_filtered_fks,
            )
            debugged = replace(
                debugged, execution=execute(debugged.sql, db_path, options.execution_timeout)
            )
            attempts.append(debugged)
        except TransportError as exc:
            errors.append(f"debugging: {exc}")
        timings["debugging"] = time.perf_counter() - started

    return PipelineTrace(
        index=question.index,
        db_id=question.db_id,
        question=question.question,
        linked=linked,
        description=description,
        attempts=attempts,
        final_sql=attempts[-1].sql,
        timings=timings,
        errors=errors,
    )


def _cell_to_json(value):
    if isinstance(value, bytes):
        return f"X'{value.hex()}'"
    return value


def trace_to_dict(trace: PipelineTrace) -> dict:
    """JSON-serializable form of one trace (the traces.jsonl row schema)."""
    return {
        "version": TRACE_VERSION,
        "index": trace.index,
        "db_id": trace.db_id,
        "question": trace.question,
        "linked": {
            "tables": sorted(trace.linked.tables),
            "per_shuffle": [
                {"seed": r.seed, "raw_text": r.raw_text, "parsed": sorted(r.parsed)}
                for r in trace.linked.per_shuffle_outputs
            ],
            "discarded_names": list(trace.linked.discarded_names),
            "fallback_full_schema": trace.linked.fallback_full_schema,
            "failed_shuffles": trace.linked.failed_shuffles,
        },
        "description": None
        if trace.description is None
        else {
            "raw_text": trace.description.raw_text,
            "per_column": {f"{t}.{c}": d for (t, c), d in trace.description.per_column.items()},
            "empty": trace.description.empty,
        },
        "attempts": [
            {
                "sql": a.sql,
                "stage": a.stage,
                "no_sql_found": a.no_sql_found,
                "execution": None
                if a.execution is None
                else {
                    "ok": a.execution.ok,
                    "rows": None
                    if a.execution.rows is None
                    else [[_cell_to_json(v) for v in row] for row in a.execution.rows],
                    "error": a.execution.error,
                },
            }
            for a in trace.attempts
        ],
        "final_sql": trace.final_sql,
        "timings": trace.timings,
        "errors": trace.errors,
    }


def trace_from_dict(data: dict) -> PipelineTrace:
    linked = LinkedTables(
        tables=frozenset(data["linked"]["tables"]),
        per_shuffle_outputs=tuple(
            ShuffleRound(seed=r["seed"], raw_text=r["raw_text"], parsed=frozenset(r["parsed"]))
            for r in data["linked"].get("per_shuffle", [])
        ),
        discarded_names=tuple(data["linked"].get("discarded_names", [])),
        fallback_full_schema=data["linked"].get("fallback_full_schema", False),
        failed_shuffles=data["linked"].get("failed_shuffles", 0),
    )
    desc = data.get("description")
    description = None
    if desc is not None:
        per_column = {}
        for key, value in desc.get("per_column", {}).items():
            table, _, column = key.partition(".")
            per_column[(table, column)] = value
        description = SchemaDescription(
            per_column=per_column, raw_text=desc.get("raw_text", ""), empty=desc.get("empty", False)
        )
    attempts = []
    for a in data["attempts"]:
        execution = None
        if a.get("execution") is not None:
            rows = a["execution"].get("rows")
            execution = ExecutionResult(
                ok=a["execution"]["ok"],
                rows=None if rows is None else tuple(tuple(r) for r in rows),
                error=a["execution"].get("error"),
            )
        attempts.append(
            SqlAttempt(
                sql=a["sql"],
                stage=a["stage"],
                execution=execution,
                no_sql_found=a.get("no_sql_found", False),
            )
        )
    return PipelineTrace(
        index=data["index"],
        db_id=data["db_id"],
        question=data["question"],
        linked=linked,
        description=description,
        attempts=attempts,
        final_sql=data["final_sql"],
        timings=data.get("timings", {}),
        errors=data.get("errors", []),
    )
