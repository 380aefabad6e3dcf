"""Schema linking: shuffle-union inference, SFT export, and an ICL baseline.

Inference shuffles the candidate schema and foreign-key order across
several model calls and unions the parsed table names; diversity comes
from the input permutations, not sampling temperature. Name parsing is
validated against the candidate schema so hallucinated tables never reach
the linked set.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .backend import Completion, ModelEndpoint
from .dataset import Benchmark, derive_gold_tables
from .errors import LinkingFailedError, TransportError, UnparseableGoldSQLError
from .prompts import RenderedPrompt, build_linking_prompt
from .schema import DatabaseSchema, introspect, render_foreign_keys, render_schema, render_table

logger = logging.getLogger(__name__)

DEFAULT_NUM_SHUFFLES = 5


@dataclass(frozen=True)
class LinkingCase:
    schema: DatabaseSchema
    question: str
    gold_tables: frozenset[str] | None = None


@dataclass(frozen=True)
class ShuffleRound:
    seed: int | None  # None for the canonical (unshuffled) order
    raw_text: str
    parsed: frozenset[str]


@dataclass(frozen=True)
class LinkedTables:
    """Union of per-round parsed table names, restricted to the schema.

    `fallback_full_schema` marks both the empty-union fallback and the
    linking-disabled ablation, which behave identically downstream.
    """

    tables: frozenset[str]
    per_shuffle_outputs: tuple[ShuffleRound, ...] = ()
    discarded_names: tuple[str, ...] = ()
    fallback_full_schema: bool = False
    failed_shuffles: int = 0

    @classmethod
    def full_schema(cls, schema: DatabaseSchema) -> "LinkedTables":
        return cls(tables=frozenset(schema.table_names()), fallback_full_schema=True)


@dataclass(frozen=True)
class SftRecord:
    prompt: str
    target: str


_NAME_JUNK_RE = re.compile(r"^[-*•\s]*(?:\d+[.)]\s*)?|[.;:\s]*$")


def parse_table_names(text: str, schema: DatabaseSchema) -> tuple[frozenset[str], list[str]]:
    """Split a model reply into (matched canonical names, discarded names).

    Splits on commas and newlines; strips quotes, backticks, and bullets;
    matches case-insensitively against the candidate schema.
    """
    matched: set[str] = set()
    discarded: list[str] = []
    for piece in re.split(r"[,\n]", text):
        name = _NAME_JUNK_RE.sub("", piece).strip("`'\" ")
        if not name:
            continue
        canonical = schema.resolve_table(name)
        if canonical is None:
            discarded.append(name)
        else:
            matched.add(canonical)
    return frozenset(matched), discarded


def canonical_linking_prompt(schema: DatabaseSchema, question: str) -> RenderedPrompt:
    """Linking prompt in the database's canonical (unshuffled) order."""
    return build_linking_prompt(
        render_schema(schema), render_foreign_keys(schema.foreign_keys), question
    )


def shuffled_linking_prompt(case: LinkingCase, round_seed: int) -> RenderedPrompt:
    """Linking prompt with table and foreign-key order permuted by the seed."""
    rng = random.Random(round_seed)
    table_order = list(case.schema.table_names())
    rng.shuffle(table_order)
    fk_order = list(case.schema.foreign_keys)
    rng.shuffle(fk_order)
    schema_text = "\n\n".join(render_table(case.schema, name) for name in table_order)
    return build_linking_prompt(schema_text, render_foreign_keys(fk_order), case.question)


def link(
    case: LinkingCase,
    endpoint: ModelEndpoint,
    backend,
    num_shuffles: int = DEFAULT_NUM_SHUFFLES,
    rng_seed: int = 0,
) -> LinkedTables:
    """Shuffle-union inference over the linking model.

    Runs `num_shuffles` seeded permutations of the candidate order; the
    result is the union of the parsed names across rounds. Rounds that
    fail in transport are skipped (counted); if every round fails,
    LinkingFailedError is raised. An empty union falls back to the full
    candidate set, flagged.
    """
    if num_shuffles < 1:
        raise ValueError("num_shuffles must be >= 1")
    master = random.Random(rng_seed)
    round_seeds = [master.getrandbits(32) for _ in range(num_shuffles)]

    rounds: list[ShuffleRound] = []
    discarded: list[str] = []
    failures = 0
    for round_seed in round_seeds:
        prompt = shuffled_linking_prompt(case, round_seed)
        try:
            completion: Completion = backend.complete(endpoint, prompt.text)
        except TransportError as exc:
            logger.warning("linking shuffle failed (seed %d): %s", round_seed, exc)
            failures += 1
            continue
        parsed, bad = parse_table_names(completion.text, case.schema)
        discarded.extend(bad)
        rounds.append(ShuffleRound(seed=round_seed, raw_text=completion.text, parsed=parsed))
    if not rounds:
        raise LinkingFailedError(f"all {num_shuffles} linking rounds failed")

    union = frozenset().union(*(r.parsed for r in rounds))
    if not union:
        logger.warning("linking produced no valid table names; falling back to full schema")
        return LinkedTables(
            tables=frozenset(case.schema.table_names()),
            per_shuffle_outputs=tuple(rounds),
            discarded_names=tuple(dict.fromkeys(discarded)),
            fallback_full_schema=True,
            failed_shuffles=failures,
        )
    return LinkedTables(
        tables=union,
        per_shuffle_outputs=tuple(rounds),
        discarded_names=tuple(dict.fromkeys(discarded)),
        failed_shuffles=failures,
    )


@dataclass(frozen=True)
class IclExemplar:
    schema: DatabaseSchema
    question: str
    tables: tuple[str, ...]


def link_icl(case: LinkingCase, endpoint: ModelEndpoint, backend, exemplars) -> LinkedTables:
    """Few-shot baseline: one call, three worked examples, no shuffling."""
    exemplars = tuple(exemplars)
    if len(exemplars) != 3:
        raise ValueError(f"link_icl requires exactly 3 exemplars, got {len(exemplars)}")
    blocks = []
    for ex in exemplars:
        prompt = canonical_linking_prompt(ex.schema, ex.question)
        blocks.append(prompt.text + "\n" + ", ".join(ex.tables))
    blocks.append(canonical_linking_prompt(case.schema, case.question).text)
    full_prompt = "\n\n".join(blocks)

    completion = backend.complete(endpoint, full_prompt)
    parsed, discarded = parse_table_names(completion.text, case.schema)
    round_ = ShuffleRound(seed=None, raw_text=completion.text, parsed=parsed)
    if not parsed:
        return LinkedTables(
            tables=frozenset(case.schema.table_names()),
            per_shuffle_outputs=(round_,),
            discarded_names=tuple(dict.fromkeys(discarded)),
            fallback_full_schema=True,
        )
    return LinkedTables(
        tables=parsed,
        per_shuffle_outputs=(round_,),
        discarded_names=tuple(dict.fromkeys(discarded)),
    )


def export_sft_dataset(benchmark: Benchmark, out_path, schemas: dict[str, DatabaseSchema] | None = None) -> int:
    """Write one {"prompt", "target"} JSON line per question with gold SQL.

    Prompts use the canonical schema order (shuffling is inference-only);
    targets are the gold tables, comma-separated in schema order. Questions
    whose gold SQL cannot be extracted are skipped with a log entry.
    """
    schemas = dict(schemas) if schemas else {}
    out_path = Path(out_path)
    written = 0
    with out_path.open("w", encoding="utf-8") as out:
        for q in benchmark.questions:
            if q.gold_sql is None:
                logger.warning("question %d has no gold SQL; skipped", q.index)
                continue
            schema = schemas.get(q.db_id)
            if schema is None:
                schema = introspect(benchmark.db_path(q.db_id))
                schemas[q.db_id] = schema
            try:
                gold = derive_gold_tables(q, schema)
            except UnparseableGoldSQLError as exc:
                logger.warning("question %d skipped: %s", q.index, exc)
                continue
            ordered = [name for name in schema.table_names() if name in gold]
            record = SftRecord(
                prompt=canonical_linking_prompt(schema, q.question).text,
                target=", ".join(ordered),
            )
            out.write(json.dumps({"prompt": record.prompt, "target": record.target},
                                 ensure_ascii=False) + "\n")
            written += 1
    return written
