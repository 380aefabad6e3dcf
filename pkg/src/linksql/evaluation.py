"""Table-recall and execution-accuracy scoring.

Two recall metrics over linked tables (exact-set match and gold-subset
containment) and execution accuracy: a prediction scores 1 only when its
result set matches the gold query's. Comparison semantics: multiset
equality of rows, list equality when the gold query orders at the top
level, numeric cells within 1e-6 relative tolerance, null equals only
null.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import Benchmark, tokenize_sql
from .pipeline import PipelineTrace, execute

NUMERIC_REL_TOL = 1e-6


@dataclass(frozen=True)
class PerQuestionLinking:
    index: int
    predicted: frozenset[str]
    gold: frozenset[str] | None
    exact: bool
    subset: bool
    skipped: bool = False


@dataclass(frozen=True)
class LinkingScore:
    n_scored: int
    n_exact: int
    n_subset: int
    n_skipped: int
    per_question: tuple[PerQuestionLinking, ...]

    def __post_init__(self):
        if not self.n_exact <= self.n_subset <= self.n_scored:
            raise ValueError("exact matches must be a subset of subset matches")

    @property
    def re(self) -> float:
        return self.n_exact / self.n_scored if self.n_scored else 0.0

    @property
    def rs(self) -> float:
        return self.n_subset / self.n_scored if self.n_scored else 0.0


@dataclass(frozen=True)
class PerQuestionExecution:
    index: int
    match: bool
    gold_summary: str
    predicted_summary: str
    note: str = ""
    skipped: bool = False


@dataclass(frozen=True)
class ExScore:
    n_scored: int
    n_correct: int
    n_skipped: int
    per_question: tuple[PerQuestionExecution, ...]

    def __post_init__(self):
        if self.n_correct > self.n_scored:
            raise ValueError("n_correct cannot exceed n_scored")

    @property
    def ex(self) -> float:
        return self.n_correct / self.n_scored if self.n_scored else 0.0


def score_linking(predictions, benchmark: Benchmark) -> LinkingScore:
    """Exact and subset recall of predicted table sets against gold.

    `predictions` holds (question index, predicted names) pairs. Questions
    without gold tables are skipped, not scored.
    """
    per_question = []
    n_scored = n_exact = n_subset = n_skipped = 0
    for index, predicted in predictions:
        gold = benchmark.questions[index].gold_tables
        predicted = frozenset(predicted)
        if gold is None:
            n_skipped += 1
            per_question.append(
                PerQuestionLinking(index, predicted, None, False, False, skipped=True)
            )
            continue
        predicted_lower = {name.lower() for name in predicted}
        gold_lower = {name.lower() for name in gold}
        exact = predicted_lower == gold_lower
        subset = gold_lower <= predicted_lower
        n_scored += 1
        n_exact += exact
        n_subset += subset
        per_question.append(PerQuestionLinking(index, predicted, frozenset(gold), exact, subset))
    return LinkingScore(n_scored, n_exact, n_subset, n_skipped, tuple(per_question))


def _cells_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a_numeric = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_numeric = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_numeric and b_numeric:
        return math.isclose(a, b, rel_tol=NUMERIC_REL_TOL, abs_tol=0.0)
    if type(a) is not type(b):
        return False
    return a == b


def _rows_equal(a, b) -> bool:
    return len(a) == len(b) and all(_cells_equal(x, y) for x, y in zip(a, b))


def _cell_sort_key(value):
    if value is None:
        return (0, "")
    if isinstance(value, bool):
        return (4, str(value))
    if isinstance(value, (int, float)):
        return (1, float(value))
    if isinstance(value, str):
        return (2, value)
    if isinstance(value, bytes):
        return (3, value.hex())
    return (5, repr(value))


def _row_sort_key(row):
    return tuple(_cell_sort_key(v) for v in row)


def compare_results(gold_rows, pred_rows, order_sensitive: bool) -> bool:
    """Row-set equality under the declared comparison semantics.

    Order-sensitive mode compares row lists positionally; otherwise both
    sides are canonically sorted and compared pairwise (multiset
    equality). Symmetric for the unordered mode.
    """
    gold = [tuple(r) for r in gold_rows]
    pred = [tuple(r) for r in pred_rows]
    if len(gold) != len(pred):
        return False
    if not order_sensitive:
        gold = sorted(gold, key=_row_sort_key)
        pred = sorted(pred, key=_row_sort_key)
    return all(_rows_equal(g, p) for g, p in zip(gold, pred))


def has_top_level_order_by(sql: str) -> bool:
    """True when the query orders its outermost result."""
    depth = 0
    previous = ""
    for token in tokenize_sql(sql):
        if token == "(":
            depth += 1
        elif token == ")":
            depth = max(0, depth - 1)
        elif depth == 0 and previous == "order" and token.lower() == "by":
            return True
        previous = token.lower()
    return False


def _summarize(result) -> str:
    if result.ok:
        return f"{len(result.rows)} rows"
    return f"error: {result.error}"


def score_execution(
    traces,
    benchmark: Benchmark,
    db_root=None,
    timeout: float = 30.0,
    max_workers: int = 4,
) -> ExScore:
    """Execution accuracy of trace final SQL against gold SQL.

    Both queries run on the question's database. Gold execution errors
    exclude the question from the denominator with a report entry; a
    predicted error scores 0.
    """
    traces = list(traces)
    db_root = Path(db_root) if db_root is not None else Path(benchmark.db_root)

    def score_one(trace: PipelineTrace) -> PerQuestionExecution:
        question = benchmark.questions[trace.index]
        db_path = db_root / question.db_id / f"{question.db_id}.sqlite"
        if question.gold_sql is None:
            return PerQuestionExecution(
                trace.index, False, "no gold SQL", "", note="no gold SQL", skipped=True
            )
        gold_result = execute(question.gold_sql, db_path, timeout)
        if not gold_result.ok:
            return PerQuestionExecution(
                trace.index, False, _summarize(gold_result), "",
                note=f"gold execution error: {gold_result.error}", skipped=True,
            )
        pred_result = execute(trace.final_sql, db_path, timeout)
        if not pred_result.ok:
            return PerQuestionExecution(
                trace.index, False, _summarize(gold_result), _summarize(pred_result),
                note="predicted execution error",
            )
        match = compare_results(
            gold_result.rows, pred_result.rows, has_top_level_order_by(question.gold_sql)
        )
        return PerQuestionExecution(
            trace.index, match, _summarize(gold_result), _summarize(pred_result)
        )

    if max_workers > 1 and len(traces) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_question = list(pool.map(score_one, traces))
    else:
        per_question = [score_one(t) for t in traces]

    n_skipped = sum(p.skipped for p in per_question)
    n_scored = len(per_question) - n_skipped
    n_correct = sum(p.match for p in per_question)
    return ExScore(n_scored, n_correct, n_skipped, tuple(per_question))


def summary_dict(linking: LinkingScore | None, ex: ExScore | None) -> dict:
    """The JSON report summary: {re, rs, ex, n, skipped}."""
    n = ex.n_scored if ex is not None else (linking.n_scored if linking else 0)
    skipped = (linking.n_skipped if linking else 0) + (ex.n_skipped if ex else 0)
    return {
        "re": linking.re if linking else None,
        "rs": linking.rs if linking else None,
        "ex": ex.ex if ex else None,
        "n": n,
        "skipped": skipped,
    }


def write_report(
    report_path,
    detail_path,
    linking: LinkingScore | None = None,
    ex: ExScore | None = None,
) -> dict:
    """Write the JSON summary and the per-question JSONL detail."""
    summary = summary_dict(linking, ex)
    Path(report_path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    with Path(detail_path).open("w", encoding="utf-8") as out:
        details: dict[int, dict] = {}
        if linking:
            for p in linking.per_question:
                details.setdefault(p.index, {"index": p.index})["linking"] = {
                    "predicted": sorted(p.predicted),
                    "gold": sorted(p.gold) if p.gold is not None else None,
                    "exact": p.exact,
                    "subset": p.subset,
                    "skipped": p.skipped,
                }
        if ex:
            for p in ex.per_question:
                details.setdefault(p.index, {"index": p.index})["execution"] = {
                    "match": p.match,
                    "gold": p.gold_summary,
                    "predicted": p.predicted_summary,
                    "note": p.note,
                    "skipped": p.skipped,
                }
        for index in sorted(details):
            out.write(json.dumps(details[index], ensure_ascii=False) + "\n")
    return summary


def format_table(linking: LinkingScore | None = None, ex: ExScore | None = None) -> str:
    """Plain-text metric table for stdout."""
    lines = [f"{'metric':<8}{'value':>8}{'scored':>8}{'skipped':>9}"]
    if linking is not None:
        lines.append(f"{'Re':<8}{linking.re:>8.3f}{linking.n_scored:>8}{linking.n_skipped:>9}")
        lines.append(f"{'Rs':<8}{linking.rs:>8.3f}{linking.n_scored:>8}{linking.n_skipped:>9}")
    if ex is not None:
        lines.append(f"{'EX':<8}{ex.ex:>8.3f}{ex.n_scored:>8}{ex.n_skipped:>9}")
    return "\n".join(lines)
