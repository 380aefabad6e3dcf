"""Command-line entry points.

Subcommands: extract (render one database's schema), run (end-to-end
pipeline over a split), link (linking only), export-sft (training data),
score (metrics from saved traces), crosscheck (tables.json vs database
files). Exit codes: 0 success, 1 completed with per-question failures,
2 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

from . import evaluation, linking, pipeline
from .backend import HttpBackend, MockBackend
from .config import load_run_config, mock_routing
from .dataset import annotate_gold_tables, crosscheck_tables_json, load_split
from .errors import ConfigError, LinksqlError
from .schema import introspect, render_schema

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2


@dataclass(frozen=True)
class RunOptions:
    config_path: Path | None
    mock_path: Path | None
    split_path: Path
    db_root: Path
    out_dir: Path
    num_shuffles: int = linking.DEFAULT_NUM_SHUFFLES
    rng_seed: int = 0
    no_linking: bool = False
    no_admin: bool = False
    no_debugging: bool = False
    jobs: int = 4
    index_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.num_shuffles < 1:
            raise ConfigError("--shuffles must be >= 1")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")


def _parse_range(text: str) -> tuple[int, int]:
    try:
        start, _, stop = text.partition("..")
        return int(start), int(stop)
    except ValueError as exc:
        raise ConfigError(f"--range must look like A..B, got {text!r}") from exc


def _make_backend_and_routing(config_path, mock_path):
    if mock_path is not None:
        fixture = json.loads(Path(mock_path).read_text(encoding="utf-8"))
        backend = MockBackend.from_fixture(fixture)
    else:
        backend = HttpBackend()
    if config_path is not None:
        run_config = load_run_config(config_path)
        return backend, run_config.routing, run_config.defaults
    if mock_path is None:
        raise ConfigError("either --config or --mock is required")
    return backend, mock_routing(), {}


def _load_annotated(split_path, db_root):
    benchmark = load_split(split_path, db_root)
    schemas = {}
    for q in benchmark.questions:
        if q.db_id not in schemas:
            schemas[q.db_id] = introspect(benchmark.db_path(q.db_id))
    benchmark, skipped = annotate_gold_tables(benchmark, schemas)
    if skipped:
        logger.warning("gold tables unavailable for %d questions", len(skipped))
    return benchmark, schemas


def cmd_extract(args) -> int:
    print(render_schema(introspect(args.db_path)))
    return EXIT_OK


def cmd_run(args) -> int:
    options = RunOptions(
        config_path=args.config,
        mock_path=args.mock,
        split_path=args.split,
        db_root=args.db_root,
        out_dir=args.out,
        num_shuffles=args.shuffles,
        rng_seed=args.seed,
        no_linking=args.no_linking,
        no_admin=args.no_admin,
        no_debugging=args.no_debugging,
        jobs=args.jobs,
        index_range=_parse_range(args.range) if args.range else None,
    )
    backend, routing, defaults = _make_backend_and_routing(options.config_path, options.mock_path)
    benchmark, schemas = _load_annotated(options.split_path, options.db_root)

    indices = range(len(benchmark.questions))
    if options.index_range is not None:
        start, stop = options.index_range
        if not (0 <= start <= stop <= len(benchmark.questions)):
            raise ConfigError(
                f"--range {start}..{stop} outside split bounds 0..{len(benchmark.questions)}"
            )
        indices = range(start, stop)

    options.out_dir.mkdir(parents=True, exist_ok=True)
    traces_path = options.out_dir / "traces.jsonl"
    done: set[int] = set()
    existing: list[pipeline.PipelineTrace] = []
    if traces_path.exists():
        for line in traces_path.read_text(encoding="utf-8").splitlines():
            trace = pipeline.trace_from_dict(json.loads(line))
            done.add(trace.index)
            existing.append(trace)
        if done:
            logger.info("resuming: %d traces already present", len(done))

    pipe_options = pipeline.PipelineOptions(
        num_shuffles=options.num_shuffles,
        rng_seed=options.rng_seed,
        no_linking=options.no_linking,
        no_admin=options.no_admin,
        no_debugging=options.no_debugging,
        execution_timeout=float(defaults.get("execution_timeout", 30.0)),
    )
    todo = [i for i in indices if i not in done]
    new_traces: dict[int, pipeline.PipelineTrace] = {}

    def run_one(index: int) -> pipeline.PipelineTrace:
        question = benchmark.questions[index]
        return pipeline.run_pipeline(
            question,
            schemas[question.db_id],
            benchmark.db_path(question.db_id),
            routing,
            backend,
            pipe_options,
        )

    worker_failures = 0
    failed_indices: set[int] = set()
    with traces_path.open("a", encoding="utf-8") as out:
        order = sorted(todo)
        position = 0
        with ThreadPoolExecutor(max_workers=options.jobs) as pool:
            futures = {pool.submit(run_one, i): i for i in todo}
            for future in as_completed(futures):
                index = futures[future]
                try:
                    trace = future.result()
                    new_traces[trace.index] = trace
                except Exception as exc:  # per-question errors never abort the run
                    logger.error("question %d failed: %s", index, exc)
                    worker_failures += 1
                    failed_indices.add(index)
                # single writer, index order; failed indices are skipped over
                while position < len(order) and (
                    order[position] in new_traces or order[position] in failed_indices
                ):
                    if order[position] in new_traces:
                        out.write(json.dumps(pipeline.trace_to_dict(new_traces[order[position]]),
                                             ensure_ascii=False) + "\n")
                        out.flush()
                    position += 1

    all_traces = sorted(existing + list(new_traces.values()), key=lambda t: t.index)
    linking_score, ex_score = _score_traces(all_traces, benchmark)
    evaluation.write_report(
        options.out_dir / "report.json",
        options.out_dir / "report_detail.jsonl",
        linking_score,
        ex_score,
    )
    print(evaluation.format_table(linking_score, ex_score))
    failures = worker_failures + sum(1 for t in all_traces if t.errors)
    return EXIT_FAILURES if failures else EXIT_OK


def _score_traces(traces, benchmark):
    scoreable = [t for t in traces if benchmark.questions[t.index].gold_tables is not None]
    linking_score = None
    if scoreable:
        linking_score = evaluation.score_linking(
            [(t.index, t.linked.tables) for t in scoreable], benchmark
        )
    with_gold_sql = [t for t in traces if benchmark.questions[t.index].gold_sql is not None]
    ex_score = evaluation.score_execution(with_gold_sql, benchmark) if with_gold_sql else None
    return linking_score, ex_score


def cmd_link(args) -> int:
    backend, routing, _ = _make_backend_and_routing(args.config, args.mock)
    benchmark, schemas = _load_annotated(args.split, args.db_root)

    def link_one(question):
        case = linking.LinkingCase(
            schema=schemas[question.db_id],
            question=question.question,
            gold_tables=question.gold_tables,
        )
        linked = linking.link(
            case, routing.linking, backend, num_shuffles=args.shuffles, rng_seed=args.seed
        )
        return question.index, linked

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = dict(pool.map(link_one, benchmark.questions))

    with Path(args.out).open("w", encoding="utf-8") as out:
        for index in sorted(results):
            out.write(json.dumps({"index": index, "tables": sorted(results[index].tables)}) + "\n")
    score = evaluation.score_linking(
        [(i, results[i].tables) for i in sorted(results)], benchmark
    )
    print(evaluation.format_table(linking=score))
    return EXIT_OK


def cmd_export_sft(args) -> int:
    benchmark, schemas = _load_annotated(args.split, args.db_root)
    count = linking.export_sft_dataset(benchmark, args.out, schemas)
    print(f"wrote {count} records to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    benchmark, _ = _load_annotated(args.split, args.db_root)
    traces = []
    for line in Path(args.traces).read_text(encoding="utf-8").splitlines():
        traces.append(pipeline.trace_from_dict(json.loads(line)))
    linking_score, ex_score = _score_traces(traces, benchmark)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        evaluation.write_report(
            args.out / "report.json", args.out / "report_detail.jsonl", linking_score, ex_score
        )
    print(evaluation.format_table(linking_score, ex_score))
    anomalies = (ex_score.n_skipped if ex_score else 0) + (
        linking_score.n_skipped if linking_score else 0
    )
    return EXIT_FAILURES if anomalies else EXIT_OK


def cmd_crosscheck(args) -> int:
    schemas = {}
    for db_dir in sorted(Path(args.db_root).iterdir()):
        db_file = db_dir / f"{db_dir.name}.sqlite"
        if db_file.is_file():
            schemas[db_dir.name] = introspect(db_file)
    warnings = crosscheck_tables_json(args.tables_json, schemas)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"{len(warnings)} mismatches across {len(schemas)} databases")
    return EXIT_FAILURES if warnings else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linksql", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="print the rendered schema of one database")
    p.add_argument("db_path", type=Path)
    p.set_defaults(func=cmd_extract)

    def add_backend_flags(p):
        p.add_argument("--config", type=Path, help="run configuration JSON")
        p.add_argument("--mock", type=Path, help="mock backend fixture JSON")

    def add_split_flags(p):
        p.add_argument("--split", type=Path, required=True, help="question file (JSON array)")
        p.add_argument("--db-root", type=Path, required=True, help="directory of per-db folders")

    p = sub.add_parser("run", help="run the full pipeline over a split")
    add_backend_flags(p)
    add_split_flags(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--shuffles", type=int, default=linking.DEFAULT_NUM_SHUFFLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-linking", action="store_true")
    p.add_argument("--no-admin", action="store_true")
    p.add_argument("--no-debugging", action="store_true")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--range", help="question index range A..B (B exclusive)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("link", help="run schema linking only")
    add_backend_flags(p)
    add_split_flags(p)
    p.add_argument("--out", type=Path, required=True, help="predictions JSONL path")
    p.add_argument("--shuffles", type=int, default=linking.DEFAULT_NUM_SHUFFLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("export-sft", help="export linking training data as JSONL")
    add_split_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_sft)

    p = sub.add_parser("score", help="score saved traces against a split")
    add_split_flags(p)
    p.add_argument("--traces", type=Path, required=True)
    p.add_argument("--out", type=Path, help="optional report output directory")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("crosscheck", help="compare a tables.json against the database files")
    p.add_argument("--tables-json", type=Path, required=True)
    p.add_argument("--db-root", type=Path, required=True)
    p.set_defaults(func=cmd_crosscheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LinksqlError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
