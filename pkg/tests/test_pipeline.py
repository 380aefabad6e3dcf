from __future__ import annotations

import re

import pytest

from fixture_data import build_mock_fixture, make_schema

from linksql.backend import MockBackend, ModelEndpoint, RoutingConfig
from linksql.describe import SchemaDescription
from linksql.linking import LinkedTables, LinkingCase
from linksql.pipeline import (
    PipelineOptions,
    PipelineTrace,
    SqlAttempt,
    debug_once,
    execute,
    filter_foreign_keys,
    generate,
    run_pipeline,
    trace_from_dict,
    trace_to_dict,
)
from linksql.schema import DatabaseSchema, ForeignKeyInfo

ROUTING = RoutingConfig(
    linking=ModelEndpoint(name="link-ep", base_url="mock://", model_id="m"),
    admin=ModelEndpoint(name="admin-ep", base_url="mock://", model_id="m"),
    generation=ModelEndpoint(name="gen-ep", base_url="mock://", model_id="m"),
    debugging=ModelEndpoint(name="debug-ep", base_url="mock://", model_id="m"),
)


def fk_schema() -> DatabaseSchema:
    base = make_schema("a", "b", "c")
    return DatabaseSchema(
        db_id=base.db_id,
        tables=base.tables,
        foreign_keys=(
            ForeignKeyInfo("a", "x", "b", "x"),
            ForeignKeyInfo("a", "x", "c", "x"),
        ),
    )


def test_filter_foreign_keys_hand_enumerated():
    schema = fk_schema()
    kept = filter_foreign_keys(schema, {"a", "b"})
    assert kept == [ForeignKeyInfo("a", "x", "b", "x")]


def test_filter_foreign_keys_identity_and_empty():
    schema = fk_schema()
    assert filter_foreign_keys(schema, {"a", "b", "c"}) == list(schema.foreign_keys)
    assert filter_foreign_keys(schema, {"b"}) == []


def test_filter_foreign_keys_case_insensitive():
    schema = fk_schema()
    assert filter_foreign_keys(schema, {"A", "B"}) == [ForeignKeyInfo("a", "x", "b", "x")]


def test_execute_select_one(db_root):
    result = execute("SELECT 1", db_root / "pets" / "pets.sqlite")
    assert result.ok
    assert result.rows == ((1,),)


def test_execute_missing_table(db_root):
    result = execute("SELECT * FROM no_such_table", db_root / "pets" / "pets.sqlite")
    assert not result.ok
    assert "no such table" in result.error


def test_execute_fixture_rows_hand_computed(db_root):
    # oracle: the fixture INSERT statements
    db = db_root / "driving_school" / "driving_school.sqlite"
    city = execute(
        "SELECT T2.city FROM Staff AS T1 JOIN Address AS T2 "
        "ON T1.staff_address_id = T2.address_id WHERE T1.first_name = 'Ada'",
        db,
    )
    assert city.rows == (("Oslo",),)
    outstanding = execute(
        "SELECT first_name, last_name FROM Customers WHERE amount_outstanding > 100", db
    )
    assert outstanding.rows == (("Omar", "Reyes"),)
    average = execute(
        "SELECT avg(price) FROM Lessons WHERE lesson_status_code = 'Completed'", db
    )
    assert average.rows == ((220.0 / 3,),)


def test_execute_rejects_writes(db_root):
    db = db_root / "pets" / "pets.sqlite"
    result = execute("INSERT INTO pet VALUES (99, 'Evil', 'rat', 1.0)", db)
    assert not result.ok
    assert "readonly" in result.error
    # and the table is untouched
    assert execute("SELECT count(*) FROM pet", db).rows == ((4,),)


def test_execute_rejects_multiple_statements(db_root):
    result = execute("SELECT 1; SELECT 2;", db_root / "pets" / "pets.sqlite")
    assert not result.ok


def test_execute_empty_sql(db_root):
    result = execute("", db_root / "pets" / "pets.sqlite")
    assert not result.ok


def test_execute_timeout(db_root):
    runaway = (
        "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) "
        "SELECT count(*) FROM c"
    )
    result = execute(runaway, db_root / "pets" / "pets.sqlite", timeout=0.2)
    assert not result.ok
    assert "timed out" in result.error


def janessa_case(schemas) -> LinkingCase:
    return LinkingCase(
        schema=schemas["driving_school"],
        question="When did the staff member named Janessa Sawayn join the company?",
    )


def test_generate_takes_fenced_sql(schemas):
    backend = MockBackend(default="Here you go:\n```sql\nSELECT date_joined_staff FROM Staff\n```")
    attempt = generate(janessa_case(schemas), LinkedTables(tables=frozenset({"Staff"})),
                       None, ROUTING, backend)
    assert attempt.sql == "SELECT date_joined_staff FROM Staff"
    assert attempt.stage == "initial"
    assert attempt.execution is None
    assert backend.calls[0][0] == "gen-ep"


def test_generate_no_sql_found(schemas):
    backend = MockBackend(default="I am not sure how to help with that.")
    attempt = generate(janessa_case(schemas), LinkedTables(tables=frozenset({"Staff"})),
                       None, ROUTING, backend)
    assert attempt.sql == ""
    assert attempt.no_sql_found


def test_generate_prompt_uses_linked_subset_and_filtered_fks(schemas):
    backend = MockBackend(default="```sql\nSELECT 1\n```")
    linked = LinkedTables(tables=frozenset({"Staff", "Address"}))
    generate(janessa_case(schemas), linked, None, ROUTING, backend)
    prompt = backend.calls[0][1]
    assert 'CREATE TABLE "Staff"' in prompt and 'CREATE TABLE "Address"' in prompt
    assert 'CREATE TABLE "Lessons"' not in prompt
    # K' keeps only FKs inside the linked set
    assert "Staff.staff_address_id = Address.address_id" in prompt
    assert "Lessons.customer_id" not in prompt


def test_generate_includes_descriptions_when_present(schemas):
    backend = MockBackend(default="```sql\nSELECT 1\n```")
    description = SchemaDescription(per_column={}, raw_text="Staff.staff_id: who teaches")
    generate(janessa_case(schemas), LinkedTables(tables=frozenset({"Staff"})),
             description, ROUTING, backend)
    assert "### Schema descriptions" in backend.calls[0][1]
    assert "Staff.staff_id: who teaches" in backend.calls[0][1]

    backend2 = MockBackend(default="```sql\nSELECT 1\n```")
    generate(janessa_case(schemas), LinkedTables(tables=frozenset({"Staff"})),
             SchemaDescription.absent(), ROUTING, backend2)
    assert "### Schema descriptions" not in backend2.calls[0][1]


def failed_attempt(sql="SELECT nme FROM Staff", message="no such column: nme") -> SqlAttempt:
    from linksql.pipeline import ExecutionResult

    return SqlAttempt(sql=sql, stage="initial", execution=ExecutionResult.failure(message))


def test_debug_once_returns_corrected_sql(schemas):
    backend = MockBackend(default="```sql\nSELECT name FROM Staff\n```")
    attempt = debug_once(failed_attempt(), janessa_case(schemas),
                         LinkedTables(tables=frozenset({"Staff"})), None, ROUTING, backend)
    assert attempt.sql == "SELECT name FROM Staff"
    assert attempt.stage == "debugged"
    assert backend.calls[0][0] == "debug-ep"


def test_debug_once_requires_failed_prior(schemas):
    from linksql.pipeline import ExecutionResult

    ok_attempt = SqlAttempt(sql="SELECT 1", stage="initial",
                            execution=ExecutionResult.success([(1,)]))
    with pytest.raises(AssertionError):
        debug_once(ok_attempt, janessa_case(schemas),
                   LinkedTables(tables=frozenset({"Staff"})), None, ROUTING,
                   MockBackend(default="x"))


def test_debug_once_keeps_prior_sql_when_no_extraction(schemas):
    backend = MockBackend(default="cannot fix, sorry")
    prior = failed_attempt()
    attempt = debug_once(prior, janessa_case(schemas),
                         LinkedTables(tables=frozenset({"Staff"})), None, ROUTING, backend)
    assert attempt.sql == prior.sql
    assert attempt.no_sql_found


def test_debug_prompt_carries_unfiltered_fks(schemas):
    backend = MockBackend(default="```sql\nSELECT 1\n```")
    linked = LinkedTables(tables=frozenset({"Staff"}))
    debug_once(failed_attempt(), janessa_case(schemas), linked, None, ROUTING, backend)
    prompt = backend.calls[0][1]
    # full K: includes endpoints outside the linked set
    assert "Lessons.customer_id = Customers.customer_id" in prompt
    assert "no such column: nme" in prompt

    backend2 = MockBackend(default="```sql\nSELECT 1\n```")
    debug_once(failed_attempt(), janessa_case(schemas), linked, None, ROUTING, backend2,
               filtered_fks=True)
    assert "Lessons.customer_id" not in backend2.calls[0][1]


def run_fixture_question(benchmark, schemas, db_root, index, backend, **option_kwargs):
    question = benchmark.questions[index]
    options = PipelineOptions(num_shuffles=2, rng_seed=0, **option_kwargs)
    return run_pipeline(
        question,
        schemas[question.db_id],
        db_root / question.db_id / f"{question.db_id}.sqlite",
        ROUTING,
        backend,
        options,
    )


def test_run_pipeline_happy_path(benchmark, schemas, db_root):
    backend = MockBackend.from_fixture(build_mock_fixture())
    trace = run_fixture_question(benchmark, schemas, db_root, 0, backend)
    assert len(trace.attempts) == 1
    assert trace.attempts[0].execution.ok
    assert trace.attempts[0].execution.rows == (("2017-04-07",),)
    assert trace.final_sql == trace.attempts[0].sql
    assert trace.linked.tables == {"Staff"}
    assert not trace.errors
    assert set(trace.timings) >= {"linking", "admin", "generation", "execution"}


def test_run_pipeline_routes_components_to_their_endpoints(benchmark, schemas, db_root):
    backend = MockBackend.from_fixture(build_mock_fixture())
    run_fixture_question(benchmark, schemas, db_root, 0, backend)
    endpoints = [name for name, _ in backend.calls]
    assert endpoints == ["link-ep", "link-ep", "admin-ep", "gen-ep"]


def test_run_pipeline_error_then_fixed(benchmark, schemas, db_root):
    fixture = build_mock_fixture()
    # make generation answer with a broken query; debugging still answers gold
    question = benchmark.questions[14].question  # how many pets
    patterns = [
        {"pattern": f"(?s)### Optimization rules.*{re.escape(question)}",
         "response": "```sql\nSELECT count(*) FROM pets_typo\n```"},
    ] + fixture["patterns"]
    backend = MockBackend.from_fixture({"patterns": patterns})
    trace = run_fixture_question(benchmark, schemas, db_root, 14, backend)
    assert len(trace.attempts) == 2
    assert not trace.attempts[0].execution.ok
    assert trace.attempts[0].stage == "initial"
    assert trace.attempts[1].stage == "debugged"
    assert trace.attempts[1].execution.ok
    assert trace.attempts[1].execution.rows == ((4,),)
    assert trace.final_sql == "SELECT count(*) FROM pet"


def test_run_pipeline_error_then_error(benchmark, schemas, db_root):
    fixture = build_mock_fixture()
    question = benchmark.questions[14].question
    patterns = [
        {"pattern": f"(?s)### Optimization rules.*{re.escape(question)}",
         "response": "```sql\nSELECT count(*) FROM pets_typo\n```"},
        {"pattern": f"(?s)### Failed SQL.*{re.escape(question)}",
         "response": "```sql\nSELECT count(*) FROM still_wrong\n```"},
    ] + fixture["patterns"]
    backend = MockBackend.from_fixture({"patterns": patterns})
    trace = run_fixture_question(benchmark, schemas, db_root, 14, backend)
    assert len(trace.attempts) == 2
    assert not trace.attempts[0].execution.ok
    assert not trace.attempts[1].execution.ok
    assert trace.final_sql == "SELECT count(*) FROM still_wrong"


def test_run_pipeline_no_debugging_caps_attempts(benchmark, schemas, db_root):
    fixture = build_mock_fixture()
    question = benchmark.questions[14].question
    patterns = [
        {"pattern": f"(?s)### Optimization rules.*{re.escape(question)}",
         "response": "```sql\nSELECT count(*) FROM pets_typo\n```"},
    ] + fixture["patterns"]
    backend = MockBackend.from_fixture({"patterns": patterns})
    trace = run_fixture_question(benchmark, schemas, db_root, 14, backend, no_debugging=True)
    assert len(trace.attempts) == 1
    assert not trace.attempts[0].execution.ok
    assert all(name != "debug-ep" for name, _ in backend.calls)


def test_run_pipeline_no_linking_uses_full_schema(benchmark, schemas, db_root):
    backend = MockBackend.from_fixture(build_mock_fixture())
    trace = run_fixture_question(benchmark, schemas, db_root, 0, backend, no_linking=True)
    assert trace.linked.tables == set(schemas["driving_school"].table_names())
    assert trace.linked.fallback_full_schema
    assert all(name != "link-ep" for name, _ in backend.calls)


def test_run_pipeline_no_admin_drops_descriptions(benchmark, schemas, db_root):
    backend = MockBackend.from_fixture(build_mock_fixture())
    trace = run_fixture_question(benchmark, schemas, db_root, 0, backend, no_admin=True)
    assert trace.description is None
    generation_prompts = [p for name, p in backend.calls if name == "gen-ep"]
    assert generation_prompts and all("### Schema descriptions" not in p for p in generation_prompts)
    assert all(name != "admin-ep" for name, _ in backend.calls)


def test_run_pipeline_survives_stage_transport_failures(benchmark, schemas, db_root):
    # every call fails: trace still produced, linking falls back to full schema
    backend = MockBackend(script=[{"error": "down"}] * 10)
    trace = run_fixture_question(benchmark, schemas, db_root, 14, backend, no_debugging=True)
    assert trace.linked.fallback_full_schema
    assert trace.attempts[0].sql == ""
    assert not trace.attempts[0].execution.ok
    assert trace.errors  # linking + describe + generation failures recorded


def test_trace_invariants_enforced():
    from linksql.pipeline import ExecutionResult

    ok = SqlAttempt(sql="SELECT 1", stage="initial", execution=ExecutionResult.success([(1,)]))
    bad = SqlAttempt(sql="SELECT x", stage="debugged", execution=ExecutionResult.failure("e"))
    linked = LinkedTables(tables=frozenset({"pet"}))
    with pytest.raises(ValueError):
        PipelineTrace(0, "pets", "q", linked, None, [ok, bad], final_sql="SELECT x")
    with pytest.raises(ValueError):
        PipelineTrace(0, "pets", "q", linked, None, [ok], final_sql="something else")
    with pytest.raises(ValueError):
        PipelineTrace(0, "pets", "q", linked, None, [], final_sql="")


def test_trace_round_trips_through_json(benchmark, schemas, db_root):
    backend = MockBackend.from_fixture(build_mock_fixture())
    trace = run_fixture_question(benchmark, schemas, db_root, 3, backend)
    restored = trace_from_dict(trace_to_dict(trace))
    assert restored.index == trace.index
    assert restored.final_sql == trace.final_sql
    assert restored.linked.tables == trace.linked.tables
    assert [a.sql for a in restored.attempts] == [a.sql for a in trace.attempts]
    assert restored.attempts[0].execution.rows == trace.attempts[0].execution.rows
