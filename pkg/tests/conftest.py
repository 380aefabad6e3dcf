from __future__ import annotations

from pathlib import Path

import pytest

from fixture_data import QUESTIONS, build_mock_fixture, create_databases, write_split

from linksql.backend import MockBackend
from linksql.dataset import annotate_gold_tables, load_split
from linksql.schema import introspect

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="rewrite golden snapshot files instead of asserting against them",
    )


@pytest.fixture(scope="session")
def update_golden(request):
    return request.config.getoption("--update-golden")


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR


@pytest.fixture
def check_golden(update_golden, golden_dir):
    """Compare text against a committed snapshot, or rewrite it."""

    def check(name: str, text: str):
        path = golden_dir / name
        if update_golden:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            pytest.skip(f"golden file {name} rewritten")
        assert path.exists(), f"golden file {name} missing; run pytest --update-golden"
        assert text == path.read_text(encoding="utf-8"), f"output drifted from golden/{name}"

    return check


@pytest.fixture(scope="session")
def db_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("dbs")
    create_databases(root)
    return root


@pytest.fixture(scope="session")
def split_path(tmp_path_factory, db_root) -> Path:
    return write_split(tmp_path_factory.mktemp("splits") / "fixture_dev.json")


@pytest.fixture(scope="session")
def schemas(db_root):
    return {
        db_id: introspect(db_root / db_id / f"{db_id}.sqlite")
        for db_id in ("driving_school", "college", "pets")
    }


@pytest.fixture(scope="session")
def benchmark(split_path, db_root, schemas):
    bench, skipped = annotate_gold_tables(load_split(split_path, db_root), schemas)
    assert not skipped
    return bench


@pytest.fixture
def mock_backend():
    return MockBackend.from_fixture(build_mock_fixture())


@pytest.fixture(scope="session")
def question_rows():
    return QUESTIONS
