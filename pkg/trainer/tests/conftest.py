from __future__ import annotations

import json

import pytest

TARGETS = ["a", "b", "a, b", "a", "b", "a, b", "a", "b"]


def toy_records():
    records = []
    for i, target in enumerate(TARGETS):
        prompt = (
            "### Candidate table schemas "
            'CREATE TABLE "a" ( "x" INTEGER ); CREATE TABLE "b" ( "y" INTEGER ); '
            f"### Question q{i} ? ### Needed schema names"
        )
        records.append({"prompt": prompt, "target": target})
    return records


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in toy_records()), encoding="utf-8")
    return path
