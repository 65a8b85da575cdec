from __future__ import annotations

import pytest

from diel.compiler import compile_program
from diel.corpus import Example, load_examples, run_example
from diel.errors import MissingExampleError
from diel.parser import parse_diel
from diel.planner import base_schemas_of

EXAMPLES = load_examples()


def test_corpus_has_at_least_twelve_programs():
    assert len(EXAMPLES) >= 12


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_example_parses_and_compiles(name):
    example = EXAMPLES[name]
    statements = parse_diel("\n".join(example.diel_sources()))
    assert statements
    descriptors = []
    from diel.planner import DbDescriptor

    for db in example.databases():
        descriptors.append(
            DbDescriptor(db.name, db.kind, {t: cols for t, (cols, _r) in db.tables.items()}, {})
        )
    catalog = compile_program(statements, base_schemas_of(descriptors))
    assert any(r.kind.value == "Output" for r in catalog.relations.values())


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_golden_log_replays_bit_identically(name):
    example = EXAMPLES[name]
    session = run_example(example)
    assert session.output_log_text() == example.golden_text()


def test_missing_dataset_is_reported_by_name(tmp_path):
    manifest = {
        "name": "broken",
        "diel": ["program.diel"],
        "trace": "trace.jsonl",
        "databases": [
            {"name": "main", "kind": "quick",
             "tables": [{"table": "ghost", "csv": "data/ghost.csv"}]}
        ],
        "seed": 1,
    }
    directory = tmp_path / "broken"
    directory.mkdir()
    (directory / "program.diel").write_text("CREATE EVENT TABLE e(x INT);")
    (directory / "trace.jsonl").write_text("")
    example = Example("broken", directory, manifest)
    with pytest.raises(MissingExampleError) as exc_info:
        example.databases()
    assert "ghost.csv" in str(exc_info.value)


def test_trace_events_name_declared_event_tables():
    from diel.compiler import RelationKind
    from diel.planner import DbDescriptor

    for name, example in EXAMPLES.items():
        descriptors = [
            DbDescriptor(db.name, db.kind, {t: cols for t, (cols, _r) in db.tables.items()}, {})
            for db in example.databases()
        ]
        catalog = compile_program(
            parse_diel("\n".join(example.diel_sources())), base_schemas_of(descriptors)
        )
        for entry in example.trace():
            rel = catalog.relations[entry.event]
            assert rel.kind is RelationKind.EVENT_TABLE, (name, entry.event)
            assert set(entry.payload) == {c.name for c in rel.columns}, (name, entry.event)


def test_connect_templates_materializes_the_shared_view():
    session = run_example(EXAMPLES["connect_templates"])
    assert "filteredFlights" in session.mat_plan.tables


def test_undo_example_documents_the_formula_choice():
    readme = (EXAMPLES["undo"].directory / "README.md").read_text()
    assert "(A, B, C, B, A)" in readme
    assert "(A, B, C, B, C)" in readme


def test_manifest_fields_are_complete():
    for example in EXAMPLES.values():
        assert example.manifest["diel"]
        assert example.manifest["trace"]
        assert isinstance(example.manifest.get("seed"), int)
        kinds = [db["kind"] for db in example.manifest["databases"]]
        assert kinds.count("quick") == 1
