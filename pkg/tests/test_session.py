from __future__ import annotations

import pytest

from diel.errors import ConfigError, TraceParseError
from diel.session import (
    DbConfig,
    RunConfig,
    Session,
    TraceEntry,
    parse_db_flag,
    parse_trace,
)

from conftest import FLIGHT_COLUMNS
from listing_texts import SLIDER

FLIGHT_ROWS = [
    ("LAX", "JFK", 1998, 5, 2475),
    ("SFO", "ORD", 2000, 0, 1846),
    ("JFK", "LAX", 2000, 30, 2475),
]

TRACE = [
    TraceEntry(0, "slideItx", {"flight_year": 1998}),
    TraceEntry(100, "slideItx", {"flight_year": 2000}),
]


def slider_config(**kwargs):
    return RunConfig(
        diel_sources=[SLIDER],
        databases=[DbConfig("main", "quick", tables={"flights": (FLIGHT_COLUMNS, FLIGHT_ROWS)})],
        seed=5,
        **kwargs,
    )


def test_parse_db_flag_forms():
    db = parse_db_flag("r1=remote:flights.db:fixed(20)")
    assert (db.name, db.kind, db.path, db.latency) == ("r1", "remote", "flights.db", "fixed(20)")
    db = parse_db_flag("main=quick:mem")
    assert db.path == "mem"
    with pytest.raises(ConfigError):
        parse_db_flag("nokind")
    with pytest.raises(ConfigError):
        parse_db_flag("x=warp:path")


def test_exactly_one_quick_database_required():
    config = RunConfig(
        diel_sources=[SLIDER],
        databases=[DbConfig("a", "remote", tables={"flights": (FLIGHT_COLUMNS, FLIGHT_ROWS)})],
        seed=1,
    )
    with pytest.raises(ConfigError):
        Session.build(config)


def test_trace_parsing_accepts_comments_and_blank_lines():
    entries = parse_trace(
        '# warmup\n\n{"at_ms": 5, "event": "e", "payload": {"x": 1}}\n'
        '{"at_ms": 5, "event": "e", "payload": {}}\n'
    )
    assert [e.at_ms for e in entries] == [5, 5]


def test_trace_rejects_decreasing_time_and_bad_json():
    with pytest.raises(TraceParseError):
        parse_trace('{"at_ms": 5, "event": "e", "payload": {}}\n{"at_ms": 4, "event": "e", "payload": {}}')
    with pytest.raises(TraceParseError):
        parse_trace("{nope}")
    with pytest.raises(TraceParseError):
        parse_trace('{"at_ms": 5, "event": "e"}')


def test_replay_requires_seed():
    config = slider_config()
    config.seed = None
    session = Session.build(config)
    with pytest.raises(ConfigError):
        session.run_replay(TRACE)


def test_replay_is_byte_deterministic():
    logs = []
    for _ in range(2):
        session = Session.build(slider_config())
        session.run_replay(TRACE)
        logs.append(session.output_log_text())
    assert logs[0] == logs[1]


def test_repl_style_calls_equal_replay():
    replayed = Session.build(slider_config())
    replayed.run_replay(TRACE)

    manual = Session.build(slider_config())
    for entry in TRACE:
        manual.deliver_due(entry.at_ms)
        manual.runtime.new_event(entry.event, entry.payload, at_ms=entry.at_ms)
        manual.runtime.drain_inbox()
    manual.run_quiescent()
    assert manual.output_log_text() == replayed.output_log_text()


def test_write_outputs_creates_log_and_summary(tmp_path):
    session = Session.build(slider_config())
    session.run_replay(TRACE)
    log_path, summary_path = session.write_outputs(tmp_path / "out")
    assert log_path.read_text().count("\n") == len(session.runtime.frames)
    assert '"events": 2' in summary_path.read_text()


def test_background_worker_instance_defaults_to_one_ms():
    config = RunConfig(
        diel_sources=[SLIDER],
        databases=[
            DbConfig("main", "quick"),
            DbConfig("w1", "background", tables={"flights": (FLIGHT_COLUMNS, FLIGHT_ROWS)}),
        ],
        seed=4,
    )
    session = Session.build(config)
    session.run_replay(TRACE)
    messages = session.runtime.federation.transport.log
    assert all(m.deliver_ms - m.send_ms == 1 for m in messages)
    final = session.runtime.frames[-1]
    assert sorted(final.rows) == [("JFK", 1), ("SFO", 1)]


def test_custom_udf_registered_on_every_instance():
    from diel.udfs import UdfDef

    config = RunConfig(
        diel_sources=[
            "CREATE EVENT TABLE pick(v INT);"
            "CREATE OUTPUT doubled AS SELECT twice(v) AS w FROM LATEST pick;"
        ],
        databases=[DbConfig("main", "quick")],
        seed=1,
        udfs={"twice": UdfDef("twice", 1, lambda v: v * 2)},
    )
    session = Session.build(config)
    session.run_replay([TraceEntry(0, "pick", {"v": 21})])
    assert session.runtime.frames[-1].rows == ((42,),)


def test_sqlite_file_backed_database_loads_tables(tmp_path):
    from diel.engine import import_csv

    csv_file = tmp_path / "flights.csv"
    csv_file.write_text(
        "origin:TEXT,destination:TEXT,flight_year:INT,delay:INT,distance:INT\n"
        "SFO,ORD,2000,0,1846\nJFK,LAX,2000,30,2475\n"
    )
    db_file = tmp_path / "flights.db"
    import_csv(csv_file, "flights", db_file)
    config = RunConfig(
        diel_sources=[SLIDER],
        databases=[
            DbConfig("main", "quick"),
            DbConfig("r1", "remote", path=str(db_file), latency="fixed(0)"),
        ],
        seed=2,
    )
    session = Session.build(config)
    session.run_replay([TraceEntry(0, "slideItx", {"flight_year": 2000})])
    final = session.runtime.frames[-1]
    assert sorted(final.rows) == [("JFK", 1), ("SFO", 1)]


def test_csv_backed_database_loads_table(tmp_path):
    csv_file = tmp_path / "flights.csv"
    csv_file.write_text(
        "origin:TEXT,destination:TEXT,flight_year:INT,delay:INT,distance:INT\n"
        "LAX,JFK,1998,5,2475\n"
    )
    config = RunConfig(
        diel_sources=[SLIDER],
        databases=[DbConfig("main", "quick", path=str(csv_file))],
        seed=1,
    )
    session = Session.build(config)
    session.run_replay([TraceEntry(0, "slideItx", {"flight_year": 1998})])
    assert session.runtime.frames[-1].rows == (("LAX", 1),)
