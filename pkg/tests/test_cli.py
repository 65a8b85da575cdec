from __future__ import annotations

import builtins
import json
from pathlib import Path

from diel.cli import main
from diel.render import format_bars, format_table, is_bar_shaped, render_frame_text

CORPUS = Path(__file__).parent.parent / "src" / "diel" / "corpus"


def slider_args(tmp_path, *extra):
    return [
        "run",
        "--diel", str(CORPUS / "examples" / "slider" / "program.diel"),
        "--db", f"main=quick:{CORPUS / 'data' / 'flights.csv'}",
        "--trace", str(CORPUS / "examples" / "slider" / "trace.jsonl"),
        "--seed", "7",
        "--out", str(tmp_path / "out"),
        *extra,
    ]


def test_run_replay_writes_log_and_summary(tmp_path, capsys):
    assert main(slider_args(tmp_path)) == 0
    log = (tmp_path / "out" / "output_log.jsonl").read_text()
    assert log.count("\n") == 3
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["events"] == 3 and summary["frames"] == 3


def test_empty_trace_yields_zero_frames_and_exit_zero(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    args = slider_args(tmp_path)
    args[args.index("--trace") + 1] = str(empty)
    assert main(args) == 0
    assert (tmp_path / "out" / "output_log.jsonl").read_text() == ""
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["events"] == 0 and summary["frames"] == 0


def test_run_twice_is_byte_identical(tmp_path):
    assert main(slider_args(tmp_path / "a")) == 0
    assert main(slider_args(tmp_path / "b")) == 0
    first = (tmp_path / "a" / "out" / "output_log.jsonl").read_bytes()
    second = (tmp_path / "b" / "out" / "output_log.jsonl").read_bytes()
    assert first == second


def test_dump_flags_print_ir_and_plan(tmp_path, capsys):
    code = main(slider_args(tmp_path, "--dump-ir", "--dump-plan"))
    assert code == 0
    out = capsys.readouterr().out
    assert "slideItx [EventTable]" in out
    assert "== placement ==" in out


def test_trace_without_seed_is_a_config_error(tmp_path, capsys):
    args = slider_args(tmp_path)
    seed_at = args.index("--seed")
    del args[seed_at : seed_at + 2]
    assert main(args) == 2
    assert "seed" in capsys.readouterr().err


def test_bad_db_flag_is_a_config_error(tmp_path, capsys):
    args = slider_args(tmp_path)
    db_at = args.index("--db")
    args[db_at + 1] = "main=warp:mem"
    assert main(args) == 2


def test_strict_mode_fails_on_diagnostics(tmp_path):
    args = [
        "run",
        "--diel", str(CORPUS / "examples" / "reconfigure_sample" / "program.diel"),
        "--db", f"main=quick:{CORPUS / 'data' / 'flights.csv'}",
        "--trace", str(CORPUS / "examples" / "reconfigure_sample" / "trace.jsonl"),
        "--seed", "7",
        "--out", str(tmp_path / "out"),
        "--strict",
    ]
    assert main(args) == 1  # the trace contains a CHECK-violating event


def test_import_subcommand(tmp_path, capsys):
    csv_file = tmp_path / "mini.csv"
    csv_file.write_text("a:INT,b:TEXT\n1,x\n2,y\n")
    db_file = tmp_path / "mini.db"
    assert main(["import", str(csv_file), "--table", "mini", "--db", str(db_file)]) == 0
    assert "imported 2 rows" in capsys.readouterr().out
    assert db_file.exists()


def test_examples_list_and_run(tmp_path, capsys):
    assert main(["examples", "--list"]) == 0
    assert "slider" in capsys.readouterr().out
    assert main(["examples", "--run", "undo", "--out", str(tmp_path / "out")]) == 0
    log = (tmp_path / "out" / "output_log.jsonl").read_text()
    golden = (CORPUS / "examples" / "undo" / "golden.jsonl").read_text()
    assert log == golden


def test_examples_unknown_name(capsys):
    assert main(["examples", "--run", "no_such_example"]) == 2
    assert "no_such_example" in capsys.readouterr().err


def test_repl_session_survives_bad_input(tmp_path, capsys, monkeypatch):
    lines = iter([
        "event slideItx {\"flight_year\": 1998}",
        "event slideItx {bad json",
        "event mystery {}",
        "show distData",
        "show unknownOut",
        "nonsense",
        "log",
        "quit",
    ])
    monkeypatch.setattr(builtins, "input", lambda prompt="": next(lines))
    args = [
        "run",
        "--diel", str(CORPUS / "examples" / "slider" / "program.diel"),
        "--db", f"main=quick:{CORPUS / 'data' / 'flights.csv'}",
        "--interactive", "--seed", "1",
    ]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "distData @ timestep 1" in out
    assert "bad payload JSON" in out
    assert "error:" in out  # unknown event and unknown output
    assert "known outputs: distData" in out
    assert "t=1" in out  # log line
    assert "unknown command" in out


def test_run_without_work_exits_2(tmp_path, capsys):
    args = [
        "run",
        "--diel", str(CORPUS / "examples" / "slider" / "program.diel"),
        "--db", f"main=quick:{CORPUS / 'data' / 'flights.csv'}",
    ]
    assert main(args) == 2


# --- text rendering ------------------------------------------------------------------


def test_format_table_aligns_columns():
    text = format_table(("origin", "count"), (("LAX", 10), ("SEATTLE", 2)))
    lines = text.splitlines()
    assert lines[0].startswith("origin")
    assert lines[2].index("10") == lines[3].index("2")


def test_bar_rendering_for_label_count_pairs():
    rows = (("LAX", 10), ("SFO", 5))
    assert is_bar_shaped(("origin", "count"), rows)
    bars = format_bars(("origin", "count"), rows)
    lax, sfo = bars.splitlines()
    assert lax.count("#") == 2 * sfo.count("#")


def test_render_falls_back_to_table():
    rows = (("LAX", "JFK"),)
    assert not is_bar_shaped(("a", "b"), rows)
    assert "LAX" in render_frame_text(("a", "b"), rows)


def test_empty_table_renders_placeholder():
    assert "(empty)" in format_table(("a",), ())
