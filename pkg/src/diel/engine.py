"""Embedded relational engine: one in-memory SQLite connection per instance.

Every engine starts empty; setup executes the planned DDL and base data is
copied in afterwards, so re-running setup on a used engine fails on the DDL
collision (by design there is no IF NOT EXISTS). RANDOM() is overridden with
a seeded generator so ORDER BY RANDOM() replays deterministically.
"""

from __future__ import annotations

import csv
import random
import sqlite3
from pathlib import Path

from .ast_nodes import ColumnDef
from .errors import ConfigError, EngineError
from .udfs import BUILTIN_UDFS, UdfDef

_SQL_TYPES = {"INT": "INTEGER", "REAL": "REAL", "TEXT": "TEXT"}


def sql_type(type_: str | None) -> str:
    return _SQL_TYPES.get(type_ or "", "")


class SqlEngine:
    def __init__(self, db_id: str, seed: int | None = None, udfs: dict[str, UdfDef] | None = None):
        self.db_id = db_id
        self.conn = sqlite3.connect(":memory:")
        self.conn.isolation_level = None  # autocommit; the runtime owns atomicity
        self._rng = random.Random(f"{seed}/engine/{db_id}")
        self.conn.create_function("random", 0, lambda: self._rng.getrandbits(63))
        for udf in {**BUILTIN_UDFS, **(udfs or {})}.values():
            self.conn.create_function(udf.name, udf.arity, udf.fn)

    def execute_script(self, sql: str) -> None:
        try:
            self.conn.executescript(sql)
        except sqlite3.Error as exc:
            raise EngineError(f"instance {self.db_id}", str(exc)) from exc

    def run_query(self, sql: str, context: str = "query") -> tuple[list[str], list[tuple]]:
        try:
            cursor = self.conn.execute(sql)
        except sqlite3.Error as exc:
            raise EngineError(f"{context} on instance {self.db_id}", str(exc)) from exc
        columns = [d[0] for d in cursor.description or []]
        return columns, [tuple(row) for row in cursor.fetchall()]

    def execute(self, sql: str, params: tuple = (), context: str = "statement") -> None:
        try:
            self.conn.execute(sql, params)
        except sqlite3.Error as exc:
            raise EngineError(f"{context} on instance {self.db_id}", str(exc)) from exc

    def insert_rows(self, table: str, rows: list[tuple], context: str = "insert") -> None:
        if not rows:
            return
        placeholders = ", ".join("?" * len(rows[0]))
        try:
            self.conn.executemany(f'INSERT INTO "{table}" VALUES ({placeholders})', rows)
        except sqlite3.Error as exc:
            raise EngineError(f"{context} into {table} on {self.db_id}", str(exc)) from exc

    def table_rows(self, table: str) -> list[tuple]:
        return self.run_query(f'SELECT * FROM "{table}"')[1]

    def count(self, table: str) -> int:
        return self.run_query(f'SELECT COUNT(*) FROM "{table}"')[1][0][0]

    def close(self) -> None:
        self.conn.close()


# --- data sources ---------------------------------------------------------------


def introspect_sqlite(path: str | Path) -> dict[str, tuple[list[ColumnDef], int]]:
    """Schemas and row counts of the user tables in a SQLite file."""
    uri = f"file:{Path(path)}?mode=ro"
    try:
        conn = sqlite3.connect(uri, uri=True)
        names = [
            r[0]
            for r in conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' "
                "AND name NOT LIKE 'sqlite_%' ORDER BY name"
            )
        ]
        result: dict[str, tuple[list[ColumnDef], int]] = {}
        for name in names:
            cols = []
            for _, col_name, decl, *_ in conn.execute(f'PRAGMA table_info("{name}")'):
                decl = (decl or "").upper()
                if "INT" in decl:
                    type_ = "INT"
                elif "REAL" in decl or "FLOA" in decl or "DOUB" in decl:
                    type_ = "REAL"
                else:
                    type_ = "TEXT"
                cols.append(ColumnDef(col_name, type_))
            count = conn.execute(f'SELECT COUNT(*) FROM "{name}"').fetchone()[0]
            result[name] = (cols, count)
        conn.close()
        return result
    except sqlite3.Error as exc:
        raise ConfigError(f"cannot read database file {path}: {exc}") from exc


def read_sqlite_rows(path: str | Path, table: str) -> list[tuple]:
    uri = f"file:{Path(path)}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    try:
        return [tuple(r) for r in conn.execute(f'SELECT * FROM "{table}"')]
    finally:
        conn.close()


def read_csv_table(path: str | Path) -> tuple[list[ColumnDef], list[tuple]]:
    """Read a CSV with `name` or `name:TYPE` headers; untyped columns are sniffed."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"CSV file {path} is empty") from None
        raw_rows = [row for row in reader if row]

    columns: list[ColumnDef] = []
    for cell in header:
        if ":" in cell:
            name, type_ = cell.rsplit(":", 1)
            type_ = type_.strip().upper()
            if type_ not in _SQL_TYPES:
                raise ConfigError(f"CSV {path}: unknown column type {type_!r}")
            columns.append(ColumnDef(name.strip(), type_))
        else:
            columns.append(ColumnDef(cell.strip(), _sniff_type(raw_rows, header.index(cell))))

    rows = []
    for raw in raw_rows:
        if len(raw) != len(columns):
            raise ConfigError(f"CSV {path}: row has {len(raw)} cells, expected {len(columns)}")
        rows.append(tuple(_coerce(cell, col.type) for cell, col in zip(raw, columns)))
    return columns, rows


def _sniff_type(rows: list[list[str]], index: int) -> str:
    cells = [r[index] for r in rows if r[index] != ""]
    if cells and all(_is_int(c) for c in cells):
        return "INT"
    if cells and all(_is_float(c) for c in cells):
        return "REAL"
    return "TEXT"


def _is_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _coerce(cell: str, type_: str | None):
    if cell == "":
        return None
    if type_ == "INT":
        return int(cell)
    if type_ == "REAL":
        return float(cell)
    return cell


def import_csv(csv_path: str | Path, table: str, db_path: str | Path) -> int:
    """Create `table` in the SQLite file at db_path from a CSV; returns row count."""
    columns, rows = read_csv_table(csv_path)
    conn = sqlite3.connect(str(db_path))
    try:
        decls = ", ".join(f'"{c.name}" {sql_type(c.type)}'.strip() for c in columns)
        conn.execute(f'CREATE TABLE "{table}" ({decls})')
        if rows:
            marks = ", ".join("?" * len(columns))
            conn.executemany(f'INSERT INTO "{table}" VALUES ({marks})', rows)
        conn.commit()
    except sqlite3.Error as exc:
        raise ConfigError(f"import into {db_path}:{table} failed: {exc}") from exc
    finally:
        conn.close()
    return len(rows)
