"""The coordinator's event loop.

Each accepted event advances the logical clock by exactly one, is inserted
with its timestep and timestamp, ships deltas to the instances that need
them, and drives one atomic processing pass: state programs run first (their
inserts are staged), materialized shared views refresh, outputs whose
dependency closure changed re-evaluate, NOT EMPTY constraints are checked,
callbacks fire, and finally the staged history-table inserts are applied so
they become visible from the next timestep onward. Async results, including
request-cache hits, come back as ordinary events of their own.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass

from .ast_nodes import ColumnDef, InsertStatement
from .compiler import (
    Catalog,
    RelationKind,
    dependency_closure,
    desugar_latest,
    infer_output_columns,
)
from .engine import SqlEngine
from .errors import (
    EngineError,
    SchemaMismatchError,
    SetupError,
    TypeMismatchError,
    UnknownAsyncViewError,
    UnknownEventError,
    UnknownOutputError,
)
from .federation import Federation, Message, RESULT_ROWS
from .optimizer import MaterializationPlan, RequestCache
from .planner import FederationPlan, local_eval_name
from .printer import expr_sql, query_sql, quote_ident


@dataclass(frozen=True)
class EventRecord:
    relation: str
    payload: dict
    timestep: int
    timestamp: int
    request_timestep: int | None = None


@dataclass(frozen=True)
class OutputFrame:
    output: str
    timestep: int
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "output": self.output,
                "timestep": self.timestep,
                "rows": [list(r) for r in self.rows],
            },
            separators=(",", ":"),
            default=str,
        )


@dataclass
class RunOptions:
    seed: int | None = None
    cache_enabled: bool = True
    dedupe_frames: bool = False
    check_atomicity: bool = False


def _sort_key(value) -> tuple:
    if value is None:
        return (0, "", "")
    if isinstance(value, (int, float)):
        return (1, float(value), repr(value))
    return (2, str(value), "")


def canonical_rows(rows: list[tuple]) -> list[tuple]:
    return sorted(rows, key=lambda row: tuple(_sort_key(v) for v in row))


class Runtime:
    def __init__(
        self,
        plan: FederationPlan,
        engine: SqlEngine,
        federation: Federation | None,
        mat_plan: MaterializationPlan,
        bindings: dict[str, object] | None = None,
        options: RunOptions | None = None,
    ):
        self.plan = plan
        self.catalog: Catalog = plan.catalog
        self.engine = engine
        self.federation = federation
        self.mat_plan = mat_plan
        self.options = options or RunOptions()
        self.bindings: dict[str, list] = {}
        for output, callback in (bindings or {}).items():
            self.bind_output(output, callback)

        self.clock = 0
        self.events: list[EventRecord] = []
        self.frames: list[OutputFrame] = []
        self.diagnostics: list[str] = []
        self.ignored_events = 0
        self.local_evals = 0
        self.cache = RequestCache()
        self._pending_params: dict[tuple[str, int], tuple] = {}
        self._ship_cursor: dict[tuple[str, str], int] = {}
        self._dirty_next: set[str] = set()
        self._last_rendered: dict[str, tuple] = {}
        self._inbox: deque = deque()
        self._processing = False

        self._outputs = [r.name for r in self.catalog.by_kind(RelationKind.OUTPUT)]
        self._desugared_sql: dict[str, str] = {}
        self._async_views = [r.name for r in self.catalog.by_kind(RelationKind.ASYNC_VIEW)]
        self._closures = {
            name: dependency_closure(name, self.catalog)
            for name in self._outputs + self._async_views
        }
        self._checkable = [
            c
            for c in self.catalog.constraints
            if c.view in self.catalog.relations
            and c not in plan.unchecked_constraints
            and self.catalog.relations[c.view].kind in (RelationKind.VIEW, RelationKind.OUTPUT)
        ]

    # -- API ------------------------------------------------------------------

    def bind_output(self, output: str, callback) -> None:
        rel = self.catalog.relations.get(output)
        if rel is None or rel.kind is not RelationKind.OUTPUT:
            known = ", ".join(sorted(self._output_names())) or "(none)"
            raise UnknownOutputError(f"unknown output {output!r}; known outputs: {known}")
        self.bindings.setdefault(output, []).append(callback)

    def _output_names(self) -> list[str]:
        return [r.name for r in self.catalog.by_kind(RelationKind.OUTPUT)]

    def new_event(self, name: str, payload: dict, at_ms: int | None = None) -> int | None:
        if self._processing:
            self._inbox.append(("event", name, dict(payload), at_ms))
            return None
        at_ms = int(time.time() * 1000) if at_ms is None else at_ms
        self._advance_clock_ms(at_ms)
        rel = self.catalog.relations.get(name)
        if rel is None or rel.kind is not RelationKind.EVENT_TABLE:
            raise UnknownEventError(f"{name!r} is not an event table")
        values = self._validate_payload(rel.name, rel.columns, payload)
        if not self._checks_pass(rel.name, rel.columns, values):
            self.ignored_events += 1
            return None
        self.clock += 1
        t = self.clock
        self.engine.insert_rows(name, [values + (t, at_ms)], context=f"event {name}")
        self.events.append(EventRecord(name, dict(payload), t, at_ms))
        self._dispatch_async(name, values, t)
        self._process_timestep(t, name, at_ms)
        return t

    def on_async_result(
        self, view: str, rows: list[tuple], request_timestep: int, at_ms: int | None = None
    ) -> int:
        at_ms = int(time.time() * 1000) if at_ms is None else at_ms
        self._advance_clock_ms(at_ms)
        rel = self.catalog.relations.get(view)
        if rel is None or rel.kind is not RelationKind.ASYNC_VIEW:
            raise UnknownAsyncViewError(f"{view!r} is not an async view")
        width = len(infer_output_columns(rel.query, self.catalog))
        for row in rows:
            if len(row) != width:
                raise SchemaMismatchError(
                    f"result row for {view!r} has {len(row)} values, expected {width}"
                )
        self.clock += 1
        t = self.clock
        self.engine.insert_rows(
            view,
            [tuple(row) + (t, at_ms, request_timestep) for row in rows],
            context=f"result {view}",
        )
        self.events.append(
            EventRecord(
                relation=view,
                payload={"rows": [list(r) for r in rows]},
                timestep=t,
                timestamp=at_ms,
                request_timestep=request_timestep,
            )
        )
        pending = self._pending_params.pop((view, request_timestep), None)
        if pending is not None and self.options.cache_enabled:
            self.cache.store(view, pending, rows)
        self._dispatch_async(view, None, t)
        self._process_timestep(t, view, at_ms)
        return t

    def admit(self, msg: Message) -> None:
        """Admit a coordinator-bound transport message as the next event."""
        if msg.kind != RESULT_ROWS:
            raise EngineError("coordinator", f"unexpected message kind {msg.kind}")
        self.on_async_result(msg.view, msg.rows or [], msg.request_timestep, at_ms=msg.deliver_ms)
        self.drain_inbox()

    def drain_inbox(self) -> None:
        """Deliver queued local results / re-entrant events, one timestep each."""
        while self._inbox and not self._processing:
            item = self._inbox.popleft()
            if item[0] == "result":
                _, view, rows, request_timestep, at_ms = item
                self.on_async_result(view, rows, request_timestep, at_ms)
            else:
                _, name, payload, at_ms = item
                self.new_event(name, payload, at_ms)

    def event_log(self) -> list[EventRecord]:
        return list(self.events)

    def current_output(self, name: str) -> OutputFrame:
        rel = self.catalog.relations.get(name)
        if rel is None or rel.kind is not RelationKind.OUTPUT:
            known = ", ".join(sorted(self._output_names())) or "(none)"
            raise UnknownOutputError(f"unknown output {name!r}; known outputs: {known}")
        columns, rows = self._evaluate_relation(name)
        return OutputFrame(name, self.clock, tuple(columns), tuple(rows))

    def summary(self) -> dict:
        sent = self.federation.transport.sent_counts if self.federation else {}
        remote = sum(sent.get(k, 0) for k in ("ShipData", "EvalRequest", "ResultRows"))
        return {
            "events": len(self.events),
            "ignored_events": self.ignored_events,
            "frames": len(self.frames),
            "remote_messages": remote,
            "ship_messages": sent.get("ShipData", 0),
            "eval_requests": sent.get("EvalRequest", 0),
            "result_messages": sent.get("ResultRows", 0),
            "local_evals": self.local_evals,
            "diagnostics": len(self.diagnostics),
            **self.cache.stats(),
        }

    # -- validation -------------------------------------------------------------

    def _validate_payload(self, name: str, columns: list[ColumnDef], payload: dict) -> tuple:
        expected = [c.name for c in columns]
        extra = set(payload) - set(expected)
        missing = [c for c in expected if c not in payload]
        if extra or missing:
            raise TypeMismatchError(
                f"event {name!r}: payload keys {sorted(payload)} do not match "
                f"columns {expected}"
            )
        values = []
        for col in columns:
            value = payload[col.name]
            if value is None:
                values.append(None)
                continue
            ok = (
                (col.type == "INT" and isinstance(value, int) and not isinstance(value, bool))
                or (col.type == "REAL" and isinstance(value, (int, float)) and not isinstance(value, bool))
                or (col.type == "TEXT" and isinstance(value, str))
            )
            if not ok:
                raise TypeMismatchError(
                    f"event {name!r}: column {col.name} expects {col.type}, "
                    f"got {type(value).__name__}"
                )
            values.append(value)
        return tuple(values)

    def _checks_pass(self, name: str, columns: list[ColumnDef], values: tuple) -> bool:
        checked = [c for c in columns if c.check is not None]
        if not checked:
            return True
        inner = ", ".join(f"? AS {quote_ident(c.name)}" for c in columns)
        for col in checked:
            sql = (
                f"SELECT ({expr_sql(col.check)}) FROM (SELECT {inner}) "
                f"AS {quote_ident(name)}"
            )
            try:
                cursor = self.engine.conn.execute(sql, values)
            except Exception as exc:  # engine-level failure counts as a violation
                self.diagnostics.append(f"check on {name}.{col.name} failed to run: {exc}")
                return False
            result = cursor.fetchone()[0]
            if result == 0:  # NULL passes, matching SQL CHECK semantics
                self.diagnostics.append(
                    f"event on {name!r} ignored: CHECK on column {col.name} failed"
                )
                return False
        return True

    # -- async dispatch ------------------------------------------------------------

    def _dispatch_async(self, relation: str, params: tuple | None, t: int) -> None:
        ships_needed: dict[str, bool] = {}
        evals: list[tuple[str, str]] = []  # (view, leader)
        for view in self._async_views:
            if relation not in self._closures[view]:
                continue
            leader = self.plan.leaders[view]
            if self.options.cache_enabled and params is not None:
                cached = self.cache.lookup(view, params)
                if cached is not None:
                    self._inbox.append(("result", view, cached, t, self._now_ms()))
                    continue
                self._pending_params[(view, t)] = params
            if leader == self.plan.coordinator:
                _, rows = self.engine.run_query(
                    f'SELECT * FROM {quote_ident(local_eval_name(view))}',
                    context=f"async view {view}",
                )
                self.local_evals += 1
                self._inbox.append(("result", view, rows, t, self._now_ms()))
            else:
                ships_needed[leader] = True
                evals.append((view, leader))
        for leader in sorted(ships_needed):
            self._ship_backlog(relation, leader, t)
        for view, leader in evals:
            self.federation.request_eval(leader, view, t)

    def _advance_clock_ms(self, at_ms: int) -> None:
        self.now_ms = max(getattr(self, "now_ms", 0), at_ms)
        if self.federation is not None:
            self.federation.transport.advance_to(at_ms)

    def _now_ms(self) -> int:
        if self.federation is not None:
            return self.federation.transport.now
        return getattr(self, "now_ms", 0)

    def _ship_backlog(self, relation: str, db_id: str, t: int) -> None:
        cursor = self._ship_cursor.get((relation, db_id), 0)
        _, rows = self.engine.run_query(
            f'SELECT * FROM {quote_ident(relation)} WHERE timestep > {cursor} '
            f"AND timestep <= {t}",
            context=f"backlog of {relation}",
        )
        self._ship_cursor[(relation, db_id)] = t
        self.federation.ship(db_id, relation, rows, t)

    # -- the processing pass ----------------------------------------------------------

    def _program_sql(self, key: str, query) -> str:
        sql = self._desugared_sql.get(key)
        if sql is None:
            sql = query_sql(desugar_latest(query, self.catalog))
            self._desugared_sql[key] = sql
        return sql

    def _evaluate_relation(self, name: str) -> tuple[list[str], list[tuple]]:
        columns, rows = self.engine.run_query(
            f"SELECT * FROM {quote_ident(name)}", context=f"output {name}"
        )
        rel = self.catalog.relations[name]
        if rel.query is not None and not rel.query.order_by:
            rows = canonical_rows(rows)
        return columns, rows

    def _process_timestep(self, t: int, triggering: str, at_ms: int) -> list[OutputFrame]:
        self._processing = True
        try:
            changed = {triggering} | self._dirty_next
            self._dirty_next = set()

            # (1) state programs; inserts are staged until the end of the pass
            staged: list[tuple[str, list[str] | None, list[tuple]]] = []
            for program in self.catalog.programs.values():
                if triggering not in program.triggers:
                    continue
                for command in program.commands:
                    if isinstance(command, InsertStatement):
                        if command.select is not None:
                            sql = self._program_sql(
                                f"program/{program.name}/{id(command)}", command.select
                            )
                            _, rows = self.engine.run_query(sql, context=f"program {program.name}")
                        else:
                            rows = [
                                self.engine.run_query(
                                    "SELECT " + ", ".join(expr_sql(v) for v in row),
                                    context=f"program {program.name}",
                                )[1][0]
                                for row in command.values or []
                            ]
                        staged.append((command.table, command.columns, rows))
                    else:
                        sql = self._program_sql(f"program/{program.name}/{id(command)}", command)
                        self.engine.run_query(sql, context=f"program {program.name}")

            # (2) refresh materialized shared views whose dependencies changed
            for view in self.mat_plan.order:
                if not (self.mat_plan.tables[view] & changed):
                    continue
                sql = self._program_sql(f"mat/{view}", self.catalog.relations[view].query)
                self.engine.execute(f"DELETE FROM {quote_ident(view)}", context=f"refresh {view}")
                self.engine.execute(
                    f"INSERT INTO {quote_ident(view)} {sql}", context=f"refresh {view}"
                )
                changed.add(view)

            # (3) re-evaluate outputs whose dependency closure changed
            frames: list[OutputFrame] = []
            for name in self._outputs:
                if not ({name} | set(self._closures[name])) & changed:
                    continue
                columns, rows = self._evaluate_relation(name)
                if self.options.check_atomicity:
                    again = self._evaluate_relation(name)[1]
                    if again != rows:
                        raise EngineError(
                            f"output {name}", "evaluation is not stable within a timestep"
                        )
                frame = OutputFrame(name, t, tuple(columns), tuple(map(tuple, rows)))
                if self.options.dedupe_frames and self._last_rendered.get(name) == frame.rows:
                    continue
                frames.append(frame)

            # (4) NOT EMPTY debugging constraints, checked every timestep
            for constraint in self._checkable:
                _, probe = self.engine.run_query(
                    f"SELECT 1 FROM {quote_ident(constraint.view)} LIMIT 1",
                    context=f"constraint {constraint.view}",
                )
                if not probe:
                    self.diagnostics.append(
                        f"NOT EMPTY violated: {constraint.view} is empty at timestep {t}"
                    )

            # (5) fire callbacks and log the frames
            for frame in frames:
                self.frames.append(frame)
                self._last_rendered[frame.output] = frame.rows
                for callback in self.bindings.get(frame.output, []):
                    callback(frame)

            # (6) staged history inserts land now, visible from t+1 onward
            for table, columns, rows in staged:
                rel = self.catalog.relations[table]
                names = columns or [c.name for c in rel.columns]
                col_sql = ", ".join(quote_ident(c) for c in names + ["timestep"])
                marks = ", ".join("?" * (len(names) + 1))
                for row in rows:
                    self.engine.execute(
                        f"INSERT INTO {quote_ident(table)} ({col_sql}) VALUES ({marks})",
                        tuple(row) + (t,),
                        context=f"history insert {table}",
                    )
                if rows:
                    self._dirty_next.add(table)
            return frames
        finally:
            self._processing = False


# --- setup ---------------------------------------------------------------------------


def setup(
    plan: FederationPlan,
    base_rows: dict[str, list[tuple]],
    mat_plan: MaterializationPlan,
    links=None,
    bindings: dict | None = None,
    options: RunOptions | None = None,
    ready_cb=None,
    udfs: dict | None = None,
) -> Runtime:
    """Execute per-instance programs, load base data, apply setup snapshots,
    open shipping channels, and return the runtime at clock 0."""
    from .federation import SimInstance

    options = options or RunOptions()
    remote_ids = sorted(set(plan.programs) - {plan.coordinator})
    for db_id in remote_ids:
        if links is None or db_id not in links:
            raise SetupError(db_id, "no latency link configured for this instance")

    engine = SqlEngine(plan.coordinator, seed=options.seed, udfs=udfs)
    try:
        engine.execute_script(plan.programs[plan.coordinator])
    except EngineError as exc:
        raise SetupError(plan.coordinator, str(exc)) from exc

    instances: dict[str, SimInstance] = {}
    for db_id in remote_ids:
        inst_engine = SqlEngine(db_id, seed=options.seed, udfs=udfs)
        try:
            inst_engine.execute_script(plan.programs[db_id])
        except EngineError as exc:
            raise SetupError(db_id, str(exc)) from exc
        instances[db_id] = SimInstance(db_id, inst_engine)

    for relation, rows in base_rows.items():
        owner = plan.placement[relation]
        target = engine if owner == plan.coordinator else instances[owner].engine
        target.insert_rows(relation, rows, context=f"load {relation}")

    # one-time snapshots of cross-instance base tables, applied before any event
    for spec in plan.shipments:
        if not spec.snapshot:
            continue
        owner = plan.placement[spec.relation]
        source = engine if owner == plan.coordinator else instances[owner].engine
        rows = source.table_rows(spec.relation)
        instances[spec.destination].engine.insert_rows(spec.relation, rows)

    federation = Federation(plan.coordinator, instances, links or {}) if instances else None

    runtime = Runtime(plan, engine, federation, mat_plan, bindings, options)
    for view in mat_plan.order:
        sql = query_sql(desugar_latest(plan.catalog.relations[view].query, plan.catalog))
        engine.execute(f"INSERT INTO {quote_ident(view)} {sql}", context=f"init {view}")
    if ready_cb is not None:
        ready_cb(runtime)
    return runtime
