"""Assign relations to database instances and emit per-instance SQL programs.

Outputs that read off-coordinator data are rewritten into an async view that
runs at a leader instance plus a coordination output implementing the strict
default policy: result rows render only when their request_timestep equals
the latest timestep of every interaction table the original query read.
Explicitly declared async views are never touched, so custom policies stay
exactly as written.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .ast_nodes import (
    BinaryOp,
    ColumnDef,
    ColumnRef,
    Join,
    SelectItem,
    SelectQuery,
    TableRef,
)
from .compiler import (
    Catalog,
    RelationDef,
    RelationKind,
    ViewConstraint,
    build_dependency_graph,
    desugar_latest,
    infer_output_columns,
    resolve_query,
)
from .engine import sql_type
from .errors import (
    CompileError,
    ConfigError,
    DuplicateRelationError,
    UnknownRelationError,
    UnsupportedSpanError,
)
from .printer import query_sql, quote_ident, statement_sql

KIND_QUICK = "quick"
KIND_BACKGROUND = "background"
KIND_REMOTE = "remote"

# coordinator-resident relations that grow append-only and ship as deltas
SHIPPABLE_KINDS = (RelationKind.EVENT_TABLE, RelationKind.HISTORY_TABLE, RelationKind.ASYNC_VIEW)


@dataclass
class DbDescriptor:
    db_id: str
    kind: str  # quick | background | remote
    tables: dict[str, list[ColumnDef]] = field(default_factory=dict)
    row_estimates: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ShipmentSpec:
    relation: str
    destination: str
    snapshot: bool = False  # one-time copy at setup instead of per-event deltas


@dataclass
class FederationPlan:
    coordinator: str
    catalog: Catalog
    placement: dict[str, str]
    leaders: dict[str, str]
    shipments: list[ShipmentSpec]
    rewritten_outputs: dict[str, str] = field(default_factory=dict)  # output -> async view
    programs: dict[str, str] = field(default_factory=dict)
    unchecked_constraints: list[ViewConstraint] = field(default_factory=list)

    def ship_destinations(self, relation: str) -> list[str]:
        return sorted(
            s.destination for s in self.shipments if s.relation == relation and not s.snapshot
        )


def base_schemas_of(dbs: list[DbDescriptor]) -> dict[str, list[ColumnDef]]:
    schemas: dict[str, list[ColumnDef]] = {}
    for db in dbs:
        for name, cols in db.tables.items():
            if name in schemas:
                raise DuplicateRelationError(
                    f"base relation {name!r} exists on more than one instance"
                )
            schemas[name] = cols
    return schemas


def coordinator_of(dbs: list[DbDescriptor]) -> str:
    quick = [db.db_id for db in dbs if db.kind == KIND_QUICK]
    if len(quick) != 1:
        raise ConfigError(f"exactly one quick instance required, found {len(quick)}")
    return quick[0]


# --- placement -----------------------------------------------------------------


def locate_relations(catalog: Catalog, dbs: list[DbDescriptor]) -> dict[str, str]:
    coordinator = coordinator_of(dbs)
    placement: dict[str, str] = {}
    estimates = _estimates(catalog, dbs)
    for db in dbs:
        for name in db.tables:
            if name not in catalog.relations:
                raise UnknownRelationError(
                    f"instance {db.db_id} provides {name!r}, which the catalog does not know"
                )
            placement[name] = db.db_id
    for rel in catalog.relations.values():
        if rel.is_base:
            if rel.name not in placement:
                raise UnknownRelationError(f"base relation {rel.name!r} is on no instance")
            continue
        if rel.kind in (RelationKind.EVENT_TABLE, RelationKind.HISTORY_TABLE, RelationKind.TABLE):
            placement[rel.name] = coordinator
        elif rel.kind is RelationKind.OUTPUT:
            placement[rel.name] = coordinator
        else:  # views and async views run where they move the least data
            placement[rel.name] = choose_leader(rel.query, placement, estimates, catalog, dbs)
    return placement


def _estimates(catalog: Catalog, dbs: list[DbDescriptor]) -> dict[str, int]:
    estimates: dict[str, int] = {}
    for db in dbs:
        estimates.update(db.row_estimates)
    for rel in catalog.relations.values():
        # events and derived state are counted at max(1, current count); at
        # setup nothing has happened yet, so they cost 1
        estimates.setdefault(rel.name, 1)
    return estimates


def base_closure(name: str, catalog: Catalog) -> set[str]:
    """Leaf (non-query) relations a relation reads, directly or through views."""
    leaves: set[str] = set()
    seen: set[str] = set()
    stack = [name]
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        rel = catalog.relations.get(cur)
        if rel is None:
            continue
        if rel.query is None or (rel.kind is RelationKind.ASYNC_VIEW and cur != name):
            # an async view referenced by someone else reads as its local result table
            leaves.add(cur)
            continue
        stack.extend(catalog.graph.reads.get(cur, ()))
    return leaves


def choose_leader(
    query: SelectQuery,
    placement: dict[str, str],
    estimates: dict[str, int],
    catalog: Catalog,
    dbs: list[DbDescriptor],
) -> str:
    coordinator = coordinator_of(dbs)
    involved: set[str] = set()
    from .compiler import referenced_relations

    for name in referenced_relations(query):
        rel = catalog.relations.get(name)
        if rel is None:
            continue
        if rel.kind is RelationKind.ASYNC_VIEW:
            involved.add(name)  # read as its result table, not through its query
            continue
        involved |= {
            leaf
            for leaf in base_closure(name, catalog)
            if catalog.relations.get(leaf) is not None
        }

    def located(rel_name: str) -> str:
        rel = catalog.relations.get(rel_name)
        if rel is not None and rel.kind is RelationKind.ASYNC_VIEW:
            return coordinator  # consumers read the result table at the coordinator
        return placement.get(rel_name, coordinator)

    def cost(db_id: str) -> int:
        total = 0
        for rel_name in involved:
            if located(rel_name) != db_id:
                if rel_name not in estimates:
                    raise UnsupportedSpanError(f"no row estimate for {rel_name!r}")
                total += estimates[rel_name]
        return total

    def sort_key(db_id: str) -> tuple:
        return (cost(db_id), db_id != coordinator, db_id)

    return min((db.db_id for db in dbs), key=sort_key)


# --- output rewriting ------------------------------------------------------------


def collect_latest_event_tables(name_or_query, catalog: Catalog) -> list[str]:
    """Latest-flagged event tables of a query, following view references."""
    ordered: list[str] = []
    seen_rel: set[str] = set()

    def visit_query(query: SelectQuery) -> None:
        from .compiler import _nested_queries

        for ref in query.table_refs():
            rel = catalog.relations.get(ref.name)
            if rel is None:
                continue
            if ref.latest and rel.kind is RelationKind.EVENT_TABLE and ref.name not in ordered:
                ordered.append(ref.name)
            if rel.query is not None and rel.kind is not RelationKind.ASYNC_VIEW:
                visit_relation(rel.name)
        for sub in _nested_queries(query):
            visit_query(sub)

    def visit_relation(rel_name: str) -> None:
        if rel_name in seen_rel:
            return
        seen_rel.add(rel_name)
        rel = catalog.relations.get(rel_name)
        if rel is not None and rel.query is not None:
            visit_query(rel.query)

    if isinstance(name_or_query, SelectQuery):
        visit_query(name_or_query)
    else:
        visit_relation(name_or_query)
    return ordered


def rewrite_remote_output(
    output: RelationDef, catalog: Catalog
) -> tuple[RelationDef, RelationDef]:
    """Split a remote-spanning output into (async view, coordination output)."""
    base = f"{output.name}Event"
    async_name = base
    n = 2
    while async_name in catalog.relations:
        async_name = f"{base}{n}"
        n += 1
    async_view = RelationDef(
        name=async_name,
        kind=RelationKind.ASYNC_VIEW,
        query=output.query,
        system_columns=("timestep", "timestamp", "request_timestep"),
    )

    payload = infer_output_columns(output.query, catalog)
    from .compiler import SYSTEM_COLUMNS

    for col in payload:
        if col.name in SYSTEM_COLUMNS:
            raise CompileError(
                f"output {output.name!r} spans remote data but selects a column "
                f"named {col.name!r}; alias it so the async result schema is valid"
            )
    items = [SelectItem(ColumnRef(column=c.name, table="e")) for c in payload]
    coord_query = SelectQuery(items=items, table=TableRef(name=async_name, alias="e"))
    for event_table in collect_latest_event_tables(output.query, catalog):
        coord_query.joins.append(
            Join(
                kind="inner",
                table=TableRef(name=event_table, latest=True),
                on=BinaryOp(
                    "=",
                    ColumnRef(column="timestep", table=event_table),
                    ColumnRef(column="request_timestep", table="e"),
                ),
            )
        )
    coord_output = RelationDef(name=output.name, kind=RelationKind.OUTPUT, query=coord_query)
    return async_view, coord_output


# --- plan driver ------------------------------------------------------------------


def plan_federation(catalog: Catalog, dbs: list[DbDescriptor]) -> FederationPlan:
    catalog = copy.deepcopy(catalog)
    coordinator = coordinator_of(dbs)
    estimates = _estimates(catalog, dbs)
    placement = locate_relations(catalog, dbs)

    def off_coordinator(rel: RelationDef) -> set[str]:
        return {
            leaf
            for leaf in base_closure(rel.name, catalog)
            if catalog.relations.get(leaf) is not None
            and catalog.relations[leaf].is_base
            and placement[leaf] != coordinator
        }

    rewritten: dict[str, str] = {}
    for name in list(catalog.relations):
        rel = catalog.relations[name]
        if rel.kind is not RelationKind.OUTPUT or not off_coordinator(rel):
            continue
        reads_async = any(
            catalog.relations.get(r) is not None
            and catalog.relations[r].kind is RelationKind.ASYNC_VIEW
            for r in catalog.graph.reads.get(name, ())
        )
        if reads_async:
            # the developer wrote an explicit async view + policy; leave it alone
            continue
        async_view, coord_output = rewrite_remote_output(rel, catalog)
        catalog.relations[async_view.name] = async_view
        catalog.relations[name] = coord_output
        rewritten[name] = async_view.name

    catalog.graph = build_dependency_graph(catalog)
    for name in rewritten.values():
        resolve_query(catalog.relations[name].query, catalog)
    for name in rewritten:
        resolve_query(catalog.relations[name].query, catalog)

    # placement again: new async views need leaders, outputs moved home
    placement = locate_relations(catalog, dbs)
    leaders = {
        rel.name: placement[rel.name]
        for rel in catalog.relations.values()
        if rel.kind is RelationKind.ASYNC_VIEW
    }

    shipments: set[ShipmentSpec] = set()
    for view, leader in leaders.items():
        if leader == coordinator:
            continue
        for leaf in base_closure(view, catalog):
            rel = catalog.relations.get(leaf)
            if rel is None:
                continue
            if placement.get(leaf) == leader:
                continue
            if rel.kind in SHIPPABLE_KINDS:
                shipments.add(ShipmentSpec(relation=leaf, destination=leader))
            elif rel.is_base or rel.kind is RelationKind.TABLE:
                if leaf not in estimates:
                    raise UnsupportedSpanError(f"no row estimate for {leaf!r}")
                shipments.add(ShipmentSpec(relation=leaf, destination=leader, snapshot=True))

    unchecked = [
        c
        for c in catalog.constraints
        if c.view in catalog.relations and off_coordinator(catalog.relations[c.view])
        and catalog.relations[c.view].kind is RelationKind.VIEW
    ]

    plan = FederationPlan(
        coordinator=coordinator,
        catalog=catalog,
        placement=placement,
        leaders=leaders,
        shipments=sorted(shipments, key=lambda s: (s.relation, s.destination)),
        rewritten_outputs=rewritten,
        unchecked_constraints=unchecked,
    )
    return plan


# --- SQL emission -------------------------------------------------------------------


def local_eval_name(async_view: str) -> str:
    return f"__eval_{async_view}"


def _create_table_sql(name: str, columns: list[ColumnDef], system: tuple[str, ...]) -> str:
    decls = []
    for col in columns:
        decl = quote_ident(col.name)
        typed = sql_type(col.type)
        if typed:
            decl += f" {typed}"
        decls.append(decl)
    decls.extend(f"{c} INTEGER" for c in system)
    return f"CREATE TABLE {quote_ident(name)} ({', '.join(decls)});"


def emit_per_db_sql(plan: FederationPlan, mat_views: dict[str, list[str]] | None = None) -> dict[str, str]:
    """DDL + named queries per instance; executing them on fresh engines
    reconstructs the federation (and re-executing them collides, by design)."""
    catalog = plan.catalog
    mat_views = mat_views or {}
    order = catalog.graph.topological_order()
    programs: dict[str, str] = {}

    def topo_sorted(names: set[str]) -> list[str]:
        return [n for n in order if n in names]

    # -- coordinator -----------------------------------------------------
    lines: list[str] = [f"-- program for coordinator {plan.coordinator}"]
    for rel in catalog.relations.values():
        if rel.is_base and plan.placement[rel.name] == plan.coordinator:
            lines.append(_create_table_sql(rel.name, rel.columns, ()))
    for rel in catalog.relations.values():
        if rel.kind in (RelationKind.EVENT_TABLE, RelationKind.HISTORY_TABLE):
            lines.append(_create_table_sql(rel.name, rel.columns, rel.system_columns))
        elif rel.kind is RelationKind.TABLE and not rel.is_base:
            lines.append(_create_table_sql(rel.name, rel.columns, ()))
        elif rel.kind is RelationKind.ASYNC_VIEW:
            payload = infer_output_columns(rel.query, catalog)
            untyped = [ColumnDef(c.name, None) for c in payload]
            lines.append(_create_table_sql(rel.name, untyped, rel.system_columns))
    view_names = {r.name for r in catalog.by_kind(RelationKind.VIEW, RelationKind.OUTPUT)}
    for name in topo_sorted(view_names):
        rel = catalog.relations[name]
        desugared = query_sql(desugar_latest(rel.query, catalog))
        if name in mat_views:
            cols = [ColumnDef(c.name, None) for c in infer_output_columns(rel.query, catalog)]
            lines.append(_create_table_sql(name, cols, ()))
        else:
            lines.append(f"CREATE VIEW {quote_ident(name)} AS {desugared};")
    for view, leader in sorted(plan.leaders.items()):
        if leader == plan.coordinator:
            # async view led by the coordinator: the result table keeps the view's
            # name, so its evaluation query lives under a reserved name
            desugared = query_sql(desugar_latest(catalog.relations[view].query, catalog))
            lines.append(f"CREATE VIEW {quote_ident(local_eval_name(view))} AS {desugared};")
    for program in catalog.programs.values():
        from .ast_nodes import CreateProgram

        stmt = CreateProgram(name=program.name, triggers=program.triggers, commands=program.commands)
        lines.append("-- state program (runtime-executed): " + statement_sql(stmt))
    programs[plan.coordinator] = "\n".join(lines)

    # -- other instances: resident bases, shadows, duplicated views, queries --
    remote_ids = (
        set(plan.placement.values())
        | {s.destination for s in plan.shipments}
        | set(plan.leaders.values())
    )
    for db_id in sorted(remote_ids):
        if db_id == plan.coordinator:
            continue
        lines = [f"-- program for instance {db_id}"]
        for rel in catalog.relations.values():
            if rel.is_base and plan.placement[rel.name] == db_id:
                lines.append(_create_table_sql(rel.name, rel.columns, ()))
        for spec in plan.shipments:
            if spec.destination != db_id:
                continue
            rel = catalog.relation(spec.relation)
            if rel.kind is RelationKind.ASYNC_VIEW:
                payload = infer_output_columns(rel.query, catalog)
                cols = [ColumnDef(c.name, None) for c in payload]
            else:
                cols = rel.columns
            lines.append(_create_table_sql(spec.relation, cols, rel.system_columns))
        local_views = set()
        for view, leader in plan.leaders.items():
            if leader != db_id:
                continue
            for name in catalog.graph.closure(view):
                rel = catalog.relations.get(name)
                if rel is not None and rel.kind is RelationKind.VIEW:
                    local_views.add(name)
        for name in topo_sorted(local_views):
            desugared = query_sql(desugar_latest(catalog.relations[name].query, catalog))
            lines.append(f"CREATE VIEW {quote_ident(name)} AS {desugared};")
        for view in sorted(v for v, leader in plan.leaders.items() if leader == db_id):
            desugared = query_sql(desugar_latest(catalog.relations[view].query, catalog))
            lines.append(f"CREATE VIEW {quote_ident(view)} AS {desugared};")
        programs[db_id] = "\n".join(lines)

    plan.programs = programs
    return programs


def dump_plan(plan: FederationPlan) -> str:
    lines = ["== placement =="]
    for name in sorted(plan.placement):
        lines.append(f"{name} @ {plan.placement[name]}")
    if plan.leaders:
        lines.append("== leaders ==")
        for view in sorted(plan.leaders):
            lines.append(f"{view} -> {plan.leaders[view]}")
    if plan.rewritten_outputs:
        lines.append("== rewritten outputs ==")
        for output in sorted(plan.rewritten_outputs):
            lines.append(f"{output} via {plan.rewritten_outputs[output]}")
    if plan.shipments:
        lines.append("== shipments ==")
        for spec in plan.shipments:
            mode = "snapshot" if spec.snapshot else "deltas"
            lines.append(f"{spec.relation} -> {spec.destination} ({mode})")
    return "\n".join(lines)
