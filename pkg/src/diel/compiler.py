"""Resolve parsed statements into a relation catalog plus a dependency graph.

Pipeline: template expansion -> schema copy -> catalog construction ->
system-column augmentation -> name resolution and shorthand rewriting ->
dependency graph -> well-formedness diagnostics. The catalog keeps queries in
their sugared form (LATEST flags intact); `desugar_latest` produces the plain
SQL form and is applied when per-instance programs are emitted.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

from .ast_nodes import (
    BinaryOp,
    CaseExpr,
    ColumnDef,
    ColumnRef,
    CreateAsyncView,
    CreateEventTable,
    CreateOutput,
    CreateProgram,
    CreateTable,
    CreateTemplate,
    CreateView,
    Expr,
    FuncCall,
    InsertStatement,
    IsNull,
    NotEmptyConstraint,
    ProgramCommand,
    ScalarSubquery,
    SchemaCopy,
    SelectItem,
    SelectQuery,
    Star,
    Statement,
    TableRef,
    UnaryOp,
    UseTemplate,
)
from .errors import (
    AmbiguousColumnError,
    CompileError,
    CyclicDependencyError,
    DuplicateRelationError,
    LatestOnNonEventError,
    MissingBindingError,
    ParseError,
    ReservedColumnNameError,
    SubstitutionParseError,
    UnknownColumnError,
    UnknownRelationError,
    UnknownSourceRelationError,
    UnknownTemplateError,
    UnknownUdfError,
)
from .parser import parse_query_tokens, tokenize
from .udfs import BUILTIN_UDFS, ENGINE_FUNCTIONS, UdfDef

SYSTEM_COLUMNS = ("timestep", "timestamp", "request_timestep")


class RelationKind(Enum):
    EVENT_TABLE = "EventTable"
    TABLE = "Table"
    HISTORY_TABLE = "HistoryTable"
    VIEW = "View"
    ASYNC_VIEW = "AsyncView"
    OUTPUT = "Output"


TABLE_KINDS = (RelationKind.EVENT_TABLE, RelationKind.TABLE, RelationKind.HISTORY_TABLE)
QUERY_KINDS = (RelationKind.VIEW, RelationKind.ASYNC_VIEW, RelationKind.OUTPUT)


@dataclass
class ViewConstraint:
    view: str
    kind: str = "NotEmpty"


@dataclass
class RelationDef:
    name: str
    kind: RelationKind
    columns: list[ColumnDef] = field(default_factory=list)
    system_columns: tuple[str, ...] = ()
    query: SelectQuery | None = None
    constraints: list[ViewConstraint] = field(default_factory=list)
    is_base: bool = False  # pre-existing table owned by a database instance

    @property
    def physical_columns(self) -> list[ColumnDef]:
        return self.columns + [ColumnDef(c, "INT") for c in self.system_columns]


@dataclass
class ProgramDef:
    name: str
    triggers: list[str]
    commands: list[ProgramCommand]

    def insert_targets(self) -> list[str]:
        return [c.table for c in self.commands if isinstance(c, InsertStatement)]


@dataclass
class DependencyGraph:
    """Reads-from edges for query relations plus staged program-write links.

    Program writes (trigger event -> history table) are tracked separately:
    they land between timesteps, so they do not participate in the same-step
    cycle check.
    """

    reads: dict[str, tuple[str, ...]]
    program_writes: dict[str, tuple[str, ...]]

    def edges(self) -> set[tuple[str, str]]:
        return {(src, dst) for src, dsts in self.reads.items() for dst in dsts}

    def closure(self, name: str) -> frozenset[str]:
        seen: set[str] = set()
        stack = list(self.reads.get(name, ()))
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.reads.get(cur, ()))
        return frozenset(seen)

    def topological_order(self) -> list[str]:
        order: list[str] = []
        state: dict[str, int] = {}

        def visit(node: str, trail: list[str]) -> None:
            mark = state.get(node, 0)
            if mark == 2:
                return
            if mark == 1:
                cycle = trail[trail.index(node):]
                raise CyclicDependencyError(cycle)
            state[node] = 1
            for dep in self.reads.get(node, ()):
                visit(dep, trail + [node])
            state[node] = 2
            order.append(node)

        for node in sorted(self.reads):
            visit(node, [])
        return order


@dataclass
class Catalog:
    relations: dict[str, RelationDef] = field(default_factory=dict)
    programs: dict[str, ProgramDef] = field(default_factory=dict)
    udfs: dict[str, UdfDef] = field(default_factory=dict)
    constraints: list[ViewConstraint] = field(default_factory=list)
    graph: DependencyGraph | None = None
    diagnostics: list[str] = field(default_factory=list)

    def relation(self, name: str) -> RelationDef:
        try:
            return self.relations[name]
        except KeyError:
            raise UnknownRelationError(f"unknown relation {name!r}") from None

    def by_kind(self, *kinds: RelationKind) -> list[RelationDef]:
        return [r for r in self.relations.values() if r.kind in kinds]

    def columns_of(self, name: str) -> list[ColumnDef]:
        """Columns a query sees when it references `name`."""
        rel = self.relation(name)
        if rel.kind in TABLE_KINDS:
            return rel.physical_columns
        if rel.kind is RelationKind.ASYNC_VIEW:
            # readable result relation at the coordinator: payload + system
            return infer_output_columns(rel.query, self) + [
                ColumnDef(c, "INT") for c in rel.system_columns
            ]
        return infer_output_columns(rel.query, self)


# --- template expansion -------------------------------------------------------


def expand_templates(statements: list[Statement]) -> list[Statement]:
    templates: dict[str, CreateTemplate] = {}
    out: list[Statement] = []
    for stmt in statements:
        if isinstance(stmt, CreateTemplate):
            if stmt.name in templates:
                raise CompileError(f"template {stmt.name!r} declared twice")
            templates[stmt.name] = stmt
            continue
        if isinstance(stmt, UseTemplate):
            out.append(_instantiate(stmt, templates))
            continue
        out.append(stmt)
    return out


def _instantiate(use: UseTemplate, templates: dict[str, CreateTemplate]) -> Statement:
    template = templates.get(use.template)
    if template is None:
        raise UnknownTemplateError(f"unknown template {use.template!r}")
    for var in use.bindings:
        if var not in template.params:
            raise MissingBindingError(
                f"template {template.name!r} has no variable {var!r}"
            )
    substituted = []
    for tok in tokenize(template.body)[:-1]:
        if tok.kind == "tvar":
            var = str(tok.value)
            if var not in use.bindings:
                raise MissingBindingError(
                    f"template {template.name!r} variable {var!r} is unbound"
                )
            substituted.extend(tokenize(use.bindings[var])[:-1])
        else:
            substituted.append(tok)
    try:
        query = parse_query_tokens(substituted)
    except ParseError as exc:
        raise SubstitutionParseError(
            f"template {template.name!r} body does not parse after substitution: {exc}"
        ) from exc
    cls = {"view": CreateView, "output": CreateOutput, "async_view": CreateAsyncView}[use.target]
    stmt = cls(name=use.name, query=query)
    stmt.span = use.span
    return stmt


# --- schema copy ---------------------------------------------------------------


def resolve_schema_copy(
    statements: list[Statement], base_schemas: dict[str, list[ColumnDef]] | None = None
) -> list[Statement]:
    known: dict[str, list[ColumnDef]] = {
        name: list(cols) for name, cols in (base_schemas or {}).items()
    }
    out: list[Statement] = []
    for stmt in statements:
        if isinstance(stmt, (CreateEventTable, CreateTable)):
            known[stmt.name] = stmt.columns
            out.append(stmt)
            continue
        if isinstance(stmt, SchemaCopy):
            source = known.get(stmt.source)
            if source is None:
                raise UnknownSourceRelationError(
                    f"schema copy {stmt.name!r}: unknown source relation {stmt.source!r}"
                )
            # types only; CHECK constraints do not travel with a copy
            columns = [ColumnDef(c.name, c.type) for c in source]
            cls = CreateEventTable if stmt.event else CreateTable
            copied = cls(name=stmt.name, columns=columns)
            copied.span = stmt.span
            known[stmt.name] = columns
            out.append(copied)
            continue
        out.append(stmt)
    return out


# --- catalog construction -------------------------------------------------------


def build_catalog(
    statements: list[Statement],
    base_schemas: dict[str, list[ColumnDef]] | None = None,
    udfs: dict[str, UdfDef] | None = None,
) -> Catalog:
    catalog = Catalog(udfs=dict(BUILTIN_UDFS))
    if udfs:
        catalog.udfs.update(udfs)

    for name, cols in (base_schemas or {}).items():
        catalog.relations[name] = RelationDef(
            name=name, kind=RelationKind.TABLE, columns=list(cols), is_base=True
        )

    def add(rel: RelationDef) -> None:
        if rel.name in catalog.relations:
            raise DuplicateRelationError(f"relation {rel.name!r} declared twice")
        catalog.relations[rel.name] = rel

    for stmt in statements:
        if isinstance(stmt, CreateEventTable):
            add(RelationDef(stmt.name, RelationKind.EVENT_TABLE, list(stmt.columns)))
        elif isinstance(stmt, CreateTable):
            add(RelationDef(stmt.name, RelationKind.TABLE, list(stmt.columns)))
        elif isinstance(stmt, CreateView):
            add(RelationDef(stmt.name, RelationKind.VIEW, query=stmt.query))
        elif isinstance(stmt, CreateAsyncView):
            add(RelationDef(stmt.name, RelationKind.ASYNC_VIEW, query=stmt.query))
        elif isinstance(stmt, CreateOutput):
            add(RelationDef(stmt.name, RelationKind.OUTPUT, query=stmt.query))
        elif isinstance(stmt, CreateProgram):
            catalog.programs[stmt.name] = ProgramDef(stmt.name, stmt.triggers, stmt.commands)
        elif isinstance(stmt, NotEmptyConstraint):
            catalog.constraints.append(ViewConstraint(view=stmt.name))
        elif isinstance(stmt, InsertStatement):
            raise CompileError("top-level INSERT is not part of the dialect")
        else:
            raise CompileError(f"unexpected statement {stmt.kind} after expansion")

    for program in catalog.programs.values():
        for target in program.insert_targets():
            rel = catalog.relation(target)
            if rel.kind is RelationKind.TABLE and not rel.is_base:
                rel.kind = RelationKind.HISTORY_TABLE
            elif rel.kind is not RelationKind.HISTORY_TABLE:
                raise CompileError(
                    f"program {program.name} inserts into {target!r}, "
                    "which is not a history table"
                )
        for trigger in program.triggers:
            rel = catalog.relation(trigger)
            if rel.kind not in (RelationKind.EVENT_TABLE, RelationKind.ASYNC_VIEW):
                raise CompileError(
                    f"program {program.name} trigger {trigger!r} is not an event table"
                )

    for constraint in catalog.constraints:
        rel = catalog.relations.get(constraint.view)
        if rel is not None and rel.kind in (RelationKind.VIEW, RelationKind.OUTPUT):
            rel.constraints.append(constraint)

    return catalog


def augment_system_columns(catalog: Catalog) -> Catalog:
    by_kind = {
        RelationKind.EVENT_TABLE: ("timestep", "timestamp"),
        RelationKind.ASYNC_VIEW: ("timestep", "timestamp", "request_timestep"),
        RelationKind.HISTORY_TABLE: ("timestep",),
    }
    for rel in catalog.relations.values():
        system = by_kind.get(rel.kind, ())
        if system:
            for col in rel.columns:
                if col.name in SYSTEM_COLUMNS:
                    raise ReservedColumnNameError(
                        f"{rel.name!r}: column {col.name!r} shadows a system column"
                    )
        rel.system_columns = system
        if rel.kind is RelationKind.ASYNC_VIEW and rel.query is not None:
            for col in infer_output_columns(rel.query, catalog):
                if col.name in SYSTEM_COLUMNS:
                    raise ReservedColumnNameError(
                        f"async view {rel.name!r} result column {col.name!r} "
                        "shadows a system column"
                    )
    return catalog


# --- column inference -----------------------------------------------------------


def infer_output_columns(query: SelectQuery | None, catalog: Catalog) -> list[ColumnDef]:
    """Names and (best-effort) types for a query's result columns."""
    if query is None:
        return []
    columns: list[ColumnDef] = []
    taken: set[str] = set()

    def claim(name: str, type_: str | None) -> None:
        base = name
        n = 2
        while name in taken:
            name = f"{base}_{n}"
            n += 1
        taken.add(name)
        columns.append(ColumnDef(name, type_))

    bindings = _query_bindings(query)
    for i, item in enumerate(query.items):
        expr = item.expr
        if isinstance(expr, Star):
            targets = [expr.table] if expr.table else list(bindings)
            for binding in targets:
                rel_name = bindings.get(binding)
                if rel_name is None:
                    raise UnknownRelationError(f"unknown table alias {binding!r}")
                for col in catalog.columns_of(rel_name):
                    claim(col.name, col.type)
            continue
        if item.alias:
            claim(item.alias, _expr_type(expr, bindings, catalog))
        elif isinstance(expr, ColumnRef):
            claim(expr.column, _expr_type(expr, bindings, catalog))
        elif isinstance(expr, FuncCall):
            claim(expr.name.lower(), None)
        else:
            claim(f"col{i + 1}", None)
    return columns


def _query_bindings(query: SelectQuery) -> dict[str, str]:
    return {ref.binding: ref.name for ref in query.table_refs()}


def _expr_type(expr: Expr, bindings: dict[str, str], catalog: Catalog) -> str | None:
    if isinstance(expr, ColumnRef):
        names = [bindings[expr.table]] if expr.table in bindings else list(bindings.values())
        for rel_name in names:
            try:
                for col in catalog.columns_of(rel_name):
                    if col.name == expr.column:
                        return col.type
            except UnknownRelationError:
                return None
    return None


# --- name resolution and shorthand rewriting -------------------------------------


class _Scope:
    def __init__(self, catalog: Catalog, query: SelectQuery, parent: "_Scope | None" = None):
        self.catalog = catalog
        self.query = query
        self.parent = parent
        self.bindings: dict[str, str] = {}
        for ref in query.table_refs():
            if ref.binding in self.bindings:
                raise DuplicateRelationError(
                    f"duplicate table alias {ref.binding!r} in query"
                )
            self.bindings[ref.binding] = ref.name
        self.aliases = {item.alias for item in query.items if item.alias}

    def column_names(self, binding: str) -> set[str]:
        relation = self.catalog.relation(self.bindings[binding])
        names = {c.name for c in self.catalog.columns_of(relation.name)}
        if relation.kind in TABLE_KINDS:
            names.add("rowid")  # implicit engine column on physical tables
        return names

    def resolve(self, ref: ColumnRef, allow_alias: bool) -> None:
        if ref.table is not None:
            if ref.table not in self.bindings:
                if self.parent is not None:
                    self.parent.resolve(ref, allow_alias=False)
                    return
                raise UnknownRelationError(f"unknown table alias {ref.table!r}")
            if ref.column not in self.column_names(ref.table):
                raise UnknownColumnError(
                    f"relation {self.bindings[ref.table]!r} has no column {ref.column!r}"
                )
            return
        if allow_alias and ref.column in self.aliases:
            return
        holders = [b for b in self.bindings if ref.column in self.column_names(b)]
        if len(holders) > 1:
            raise AmbiguousColumnError(
                f"column {ref.column!r} is ambiguous across {sorted(holders)}"
            )
        if not holders:
            if self.parent is not None:
                self.parent.resolve(ref, allow_alias=False)
                return
            raise UnknownColumnError(f"unknown column {ref.column!r}")


def resolve_query(query: SelectQuery, catalog: Catalog, parent: _Scope | None = None) -> None:
    """Validate and normalize one query in place (recursing into subqueries)."""
    for ref in query.table_refs():
        rel = catalog.relation(ref.name)
        available = set(rel.system_columns) | {c.name for c in rel.columns}
        if ref.latest and "timestep" not in available:
            raise LatestOnNonEventError(f"LATEST on {ref.name!r}, which has no timestep")
        if ref.latest_request and "request_timestep" not in available:
            raise LatestOnNonEventError(
                f"LATEST_REQUEST on {ref.name!r}, which has no request_timestep"
            )

    scope = _Scope(catalog, query, parent)
    _rewrite_join_shorthand(query, scope)

    def walk(expr: Expr, allow_alias: bool, in_args: bool = False) -> None:
        if isinstance(expr, ColumnRef):
            scope.resolve(expr, allow_alias)
        elif isinstance(expr, Star):
            if expr.table is not None and expr.table not in scope.bindings:
                raise UnknownRelationError(f"unknown table alias {expr.table!r}")
        elif isinstance(expr, FuncCall):
            _check_function(expr, scope)
            _expand_star_args(expr, scope)
            for arg in expr.args:
                walk(arg, allow_alias, in_args=True)
        elif isinstance(expr, BinaryOp):
            walk(expr.left, allow_alias)
            walk(expr.right, allow_alias)
        elif isinstance(expr, UnaryOp):
            walk(expr.operand, allow_alias)
        elif isinstance(expr, IsNull):
            walk(expr.operand, allow_alias)
        elif isinstance(expr, CaseExpr):
            if expr.operand is not None:
                walk(expr.operand, allow_alias)
            for cond, result in expr.whens:
                walk(cond, allow_alias)
                walk(result, allow_alias)
            if expr.else_result is not None:
                walk(expr.else_result, allow_alias)
        elif isinstance(expr, ScalarSubquery):
            resolve_query(expr.query, catalog, parent=scope)

    for item in query.items:
        walk(item.expr, allow_alias=False)
    for join in query.joins:
        if join.on is not None:
            walk(join.on, allow_alias=False)
    if query.where is not None:
        walk(query.where, allow_alias=False)
    for expr in query.group_by:
        walk(expr, allow_alias=True)
    if query.having is not None:
        walk(query.having, allow_alias=True)
    for order in query.order_by:
        walk(order.expr, allow_alias=True)
    if query.limit is not None:
        walk(query.limit, allow_alias=False)


def _rewrite_join_shorthand(query: SelectQuery, scope: _Scope) -> None:
    """`a JOIN b ON col` with col in both sides becomes `a.col = b.col`."""
    if query.table is None:
        return
    earlier = [query.table.binding]
    for join in query.joins:
        right = join.table.binding
        if isinstance(join.on, ColumnRef) and join.on.table is None:
            col = join.on.column
            if col in scope.column_names(right):
                holders = [b for b in earlier if col in scope.column_names(b)]
                if len(holders) == 1:
                    join.on = BinaryOp(
                        "=",
                        ColumnRef(column=col, table=holders[0]),
                        ColumnRef(column=col, table=right),
                    )
                elif len(holders) > 1:
                    raise AmbiguousColumnError(
                        f"join column {col!r} is ambiguous across {sorted(holders)}"
                    )
        earlier.append(right)


def _check_function(call: FuncCall, scope: _Scope) -> None:
    udf = scope.catalog.udfs.get(call.name)
    if udf is not None:
        arity = len(call.args)
        for arg in call.args:
            if isinstance(arg, Star):
                if arg.table is None:
                    raise CompileError(
                        f"{call.name}: bare * as a UDF argument must be qualified"
                    )
                relation = scope.bindings.get(arg.table)
                if relation is None:
                    raise UnknownRelationError(f"unknown table alias {arg.table!r}")
                arity += len(scope.catalog.relation(relation).columns) - 1
        if arity != udf.arity:
            raise UnknownUdfError(
                f"UDF {call.name!r} takes {udf.arity} arguments, got {arity}"
            )
        return
    if call.name.upper() in ENGINE_FUNCTIONS:
        return
    raise UnknownUdfError(f"unknown function {call.name!r}")


def _expand_star_args(call: FuncCall, scope: _Scope) -> None:
    """`f(b.*)` passes the USER columns of b's relation, in declared order."""
    expanded: list[Expr] = []
    for arg in call.args:
        if isinstance(arg, Star) and arg.table is not None:
            relation = scope.catalog.relation(scope.bindings[arg.table])
            expanded.extend(
                ColumnRef(column=c.name, table=arg.table) for c in relation.columns
            )
        else:
            expanded.append(arg)
    call.args = expanded


# --- LATEST desugaring ------------------------------------------------------------


def desugar_latest(query: SelectQuery, catalog: Catalog) -> SelectQuery:
    """Expand LATEST / LATEST_REQUEST into MAX-subquery predicates."""
    out = copy.deepcopy(query)
    _desugar_in_place(out, catalog)
    return out


def _desugar_in_place(query: SelectQuery, catalog: Catalog) -> None:
    conjuncts: list[Expr] = []
    for ref in query.table_refs():
        if not (ref.latest or ref.latest_request):
            continue
        rel = catalog.relation(ref.name)
        column = "timestep" if ref.latest else "request_timestep"
        available = set(rel.system_columns) | {c.name for c in rel.columns}
        if column not in available:
            raise LatestOnNonEventError(
                f"{'LATEST' if ref.latest else 'LATEST_REQUEST'} on {ref.name!r}, "
                f"which has no {column} column"
            )
        subquery = SelectQuery(
            items=[SelectItem(FuncCall("MAX", [ColumnRef(column)]))],
            table=TableRef(name=ref.name),
        )
        conjuncts.append(
            BinaryOp(
                "=",
                ColumnRef(column=column, table=ref.binding),
                ScalarSubquery(subquery),
            )
        )
        ref.latest = False
        ref.latest_request = False
    for conjunct in conjuncts:
        query.where = conjunct if query.where is None else BinaryOp("AND", query.where, conjunct)
    for sub in _nested_queries(query):
        _desugar_in_place(sub, catalog)


def _nested_queries(query: SelectQuery) -> list[SelectQuery]:
    found: list[SelectQuery] = []

    def walk(expr: Expr | None) -> None:
        if expr is None:
            return
        if isinstance(expr, ScalarSubquery):
            found.append(expr.query)
        elif isinstance(expr, BinaryOp):
            walk(expr.left)
            walk(expr.right)
        elif isinstance(expr, UnaryOp):
            walk(expr.operand)
        elif isinstance(expr, IsNull):
            walk(expr.operand)
        elif isinstance(expr, FuncCall):
            for arg in expr.args:
                walk(arg)
        elif isinstance(expr, CaseExpr):
            walk(expr.operand)
            for cond, result in expr.whens:
                walk(cond)
                walk(result)
            walk(expr.else_result)

    for item in query.items:
        walk(item.expr)
    for join in query.joins:
        walk(join.on)
    walk(query.where)
    for expr in query.group_by:
        walk(expr)
    walk(query.having)
    for order in query.order_by:
        walk(order.expr)
    walk(query.limit)
    return found


def referenced_relations(query: SelectQuery) -> set[str]:
    names = {ref.name for ref in query.table_refs()}
    for sub in _nested_queries(query):
        names |= referenced_relations(sub)
    return names


def dependency_closure(name: str, catalog: Catalog) -> frozenset[str]:
    """Transitive reads of a relation, stopping at async views.

    A query that references an async view reads its locally materialized
    result relation, so changes to the async view's *inputs* do not count as
    changes to the reader until a result event lands.
    """
    graph = catalog.graph
    seen: set[str] = set()
    stack = list(graph.reads.get(name, ()))
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        rel = catalog.relations.get(cur)
        if rel is not None and rel.kind is RelationKind.ASYNC_VIEW:
            continue
        stack.extend(graph.reads.get(cur, ()))
    return frozenset(seen)


# --- dependency graph ----------------------------------------------------------


def build_dependency_graph(catalog: Catalog) -> DependencyGraph:
    reads: dict[str, tuple[str, ...]] = {}
    for rel in catalog.relations.values():
        if rel.query is not None:
            reads[rel.name] = tuple(sorted(referenced_relations(rel.query)))
        else:
            reads[rel.name] = ()
    writes: dict[str, set[str]] = {}
    for program in catalog.programs.values():
        for trigger in program.triggers:
            writes.setdefault(trigger, set()).update(program.insert_targets())
    graph = DependencyGraph(
        reads=reads,
        program_writes={k: tuple(sorted(v)) for k, v in writes.items()},
    )
    graph.topological_order()  # raises CyclicDependencyError on view cycles
    return graph


# --- diagnostics ----------------------------------------------------------------


def check_constraints_wellformed(catalog: Catalog) -> list[str]:
    diagnostics: list[str] = []
    for rel in catalog.relations.values():
        for col in rel.columns:
            if col.check is None:
                continue
            own = {c.name for c in rel.columns}
            for ref in _column_refs(col.check):
                if ref.table is not None and ref.table != rel.name:
                    diagnostics.append(
                        f"{rel.name}.{col.name}: CHECK references other relation {ref.table!r}"
                    )
                elif ref.column not in own:
                    diagnostics.append(
                        f"{rel.name}.{col.name}: CHECK references unknown column {ref.column!r}"
                    )
    for constraint in catalog.constraints:
        rel = catalog.relations.get(constraint.view)
        if rel is None:
            diagnostics.append(f"NOT EMPTY names unknown view {constraint.view!r}")
        elif rel.kind not in (RelationKind.VIEW, RelationKind.OUTPUT):
            diagnostics.append(
                f"NOT EMPTY target {constraint.view!r} is a {rel.kind.value}, not a view"
            )
    return diagnostics


def _column_refs(expr: Expr) -> list[ColumnRef]:
    refs: list[ColumnRef] = []

    def walk(node: Expr) -> None:
        if isinstance(node, ColumnRef):
            refs.append(node)
        elif isinstance(node, BinaryOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, (UnaryOp, IsNull)):
            walk(node.operand)
        elif isinstance(node, FuncCall):
            for arg in node.args:
                walk(arg)
        elif isinstance(node, CaseExpr):
            if node.operand is not None:
                walk(node.operand)
            for cond, result in node.whens:
                walk(cond)
                walk(result)
            if node.else_result is not None:
                walk(node.else_result)

    walk(expr)
    return refs


# --- driver ----------------------------------------------------------------------


def compile_program(
    statements: list[Statement],
    base_schemas: dict[str, list[ColumnDef]] | None = None,
    udfs: dict[str, UdfDef] | None = None,
) -> Catalog:
    expanded = expand_templates(statements)
    expanded = resolve_schema_copy(expanded, base_schemas)
    catalog = build_catalog(expanded, base_schemas, udfs)
    # cycle check first: column inference recurses through view queries
    catalog.graph = build_dependency_graph(catalog)
    augment_system_columns(catalog)

    for rel in catalog.relations.values():
        if rel.query is not None:
            resolve_query(rel.query, catalog)
    for program in catalog.programs.values():
        for command in program.commands:
            query = command.select if isinstance(command, InsertStatement) else command
            if query is not None:
                resolve_query(query, catalog)
            if isinstance(command, InsertStatement):
                _check_insert_arity(command, catalog)

    catalog.diagnostics.extend(check_constraints_wellformed(catalog))
    event_names = {r.name for r in catalog.by_kind(RelationKind.EVENT_TABLE, RelationKind.ASYNC_VIEW)}
    for rel in catalog.by_kind(RelationKind.OUTPUT):
        closure = catalog.graph.closure(rel.name)
        if rel.query is not None and rel.query.table is not None and not (closure & event_names):
            history = {r.name for r in catalog.by_kind(RelationKind.HISTORY_TABLE)}
            if not (closure & history):
                catalog.diagnostics.append(
                    f"output {rel.name!r} depends on no event table; it will never re-render"
                )
    return catalog


def _check_insert_arity(stmt: InsertStatement, catalog: Catalog) -> None:
    target = catalog.relation(stmt.table)
    expected = stmt.columns if stmt.columns else [c.name for c in target.columns]
    user_columns = {c.name for c in target.columns}
    for col in expected:
        if col not in user_columns:
            raise UnknownColumnError(f"{stmt.table!r} has no column {col!r}")
    if stmt.select is not None:
        arities = [len(infer_output_columns(stmt.select, catalog))]
    else:
        arities = [len(row) for row in stmt.values or [[]]]
    for arity in arities:
        if arity != len(expected):
            raise CompileError(
                f"INSERT into {stmt.table!r} provides {arity} values "
                f"for {len(expected)} columns"
            )


def dump_ir(catalog: Catalog) -> str:
    """Human-readable compiled-plan text for --dump-ir."""
    from .printer import query_sql

    lines = ["== relations =="]
    for rel in catalog.relations.values():
        cols = ", ".join(f"{c.name}:{c.type or 'ANY'}" for c in rel.columns)
        sys_cols = ", ".join(rel.system_columns)
        line = f"{rel.name} [{rel.kind.value}] ({cols})"
        if sys_cols:
            line += f" +system({sys_cols})"
        if rel.is_base:
            line += " base"
        lines.append(line)
        if rel.query is not None:
            lines.append(f"  query: {query_sql(rel.query)}")
    if catalog.programs:
        lines.append("== programs ==")
        for program in catalog.programs.values():
            lines.append(f"{program.name} AFTER ({', '.join(program.triggers)})")
    if catalog.constraints:
        lines.append("== constraints ==")
        for constraint in catalog.constraints:
            lines.append(f"{constraint.view} NOT EMPTY")
    if catalog.graph is not None:
        lines.append("== dependencies ==")
        for name, deps in sorted(catalog.graph.reads.items()):
            if deps:
                lines.append(f"{name} <- {', '.join(deps)}")
        for trigger, targets in sorted(catalog.graph.program_writes.items()):
            lines.append(f"{trigger} ~> {', '.join(targets)} (staged)")
    if catalog.diagnostics:
        lines.append("== diagnostics ==")
        lines.extend(catalog.diagnostics)
    return "\n".join(lines)
