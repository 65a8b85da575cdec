"""Render AST nodes back to dialect text.

The printed form is canonical: printing a parsed program and re-parsing it
yields a structurally equal AST. Desugared queries print to plain SQL that the
embedded SQLite engines accept directly.
"""

from __future__ import annotations

import re

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
    Join,
    Literal,
    NotEmptyConstraint,
    ScalarSubquery,
    SchemaCopy,
    SelectQuery,
    Star,
    Statement,
    TableRef,
    UnaryOp,
    UseTemplate,
)
from .parser import KEYWORDS

_BARE_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def quote_ident(name: str) -> str:
    if _BARE_IDENT.match(name) and name.upper() not in KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def quote_string(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def expr_sql(expr: Expr) -> str:
    if isinstance(expr, Literal):
        if expr.value is None:
            return "NULL"
        if isinstance(expr.value, str):
            return quote_string(expr.value)
        return repr(expr.value)
    if isinstance(expr, ColumnRef):
        col = quote_ident(expr.column)
        return f"{quote_ident(expr.table)}.{col}" if expr.table else col
    if isinstance(expr, Star):
        return f"{quote_ident(expr.table)}.*" if expr.table else "*"
    if isinstance(expr, FuncCall):
        if expr.star:
            return f"{expr.name}(*)"
        return f"{expr.name}({', '.join(expr_sql(a) for a in expr.args)})"
    if isinstance(expr, BinaryOp):
        return f"({expr_sql(expr.left)} {expr.op} {expr_sql(expr.right)})"
    if isinstance(expr, UnaryOp):
        if expr.op == "NOT":
            return f"(NOT {expr_sql(expr.operand)})"
        return f"({expr.op}{expr_sql(expr.operand)})"
    if isinstance(expr, IsNull):
        return f"({expr_sql(expr.operand)} IS {'NOT ' if expr.negated else ''}NULL)"
    if isinstance(expr, CaseExpr):
        parts = ["CASE"]
        if expr.operand is not None:
            parts.append(expr_sql(expr.operand))
        for cond, result in expr.whens:
            parts.append(f"WHEN {expr_sql(cond)} THEN {expr_sql(result)}")
        if expr.else_result is not None:
            parts.append(f"ELSE {expr_sql(expr.else_result)}")
        parts.append("END")
        return " ".join(parts)
    if isinstance(expr, ScalarSubquery):
        return f"({query_sql(expr.query)})"
    raise TypeError(f"cannot print expression {expr!r}")


def _table_ref_sql(ref: TableRef) -> str:
    parts = []
    if ref.latest:
        parts.append("LATEST")
    if ref.latest_request:
        parts.append("LATEST_REQUEST")
    parts.append(quote_ident(ref.name))
    if ref.alias:
        parts.append(f"AS {quote_ident(ref.alias)}")
    return " ".join(parts)


def _join_sql(join: Join) -> str:
    if join.kind == "cross":
        return f", {_table_ref_sql(join.table)}"
    head = "LEFT OUTER JOIN" if join.kind == "left" else "JOIN"
    text = f" {head} {_table_ref_sql(join.table)}"
    if join.on is not None:
        text += f" ON {expr_sql(join.on)}"
    return text


def query_sql(query: SelectQuery) -> str:
    items = []
    for item in query.items:
        text = expr_sql(item.expr)
        if item.alias:
            text += f" AS {quote_ident(item.alias)}"
        items.append(text)
    sql = "SELECT " + ", ".join(items)
    if query.table is not None:
        sql += " FROM " + _table_ref_sql(query.table)
        for join in query.joins:
            sql += _join_sql(join)
    if query.where is not None:
        sql += " WHERE " + expr_sql(query.where)
    if query.group_by:
        sql += " GROUP BY " + ", ".join(expr_sql(e) for e in query.group_by)
    if query.having is not None:
        sql += " HAVING " + expr_sql(query.having)
    if query.order_by:
        parts = [expr_sql(o.expr) + (" DESC" if o.descending else "") for o in query.order_by]
        sql += " ORDER BY " + ", ".join(parts)
    if query.limit is not None:
        sql += " LIMIT " + expr_sql(query.limit)
    return sql


def _column_def_sql(col: ColumnDef) -> str:
    text = quote_ident(col.name)
    if col.type:
        text += f" {col.type}"
    if col.check is not None:
        text += f" CHECK {expr_sql(col.check)}"
    return text


def insert_sql(stmt: InsertStatement) -> str:
    sql = f"INSERT INTO {quote_ident(stmt.table)}"
    if stmt.columns:
        sql += "(" + ", ".join(quote_ident(c) for c in stmt.columns) + ")"
    if stmt.select is not None:
        return sql + " " + query_sql(stmt.select)
    rows = ["(" + ", ".join(expr_sql(v) for v in row) + ")" for row in stmt.values or []]
    return sql + " VALUES " + ", ".join(rows)


def statement_sql(stmt: Statement) -> str:
    if isinstance(stmt, CreateEventTable):
        cols = ", ".join(_column_def_sql(c) for c in stmt.columns)
        return f"CREATE EVENT TABLE {quote_ident(stmt.name)}({cols});"
    if isinstance(stmt, CreateTable):
        cols = ", ".join(_column_def_sql(c) for c in stmt.columns)
        return f"CREATE TABLE {quote_ident(stmt.name)}({cols});"
    if isinstance(stmt, SchemaCopy):
        head = "CREATE EVENT TABLE" if stmt.event else "CREATE TABLE"
        return f"{head} {quote_ident(stmt.name)} AS {quote_ident(stmt.source)};"
    if isinstance(stmt, CreateView):
        return f"CREATE VIEW {quote_ident(stmt.name)} AS {query_sql(stmt.query)};"
    if isinstance(stmt, CreateAsyncView):
        return f"CREATE ASYNC VIEW {quote_ident(stmt.name)} AS {query_sql(stmt.query)};"
    if isinstance(stmt, CreateOutput):
        return f"CREATE OUTPUT {quote_ident(stmt.name)} AS {query_sql(stmt.query)};"
    if isinstance(stmt, CreateTemplate):
        params = ", ".join(stmt.params)
        return f"CREATE TEMPLATE {quote_ident(stmt.name)}({params}) AS {stmt.body};"
    if isinstance(stmt, UseTemplate):
        head = {"view": "VIEW", "output": "OUTPUT", "async_view": "ASYNC VIEW"}[stmt.target]
        bindings = ", ".join(f"{k}={quote_string(v)}" for k, v in stmt.bindings.items())
        return (
            f"CREATE {head} {quote_ident(stmt.name)} AS "
            f"USE TEMPLATE {quote_ident(stmt.template)}({bindings});"
        )
    if isinstance(stmt, CreateProgram):
        triggers = ", ".join(quote_ident(t) for t in stmt.triggers)
        commands = []
        for command in stmt.commands:
            if isinstance(command, InsertStatement):
                commands.append(insert_sql(command) + ";")
            else:
                commands.append(query_sql(command) + ";")
        return f"CREATE PROGRAM AFTER ({triggers}) BEGIN " + " ".join(commands) + " END;"
    if isinstance(stmt, NotEmptyConstraint):
        return f"{quote_ident(stmt.name)} NOT EMPTY;"
    raise TypeError(f"cannot print statement {stmt!r}")


def program_sql(statements: list[Statement]) -> str:
    return "\n".join(statement_sql(s) for s in statements)
