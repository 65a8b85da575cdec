"""Plain-text rendering for the REPL: aligned tables and ASCII bar charts.

Display only; golden tests always compare the JSON output log, never this.
"""

from __future__ import annotations

BAR_WIDTH = 40


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def format_table(columns: tuple[str, ...], rows: tuple[tuple, ...]) -> str:
    if not columns:
        return "(no columns)"
    widths = [len(c) for c in columns]
    text_rows = [[_cell(v) for v in row] for row in rows]
    for row in text_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    header = "  ".join(c.ljust(widths[i]) for i, c in enumerate(columns))
    rule = "  ".join("-" * w for w in widths)
    lines = [header, rule]
    lines.extend("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in text_rows)
    if not rows:
        lines.append("(empty)")
    return "\n".join(lines)


def is_bar_shaped(columns: tuple[str, ...], rows: tuple[tuple, ...]) -> bool:
    """Label + numeric count pairs render as bars."""
    return (
        len(columns) == 2
        and len(rows) > 0
        and all(isinstance(r[1], (int, float)) and not isinstance(r[1], bool) for r in rows)
    )


def format_bars(columns: tuple[str, ...], rows: tuple[tuple, ...]) -> str:
    label_width = max(len(_cell(r[0])) for r in rows)
    peak = max(abs(r[1]) for r in rows) or 1
    lines = []
    for label, count in rows:
        bar = "#" * max(1, round(abs(count) / peak * BAR_WIDTH)) if count else ""
        lines.append(f"{_cell(label).ljust(label_width)}  {bar} {_cell(count)}")
    return "\n".join(lines)


def render_frame_text(columns: tuple[str, ...], rows: tuple[tuple, ...]) -> str:
    if is_bar_shaped(columns, rows):
        return format_bars(columns, rows)
    return format_table(columns, rows)
