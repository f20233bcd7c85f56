"""Serialize a CellGrid to canonical JSON, an HTML fragment, or RTF; parse JSON back.

Renderers only ever read ``cell_formatted``. Raw values are for comparison and
reconciliation, never for display.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

from tflparity.errors import InvalidGrid, SchemaError, ValidityError
from tflparity.ir.model import (
    Alignment,
    Cell,
    CellGrid,
    CellType,
    ElementType,
    HEADER_ELEMENTS,
    StructureEntry,
    validate_grid,
)


class OutputFormat(str, Enum):
    JSON = "JSON"
    HTML = "HTML"
    RTF = "RTF"


class FootnotePolicy(str, Enum):
    INLINE = "INLINE"
    OMIT = "OMIT"


@dataclass(frozen=True)
class RenderConfig:
    format: OutputFormat = OutputFormat.HTML
    title: str | None = None
    footnote_policy: FootnotePolicy = FootnotePolicy.INLINE
    column_widths_twips: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "format", OutputFormat(self.format))
        object.__setattr__(self, "footnote_policy", FootnotePolicy(self.footnote_policy))
        if self.column_widths_twips is not None:
            widths = tuple(self.column_widths_twips)
            if any(isinstance(w, bool) or not isinstance(w, int) or w <= 0 for w in widths):
                raise ValueError("column widths must be positive integers")
            object.__setattr__(self, "column_widths_twips", widths)


def _require_valid(grid: CellGrid) -> None:
    report = validate_grid(grid)
    if not report.valid:
        raise InvalidGrid(report)


# -- JSON ---------------------------------------------------------------------

STRUCTURE_FIELDS = (
    "dimension", "dim_id", "label", "sort_order", "indent_level", "alignment", "span_count", "element_type",
)
CELL_FIELDS = ("row_id", "col_id", "cell_value", "cell_formatted", "cell_type", "sort_order")


def _number(value: float | None):
    if value is None:
        return None
    if value.is_integer() and abs(value) < 2**53:
        return int(value)
    return value  # json uses repr(), the shortest round-trip form


def to_json(grid: CellGrid) -> str:
    _require_valid(grid)
    doc = {
        "report_id": grid.report_id,
        "execution_id": grid.execution_id,
        "structure": [
            {
                "dimension": s.dimension.value,
                "dim_id": s.dim_id,
                "label": s.label,
                "sort_order": s.sort_order,
                "indent_level": s.indent_level,
                "alignment": s.alignment.value,
                "span_count": s.span_count,
                "element_type": s.element_type.value,
            }
            for s in grid.structure
        ],
        "cells": [
            {
                "row_id": c.row_id,
                "col_id": c.col_id,
                "cell_value": _number(c.cell_value),
                "cell_formatted": c.cell_formatted,
                "cell_type": c.cell_type.value,
                "sort_order": c.sort_order,
            }
            for c in grid.cells
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _check_keys(obj: Any, required: Sequence[str], path: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", path)
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"missing required field {missing[0]!r}", f"{path}.{missing[0]}" if path else missing[0])
    extra = sorted(set(obj) - set(required))
    if extra:
        raise SchemaError(f"unexpected field {extra[0]!r}", f"{path}.{extra[0]}" if path else extra[0])
    return obj


def _build(factory, kwargs: dict, path: str):
    try:
        return factory(**kwargs)
    except SchemaError as exc:
        raise SchemaError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None


def from_json(doc: str | bytes, validate: bool = True) -> CellGrid:
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    _check_keys(data, ("report_id", "execution_id", "structure", "cells"), "")
    rid, eid = data["report_id"], data["execution_id"]
    for key in ("report_id", "execution_id"):
        if not isinstance(data[key], str):
            raise SchemaError("expected text", key)
    for key in ("structure", "cells"):
        if not isinstance(data[key], list):
            raise SchemaError("expected an array", key)

    structure = []
    for i, raw in enumerate(data["structure"]):
        path = f"structure[{i}]"
        raw = _check_keys(raw, STRUCTURE_FIELDS, path)
        structure.append(_build(StructureEntry, {"report_id": rid, "execution_id": eid, **raw}, path))

    cells = []
    for i, raw in enumerate(data["cells"]):
        path = f"cells[{i}]"
        raw = _check_keys(raw, CELL_FIELDS, path)
        value = raw["cell_value"]
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise SchemaError(f"expected number or null, got {type(value).__name__}", f"{path}.cell_value")
        cells.append(_build(Cell, {"report_id": rid, "execution_id": eid, **raw}, path))

    grid = CellGrid(tuple(cells), tuple(structure))
    if validate:
        report = validate_grid(grid)
        if not report.valid:
            raise ValidityError(report)
    return grid


# -- HTML ---------------------------------------------------------------------

_CSS_ALIGN = {Alignment.LEFT: "left", Alignment.CENTER: "center", Alignment.RIGHT: "right"}


def _display(cell: Cell | None, cfg: RenderConfig) -> str:
    if cell is None:
        return ""
    if cell.cell_type is CellType.FOOTNOTE and cfg.footnote_policy is FootnotePolicy.OMIT:
        return ""
    return cell.cell_formatted


def to_html(grid: CellGrid, cfg: RenderConfig | None = None) -> str:
    cfg = cfg or RenderConfig()
    _require_valid(grid)
    cmap = grid.cell_map()
    cols = grid.cols()
    has_stub = any(c.element_type is ElementType.ROW_HEADER for c in cols)
    header_rows = [r for r in grid.rows() if r.element_type in HEADER_ELEMENTS]
    body_rows = [r for r in grid.rows() if r.element_type not in HEADER_ELEMENTS]
    label_rows = not has_stub and any(r.label for r in body_rows)

    out = ['<table class="tfl">']
    if cfg.title:
        out.append(f"<caption>{html.escape(cfg.title)}</caption>")

    out.append("<thead>")
    if header_rows:
        for row in header_rows:
            out.append("<tr>")
            if label_rows:
                out.append("<th></th>")
            skip_until = 0
            for col in cols:
                if col.dim_id <= skip_until:
                    continue
                cell = cmap.get((row.dim_id, col.dim_id))
                span = 1
                if row.element_type is ElementType.SPANNING_HEADER and col.span_count > 1:
                    # extend only over EMPTY neighbours; contiguous spans only
                    for k in range(1, col.span_count):
                        nxt = cmap.get((row.dim_id, col.dim_id + k))
                        if col.dim_id + k > len(cols) or (nxt is not None and nxt.cell_type is not CellType.EMPTY):
                            break
                        span += 1
                    skip_until = col.dim_id + span - 1
                attrs = f' colspan="{span}"' if span > 1 else ""
                out.append(f'<th scope="col"{attrs}>{html.escape(_display(cell, cfg))}</th>')
            out.append("</tr>")
    elif any(c.label for c in cols):
        out.append("<tr>")
        if label_rows:
            out.append("<th></th>")
        for col in cols:
            out.append(f'<th scope="col">{html.escape(col.label)}</th>')
        out.append("</tr>")
    out.append("</thead>")

    out.append("<tbody>")
    for row in body_rows:
        css = ' class="separator"' if row.element_type is ElementType.SEPARATOR else ""
        if row.element_type is ElementType.TOTAL_ROW:
            css = ' class="total"'
        out.append(f"<tr{css}>")
        if label_rows:
            out.append(f'<th scope="row">{html.escape(row.label)}</th>')
        for col in cols:
            style = [f"text-align:{_CSS_ALIGN[col.alignment]}"]
            if row.indent_level and (col.element_type is ElementType.ROW_HEADER or col.dim_id == 1):
                style.insert(0, f"padding-left:{row.indent_level}em")
            text = _display(cmap.get((row.dim_id, col.dim_id)), cfg)
            out.append(f'<td style="{";".join(style)}">{html.escape(text)}</td>')
        out.append("</tr>")
    out.append("</tbody>")
    out.append("</table>")
    return "\n".join(out) + "\n"


def html_document(fragment: str, title: str = "") -> str:
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n"
        "<style>table.tfl{border-collapse:collapse}table.tfl td,table.tfl th{padding:2px 8px}</style>\n"
        "</head>\n<body>\n" + fragment + "</body>\n</html>\n"
    )


# -- RTF ----------------------------------------------------------------------

RTF_HEADER = "{\\rtf1\\ansi\\ansicpg1252\\deff0{\\fonttbl{\\f0\\fmodern Courier New;}}\\uc1\n"
DEFAULT_TABLE_TWIPS = 9360
_RTF_ALIGN = {Alignment.LEFT: "\\ql", Alignment.CENTER: "\\qc", Alignment.RIGHT: "\\qr"}


def rtf_escape(text: str) -> str:
    parts: list[str] = []
    for ch in text:
        code = ord(ch)
        if ch in "\\{}":
            parts.append("\\" + ch)
        elif ch == "\n":
            parts.append("\\line ")
        elif ch == "\t":
            parts.append("\\tab ")
        elif 32 <= code < 127:
            parts.append(ch)
        elif code < 32:
            parts.append(" ")
        elif code <= 0xFFFF:
            parts.append(f"\\u{code - 65536 if code > 32767 else code}?")
        else:
            high, low = divmod(code - 0x10000, 0x400)
            for unit in (0xD800 + high, 0xDC00 + low):
                parts.append(f"\\u{unit - 65536}?")
    return "".join(parts)


def rtf_from_rows(
    rows: Sequence[Sequence[str]],
    widths: Sequence[int] | None = None,
    alignments: Sequence[Alignment] | None = None,
    title: str | None = None,
) -> bytes:
    """Write a plain RTF table: one ``\\trowd .. \\row`` per row, one ``\\cell`` per entry."""
    out = [RTF_HEADER]
    if title:
        out.append("{\\pard\\qc\\b " + rtf_escape(title) + "\\b0\\par}\n")
    for row in rows:
        n = len(row)
        if widths is not None and len(widths) == n:
            row_widths = list(widths)
        else:
            row_widths = [DEFAULT_TABLE_TWIPS // max(n, 1)] * n
        edges, acc = [], 0
        for w in row_widths:
            acc += w
            edges.append(f"\\cellx{acc}")
        out.append("\\trowd\\trgaph108" + "".join(edges) + "\n")
        for j, text in enumerate(row):
            align = _RTF_ALIGN[alignments[j]] if alignments is not None and j < len(alignments) else "\\ql"
            out.append(f"\\pard\\intbl{align} {rtf_escape(text)}\\cell\n")
        out.append("\\row\n")
    out.append("\\pard\\par\n}\n")
    return "".join(out).encode("ascii")


def to_rtf(grid: CellGrid, cfg: RenderConfig | None = None) -> bytes:
    cfg = cfg or RenderConfig(format=OutputFormat.RTF)
    _require_valid(grid)
    n_cols = len(grid.cols())
    if cfg.column_widths_twips is not None and len(cfg.column_widths_twips) != n_cols:
        raise ValueError(f"column_widths_twips has {len(cfg.column_widths_twips)} entries for {n_cols} columns")
    cmap = grid.cell_map()
    rows = [
        [_display(cmap.get((r.dim_id, c.dim_id)), cfg) for c in grid.cols()]
        for r in grid.rows()
    ]
    return rtf_from_rows(rows, cfg.column_widths_twips, [c.alignment for c in grid.cols()], cfg.title)


def render(grid: CellGrid, cfg: RenderConfig) -> str | bytes:
    if cfg.format is OutputFormat.JSON:
        return to_json(grid)
    if cfg.format is OutputFormat.HTML:
        return to_html(grid, cfg)
    return to_rtf(grid, cfg)
