"""Typed cell-grid IR: cells plus a structure table describing rows and columns.

All types are frozen; operations are pure.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from tflparity.errors import SchemaError


class CellType(str, Enum):
    INTEGER = "INTEGER"
    DECIMAL = "DECIMAL"
    PVALUE = "PVALUE"
    PERCENTAGE = "PERCENTAGE"
    TEXT = "TEXT"
    HEADER = "HEADER"
    LABEL = "LABEL"
    FOOTNOTE = "FOOTNOTE"
    EMPTY = "EMPTY"

    @property
    def numeric(self) -> bool:
        return self in NUMERIC_TYPES


NUMERIC_TYPES = frozenset({CellType.INTEGER, CellType.DECIMAL, CellType.PVALUE, CellType.PERCENTAGE})


class ElementType(str, Enum):
    COLUMN_HEADER = "COLUMN_HEADER"
    ROW_HEADER = "ROW_HEADER"
    DATA_ROW = "DATA_ROW"
    TOTAL_ROW = "TOTAL_ROW"
    SEPARATOR = "SEPARATOR"
    SPANNING_HEADER = "SPANNING_HEADER"


HEADER_ELEMENTS = frozenset({ElementType.COLUMN_HEADER, ElementType.SPANNING_HEADER})


class Dimension(str, Enum):
    ROW = "ROW"
    COL = "COL"


class Alignment(str, Enum):
    LEFT = "LEFT"
    CENTER = "CENTER"
    RIGHT = "RIGHT"


def _parse_enum(enum_cls, value, path: str):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise SchemaError(f"{value!r} is not one of {allowed}", path) from None


def _check_int(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"expected integer, got {type(value).__name__}", path)
    if value < minimum:
        raise SchemaError(f"must be >= {minimum}, got {value}", path)
    return value


def _check_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"expected text, got {type(value).__name__}", path)
    return value


@dataclass(frozen=True)
class Cell:
    report_id: str
    execution_id: str
    row_id: int
    col_id: int
    cell_value: float | None
    cell_formatted: str
    cell_type: CellType
    sort_order: int = 0

    def __post_init__(self) -> None:
        _check_str(self.report_id, "report_id")
        _check_str(self.execution_id, "execution_id")
        _check_int(self.row_id, "row_id", 1)
        _check_int(self.col_id, "col_id", 1)
        _check_str(self.cell_formatted, "cell_formatted")
        _check_int(self.sort_order, "sort_order", 0)
        object.__setattr__(self, "cell_type", _parse_enum(CellType, self.cell_type, "cell_type"))
        value = self.cell_value
        if self.cell_type.numeric:
            if value is None or isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"{self.cell_type.value} cell requires a numeric cell_value", "cell_value")
            value = float(value)
            if not math.isfinite(value):
                raise SchemaError("cell_value must be finite", "cell_value")
            object.__setattr__(self, "cell_value", value)
        elif value is not None:
            raise SchemaError(f"{self.cell_type.value} cell must not carry a cell_value", "cell_value")

    @property
    def pos(self) -> tuple[int, int]:
        return (self.row_id, self.col_id)


@dataclass(frozen=True)
class StructureEntry:
    report_id: str
    execution_id: str
    dimension: Dimension
    dim_id: int
    label: str = ""
    sort_order: int = 0
    indent_level: int = 0
    alignment: Alignment = Alignment.LEFT
    span_count: int = 1
    element_type: ElementType = ElementType.DATA_ROW

    def __post_init__(self) -> None:
        _check_str(self.report_id, "report_id")
        _check_str(self.execution_id, "execution_id")
        object.__setattr__(self, "dimension", _parse_enum(Dimension, self.dimension, "dimension"))
        _check_int(self.dim_id, "dim_id", 1)
        _check_str(self.label, "label")
        _check_int(self.sort_order, "sort_order", 0)
        _check_int(self.indent_level, "indent_level", 0)
        object.__setattr__(self, "alignment", _parse_enum(Alignment, self.alignment, "alignment"))
        _check_int(self.span_count, "span_count", 1)
        object.__setattr__(self, "element_type", _parse_enum(ElementType, self.element_type, "element_type"))


def _cell_key(c: Cell):
    return (c.row_id, c.col_id)


def _struct_key(s: StructureEntry):
    return (0 if s.dimension is Dimension.ROW else 1, s.dim_id)


@dataclass(frozen=True)
class CellGrid:
    """A rendered report as cells plus structure.

    Cells are kept sorted by (row_id, col_id) and structure by (dimension, dim_id),
    so two grids holding the same content compare equal regardless of input order.
    """

    cells: tuple[Cell, ...] = ()
    structure: tuple[StructureEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(sorted(self.cells, key=_cell_key)))
        object.__setattr__(self, "structure", tuple(sorted(self.structure, key=_struct_key)))

    # -- lookups --------------------------------------------------------------
    def rows(self) -> list[StructureEntry]:
        return [s for s in self.structure if s.dimension is Dimension.ROW]

    def cols(self) -> list[StructureEntry]:
        return [s for s in self.structure if s.dimension is Dimension.COL]

    def row_entry(self, row_id: int) -> StructureEntry | None:
        return next((s for s in self.rows() if s.dim_id == row_id), None)

    def col_entry(self, col_id: int) -> StructureEntry | None:
        return next((s for s in self.cols() if s.dim_id == col_id), None)

    @property
    def n_rows(self) -> int:
        ids = [s.dim_id for s in self.rows()] + [c.row_id for c in self.cells]
        return max(ids, default=0)

    @property
    def n_cols(self) -> int:
        ids = [s.dim_id for s in self.cols()] + [c.col_id for c in self.cells]
        return max(ids, default=0)

    @property
    def report_id(self) -> str:
        ids = [c.report_id for c in self.cells] + [s.report_id for s in self.structure]
        return Counter(ids).most_common(1)[0][0] if ids else ""

    @property
    def execution_id(self) -> str:
        ids = [c.execution_id for c in self.cells] + [s.execution_id for s in self.structure]
        return Counter(ids).most_common(1)[0][0] if ids else ""

    def cell_map(self) -> dict[tuple[int, int], Cell]:
        return {c.pos: c for c in self.cells}

    def text_rows(self) -> list[list[str]]:
        """Formatted text laid out densely by row then column (missing cells are "")."""
        cmap = self.cell_map()
        return [
            [cmap[(r, c)].cell_formatted if (r, c) in cmap else "" for c in range(1, self.n_cols + 1)]
            for r in range(1, self.n_rows + 1)
        ]

    def with_ids(self, report_id: str | None = None, execution_id: str | None = None) -> "CellGrid":
        from dataclasses import replace

        def fix(obj):
            return replace(
                obj,
                report_id=report_id if report_id is not None else obj.report_id,
                execution_id=execution_id if execution_id is not None else obj.execution_id,
            )

        return CellGrid(tuple(fix(c) for c in self.cells), tuple(fix(s) for s in self.structure))


@dataclass(frozen=True)
class StatRecord:
    """One row of long-format compute output."""

    group: str
    treatment: str
    stat_name: str
    stat_value: float
    formatted: str = ""
    method_id: str = ""

    def __post_init__(self) -> None:
        if not self.stat_name:
            raise SchemaError("stat_name must be non-empty", "stat_name")
        if isinstance(self.stat_value, bool) or not isinstance(self.stat_value, (int, float)):
            raise SchemaError("stat_value must be a number", "stat_value")
        if not math.isfinite(self.stat_value):
            raise SchemaError("stat_value must be finite", "stat_value")
        object.__setattr__(self, "stat_value", float(self.stat_value))


# -- validation ---------------------------------------------------------------

class Rule(str, Enum):
    COMPLETENESS = "COMPLETENESS"
    CONTIGUITY = "CONTIGUITY"
    UNIQUENESS = "UNIQUENESS"
    CONSISTENCY = "CONSISTENCY"


_RULE_ORDER = {r: i for i, r in enumerate(Rule)}


@dataclass(frozen=True)
class Violation:
    rule: Rule
    detail: str
    row_id: int | None = None
    col_id: int | None = None

    @property
    def location(self) -> tuple[int | None, int | None] | None:
        if self.row_id is None and self.col_id is None:
            return None
        return (self.row_id, self.col_id)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def rules(self) -> set[Rule]:
        return {v.rule for v in self.violations}


def _sort_key(v: Violation):
    return (_RULE_ORDER[v.rule], v.row_id or 0, v.col_id or 0, v.detail)


def validate_grid(grid: CellGrid, allow_separator_cells: bool = False) -> ValidationReport:
    """Check the four validity rules independently and report every violation."""
    out: list[Violation] = []
    rows = grid.rows()
    cols = grid.cols()
    row_by_id = {s.dim_id: s for s in rows}
    col_ids = {s.dim_id for s in cols}

    # completeness
    for c in grid.cells:
        if c.row_id not in row_by_id:
            out.append(Violation(Rule.COMPLETENESS, f"no ROW entry for row_id {c.row_id}", c.row_id, c.col_id))
        elif not allow_separator_cells and row_by_id[c.row_id].element_type is ElementType.SEPARATOR:
            out.append(Violation(Rule.COMPLETENESS, f"cell on SEPARATOR row {c.row_id}", c.row_id, c.col_id))
        if c.col_id not in col_ids:
            out.append(Violation(Rule.COMPLETENESS, f"no COL entry for col_id {c.col_id}", c.row_id, c.col_id))

    # contiguity
    for dim, entries in ((Dimension.ROW, rows), (Dimension.COL, cols)):
        ids = {s.dim_id for s in entries}
        if ids:
            for missing in sorted(set(range(1, max(ids) + 1)) - ids):
                loc = (missing, None) if dim is Dimension.ROW else (None, missing)
                out.append(Violation(Rule.CONTIGUITY, f"{dim.value} dim_id {missing} missing", *loc))

    # uniqueness
    for pos, n in sorted(Counter(c.pos for c in grid.cells).items()):
        if n > 1:
            out.append(Violation(Rule.UNIQUENESS, f"{n} cells at ({pos[0]}, {pos[1]})", *pos))
    for (dim, dim_id), n in sorted(Counter((s.dimension.value, s.dim_id) for s in grid.structure).items()):
        if n > 1:
            loc = (dim_id, None) if dim == "ROW" else (None, dim_id)
            out.append(Violation(Rule.UNIQUENESS, f"{n} {dim} entries with dim_id {dim_id}", *loc))

    # consistency: flag everything that disagrees with the majority identifiers
    items = list(grid.cells) + list(grid.structure)
    for attr in ("report_id", "execution_id"):
        counts = Counter(getattr(i, attr) for i in items)
        if len(counts) > 1:
            majority = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            for i in items:
                value = getattr(i, attr)
                if value != majority:
                    if isinstance(i, Cell):
                        loc = i.pos
                    elif i.dimension is Dimension.ROW:
                        loc = (i.dim_id, None)
                    else:
                        loc = (None, i.dim_id)
                    out.append(Violation(Rule.CONSISTENCY, f"{attr} {value!r} != {majority!r}", *loc))

    return ValidationReport(tuple(sorted(out, key=_sort_key)))


# -- mapping driven construction ---------------------------------------------

@dataclass(frozen=True)
class RowSpec:
    key: str
    label: str = ""
    stat: str | None = None
    indent: int = 0
    element_type: ElementType = ElementType.DATA_ROW


@dataclass(frozen=True)
class ColSpec:
    key: str
    label: str = ""
    alignment: Alignment = Alignment.CENTER


@dataclass(frozen=True)
class CellSpec:
    cell_type: CellType
    format: str = "{formatted}"


@dataclass(frozen=True)
class IrMappingConfig:
    report_id: str
    rows: tuple[RowSpec, ...] = ()
    cols: tuple[ColSpec, ...] = ()
    cells: dict[str, CellSpec] = field(default_factory=dict)
    strict: bool = True
    zero_fill: bool = False
    execution_id: str = "EXEC-0001"

    def row_stat(self, row: RowSpec) -> str | None:
        if row.stat is not None:
            return row.stat
        if len(self.cells) == 1:
            return next(iter(self.cells))
        return None

    def referenced_stats(self) -> set[str]:
        import string

        names = set()
        for spec in self.cells.values():
            for _, fname, _, _ in string.Formatter().parse(spec.format):
                if fname and fname not in ("value", "formatted"):
                    names.add(fname)
        return names


def _format_cell(spec: CellSpec, primary: StatRecord, siblings: dict[str, StatRecord]) -> str:
    fields = {name: rec.stat_value for name, rec in siblings.items()}
    fields.update(value=primary.stat_value, formatted=primary.formatted)
    return spec.format.format(**fields)


def build_grid(
    source: Iterable[StatRecord],
    mapping: IrMappingConfig,
    execution_id: str | None = None,
) -> CellGrid:
    """Lay long-format statistics onto the grid described by ``mapping``.

    Row and column order come only from the mapping, so the order of ``source``
    never affects the result.
    """
    import logging

    from tflparity.errors import UnmappedRecord

    log = logging.getLogger(__name__)
    rid = mapping.report_id
    eid = execution_id or mapping.execution_id
    records = list(source)

    index: dict[tuple[str, str, str], list[StatRecord]] = defaultdict(list)
    for rec in records:
        index[(rec.group, rec.treatment, rec.stat_name)].append(rec)

    row_keys = {r.key for r in mapping.rows}
    col_keys = {c.key for c in mapping.cols}
    primary_stats = {mapping.row_stat(r) for r in mapping.rows} - {None}
    usable_stats = primary_stats | mapping.referenced_stats()
    for rec in sorted(records, key=lambda r: (r.group, r.treatment, r.stat_name)):
        if rec.group not in row_keys or rec.treatment not in col_keys or rec.stat_name not in usable_stats:
            if mapping.strict:
                raise UnmappedRecord(rec)
            log.warning("skipping unmapped record %s/%s/%s", rec.group, rec.treatment, rec.stat_name)

    structure: list[StructureEntry] = []
    for i, row in enumerate(mapping.rows, start=1):
        structure.append(StructureEntry(rid, eid, Dimension.ROW, i, row.label or row.key, i, row.indent,
                                        Alignment.LEFT, 1, row.element_type))
    for j, col in enumerate(mapping.cols, start=1):
        structure.append(StructureEntry(rid, eid, Dimension.COL, j, col.label or col.key, j, 0,
                                        col.alignment, 1, ElementType.COLUMN_HEADER))

    cells: list[Cell] = []
    for i, row in enumerate(mapping.rows, start=1):
        stat = mapping.row_stat(row)
        for j, col in enumerate(mapping.cols, start=1):
            order = (i - 1) * len(mapping.cols) + j
            hits = index.get((row.key, col.key, stat), []) if stat else []
            if len(hits) > 1:
                from tflparity.errors import MappingAmbiguous

                raise MappingAmbiguous(i, j, len(hits))
            if not hits:
                if mapping.zero_fill and stat in mapping.cells:
                    cells.append(Cell(rid, eid, i, j, 0.0, "0", CellType.INTEGER, order))
                else:
                    cells.append(Cell(rid, eid, i, j, None, "", CellType.EMPTY, order))
                continue
            primary = hits[0]
            spec = mapping.cells[stat]
            siblings = {
                name: index[(row.key, col.key, name)][0]
                for name in mapping.referenced_stats()
                if index.get((row.key, col.key, name))
            }
            text = _format_cell(spec, primary, siblings)
            value = primary.stat_value if spec.cell_type.numeric else None
            cells.append(Cell(rid, eid, i, j, value, text, spec.cell_type, order))
    return CellGrid(tuple(cells), tuple(structure))


# -- reconciliation -----------------------------------------------------------

@dataclass(frozen=True)
class Mismatch:
    row_id: int
    col_id: int
    ir_value: float
    source_value: float
    abs_diff: float


@dataclass(frozen=True)
class ReconcileReport:
    tolerance: float
    checked: int
    mismatches: tuple[Mismatch, ...] = ()
    unmapped: tuple[tuple[int, int], ...] = ()

    @property
    def passed(self) -> bool:
        return not self.mismatches


def reconcile(
    grid: CellGrid,
    source: Iterable[StatRecord],
    mapping: IrMappingConfig,
    tolerance: float = 1e-10,
) -> ReconcileReport:
    """Trace every numeric cell back to its source statistic by absolute difference."""
    from tflparity.errors import MappingAmbiguous

    index: dict[tuple[str, str, str], list[StatRecord]] = defaultdict(list)
    for rec in source:
        index[(rec.group, rec.treatment, rec.stat_name)].append(rec)

    checked = 0
    mismatches: list[Mismatch] = []
    unmapped: list[tuple[int, int]] = []
    for cell in grid.cells:
        if not cell.cell_type.numeric:
            continue
        hits: list[StatRecord] = []
        if cell.row_id <= len(mapping.rows) and cell.col_id <= len(mapping.cols):
            row = mapping.rows[cell.row_id - 1]
            stat = mapping.row_stat(row)
            if stat:
                hits = index.get((row.key, mapping.cols[cell.col_id - 1].key, stat), [])
        if len(hits) > 1:
            raise MappingAmbiguous(cell.row_id, cell.col_id, len(hits))
        if not hits:
            unmapped.append(cell.pos)
            continue
        checked += 1
        diff = abs(cell.cell_value - hits[0].stat_value)
        if diff > tolerance:
            mismatches.append(Mismatch(cell.row_id, cell.col_id, cell.cell_value, hits[0].stat_value, diff))
    return ReconcileReport(tolerance, checked, tuple(mismatches), tuple(unmapped))


# -- hierarchy lint -----------------------------------------------------------

@dataclass(frozen=True)
class HierarchySpec:
    """Parent rows (e.g. SOC) and their child rows (e.g. PT), plus the columns to check."""

    groups: tuple[tuple[int, tuple[int, ...]], ...]
    columns: tuple[int, ...]


@dataclass(frozen=True)
class HierarchyViolation:
    parent_row: int
    child_row: int
    col_id: int
    parent_count: float
    child_count: float


@dataclass(frozen=True)
class LintReport:
    violations: tuple[HierarchyViolation, ...] = ()
    checked: int = 0
    rule: str = "parent count >= max child count (inclusive: a subject under any child is under the parent)"

    @property
    def passed(self) -> bool:
        return not self.violations


def cell_count(cell: Cell | None) -> float | None:
    """Count carried by a cell: its raw value, else the leading number of its text."""
    if cell is None:
        return None
    if cell.cell_value is not None:
        return cell.cell_value
    from tflparity.rtf import classify_cell_text, normalize_text

    ext = classify_cell_text(normalize_text(cell.cell_formatted))
    return ext.primary


def check_hierarchy_consistency(grid: CellGrid, spec: HierarchySpec) -> LintReport:
    from tflparity.errors import SpecRowMissing

    row_ids = {s.dim_id for s in grid.rows()}
    for parent, children in spec.groups:
        for rid in (parent, *children):
            if rid not in row_ids:
                raise SpecRowMissing(rid)
    cmap = grid.cell_map()
    out: list[HierarchyViolation] = []
    checked = 0
    for parent, children in spec.groups:
        for col in spec.columns:
            p = cell_count(cmap.get((parent, col)))
            kids = [(ch, cell_count(cmap.get((ch, col)))) for ch in children]
            kids = [(ch, v) for ch, v in kids if v is not None]
            if p is None or not kids:
                continue
            checked += 1
            worst_row, worst = max(kids, key=lambda kv: (kv[1], -kv[0]))
            if p < worst:
                out.append(HierarchyViolation(parent, worst_row, col, p, worst))
    return LintReport(tuple(out), checked)


def grid_dims(grid: CellGrid) -> tuple[int, int]:
    return grid.n_rows, grid.n_cols


def header_row_ids(grid: CellGrid) -> list[int]:
    return [s.dim_id for s in grid.rows() if s.element_type in HEADER_ELEMENTS]


def stub_col_ids(grid: CellGrid) -> list[int]:
    return [s.dim_id for s in grid.cols() if s.element_type is ElementType.ROW_HEADER]


def hierarchy_from_indent(grid: CellGrid) -> HierarchySpec:
    """Group each row with the deeper-indented body rows that directly follow it.

    A row at indent k owns the following rows at indent k + 1 until a row at
    indent k or shallower appears. Columns are every non-stub column.
    """
    body = [s for s in grid.rows() if s.element_type not in HEADER_ELEMENTS]
    groups: list[tuple[int, tuple[int, ...]]] = []
    for i, row in enumerate(body):
        kids = []
        for nxt in body[i + 1:]:
            if nxt.indent_level <= row.indent_level:
                break
            if nxt.indent_level == row.indent_level + 1:
                kids.append(nxt.dim_id)
        if kids:
            groups.append((row.dim_id, tuple(kids)))
    stub = set(stub_col_ids(grid)) or {1}
    cols = tuple(s.dim_id for s in grid.cols() if s.dim_id not in stub)
    return HierarchySpec(tuple(groups), cols)


__all__: Sequence[str] = [
    "Alignment", "Cell", "CellGrid", "CellSpec", "CellType", "ColSpec", "Dimension", "ElementType",
    "HierarchySpec", "HierarchyViolation", "IrMappingConfig", "LintReport", "Mismatch", "NUMERIC_TYPES",
    "ReconcileReport", "RowSpec", "Rule", "StatRecord", "StructureEntry", "ValidationReport", "Violation",
    "build_grid", "cell_count", "check_hierarchy_consistency", "hierarchy_from_indent", "reconcile", "validate_grid",
]
