import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_grid
from tflparity.errors import MappingAmbiguous, SchemaError, SpecRowMissing, UnmappedRecord
from tflparity.ir.mapping import load_mapping, mapping_from_dict, mapping_to_dict
from tflparity.ir.model import (
    Cell,
    CellGrid,
    CellSpec,
    CellType,
    ColSpec,
    Dimension,
    ElementType,
    HierarchySpec,
    IrMappingConfig,
    RowSpec,
    Rule,
    StatRecord,
    StructureEntry,
    build_grid,
    cell_count,
    check_hierarchy_consistency,
    hierarchy_from_indent,
    reconcile,
    validate_grid,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _cell(r, c, value=None, text="x", ctype=CellType.TEXT, rid="R", eid="E"):
    return Cell(rid, eid, r, c, value, text, ctype)


def _entry(dim, i, **kw):
    return StructureEntry("R", "E", dim, i, **kw)


class TestCell:
    def test_numeric_cell_needs_value(self):
        with pytest.raises(SchemaError, match="cell_value"):
            _cell(1, 1, None, "3", CellType.INTEGER)

    def test_text_cell_rejects_value(self):
        with pytest.raises(SchemaError):
            _cell(1, 1, 3.0, "3", CellType.TEXT)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), True])
    def test_rejects_non_finite_and_bool(self, bad):
        with pytest.raises(SchemaError):
            _cell(1, 1, bad, "?", CellType.DECIMAL)

    def test_ids_are_one_based(self):
        with pytest.raises(SchemaError, match="row_id"):
            _cell(0, 1)

    def test_enum_from_string(self):
        assert _cell(1, 1, 2, "2", "INTEGER").cell_type is CellType.INTEGER
        with pytest.raises(SchemaError, match="cell_type"):
            _cell(1, 1, None, "x", "BOGUS")

    def test_integer_value_stored_as_float(self):
        assert isinstance(_cell(1, 1, 2, "2", CellType.INTEGER).cell_value, float)


class TestGrid:
    @given(seeds)
    def test_order_of_inputs_does_not_matter(self, seed):
        grid = random_grid(random.Random(seed))
        rng = random.Random(seed + 1)
        cells, struct = list(grid.cells), list(grid.structure)
        rng.shuffle(cells)
        rng.shuffle(struct)
        assert CellGrid(tuple(cells), tuple(struct)) == grid

    @given(seeds)
    def test_text_rows_are_dense(self, seed):
        grid = random_grid(random.Random(seed))
        rows = grid.text_rows()
        assert len(rows) == grid.n_rows
        assert all(len(r) == grid.n_cols for r in rows)
        for c in grid.cells:
            assert rows[c.row_id - 1][c.col_id - 1] == c.cell_formatted

    def test_with_ids_rewrites_everything(self):
        grid = random_grid(random.Random(3)).with_ids("NEW", "EXEC")
        assert {c.report_id for c in grid.cells} | {s.report_id for s in grid.structure} == {"NEW"}
        assert grid.execution_id == "EXEC"


class TestValidation:
    @given(seeds)
    @settings(max_examples=60)
    def test_random_grids_are_valid(self, seed):
        assert validate_grid(random_grid(random.Random(seed))).valid

    def test_each_rule_is_reported_independently(self):
        cells = (
            _cell(1, 1), _cell(1, 1, text="dup"),  # uniqueness
            _cell(4, 1),  # no row 4 entry: completeness
            _cell(2, 1, rid="OTHER"),  # consistency
        )
        struct = (
            _entry(Dimension.ROW, 1), _entry(Dimension.ROW, 2), _entry(Dimension.ROW, 5),  # gap 3, 4
            _entry(Dimension.COL, 1),
        )
        report = validate_grid(CellGrid(cells, struct))
        assert report.rules == set(Rule)
        contiguity = [v for v in report.violations if v.rule is Rule.CONTIGUITY]
        assert sorted(v.row_id for v in contiguity) == [3, 4]

    def test_separator_rows_may_carry_cells_when_allowed(self):
        struct = (_entry(Dimension.ROW, 1, element_type=ElementType.SEPARATOR), _entry(Dimension.COL, 1))
        grid = CellGrid((_cell(1, 1, text=""),), struct)
        assert validate_grid(grid).rules == {Rule.COMPLETENESS}
        assert validate_grid(grid, allow_separator_cells=True).valid

    def test_violations_are_sorted_by_rule_then_position(self):
        cells = (_cell(3, 1), _cell(2, 1), _cell(2, 1))
        report = validate_grid(CellGrid(cells, (_entry(Dimension.COL, 1),)))
        order = [v.rule for v in report.violations]
        assert order == sorted(order, key=list(Rule).index)

    def test_empty_grid_is_valid(self):
        assert validate_grid(CellGrid()).valid


MAPPING = IrMappingConfig(
    "DM",
    (RowSpec("age", "n", "n"), RowSpec("age", "Mean (SD)", "mean"), RowSpec("sex", "Female", "n")),
    (ColSpec("PBO", "Placebo"), ColSpec("XAN", "Xanomeline")),
    {"n": CellSpec(CellType.INTEGER), "mean": CellSpec(CellType.DECIMAL, "{value:.1f} ({sd:.2f})")},
)


def _stats():
    out = []
    for arm, n, mean, sd, fem in (("PBO", 86, 75.21, 8.59, 53), ("XAN", 84, 74.38, 7.89, 50)):
        out += [StatRecord("age", arm, "n", n, str(n)), StatRecord("age", arm, "mean", mean),
                StatRecord("age", arm, "sd", sd), StatRecord("sex", arm, "n", fem, str(fem))]
    return out


class TestBuildAndReconcile:
    def test_builds_formatted_cells(self):
        grid = build_grid(_stats(), MAPPING)
        assert validate_grid(grid).valid
        assert grid.text_rows() == [["86", "84"], ["75.2 (8.59)", "74.4 (7.89)"], ["53", "50"]]
        assert grid.cell_map()[(2, 1)].cell_value == pytest.approx(75.21)

    @given(st.randoms(use_true_random=False))
    def test_source_order_is_irrelevant(self, rnd):
        stats = _stats()
        rnd.shuffle(stats)
        assert build_grid(stats, MAPPING) == build_grid(_stats(), MAPPING)

    def test_strict_mapping_rejects_stray_records(self):
        with pytest.raises(UnmappedRecord):
            build_grid(_stats() + [StatRecord("bmi", "PBO", "n", 3)], MAPPING)

    def test_reconcile_passes_exact_source(self):
        grid = build_grid(_stats(), MAPPING)
        report = reconcile(grid, _stats(), MAPPING)
        assert report.passed and report.checked == 6

    @given(st.floats(min_value=2e-10, max_value=1e3))
    def test_reconcile_flags_any_shift_beyond_tolerance(self, shift):
        grid = build_grid(_stats(), MAPPING)
        moved = [replace(s, stat_value=s.stat_value + shift) if s.stat_name == "mean" and s.treatment == "XAN"
                 else s for s in _stats()]
        report = reconcile(grid, moved, MAPPING)
        assert [(m.row_id, m.col_id) for m in report.mismatches] == [(2, 2)]

    def test_reconcile_ambiguous_source(self):
        grid = build_grid(_stats(), MAPPING)
        with pytest.raises(MappingAmbiguous):
            reconcile(grid, _stats() + [StatRecord("age", "PBO", "n", 86)], MAPPING)

    def test_reconcile_reports_unmapped_cells(self):
        grid = build_grid(_stats(), MAPPING)
        partial = [s for s in _stats() if not (s.group == "sex" and s.treatment == "PBO")]
        assert reconcile(grid, partial, MAPPING).unmapped == ((3, 1),)


class TestMappingYaml:
    def test_round_trip(self, tmp_path):
        doc = mapping_to_dict(MAPPING)
        path = tmp_path / "m.yaml"
        import yaml

        path.write_text(yaml.safe_dump(doc))
        assert load_mapping(path) == MAPPING

    @pytest.mark.parametrize("doc,where", [
        ({}, "report_id"),
        ({"report_id": "x", "bogus": 1}, ""),
        ({"report_id": "x", "rows": [{"label": "no key"}]}, "rows[0].key"),
        ({"report_id": "x", "cells": {"n": {"cell_type": "NOPE"}}}, "cells"),
    ])
    def test_schema_errors_carry_a_path(self, doc, where):
        with pytest.raises(SchemaError) as err:
            mapping_from_dict(doc)
        assert where in str(err.value)


def _indented_grid(rows):
    """rows: list of (indent, [counts]) under a single header row."""
    struct = [_entry(Dimension.ROW, 1, element_type=ElementType.COLUMN_HEADER)]
    struct += [_entry(Dimension.COL, 1, element_type=ElementType.ROW_HEADER)]
    cells = [_cell(1, 1, text="Term")]
    width = len(rows[0][1])
    for c in range(width):
        struct.append(_entry(Dimension.COL, c + 2))
        cells.append(_cell(1, c + 2, text=f"Arm {c}"))
    for i, (indent, counts) in enumerate(rows, start=2):
        struct.append(_entry(Dimension.ROW, i, indent_level=indent))
        cells.append(_cell(i, 1, text=f"term {i}", ctype=CellType.LABEL))
        for c, n in enumerate(counts):
            cells.append(_cell(i, c + 2, text=f"{n} ({n:.1f}%)"))
    return CellGrid(tuple(cells), tuple(struct))


class TestHierarchy:
    def test_groups_from_indent(self):
        grid = _indented_grid([(0, [5]), (1, [3]), (1, [2]), (0, [4]), (1, [4]), (2, [1]), (1, [0])])
        spec = hierarchy_from_indent(grid)
        assert spec.groups == ((2, (3, 4)), (5, (6, 8)), (6, (7,)))
        assert spec.columns == (2,)

    def test_equal_counts_are_consistent(self):
        grid = _indented_grid([(0, [4, 1]), (1, [4, 1]), (1, [0, 1])])
        assert check_hierarchy_consistency(grid, hierarchy_from_indent(grid)).passed

    def test_child_above_parent_is_flagged(self):
        grid = _indented_grid([(0, [4, 1]), (1, [5, 0]), (1, [6, 2])])
        report = check_hierarchy_consistency(grid, hierarchy_from_indent(grid))
        got = [(v.parent_row, v.child_row, v.col_id, v.parent_count, v.child_count) for v in report.violations]
        assert got == [(2, 4, 2, 4.0, 6.0), (2, 4, 3, 1.0, 2.0)]

    def test_missing_row_in_spec(self):
        grid = _indented_grid([(0, [1])])
        with pytest.raises(SpecRowMissing):
            check_hierarchy_consistency(grid, HierarchySpec(((2, (9,)),), (2,)))

    def test_cell_count_prefers_value(self):
        assert cell_count(_cell(1, 1, 7, "9 (1%)", CellType.INTEGER)) == 7
        assert cell_count(_cell(1, 1, None, "12 (4.0%)")) == 12
        assert cell_count(_cell(1, 1, None, "n/a")) is None
        assert cell_count(None) is None
