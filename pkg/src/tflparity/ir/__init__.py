from tflparity.ir.model import (
    Alignment,
    Cell,
    CellGrid,
    CellSpec,
    CellType,
    ColSpec,
    Dimension,
    ElementType,
    HierarchySpec,
    IrMappingConfig,
    LintReport,
    ReconcileReport,
    RowSpec,
    Rule,
    StatRecord,
    StructureEntry,
    ValidationReport,
    build_grid,
    cell_count,
    check_hierarchy_consistency,
    hierarchy_from_indent,
    reconcile,
    validate_grid,
)
from tflparity.ir.mapping import load_mapping, mapping_from_dict

__all__ = [
    "Alignment", "Cell", "CellGrid", "CellSpec", "CellType", "ColSpec", "Dimension", "ElementType",
    "HierarchySpec", "IrMappingConfig", "LintReport", "ReconcileReport", "RowSpec", "Rule", "StatRecord",
    "StructureEntry", "ValidationReport", "build_grid", "cell_count", "check_hierarchy_consistency", "hierarchy_from_indent",
    "load_mapping",
    "mapping_from_dict", "reconcile", "validate_grid",
]
