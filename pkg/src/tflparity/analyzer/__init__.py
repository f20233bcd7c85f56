"""Lexical analysis of a SAS macro library."""

from tflparity.analyzer.core import (
    COHESION_BASIS,
    CallGraph,
    Category,
    Cohesion,
    ComplexityRecord,
    CoverageMatrix,
    Diagnostics,
    Edge,
    Inventory,
    InventoryRecord,
    MacroDef,
    ParseResult,
    RefKind,
    SourceFile,
    TaxonomyRules,
    analyze_corpus,
    canonical_cycle,
    classify_component,
    compute_metrics,
    count_loc,
    coverage_matrix,
    enumerate_cycles,
    extract_call_graph,
    graph_diagnostics,
    load_annotations,
    nesting_depth,
    parse_macro_headers,
)
from tflparity.analyzer.lexer import mask_literals, strip_comments
from tflparity.analyzer.syntax import Finding, syntax_check

__all__ = [
    "COHESION_BASIS", "CallGraph", "Category", "Cohesion", "ComplexityRecord", "CoverageMatrix", "Diagnostics",
    "Edge", "Finding", "Inventory", "InventoryRecord", "MacroDef", "ParseResult", "RefKind", "SourceFile",
    "TaxonomyRules", "analyze_corpus", "canonical_cycle", "classify_component", "compute_metrics", "count_loc",
    "coverage_matrix", "enumerate_cycles", "extract_call_graph", "graph_diagnostics", "load_annotations",
    "mask_literals", "nesting_depth", "parse_macro_headers", "strip_comments", "syntax_check",
]
