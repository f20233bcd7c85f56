"""Loading IR mapping configs from YAML."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import yaml

from tflparity.errors import SchemaError
from tflparity.ir.model import (
    Alignment,
    CellSpec,
    CellType,
    ColSpec,
    ElementType,
    IrMappingConfig,
    RowSpec,
)

_TOP_KEYS = {"report_id", "execution_id", "rows", "cols", "cells", "strict", "zero_fill"}


def _require_mapping(obj: Any, path: str) -> Mapping:
    if not isinstance(obj, Mapping):
        raise SchemaError("expected a mapping", path)
    return obj


def _reject_extra(obj: Mapping, allowed: set[str], path: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise SchemaError(f"unknown key(s) {', '.join(map(str, extra))}", path)


def _enum(cls, value, path):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(f"{value!r} is not one of {', '.join(m.value for m in cls)}", path) from None


def mapping_from_dict(doc: Mapping) -> IrMappingConfig:
    doc = _require_mapping(doc, "")
    _reject_extra(doc, _TOP_KEYS, "")
    if "report_id" not in doc:
        raise SchemaError("missing required key", "report_id")

    rows = []
    for i, raw in enumerate(doc.get("rows") or []):
        p = f"rows[{i}]"
        if isinstance(raw, str):
            raw = {"key": raw}
        raw = _require_mapping(raw, p)
        _reject_extra(raw, {"key", "label", "stat", "indent", "element_type"}, p)
        if "key" not in raw:
            raise SchemaError("missing required key", f"{p}.key")
        rows.append(RowSpec(
            key=str(raw["key"]),
            label=str(raw.get("label", "")),
            stat=raw.get("stat"),
            indent=int(raw.get("indent", 0)),
            element_type=_enum(ElementType, raw.get("element_type", "DATA_ROW"), f"{p}.element_type"),
        ))

    cols = []
    for j, raw in enumerate(doc.get("cols") or []):
        p = f"cols[{j}]"
        if isinstance(raw, str):
            raw = {"key": raw}
        raw = _require_mapping(raw, p)
        _reject_extra(raw, {"key", "label", "alignment"}, p)
        if "key" not in raw:
            raise SchemaError("missing required key", f"{p}.key")
        cols.append(ColSpec(
            key=str(raw["key"]),
            label=str(raw.get("label", "")),
            alignment=_enum(Alignment, raw.get("alignment", "CENTER"), f"{p}.alignment"),
        ))

    cells = {}
    for stat, raw in (_require_mapping(doc.get("cells") or {}, "cells")).items():
        p = f"cells.{stat}"
        raw = _require_mapping(raw, p)
        _reject_extra(raw, {"cell_type", "format"}, p)
        if "cell_type" not in raw:
            raise SchemaError("missing required key", f"{p}.cell_type")
        cells[str(stat)] = CellSpec(
            _enum(CellType, raw["cell_type"], f"{p}.cell_type"),
            str(raw.get("format", "{formatted}")),
        )

    return IrMappingConfig(
        report_id=str(doc["report_id"]),
        rows=tuple(rows),
        cols=tuple(cols),
        cells=cells,
        strict=bool(doc.get("strict", True)),
        zero_fill=bool(doc.get("zero_fill", False)),
        execution_id=str(doc.get("execution_id", "EXEC-0001")),
    )


def load_mapping(path: str | Path) -> IrMappingConfig:
    with open(path, encoding="utf-8") as fh:
        return mapping_from_dict(yaml.safe_load(fh) or {})


def mapping_to_dict(cfg: IrMappingConfig) -> dict:
    return {
        "report_id": cfg.report_id,
        "execution_id": cfg.execution_id,
        "strict": cfg.strict,
        "zero_fill": cfg.zero_fill,
        "rows": [
            {"key": r.key, "label": r.label, "stat": r.stat, "indent": r.indent, "element_type": r.element_type.value}
            for r in cfg.rows
        ],
        "cols": [{"key": c.key, "label": c.label, "alignment": c.alignment.value} for c in cfg.cols],
        "cells": {k: {"cell_type": v.cell_type.value, "format": v.format} for k, v in cfg.cells.items()},
    }
