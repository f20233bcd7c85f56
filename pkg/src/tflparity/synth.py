"""Seeded legacy/native fixture pairs, optionally with one planted divergence.

A clean pair is a native grid plus the RTF rendered from it, so comparing the two
must give full parity. ``inject_divergence`` perturbs one side in a way that maps
to a single divergence category and reports which category the classifier
should find.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np

from tflparity.compare import CompareOptions, Denominator, DivergenceCategory, default_synonyms
from tflparity.errors import CategoryNotApplicable
from tflparity.ir.model import (
    Alignment,
    Cell,
    CellGrid,
    CellType,
    Dimension,
    ElementType,
    HierarchySpec,
    StructureEntry,
)
from tflparity.ir.render import rtf_from_rows, to_rtf


class ReportKind(str, Enum):
    DEMOGRAPHICS = "DEMOGRAPHICS"
    AE_SUMMARY = "AE_SUMMARY"
    AE_SOC_PT = "AE_SOC_PT"
    EFFICACY = "EFFICACY"
    KM_TTE = "KM_TTE"
    LISTING = "LISTING"


CDISC_ARMS = (("Placebo", 86), ("Xanomeline Low Dose", 84), ("Xanomeline High Dose", 84))
CDISC_PRESET = "CDISCPILOT01"

# Grid rows (header rows included) at the desk-scale reference sizes.
DEFAULT_ROWS = {
    ReportKind.DEMOGRAPHICS: 26,
    ReportKind.AE_SUMMARY: 9,
    ReportKind.AE_SOC_PT: 414,
    ReportKind.EFFICACY: 4,
    ReportKind.KM_TTE: 345,
    ReportKind.LISTING: 21,
}
HEADER_ROWS = {
    ReportKind.DEMOGRAPHICS: 2,
    ReportKind.AE_SUMMARY: 3,
    ReportKind.AE_SOC_PT: 2,
    ReportKind.EFFICACY: 1,
    ReportKind.KM_TTE: 2,
    ReportKind.LISTING: 1,
}

GE = "\u2265"


@dataclass(frozen=True)
class FixtureSpec:
    report_kind: ReportKind
    arms: tuple[tuple[str, int], ...] = CDISC_ARMS
    rows: int | None = None
    seed: int = 0
    include_total: bool = True
    preset: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "report_kind", ReportKind(self.report_kind))
        arms = tuple((str(a), int(n)) for a, n in self.arms)
        if len(arms) < 2:
            raise ValueError("at least two arms are required")
        if any(n <= 0 for _, n in arms):
            raise ValueError("arm sizes must be positive")
        object.__setattr__(self, "arms", arms)
        if self.rows is None:
            object.__setattr__(self, "rows", DEFAULT_ROWS[self.report_kind])
        if self.rows < HEADER_ROWS[self.report_kind] + 1:
            raise ValueError(f"{self.report_kind.value} needs at least {HEADER_ROWS[self.report_kind] + 1} rows")
        if not -(2**63) <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def anchors(self) -> bool:
        return self.preset == CDISC_PRESET


def cdisc_pilot_spec(kind: ReportKind | str, seed: int = 20240101, rows: int | None = None) -> FixtureSpec:
    """Three-arm spec carrying the published CDISCPilot01 anchor values."""
    return FixtureSpec(ReportKind(kind), CDISC_ARMS, rows, seed, True, CDISC_PRESET)


@dataclass(frozen=True)
class FixturePair:
    rtf: bytes
    grid: CellGrid
    spec: FixtureSpec
    legacy_rows: tuple[tuple[str, ...], ...]
    meta: dict = field(default_factory=dict)

    def __iter__(self) -> Iterator:
        yield self.rtf
        yield self.grid

    @property
    def is_listing(self) -> bool:
        return self.spec.report_kind is ReportKind.LISTING

    def compare_options(self, **overrides: Any) -> CompareOptions:
        hierarchy = None
        if self.meta.get("hierarchy") == "indent":
            from tflparity.ir.model import hierarchy_from_indent

            hierarchy = hierarchy_from_indent(self.grid)
        kwargs = dict(
            denominator=self.meta.get("denominator"),
            hierarchy=hierarchy,
            has_registry_config=self.meta.get("registry_config", True),
        )
        kwargs.update(overrides)
        return CompareOptions(**kwargs)


# -- grid assembly ------------------------------------------------------------

@dataclass
class _Col:
    label: str
    alignment: Alignment = Alignment.CENTER
    element_type: ElementType = ElementType.COLUMN_HEADER
    span_count: int = 1


@dataclass
class _Row:
    label: str
    cells: list[tuple[str, CellType, float | None]]
    element_type: ElementType = ElementType.DATA_ROW
    indent: int = 0


def _txt(s: str, t: CellType = CellType.LABEL):
    return (s, t if s else CellType.EMPTY, None)


def _int(n: int):
    return (str(int(n)), CellType.INTEGER, float(n))


def _dec(x: float, places: int):
    v = round(float(x), places)
    return (f"{v:.{places}f}", CellType.DECIMAL, v)


def _pct(n: int, denom: int):
    pct = 100.0 * n / denom if denom else 0.0
    return (f"{int(n)} ({pct:.1f}%)", CellType.PERCENTAGE, float(n))


def _pval(p: float):
    v = round(float(p), 4)
    return (f"{v:.4f}", CellType.PVALUE, v)


def _assemble(
    spec: FixtureSpec, cols: list[_Col], header: list[tuple[ElementType, list[str]]], body: list[_Row]
) -> CellGrid:
    rid = f"{spec.report_kind.value.lower()}_{spec.seed & 0xFFFFFFFF:08x}"
    eid = f"SYN-{spec.seed & 0xFFFFFFFFFFFFFFFF:016x}"
    structure = [
        StructureEntry(rid, eid, Dimension.COL, j, c.label, j, 0, c.alignment, c.span_count, c.element_type)
        for j, c in enumerate(cols, start=1)
    ]
    cells: list[Cell] = []
    order = 0
    r = 0
    for et, texts in header:
        r += 1
        structure.append(StructureEntry(rid, eid, Dimension.ROW, r, "", r, 0, Alignment.CENTER, 1, et))
        for j, t in enumerate(texts, start=1):
            order += 1
            cells.append(Cell(rid, eid, r, j, None, t, CellType.HEADER if t else CellType.EMPTY, order))
    for row in body:
        r += 1
        structure.append(StructureEntry(rid, eid, Dimension.ROW, r, row.label, r, row.indent,
                                        Alignment.LEFT, 1, row.element_type))
        assert len(row.cells) == len(cols), (row.label, len(row.cells), len(cols))
        for j, (text, ctype, value) in enumerate(row.cells, start=1):
            order += 1
            cells.append(Cell(rid, eid, r, j, value, text, ctype, order))
    return CellGrid(tuple(cells), tuple(structure))


def _arm_header(spec: FixtureSpec, total: bool) -> tuple[list[str], list[str]]:
    labels = [a for a, _ in spec.arms]
    ns = [f"(N={n})" for _, n in spec.arms]
    if total:
        labels.append("Total")
        ns.append(f"(N={sum(n for _, n in spec.arms)})")
    return labels, ns


def _split(total: int, k: int, rng: np.random.Generator, weights=None) -> list[int]:
    if k == 1:
        return [total]
    p = np.asarray(weights if weights is not None else rng.dirichlet(np.ones(k) * 3), dtype=float)
    p = p / p.sum()
    return [int(x) for x in rng.multinomial(total, p)]


# -- demographics -------------------------------------------------------------

def _demographics(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    arms = list(spec.arms)
    ns = [n for _, n in arms]
    total_n = sum(ns)
    tot = spec.include_total
    labels, nhead = _arm_header(spec, tot)
    cols = [_Col("", Alignment.LEFT, ElementType.ROW_HEADER), _Col("", Alignment.LEFT, ElementType.ROW_HEADER)]
    cols += [_Col(lab) for lab in labels] + [_Col("p-value")]
    header = [
        (ElementType.COLUMN_HEADER, ["", ""] + labels + ["p-value"]),
        (ElementType.COLUMN_HEADER, ["", ""] + nhead + [""]),
    ]
    width = len(cols)

    def data_row(section: str, stat: str, values: list, total_value=None, p=None, et=ElementType.DATA_ROW, indent=1):
        cells = [_txt(section), _txt(stat)] + values
        if tot:
            cells.append(total_value if total_value is not None else _txt(""))
        cells.append(_pval(p) if p is not None else _txt(""))
        return _Row(stat or section, cells, et, indent)

    def section(name: str):
        return data_row(name, "", [_txt("")] * len(arms), _txt("") if tot else None, rng.uniform(0.01, 0.99), indent=0)

    def continuous(name: str, center: float, spread: float, stats: Sequence[str], fixed_first: float | None = None):
        means = [rng.normal(center, spread / 3) for _ in arms]
        if fixed_first is not None:
            means[0] = fixed_first
        sds = [rng.uniform(spread * 0.6, spread) for _ in arms]
        tmean = sum(m * n for m, n in zip(means, ns)) / total_n
        tsd = float(np.sqrt(sum(s * s * n for s, n in zip(sds, ns)) / total_n))
        out = [section(name)]
        for stat in stats:
            if stat == "n":
                out.append(data_row("", "n", [_int(n) for n in ns], _int(total_n)))
            elif stat == "Mean":
                out.append(data_row("", "Mean", [_dec(m, 1) for m in means], _dec(tmean, 1)))
            elif stat == "SD":
                out.append(data_row("", "SD", [_dec(s, 2) for s in sds], _dec(tsd, 2)))
            elif stat == "Median":
                meds = [m + rng.uniform(-1, 1) for m in means]
                out.append(data_row("", "Median", [_dec(m, 1) for m in meds], _dec(tmean, 1)))
            elif stat == "Min, Max":
                lo = [int(m - 2.5 * s) for m, s in zip(means, sds)]
                hi = [int(m + 2.5 * s) for m, s in zip(means, sds)]
                vals = [_txt(f"{a}, {b}", CellType.TEXT) for a, b in zip(lo, hi)]
                out.append(data_row("", "Min, Max", vals, _txt(f"{min(lo)}, {max(hi)}", CellType.TEXT)))
        return out

    def categorical(name: str, levels: list[str], zero_levels=(), fixed: dict | None = None):
        live = [lv for lv in levels if lv not in zero_levels]
        per_arm = []
        for a, n in enumerate(ns):
            counts = dict.fromkeys(levels, 0)
            remaining = n
            if fixed:
                for lv, vals in fixed.items():
                    counts[lv] = vals[a]
                    remaining -= vals[a]
            free = [lv for lv in live if not fixed or lv not in fixed]
            for lv, c in zip(free, _split(remaining, len(free), rng)):
                counts[lv] = c
            per_arm.append(counts)
        out = [section(name)]
        for lv in levels:
            vals = [_pct(per_arm[a][lv], n) for a, n in enumerate(ns)]
            tcount = sum(per_arm[a][lv] for a in range(len(ns)))
            out.append(data_row("", lv, vals, _pct(tcount, total_n)))
        return out

    anchors = spec.anchors and len(arms) == 3
    core: list[_Row] = []
    core += continuous("Age (years)", 75.0, 8.0, ["n", "Mean", "SD", "Median", "Min, Max"],
                       75.2 if anchors else None)
    core += categorical("Age group", ["<65", "65-80", f"{GE}80 years"])
    core += categorical("Sex", ["Female", "Male"],
                        fixed={"Female": [53, 50, 40]} if anchors else None)
    core += categorical("Race", ["White", "Black or African American", "Asian",
                                 "American Indian or Alaska Native"],
                        zero_levels=("American Indian or Alaska Native",))
    core += continuous("Weight (kg)", 68.0, 14.0, ["n", "Mean", "SD"])
    core += continuous("Height (cm)", 165.0, 10.0, ["Mean"])

    need = spec.rows - len(header)
    body = core[:need]
    k = 1
    while len(body) < need:
        body += continuous(f"Baseline parameter {k}", 50.0, 10.0, ["n", "Mean", "SD"])[: need - len(body)]
        k += 1
    return _assemble(spec, cols, header, body)


# -- adverse event summary ----------------------------------------------------

def _ae_summary(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    ns = [n for _, n in spec.arms]
    tot = spec.include_total
    labels, nhead = _arm_header(spec, tot)
    groups = len(labels)
    cols = [_Col("", Alignment.LEFT, ElementType.ROW_HEADER)]
    for lab in labels:
        cols += [_Col(lab, span_count=2), _Col(f"{lab} events")]
    span_row, n_row, sub_row = [""], [""], [""]
    for lab, nh in zip(labels, nhead):
        span_row += [lab, ""]
        n_row += [nh, ""]
        sub_row += ["n (%)", "E"]
    header = [
        (ElementType.SPANNING_HEADER, span_row),
        (ElementType.COLUMN_HEADER, n_row),
        (ElementType.COLUMN_HEADER, sub_row),
    ]
    items = [
        ("Any TEAE", 0.75), ("Any serious TEAE", 0.08), ("Any TEAE leading to discontinuation", 0.15),
        (f"Any TEAE with severity {GE} Grade 3", 0.2), ("Any treatment-related TEAE", 0.45), ("Deaths", 0.0),
    ]
    need = spec.rows - len(header)
    k = 1
    while len(items) < need:
        items.append((f"Any TEAE of special interest {k}", 0.05))
        k += 1
    body = []
    for i, (label, p) in enumerate(items[:need]):
        subj = [int(rng.binomial(n, p)) for n in ns]
        ev = [c + int(rng.integers(0, c + 1)) for c in subj]
        cells = [_txt(label)]
        for c, e, n in zip(subj, ev, ns):
            cells += [_pct(c, n), _int(e)]
        if tot:
            cells += [_pct(sum(subj), sum(ns)), _int(sum(ev))]
        body.append(_Row(label, cells, ElementType.TOTAL_ROW if i == 0 else ElementType.DATA_ROW))
    assert groups * 2 + 1 == len(cols)
    return _assemble(spec, cols, header, body)


# -- adverse events by SOC / PT -----------------------------------------------

SOC_NAMES = (
    "Blood and lymphatic system disorders", "Cardiac disorders", "Ear and labyrinth disorders",
    "Endocrine disorders", "Eye disorders", "Gastrointestinal disorders",
    "General disorders and administration site conditions", "Hepatobiliary disorders",
    "Immune system disorders", "Infections and infestations", "Injury, poisoning and procedural complications",
    "Investigations", "Metabolism and nutrition disorders", "Musculoskeletal and connective tissue disorders",
    "Neoplasms benign, malignant and unspecified", "Nervous system disorders", "Psychiatric disorders",
    "Renal and urinary disorders", "Reproductive system and breast disorders",
    "Respiratory, thoracic and mediastinal disorders", "Skin and subcutaneous tissue disorders",
    "Social circumstances", "Surgical and medical procedures", "Vascular disorders",
    "Congenital, familial and genetic disorders", "Pregnancy, puerperium and perinatal conditions",
    "Product issues",
)
_SYLLABLES = ("ar", "bel", "cor", "dan", "e", "fro", "gal", "hy", "ix", "lom", "mer", "nu", "or", "pel",
              "quin", "ros", "sta", "tur", "ul", "ven", "wyr", "zan")
_SUFFIXES = ("itis", "algia", "osis", "emia", "opathy", "oma", "ectasia", "plegia")


def _pt_name(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        parts = rng.choice(_SYLLABLES, size=int(rng.integers(2, 4)))
        name = ("".join(parts) + str(rng.choice(_SUFFIXES))).capitalize()
        if name not in used:
            used.add(name)
            return name


def _ae_soc_pt(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    ns = [n for _, n in spec.arms]
    tot = spec.include_total
    labels, nhead = _arm_header(spec, tot)
    cols = [_Col("System Organ Class / Preferred Term", Alignment.LEFT, ElementType.ROW_HEADER)]
    cols += [_Col(lab) for lab in labels]
    header = [
        (ElementType.COLUMN_HEADER, ["System Organ Class / Preferred Term"] + labels),
        (ElementType.COLUMN_HEADER, [""] + nhead),
    ]
    need = spec.rows - len(header)
    anchors = spec.anchors and len(ns) == 3

    # plan SOC groups: (soc, [pt names]) filling need - 1 rows
    remaining = need - 1
    groups: list[tuple[str, list[str]]] = []
    used: set[str] = set()
    soc_i = 0
    while remaining >= 2:
        soc = SOC_NAMES[soc_i % len(SOC_NAMES)]
        if soc_i >= len(SOC_NAMES):
            soc = f"{soc} ({soc_i // len(SOC_NAMES) + 1})"
        m = min(int(rng.integers(3, 16)), remaining - 1)
        if remaining - 1 - m == 1:
            m += 1
        pts = [_pt_name(rng, used) for _ in range(m)]
        groups.append((soc, pts))
        remaining -= 1 + m
        soc_i += 1
    special = {
        "General disorders and administration site conditions": "Application site erythema",
        "Investigations": f"Alanine aminotransferase {GE}3x ULN",
        "Product issues": "Device malfunction",
    }
    for gi, (soc, pts) in enumerate(groups):
        if soc in special and pts:
            pts[0] = special[soc]
    zero_pt = groups[0][1][-1] if groups else None

    body: list[_Row] = []
    soc_rows: list[_Row] = []
    overall = [0] * len(ns)
    for soc, pts in groups:
        counts = []
        for pt in pts:
            if pt == "Application site erythema" and anchors:
                c = [7, 35, 52]
            elif pt == zero_pt:
                c = [0] * len(ns)
            else:
                p = rng.uniform(0.0, 0.12)
                c = [int(rng.binomial(n, p)) for n in ns]
            counts.append(c)
        soc_counts = []
        for a, n in enumerate(ns):
            col = [c[a] for c in counts]
            top, s = max(col), sum(col)
            extra = int(rng.integers(0, s - top)) if s > top else 0
            soc_counts.append(min(n, top + extra))
        for a in range(len(ns)):
            overall[a] = max(overall[a], soc_counts[a])

        def cells(label, cs):
            out = [_txt(label)] + [_pct(c, n) for c, n in zip(cs, ns)]
            if tot:
                out.append(_pct(sum(cs), sum(ns)))
            return out

        soc_row = _Row(soc, cells(soc, soc_counts), ElementType.DATA_ROW, 0)
        soc_rows.append(soc_row)
        body.append(soc_row)
        for pt, c in zip(pts, counts):
            body.append(_Row(pt, cells(pt, c), ElementType.DATA_ROW, 1))
    any_counts = [min(n, o + int(rng.integers(0, max(1, n - o) // 4 + 1))) for o, n in zip(overall, ns)]
    first = [_txt("Subjects with any TEAE")] + [_pct(c, n) for c, n in zip(any_counts, ns)]
    if tot:
        first.append(_pct(sum(any_counts), sum(ns)))
    body.insert(0, _Row("Subjects with any TEAE", first, ElementType.TOTAL_ROW, 0))
    while len(body) < need:  # tiny tables: pad with PT-free SOC rows
        soc = SOC_NAMES[len(body) % len(SOC_NAMES)]
        body.append(_Row(soc, [_txt(soc)] + [_pct(0, n) for n in ns] + ([_pct(0, sum(ns))] if tot else []),
                         ElementType.DATA_ROW, 0))
    return _assemble(spec, cols, header, body[:need])


# -- efficacy -----------------------------------------------------------------

def _efficacy(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    ns = [n for _, n in spec.arms]
    labels = [a for a, _ in spec.arms]
    cols = [_Col("", Alignment.LEFT, ElementType.ROW_HEADER)] + [_Col(lab) for lab in labels]
    header = [(ElementType.COLUMN_HEADER, ["ADAS-Cog (11) change from baseline"] + labels)]
    completers = [int(n - rng.integers(0, n // 4 + 1)) for n in ns]
    body = [
        _Row("n", [_txt("n")] + [_int(c) for c in completers]),
    ]
    means = [rng.normal(-1.5, 1.5) for _ in ns]
    sds = [rng.uniform(5, 8) for _ in ns]
    body.append(_Row("Mean (SD)", [_txt("Mean (SD)")] + [
        (f"{round(m, 1):.1f} ({round(s, 2):.2f})", CellType.DECIMAL, round(m, 1)) for m, s in zip(means, sds)
    ]))
    resp = [int(rng.binomial(c, 0.3)) for c in completers]
    label = f"Responders ({GE}4-point improvement)"
    body.append(_Row(label, [_txt(label)] + [_pct(r, c) for r, c in zip(resp, completers)]))
    need = spec.rows - len(header)
    week = 4
    while len(body) < need:
        lab = f"Week {week} mean (SD)"
        body.append(_Row(lab, [_txt(lab)] + [
            (f"{v:.1f} ({s:.2f})", CellType.DECIMAL, v)
            for v, s in ((round(rng.normal(-1, 1.5), 1), rng.uniform(5, 8)) for _ in ns)
        ]))
        week += 4
    return _assemble(spec, cols, header, body[:need])


# -- time to event ------------------------------------------------------------

def _km(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    ns = [n for _, n in spec.arms]
    labels = [a for a, _ in spec.arms]
    cols = [_Col("Time", Alignment.LEFT, ElementType.ROW_HEADER)]
    span, sub = ["Time"], [""]
    for lab in labels:
        cols += [_Col(lab, span_count=2), _Col(f"{lab} events")]
        span += [lab, ""]
        sub += ["At risk", "Events n (%)"]
    header = [(ElementType.SPANNING_HEADER, span), (ElementType.COLUMN_HEADER, sub)]
    need = spec.rows - len(header)
    at_risk = list(ns)
    events = [0] * len(ns)
    hazards = [rng.uniform(0.002, 0.01) for _ in ns]
    body = []
    for t in range(need):
        label = f"Week {t}" if t < need - 1 else f"{GE} Week {t}"
        cells = [_txt(label)]
        for a, n in enumerate(ns):
            cells += [_int(at_risk[a]), _pct(events[a], n)]
        body.append(_Row(label, cells))
        for a in range(len(ns)):
            e = int(rng.binomial(at_risk[a], hazards[a]))
            cens = int(rng.binomial(at_risk[a] - e, 0.003))
            events[a] += e
            at_risk[a] -= e + cens
    return _assemble(spec, cols, header, body)


# -- listing ------------------------------------------------------------------

_AE_TERMS = ("Headache", "Dizziness", "Application site pruritus", "Nausea", "Fatigue", "Erythema",
             "Diarrhoea", "Insomnia", "Cough", f"ALT {GE}3x ULN")


def _listing(spec: FixtureSpec, rng: np.random.Generator) -> CellGrid:
    names = ["Subject ID", "Treatment", "Age", "Weight (kg)", "Adverse event", "Study day"]
    cols = [_Col(n, Alignment.LEFT) for n in names]
    header = [(ElementType.COLUMN_HEADER, list(names))]
    need = spec.rows - len(header)
    body = []
    for i in range(need):
        arm = spec.arms[int(rng.integers(0, len(spec.arms)))][0]
        subj = f"01-{701 + i // 7:03d}-{1001 + i:04d}"
        term = _AE_TERMS[-1] if i == 0 else str(rng.choice(_AE_TERMS[:-1]))
        cells = [
            _txt(subj, CellType.TEXT), _txt(arm, CellType.TEXT), _int(int(rng.integers(51, 89))),
            _dec(rng.uniform(45, 110), 1), _txt(term, CellType.TEXT), _int(int(rng.integers(1, 200))),
        ]
        body.append(_Row(subj, cells))
    return _assemble(spec, cols, header, body)


_GENERATORS: dict[ReportKind, Callable[[FixtureSpec, np.random.Generator], CellGrid]] = {
    ReportKind.DEMOGRAPHICS: _demographics,
    ReportKind.AE_SUMMARY: _ae_summary,
    ReportKind.AE_SOC_PT: _ae_soc_pt,
    ReportKind.EFFICACY: _efficacy,
    ReportKind.KM_TTE: _km,
    ReportKind.LISTING: _listing,
}


def _rng(seed: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, salt])


def generate_pair(spec: FixtureSpec) -> FixturePair:
    """Native grid plus its RTF rendering; identical seeds give identical pairs."""
    grid = _GENERATORS[spec.report_kind](spec, _rng(spec.seed))
    meta = {
        "report_kind": spec.report_kind.value,
        "output": "listing" if spec.report_kind is ReportKind.LISTING else "table",
        "hierarchy": "indent" if spec.report_kind is ReportKind.AE_SOC_PT else None,
        "denominator": None,
        "registry_config": True,
        "injected": None,
    }
    return FixturePair(to_rtf(grid), grid, spec, tuple(tuple(r) for r in grid.text_rows()), meta)


# -- divergence injection -----------------------------------------------------

def _retext(grid: CellGrid, fn: Callable[[Cell], str | None]) -> CellGrid:
    """Copy of ``grid`` with cell_formatted replaced wherever ``fn`` returns text."""
    cells = []
    for c in grid.cells:
        new = fn(c)
        cells.append(c if new is None or new == c.cell_formatted else replace(c, cell_formatted=new))
    return CellGrid(tuple(cells), grid.structure)


def _drop_cols(grid: CellGrid, drop: set[int]) -> CellGrid:
    keep = [s.dim_id for s in grid.cols() if s.dim_id not in drop]
    renum = {old: new for new, old in enumerate(keep, start=1)}
    cells = tuple(replace(c, col_id=renum[c.col_id]) for c in grid.cells if c.col_id in renum)
    structure = tuple(
        replace(s, dim_id=renum[s.dim_id], sort_order=renum[s.dim_id]) if s.dimension is Dimension.COL else s
        for s in grid.structure
        if s.dimension is Dimension.ROW or s.dim_id in renum
    )
    return CellGrid(cells, structure)


def _body_rows(grid: CellGrid) -> list[int]:
    return [s.dim_id for s in grid.rows() if s.element_type not in (ElementType.COLUMN_HEADER,
                                                                     ElementType.SPANNING_HEADER)]


def _stub_cols(grid: CellGrid) -> list[int]:
    return [s.dim_id for s in grid.cols() if s.element_type is ElementType.ROW_HEADER] or [1]


def _paired_cells(grid: CellGrid) -> list[Cell]:
    from tflparity.rtf import NumericKind, classify_cell_text

    return [c for c in grid.cells if c.cell_type is CellType.PERCENTAGE
            and classify_cell_text(c.cell_formatted).kind is NumericKind.PAIRED]


def _legacy(pair: FixturePair, rows: Sequence[Sequence[str]], **meta) -> FixturePair:
    rows = tuple(tuple(r) for r in rows)
    return FixturePair(rtf_from_rows(rows), pair.grid, pair.spec, rows, {**pair.meta, **meta})


def _native(pair: FixturePair, grid: CellGrid, **meta) -> FixturePair:
    return FixturePair(pair.rtf, grid, pair.spec, pair.legacy_rows, {**pair.meta, **meta})


def _na(category: DivergenceCategory, pair: FixturePair, why: str) -> CategoryNotApplicable:
    return CategoryNotApplicable(f"{category.value} does not apply to {pair.spec.report_kind.value}: {why}")


def inject_divergence(
    pair: FixturePair, category: DivergenceCategory | str, seed: int = 0
) -> tuple[FixturePair, list[DivergenceCategory]]:
    """Apply one mutation of ``category`` and return the pair with the categories to expect."""
    cat = DivergenceCategory(category)
    if cat is DivergenceCategory.UNCLASSIFIED:
        raise ValueError("UNCLASSIFIED cannot be injected")
    rng = _rng(seed, 0xD1F)
    grid = pair.grid
    rows = [list(r) for r in pair.legacy_rows]
    listing = pair.is_listing
    body = _body_rows(grid)
    stub = _stub_cols(grid)
    C = DivergenceCategory

    def pick(seq):
        return seq[int(rng.integers(0, len(seq)))]

    if cat is C.TOTAL_COLUMN:
        if listing:
            raise _na(cat, pair, "listings have no treatment columns")
        total_cols = [s.dim_id for s in grid.cols() if re.match(r"(?i)^total\b", s.label)]
        if not total_cols:
            raise _na(cat, pair, "no Total column")
        drop = set(total_cols)
        for s in grid.cols():  # columns spanned by the Total header go too
            if s.dim_id in total_cols and s.span_count > 1:
                drop.update(range(s.dim_id, s.dim_id + s.span_count))
        mutated = _native(pair, _drop_cols(grid, drop))

    elif cat is C.PAIRED_COUNT_PCT:
        if listing:
            raise _na(cat, pair, "listings are compared positionally")
        paired = _paired_cells(grid)
        candidates = sorted({c.col_id for c in paired} - set(stub))
        if not candidates:
            raise _na(cat, pair, "no count (percent) cells")
        col = pick(candidates) - 1
        from tflparity.rtf import NumericKind, classify_cell_text, normalize_text

        new_rows = []
        header_ids = {s.dim_id for s in grid.rows()} - set(body)
        for i, r in enumerate(rows, start=1):
            text = r[col]
            ext = classify_cell_text(normalize_text(text))
            if i in header_ids:
                extra = "%" if i == max(header_ids) else ""
                new_rows.append(r[:col + 1] + [extra] + r[col + 1:])
            elif ext.kind is NumericKind.PAIRED:
                count = text.split("(")[0].strip()
                pct = text.split("(")[1].rstrip(")% ").strip()
                new_rows.append(r[:col] + [count, pct] + r[col + 1:])
            else:
                new_rows.append(r[:col + 1] + [""] + r[col + 1:])
        mutated = _legacy(pair, new_rows)

    elif cat in (C.ADSL_DENOMINATOR, C.POPULATION_DENOMINATOR):
        if listing:
            raise _na(cat, pair, "listings carry no percentages")
        paired = _paired_cells(grid)
        if not paired:
            raise _na(cat, pair, "no count (percent) cells")
        arm_n = {}
        for s in grid.cols():
            m = re.search(r"\(N=(\d+)\)", " ".join(
                c.cell_formatted for c in grid.cells if c.col_id == s.dim_id and c.row_id not in body))
            if m:
                arm_n[s.dim_id] = int(m.group(1))
        if not arm_n:
            raise _na(cat, pair, "no arm sizes in the header")
        col = pick(sorted(arm_n))
        n = arm_n[col]
        new_n = n + 3 if cat is C.ADSL_DENOMINATOR else n - max(1, round(0.1 * n))
        ids = {c.pos for c in paired if c.col_id == col}

        def redenom(c: Cell):
            if c.pos not in ids or not c.cell_value:
                return None
            return f"{int(c.cell_value)} ({100.0 * c.cell_value / new_n:.1f}%)"

        new_grid = _retext(grid, redenom)
        if new_grid == grid:
            raise _na(cat, pair, "no non-zero percentages in the chosen column")
        flag = Denominator.ADSL.value if cat is C.ADSL_DENOMINATOR else Denominator.POPULATION.value
        mutated = _native(pair, new_grid, denominator=flag)

    elif cat is C.TREATMENT_NAME_HARMONIZATION:
        syn = default_synonyms()
        swaps = []
        for label, _ in pair.spec.arms:
            for group in syn.groups:
                if label.casefold() == group[0].casefold() and len(group) > 1:
                    swaps.append((label, group[1]))
        if not swaps:
            raise _na(cat, pair, "no arm label with a known synonym")
        old, new = pick(swaps)
        rx = re.compile(rf"(?<![A-Za-z0-9]){re.escape(old)}(?![A-Za-z0-9])")
        new_rows = [[rx.sub(new, t) for t in r] for r in rows]
        if new_rows == rows:
            raise _na(cat, pair, "arm label not printed")
        mutated = _legacy(pair, new_rows)

    elif cat is C.SOC_GROUP_TOTAL:
        if pair.spec.report_kind is not ReportKind.AE_SOC_PT:
            raise _na(cat, pair, "no SOC/PT hierarchy")
        from tflparity.ir.model import cell_count, hierarchy_from_indent

        spec = hierarchy_from_indent(grid)
        cmap = grid.cell_map()
        arm_n = {j + 2: n for j, (_, n) in enumerate(pair.spec.arms)}
        options = []
        for parent, children in spec.groups:
            for col, n in arm_n.items():
                soc = cell_count(cmap[(parent, col)])
                s = sum(cell_count(cmap[(ch, col)]) for ch in children)
                if soc < min(n, s):
                    options.append((parent, col, int(min(n, s)), n))
        if not options:
            raise _na(cat, pair, "every SOC already equals its PT sum")
        parent, col, value, n = pick(options)

        def bump(c: Cell):
            if c.pos == (parent, col):
                return f"{value} ({100.0 * value / n:.1f}%)"
            return None

        cells = tuple(replace(c, cell_value=float(value)) if c.pos == (parent, col) else c for c in grid.cells)
        mutated = _native(pair, _retext(CellGrid(cells, grid.structure), bump))

    elif cat is C.ZERO_FILL:
        if listing:
            raise _na(cat, pair, "listings are compared positionally")
        from tflparity.rtf import classify_cell_text, normalize_text

        zero_rows = []
        for r in body:
            data = [t for j, t in enumerate(rows[r - 1], start=1) if j not in stub and normalize_text(t)]
            exts = [classify_cell_text(normalize_text(t)) for t in data]
            if exts and all(e.kind.value != "NONE" and e.primary == 0 and e.secondary in (None, 0) for e in exts):
                zero_rows.append(r)
        if not zero_rows:
            raise _na(cat, pair, "no all-zero row")
        victim = pick(zero_rows)
        mutated = _legacy(pair, [r for i, r in enumerate(rows, start=1) if i != victim])

    elif cat is C.ROW_LABEL_DRIFT:
        if listing:
            raise _na(cat, pair, "listings are compared positionally")
        from tflparity.compare import similarity

        labels = [rows[r - 1][c - 1] for r in body for c in stub if rows[r - 1][c - 1]]
        counts = {lab: labels.count(lab) for lab in labels}
        options = []
        for r in body:
            for c in stub:
                lab = rows[r - 1][c - 1]
                if counts.get(lab) == 1 and len(lab) >= 6:
                    options.append((r, c))
        if not options:
            raise _na(cat, pair, "no unique label long enough to drift")
        r, c = pick(options)
        lab = rows[r - 1][c - 1]
        positions = [i for i, ch in enumerate(lab) if ch.isalpha() and ch.islower()]
        if not positions:
            raise _na(cat, pair, "label has no lowercase letters to edit")
        i = positions[len(positions) // 2]
        repl = "x" if lab[i] != "x" else "z"
        drifted = lab[:i] + repl + lab[i + 1:]
        assert 0.8 <= similarity(drifted.casefold(), lab.casefold()) < 1.0
        rows[r - 1][c - 1] = drifted
        mutated = _legacy(pair, rows)

    elif cat is C.UNICODE_FALLBACK:
        if not any(GE in t for r in rows for t in r):
            raise _na(cat, pair, f"no {GE} in the table")
        mutated = _legacy(pair, [[t.replace(GE, "?") for t in r] for r in rows])

    elif cat is C.HEADER_DETECTION:
        if listing:
            raise _na(cat, pair, "listings are compared positionally")
        last_header = max((s.dim_id for s in grid.rows() if s.dim_id not in body), default=0)
        sub = ["" if j in stub else "n (%)" for j in range(1, len(rows[0]) + 1)]
        mutated = _legacy(pair, rows[:last_header] + [sub] + rows[last_header:])

    elif cat is C.BLANK_LABEL_ALIGNMENT:
        if listing:
            raise _na(cat, pair, "listings are compared positionally")
        from tflparity.rtf import NumericKind, classify_cell_text, normalize_text

        keys = [tuple(t for j, t in enumerate(rows[r - 1], start=1) if j not in stub) for r in body]
        options = []
        for r, key in zip(body, keys):
            exts = [classify_cell_text(normalize_text(t)) for t in key]
            nonzero = [e for e in exts if e.kind is not NumericKind.NONE and e.primary != 0]
            has_label = any(rows[r - 1][c - 1] for c in stub)
            if has_label and len(nonzero) >= 2 and keys.count(key) == 1:
                options.append(r)
        if not options:
            raise _na(cat, pair, "no labelled row with distinctive data")
        r = pick(options)
        for c in stub:
            rows[r - 1][c - 1] = ""
        mutated = _legacy(pair, rows)

    elif cat is C.CONFIG_COVERAGE:
        from tflparity.rtf import NumericKind, classify_cell_text

        def coarse(c: Cell):
            if c.cell_type not in (CellType.DECIMAL, CellType.PERCENTAGE):
                return None
            ext = classify_cell_text(c.cell_formatted)
            if ext.kind is NumericKind.PAIRED:
                return f"{int(ext.primary)} ({ext.secondary:.0f}%)"
            if ext.kind is NumericKind.SINGLE:
                return f"{ext.primary:.0f}"
            return None

        def changed(c: Cell) -> bool:
            new = coarse(c)
            if new is None:
                return False
            a, b = classify_cell_text(c.cell_formatted), classify_cell_text(new)
            return (a.primary, a.secondary) != (b.primary, b.secondary)

        new_grid = _retext(grid, coarse)
        if not any(changed(c) for c in grid.cells):
            raise _na(cat, pair, "nothing to round")
        mutated = _native(pair, new_grid, registry_config=False)

    else:  # pragma: no cover
        raise ValueError(cat)

    mutated.meta["injected"] = cat.value
    return mutated, [cat]


def applicable_categories(pair: FixturePair) -> list[DivergenceCategory]:
    out = []
    for cat in DivergenceCategory:
        if cat is DivergenceCategory.UNCLASSIFIED:
            continue
        try:
            inject_divergence(pair, cat, 0)
        except CategoryNotApplicable:
            continue
        out.append(cat)
    return out


# -- harness workspaces -------------------------------------------------------

_WORKSPACE_KINDS = {
    ReportKind.DEMOGRAPHICS: ("t_dm_01", "DEMOG", "tp_demog", "dm_table", "table", None),
    ReportKind.AE_SUMMARY: ("t_ae_01", "AE_OVERVIEW", "tp_ae_overview", "ae_ovr", "table", "ADSL"),
    ReportKind.AE_SOC_PT: ("t_ae_02", "AE_SOC_PT", "tp_ae_socpt", "ae_socpt", "table", "ADSL"),
    ReportKind.EFFICACY: ("t_ef_01", "EFFICACY", "tp_efficacy", "eff_sum", "table", None),
    ReportKind.KM_TTE: ("t_tte_01", "KM_TTE", "tp_km", "km_tab", "table", None),
    ReportKind.LISTING: ("l_ae_01", "AE_LISTING", "tp_listing", "ae_list", "listing", None),
}


def build_workspace(
    root: str | Path,
    kinds: Sequence[ReportKind | str] | None = None,
    seed: int = 0,
    inject: Mapping[str, DivergenceCategory | str] | None = None,
    sample_entries: Sequence[str] | None = None,
) -> Path:
    """Write a self-contained harness workspace and return the path of its ``harness.yaml``.

    Layout: ``bridge_map.yaml``, ``study.yaml``, ``registry/``, ``legacy/`` (SAS stubs),
    ``data/`` (placeholder datasets), ``fixtures/<entry>/<legacy|native>/`` and ``out/``.
    ``inject`` maps entry ids to a divergence category planted in that entry's fixture.
    """
    import yaml

    from tflparity.ir.render import to_json

    root = Path(root)
    chosen = [ReportKind(k) for k in (kinds or list(_WORKSPACE_KINDS))]
    inject = {k: DivergenceCategory(v) for k, v in (inject or {}).items()}
    for sub in ("registry", "legacy", "data", "fixtures", "out"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "data" / "adsl.csv").write_text("USUBJID,TRT01A,SAFFL\n01-701-1015,Placebo,Y\n", encoding="utf-8")
    (root / "data" / "adae.csv").write_text("USUBJID,AEDECOD\n01-701-1015,Erythema\n", encoding="utf-8")
    study = {
        "dataset_paths": {"adsl": "data/adsl.csv", "adae": "data/adae.csv"},
        "library_paths": ["legacy"],
        "treatment_labels": {a: a for a, _ in CDISC_ARMS},
        "population_filters": {"SAFFL": "SAFFL='Y'"},
        "environment": {"SASROOT": "/opt/sas"},
        "parameters": {"studyid": "CDISCPILOT01", "popfl": "SAFFL"},
    }
    (root / "study.yaml").write_text(yaml.safe_dump(study, sort_keys=False), encoding="utf-8")
    entries = []
    for i, kind in enumerate(chosen):
        eid, rtype, macro, legacy_macro, output, denom = _WORKSPACE_KINDS[kind]
        reg = {
            "report_type": rtype, "macro": macro, "output": output,
            "parameters": {
                "dsin": {"type": "dataset", "required": True},
                "trtvar": {"type": "variable", "default": "TRT01A"},
                "popfl": {"type": "variable", "default": "SAFFL"},
                "studyid": {"type": "text"},
            },
        }
        if denom:
            reg["denominator"] = denom
        if kind is ReportKind.AE_SOC_PT:
            reg["hierarchy"] = "indent"
        (root / "registry" / f"{rtype.lower()}.yaml").write_text(yaml.safe_dump(reg, sort_keys=False),
                                                                encoding="utf-8")
        (root / "legacy" / f"{legacy_macro}.sas").write_text(
            f"%macro {legacy_macro}(DSIN=, TRT=TRT01A, POP=SAFFL);\n"
            f"  %put NOTE: legacy {kind.value.lower()} report;\n"
            f"  data work.{legacy_macro}; set &DSIN; where &POP = 'Y'; run;\n"
            f"%mend {legacy_macro};\n",
            encoding="utf-8",
        )
        entries.append({
            "legacy_id": eid, "native_target": rtype, "mode": "CONSOLIDATION", "legacy_macro": legacy_macro,
            "parameter_mapping": {"DSIN": "dsin", "TRT": "trtvar", "POP": "popfl"},
            "defaults": {"trtvar": "TRT01A"},
            "legacy_args": {"DSIN": "adam.adae" if kind.name.startswith("AE") else "adam.adsl"},
        })
        pair = generate_pair(cdisc_pilot_spec(kind, seed=seed + i))
        if eid in inject:
            pair, _ = inject_divergence(pair, inject[eid], seed + i)
        leg = root / "fixtures" / eid / "legacy"
        nat = root / "fixtures" / eid / "native"
        leg.mkdir(parents=True, exist_ok=True)
        nat.mkdir(parents=True, exist_ok=True)
        (leg / f"{eid}.rtf").write_bytes(pair.rtf)
        (nat / f"{eid}.json").write_text(to_json(pair.grid), encoding="utf-8")
    (root / "bridge_map.yaml").write_text(yaml.safe_dump({"entries": entries}, sort_keys=False), encoding="utf-8")
    harness = {
        "bridge_map": "bridge_map.yaml", "study_config": "study.yaml", "registry_dir": "registry",
        "fixtures_dir": "fixtures", "output_dir": "out", "legacy_dir": "legacy",
        "sample_entries": list(sample_entries) if sample_entries is not None else [e["legacy_id"] for e in entries[:2]],
        "epsilon": {"default": 1e-9},
    }
    path = root / "harness.yaml"
    path.write_text(yaml.safe_dump(harness, sort_keys=False), encoding="utf-8")
    return path
