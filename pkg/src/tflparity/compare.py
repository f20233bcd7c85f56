"""Cell-level comparison of a legacy RTF table against a native cell grid.

The pipeline is: detect header rows, align columns, align body rows, compare the
aligned cells, then label each difference with a divergence category.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from difflib import SequenceMatcher
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml
from rapidfuzz.distance import Levenshtein

from tflparity.errors import DegenerateTable
from tflparity.ir.model import CellGrid, ElementType, HEADER_ELEMENTS, HierarchySpec
from tflparity.rtf import (
    NormalizeOptions,
    NumericExtraction,
    NumericKind,
    RawTable,
    classify_cell_text,
    normalize_text,
)


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    ERROR = "ERROR"
    SKIP = "SKIP"


class DivergenceCategory(str, Enum):
    TOTAL_COLUMN = "TOTAL_COLUMN"
    PAIRED_COUNT_PCT = "PAIRED_COUNT_PCT"
    ADSL_DENOMINATOR = "ADSL_DENOMINATOR"
    POPULATION_DENOMINATOR = "POPULATION_DENOMINATOR"
    TREATMENT_NAME_HARMONIZATION = "TREATMENT_NAME_HARMONIZATION"
    SOC_GROUP_TOTAL = "SOC_GROUP_TOTAL"
    ZERO_FILL = "ZERO_FILL"
    ROW_LABEL_DRIFT = "ROW_LABEL_DRIFT"
    UNICODE_FALLBACK = "UNICODE_FALLBACK"
    HEADER_DETECTION = "HEADER_DETECTION"
    BLANK_LABEL_ALIGNMENT = "BLANK_LABEL_ALIGNMENT"
    CONFIG_COVERAGE = "CONFIG_COVERAGE"
    UNCLASSIFIED = "UNCLASSIFIED"


INJECTABLE = tuple(c for c in DivergenceCategory if c is not DivergenceCategory.UNCLASSIFIED)


class Denominator(str, Enum):
    ADSL = "ADSL"
    POPULATION = "POPULATION"


# -- synonyms -----------------------------------------------------------------

class Synonyms:
    """Treatment spellings that should compare equal (e.g. TRT01A and TRTA)."""

    def __init__(self, groups: Iterable[Sequence[str]] = ()) -> None:
        self.groups = [tuple(str(a) for a in g) for g in groups if len(g) >= 1]
        self._canon: dict[str, str] = {}
        for g in self.groups:
            for alias in g:
                self._canon[alias.casefold()] = g[0].casefold()
        aliases = sorted(self._canon, key=len, reverse=True)
        self._re = (
            re.compile(r"(?<![0-9a-z])(" + "|".join(re.escape(a) for a in aliases) + r")(?![0-9a-z])")
            if aliases else None
        )

    @classmethod
    def default(cls) -> "Synonyms":
        text = resources.files("tflparity").joinpath("data/synonyms.yaml").read_text(encoding="utf-8")
        return cls(yaml.safe_load(text)["groups"])

    @classmethod
    def load(cls, path: str | Path) -> "Synonyms":
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls(doc.get("groups", []))

    def extend(self, other: "Synonyms") -> "Synonyms":
        return Synonyms(self.groups + other.groups)

    def canonical(self, text: str) -> str:
        """Case-folded text with every alias replaced by its group's canonical spelling."""
        folded = text.casefold()
        if self._re is None:
            return folded
        return self._re.sub(lambda m: self._canon[m.group(1)], folded)

    def equivalent(self, a: str, b: str) -> bool:
        return a != b and self.canonical(a) == self.canonical(b)


_DEFAULT_SYNONYMS: Synonyms | None = None


def default_synonyms() -> Synonyms:
    global _DEFAULT_SYNONYMS
    if _DEFAULT_SYNONYMS is None:
        _DEFAULT_SYNONYMS = Synonyms.default()
    return _DEFAULT_SYNONYMS


# -- options and results ------------------------------------------------------

@dataclass(frozen=True)
class CompareOptions:
    epsilon: float = 1e-9
    min_header_cells: int = 2
    label_threshold: float = 0.8
    data_threshold: float = 0.8
    casefold: bool = False
    normalize_unicode_fallback: bool = False
    harmonize_treatments: bool = False
    synonyms: Synonyms | None = None
    denominator: Denominator | None = None
    hierarchy: HierarchySpec | None = None
    has_registry_config: bool = True
    data_cells_only: bool = False

    def __post_init__(self) -> None:
        if self.denominator is not None:
            object.__setattr__(self, "denominator", Denominator(self.denominator))
        if self.epsilon < 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be a finite non-negative number")

    @property
    def syn(self) -> Synonyms:
        return self.synonyms or default_synonyms()


AlignOptions = CompareOptions


@dataclass(frozen=True)
class CellDiff:
    legacy_pos: tuple[int, int] | None
    native_pos: tuple[int, int] | None
    legacy_text: str
    native_text: str
    numeric_delta: float | None = None
    category: DivergenceCategory = DivergenceCategory.UNCLASSIFIED
    region: str = "body"
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["category"] = self.category.value
        d["legacy_pos"] = list(self.legacy_pos) if self.legacy_pos else None
        d["native_pos"] = list(self.native_pos) if self.native_pos else None
        return d


@dataclass(frozen=True)
class ComparisonReport:
    entry_id: str
    verdict: Verdict
    total_cells: int = 0
    matched_cells: int = 0
    diffs: tuple[CellDiff, ...] = ()
    alignment_notes: tuple[str, ...] = ()
    kind: str = "table"
    error: str | None = None

    @property
    def parity_pct(self) -> float:
        if self.verdict in (Verdict.ERROR, Verdict.SKIP):
            return 0.0
        if self.total_cells == 0:
            return 100.0
        return 100.0 * self.matched_cells / self.total_cells

    @property
    def histogram(self) -> dict[str, int]:
        counts = Counter(d.category.value for d in self.diffs)
        return {c.value: counts[c.value] for c in DivergenceCategory if counts[c.value]}

    @property
    def top_category(self) -> str:
        h = self.histogram
        if not h:
            return ""
        return sorted(h.items(), key=lambda kv: (-kv[1], list(DivergenceCategory).index(DivergenceCategory(kv[0]))))[0][0]

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "kind": self.kind,
            "verdict": self.verdict.value,
            "total_cells": self.total_cells,
            "matched_cells": self.matched_cells,
            "parity_pct": round(self.parity_pct, 6),
            "categories": self.histogram,
            "diffs": [d.to_dict() for d in self.diffs],
            "alignment_notes": list(self.alignment_notes),
            "error": self.error,
        }


def _verdict(diffs: Sequence[CellDiff]) -> Verdict:
    return Verdict.FAIL if diffs else Verdict.PASS


# -- cell helpers -------------------------------------------------------------

def _norm_opts(opts: CompareOptions) -> NormalizeOptions:
    return NormalizeOptions(casefold=opts.casefold, unicode_fallback=opts.normalize_unicode_fallback)


def display_key(text: str, opts: CompareOptions) -> str:
    """The text actually compared: normalized, with synonyms folded when harmonization is on."""
    t = normalize_text(text, _norm_opts(opts))
    if opts.harmonize_treatments:
        t = opts.syn.canonical(t)
    return t


def match_key(text: str, opts: CompareOptions) -> str:
    """Looser key used only for alignment decisions."""
    t = normalize_text(text, NormalizeOptions(casefold=True, unicode_fallback=True))
    return normalize_text(opts.syn.canonical(t), NormalizeOptions(casefold=True, unicode_fallback=True))


def similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity in [0, 1]."""
    return Levenshtein.normalized_similarity(a, b)


def _cells_equal(a: str, b: str, eps: float) -> tuple[bool, float | None]:
    """Compare two already-normalized texts. Returns (equal, numeric_delta)."""
    if a == b:
        return True, None
    ea, eb = classify_cell_text(a), classify_cell_text(b)
    if ea.kind is NumericKind.NONE or ea.kind is not eb.kind:
        return False, None
    delta = eb.primary - ea.primary
    ok = abs(delta) <= eps
    if ea.kind is NumericKind.PAIRED:
        ok = ok and abs(eb.secondary - ea.secondary) <= eps
    return ok, delta


def _is_zero(ext: NumericExtraction) -> bool:
    if ext.kind is NumericKind.NONE:
        return False
    return ext.primary == 0 and (ext.secondary in (None, 0))


def _numeric_row(cells: Sequence[str]) -> bool:
    return any(classify_cell_text(normalize_text(c)).kind is not NumericKind.NONE for c in cells)


# -- alignment ----------------------------------------------------------------

@dataclass(frozen=True)
class RowPair:
    legacy: int | None
    native: int | None
    how: str = "anchor"  # anchor | label | similar | blank | unmatched
    label_similarity: float = 1.0


@dataclass(frozen=True)
class Alignment:
    legacy_rows: tuple[tuple[str, ...], ...]
    native_rows: tuple[tuple[str, ...], ...]
    header_pairs: tuple[tuple[int | None, int | None], ...]
    col_pairs: tuple[tuple[int | None, int | None], ...]
    row_pairs: tuple[RowPair, ...]
    legacy_label_cols: tuple[int, ...]
    native_label_cols: tuple[int, ...]
    notes: tuple[str, ...] = ()

    def legacy_col_for(self, native_col: int) -> int | None:
        return next((l for l, n in self.col_pairs if n == native_col), None)

    def native_col_for(self, legacy_col: int) -> int | None:
        return next((n for l, n in self.col_pairs if l == legacy_col), None)

    @property
    def matched_cols(self) -> list[tuple[int, int]]:
        return [(l, n) for l, n in self.col_pairs if l is not None and n is not None]


def _cell(row: Sequence[str], idx: int | None) -> str:
    if idx is None or idx < 0 or idx >= len(row):
        return ""
    return row[idx]


def _native_cell(rows: Sequence[Sequence[str]], row_id: int, col_id: int | None) -> str:
    if col_id is None:
        return ""
    return _cell(rows[row_id - 1], col_id - 1)


def _blank(row: Sequence[str]) -> bool:
    return not any(normalize_text(c) for c in row)


def _monotone_match(n_a: int, n_b: int, score) -> list[tuple[int, int]]:
    """Order-preserving assignment maximizing the summed positive scores."""
    best = [[0.0] * (n_b + 1) for _ in range(n_a + 1)]
    for i in range(1, n_a + 1):
        row, prev = best[i], best[i - 1]
        for j in range(1, n_b + 1):
            v = max(prev[j], row[j - 1])
            s = score(i - 1, j - 1)
            if s is not None and prev[j - 1] + s > v:
                v = prev[j - 1] + s
            row[j] = v
    pairs = []
    i, j = n_a, n_b
    while i > 0 and j > 0:
        if best[i][j] == best[i - 1][j]:
            i -= 1
        elif best[i][j] == best[i][j - 1]:
            j -= 1
        else:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
    return pairs[::-1]


def _fill_left(get, c: int, first: int) -> str:
    """Header text at column ``c``, borrowing from the nearest non-blank cell to its left.

    Spanning headers are printed once over several columns, so a blank header
    cell belongs to whatever label sits to its left.
    """
    for k in range(c, first - 1, -1):
        text = get(k)
        if normalize_text(text):
            return text
    return ""


def _align_columns(
    legacy_headers: list[tuple[str, ...]],
    native_headers: list[tuple[str, ...]],
    n_legacy: int,
    n_native: int,
    opts: CompareOptions,
) -> tuple[list[tuple[int | None, int | None]], list[str]]:
    notes: list[str] = []
    if n_legacy == n_native:
        return [(c, c + 1) for c in range(n_legacy)], notes

    def signature(headers, c):
        return " | ".join(match_key(_fill_left(lambda k: _cell(h, k), c, 0), opts) for h in headers)

    lsig = [signature(legacy_headers, c) for c in range(n_legacy)]
    nsig = [signature(native_headers, c) for c in range(n_native)]
    if legacy_headers and native_headers and any(s.strip(" |") for s in lsig):
        def score(i, j):
            s = similarity(lsig[i], nsig[j])
            return s if s >= 0.5 else None
        matched = _monotone_match(n_legacy, n_native, score)
        notes.append(f"column counts differ ({n_legacy} legacy vs {n_native} native); aligned on headers")
    else:
        k = min(n_legacy, n_native)
        matched = [(c, c) for c in range(k)]
        notes.append(f"column counts differ ({n_legacy} legacy vs {n_native} native); no headers, prefix match")

    lmap = dict(matched)
    nmap = {j: i for i, j in matched}
    pairs: list[tuple[int | None, int | None]] = []
    i = j = 0
    while i < n_legacy or j < n_native:
        if i < n_legacy and i in lmap and lmap[i] == j:
            pairs.append((i, j + 1))
            i += 1
            j += 1
        elif i < n_legacy and i not in lmap:
            pairs.append((i, None))
            i += 1
        elif j < n_native and j not in nmap:
            pairs.append((None, j + 1))
            j += 1
        else:  # pragma: no cover - matched is monotone so this cannot happen
            i += 1
            j += 1
    return pairs, notes


def align_tables(legacy: RawTable, native: CellGrid, opts: CompareOptions | None = None) -> Alignment:
    opts = opts or CompareOptions()
    notes: list[str] = []
    lrows = [tuple(r) for r in legacy.rows]
    nrows = [tuple(r) for r in native.text_rows()]
    row_kind = {s.dim_id: s.element_type for s in native.rows()}

    # legacy header detection
    first_numeric = next((i for i, r in enumerate(lrows) if _numeric_row(r)), len(lrows))
    l_headers = [
        i for i in range(first_numeric)
        if sum(1 for c in lrows[i] if normalize_text(c)) >= opts.min_header_cells
    ]
    header_keys = {tuple(normalize_text(c) for c in lrows[i]) for i in l_headers}
    l_body: list[int] = []
    repeated = 0
    for i, r in enumerate(lrows):
        if i in l_headers or _blank(r):
            continue
        if i > first_numeric and tuple(normalize_text(c) for c in r) in header_keys:
            repeated += 1
            continue
        l_body.append(i)
    if repeated:
        notes.append(f"dropped {repeated} repeated page header row(s)")

    n_headers = [rid for rid in range(1, len(nrows) + 1) if row_kind.get(rid) in HEADER_ELEMENTS]
    n_body = [
        rid for rid in range(1, len(nrows) + 1)
        if row_kind.get(rid) not in HEADER_ELEMENTS and not _blank(nrows[rid - 1])
    ]
    if not l_body or not n_body:
        side = "legacy" if not l_body else "native"
        raise DegenerateTable(f"{side} table has no data rows")

    header_pairs: list[tuple[int | None, int | None]] = []
    for k in range(max(len(l_headers), len(n_headers))):
        header_pairs.append((
            l_headers[k] if k < len(l_headers) else None,
            n_headers[k] if k < len(n_headers) else None,
        ))
    if len(l_headers) != len(n_headers):
        notes.append(f"header row counts differ ({len(l_headers)} legacy vs {len(n_headers)} native)")

    n_legacy_cols = max((len(r) for r in lrows), default=0)
    n_native_cols = len(native.cols())
    col_pairs, col_notes = _align_columns(
        [lrows[i] for i in l_headers], [nrows[r - 1] for r in n_headers], n_legacy_cols, n_native_cols, opts
    )
    notes.extend(col_notes)

    stub = [s.dim_id for s in native.cols() if s.element_type is ElementType.ROW_HEADER] or [1]
    nmap = {n: l for l, n in col_pairs if n is not None}
    native_label_cols = tuple(stub)
    legacy_label_cols = tuple(nmap[c] for c in stub if nmap.get(c) is not None)
    data_pairs = [(l, n) for l, n in col_pairs if l is not None and n is not None and n not in stub]

    def l_label(i):
        return " ".join(normalize_text(_cell(lrows[i], c)) for c in legacy_label_cols).strip()

    def n_label(r):
        return " ".join(normalize_text(_native_cell(nrows, r, c)) for c in native_label_cols).strip()

    def l_key(i):
        return tuple(display_key(_cell(lrows[i], l), opts) for l, n in col_pairs if l is not None and n is not None)

    def n_key(r):
        return tuple(display_key(_native_cell(nrows, r, n), opts) for l, n in col_pairs if l is not None and n is not None)

    def data_sim(i, r):
        hits = total = 0
        for l, n in data_pairs:
            a = display_key(_cell(lrows[i], l), opts)
            b = display_key(_native_cell(nrows, r, n), opts)
            if not a and not b:
                continue
            total += 1
            hits += _cells_equal(a, b, opts.epsilon)[0]
        return 1.0 if total == 0 else hits / total

    lkeys = [l_key(i) for i in l_body]
    nkeys = [n_key(r) for r in n_body]
    pairs: list[RowPair] = []

    def fuzzy(li: list[int], ni: list[int]) -> list[RowPair]:
        """Pair rows inside an anchor gap: label anchors first, then a scored DP."""
        out: list[RowPair] = []
        la = [match_key(l_label(i), opts) for i in li]
        na = [match_key(n_label(r), opts) for r in ni]
        sm = SequenceMatcher(None, la, na, autojunk=False)
        prev_a = prev_b = 0
        blocks = [b for b in sm.get_matching_blocks()]
        for blk in blocks:
            out.extend(_dp(li[prev_a:blk.a], ni[prev_b:blk.b]))
            for k in range(blk.size):
                if la[blk.a + k]:
                    out.append(RowPair(li[blk.a + k], ni[blk.b + k], "label", 1.0))
                else:
                    out.extend(_dp([li[blk.a + k]], [ni[blk.b + k]]))
            prev_a, prev_b = blk.a + blk.size, blk.b + blk.size
        return out

    def _dp(li: list[int], ni: list[int]) -> list[RowPair]:
        if not li and not ni:
            return []
        la = [match_key(l_label(i), opts) for i in li]
        na = [match_key(n_label(r), opts) for r in ni]
        info: dict[tuple[int, int], tuple[str, float]] = {}

        def score(a, b):
            if not la[a] or not na[b]:
                ds = data_sim(li[a], ni[b])
                if ds >= opts.data_threshold:
                    info[(a, b)] = ("blank", 0.0 if la[a] != na[b] else 1.0)
                    return 1.0 + ds
                return None
            ls = similarity(la[a], na[b])
            if ls < opts.label_threshold:
                return None
            info[(a, b)] = ("similar", ls)
            return 1.0 + ls + data_sim(li[a], ni[b])

        matched = _monotone_match(len(li), len(ni), score)
        out = []
        used_a = {a for a, _ in matched}
        used_b = {b for _, b in matched}
        for a, b in matched:
            how, ls = info[(a, b)]
            out.append(RowPair(li[a], ni[b], how, ls))
        out.extend(RowPair(li[a], None, "unmatched", 0.0) for a in range(len(li)) if a not in used_a)
        out.extend(RowPair(None, ni[b], "unmatched", 0.0) for b in range(len(ni)) if b not in used_b)
        return out

    sm = SequenceMatcher(None, lkeys, nkeys, autojunk=False)
    pa = pb = 0
    for blk in sm.get_matching_blocks():
        pairs.extend(fuzzy(l_body[pa:blk.a], n_body[pb:blk.b]))
        for k in range(blk.size):
            pairs.append(RowPair(l_body[blk.a + k], n_body[blk.b + k], "anchor", 1.0))
        pa, pb = blk.a + blk.size, blk.b + blk.size

    unmatched_l = sum(1 for p in pairs if p.native is None)
    unmatched_n = sum(1 for p in pairs if p.legacy is None)
    if unmatched_l or unmatched_n:
        notes.append(f"unmatched rows: {unmatched_l} legacy, {unmatched_n} native")
    blanks = sum(1 for p in pairs if p.how == "blank")
    if blanks:
        notes.append(f"{blanks} row(s) matched by data similarity (blank label)")
    pairs.sort(key=lambda p: (p.native if p.native is not None else math.inf, p.legacy if p.legacy is not None else -1))

    return Alignment(
        tuple(lrows), tuple(nrows), tuple(header_pairs), tuple(col_pairs), tuple(pairs),
        legacy_label_cols, native_label_cols, tuple(notes),
    )


# -- comparison ---------------------------------------------------------------

@dataclass(frozen=True)
class AlignContext:
    alignment: Alignment
    options: CompareOptions
    row_pairs_by_legacy: Mapping[int, RowPair] = field(default_factory=dict)
    row_pairs_by_native: Mapping[int, RowPair] = field(default_factory=dict)
    hierarchy_parents: frozenset[int] = frozenset()


def _context(al: Alignment, opts: CompareOptions) -> AlignContext:
    parents = frozenset(p for p, _ in opts.hierarchy.groups) if opts.hierarchy else frozenset()
    return AlignContext(
        al, opts,
        {p.legacy: p for p in al.row_pairs if p.legacy is not None},
        {p.native: p for p in al.row_pairs if p.native is not None},
        parents,
    )


def _emit(
    diffs: list[CellDiff], counts: list[int], lpos, npos, ltext: str, ntext: str, opts: CompareOptions,
    region: str, note: str = "", counted: bool = True,
) -> None:
    a, b = display_key(ltext, opts), display_key(ntext, opts)
    if not a and not b:
        return
    equal, delta = _cells_equal(a, b, opts.epsilon)
    if counted:
        counts[0] += 1
        counts[1] += equal
    if not equal:
        diffs.append(CellDiff(lpos, npos, ltext, ntext, delta, DivergenceCategory.UNCLASSIFIED, region, note))


def compare_table(
    legacy: RawTable,
    native: CellGrid,
    opts: CompareOptions | None = None,
    entry_id: str = "",
) -> ComparisonReport:
    """Align and compare; every mismatch becomes a categorized :class:`CellDiff`."""
    opts = opts or CompareOptions()
    al = align_tables(legacy, native, opts)
    L, N = al.legacy_rows, al.native_rows
    diffs: list[CellDiff] = []
    counts = [0, 0]
    header_counted = not opts.data_cells_only
    label_cols_n = set(al.native_label_cols)

    for lh, nh in al.header_pairs:
        for lc, nc in al.col_pairs:
            ltext = _cell(L[lh], lc) if lh is not None else ""
            ntext = _native_cell(N, nh, nc) if nh is not None else ""
            _emit(
                diffs, counts,
                (lh, lc) if lh is not None and lc is not None else None,
                (nh, nc) if nh is not None and nc is not None else None,
                ltext, ntext, opts, "header",
                "" if lh is not None and nh is not None else "unpaired header row",
                header_counted,
            )

    for pair in al.row_pairs:
        for lc, nc in al.col_pairs:
            ltext = _cell(L[pair.legacy], lc) if pair.legacy is not None else ""
            ntext = _native_cell(N, pair.native, nc) if pair.native is not None else ""
            note = ""
            if pair.legacy is None:
                note = "native row has no legacy counterpart"
            elif pair.native is None:
                note = "legacy row has no native counterpart"
            elif lc is None or nc is None:
                note = "column present on one side only"
            counted = not (opts.data_cells_only and nc in label_cols_n)
            _emit(
                diffs, counts,
                (pair.legacy, lc) if pair.legacy is not None and lc is not None else None,
                (pair.native, nc) if pair.native is not None and nc is not None else None,
                ltext, ntext, opts, "body", note, counted,
            )

    classified = classify_divergences(diffs, _context(al, opts))
    return ComparisonReport(
        entry_id, _verdict(classified), counts[0], counts[1], tuple(classified), al.notes, "table"
    )


# -- classification -----------------------------------------------------------

_TOTAL_RE = re.compile(r"^total\b")
_C = DivergenceCategory


def _column_headers(al: Alignment, lc: int | None, nc: int | None) -> list[str]:
    out = []
    for lh, nh in al.header_pairs:
        if lc is not None and lh is not None:
            row = al.legacy_rows[lh]
            text = _fill_left(lambda k: _cell(row, k), lc, 0)
            out.append(normalize_text(text, NormalizeOptions(casefold=True)))
        if nc is not None and nh is not None:
            text = _fill_left(lambda k: _native_cell(al.native_rows, nh, k), nc, 1)
            out.append(normalize_text(text, NormalizeOptions(casefold=True)))
    return [h for h in out if h]


def _unmatched_columns(al: Alignment) -> tuple[set[int], set[int]]:
    return (
        {l for l, n in al.col_pairs if n is None and l is not None},
        {n for l, n in al.col_pairs if l is None and n is not None},
    )


def _paired_split_columns(ctx: AlignContext) -> set[int]:
    """Unmatched legacy columns holding the percentages of the paired native column to their left."""
    al, eps = ctx.alignment, ctx.options.epsilon
    lone_l, _ = _unmatched_columns(al)
    out = set()
    for lc in lone_l:
        left = al.native_col_for(lc - 1)
        if left is None:
            continue
        hits = total = 0
        for pair in al.row_pairs:
            if pair.legacy is None or pair.native is None:
                continue
            lx = classify_cell_text(normalize_text(_cell(al.legacy_rows[pair.legacy], lc)))
            if lx.kind is NumericKind.NONE:
                continue
            total += 1
            nx = classify_cell_text(normalize_text(_native_cell(al.native_rows, pair.native, left)))
            if nx.kind is NumericKind.PAIRED and abs(nx.secondary - lx.primary) <= max(eps, 1e-9):
                hits += 1
        if total and hits / total >= 0.5:
            out.add(lc)
    return out


def _zero_rows(ctx: AlignContext) -> tuple[set[int], set[int]]:
    """Unmatched rows whose data cells are all zero or blank (with at least one zero)."""
    al = ctx.alignment

    def check(cells: list[str]) -> bool:
        exts = [classify_cell_text(normalize_text(c)) for c in cells if normalize_text(c)]
        return bool(exts) and all(_is_zero(e) for e in exts)

    lz, nz = set(), set()
    for p in al.row_pairs:
        if p.native is None and p.legacy is not None:
            cells = [_cell(al.legacy_rows[p.legacy], l) for l, n in al.col_pairs
                     if l is not None and l not in al.legacy_label_cols]
            if check(cells):
                lz.add(p.legacy)
        if p.legacy is None and p.native is not None:
            cells = [_native_cell(al.native_rows, p.native, n) for l, n in al.col_pairs
                     if n is not None and n not in al.native_label_cols]
            if check(cells):
                nz.add(p.native)
    return lz, nz


def classify_divergences(diffs: Sequence[CellDiff], context: AlignContext) -> list[CellDiff]:
    """Give every diff exactly one category, first matching rule wins."""
    al, opts = context.alignment, context.options
    syn = opts.syn
    lone_l, lone_n = _unmatched_columns(al)
    split_cols = _paired_split_columns(context)
    # a split-off percentage column inherits its neighbour's header, so it is not a Total
    total_l = {c for c in lone_l - split_cols if any(_TOTAL_RE.match(h) for h in _column_headers(al, c, None))}
    total_n = {c for c in lone_n if any(_TOTAL_RE.match(h) for h in _column_headers(al, None, c))}
    zero_l, zero_n = _zero_rows(context)
    fallback = NormalizeOptions(unicode_fallback=True)

    out = []
    for d in diffs:
        lc = d.legacy_pos[1] if d.legacy_pos else None
        nc = d.native_pos[1] if d.native_pos else None
        lr = d.legacy_pos[0] if d.legacy_pos else None
        nr = d.native_pos[0] if d.native_pos else None
        a, b = normalize_text(d.legacy_text), normalize_text(d.native_text)
        ea, eb = classify_cell_text(a), classify_cell_text(b)
        pair = None
        if d.region == "body":
            pair = context.row_pairs_by_legacy.get(lr) if lr is not None else context.row_pairs_by_native.get(nr)

        if (lc in total_l and nc is None) or (nc in total_n and lc is None):
            cat = _C.TOTAL_COLUMN
        elif lc in split_cols or (
            {ea.kind, eb.kind} == {NumericKind.SINGLE, NumericKind.PAIRED}
            and abs(ea.primary - eb.primary) <= opts.epsilon
        ):
            cat = _C.PAIRED_COUNT_PCT
        elif (
            opts.denominator is not None
            and ea.kind is NumericKind.PAIRED and eb.kind is NumericKind.PAIRED
            and abs(ea.primary - eb.primary) <= opts.epsilon
            and abs(ea.secondary - eb.secondary) > opts.epsilon
        ):
            cat = _C.ADSL_DENOMINATOR if opts.denominator is Denominator.ADSL else _C.POPULATION_DENOMINATOR
        elif a and b and syn.equivalent(a, b):
            cat = _C.TREATMENT_NAME_HARMONIZATION
        elif (
            nr is not None and nr in context.hierarchy_parents and d.region == "body"
            and ea.kind is not NumericKind.NONE and eb.kind is not NumericKind.NONE
            and abs(ea.primary - eb.primary) > opts.epsilon
        ):
            cat = _C.SOC_GROUP_TOTAL
        elif (
            (lr in zero_l and nr is None) or (nr in zero_n and lr is None)
            or (_is_zero(ea) and not b) or (_is_zero(eb) and not a)
        ):
            cat = _C.ZERO_FILL
        elif (
            pair is not None and pair.how in ("similar", "label", "anchor")
            and nc in al.native_label_cols and a and b
            and opts.label_threshold <= similarity(match_key(a, opts), match_key(b, opts)) < 1.0
        ):
            cat = _C.ROW_LABEL_DRIFT
        elif a and b and normalize_text(a, fallback) == normalize_text(b, fallback):
            cat = _C.UNICODE_FALLBACK
        elif d.region == "header":
            cat = _C.HEADER_DETECTION
        elif pair is not None and pair.how == "blank":
            cat = _C.BLANK_LABEL_ALIGNMENT
        elif not opts.has_registry_config:
            cat = _C.CONFIG_COVERAGE
        else:
            cat = _C.UNCLASSIFIED
        out.append(replace(d, category=cat))
    return out


# -- listings and figures -----------------------------------------------------

def compare_listing(
    legacy: RawTable, native: CellGrid, opts: CompareOptions | None = None, entry_id: str = ""
) -> ComparisonReport:
    """Order-significant positional comparison; no fuzzy row matching."""
    opts = opts or CompareOptions()
    L = [r for r in legacy.rows if not _blank(r)]
    N = [r for r in native.text_rows() if not _blank(r)]
    notes = []
    lcols = max((len(r) for r in L), default=0)
    ncols = max((len(r) for r in N), default=0)
    if len(L) != len(N):
        notes.append(f"row count differs: {len(L)} legacy vs {len(N)} native")
    if lcols != ncols:
        notes.append(f"column count differs: {lcols} legacy vs {ncols} native")
    diffs: list[CellDiff] = []
    counts = [0, 0]
    for i in range(max(len(L), len(N))):
        for j in range(max(lcols, ncols)):
            ltext = _cell(L[i], j) if i < len(L) else ""
            ntext = _cell(N[i], j) if i < len(N) else ""
            _emit(
                diffs, counts,
                (i, j) if i < len(L) and j < lcols else None,
                (i + 1, j + 1) if i < len(N) and j < ncols else None,
                ltext, ntext, opts, "body",
            )
    if notes and not diffs:
        diffs.append(CellDiff(None, None, "", "", None, DivergenceCategory.UNCLASSIFIED, "structure", notes[0]))
    diffs = _classify_simple(diffs, opts)
    return ComparisonReport(entry_id, _verdict(diffs), counts[0], counts[1], tuple(diffs), tuple(notes), "listing")


def _classify_simple(diffs: list[CellDiff], opts: CompareOptions) -> list[CellDiff]:
    fallback = NormalizeOptions(unicode_fallback=True)
    out = []
    for d in diffs:
        a, b = normalize_text(d.legacy_text), normalize_text(d.native_text)
        if a and b and opts.syn.equivalent(a, b):
            cat = _C.TREATMENT_NAME_HARMONIZATION
        elif a and b and normalize_text(a, fallback) == normalize_text(b, fallback):
            cat = _C.UNICODE_FALLBACK
        elif not opts.has_registry_config:
            cat = _C.CONFIG_COVERAGE
        else:
            cat = _C.UNCLASSIFIED
        out.append(replace(d, category=cat))
    return out


FIGURE_NOTE = "file-size comparison is a coarse structural check; spot-check the images manually"


def compare_figure(
    legacy_path: str | Path, native_path: str | Path, tolerance_pct: float = 5.0, entry_id: str = ""
) -> ComparisonReport:
    lp, np_ = Path(legacy_path), Path(native_path)
    missing = [str(p) for p in (lp, np_) if not p.is_file()]
    if missing:
        return ComparisonReport(
            entry_id, Verdict.ERROR, kind="figure", alignment_notes=(FIGURE_NOTE,),
            error=f"missing file: {', '.join(missing)}",
        )
    ls, ns = lp.stat().st_size, np_.stat().st_size
    biggest = max(ls, ns)
    rel = 0.0 if biggest == 0 else abs(ls - ns) / biggest
    ok = rel <= tolerance_pct / 100.0
    note = f"sizes {ls} vs {ns} bytes ({100 * rel:.2f}% apart, tolerance {tolerance_pct}%)"
    diffs = () if ok else (CellDiff(None, None, str(ls), str(ns), float(ns - ls), region="figure", note=note),)
    return ComparisonReport(
        entry_id, _verdict(diffs), 1, int(ok), diffs, (FIGURE_NOTE, note), "figure"
    )


# -- summary ------------------------------------------------------------------

PARITY_THRESHOLD = 80.0


@dataclass(frozen=True)
class SummaryRow:
    entry_id: str
    verdict: Verdict
    parity_pct: float
    categories: Mapping[str, int]
    top_category: str = ""


@dataclass(frozen=True)
class SummaryMatrix:
    rows: tuple[SummaryRow, ...] = ()
    threshold: float = PARITY_THRESHOLD

    @property
    def verdict_counts(self) -> dict[str, int]:
        c = Counter(r.verdict.value for r in self.rows)
        return {v.value: c[v.value] for v in Verdict}

    @property
    def considered(self) -> int:
        return sum(1 for r in self.rows if r.verdict is not Verdict.SKIP)

    @property
    def at_threshold(self) -> int:
        return sum(1 for r in self.rows if r.verdict is not Verdict.SKIP and r.parity_pct >= self.threshold)

    @property
    def share_label(self) -> str:
        return f"{self.at_threshold}/{self.considered}"

    def to_dict(self) -> dict:
        return {
            "threshold_pct": self.threshold,
            "at_threshold": self.at_threshold,
            "considered": self.considered,
            "verdicts": self.verdict_counts,
            "rows": [
                {
                    "entry_id": r.entry_id,
                    "verdict": r.verdict.value,
                    "parity_pct": round(r.parity_pct, 6),
                    "categories": dict(r.categories),
                    "top_category": r.top_category,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entry_id", "verdict", "parity_pct", "top_category"])
        for r in self.rows:
            w.writerow([r.entry_id, r.verdict.value, f"{r.parity_pct:.2f}", r.top_category])
        return buf.getvalue()


def summarize(reports: Iterable[ComparisonReport], threshold: float = PARITY_THRESHOLD) -> SummaryMatrix:
    rows = sorted(
        (SummaryRow(r.entry_id, r.verdict, r.parity_pct, r.histogram, r.top_category) for r in reports),
        key=lambda r: r.entry_id,
    )
    return SummaryMatrix(tuple(rows), threshold)
