"""Macro inventory: header parsing, call graph, complexity metrics, classification, coverage."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
import yaml

from tflparity.analyzer.lexer import code_view, line_of, strip_comments

log = logging.getLogger(__name__)


# -- macro definitions --------------------------------------------------------

@dataclass(frozen=True)
class MacroDef:
    name: str
    parameters: tuple[tuple[str, str | None], ...]
    source_path: str
    body_span: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("macro name must be non-empty")
        if self.body_span[0] > self.body_span[1]:
            raise ValueError(f"body_span {self.body_span} is not ordered")

    @property
    def parameter_names(self) -> list[str]:
        return [p for p, _ in self.parameters]


@dataclass(frozen=True)
class SourceFile:
    path: str
    text: str

    @classmethod
    def read(cls, path: str | Path) -> "SourceFile":
        return cls(str(path), Path(path).read_text(encoding="utf-8", errors="replace"))


@dataclass
class ParseResult:
    defs: list[MacroDef] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)  # (path, message)
    # per def: body text restricted to its own lines (nested definitions blanked)
    bodies: dict[str, str] = field(default_factory=dict)
    raw_bodies: dict[str, str] = field(default_factory=dict)


_HEADER = re.compile(r"%macro\s+([A-Za-z_]\w*)\s*", re.IGNORECASE)
_MEND = re.compile(r"%mend\b[^;]*;?", re.IGNORECASE)


def _split_params(text: str) -> list[tuple[str, str | None]]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    out = []
    for p in parts:
        p = " ".join(p.split())
        if not p:
            continue
        if "=" in p:
            name, default = p.split("=", 1)
            default = default.strip()
            out.append((name.strip(), default or None))
        else:
            out.append((p, None))
    return out


def _header_end(code: str, start: int) -> tuple[int, str]:
    """Offset just past the header's terminating ';' and the raw parameter text."""
    i = start
    params = ""
    while i < len(code) and code[i].isspace():
        i += 1
    if i < len(code) and code[i] == "(":
        depth, j = 0, i
        while j < len(code):
            if code[j] == "(":
                depth += 1
            elif code[j] == ")":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        params = code[i + 1:j]
        i = j + 1
    semi = code.find(";", i)
    return (len(code) if semi < 0 else semi + 1), params


def _blank_lines(text: str, spans: Iterable[tuple[int, int]]) -> str:
    lines = text.split("\n")
    for a, b in spans:
        for k in range(a - 1, min(b, len(lines))):
            lines[k] = ""
    return "\n".join(lines)


def parse_source(source: SourceFile, result: ParseResult | None = None) -> ParseResult:
    result = result or ParseResult()
    code = code_view(source.text)
    stripped = strip_comments(source.text)
    events = [(m.start(), "open", m) for m in _HEADER.finditer(code)]
    events += [(m.start(), "close", m) for m in _MEND.finditer(code)]
    events.sort(key=lambda e: e[0])
    stack: list[tuple[str, int, str, list]] = []  # (name, start_line, params, children spans)
    found: list[tuple[MacroDef, list]] = []
    for offset, kind, m in events:
        if kind == "open":
            end, params = _header_end(code, m.end())
            if stack:
                result.warnings.append(
                    f"{source.path}:{line_of(code, offset)}: macro {m.group(1)} defined inside {stack[-1][0]}"
                )
            stack.append((m.group(1), line_of(code, offset), params, []))
        else:
            if not stack:
                result.warnings.append(f"{source.path}:{line_of(code, offset)}: %mend without %macro")
                continue
            name, start, params, children = stack.pop()
            end_line = line_of(code, offset)
            d = MacroDef(name, tuple(_split_params(params)), source.path, (start, end_line))
            found.append((d, children))
            if stack:
                stack[-1][3].append((start, end_line))
    for name, start, _, _ in stack:
        result.warnings.append(f"{source.path}:{start}: macro {name} has no %mend")
    code_lines = code.split("\n")
    stripped_lines = stripped.split("\n")
    for d, children in sorted(found, key=lambda x: x[0].body_span):
        a, b = d.body_span
        body = _blank_lines("\n".join(code_lines[a - 1:b]), [(s - a + 1, e - a + 1) for s, e in children])
        raw = _blank_lines("\n".join(stripped_lines[a - 1:b]), [(s - a + 1, e - a + 1) for s, e in children])
        if d.name.lower() in result.bodies:
            result.warnings.append(f"{source.path}:{a}: macro {d.name} redefined")
        result.defs.append(d)
        result.bodies[d.name.lower()] = body
        result.raw_bodies[d.name.lower()] = raw
    return result


def parse_macro_headers(corpus: Iterable[str | Path | SourceFile]) -> ParseResult:
    """Parse every ``%macro`` header in ``corpus``; unreadable files are collected, not raised."""
    result = ParseResult()
    for item in sorted(corpus, key=lambda s: str(s.path if isinstance(s, SourceFile) else s)):
        try:
            src = item if isinstance(item, SourceFile) else SourceFile.read(item)
        except OSError as exc:
            result.errors.append((str(item), str(exc)))
            continue
        parse_source(src, result)
    return result


def corpus_files(root: str | Path) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob("*") if p.suffix.lower() == ".sas" and p.is_file())


# -- call graph ---------------------------------------------------------------

MACRO_KEYWORDS = frozenset("""
macro mend let if then else do end to by while until put global local include inc sysfunc qsysfunc eval
sysevalf str nrstr quote nrquote bquote nrbquote superq unquote upcase qupcase lowcase qlowcase substr qsubstr
scan qscan length index symdel syscall return abort goto label sysexec sysget symexist symglobl symlocal
cmpres qcmpres left qleft trim qtrim verify sysmacexist sysmacdelete sysmstoreclear mexecute window display
input copy list run
""".split())


class RefKind(str, Enum):
    GLOBAL_VAR = "GLOBAL_VAR"
    DATASET_EXIST = "DATASET_EXIST"


@dataclass(frozen=True)
class Edge:
    caller: str
    callee: str
    dynamic: bool = False
    external: bool = False


@dataclass(frozen=True)
class CallGraph:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    implicit_refs: tuple[tuple[str, RefKind, str], ...] = ()

    def static_edges(self, internal_only: bool = True) -> list[Edge]:
        return [e for e in self.edges if not e.dynamic and (not internal_only or not e.external)]

    def callees(self, name: str) -> set[str]:
        return {e.callee for e in self.edges if e.caller == name and not e.dynamic}

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((e.caller, e.callee) for e in self.static_edges())
        return g


_CALL = re.compile(r"%([A-Za-z_]\w*)(?=\s|\(|;|$)")
_DYNAMIC = re.compile(r"%(&[&\w.]+)")
_GLOBAL = re.compile(r"%global\b([^;]*);", re.IGNORECASE)
_EXIST = re.compile(r"%sysfunc\s*\(\s*exist\s*\(\s*([^),]+)", re.IGNORECASE)


def _scan_calls(body: str) -> tuple[list[str], list[str]]:
    static = [m.group(1) for m in _CALL.finditer(body) if m.group(1).lower() not in MACRO_KEYWORDS]
    dynamic = [m.group(1) for m in _DYNAMIC.finditer(body)]
    return static, dynamic


def extract_call_graph(parsed: ParseResult) -> CallGraph:
    names = {d.name.lower(): d.name for d in parsed.defs}
    edges: dict[tuple[str, str, bool], Edge] = {}
    refs: list[tuple[str, RefKind, str]] = []
    for d in parsed.defs:
        body = parsed.bodies[d.name.lower()]
        # drop the header line's own %macro token
        static, dynamic = _scan_calls(body)
        for callee in static:
            key = callee.lower()
            target = names.get(key, callee)
            edges.setdefault((d.name, target, False), Edge(d.name, target, False, key not in names))
        for token in dynamic:
            edges.setdefault((d.name, token, True), Edge(d.name, token, True, True))
        for m in _GLOBAL.finditer(body):
            for var in m.group(1).split():
                refs.append((d.name, RefKind.GLOBAL_VAR, var))
        for m in _EXIST.finditer(parsed.raw_bodies[d.name.lower()]):
            refs.append((d.name, RefKind.DATASET_EXIST, m.group(1).strip().strip("'\"")))
    nodes = tuple(sorted({d.name for d in parsed.defs}))
    return CallGraph(nodes, tuple(sorted(edges.values(), key=lambda e: (e.caller, e.callee, e.dynamic))),
                     tuple(refs))


# -- metrics ------------------------------------------------------------------

class Cohesion(str, Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"


COHESION_BASIS = "HEURISTIC: count of taxonomy categories with keyword hits (1 HIGH, 2 MEDIUM, 3+ LOW)"
PARAMS_LIMIT = 20
LOC_LIMIT = 500
NESTING_LIMIT = 4


@dataclass(frozen=True)
class ComplexityRecord:
    loc: int
    parameter_count: int
    nesting_depth: int
    efferent_coupling: int
    cohesion: Cohesion

    def __post_init__(self) -> None:
        for name in ("loc", "parameter_count", "nesting_depth", "efferent_coupling"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def flags(self) -> list[str]:
        out = []
        if self.parameter_count > PARAMS_LIMIT:
            out.append(f"parameters above {PARAMS_LIMIT}")
        if self.loc > LOC_LIMIT:
            out.append(f"loc above {LOC_LIMIT}")
        if self.nesting_depth > NESTING_LIMIT:
            out.append(f"nesting above {NESTING_LIMIT}")
        return out


def count_loc(body: str) -> int:
    """Lines with code left after comments are removed."""
    return sum(1 for line in strip_comments(body).split("\n") if line.strip())


_BLOCK = re.compile(
    r"(?P<mdo>%do\b)|(?P<mend>%end\b)"
    r"|(?:(?<=;)|(?<=^)|(?<=\))|(?<=\bthen)|(?<=\belse)|(?<=\botherwise))\s*(?:(?P<do>do\b)|(?P<select>select\b)|(?P<end>end\b)(?=\s*;))",
    re.IGNORECASE | re.MULTILINE,
)


def nesting_depth(body: str) -> int:
    """Deepest simultaneous stack of ``%do``/``do`` blocks (``select`` blocks are tracked, not counted)."""
    code = code_view(body)
    stack: list[str] = []
    best = 0
    for m in _BLOCK.finditer(code):
        kind = m.lastgroup
        if kind in ("mdo", "do", "select"):
            stack.append(kind)
            best = max(best, sum(1 for k in stack if k != "select"))
        elif kind == "mend":
            while stack and stack[-1] != "mdo":
                stack.pop()
            if stack:
                stack.pop()
        elif kind == "end" and stack and stack[-1] in ("do", "select"):
            stack.pop()
    return best


@dataclass(frozen=True)
class TaxonomyRules:
    patterns: dict[str, tuple[re.Pattern, ...]]
    priority: tuple[str, ...]
    fanout_threshold: int = 4

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TaxonomyRules":
        cats = {k: tuple(re.compile(p, re.IGNORECASE) for p in v) for k, v in doc["categories"].items()}
        priority = tuple(doc.get("priority", list(cats)))
        unknown = set(cats) - set(Category.__members__)
        if unknown:
            raise ValueError(f"unknown categories in taxonomy rules: {sorted(unknown)}")
        return cls(cats, priority, int(doc.get("fanout_threshold", 4)))

    @classmethod
    def default(cls) -> "TaxonomyRules":
        text = resources.files("tflparity").joinpath("data/taxonomy_rules.yaml").read_text(encoding="utf-8")
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path: str | Path) -> "TaxonomyRules":
        return cls.from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))


class Category(str, Enum):
    DATA_PREP = "DATA_PREP"
    STAT_COMPUTE = "STAT_COMPUTE"
    FORMATTING = "FORMATTING"
    RENDERING = "RENDERING"
    UTILITY = "UTILITY"
    ORCHESTRATION = "ORCHESTRATION"


def keyword_hits(body: str, fanout: int, rules: TaxonomyRules) -> Counter:
    """Hits per category. ``body`` should be comment-free but keep literals (RTF control words live there)."""
    hits: Counter = Counter()
    for cat, pats in rules.patterns.items():
        for p in pats:
            hits[cat] += len(p.findall(body))
    if fanout >= rules.fanout_threshold:
        hits[Category.ORCHESTRATION.value] += fanout
    return +hits


def classify_component(body: str, fanout: int = 0, rules: TaxonomyRules | None = None) -> Category:
    rules = rules or TaxonomyRules.default()
    hits = keyword_hits(body, fanout, rules)
    if not hits:
        return Category.UTILITY
    order = {c: i for i, c in enumerate(rules.priority)}
    best = min(hits, key=lambda c: (-hits[c], order.get(c, len(order))))
    return Category(best)


def compute_metrics(d: MacroDef, body: str, graph: CallGraph, rules: TaxonomyRules | None = None) -> ComplexityRecord:
    rules = rules or TaxonomyRules.default()
    callees = graph.callees(d.name)
    n_cats = len(keyword_hits(body, len(callees), rules))
    cohesion = Cohesion.HIGH if n_cats <= 1 else Cohesion.MEDIUM if n_cats == 2 else Cohesion.LOW
    return ComplexityRecord(count_loc(body), len(d.parameters), nesting_depth(body), len(callees), cohesion)


# -- diagnostics --------------------------------------------------------------

def canonical_cycle(cycle: Sequence[str]) -> tuple[str, ...]:
    k = min(range(len(cycle)), key=lambda i: cycle[i])
    return tuple(cycle[k:]) + tuple(cycle[:k])


def enumerate_cycles(graph: nx.DiGraph) -> list[tuple[str, ...]]:
    """Every elementary cycle once, rotated to start at its smallest node."""
    return sorted({canonical_cycle(c) for c in nx.simple_cycles(graph)}, key=lambda c: (len(c), c))


@dataclass(frozen=True)
class Diagnostics:
    orphans: tuple[str, ...]
    cycles: tuple[tuple[str, ...], ...]
    hubs: tuple[tuple[str, int], ...]
    clusters: tuple[tuple[str, ...], ...]
    hub_threshold: int

    def to_dict(self) -> dict:
        return {
            "orphans": list(self.orphans),
            "orphan_note": "in-degree 0: possible entry points",
            "cycles": [list(c) for c in self.cycles],
            "hubs": [{"macro": m, "in_degree": k} for m, k in self.hubs],
            "hub_threshold": self.hub_threshold,
            "clusters": [list(c) for c in self.clusters],
        }


def graph_diagnostics(graph: CallGraph, hub_threshold: int = 10) -> Diagnostics:
    g = graph.digraph()
    orphans = tuple(sorted(n for n in g.nodes if g.in_degree(n) == 0))
    hubs = tuple(sorted(((n, g.in_degree(n)) for n in g.nodes if g.in_degree(n) >= hub_threshold),
                        key=lambda x: (-x[1], x[0])))
    clusters = tuple(sorted(
        (tuple(sorted(c)) for c in nx.weakly_connected_components(g) if len(c) >= 2),
        key=lambda c: (-len(c), c),
    ))
    return Diagnostics(orphans, tuple(enumerate_cycles(g)), hubs, clusters, hub_threshold)


# -- inventory & coverage -----------------------------------------------------

@dataclass(frozen=True)
class InventoryRecord:
    macro: MacroDef
    category: Category
    metrics: ComplexityRecord
    report_types: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "name": self.macro.name,
            "source_path": self.macro.source_path,
            "body_span": list(self.macro.body_span),
            "parameters": [{"name": p, "default": v} for p, v in self.macro.parameters],
            "category": self.category.value,
            "loc": m.loc,
            "parameter_count": m.parameter_count,
            "nesting_depth": m.nesting_depth,
            "efferent_coupling": m.efferent_coupling,
            "cohesion": m.cohesion.value,
            "report_types": list(self.report_types),
            "flags": m.flags,
        }


@dataclass
class Inventory:
    records: list[InventoryRecord]
    graph: CallGraph
    diagnostics: Diagnostics
    warnings: list[str]
    errors: list[tuple[str, str]]
    root: str = ""

    def record(self, name: str) -> InventoryRecord:
        for r in self.records:
            if r.macro.name.lower() == name.lower():
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "macros": [r.to_dict() for r in self.records],
            "edges": [
                {"caller": e.caller, "callee": e.callee, "dynamic": e.dynamic, "external": e.external}
                for e in self.graph.edges
            ],
            "implicit_refs": [{"macro": m, "kind": k.value, "token": t} for m, k, t in self.graph.implicit_refs],
            "diagnostics": self.diagnostics.to_dict(),
            "notes": {
                "cohesion": COHESION_BASIS,
                "efferent_coupling": "distinct static callees; dynamic (&&var&i) calls are unresolved and excluded",
            },
            "warnings": list(self.warnings),
            "errors": [{"path": p, "message": m} for p, m in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["name", "source_path", "category", "loc", "parameter_count", "nesting_depth",
                "efferent_coupling", "cohesion", "report_types", "flags"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            d = r.to_dict()
            d["report_types"] = ";".join(d["report_types"])
            d["flags"] = ";".join(d["flags"])
            w.writerow({k: d[k] for k in cols})
        return buf.getvalue()

    def to_tgf(self) -> str:
        """Trivial Graph Format: node lines, ``#``, then edge lines."""
        nodes = list(self.graph.nodes)
        extra = sorted({e.callee for e in self.graph.edges if e.external} - set(nodes))
        ids = {n: i for i, n in enumerate(nodes + extra, start=1)}
        lines = [f"{ids[n]} {n}" for n in nodes]
        lines += [f"{ids[n]} {n} (external)" for n in extra]
        lines.append("#")
        for e in self.graph.edges:
            lines.append(f"{ids[e.caller]} {ids[e.callee]}" + (" dynamic" if e.dynamic else ""))
        return "\n".join(lines) + "\n"


def load_annotations(path: str | Path | None) -> dict[str, list[str]]:
    if path is None:
        return {}
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return {str(k).lower(): [str(v) for v in (vals if isinstance(vals, list) else [vals])] for k, vals in doc.items()}


def analyze_corpus(
    root: str | Path | Iterable[str | Path | SourceFile],
    annotations: Mapping[str, Sequence[str]] | None = None,
    rules: TaxonomyRules | None = None,
    hub_threshold: int = 10,
) -> Inventory:
    rules = rules or TaxonomyRules.default()
    files = corpus_files(root) if isinstance(root, (str, Path)) else list(root)
    parsed = parse_macro_headers(files)
    graph = extract_call_graph(parsed)
    ann = {k.lower(): tuple(v) for k, v in (annotations or {}).items()}
    records = []
    for d in sorted(parsed.defs, key=lambda d: (d.name.lower(), d.source_path)):
        key = d.name.lower()
        raw = parsed.raw_bodies[key]
        fanout = len(graph.callees(d.name))
        records.append(InventoryRecord(
            d, classify_component(raw, fanout, rules), compute_metrics(d, raw, graph, rules), ann.get(key, ()),
        ))
    return Inventory(records, graph, graph_diagnostics(graph, hub_threshold), parsed.warnings, parsed.errors,
                     str(root) if isinstance(root, (str, Path)) else "")


@dataclass(frozen=True)
class CoverageMatrix:
    report_types: tuple[str, ...]
    cells: dict[str, tuple[str, ...]]  # macro -> report types it serves
    overlap_groups: tuple[tuple[str, str, tuple[str, ...]], ...]  # (report type, category, macros)
    gaps: tuple[str, ...]
    unannotated: tuple[str, ...]
    redundancy_ratio: float

    def to_dict(self) -> dict:
        return {
            "report_types": list(self.report_types),
            "matrix": {m: list(rts) for m, rts in sorted(self.cells.items())},
            "overlap_groups": [{"report_type": r, "category": c, "macros": list(ms)} for r, c, ms in self.overlap_groups],
            "gaps": list(self.gaps),
            "unannotated": list(self.unannotated),
            "redundancy_ratio": self.redundancy_ratio,
        }


def coverage_matrix(inventory: Sequence[InventoryRecord], report_types: Sequence[str]) -> CoverageMatrix:
    """Macro x report-type coverage; ratio is distinct (category, report type) pairs over macros."""
    rts = tuple(dict.fromkeys(report_types))
    cells = {r.macro.name: tuple(rt for rt in r.report_types) for r in inventory}
    groups: dict[tuple[str, str], list[str]] = defaultdict(list)
    for r in inventory:
        for rt in r.report_types:
            groups[(rt, r.category.value)].append(r.macro.name)
    overlaps = tuple(sorted((rt, cat, tuple(sorted(ms))) for (rt, cat), ms in groups.items() if len(ms) >= 2))
    served = {rt for r in inventory for rt in r.report_types}
    gaps = tuple(rt for rt in rts if rt not in served)
    unannotated = tuple(sorted(r.macro.name for r in inventory if not r.report_types))
    ratio = len(groups) / len(inventory) if inventory else 0.0
    return CoverageMatrix(rts, cells, overlaps, gaps, unannotated, ratio)
