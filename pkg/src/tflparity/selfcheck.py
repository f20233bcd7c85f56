"""Named self-checks that Gate D runs in-process.

Each check raises ``AssertionError`` on failure. They are small, seeded versions
of the property suites so the workflow can confirm the toolkit itself before
trusting its verdicts.
"""

from __future__ import annotations

import hashlib
import itertools
import time
from dataclasses import dataclass, replace
from typing import Callable

import networkx as nx
import numpy as np

CHECKS: dict[str, Callable[[], None]] = {}


def register(name: str):
    def deco(fn: Callable[[], None]) -> Callable[[], None]:
        CHECKS[name] = fn
        return fn
    return deco


@register("rtf_roundtrip")
def _rtf_roundtrip() -> None:
    from tflparity.ir.render import rtf_from_rows
    from tflparity.rtf import parse_rtf

    rows = [["a", "b{c}"], ["\u2265 5", "x\\y"]]
    back = parse_rtf(rtf_from_rows(rows))[0].to_lists()
    assert back == rows, back


@register("self_parity")
def _self_parity() -> None:
    from tflparity.compare import Verdict, compare_table
    from tflparity.rtf import parse_rtf
    from tflparity.synth import ReportKind, cdisc_pilot_spec, generate_pair

    for kind in (ReportKind.DEMOGRAPHICS, ReportKind.AE_SUMMARY):
        pair = generate_pair(cdisc_pilot_spec(kind, seed=1))
        report = compare_table(parse_rtf(pair.rtf)[0], pair.grid, pair.compare_options())
        assert report.verdict is Verdict.PASS, (kind, report.histogram)


@register("reconcile_tolerance")
def _reconcile_tolerance() -> None:
    from tflparity.ir.model import CellSpec, CellType, ColSpec, IrMappingConfig, RowSpec, StatRecord, build_grid, reconcile

    mapping = IrMappingConfig("R", (RowSpec("r1", "Mean", "mean"),), (ColSpec("A"),),
                              {"mean": CellSpec(CellType.DECIMAL)})
    src = [StatRecord("r1", "A", "mean", 1.5, "1.5")]
    grid = build_grid(src, mapping)
    near = [replace(src[0], stat_value=1.5 + 1e-11)]
    far = [replace(src[0], stat_value=1.5 + 1e-9)]
    assert reconcile(grid, near, mapping).passed
    assert not reconcile(grid, far, mapping).passed


@register("validator_uniqueness")
def _validator() -> None:
    from tflparity.ir.model import Rule, validate_grid
    from tflparity.synth import ReportKind, FixtureSpec, generate_pair

    grid = generate_pair(FixtureSpec(ReportKind.EFFICACY, seed=3)).grid
    assert validate_grid(grid).valid
    from tflparity.ir.model import CellGrid

    dup = CellGrid(grid.cells + (grid.cells[0],), grid.structure)
    assert Rule.UNIQUENESS in validate_grid(dup).rules


@register("cycle_enumeration")
def _cycles() -> None:
    from tflparity.analyzer import canonical_cycle, enumerate_cycles

    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        for a, b in itertools.product(range(n), repeat=2):
            if rng.random() < 0.3:
                g.add_edge(a, b)
        brute = set()
        for k in range(1, n + 1):
            for path in itertools.permutations(range(n), k):
                if all(g.has_edge(path[i], path[(i + 1) % k]) for i in range(k)):
                    brute.add(canonical_cycle(path))
        assert set(enumerate_cycles(g)) == brute


@register("empty_digest")
def _digest() -> None:
    from tflparity.audit import EMPTY_SHA256

    assert EMPTY_SHA256 == hashlib.sha256(b"").hexdigest()
    assert EMPTY_SHA256.startswith("e3b0c442")


@register("sas_name_limit")
def _names() -> None:
    from tflparity.bridge import check_sas_name
    from tflparity.errors import NameTooLong

    check_sas_name("a" * 32)
    try:
        check_sas_name("a" * 33)
    except NameTooLong:
        return
    raise AssertionError("33-character name accepted")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    duration_ms: int


def run_checks(names: list[str] | None = None) -> list[CheckResult]:
    out = []
    for name in names or sorted(CHECKS):
        fn = CHECKS[name]
        t0 = time.perf_counter()
        try:
            fn()
            ok, detail = True, ""
        except AssertionError as exc:
            ok, detail = False, f"assertion failed: {exc}"
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, ok, detail, int((time.perf_counter() - t0) * 1000)))
    return out
