"""Command-line entry point.

Exit codes: 0 success or PASS, 1 FAIL findings, 2 error or usage problem.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Sequence

import yaml

from tflparity.errors import TflParityError

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would call sys.exit itself
        raise _Usage(f"{self.prog}: {message}\n{self.format_usage()}")


def _emit(args, payload: Any, text: str | Callable[[], str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text() if callable(text) else text)


def _write(path: str | Path, data: str | bytes) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        p.write_bytes(data)
    else:
        p.write_text(data, encoding="utf-8")
    return p


def _verdict_exit(verdicts) -> int:
    from tflparity.compare import Verdict

    vs = set(verdicts)
    if Verdict.ERROR in vs:
        return EXIT_ERROR
    return EXIT_FAIL if Verdict.FAIL in vs else EXIT_OK


def _load_grid(path: str, validate: bool = True):
    from tflparity.ir.render import from_json

    return from_json(Path(path).read_bytes(), validate=validate)


# -- ir -----------------------------------------------------------------------

def _ir_validate(args) -> int:
    from tflparity.ir.model import validate_grid

    grid = _load_grid(args.grid, validate=False)
    report = validate_grid(grid, allow_separator_cells=args.allow_separators)
    payload = {
        "valid": report.valid,
        "violations": [
            {"rule": v.rule.value, "detail": v.detail, "row_id": v.row_id, "col_id": v.col_id}
            for v in report.violations
        ],
    }
    _emit(args, payload, lambda: "valid" if report.valid else "\n".join(
        f"{v.rule.value}: {v.detail}" for v in report.violations))
    return EXIT_OK if report.valid else EXIT_FAIL


def _ir_render(args) -> int:
    from tflparity.ir.render import RenderConfig, html_document, render

    grid = _load_grid(args.grid)
    cfg = RenderConfig(format=args.format.upper(), title=args.title)
    out = render(grid, cfg)
    if cfg.format.value == "HTML" and args.document:
        out = html_document(out, args.title or grid.report_id)
    if args.out:
        _write(args.out, out)
        _emit(args, {"written": args.out}, f"wrote {args.out}")
    elif isinstance(out, bytes):
        sys.stdout.buffer.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def _read_stats(path: str):
    from tflparity.ir.model import StatRecord

    p = Path(path)
    if p.suffix.lower() == ".csv":
        with p.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = json.loads(p.read_text(encoding="utf-8"))
    fields = ("group", "treatment", "stat_name", "stat_value", "formatted", "method_id")
    return [StatRecord(**{k: (float(v) if k == "stat_value" else v) for k, v in r.items() if k in fields})
            for r in rows]


def _ir_reconcile(args) -> int:
    from tflparity.ir.mapping import load_mapping
    from tflparity.ir.model import reconcile

    report = reconcile(_load_grid(args.grid), _read_stats(args.stats), load_mapping(args.mapping), args.tolerance)
    payload = {
        "passed": report.passed, "tolerance": report.tolerance, "checked": report.checked,
        "mismatches": [m.__dict__ for m in report.mismatches],
        "unmapped": [list(u) for u in report.unmapped],
    }
    _emit(args, payload, lambda: f"checked {report.checked} cell(s), {len(report.mismatches)} mismatch(es)"
          + "".join(f"\n  ({m.row_id},{m.col_id}) ir={m.ir_value!r} source={m.source_value!r}"
                    for m in report.mismatches))
    return EXIT_OK if report.passed else EXIT_FAIL


def _ir_lint(args) -> int:
    from tflparity.ir.model import check_hierarchy_consistency, hierarchy_from_indent

    grid = _load_grid(args.grid)
    report = check_hierarchy_consistency(grid, hierarchy_from_indent(grid))
    payload = {"passed": report.passed, "checked": report.checked, "rule": report.rule,
               "violations": [v.__dict__ for v in report.violations]}
    _emit(args, payload, lambda: f"checked {report.checked} pair(s), {len(report.violations)} violation(s)"
          + "".join(f"\n  row {v.child_row} ({v.child_count:g}) > parent row {v.parent_row} "
                    f"({v.parent_count:g}) in column {v.col_id}" for v in report.violations))
    return EXIT_OK if report.passed else EXIT_FAIL


# -- rtf ----------------------------------------------------------------------

def _rtf_parse(args) -> int:
    from tflparity.rtf import parse_rtf

    if args.file == "-":
        data, src = sys.stdin.buffer.read(), None
    else:
        data, src = Path(args.file).read_bytes(), args.file
    tables = parse_rtf(data, src)
    payload = [{"rows": t.to_lists(), "warnings": list(t.warnings)} for t in tables]
    # RawTable output is JSON either way
    print(json.dumps(payload if args.json else [t.to_lists() for t in tables], indent=2, ensure_ascii=False))
    return EXIT_OK


# -- bridge -------------------------------------------------------------------

def _bridge_inputs(args):
    from tflparity.bridge import load_bridge_map, load_registry, load_study_config

    entries = load_bridge_map(args.map)
    study = load_study_config(args.study)
    registry = load_registry(args.registry) if getattr(args, "registry", None) else {}
    return entries, study, registry


def _bridge_audit(args) -> int:
    from tflparity.analyzer import analyze_corpus
    from tflparity.bridge import self_audit

    entries, study, registry = _bridge_inputs(args)
    corpus = None
    if args.legacy_dir:
        corpus = {r.macro.name: r.macro.parameter_names for r in analyze_corpus(args.legacy_dir).records}
    report = self_audit(entries, registry, study, corpus)
    payload = {"errors": len(report.errors),
               "findings": [{"entry_id": f.entry_id, "severity": f.severity.value, "message": f.message}
                            for f in report.findings]}
    _emit(args, payload, lambda: "\n".join(f"{f.severity.value} {f.entry_id}: {f.message}"
                                           for f in report.findings) or "no findings")
    return EXIT_FAIL if report.errors else EXIT_OK


def _parse_kv(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise _Usage(f"expected NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _bridge_resolve(args) -> int:
    from tflparity.bridge import resolve_parameters

    entries, study, _ = _bridge_inputs(args)
    if args.entry not in entries:
        raise TflParityError(f"unknown legacy_id {args.entry!r}")
    resolved = resolve_parameters(entries[args.entry], study, _parse_kv(args.arg), strict=not args.lenient)
    _emit(args, resolved, lambda: "\n".join(f"{k}={v}" for k, v in resolved.items()))
    return EXIT_OK


# -- compare ------------------------------------------------------------------

def _options(args, grid=None):
    from tflparity.compare import CompareOptions
    from tflparity.ir.model import hierarchy_from_indent

    opts = CompareOptions(epsilon=args.epsilon, denominator=args.denominator, casefold=args.casefold)
    if getattr(args, "hierarchy_indent", False) and grid is not None:
        opts = replace(opts, hierarchy=hierarchy_from_indent(grid))
    return opts


def _first_table(path: str):
    from tflparity.rtf import parse_rtf

    tables = parse_rtf(Path(path).read_bytes(), path)
    if not tables:
        raise TflParityError(f"no table found in {path}")
    return tables[0]


def _report_text(r) -> str:
    head = f"{r.entry_id or '-'}: {r.verdict.value} parity {r.parity_pct:.2f}% ({r.matched_cells}/{r.total_cells})"
    lines = [head] + [f"  {k}: {v}" for k, v in r.histogram.items()]
    if r.error:
        lines.append(f"  error: {r.error}")
    return "\n".join(lines)


def _finish_report(args, report) -> int:
    if args.out:
        _write(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
    _emit(args, report.to_dict(), lambda: _report_text(report))
    return _verdict_exit([report.verdict])


def _compare_table(args) -> int:
    from tflparity.compare import compare_table

    grid = _load_grid(args.native)
    return _finish_report(args, compare_table(_first_table(args.legacy), grid, _options(args, grid),
                                              args.entry_id or Path(args.native).stem))


def _compare_listing(args) -> int:
    from tflparity.compare import compare_listing

    grid = _load_grid(args.native)
    return _finish_report(args, compare_listing(_first_table(args.legacy), grid, _options(args),
                                                args.entry_id or Path(args.native).stem))


def _compare_figure(args) -> int:
    from tflparity.compare import compare_figure

    return _finish_report(args, compare_figure(args.legacy, args.native, args.tolerance_pct,
                                               args.entry_id or Path(args.native).stem))


def _batch_one(args, stem: str, legacy: Path, native: Path):
    from tflparity.compare import ComparisonReport, Verdict, compare_listing, compare_table

    try:
        grid = _load_grid(str(native))
        table = _first_table(str(legacy))
        if stem in set(args.listing or ()):
            return compare_listing(table, grid, _options(args), stem)
        return compare_table(table, grid, _options(args, grid), stem)
    except (TflParityError, OSError, ValueError) as exc:
        return ComparisonReport(stem, Verdict.ERROR, error=f"{type(exc).__name__}: {exc}")


def _compare_batch(args) -> int:
    from tflparity.compare import ComparisonReport, Verdict, summarize
    from tflparity.figures import write_report_bundle

    root = Path(args.root)
    legacy = {p.stem: p for p in sorted((root / "legacy").glob("*.rtf"))}
    native = {p.stem: p for p in sorted((root / "native").glob("*.json"))}
    if not legacy and not native:
        raise TflParityError(f"no legacy/*.rtf or native/*.json under {root}")
    stems = sorted(set(legacy) | set(native))
    jobs = args.jobs or os.cpu_count() or 1

    def one(stem: str):
        if stem not in legacy or stem not in native:
            side = "legacy" if stem not in legacy else "native"
            return ComparisonReport(stem, Verdict.ERROR, error=f"missing {side} output")
        return _batch_one(args, stem, legacy[stem], native[stem])

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(one, stems))
    out = Path(os.environ.get("TFLPARITY_OUT") or args.out or root / "report")
    paths = write_report_bundle(reports, out, args.threshold)
    for r in reports:
        _write(out / "reports" / f"{r.entry_id}.json", json.dumps(r.to_dict(), indent=2) + "\n")
    summary = summarize(reports, args.threshold)
    payload = summary.to_dict() | {"artifacts": {k: str(v) for k, v in paths.items()}}
    _emit(args, payload, lambda: "\n".join(_report_text(r).splitlines()[0] for r in reports)
          + f"\n{summary.share_label} at or above {args.threshold:g}%\nwrote {out}")
    return _verdict_exit(r.verdict for r in reports)


# -- gates / analyze / audit / synth ------------------------------------------

def _gates_run(args) -> int:
    from tflparity.gates import load_harness_config, run_gates

    run = run_gates(load_harness_config(args.config), args.through, force=args.force,
                    jobs=args.jobs or os.cpu_count())
    _emit(args, run.to_dict(), lambda: "\n".join(
        f"Gate {r.gate.value} {r.status.value}" + "".join(f"\n  {f}" for f in r.findings) for r in run.results))
    return run.exit_code


def _analyze_library(args) -> int:
    from tflparity.analyzer import analyze_corpus, load_annotations

    ann = load_annotations(args.annotations) if args.annotations else None
    inv = analyze_corpus(args.root, ann, hub_threshold=args.hub_threshold)
    out = Path(args.out) if args.out else None
    if out is not None:
        _write(out / "inventory.json", inv.to_json())
        _write(out / "inventory.csv", inv.to_csv())
        _write(out / "callgraph.tgf", inv.to_tgf())
    d = inv.diagnostics
    _emit(args, inv.to_dict(), lambda: (
        f"{len(inv.records)} macro(s), {len(inv.graph.edges)} edge(s)\n"
        f"orphans: {', '.join(d.orphans) or '-'}\n"
        f"cycles: {'; '.join(' -> '.join(c) for c in d.cycles) or '-'}\n"
        f"hubs: {', '.join(h for h, _ in d.hubs) or '-'}"
        + (f"\nwrote {out}" if out else "")))
    return EXIT_FAIL if inv.errors else EXIT_OK


def _audit_verify(args) -> int:
    from tflparity.audit import FileStatus, verify_manifest

    reports = {m: verify_manifest(m) for m in args.manifest}
    payload = {m: r.to_dict() for m, r in reports.items()}
    _emit(args, payload, lambda: "\n".join(
        f"{s.value} {role} {p}" for r in reports.values() for role, p, s in r.entries))
    bad = [s for r in reports.values() for _, _, s in r.entries if s is not FileStatus.MATCH]
    return EXIT_FAIL if bad else EXIT_OK


def _synth_make(args) -> int:
    from tflparity.ir.render import to_json
    from tflparity.synth import FixtureSpec, ReportKind, generate_pair, inject_divergence

    kind = ReportKind(args.kind.upper())
    spec = FixtureSpec(kind, rows=args.rows, seed=args.seed, include_total=not args.no_total,
                       preset=args.preset)
    pair = generate_pair(spec)
    injected: list[str] = []
    if args.inject:
        pair, cats = inject_divergence(pair, args.inject.upper(), args.seed)
        injected = [c.value for c in cats]
    name = args.name or f"{kind.value.lower()}_{args.seed}"
    out = Path(args.out)
    rtf_path = _write(out / "legacy" / f"{name}.rtf", pair.rtf)
    json_path = _write(out / "native" / f"{name}.json", to_json(pair.grid))
    payload = {"kind": kind.value, "seed": args.seed, "cells": len(pair.grid.cells), "injected": injected,
               "legacy": str(rtf_path), "native": str(json_path)}
    _emit(args, payload, f"wrote {rtf_path} and {json_path}")
    return EXIT_OK


def _synth_workspace(args) -> int:
    from tflparity.synth import build_workspace

    inject = _parse_kv(args.inject)
    path = build_workspace(args.out, args.kind or None, args.seed, inject or None)
    _emit(args, {"harness_config": str(path)}, f"wrote {path}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")

    parser = _Parser(prog="tflparity", description="Clinical TFL parity toolkit.",
                     epilog="exit codes: 0 success/PASS, 1 FAIL findings, 2 error or usage")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def sub(group, name, fn, help_text):
        p = group.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(fn=fn)
        return p

    ir = groups.add_parser("ir", help="cell-grid IR").add_subparsers(dest="cmd", required=True,
                                                                      parser_class=_Parser)
    p = sub(ir, "validate", _ir_validate, "check the four validity rules")
    p.add_argument("grid")
    p.add_argument("--allow-separators", action="store_true")
    p = sub(ir, "render", _ir_render, "render a grid as HTML, RTF or JSON")
    p.add_argument("grid")
    p.add_argument("--format", choices=["html", "rtf", "json"], default="html")
    p.add_argument("--title")
    p.add_argument("--document", action="store_true", help="wrap HTML in a full document")
    p.add_argument("--out")
    p = sub(ir, "reconcile", _ir_reconcile, "trace numeric cells back to source statistics")
    p.add_argument("grid")
    p.add_argument("stats", help="CSV or JSON records: group, treatment, stat_name, stat_value")
    p.add_argument("mapping", help="IR mapping YAML")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p = sub(ir, "lint", _ir_lint, "parent/child count consistency for indented rows")
    p.add_argument("grid")

    rtf = groups.add_parser("rtf", help="RTF tables").add_subparsers(dest="cmd", required=True,
                                                                      parser_class=_Parser)
    p = sub(rtf, "parse", _rtf_parse, "dump table rows as JSON")
    p.add_argument("file", nargs="?", default="-")

    bridge = groups.add_parser("bridge", help="bridge map").add_subparsers(dest="cmd", required=True,
                                                                            parser_class=_Parser)
    p = sub(bridge, "audit", _bridge_audit, "self-audit a bridge map")
    p.add_argument("--map", required=True)
    p.add_argument("--study", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--legacy-dir")
    p = sub(bridge, "resolve", _bridge_resolve, "resolve parameters for one entry")
    p.add_argument("entry")
    p.add_argument("--map", required=True)
    p.add_argument("--study", required=True)
    p.add_argument("--arg", action="append", metavar="NAME=VALUE", help="call argument (legacy name)")
    p.add_argument("--lenient", action="store_true", help="pass unmapped legacy parameters through")

    cmp_ = groups.add_parser("compare", help="legacy vs native comparison").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    for name, fn in (("table", _compare_table), ("listing", _compare_listing), ("batch", _compare_batch)):
        p = sub(cmp_, name, fn, f"compare {name}" if name != "batch" else "compare every pair under a root")
        if name == "batch":
            p.add_argument("root", help="directory with legacy/*.rtf and native/*.json")
            p.add_argument("--jobs", type=int, default=None)
            p.add_argument("--threshold", type=float, default=80.0)
            p.add_argument("--listing", action="append", metavar="STEM", help="treat this pair as a listing")
        else:
            p.add_argument("legacy")
            p.add_argument("native")
            p.add_argument("--entry-id")
        p.add_argument("--epsilon", type=float, default=1e-9)
        p.add_argument("--denominator", choices=["ADSL", "POPULATION"])
        p.add_argument("--casefold", action="store_true")
        p.add_argument("--hierarchy-indent", action="store_true", help="derive parent/child rows from indent")
        p.add_argument("--out")
    p = sub(cmp_, "figure", _compare_figure, "compare two image files")
    p.add_argument("legacy")
    p.add_argument("native")
    p.add_argument("--tolerance-pct", type=float, default=5.0)
    p.add_argument("--entry-id")
    p.add_argument("--out")

    gates = groups.add_parser("gates", help="gate workflow").add_subparsers(dest="cmd", required=True,
                                                                             parser_class=_Parser)
    p = sub(gates, "run", _gates_run, "run gates A through --through")
    p.add_argument("--config", required=True)
    p.add_argument("--through", default="G", type=str.upper, choices=list("ABCDEFG"))
    p.add_argument("--force", action="store_true", help="run the full matrix even after sample failures")
    p.add_argument("--jobs", type=int, default=None)

    analyze = groups.add_parser("analyze", help="SAS macro library").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    p = sub(analyze, "library", _analyze_library, "inventory, call graph and metrics")
    p.add_argument("root")
    p.add_argument("--annotations")
    p.add_argument("--hub-threshold", type=int, default=10)
    p.add_argument("--out")

    audit = groups.add_parser("audit", help="provenance").add_subparsers(dest="cmd", required=True,
                                                                          parser_class=_Parser)
    p = sub(audit, "verify", _audit_verify, "re-hash files listed in manifests")
    p.add_argument("manifest", nargs="+")

    synth = groups.add_parser("synth", help="synthetic fixtures").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    p = sub(synth, "make", _synth_make, "write one legacy/native fixture pair")
    p.add_argument("--kind", required=True, type=str.upper,
                   choices=["DEMOGRAPHICS", "AE_SUMMARY", "AE_SOC_PT", "EFFICACY", "KM_TTE", "LISTING"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--no-total", action="store_true")
    p.add_argument("--preset", choices=["CDISCPILOT01"])
    p.add_argument("--inject", metavar="CATEGORY")
    p.add_argument("--name")
    p = sub(synth, "workspace", _synth_workspace, "write a runnable harness workspace")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", action="append", type=str.upper)
    p.add_argument("--inject", action="append", metavar="ENTRY=CATEGORY")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _Usage as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (TflParityError, OSError, ValueError, yaml.YAMLError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
