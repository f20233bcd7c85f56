"""Dual-driver execution: run the legacy and native plan for an entry, then compare the outputs."""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from tflparity.audit import AuditLog, AuditRecord, Status, build_manifest, legacy_macro_version
from tflparity.bridge import (
    ArtifactKind,
    BridgeMapEntry,
    Executor,
    ExecutionPlan,
    ExecutionResult,
    ReportType,
    Side,
    StudyConfig,
    build_legacy_plan,
    build_native_plan,
)
from tflparity.compare import (
    CompareOptions,
    ComparisonReport,
    Verdict,
    compare_figure,
    compare_listing,
    compare_table,
)
from tflparity.errors import ResolutionError, TflParityError
from tflparity.ir.model import hierarchy_from_indent
from tflparity.ir.render import from_json
from tflparity.rtf import parse_rtf


@dataclass
class HarnessContext:
    entries: Mapping[str, BridgeMapEntry]
    registry: Mapping[str, ReportType]
    study: StudyConfig
    executor: Executor
    out_root: Path
    audit: AuditLog | None = None
    epsilon: Mapping[str, float] = field(default_factory=dict)
    default_epsilon: float = 1e-9
    legacy_dir: Path | None = None
    _records: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def record(self, step: str, status: Status, entry_id: str, comments: str = "", layer: str = "harness") -> None:
        if self.audit is None:
            return
        self.audit.append(AuditRecord("PIPELINE_STEP", f"{entry_id}:{step}", status, layer, comments))
        with self._lock:
            self._records += 1

    @property
    def records_written(self) -> int:
        return self._records

    def report_type(self, entry: BridgeMapEntry) -> ReportType | None:
        return self.registry.get(entry.native_target)

    def compare_options(self, entry: BridgeMapEntry) -> CompareOptions:
        rt = self.report_type(entry)
        return CompareOptions(
            epsilon=self.epsilon.get(entry.legacy_id, self.default_epsilon),
            denominator=(rt.denominator if rt else None),
            has_registry_config=rt is not None,
        )

    def legacy_source(self, macro: str) -> Path | None:
        roots = [self.study.resolve_path(p) for p in self.study.library_paths]
        if self.legacy_dir is not None:
            roots.append(self.legacy_dir)
        for root in roots:
            for cand in (root / f"{macro}.sas", root / f"{macro.lower()}.sas"):
                if cand.is_file():
                    return cand
        return None


@dataclass(frozen=True)
class EntryOutcome:
    report: ComparisonReport
    manifests: tuple[Path, ...] = ()
    diagnostics: tuple[str, ...] = ()


def _error(entry_id: str, message: str, kind: str = "table") -> ComparisonReport:
    return ComparisonReport(entry_id, Verdict.ERROR, kind=kind, error=message)


def _dataset_inputs(study: StudyConfig) -> list[Path]:
    return [p for p in (study.resolve_path(v) for v in study.dataset_paths.values()) if p.is_file()]


def _write_manifest(ctx: HarnessContext, entry: BridgeMapEntry, result: ExecutionResult) -> Path:
    plan = result.plan
    out_dir = Path(plan.out_dir)
    inputs = _dataset_inputs(ctx.study) + [out_dir / "program.sas"]
    versions = {}
    if plan.side is Side.LEGACY:
        src = ctx.legacy_source(entry.macro_name)
        if src is not None:
            inputs.append(src)
            versions[entry.macro_name] = legacy_macro_version(src)
    outputs = [p for p in result.artifacts.values()]
    manifest = build_manifest(plan, [p for p in inputs if Path(p).is_file()], outputs, versions)
    return manifest.write(out_dir / "manifest.json")


def _compare(ctx: HarnessContext, entry: BridgeMapEntry, legacy: ExecutionResult, native: ExecutionResult
             ) -> ComparisonReport:
    rt = ctx.report_type(entry)
    output = rt.output if rt else "table"
    eid = entry.legacy_id
    if output == "figure":
        return compare_figure(legacy.plan.artifact(ArtifactKind.FIGURE), native.plan.artifact(ArtifactKind.FIGURE),
                              entry_id=eid)
    rtf_path = Path(legacy.artifacts[ArtifactKind.RTF])
    tables = parse_rtf(rtf_path.read_bytes(), str(rtf_path))
    if not tables:
        return _error(eid, f"no table found in {rtf_path}", output)
    grid = from_json(Path(native.artifacts[ArtifactKind.IR_JSON]).read_text(encoding="utf-8"))
    opts = ctx.compare_options(entry)
    if output == "listing":
        return compare_listing(tables[0], grid, opts, eid)
    if rt is not None and rt.hierarchy == "indent":
        opts = replace(opts, hierarchy=hierarchy_from_indent(grid))
    return compare_table(tables[0], grid, opts, eid)


def run_entry(ctx: HarnessContext, entry_id: str, call_args: Mapping[str, Any] | None = None) -> EntryOutcome:
    entry = ctx.entries[entry_id]
    rt = ctx.report_type(entry)
    kind = rt.output if rt else "table"
    if entry.skip_reason:
        ctx.record("skip", Status.SUCCESS, entry_id, entry.skip_reason)
        return EntryOutcome(ComparisonReport(entry_id, Verdict.SKIP, kind=kind, error=entry.skip_reason))

    ctx.record("plan", Status.STARTED, entry_id)
    try:
        plans: list[ExecutionPlan] = [
            build_legacy_plan(entry, ctx.study, call_args, registry=ctx.registry, out_root=ctx.out_root),
            build_native_plan(entry, ctx.study, call_args, registry=ctx.registry, out_root=ctx.out_root),
        ]
    except ResolutionError as exc:
        ctx.record("plan", Status.FAILURE, entry_id, str(exc))
        return EntryOutcome(_error(entry_id, f"parameter resolution error: {exc}", kind), (), (str(exc),))
    ctx.record("plan", Status.SUCCESS, entry_id)

    results: list[ExecutionResult] = []
    manifests: list[Path] = []
    diagnostics: list[str] = []
    for plan in plans:
        step = f"execute_{plan.side.value.lower()}"
        ctx.record(step, Status.STARTED, entry_id, layer=plan.side.value.lower())
        res = ctx.executor.run(plan)
        results.append(res)
        diagnostics.extend(res.diagnostics)
        ctx.record(step, Status.SUCCESS if res.ok else Status.FAILURE, entry_id, "; ".join(res.diagnostics),
                   layer=plan.side.value.lower())
        if res.ok:
            manifests.append(_write_manifest(ctx, entry, res))
    if not all(r.ok for r in results):
        return EntryOutcome(_error(entry_id, "; ".join(diagnostics) or "execution failed", kind),
                            tuple(manifests), tuple(diagnostics))

    ctx.record("compare", Status.STARTED, entry_id)
    try:
        report = _compare(ctx, entry, results[0], results[1])
    except (TflParityError, OSError, KeyError) as exc:
        report = _error(entry_id, f"{type(exc).__name__}: {exc}", kind)
    (ctx.out_root / entry_id).mkdir(parents=True, exist_ok=True)
    (ctx.out_root / entry_id / "comparison.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    ctx.record("compare", Status.SUCCESS if report.verdict is not Verdict.ERROR else Status.FAILURE, entry_id,
               f"{report.verdict.value} {report.parity_pct:.2f}%")
    return EntryOutcome(report, tuple(manifests), tuple(diagnostics))


def run_entries(ctx: HarnessContext, entry_ids: Iterable[str], jobs: int | None = None) -> list[EntryOutcome]:
    """Run entries concurrently; outcomes come back in the order of ``entry_ids``."""
    ids = list(entry_ids)
    if jobs == 1 or len(ids) <= 1:
        return [run_entry(ctx, e) for e in ids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda e: run_entry(ctx, e), ids))
