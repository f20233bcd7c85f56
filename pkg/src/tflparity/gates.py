"""Gate workflow A to G over a harness configuration, plus failure triage."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import yaml

from tflparity.analyzer.syntax import syntax_check
from tflparity.audit import AuditLog, AuditRecord, Status
from tflparity.bridge import (
    BridgeMapEntry,
    Executor,
    FixtureExecutor,
    ReportType,
    ShellExecutor,
    StudyConfig,
    build_legacy_plan,
    build_native_plan,
    load_bridge_map,
    load_registry,
    load_study_config,
    self_audit,
)
from tflparity.compare import ComparisonReport, DivergenceCategory, Verdict
from tflparity.errors import BridgeMapError, ConfigError, ResolutionError

OUT_ENV = "TFLPARITY_OUT"


class GateId(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"


GATE_ORDER = tuple(GateId)
GATE_TITLES = {
    GateId.A: "structural pre-flight",
    GateId.B: "bridge map self-audit",
    GateId.C: "syntax smoke test",
    GateId.D: "self-check suite",
    GateId.E: "sample parity run",
    GateId.F: "failure triage",
    GateId.G: "full matrix run",
}


class GateStatus(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    SKIPPED = "SKIPPED"


class TriageClass(str, Enum):
    INFRASTRUCTURE = "INFRASTRUCTURE"
    PARAMETER = "PARAMETER"
    SEMANTIC = "SEMANTIC"
    CONTENT = "CONTENT"


@dataclass(frozen=True)
class GateResult:
    gate: GateId
    status: GateStatus
    findings: tuple[str, ...] = ()
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")

    def to_dict(self) -> dict:
        return {"gate": self.gate.value, "title": GATE_TITLES[self.gate], "status": self.status.value,
                "findings": list(self.findings), "duration_ms": self.duration_ms}


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class HarnessConfig:
    bridge_map_path: Path
    study_config_path: Path
    registry_dir: Path
    fixtures_dir: Path
    output_dir: Path
    sample_entries: tuple[str, ...] = ()
    epsilon: Mapping[str, float] = field(default_factory=dict)
    default_epsilon: float = 1e-9
    legacy_dir: Path | None = None
    shell_command: str | None = None

    def executor(self) -> Executor:
        return ShellExecutor(self.shell_command) if self.shell_command else FixtureExecutor(self.fixtures_dir)


_REQUIRED = ("bridge_map", "study_config", "registry_dir", "fixtures_dir", "output_dir")
_OPTIONAL = ("sample_entries", "epsilon", "legacy_dir", "shell_command")


def harness_config_from_dict(doc: Any, base_dir: str | Path = ".") -> HarnessConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("harness config must be a mapping")
    unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise ConfigError(f"harness config has unknown key(s): {', '.join(unknown)}")
    base = Path(base_dir)

    def path_of(key: str, value: Any) -> Path:
        if not isinstance(value, str) or not value.strip():
            raise ConfigError(f"{key} must be a non-empty path")
        p = Path(value)
        return p if p.is_absolute() else base / p

    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"harness config is missing {key}")
    out = os.environ.get(OUT_ENV) or doc["output_dir"]
    eps_doc = doc.get("epsilon") or {}
    if isinstance(eps_doc, (int, float)):
        eps_doc = {"default": eps_doc}
    if not isinstance(eps_doc, Mapping):
        raise ConfigError("epsilon must be a number or a mapping of entry id to number")
    try:
        eps = {str(k): float(v) for k, v in eps_doc.items()}
    except (TypeError, ValueError):
        raise ConfigError("epsilon values must be numbers") from None
    if any(v < 0 for v in eps.values()):
        raise ConfigError("epsilon values must be >= 0")
    samples = doc.get("sample_entries") or []
    if not isinstance(samples, list):
        raise ConfigError("sample_entries must be a list")
    return HarnessConfig(
        bridge_map_path=path_of("bridge_map", doc["bridge_map"]),
        study_config_path=path_of("study_config", doc["study_config"]),
        registry_dir=path_of("registry_dir", doc["registry_dir"]),
        fixtures_dir=path_of("fixtures_dir", doc["fixtures_dir"]),
        output_dir=path_of("output_dir", out),
        sample_entries=tuple(str(s) for s in samples),
        epsilon={k: v for k, v in eps.items() if k != "default"},
        default_epsilon=eps.get("default", 1e-9),
        legacy_dir=path_of("legacy_dir", doc["legacy_dir"]) if doc.get("legacy_dir") else None,
        shell_command=doc.get("shell_command"),
    )


def load_harness_config(path: str | Path) -> HarnessConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read harness config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return harness_config_from_dict(doc, path.parent)


# -- triage -------------------------------------------------------------------

SEMANTIC_CATEGORIES = frozenset({
    DivergenceCategory.ADSL_DENOMINATOR.value,
    DivergenceCategory.POPULATION_DENOMINATOR.value,
    DivergenceCategory.SOC_GROUP_TOTAL.value,
})
_PARAMETER_MARKERS = ("resolution error", "unmapped legacy parameter", "parameter")


@dataclass(frozen=True)
class TriageItem:
    entry_id: str
    triage_class: TriageClass
    rationale: str

    def to_dict(self) -> dict:
        return {"entry_id": self.entry_id, "class": self.triage_class.value, "rationale": self.rationale}


def triage(failures: Iterable[ComparisonReport], diagnostics: Mapping[str, Sequence[str]] | None = None
           ) -> list[TriageItem]:
    """One class per failing report; PASS and SKIP reports are ignored."""
    diagnostics = diagnostics or {}
    out = []
    for r in failures:
        if r.verdict is Verdict.ERROR:
            text = " ".join([r.error or "", *diagnostics.get(r.entry_id, ())]).lower()
            if any(m in text for m in _PARAMETER_MARKERS):
                out.append(TriageItem(r.entry_id, TriageClass.PARAMETER, f"parameter problem: {r.error}"))
            else:
                out.append(TriageItem(r.entry_id, TriageClass.INFRASTRUCTURE, f"execution problem: {r.error}"))
        elif r.verdict is Verdict.FAIL:
            top = r.top_category
            if top in SEMANTIC_CATEGORIES:
                out.append(TriageItem(r.entry_id, TriageClass.SEMANTIC,
                                      f"computational logic differs (mostly {top})"))
            else:
                out.append(TriageItem(r.entry_id, TriageClass.CONTENT,
                                      f"{len(r.diffs)} differing cell(s), mostly {top or 'structural'}"))
    return sorted(out, key=lambda t: t.entry_id)


# -- gates --------------------------------------------------------------------

@dataclass
class GateRun:
    config: HarnessConfig
    results: list[GateResult] = field(default_factory=list)
    reports: dict[str, list[ComparisonReport]] = field(default_factory=dict)  # gate -> reports
    triage_items: list[TriageItem] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    audit_records: int = 0

    @property
    def exit_code(self) -> int:
        executed = [r for r in self.results if r.status is not GateStatus.SKIPPED]
        return 0 if all(r.status is GateStatus.PASS for r in executed) else 1

    def to_dict(self) -> dict:
        return {
            "gates": [r.to_dict() for r in self.results],
            "triage": [t.to_dict() for t in self.triage_items],
            "reports": {g: [r.to_dict() for r in rs] for g, rs in self.reports.items()},
            "artifacts": dict(self.artifacts),
            "audit_records": self.audit_records,
            "exit_code": self.exit_code,
        }


@dataclass
class _State:
    entries: dict[str, BridgeMapEntry] = field(default_factory=dict)
    registry: dict[str, ReportType] = field(default_factory=dict)
    study: StudyConfig | None = None
    diagnostics: dict[str, tuple[str, ...]] = field(default_factory=dict)


def _gate_a(cfg: HarnessConfig, st: _State) -> list[str]:
    findings = []
    paths = [("bridge map", cfg.bridge_map_path, "file"), ("study config", cfg.study_config_path, "file"),
             ("registry", cfg.registry_dir, "dir"), ("fixtures", cfg.fixtures_dir, "dir")]
    if cfg.legacy_dir is not None:
        paths.append(("legacy library", cfg.legacy_dir, "dir"))
    for label, p, kind in paths:
        ok = p.is_file() if kind == "file" else p.is_dir()
        if not ok:
            findings.append(f"{label} not found: {p}")
    if findings:
        return findings
    try:
        raw = yaml.safe_load(cfg.bridge_map_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        return [f"bridge map does not parse: {exc}"]
    try:
        st.registry = load_registry(cfg.registry_dir)
    except ConfigError as exc:
        findings.append(f"registry does not parse: {exc}")
    try:
        st.study = load_study_config(cfg.study_config_path)
    except ConfigError as exc:
        findings.append(f"study config does not parse: {exc}")
    if st.study is not None:
        for name, p in sorted(st.study.dataset_paths.items()):
            if not st.study.resolve_path(p).exists():
                findings.append(f"dataset {name} not found: {st.study.resolve_path(p)}")
        for p in st.study.library_paths:
            if not st.study.resolve_path(p).is_dir():
                findings.append(f"library path not found: {st.study.resolve_path(p)}")
    items = raw.get("entries", []) if isinstance(raw, Mapping) else (raw or [])
    ids = {str(e.get("legacy_id")) for e in items if isinstance(e, Mapping)}
    for s in cfg.sample_entries:
        if s not in ids:
            findings.append(f"sample entry {s} is not in the bridge map")
    return findings


def _legacy_macros(cfg: HarnessConfig, st: _State) -> dict[str, list[str]] | None:
    roots = []
    if cfg.legacy_dir is not None:
        roots.append(cfg.legacy_dir)
    if st.study is not None:
        roots += [st.study.resolve_path(p) for p in st.study.library_paths]
    if not roots:
        return None
    from tflparity.analyzer import analyze_corpus

    macros: dict[str, list[str]] = {}
    for root in roots:
        if root.is_dir():
            for r in analyze_corpus(root).records:
                macros.setdefault(r.macro.name, r.macro.parameter_names)
    return macros


def _gate_b(cfg: HarnessConfig, st: _State) -> list[str]:
    try:
        st.entries = load_bridge_map(cfg.bridge_map_path)
    except BridgeMapError as exc:
        return [f"bridge map rejected: {exc}"]
    report = self_audit(st.entries, st.registry, st.study, _legacy_macros(cfg, st))
    return [f"{f.severity.value} {f.entry_id}: {f.message}" for f in report.errors]


def _plans(cfg: HarnessConfig, st: _State):
    for eid, entry in sorted(st.entries.items()):
        if entry.skip_reason:
            continue
        try:
            yield eid, [
                build_legacy_plan(entry, st.study, registry=st.registry, out_root=cfg.output_dir),
                build_native_plan(entry, st.study, registry=st.registry, out_root=cfg.output_dir),
            ], None
        except ResolutionError as exc:
            yield eid, [], str(exc)


def _gate_c(cfg: HarnessConfig, st: _State) -> list[str]:
    findings = []
    for eid, plans, err in _plans(cfg, st):
        if err:
            findings.append(f"{eid}: parameter resolution failed: {err}")
            continue
        for plan in plans:
            for f in syntax_check(plan.program_text, plan.resolved_params.keys()):
                findings.append(f"{eid} {plan.side.value.lower()} {f}")
    return findings


def _gate_d(cfg: HarnessConfig, st: _State) -> list[str]:
    from tflparity.selfcheck import run_checks

    return [f"self-check {r.name} failed: {r.detail}" for r in run_checks() if not r.passed]


def _harness(cfg: HarnessConfig, st: _State, audit: AuditLog | None):
    from tflparity.harness import HarnessContext

    return HarnessContext(
        st.entries, st.registry, st.study, cfg.executor(), cfg.output_dir, audit,
        cfg.epsilon, cfg.default_epsilon, cfg.legacy_dir,
    )


def _run_matrix(cfg: HarnessConfig, st: _State, run: GateRun, gate: GateId, ids: list[str], jobs: int | None,
                audit: AuditLog | None) -> list[str]:
    from tflparity.harness import run_entries

    outcomes = run_entries(_harness(cfg, st, audit), ids, jobs)
    reports = [o.report for o in outcomes]
    run.reports[gate.value] = reports
    for o in outcomes:
        st.diagnostics[o.report.entry_id] = o.diagnostics
    return [
        f"{r.entry_id}: {r.verdict.value} parity {r.parity_pct:.2f}%" + (f" ({r.error})" if r.error else "")
        for r in reports if r.verdict not in (Verdict.PASS, Verdict.SKIP)
    ]


def run_gates(
    config: HarnessConfig,
    through: GateId | str = GateId.G,
    *,
    force: bool = False,
    jobs: int | None = None,
    write_outputs: bool = True,
) -> GateRun:
    """Run gates in order up to ``through``. The first failing gate stops progression.

    Gate F is the exception: it exists to triage Gate E failures, so it still runs
    when E fails. Gate G runs only after a clean E/F unless ``force`` is set.
    """
    through = GateId(through)
    stop = GATE_ORDER.index(through)
    st = _State()
    run = GateRun(config)
    audit = AuditLog(config.output_dir / "audit.ndjson") if write_outputs else None
    blocked = False
    e_failed = False

    def execute(gate: GateId, fn: Callable[[], list[str]]) -> GateResult:
        if audit is not None:
            audit.append(AuditRecord("GATE", f"gate_{gate.value}", Status.STARTED, "gates"))
        t0 = time.perf_counter()
        findings = fn()
        status = GateStatus.FAIL if findings else GateStatus.PASS
        result = GateResult(gate, status, tuple(findings), int((time.perf_counter() - t0) * 1000))
        if audit is not None:
            audit.append(AuditRecord("GATE", f"gate_{gate.value}",
                                     Status.SUCCESS if status is GateStatus.PASS else Status.FAILURE, "gates",
                                     f"{len(findings)} finding(s)"))
        return result

    def gate_e() -> list[str]:
        ids = list(config.sample_entries) or sorted(st.entries)
        return _run_matrix(config, st, run, GateId.E, ids, jobs, audit)

    def gate_f() -> list[str]:
        failures = [r for r in run.reports.get(GateId.E.value, []) if r.verdict in (Verdict.FAIL, Verdict.ERROR)]
        run.triage_items = triage(failures, st.diagnostics)
        return [f"{t.entry_id}: {t.triage_class.value}: {t.rationale}" for t in run.triage_items]

    def gate_g() -> list[str]:
        findings = _run_matrix(config, st, run, GateId.G, sorted(st.entries), jobs, audit)
        if write_outputs:
            from tflparity.figures import write_report_bundle

            paths = write_report_bundle(run.reports[GateId.G.value], config.output_dir)
            run.artifacts.update({k: str(v) for k, v in paths.items()})
        return findings

    steps: dict[GateId, Callable[[], list[str]]] = {
        GateId.A: lambda: _gate_a(config, st),
        GateId.B: lambda: _gate_b(config, st),
        GateId.C: lambda: _gate_c(config, st),
        GateId.D: lambda: _gate_d(config, st),
        GateId.E: gate_e,
        GateId.F: gate_f,
        GateId.G: gate_g,
    }
    for k, gate in enumerate(GATE_ORDER):
        if k > stop:
            break
        runnable = not blocked or (gate is GateId.F and e_failed and not _failed_before_e(run))
        if gate is GateId.G and blocked and force and not _failed_before_e(run):
            runnable = True
        if not runnable:
            run.results.append(GateResult(gate, GateStatus.SKIPPED))
            continue
        result = execute(gate, steps[gate])
        run.results.append(result)
        if result.status is GateStatus.FAIL:
            blocked = True
            if gate is GateId.E:
                e_failed = True
    if audit is not None:
        run.audit_records = audit.appended
    if write_outputs:
        import json

        config.output_dir.mkdir(parents=True, exist_ok=True)
        (config.output_dir / "gate_report.json").write_text(json.dumps(run.to_dict(), indent=2) + "\n",
                                                            encoding="utf-8")
        run.artifacts["gate_report"] = str(config.output_dir / "gate_report.json")
    return run


def _failed_before_e(run: GateRun) -> bool:
    return any(r.status is GateStatus.FAIL and GATE_ORDER.index(r.gate) < GATE_ORDER.index(GateId.E)
               for r in run.results)
