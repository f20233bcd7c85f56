"""Bridge map: legacy macro calls paired with modern report targets.

Everything downstream of this module sees only :class:`ExecutionPlan`; the
deployment mode of an entry is resolved here and nowhere else.
"""

from __future__ import annotations

import logging
import re
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

import yaml

from tflparity.errors import (
    ConfigError,
    DuplicateLegacyId,
    InvalidIdentifier,
    MissingRequiredField,
    NameTooLong,
    ParseError,
    ResolutionError,
    UnmappedLegacyParameter,
)

log = logging.getLogger(__name__)

SAS_NAME_MAX = 32
_SAS_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class Mode(str, Enum):
    COEXISTENCE = "COEXISTENCE"
    CONSOLIDATION = "CONSOLIDATION"


class Side(str, Enum):
    LEGACY = "LEGACY"
    NATIVE = "NATIVE"


class ArtifactKind(str, Enum):
    RTF = "RTF"
    IR_JSON = "IR_JSON"
    LOG = "LOG"
    FIGURE = "FIGURE"


def check_sas_name(name: str) -> str:
    if len(name) > SAS_NAME_MAX:
        raise NameTooLong(name)
    if not _SAS_NAME_RE.match(name):
        raise InvalidIdentifier(name)
    return name


@dataclass(frozen=True)
class BridgeMapEntry:
    legacy_id: str
    native_target: str
    mode: Mode
    parameter_mapping: Mapping[str, str] = field(default_factory=dict)
    defaults: Mapping[str, Any] = field(default_factory=dict)
    preamble_sas: str | None = None
    post_calls: tuple[str, ...] = ()
    legacy_macro: str | None = None
    legacy_args: Mapping[str, Any] = field(default_factory=dict)
    skip_reason: str | None = None

    @property
    def macro_name(self) -> str:
        """Legacy macro invoked by the legacy driver."""
        if self.legacy_macro:
            return self.legacy_macro
        return self.native_target if self.mode is Mode.COEXISTENCE else self.legacy_id


_ENTRY_KEYS = {
    "legacy_id", "native_target", "mode", "parameter_mapping", "defaults", "preamble_sas", "post_calls",
    "legacy_macro", "legacy_args", "skip_reason",
}
_REQUIRED = ("legacy_id", "native_target", "mode")


def _entry_from_dict(raw: Any, index: int) -> BridgeMapEntry:
    if not isinstance(raw, Mapping):
        raise ParseError(f"entry #{index} is not a mapping")
    for key in _REQUIRED:
        if raw.get(key) in (None, ""):
            raise MissingRequiredField(key, index)
    unknown = sorted(set(raw) - _ENTRY_KEYS)
    if unknown:
        raise ParseError(f"entry #{index} has unknown key(s): {', '.join(map(str, unknown))}")
    try:
        mode = Mode(str(raw["mode"]).upper())
    except ValueError:
        raise ParseError(f"entry #{index}: mode must be COEXISTENCE or CONSOLIDATION") from None

    mapping = raw.get("parameter_mapping") or {}
    defaults = raw.get("defaults") or {}
    legacy_args = raw.get("legacy_args") or {}
    for name, value in (("parameter_mapping", mapping), ("defaults", defaults), ("legacy_args", legacy_args)):
        if not isinstance(value, Mapping):
            raise ParseError(f"entry #{index}: {name} must be a mapping")
    mapping = {str(k): str(v) for k, v in mapping.items()}
    targets = list(mapping.values())
    dupes = sorted({t for t in targets if targets.count(t) > 1})
    if dupes:
        raise ParseError(f"entry #{index}: several legacy parameters map to {', '.join(dupes)}")

    post = raw.get("post_calls") or []
    if isinstance(post, str):
        post = [post]
    if not isinstance(post, list):
        raise ParseError(f"entry #{index}: post_calls must be a list")
    return BridgeMapEntry(
        legacy_id=str(raw["legacy_id"]),
        native_target=str(raw["native_target"]),
        mode=mode,
        parameter_mapping=mapping,
        defaults={str(k): v for k, v in defaults.items()},
        preamble_sas=raw.get("preamble_sas"),
        post_calls=tuple(str(p) for p in post),
        legacy_macro=raw.get("legacy_macro"),
        legacy_args={str(k): v for k, v in legacy_args.items()},
        skip_reason=raw.get("skip_reason"),
    )


def bridge_map_from_data(doc: Any) -> dict[str, BridgeMapEntry]:
    if isinstance(doc, Mapping) and "entries" in doc:
        doc = doc["entries"]
    if doc is None:
        doc = []
    if not isinstance(doc, list):
        raise ParseError("bridge map must be a list of entries (or a mapping with an 'entries' list)")
    out: dict[str, BridgeMapEntry] = {}
    for i, raw in enumerate(doc):
        entry = _entry_from_dict(raw, i)
        if entry.legacy_id in out:
            raise DuplicateLegacyId(entry.legacy_id)
        out[entry.legacy_id] = entry
    return out


def load_bridge_map(path: str | Path) -> dict[str, BridgeMapEntry]:
    """Load a YAML (or JSON) bridge map keyed by legacy_id."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return bridge_map_from_data(doc)


def dump_bridge_map(entries: Iterable[BridgeMapEntry]) -> str:
    docs = []
    for e in entries:
        d: dict[str, Any] = {"legacy_id": e.legacy_id, "native_target": e.native_target, "mode": e.mode.value}
        if e.parameter_mapping:
            d["parameter_mapping"] = dict(e.parameter_mapping)
        if e.defaults:
            d["defaults"] = dict(e.defaults)
        if e.preamble_sas:
            d["preamble_sas"] = e.preamble_sas
        if e.post_calls:
            d["post_calls"] = list(e.post_calls)
        if e.legacy_macro:
            d["legacy_macro"] = e.legacy_macro
        if e.legacy_args:
            d["legacy_args"] = dict(e.legacy_args)
        if e.skip_reason:
            d["skip_reason"] = e.skip_reason
        docs.append(d)
    return yaml.safe_dump(docs, sort_keys=False, allow_unicode=True)


# -- registry -----------------------------------------------------------------

@dataclass(frozen=True)
class ParamDecl:
    name: str
    type: str = "text"
    default: Any = None
    required: bool = False


@dataclass(frozen=True)
class ReportType:
    report_type: str
    macro: str
    parameters: Mapping[str, ParamDecl] = field(default_factory=dict)
    output: str = "table"
    denominator: str | None = None
    ir_mapping: Mapping[str, Any] | None = None
    source_path: str | None = None
    hierarchy: str | None = None  # "indent": parent/child rows derived from indent levels


def _report_type_from_dict(doc: Any, source: str) -> ReportType:
    if not isinstance(doc, Mapping) or "report_type" not in doc or "macro" not in doc:
        raise ConfigError(f"{source}: registry entry needs report_type and macro")
    params = {}
    for name, decl in (doc.get("parameters") or {}).items():
        decl = decl if isinstance(decl, Mapping) else {"default": decl}
        params[str(name)] = ParamDecl(
            str(name), str(decl.get("type", "text")), decl.get("default"), bool(decl.get("required", False))
        )
    hierarchy = doc.get("hierarchy")
    if hierarchy not in (None, "indent"):
        raise ConfigError(f"{source}: hierarchy must be 'indent' when given")
    output = str(doc.get("output", "table")).lower()
    if output not in ("table", "listing", "figure"):
        raise ConfigError(f"{source}: output must be table, listing or figure")
    return ReportType(
        report_type=str(doc["report_type"]),
        macro=str(doc["macro"]),
        parameters=params,
        output=output,
        denominator=doc.get("denominator"),
        ir_mapping=doc.get("ir_mapping"),
        source_path=source,
        hierarchy=hierarchy,
    )


def load_registry(directory: str | Path) -> dict[str, ReportType]:
    """One YAML document per report type; the file name does not matter."""
    out: dict[str, ReportType] = {}
    for path in sorted(Path(directory).glob("*.y*ml")):
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        rt = _report_type_from_dict(doc, str(path))
        if rt.report_type in out:
            raise ConfigError(f"{path}: report_type {rt.report_type!r} already defined")
        out[rt.report_type] = rt
    return out


# -- study config -------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    dataset_paths: Mapping[str, str] = field(default_factory=dict)
    library_paths: tuple[str, ...] = ()
    treatment_labels: Mapping[str, str] = field(default_factory=dict)
    population_filters: Mapping[str, str] = field(default_factory=dict)
    environment: Mapping[str, str] = field(default_factory=dict)
    parameters: Mapping[str, Any] = field(default_factory=dict)
    base_dir: str | None = None

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.base_dir:
            path = Path(self.base_dir) / path
        return path


_STUDY_KEYS = {
    "dataset_paths", "library_paths", "treatment_labels", "population_filters", "environment", "parameters",
}


def study_from_dict(doc: Any, base_dir: str | None = None) -> StudyConfig:
    doc = doc or {}
    if not isinstance(doc, Mapping):
        raise ConfigError("study config must be a mapping")
    unknown = sorted(set(doc) - _STUDY_KEYS)
    if unknown:
        raise ConfigError(f"study config has unknown key(s): {', '.join(unknown)}")
    for key in ("dataset_paths", "library_paths"):
        values = doc.get(key) or ({} if key == "dataset_paths" else [])
        items = values.values() if isinstance(values, Mapping) else values
        for v in items:
            if not isinstance(v, str) or not v.strip() or "\0" in v:
                raise ConfigError(f"{key} contains an invalid path: {v!r}")
    return StudyConfig(
        dataset_paths={str(k): str(v) for k, v in (doc.get("dataset_paths") or {}).items()},
        library_paths=tuple(str(p) for p in doc.get("library_paths") or []),
        treatment_labels={str(k): str(v) for k, v in (doc.get("treatment_labels") or {}).items()},
        population_filters={str(k): str(v) for k, v in (doc.get("population_filters") or {}).items()},
        environment={str(k): str(v) for k, v in (doc.get("environment") or {}).items()},
        parameters=dict(doc.get("parameters") or {}),
        base_dir=base_dir,
    )


def load_study_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return study_from_dict(doc, str(path.parent))


# -- self audit ---------------------------------------------------------------

class Severity(str, Enum):
    ERROR = "ERROR"
    WARNING = "WARNING"


@dataclass(frozen=True)
class Finding:
    entry_id: str
    severity: Severity
    message: str


@dataclass(frozen=True)
class AuditFindings:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    @property
    def clean(self) -> bool:
        return not self.errors


def _name_problem(name: str) -> str | None:
    try:
        check_sas_name(name)
    except ResolutionError as exc:
        return str(exc)
    return None


def self_audit(
    bridge_map: Mapping[str, BridgeMapEntry],
    registry: Mapping[str, ReportType],
    study: StudyConfig,
    legacy_macros: Mapping[str, Iterable[str] | None] | Iterable[str] | None = None,
) -> AuditFindings:
    """Check that targets exist and that every mapped or defaulted name is declared.

    ``legacy_macros`` is the legacy corpus: either macro names, or a mapping from
    macro name to its declared parameter names.
    """
    if legacy_macros is not None and not isinstance(legacy_macros, Mapping):
        legacy_macros = {name: None for name in legacy_macros}
    out: list[Finding] = []

    def add(entry_id: str, sev: Severity, msg: str) -> None:
        out.append(Finding(entry_id, sev, msg))

    for eid, entry in bridge_map.items():
        declared: set[str] | None = None
        if entry.mode is Mode.CONSOLIDATION:
            rt = registry.get(entry.native_target)
            if rt is None:
                add(eid, Severity.ERROR, f"target not in registry: {entry.native_target!r}")
            else:
                declared = set(rt.parameters)
        else:
            if legacy_macros is None:
                add(eid, Severity.WARNING, "legacy corpus not supplied; coexistence target unchecked")
            elif entry.native_target not in legacy_macros:
                add(eid, Severity.ERROR, f"target not in legacy corpus: {entry.native_target!r}")
            else:
                params = legacy_macros[entry.native_target]
                declared = set(params) if params is not None else None

        if legacy_macros is not None and entry.macro_name not in legacy_macros:
            add(eid, Severity.ERROR, f"legacy macro {entry.macro_name!r} not found in legacy corpus")

        for legacy_name, native_name in entry.parameter_mapping.items():
            for nm in (legacy_name, native_name):
                problem = _name_problem(nm)
                if problem:
                    add(eid, Severity.ERROR, problem)
            if declared is not None and native_name not in declared:
                add(eid, Severity.ERROR, f"parameter_mapping target {native_name!r} is not a declared parameter")
        for name in entry.defaults:
            problem = _name_problem(name)
            if problem:
                add(eid, Severity.ERROR, problem)
            if declared is not None and name not in declared:
                add(eid, Severity.ERROR, f"default {name!r} is not a declared parameter")
        for name in entry.legacy_args:
            if name not in entry.parameter_mapping:
                add(eid, Severity.ERROR, f"legacy argument {name!r} has no parameter_mapping entry")

        if entry.mode is Mode.CONSOLIDATION and entry.native_target in registry:
            rt = registry[entry.native_target]
            supplied = set(entry.parameter_mapping.values()) | set(entry.defaults) | set(study.parameters)
            for p in rt.parameters.values():
                if p.required and p.default is None and p.name not in supplied:
                    add(eid, Severity.WARNING, f"required parameter {p.name!r} must come from call arguments")
    return AuditFindings(tuple(out))


# -- parameter resolution -----------------------------------------------------

def render_value(value: Any) -> str:
    """SAS macro-variable text for a Python value."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "Y" if value else "N"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(render_value(v) for v in value)
    return str(value)


def resolve_parameters(
    entry: BridgeMapEntry,
    study: StudyConfig,
    call_args: Mapping[str, Any] | None = None,
    strict: bool = True,
) -> dict[str, str]:
    """Merge study values, entry defaults and call arguments (highest wins) under native names.

    ``call_args`` use legacy names and are translated through ``parameter_mapping``.
    Study-level values only fill parameters the entry knows about.
    """
    call_args = dict(entry.legacy_args) | dict(call_args or {})
    translated: dict[str, Any] = {}
    for legacy_name in sorted(call_args):
        check_sas_name(legacy_name)
        native = entry.parameter_mapping.get(legacy_name)
        if native is None:
            if strict:
                raise UnmappedLegacyParameter(legacy_name)
            log.warning("passing unmapped legacy parameter %s through unchanged", legacy_name)
            native = legacy_name
        translated[native] = call_args[legacy_name]

    universe = set(entry.parameter_mapping.values()) | set(entry.defaults) | set(translated)
    resolved: dict[str, Any] = {}
    for name in sorted(universe):
        check_sas_name(name)
        if name in translated:
            resolved[name] = translated[name]
        elif name in entry.defaults:
            resolved[name] = entry.defaults[name]
        elif name in study.parameters:
            resolved[name] = study.parameters[name]
    return {k: render_value(v) for k, v in sorted(resolved.items())}


# -- plans --------------------------------------------------------------------

@dataclass(frozen=True)
class ExecutionPlan:
    entry_id: str
    side: Side
    program_text: str
    expected_artifacts: tuple[tuple[ArtifactKind, str], ...]
    resolved_params: Mapping[str, str]

    def __post_init__(self) -> None:
        if not self.program_text:
            raise ValueError("program_text must not be empty")
        if not self.expected_artifacts:
            raise ValueError("expected_artifacts must not be empty")

    def artifact(self, kind: ArtifactKind) -> str | None:
        return next((p for k, p in self.expected_artifacts if k is kind), None)

    @property
    def out_dir(self) -> str:
        return str(Path(self.expected_artifacts[0][1]).parent)


def sas_value(text: str) -> str:
    if any(ch.isspace() for ch in text):
        return '"' + text.replace('"', '""') + '"'
    return text


def _invocation(macro: str, args: Iterable[tuple[str, str]]) -> str:
    inner = ", ".join(f"{k}={v}" for k, v in args)
    return f"%{macro}({inner});"


def _program(preamble: str | None, body: list[str], post_calls: Iterable[str]) -> str:
    parts = []
    if preamble:
        parts.append(preamble.rstrip("\n"))
    parts.extend(body)
    parts.extend(p.rstrip("\n") for p in post_calls)
    return "\n".join(parts) + "\n"


def artifact_dir(out_root: str | Path, entry_id: str, side: Side) -> Path:
    return Path(out_root) / entry_id / side.value.lower()


def _output_kind(registry: Mapping[str, ReportType] | None, entry: BridgeMapEntry) -> str:
    if registry and entry.native_target in registry:
        return registry[entry.native_target].output
    return "table"


def build_legacy_plan(
    entry: BridgeMapEntry,
    study: StudyConfig,
    call_args: Mapping[str, Any] | None = None,
    *,
    registry: Mapping[str, ReportType] | None = None,
    out_root: str | Path = "out",
) -> ExecutionPlan:
    resolved = resolve_parameters(entry, study, call_args)
    args = dict(entry.legacy_args) | dict(call_args or {})
    legacy_args = [(k, sas_value(render_value(args[k]))) for k in sorted(args)]
    program = _program(entry.preamble_sas, [_invocation(entry.macro_name, legacy_args)], entry.post_calls)
    d = artifact_dir(out_root, entry.legacy_id, Side.LEGACY)
    main = (
        (ArtifactKind.FIGURE, str(d / f"{entry.legacy_id}.png"))
        if _output_kind(registry, entry) == "figure"
        else (ArtifactKind.RTF, str(d / f"{entry.legacy_id}.rtf"))
    )
    artifacts = (main, (ArtifactKind.LOG, str(d / f"{entry.legacy_id}.log")))
    return ExecutionPlan(entry.legacy_id, Side.LEGACY, program, artifacts, resolved)


def build_native_plan(
    entry: BridgeMapEntry,
    study: StudyConfig,
    call_args: Mapping[str, Any] | None = None,
    *,
    registry: Mapping[str, ReportType] | None = None,
    out_root: str | Path = "out",
) -> ExecutionPlan:
    resolved = resolve_parameters(entry, study, call_args)
    d = artifact_dir(out_root, entry.legacy_id, Side.NATIVE)
    ir_path = str(d / f"{entry.legacy_id}.json")

    if entry.mode is Mode.CONSOLIDATION and registry and entry.native_target in registry:
        macro = registry[entry.native_target].macro
    else:
        macro = entry.native_target
    body = [f"%let {k}={sas_value(v)};" for k, v in resolved.items()]
    body.append(_invocation(macro, [(k, f"&{k}") for k in resolved]))
    if entry.mode is Mode.COEXISTENCE:
        body.append(f"%tp_ir_capture(entry={entry.legacy_id}, out={sas_value(ir_path)});")
    program = _program(entry.preamble_sas, body, entry.post_calls)

    artifacts: list[tuple[ArtifactKind, str]] = [(ArtifactKind.IR_JSON, ir_path)]
    if _output_kind(registry, entry) == "figure":
        artifacts.append((ArtifactKind.FIGURE, str(d / f"{entry.legacy_id}.png")))
    artifacts.append((ArtifactKind.LOG, str(d / f"{entry.legacy_id}.log")))
    return ExecutionPlan(entry.legacy_id, Side.NATIVE, program, tuple(artifacts), resolved)


# -- execution adapters -------------------------------------------------------

@dataclass(frozen=True)
class ExecutionResult:
    plan: ExecutionPlan
    exit_status: int
    artifacts: Mapping[ArtifactKind, str]
    diagnostics: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.exit_status == 0


class Executor(Protocol):
    def run(self, plan: ExecutionPlan) -> ExecutionResult: ...


def _collect(plan: ExecutionPlan, status: int, diags: list[str]) -> ExecutionResult:
    found = {}
    for kind, path in plan.expected_artifacts:
        if Path(path).exists():
            found[kind] = path
        elif kind is not ArtifactKind.LOG:
            diags.append(f"missing artifact {kind.value}: {path}")
            status = status or 1
    return ExecutionResult(plan, status, found, tuple(diags))


class FixtureExecutor:
    """Stand-in for a SAS runtime: copies ``fixtures/<entry_id>/<side>/*`` into the output directory."""

    def __init__(self, fixtures_dir: str | Path) -> None:
        self.fixtures_dir = Path(fixtures_dir)

    def run(self, plan: ExecutionPlan) -> ExecutionResult:
        out = Path(plan.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "program.sas").write_text(plan.program_text, encoding="utf-8")
        src = self.fixtures_dir / plan.entry_id / plan.side.value.lower()
        diags: list[str] = []
        status = 0
        if not src.is_dir():
            diags.append(f"missing fixture directory: {src}")
            status = 1
        else:
            for f in sorted(src.iterdir()):
                if f.is_file():
                    shutil.copyfile(f, out / f.name)
        log_path = plan.artifact(ArtifactKind.LOG)
        if log_path and not Path(log_path).exists():
            Path(log_path).write_text(
                "NOTE: fixture execution\n" + "".join(f"ERROR: {d}\n" for d in diags), encoding="utf-8"
            )
        return _collect(plan, status, diags)


class ShellExecutor:
    """Runs a command such as ``sas -sysin {program} -log {log}`` for each plan."""

    def __init__(self, command: str, timeout: float | None = None) -> None:
        self.command = command
        self.timeout = timeout

    def run(self, plan: ExecutionPlan) -> ExecutionResult:
        out = Path(plan.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        program = out / "program.sas"
        program.write_text(plan.program_text, encoding="utf-8")
        log_path = plan.artifact(ArtifactKind.LOG) or str(out / "run.log")
        cmd = self.command.format(program=shlex.quote(str(program)), log=shlex.quote(log_path), out=shlex.quote(str(out)))
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            return _collect(plan, 124, ["command timed out"])
        diags = [line for line in proc.stderr.splitlines() if line.strip()][:20]
        return _collect(plan, proc.returncode, diags)
