"""Append-only NDJSON audit trail and per-execution manifests with SHA-256 digests."""

from __future__ import annotations

import fcntl
import getpass
import hashlib
import json
import os
import platform
import sys
import threading
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from tflparity.errors import MissingInput

EMPTY_SHA256 = hashlib.sha256(b"").hexdigest()


class Status(str, Enum):
    STARTED = "STARTED"
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _iso(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def _parse_iso(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def current_user() -> str:
    try:
        return getpass.getuser()
    except Exception:  # no passwd entry in some containers
        return os.environ.get("USER", "unknown")


@dataclass(frozen=True)
class AuditRecord:
    event_type: str
    step_name: str
    status: Status
    layer: str = ""
    comments: str = ""
    user_id: str = field(default_factory=current_user)
    timestamp: datetime = field(default_factory=utc_now)

    def to_dict(self) -> dict:
        return {
            "timestamp": _iso(self.timestamp),
            "user_id": self.user_id,
            "event_type": self.event_type,
            "step_name": self.step_name,
            "status": Status(self.status).value,
            "layer": self.layer,
            "comments": self.comments,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AuditRecord":
        return cls(
            event_type=doc["event_type"], step_name=doc["step_name"], status=Status(doc["status"]),
            layer=doc.get("layer", ""), comments=doc.get("comments", ""), user_id=doc["user_id"],
            timestamp=_parse_iso(doc["timestamp"]),
        )


@dataclass(frozen=True)
class Ack:
    line_number: int
    clock_skew: bool


class AuditLog:
    """One writer per file: a thread lock inside the process, ``flock`` across processes.

    Records are fsync'd before ``append`` returns. A record whose timestamp is
    earlier than the last one written is still written, with ``clock_skew`` set.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.appended = 0  # records written through this instance
        self.path.touch(exist_ok=True)

    def _tail(self, fh) -> tuple[int, datetime | None]:
        fh.seek(0)
        data = fh.read()
        lines = data.rstrip(b"\n").rsplit(b"\n", 1)
        last = None
        if data.strip():
            try:
                last = _parse_iso(json.loads(lines[-1])["timestamp"])
            except (ValueError, KeyError):
                pass
        return data.count(b"\n"), last

    def append(self, record: AuditRecord) -> Ack:
        with self._lock, open(self.path, "a+b") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
            try:
                count, last = self._tail(fh)
                skew = last is not None and record.timestamp < last
                doc = record.to_dict()
                if skew:
                    doc["clock_skew"] = True
                line = json.dumps(doc, sort_keys=False, ensure_ascii=True) + "\n"
                fh.seek(0, os.SEEK_END)
                fh.write(line.encode("ascii"))
                fh.flush()
                os.fsync(fh.fileno())
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
            self.appended += 1
        return Ack(count + 1, skew)

    def records(self) -> list[dict]:
        with open(self.path, encoding="ascii") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def __len__(self) -> int:
        return len(self.records())


def log_step(log: AuditLog | None, step: str, status: Status, *, event: str = "STEP", layer: str = "",
             comments: str = "") -> None:
    if log is not None:
        log.append(AuditRecord(event, step, status, layer, comments))


# -- manifests ----------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class FileDigest:
    path: str
    sha256: str


@dataclass(frozen=True)
class ExecutionManifest:
    execution_id: str
    entry_id: str
    inputs: tuple[FileDigest, ...]
    resolved_params: dict
    component_versions: dict
    session_meta: dict
    outputs: tuple[FileDigest, ...]

    def to_dict(self) -> dict:
        return {
            "execution_id": self.execution_id,
            "entry_id": self.entry_id,
            "inputs": [asdict(d) for d in self.inputs],
            "resolved_params": dict(sorted(self.resolved_params.items())),
            "component_versions": dict(sorted(self.component_versions.items())),
            "session_meta": dict(sorted(self.session_meta.items())),
            "outputs": [asdict(d) for d in self.outputs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExecutionManifest":
        return cls(
            doc["execution_id"], doc["entry_id"],
            tuple(FileDigest(d["path"], d["sha256"]) for d in doc["inputs"]),
            dict(doc.get("resolved_params", {})), dict(doc.get("component_versions", {})),
            dict(doc.get("session_meta", {})),
            tuple(FileDigest(d["path"], d["sha256"]) for d in doc["outputs"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExecutionManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _digests(files: Iterable[str | Path]) -> tuple[FileDigest, ...]:
    out = []
    for f in sorted({str(Path(p)) for p in files}):
        if not Path(f).is_file():
            raise MissingInput(f)
        out.append(FileDigest(f, sha256_file(f)))
    return tuple(out)


def legacy_macro_version(source: str | Path) -> str:
    """Version label for a legacy macro: the content hash of its source file."""
    return "sha256:" + sha256_file(source)


def session_meta() -> dict:
    from tflparity import __version__

    return {"python": sys.version.split()[0], "platform": platform.platform(), "tflparity": __version__,
            "user": current_user()}


def build_manifest(
    plan,
    input_files: Iterable[str | Path],
    output_files: Iterable[str | Path],
    component_versions: Mapping[str, str] | None = None,
    meta: Mapping | None = None,
) -> ExecutionManifest:
    """Hash inputs and outputs for one execution of ``plan`` (an ``ExecutionPlan``)."""
    from tflparity import __version__

    versions = {"tflparity": __version__, **(component_versions or {})}
    return ExecutionManifest(
        execution_id=str(uuid.uuid4()),
        entry_id=plan.entry_id,
        inputs=_digests(input_files),
        resolved_params=dict(plan.resolved_params),
        component_versions=versions,
        session_meta=dict(meta if meta is not None else session_meta()),
        outputs=_digests(output_files),
    )


class FileStatus(str, Enum):
    MATCH = "MATCH"
    MISMATCH = "MISMATCH"
    MISSING = "MISSING"


@dataclass(frozen=True)
class VerifyReport:
    entries: tuple[tuple[str, str, FileStatus], ...]  # (role, path, status)

    @property
    def ok(self) -> bool:
        return all(s is FileStatus.MATCH for _, _, s in self.entries)

    def with_status(self, status: FileStatus) -> list[str]:
        return [p for _, p, s in self.entries if s is status]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "files": [{"role": r, "path": p, "status": s.value} for r, p, s in self.entries]}


def verify_manifest(manifest: ExecutionManifest | str | Path) -> VerifyReport:
    if not isinstance(manifest, ExecutionManifest):
        manifest = ExecutionManifest.load(manifest)
    out = []
    for role, digests in (("input", manifest.inputs), ("output", manifest.outputs)):
        for d in digests:
            if not Path(d.path).is_file():
                status = FileStatus.MISSING
            elif sha256_file(d.path) == d.sha256:
                status = FileStatus.MATCH
            else:
                status = FileStatus.MISMATCH
            out.append((role, d.path, status))
    return VerifyReport(tuple(out))
