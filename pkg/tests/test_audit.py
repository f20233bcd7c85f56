import hashlib
import json
import threading
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from tflparity.audit import (
    EMPTY_SHA256,
    AuditLog,
    AuditRecord,
    ExecutionManifest,
    FileStatus,
    Status,
    build_manifest,
    legacy_macro_version,
    sha256_file,
    verify_manifest,
)
from tflparity.bridge import ArtifactKind, ExecutionPlan, Side
from tflparity.errors import MissingInput


def _plan():
    return ExecutionPlan("t_dm_01", Side.LEGACY, "%dm();\n", ((ArtifactKind.LOG, "/tmp/x.log"),),
                         {"dsin": "adam.adsl"})


def test_empty_digest_constant():
    assert EMPTY_SHA256 == hashlib.sha256(b"").hexdigest()


@given(st.binary(max_size=300_000))
def test_sha256_file_matches_hashlib(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("h") / "f.bin"
    p.write_bytes(data)
    assert sha256_file(p) == hashlib.sha256(data).hexdigest()


class TestAuditLog:
    def test_records_round_trip(self, tmp_path):
        log = AuditLog(tmp_path / "a" / "audit.ndjson")
        rec = AuditRecord("STEP", "parse", Status.SUCCESS, "legacy", "ok \u00e9", user_id="tester")
        ack = log.append(rec)
        assert ack.line_number == 1 and not ack.clock_skew
        raw = (tmp_path / "a" / "audit.ndjson").read_bytes()
        assert raw.isascii() and raw.endswith(b"\n")
        back = AuditRecord.from_dict(log.records()[0])
        assert back == rec
        assert log.records()[0]["timestamp"].endswith("Z")

    def test_clock_skew_is_flagged_not_dropped(self, tmp_path):
        log = AuditLog(tmp_path / "audit.ndjson")
        now = datetime.now(timezone.utc)
        log.append(AuditRecord("STEP", "a", Status.STARTED, timestamp=now))
        ack = log.append(AuditRecord("STEP", "b", Status.SUCCESS, timestamp=now - timedelta(seconds=5)))
        assert ack == type(ack)(2, True)
        assert log.records()[1]["clock_skew"] is True and len(log) == 2

    def test_threads_do_not_interleave(self, tmp_path):
        log = AuditLog(tmp_path / "audit.ndjson")

        def work(k):
            for i in range(25):
                log.append(AuditRecord("STEP", f"{k}:{i}", Status.SUCCESS))

        threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        lines = (tmp_path / "audit.ndjson").read_text().splitlines()
        assert len(lines) == 100 == log.appended
        assert all(json.loads(line)["event_type"] == "STEP" for line in lines)

    def test_reopening_appends(self, tmp_path):
        AuditLog(tmp_path / "a.ndjson").append(AuditRecord("E", "x", Status.STARTED))
        assert AuditLog(tmp_path / "a.ndjson").append(AuditRecord("E", "y", Status.SUCCESS)).line_number == 2


class TestManifest:
    def test_build_and_verify(self, tmp_path):
        src, out, empty = tmp_path / "in.sas", tmp_path / "out.rtf", tmp_path / "empty.txt"
        src.write_text("%macro m; %mend;")
        out.write_bytes(b"{\\rtf1}")
        empty.write_bytes(b"")
        m = build_manifest(_plan(), [src, empty], [out], {"m": legacy_macro_version(src)}, meta={"k": "v"})
        assert m.resolved_params == {"dsin": "adam.adsl"} and m.session_meta == {"k": "v"}
        assert m.component_versions["m"] == "sha256:" + sha256_file(src)
        assert dict((d.path, d.sha256) for d in m.inputs)[str(empty)] == EMPTY_SHA256
        path = m.write(tmp_path / "manifest.json")
        assert ExecutionManifest.load(path) == m
        assert verify_manifest(path).ok

        out.write_bytes(b"{\\rtf1 changed}")
        src.unlink()
        report = verify_manifest(m)
        assert not report.ok
        assert report.with_status(FileStatus.MISMATCH) == [str(out)]
        assert report.with_status(FileStatus.MISSING) == [str(src)]
        assert report.to_dict()["files"][0]["role"] == "input"

    def test_missing_input_raises(self, tmp_path):
        with pytest.raises(MissingInput):
            build_manifest(_plan(), [tmp_path / "nope"], [])

    def test_default_session_meta(self, tmp_path):
        m = build_manifest(_plan(), [], [])
        assert {"python", "platform", "tflparity", "user"} <= set(m.session_meta)
        assert len(m.execution_id) == 36
