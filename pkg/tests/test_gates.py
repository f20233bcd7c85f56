import json
import shutil

import pytest
import yaml

from tflparity.compare import CellDiff, ComparisonReport, DivergenceCategory, Verdict
from tflparity.errors import ConfigError
from tflparity.gates import (
    GateId,
    GateStatus,
    TriageClass,
    harness_config_from_dict,
    load_harness_config,
    run_gates,
    triage,
)
from tflparity.harness import HarnessContext, run_entry
from tflparity.bridge import FixtureExecutor, StudyConfig, load_bridge_map, load_registry
from tflparity.selfcheck import CHECKS, run_checks
from tflparity.synth import build_workspace


def _diff(cat):
    return CellDiff((1, 1), (2, 2), "1", "2", 1.0, cat)


class TestTriage:
    def test_classes(self):
        reports = [
            ComparisonReport("d", Verdict.FAIL, 5, 4, (_diff(DivergenceCategory.ADSL_DENOMINATOR),)),
            ComparisonReport("c", Verdict.FAIL, 5, 3, (_diff(DivergenceCategory.ZERO_FILL),) * 2),
            ComparisonReport("b", Verdict.ERROR, error="parameter resolution error: WHO"),
            ComparisonReport("a", Verdict.ERROR, error="missing fixture directory"),
            ComparisonReport("e", Verdict.PASS, 5, 5),
        ]
        got = {t.entry_id: t.triage_class for t in triage(reports)}
        assert got == {"a": TriageClass.INFRASTRUCTURE, "b": TriageClass.PARAMETER,
                       "c": TriageClass.CONTENT, "d": TriageClass.SEMANTIC}

    def test_diagnostics_feed_classification(self):
        report = ComparisonReport("x", Verdict.ERROR, error="exit 1")
        assert triage([report])[0].triage_class is TriageClass.INFRASTRUCTURE
        items = triage([report], {"x": ["Unmapped legacy parameter FOO"]})
        assert items[0].triage_class is TriageClass.PARAMETER


BASE = {"bridge_map": "b.yaml", "study_config": "s.yaml", "registry_dir": "reg", "fixtures_dir": "fx",
        "output_dir": "out"}


class TestConfig:
    def test_relative_paths(self, tmp_path, monkeypatch):
        monkeypatch.delenv("TFLPARITY_OUT", raising=False)
        cfg = harness_config_from_dict(BASE | {"epsilon": 0.5}, tmp_path)
        assert cfg.output_dir == tmp_path / "out" and cfg.default_epsilon == 0.5 and cfg.epsilon == {}

    def test_env_overrides_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TFLPARITY_OUT", str(tmp_path / "elsewhere"))
        assert harness_config_from_dict(BASE, tmp_path).output_dir == tmp_path / "elsewhere"

    def test_per_entry_epsilon(self, tmp_path):
        cfg = harness_config_from_dict(BASE | {"epsilon": {"default": 0.1, "t1": 0.01}}, tmp_path)
        assert cfg.default_epsilon == 0.1 and cfg.epsilon == {"t1": 0.01}

    @pytest.mark.parametrize("doc", [
        ["x"],
        {k: v for k, v in BASE.items() if k != "registry_dir"},
        BASE | {"surprise": 1},
        BASE | {"output_dir": ""},
        BASE | {"epsilon": {"default": -1}},
        BASE | {"epsilon": {"default": "big"}},
        BASE | {"epsilon": ["x"]},
        BASE | {"sample_entries": "t1"},
    ])
    def test_rejects(self, tmp_path, doc):
        with pytest.raises(ConfigError):
            harness_config_from_dict(doc, tmp_path)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_harness_config(tmp_path / "missing.yaml")
        (tmp_path / "bad.yaml").write_text("a: [")
        with pytest.raises(ConfigError):
            load_harness_config(tmp_path / "bad.yaml")


def test_selfcheck_suite_passes():
    results = run_checks()
    assert [r.name for r in results] == sorted(CHECKS)
    assert all(r.passed for r in results), [r.detail for r in results if not r.passed]


def test_selfcheck_reports_crashes(monkeypatch):
    monkeypatch.setitem(CHECKS, "boom", lambda: 1 / 0)
    (result,) = run_checks(["boom"])
    assert not result.passed and result.detail.startswith("ZeroDivisionError")


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv("TFLPARITY_OUT", raising=False)

    def make(**kwargs):
        return build_workspace(tmp_path / "ws", kinds=["DEMOGRAPHICS", "AE_SUMMARY", "LISTING"], seed=9, **kwargs)
    return make


def _status(run):
    return "".join(r.status.value[0] for r in run.results)


class TestRunGates:
    def test_clean_run_writes_bundle(self, workspace):
        run = run_gates(load_harness_config(workspace()))
        assert _status(run) == "PPPPPPP" and run.exit_code == 0
        out = workspace().parent / "out"
        for name in ("summary.csv", "summary.json", "parity.png", "categories.png", "gate_report.json",
                     "audit.ndjson"):
            assert (out / name).is_file(), name
        assert (out / "parity.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        doc = json.loads((out / "gate_report.json").read_text())
        assert doc["exit_code"] == 0 and len(doc["reports"]["G"]) == 3
        assert doc["audit_records"] == len((out / "audit.ndjson").read_text().splitlines())

    def test_through_stops_early(self, workspace):
        run = run_gates(load_harness_config(workspace()), "D", write_outputs=False)
        assert [r.gate for r in run.results] == [GateId.A, GateId.B, GateId.C, GateId.D]
        assert run.audit_records == 0

    def test_sample_failure_triaged_and_blocks_full_run(self, workspace):
        cfg = load_harness_config(workspace(inject={"t_dm_01": "ROW_LABEL_DRIFT"}))
        run = run_gates(cfg)
        assert _status(run) == "PPPPFFS" and run.exit_code == 1
        assert [t.entry_id for t in run.triage_items] == ["t_dm_01"]
        assert run.triage_items[0].triage_class is TriageClass.CONTENT

    def test_force_runs_full_matrix(self, workspace):
        cfg = load_harness_config(workspace(inject={"t_ae_01": "ADSL_DENOMINATOR"}))
        run = run_gates(cfg, force=True, jobs=2)
        assert _status(run) == "PPPPFFF"
        assert run.triage_items[0].triage_class is TriageClass.SEMANTIC
        verdicts = {r.entry_id: r.verdict for r in run.reports["G"]}
        assert verdicts == {"t_dm_01": Verdict.PASS, "t_ae_01": Verdict.FAIL, "l_ae_01": Verdict.PASS}

    def test_missing_fixture_is_infrastructure(self, workspace):
        path = workspace()
        shutil.rmtree(path.parent / "fixtures" / "t_ae_01")
        run = run_gates(load_harness_config(path), "F")
        assert _status(run) == "PPPPFF"
        assert run.triage_items[0].triage_class is TriageClass.INFRASTRUCTURE


class TestHarness:
    def _ctx(self, ws, **overrides):
        root = ws.parent
        study = StudyConfig(parameters={"popfl": "SAFFL"})
        entries = load_bridge_map(root / "bridge_map.yaml")
        entries.update(overrides)
        return HarnessContext(entries, load_registry(root / "registry"), study,
                              FixtureExecutor(root / "fixtures"), root / "out")

    def test_skip_reason(self, workspace):
        from dataclasses import replace

        ws = workspace()
        entry = load_bridge_map(ws.parent / "bridge_map.yaml")["t_ae_01"]
        ctx = self._ctx(ws, t_ae_01=replace(entry, skip_reason="retired"))
        outcome = run_entry(ctx, "t_ae_01")
        assert outcome.report.verdict is Verdict.SKIP and outcome.report.error == "retired"

    def test_resolution_error(self, workspace):
        ctx = self._ctx(workspace())
        outcome = run_entry(ctx, "t_dm_01", {"BOGUS": "1"})
        assert outcome.report.verdict is Verdict.ERROR
        assert "parameter resolution error" in outcome.report.error

    def test_writes_comparison_and_manifests(self, workspace):
        ws = workspace()
        outcome = run_entry(self._ctx(ws), "l_ae_01")
        assert outcome.report.verdict is Verdict.PASS and outcome.report.kind == "listing"
        assert len(outcome.manifests) == 2
        doc = json.loads((ws.parent / "out" / "l_ae_01" / "comparison.json").read_text())
        assert doc["verdict"] == "PASS"
