import json
from pathlib import Path

import pytest
import yaml

from tflparity.cli import main
from tflparity.ir.render import to_json
from tflparity.synth import FixtureSpec, ReportKind, build_workspace, generate_pair


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json")
    return code, json.loads(out)


@pytest.fixture
def pair_dir(tmp_path, capsys):
    assert main(["synth", "make", "--kind", "demographics", "--seed", "4", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    return tmp_path


def _paths(root, name="demographics_4"):
    return str(root / "legacy" / f"{name}.rtf"), str(root / "native" / f"{name}.json")


class TestUsage:
    def test_no_args_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 2 and "usage" in err

    def test_unknown_choice(self, capsys):
        assert run(capsys, "compare", "table", "a", "b", "--denominator", "ADAE")[0] == 2

    def test_missing_file_is_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "ir", "validate", str(tmp_path / "nope.json"))
        assert code == 2 and err.startswith("error:")


class TestSynthAndCompare:
    def test_make_payload(self, capsys, tmp_path):
        code, doc = run_json(capsys, "synth", "make", "--kind", "ae_summary", "--out", str(tmp_path),
                             "--preset", "CDISCPILOT01", "--inject", "zero_fill", "--name", "x")
        assert code == 0 and doc["injected"] == ["ZERO_FILL"] and doc["cells"] == 81
        assert Path(doc["legacy"]).name == "x.rtf"

    def test_compare_table_pass(self, capsys, pair_dir):
        legacy, native = _paths(pair_dir)
        out = pair_dir / "r.json"
        code, doc = run_json(capsys, "compare", "table", legacy, native, "--out", str(out))
        assert code == 0 and doc["verdict"] == "PASS" and doc["entry_id"] == "demographics_4"
        assert json.loads(out.read_text())["parity_pct"] == 100.0

    def test_compare_table_fail(self, capsys, tmp_path):
        main(["synth", "make", "--kind", "DEMOGRAPHICS", "--out", str(tmp_path), "--inject", "ROW_LABEL_DRIFT"])
        capsys.readouterr()
        code, out, _ = run(capsys, "compare", "table", *_paths(tmp_path, "demographics_0"))
        assert code == 1 and "FAIL" in out and "ROW_LABEL_DRIFT" in out

    def test_compare_listing(self, capsys, tmp_path):
        main(["synth", "make", "--kind", "LISTING", "--out", str(tmp_path)])
        capsys.readouterr()
        code, doc = run_json(capsys, "compare", "listing", *_paths(tmp_path, "listing_0"))
        assert code == 0 and doc["kind"] == "listing"

    def test_compare_figure(self, capsys, tmp_path):
        (tmp_path / "a.png").write_bytes(b"x" * 100)
        (tmp_path / "b.png").write_bytes(b"x" * 50)
        assert run(capsys, "compare", "figure", str(tmp_path / "a.png"), str(tmp_path / "b.png"))[0] == 1
        assert run(capsys, "compare", "figure", str(tmp_path / "a.png"), str(tmp_path / "c.png"))[0] == 2

    def test_batch(self, capsys, tmp_path, monkeypatch):
        monkeypatch.delenv("TFLPARITY_OUT", raising=False)
        for kind in ("DEMOGRAPHICS", "LISTING"):
            main(["synth", "make", "--kind", kind, "--out", str(tmp_path)])
        (tmp_path / "native" / "orphan.json").write_text("{}")
        capsys.readouterr()
        code, doc = run_json(capsys, "compare", "batch", str(tmp_path), "--listing", "listing_0")
        assert code == 2
        verdicts = {r["entry_id"]: r["verdict"] for r in doc["rows"]}
        assert verdicts == {"demographics_0": "PASS", "listing_0": "PASS", "orphan": "ERROR"}
        report = tmp_path / "report"
        assert (report / "summary.csv").is_file() and (report / "parity.png").is_file()
        assert (report / "reports" / "orphan.json").is_file()

    def test_batch_env_output(self, capsys, pair_dir, monkeypatch, tmp_path_factory):
        target = tmp_path_factory.mktemp("env")
        monkeypatch.setenv("TFLPARITY_OUT", str(target))
        assert run(capsys, "compare", "batch", str(pair_dir))[0] == 0
        assert (target / "summary.json").is_file()


class TestIrAndRtf:
    def test_validate_and_render(self, capsys, pair_dir):
        _, native = _paths(pair_dir)
        code, doc = run_json(capsys, "ir", "validate", native)
        assert code == 0 and doc == {"valid": True, "violations": []}
        code, out, _ = run(capsys, "ir", "render", native, "--format", "html", "--document")
        assert code == 0 and out.lstrip().lower().startswith("<!doctype html")
        target = pair_dir / "out.rtf"
        assert run(capsys, "ir", "render", native, "--format", "rtf", "--out", str(target))[0] == 0
        assert target.read_bytes().startswith(b"{\\rtf1")

    def test_validate_reports_violations(self, capsys, tmp_path):
        grid = generate_pair(FixtureSpec(ReportKind.EFFICACY)).grid
        doc = json.loads(to_json(grid))
        doc["cells"].append(dict(doc["cells"][0]))
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        code, out = run_json(capsys, "ir", "validate", str(path))
        assert code == 1 and not out["valid"] and out["violations"]

    def test_lint(self, capsys, tmp_path):
        main(["synth", "make", "--kind", "AE_SOC_PT", "--rows", "30", "--out", str(tmp_path)])
        capsys.readouterr()
        code, doc = run_json(capsys, "ir", "lint", _paths(tmp_path, "ae_soc_pt_0")[1])
        assert code == 0 and doc["passed"] and doc["checked"] > 0

    def test_rtf_parse(self, capsys, pair_dir):
        legacy, native = _paths(pair_dir)
        code, out, _ = run(capsys, "rtf", "parse", legacy)
        tables = json.loads(out)
        rows = generate_pair(FixtureSpec(ReportKind.DEMOGRAPHICS, seed=4)).grid.text_rows()
        assert code == 0 and tables == [[list(r) for r in rows]]


class TestBridgeGatesAudit:
    @pytest.fixture
    def ws(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("TFLPARITY_OUT", raising=False)
        code, doc = run_json(capsys, "synth", "workspace", "--out", str(tmp_path / "ws"), "--seed", "3",
                             "--kind", "demographics", "--kind", "listing")
        assert code == 0
        return Path(doc["harness_config"]).parent

    def test_bridge_audit(self, capsys, ws):
        args = ["bridge", "audit", "--map", str(ws / "bridge_map.yaml"), "--study", str(ws / "study.yaml"),
                "--registry", str(ws / "registry"), "--legacy-dir", str(ws / "legacy")]
        code, doc = run_json(capsys, *args)
        assert code == 0 and doc["errors"] == 0
        (ws / "legacy" / "dm_table.sas").unlink()
        code, doc = run_json(capsys, *args)
        assert code == 1 and any("dm_table" in f["message"] for f in doc["findings"])

    def test_bridge_resolve(self, capsys, ws):
        args = ["bridge", "resolve", "t_dm_01", "--map", str(ws / "bridge_map.yaml"),
                "--study", str(ws / "study.yaml")]
        code, doc = run_json(capsys, *args, "--arg", "TRT=TRT01P")
        assert code == 0 and doc == {"dsin": "adam.adsl", "trtvar": "TRT01P", "popfl": "SAFFL"}
        assert run(capsys, *args, "--arg", "NOPE=1")[0] == 2
        assert run(capsys, *args, "--arg", "NOPE=1", "--lenient")[0] == 0
        assert run(capsys, *args, "--arg", "novalue")[0] == 2
        assert run(capsys, "bridge", "resolve", "ghost", *args[3:])[0] == 2

    def test_gates_and_audit_verify(self, capsys, ws):
        code, doc = run_json(capsys, "gates", "run", "--config", str(ws / "harness.yaml"))
        assert code == 0 and [g["status"] for g in doc["gates"]] == ["PASS"] * 7
        manifests = sorted((ws / "out").glob("*/*/manifest.json"))
        assert len(manifests) == 4
        assert run(capsys, "audit", "verify", *map(str, manifests))[0] == 0
        (ws / "out" / "l_ae_01" / "native" / "l_ae_01.json").write_text("{}")
        code, out, _ = run(capsys, "audit", "verify", *map(str, manifests))
        assert code == 1 and out.count("MISMATCH") == 1

    def test_gates_through_and_failure(self, capsys, ws):
        code, out, _ = run(capsys, "gates", "run", "--config", str(ws / "harness.yaml"), "--through", "b")
        assert code == 0 and out.splitlines() == ["Gate A PASS", "Gate B PASS"]
        doc = yaml.safe_load((ws / "bridge_map.yaml").read_text())
        doc["entries"][0]["native_target"] = "GHOST"
        (ws / "bridge_map.yaml").write_text(yaml.safe_dump(doc))
        assert run(capsys, "gates", "run", "--config", str(ws / "harness.yaml"))[0] == 1


def test_analyze_library(capsys, tmp_path):
    corpus = Path(__file__).parent / "fixtures" / "sas_corpus"
    code, out, _ = run(capsys, "analyze", "library", str(corpus), "--out", str(tmp_path))
    assert code == 0 and "cycles: dp_recurse_a -> dp_recurse_b" in out
    assert {p.name for p in tmp_path.iterdir()} == {"inventory.json", "inventory.csv", "callgraph.tgf"}
    code, doc = run_json(capsys, "analyze", "library", str(corpus), "--hub-threshold", "100")
    assert doc["diagnostics"]["hubs"] == []
