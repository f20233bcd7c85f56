"""Exit criteria. Each test carries ``@pytest.mark.acceptance(n)``; the terminal summary prints one line per criterion."""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from multiprocessing import get_context
from pathlib import Path

import networkx as nx
import pytest
import yaml

from oracles import brute_force_cycles, random_grid
from tflparity.analyzer import analyze_corpus, enumerate_cycles
from tflparity.audit import AuditLog, AuditRecord, FileStatus, Status, verify_manifest
from tflparity.bridge import BridgeMapEntry, Mode, StudyConfig, check_sas_name, resolve_parameters
from tflparity.cli import main
from tflparity.compare import INJECTABLE, Verdict, compare_listing, compare_table
from tflparity.errors import CategoryNotApplicable, NameTooLong
from tflparity.gates import GateStatus, load_harness_config, run_gates
from tflparity.ir.model import (
    Cell,
    CellGrid,
    CellSpec,
    CellType,
    ColSpec,
    Dimension,
    ElementType,
    IrMappingConfig,
    RowSpec,
    Rule,
    StatRecord,
    build_grid,
    check_hierarchy_consistency,
    hierarchy_from_indent,
    reconcile,
    validate_grid,
)
from tflparity.ir.render import to_json
from tflparity.rtf import parse_rtf
from tflparity.synth import FixtureSpec, ReportKind, build_workspace, cdisc_pilot_spec, generate_pair, inject_divergence

FIXTURES = Path(__file__).parent / "fixtures"
acceptance = pytest.mark.acceptance


def _compare(pair):
    table = parse_rtf(pair.rtf)[0]
    fn = compare_listing if pair.is_listing else compare_table
    return fn(table, pair.grid, pair.compare_options())


# -- 1 -------------------------------------------------------------------------

FULL_SCALE = {
    ReportKind.DEMOGRAPHICS: 182,
    ReportKind.AE_SUMMARY: 81,
    ReportKind.AE_SOC_PT: 2070,
    ReportKind.EFFICACY: 16,
    ReportKind.KM_TTE: 2415,
}


@acceptance(1)
def test_self_parity_full_scale():
    start = time.perf_counter()
    total = 0
    verdicts = []
    for kind, cells in FULL_SCALE.items():
        pair = generate_pair(cdisc_pilot_spec(kind))
        assert len(pair.grid.cells) == cells, kind
        total += len(pair.grid.cells)
        report = compare_table(parse_rtf(pair.rtf)[0], pair.grid, pair.compare_options(), kind.value)
        assert report.diffs == (), (kind, report.histogram)
        verdicts.append(report.verdict)
    elapsed = time.perf_counter() - start
    assert total == 4764
    assert verdicts == [Verdict.PASS] * 5
    assert elapsed < 10.0, f"took {elapsed:.2f}s"


# -- 2 -------------------------------------------------------------------------

def _reconcile_case():
    mapping = IrMappingConfig(
        "DM", (RowSpec("age", "Mean", "mean"), RowSpec("age", "SD", "sd")), (ColSpec("PBO"), ColSpec("XAN")),
        {"mean": CellSpec(CellType.DECIMAL), "sd": CellSpec(CellType.DECIMAL)},
    )
    src = [StatRecord("age", "PBO", "mean", 75.2, "75.2"), StatRecord("age", "XAN", "mean", 74.4, "74.4"),
           StatRecord("age", "PBO", "sd", 8.59, "8.59"), StatRecord("age", "XAN", "sd", 7.89, "7.89")]
    return mapping, src, build_grid(src, mapping)


@acceptance(2)
@pytest.mark.parametrize("delta,passes", [(1e-11, True), (-1e-11, True), (1e-9, False), (-1e-9, False)])
def test_reconcile_default_tolerance(delta, passes):
    mapping, src, grid = _reconcile_case()
    for i in range(len(src)):
        moved = list(src)
        moved[i] = replace(src[i], stat_value=src[i].stat_value + delta)
        report = reconcile(grid, moved, mapping)
        assert report.tolerance == 1e-10
        assert report.checked == 4
        assert report.passed is passes
        assert len(report.mismatches) == (0 if passes else 1)


# -- 3 -------------------------------------------------------------------------

def _mutate(grid: CellGrid, rule: Rule, rng: random.Random) -> CellGrid:
    cells, struct = list(grid.cells), list(grid.structure)
    rid, eid = grid.report_id, grid.execution_id
    n_rows, n_cols = grid.n_rows, grid.n_cols
    if rule is Rule.COMPLETENESS:
        how = rng.randrange(3)
        if how == 0:
            cells.append(Cell(rid, eid, n_rows + 1, 1, None, "orphan", CellType.TEXT))
        elif how == 1:
            cells.append(Cell(rid, eid, 1, n_cols + 1, None, "orphan", CellType.TEXT))
        else:
            target = rng.choice(sorted({c.row_id for c in cells}))
            struct = [replace(s, element_type=ElementType.SEPARATOR)
                      if s.dimension is Dimension.ROW and s.dim_id == target else s for s in struct]
    elif rule is Rule.CONTIGUITY:
        dim = rng.choice([Dimension.ROW, Dimension.COL])
        limit = n_rows if dim is Dimension.ROW else n_cols
        k = rng.randint(1, limit)
        struct = [replace(s, dim_id=s.dim_id + 1) if s.dimension is dim and s.dim_id >= k else s for s in struct]
        if dim is Dimension.ROW:
            cells = [replace(c, row_id=c.row_id + 1) if c.row_id >= k else c for c in cells]
        else:
            cells = [replace(c, col_id=c.col_id + 1) if c.col_id >= k else c for c in cells]
    elif rule is Rule.UNIQUENESS:
        if rng.random() < 0.5:
            victim = rng.choice(cells)
            cells.append(replace(victim, cell_formatted=victim.cell_formatted + "*"))
        else:
            victim = rng.choice(struct)
            struct.append(replace(victim, label=victim.label + " (copy)"))
    else:
        attr = rng.choice(["report_id", "execution_id"])
        pool = cells + struct
        i = rng.randrange(len(pool))
        pool[i] = replace(pool[i], **{attr: "INTRUDER"})
        cells, struct = pool[:len(cells)], pool[len(cells):]
    return CellGrid(tuple(cells), tuple(struct))


@acceptance(3)
@pytest.mark.parametrize("rule", list(Rule), ids=lambda r: r.value)
def test_single_rule_mutations_are_labelled(rule):
    for seed in range(10):
        rng = random.Random(1000 * seed + 7)
        grid = random_grid(rng)
        assert validate_grid(grid).valid
        broken = _mutate(grid, rule, rng)
        assert validate_grid(broken).rules == {rule}, (seed, validate_grid(broken).violations)


@acceptance(3)
def test_no_false_positives_on_valid_grids():
    for seed in range(100):
        rng = random.Random(seed)
        if seed % 2:
            grid = random_grid(rng)
        else:
            kind = list(ReportKind)[seed % len(ReportKind)]
            grid = generate_pair(FixtureSpec(kind, seed=seed)).grid
        report = validate_grid(grid)
        assert report.valid, (seed, report.violations[:3])


# -- 4 -------------------------------------------------------------------------

@acceptance(4)
@pytest.mark.parametrize("kind", list(ReportKind), ids=lambda k: k.value)
def test_taxonomy_injection(kind):
    applicable = 0
    for seed in range(10):
        base = generate_pair(FixtureSpec(kind, seed=seed))
        assert _compare(base).verdict is Verdict.PASS, (kind, seed)
        for category in INJECTABLE:
            try:
                pair, expected = inject_divergence(base, category, seed)
            except CategoryNotApplicable:
                continue
            applicable += 1
            report = _compare(pair)
            assert report.verdict is Verdict.FAIL, (kind, seed, category)
            found = {d.category for d in report.diffs}
            assert set(expected) <= found, (kind, seed, category, report.histogram)
    assert applicable > 0


@acceptance(4)
def test_every_category_is_injectable_somewhere():
    seen = set()
    for kind in ReportKind:
        base = generate_pair(FixtureSpec(kind, seed=0))
        for category in INJECTABLE:
            try:
                inject_divergence(base, category, 0)
                seen.add(category)
            except CategoryNotApplicable:
                pass
    assert seen == set(INJECTABLE)


# -- 5 -------------------------------------------------------------------------

def _bump_child(grid: CellGrid, rng: random.Random) -> tuple[CellGrid, int]:
    spec = hierarchy_from_indent(grid)
    parent, children = rng.choice(spec.groups)
    child = rng.choice(children)
    col = rng.choice(spec.columns)
    cmap = grid.cell_map()
    parent_text = cmap[(parent, col)].cell_formatted
    n = int(parent_text.split()[0]) + 1 + rng.randrange(5)

    def bumped(c: Cell) -> Cell:
        value = float(n) if c.cell_type.numeric else None
        return replace(c, cell_value=value, cell_formatted=f"{n} (99.9%)")

    cells = [bumped(c) if c.pos == (child, col) else c for c in grid.cells]
    return CellGrid(tuple(cells), grid.structure), child


@acceptance(5)
def test_hierarchy_lint():
    for seed in range(25):
        rng = random.Random(seed)
        grid = generate_pair(FixtureSpec(ReportKind.AE_SOC_PT, seed=seed, rows=rng.randint(12, 160))).grid
        spec = hierarchy_from_indent(grid)
        clean = check_hierarchy_consistency(grid, spec)
        assert clean.passed and clean.checked > 0, seed
        broken, child = _bump_child(grid, rng)
        report = check_hierarchy_consistency(broken, spec)
        assert not report.passed, seed
        assert child in {v.child_row for v in report.violations}


# -- 6 -------------------------------------------------------------------------

@acceptance(6)
def test_analyzer_reproduces_annotated_corpus():
    expected = yaml.safe_load((FIXTURES / "sas_corpus_expected.yaml").read_text())
    inv = analyze_corpus(FIXTURES / "sas_corpus")
    assert not inv.errors and not inv.warnings
    got = {r.macro.name: r for r in inv.records}
    assert set(got) == set(expected["macros"])
    assert len(got) == 20
    for name, want in expected["macros"].items():
        rec = got[name]
        assert Path(rec.macro.source_path).name == want["file"], name
        assert rec.metrics.loc == want["loc"], name
        assert rec.metrics.parameter_count == want["params"], name
        assert rec.metrics.nesting_depth == want["nesting"], name
        assert rec.metrics.efferent_coupling == want["fanout"], name
        assert rec.category.value == want["category"], name
    diag = inv.diagnostics
    assert list(diag.orphans) == expected["orphans"]
    assert [list(c) for c in diag.cycles] == expected["cycles"]
    assert dict(diag.hubs) == expected["hubs"]
    dynamic = [e for e in inv.graph.edges if e.dynamic]
    assert {e.caller: 1 for e in dynamic} == expected["dynamic_calls"]
    assert sorted({m for m, _, _ in inv.graph.implicit_refs}) == expected["implicit_exist"]


@acceptance(6)
def test_cycle_enumeration_matches_exhaustive_dfs():
    for seed in range(200):
        rng = random.Random(seed)
        n = rng.randint(1, 12)
        density = rng.choice([0.08, 0.15, 0.25])
        edges = [(a, b) for a in range(n) for b in range(n) if rng.random() < density]
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        g.add_edges_from(edges)
        assert set(enumerate_cycles(g)) == brute_force_cycles(range(n), edges), seed


# -- 7 -------------------------------------------------------------------------

@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv("TFLPARITY_OUT", raising=False)
    return build_workspace(tmp_path / "ws", seed=5)


def _statuses(run):
    return {r.gate.value: r.status for r in run.results}


@acceptance(7)
def test_broken_path_fails_gate_a_and_skips_rest(workspace):
    import shutil

    shutil.rmtree(workspace.parent / "registry")
    run = run_gates(load_harness_config(workspace))
    st = _statuses(run)
    assert st["A"] is GateStatus.FAIL
    assert all(st[g] is GateStatus.SKIPPED for g in "BCDEFG")
    assert run.exit_code == 1


@acceptance(7)
def test_duplicate_legacy_id_fails_gate_b(workspace):
    path = workspace.parent / "bridge_map.yaml"
    doc = yaml.safe_load(path.read_text())
    doc["entries"].append(dict(doc["entries"][0]))
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    run = run_gates(load_harness_config(workspace), "B")
    st = _statuses(run)
    assert st["A"] is GateStatus.PASS and st["B"] is GateStatus.FAIL
    assert any("duplicate" in f.lower() for f in run.results[1].findings)


@acceptance(7)
def test_unresolved_macro_variable_fails_gate_c(workspace):
    path = workspace.parent / "bridge_map.yaml"
    doc = yaml.safe_load(path.read_text())
    doc["entries"][1]["preamble_sas"] = "options nodate;\n%let cutoff = &undeclared_cutoff;"
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    run = run_gates(load_harness_config(workspace), "C")
    st = _statuses(run)
    assert (st["A"], st["B"], st["C"]) == (GateStatus.PASS, GateStatus.PASS, GateStatus.FAIL)
    assert any("&undeclared_cutoff" in f for f in run.results[2].findings)


@acceptance(7)
def test_gate_e_all_pass_on_clean_fixtures(workspace):
    cfg = replace(load_harness_config(workspace), sample_entries=())
    run = run_gates(cfg, "E")
    assert [r.status for r in run.results] == [GateStatus.PASS] * 5
    reports = run.reports["E"]
    assert len(reports) == 6 and all(r.verdict is Verdict.PASS for r in reports)


@acceptance(7)
def test_cli_exit_code_contract(workspace, capsys):
    assert main(["gates", "run", "--config", str(workspace), "--through", "E"]) == 0
    bridge = workspace.parent / "bridge_map.yaml"
    bridge.write_text(bridge.read_text() + "  - {legacy_id: t_dm_01, native_target: DEMOG, mode: CONSOLIDATION}\n")
    assert main(["gates", "run", "--config", str(workspace), "--through", "B"]) == 1
    assert main(["gates", "run"]) == 2
    assert main(["gates", "run", "--config", str(workspace.parent / "missing.yaml")]) == 2
    capsys.readouterr()


# -- 8 -------------------------------------------------------------------------

@acceptance(8)
def test_thirty_three_character_name_rejected():
    assert check_sas_name("x" * 32) == "x" * 32
    with pytest.raises(NameTooLong):
        check_sas_name("x" * 33)
    entry = BridgeMapEntry("t1", "DEMOG", Mode.CONSOLIDATION, {"TRT": "trtvar"})
    with pytest.raises(NameTooLong):
        resolve_parameters(entry, StudyConfig(), {"T" * 33: "x"})


@acceptance(8)
@pytest.mark.parametrize("study,default,call", [(s, d, c) for s in (0, 1) for d in (0, 1) for c in (0, 1)])
def test_precedence_matrix(study, default, call):
    entry = BridgeMapEntry("t1", "DEMOG", Mode.CONSOLIDATION, {"TRT": "trtvar"},
                           defaults={"trtvar": "FROM_DEFAULT"} if default else {})
    cfg = StudyConfig(parameters={"trtvar": "FROM_STUDY"} if study else {})
    resolved = resolve_parameters(entry, cfg, {"TRT": "FROM_CALL"} if call else None)
    want = "FROM_CALL" if call else "FROM_DEFAULT" if default else "FROM_STUDY" if study else None
    assert resolved.get("trtvar") == want


# -- 9 -------------------------------------------------------------------------

def _stress_writer(args):
    path, worker, n = args
    log = AuditLog(path)
    for i in range(n):
        log.append(AuditRecord("STRESS", f"w{worker}_{i}", Status.SUCCESS, "test", "x" * (i % 50)))
    return log.appended


@acceptance(9)
def test_manifests_and_single_byte_flip(workspace):
    run = run_gates(load_harness_config(workspace))
    assert run.exit_code == 0
    out = workspace.parent / "out"
    manifests = sorted(out.rglob("manifest.json"))
    assert len(manifests) == 12  # six entries, two sides each
    for m in manifests:
        report = verify_manifest(m)
        assert report.ok, (m, report.to_dict())
        assert report.with_status(FileStatus.MATCH)

    target = out / "t_dm_01" / "legacy" / "t_dm_01.rtf"
    data = bytearray(target.read_bytes())
    data[len(data) // 2] ^= 0x01
    target.write_bytes(bytes(data))
    mismatches = [p for m in manifests for p in verify_manifest(m).with_status(FileStatus.MISMATCH)]
    assert mismatches == [str(target)]

    lines = (out / "audit.ndjson").read_text().splitlines()
    assert len(lines) == run.audit_records
    assert all(json.loads(line)["event_type"] for line in lines)


@acceptance(9)
def test_audit_log_survives_four_workers(tmp_path):
    path = tmp_path / "audit.ndjson"
    per_worker = 60
    with ProcessPoolExecutor(max_workers=4, mp_context=get_context("fork")) as pool:
        written = list(pool.map(_stress_writer, [(str(path), w, per_worker) for w in range(4)]))
    assert written == [per_worker] * 4
    lines = path.read_text(encoding="ascii").split("\n")
    assert lines[-1] == ""
    records = [json.loads(line) for line in lines[:-1]]
    assert len(records) == 4 * per_worker
    assert sorted(r["step_name"] for r in records) == sorted(
        f"w{w}_{i}" for w in range(4) for i in range(per_worker))


# -- 10 ------------------------------------------------------------------------

def _rows_by_label(doc: dict) -> dict[str, list[str]]:
    grid = {}
    for c in doc["cells"]:
        grid.setdefault(c["row_id"], {})[c["col_id"]] = c["cell_formatted"]
    rows = {}
    for r in grid.values():
        texts = [r[k] for k in sorted(r)]
        k = next((i for i, t in enumerate(texts) if t.strip()), 0)
        rows.setdefault(texts[k].strip(), texts[k + 1:])  # cells after the row label
    return rows


@acceptance(10)
def test_cdiscpilot_anchors_in_rendered_json():
    dm = json.loads(to_json(generate_pair(cdisc_pilot_spec(ReportKind.DEMOGRAPHICS)).grid))
    cells = dm["cells"]
    assert [c["cell_formatted"] for c in cells if c["row_id"] == 2][-5:-2] == ["(N=86)", "(N=84)", "(N=84)"]
    rows = _rows_by_label(dm)
    assert rows["Mean"][0] == "75.2"
    assert [t.split()[0] for t in rows["Female"][:3]] == ["53", "50", "40"]
    mean_cell = next(c for c in cells if c["cell_formatted"] == "75.2")
    assert mean_cell["cell_value"] == 75.2

    ae = json.loads(to_json(generate_pair(cdisc_pilot_spec(ReportKind.AE_SOC_PT)).grid))
    ery = _rows_by_label(ae)["Application site erythema"]
    assert ery[:3] == ["7 (8.1%)", "35 (41.7%)", "52 (61.9%)"]
