import csv
import io
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from tflparity.analyzer import (
    Category,
    Cohesion,
    ComplexityRecord,
    MacroDef,
    RefKind,
    SourceFile,
    TaxonomyRules,
    analyze_corpus,
    canonical_cycle,
    classify_component,
    count_loc,
    coverage_matrix,
    extract_call_graph,
    load_annotations,
    mask_literals,
    nesting_depth,
    parse_macro_headers,
    strip_comments,
    syntax_check,
)

CORPUS = Path(__file__).parent / "fixtures" / "sas_corpus"

sas_text = st.text(st.sampled_from(list("ab;*/% \n'\"()&=")), max_size=60)


@given(sas_text)
def test_strip_comments_keeps_geometry(src):
    out = strip_comments(src)
    assert len(out) == len(src)
    assert [i for i, c in enumerate(out) if c == "\n"] == [i for i, c in enumerate(src) if c == "\n"]


@given(sas_text)
def test_mask_literals_keeps_geometry(src):
    assert len(mask_literals(src)) == len(src)
    assert mask_literals(src).count("\n") == src.count("\n")


class TestLexer:
    def test_comment_forms(self):
        src = "data a; /* x */\n* star comment;\n%* macro comment;\nrun;"
        assert strip_comments(src).split() == ["data", "a;", "run;"]

    def test_markers_inside_quotes_survive(self):
        src = "x = '/* not */'; y = 2 * 3;"
        assert strip_comments(src) == src

    def test_masking(self):
        assert mask_literals("a='it''s' b=\"&x\"") == "a='     ' b=\"  \""
        assert mask_literals("b=\"&x\"", keep_double=True) == "b=\"&x\""


class TestSyntaxCheck:
    def test_clean_program(self):
        prog = "%let cut=5;\n%macro m(dsin=);\n  data x; set &dsin; where val > &cut; run;\n%mend m;\n%m(dsin=a);\n"
        assert syntax_check(prog) == []

    def test_parens(self):
        kinds = [f.kind for f in syntax_check("%m(a=(1);\nx = 2);\n)")]
        assert kinds.count("PAREN") == 1
        f = syntax_check("data _null_;\nx = (1;\nrun;")
        assert [(x.line, x.kind) for x in f] == [(2, "PAREN")]

    def test_paren_in_string_ignored(self):
        assert syntax_check("x = '(';") == []

    def test_macro_pairing(self):
        f = syntax_check("%macro a;\n%macro b;\n%mend;\n")
        assert [(x.line, x.kind) for x in f] == [(1, "MACRO_PAIRING")]
        assert [x.kind for x in syntax_check("%mend;")] == ["MACRO_PAIRING"]

    def test_unresolved_refs(self):
        f = syntax_check('title "Cutoff &undeclared_cutoff";\nx = &sysdate9;\n')
        assert [str(x) for x in f] == ["line 1: UNRESOLVED: &undeclared_cutoff does not resolve"]

    def test_single_quotes_do_not_resolve(self):
        assert syntax_check("x = '&nothing';") == []

    def test_known_and_declared_symbols(self):
        prog = "%global g1 g2;\n%do i=1 %to 3; x=&i &g1 &g2 &ext; %end;"
        assert syntax_check(prog, known_symbols=["EXT"]) == []
        assert len(syntax_check(prog)) == 1

    def test_nrstr_is_not_scanned(self):
        assert syntax_check("%let x=%nrstr(&later ());") == []

    def test_comments_ignored(self):
        assert syntax_check("/* &ghost ( */\n* %macro junk;\n") == []


class TestMetrics:
    def test_count_loc_skips_blank_and_comment_lines(self):
        assert count_loc("%macro a;\n\n  /* note */\n  x=1;\n%mend;") == 3

    @pytest.mark.parametrize("body,depth", [
        ("x=1;", 0),
        ("%do i=1 %to 2; %end;", 1),
        ("%do i=1 %to 2; data a; do j=1 to 3; if x then do; end; end; run; %end;", 3),
        ("data a; select (x); when (1) do; y=1; end; otherwise; end; run;", 1),
        ("data a; select; otherwise do; end; end; run;", 1),
    ])
    def test_nesting_depth(self, body, depth):
        assert nesting_depth(body) == depth

    def test_flags(self):
        rec = ComplexityRecord(501, 21, 5, 0, Cohesion.HIGH)
        assert len(rec.flags) == 3 and ComplexityRecord(500, 20, 4, 0, Cohesion.HIGH).flags == []
        with pytest.raises(ValueError):
            ComplexityRecord(-1, 0, 0, 0, Cohesion.HIGH)

    def test_macro_def_checks(self):
        with pytest.raises(ValueError):
            MacroDef("", (), "x.sas", (1, 2))
        with pytest.raises(ValueError):
            MacroDef("a", (), "x.sas", (3, 2))


class TestClassification:
    def test_keywords(self):
        assert classify_component("proc freq data=a; run;") is Category.STAT_COMPUTE
        assert classify_component("ods rtf file='x';") is Category.RENDERING
        assert classify_component("") is Category.UTILITY
        assert classify_component("%a; %b;", fanout=4) is Category.ORCHESTRATION

    def test_tie_breaks_by_priority(self):
        body = "proc freq data=a; run; proc report data=b; run;"
        assert classify_component(body) is Category.STAT_COMPUTE
        rules = TaxonomyRules.from_dict({
            "priority": ["RENDERING", "STAT_COMPUTE"],
            "categories": {"STAT_COMPUTE": [r"\bproc\s+freq\b"], "RENDERING": [r"\bproc\s+report\b"]},
        })
        assert classify_component(body, rules=rules) is Category.RENDERING

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError):
            TaxonomyRules.from_dict({"categories": {"MAGIC": ["x"]}})


class TestCallGraph:
    def _graph(self, text):
        return extract_call_graph(parse_macro_headers([SourceFile("m.sas", text)]))

    def test_keywords_are_not_calls(self):
        g = self._graph("%macro a;\n  %let x=1; %if &x %then %b; %put hi;\n%mend;\n%macro b;\n%mend;\n")
        assert [(e.caller, e.callee, e.external) for e in g.edges] == [("a", "b", False)]

    def test_dynamic_and_external(self):
        g = self._graph("%macro a;\n  %&&step&i; %ext_tool(x=1);\n%mend;\n")
        dyn = [e for e in g.edges if e.dynamic]
        assert [e.callee for e in dyn] == ["&&step&i"]
        assert [e.callee for e in g.static_edges(internal_only=False)] == ["ext_tool"]
        assert g.static_edges() == [] and g.callees("a") == {"ext_tool"}

    def test_implicit_refs(self):
        g = self._graph("%macro a;\n  %global cut;\n  %if %sysfunc(exist(work.x)) %then %put y;\n%mend;\n")
        assert (("a", RefKind.GLOBAL_VAR, "cut") in g.implicit_refs
                and ("a", RefKind.DATASET_EXIST, "work.x") in g.implicit_refs)

    def test_canonical_cycle(self):
        assert canonical_cycle(["c", "a", "b"]) == ("a", "b", "c")


@pytest.fixture(scope="module")
def inventory():
    return analyze_corpus(CORPUS, annotations={"rpt_driver": ["DEMOG"], "dm_table": ["DEMOG"]})


class TestInventory:
    def test_tgf(self, inventory):
        text = inventory.to_tgf()
        nodes, edges = text.split("#\n")
        ids = {line.split(" ", 1)[1]: line.split(" ", 1)[0] for line in nodes.splitlines()}
        assert set(inventory.graph.nodes) <= set(ids)
        assert len(edges.splitlines()) == len(inventory.graph.edges)

    def test_csv(self, inventory):
        rows = list(csv.DictReader(io.StringIO(inventory.to_csv())))
        assert [r["name"] for r in rows] == [r.macro.name for r in inventory.records]
        assert {r["cohesion"] for r in rows} <= {"HIGH", "MEDIUM", "LOW"}

    def test_record_lookup(self, inventory):
        assert inventory.record("UT_LOG").macro.name == "ut_log"
        with pytest.raises(KeyError):
            inventory.record("nope")

    def test_coverage(self, inventory):
        cov = coverage_matrix(inventory.records, ["DEMOG", "AE_SOC_PT"])
        assert cov.gaps == ("AE_SOC_PT",)
        assert cov.cells["dm_table"] == ("DEMOG",)
        assert len(cov.unannotated) == len(inventory.records) - 2
        assert cov.redundancy_ratio == pytest.approx(len({(rt, inventory.record(m).category)
                                                          for m, rt in [("rpt_driver", "DEMOG"),
                                                                        ("dm_table", "DEMOG")]})
                                                     / len(inventory.records))


def test_load_annotations(tmp_path):
    (tmp_path / "a.yaml").write_text("TB_DEMOG: DEMOG\nae_tab: [AE_OVERVIEW, AE_SOC_PT]\n")
    assert load_annotations(tmp_path / "a.yaml") == {"tb_demog": ["DEMOG"], "ae_tab": ["AE_OVERVIEW", "AE_SOC_PT"]}
    assert load_annotations(None) == {}
