from __future__ import annotations

from importlib.resources import files
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from conftest import RES, small_store
from oracles import nested_loop_join
from kosframe.core import RDF_TYPE, SKOS_CONCEPT, Iri, Literal, MalformedIri, TermKind, Triple, skos_iri
from kosframe.mapping import (
    DanglingBridge,
    EvalStats,
    MappingSyntaxError,
    NullColumn,
    Table,
    TableSet,
    UnknownColumn,
    UnknownDirective,
    UnknownTable,
    evaluate,
    evaluate_to_store,
    expand_uri_pattern,
    format_mapping,
    load_csv_table,
    load_tables,
    parse_mapping,
    parse_uri_pattern,
)

PREF = skos_iri(TermKind.PREF_LABEL)

CLASSMAP = """map:EARTh a d2rq:ClassMap;
    d2rq:uriPattern "EARTh/@@EARTh.ID|urify@@";
    d2rq:class skos:Concept;
.
"""

PREF_BRIDGE = """
map:EARTh_prefLabelEn a d2rq:PropertyBridge;
    d2rq:belongsToClassMap map:EARTh;
    d2rq:property skos:prefLabel;
    d2rq:lang "en";
    d2rq:column "EARTh.prefLabelEn";
.
"""


def shipped(name: str) -> str:
    return files("kosframe").joinpath(f"data/mappings/{name}").read_text(encoding="utf-8")


def test_parse_classmap_fragment():
    spec = parse_mapping(CLASSMAP)
    (cm,) = spec.class_maps
    (ph,) = cm.uri_pattern.placeholders
    assert ph.urify and str(ph.column) == "EARTh.ID"
    assert cm.rdf_class == SKOS_CONCEPT
    assert cm.base_table == "EARTh"


def test_missing_terminator_is_a_syntax_error_at_that_line():
    text = CLASSMAP + PREF_BRIDGE.replace("\n.\n", "\n") + CLASSMAP.replace("map:EARTh ", "map:Other ")
    with pytest.raises(MappingSyntaxError) as e:
        parse_mapping(text)
    assert e.value.line > 4


def test_dangling_bridge():
    with pytest.raises(DanglingBridge):
        parse_mapping(PREF_BRIDGE)


def test_unknown_directive():
    with pytest.raises(UnknownDirective):
        parse_mapping(CLASSMAP.replace("d2rq:class skos:Concept;", "d2rq:frobnicate \"x\";"))


def test_expand_uri_pattern():
    p = parse_uri_pattern("EARTh/@@EARTh.ID|urify@@")
    assert expand_uri_pattern(p, {"earth.id": "42"}, RES) == Iri(RES + "EARTh/42")
    assert expand_uri_pattern(p, {"earth.id": "water body"}, RES) == Iri(RES + "EARTh/water%20body")
    with pytest.raises(NullColumn):
        expand_uri_pattern(p, {"earth.id": ""}, RES)
    absolute = parse_uri_pattern("http://www.eionet.europa.eu/gemet/concept?cp=@@EARTh.LinkToGEMET@@")
    assert expand_uri_pattern(absolute, {"earth.linktogemet": "1347"}, RES) == Iri(
        "http://www.eionet.europa.eu/gemet/concept?cp=1347")


def test_one_row_two_triples():
    spec = parse_mapping(CLASSMAP + PREF_BRIDGE)
    tables = TableSet([Table("EARTh", ("ID", "prefLabelEn"), [("7", "forest")])])
    subj = Iri(RES + "EARTh/7")
    assert evaluate(spec, tables, RES) == {Triple(subj, RDF_TYPE, SKOS_CONCEPT),
                                          Triple(subj, PREF, Literal("forest", "en"))}


def test_null_values_emit_nothing():
    spec = parse_mapping(CLASSMAP + PREF_BRIDGE)
    tables = TableSet([Table("EARTh", ("ID", "prefLabelEn"), [("", "x"), ("1", "")])])
    assert evaluate(spec, tables, RES) == {Triple(Iri(RES + "EARTh/1"), RDF_TYPE, SKOS_CONCEPT)}


def test_unknown_table_and_column():
    spec = parse_mapping(CLASSMAP + PREF_BRIDGE)
    with pytest.raises(UnknownTable):
        evaluate(spec, TableSet(), RES)
    with pytest.raises(UnknownColumn):
        evaluate(spec, TableSet([Table("EARTh", ("ID",), [("1",)])]), RES)


def test_join_with_condition_keeps_pref_row_only():
    text = """map:C a d2rq:ClassMap;
    d2rq:uriPattern "EARTh/@@skosconcept.ID@@";
    d2rq:class skos:Concept;
.
map:C_pref a d2rq:PropertyBridge;
    d2rq:belongsToClassMap map:C;
    d2rq:property skos:prefLabel;
    d2rq:column "rdflabel.label";
    d2rq:join "skosconcept.ID => rdflabel.skosConcept_ID";
    d2rq:condition "rdflabel.lexreptype='skosprefLabel'";
    d2rq:lang "en";
.
"""
    tables = TableSet([
        Table("skosconcept", ("ID",), [("1",)]),
        Table("rdflabel", ("skosConcept_ID", "label", "lexreptype"),
              [("1", "forest", "skosprefLabel"), ("1", "woodland", "skosaltLabel")]),
    ])
    labels = {t.object for t in evaluate(parse_mapping(text), tables, RES) if t.predicate == PREF}
    assert labels == {Literal("forest", "en")}


def test_condition_filters_classmap_rows():
    text = CLASSMAP.replace("EARTh.ID", "skosconcept.ID").replace(
        "d2rq:class skos:Concept;", "d2rq:class skos:Concept;\n    d2rq:condition \"skosconcept.skosScheme_ID=1\";")
    tables = TableSet([Table("skosconcept", ("ID", "skosScheme_ID"), [("1", "1"), ("2", "2"), ("3", "1")])])
    subjects = {t.subject for t in evaluate(parse_mapping(text), tables, RES)}
    assert subjects == {Iri(RES + "EARTh/1"), Iri(RES + "EARTh/3")}


def test_shipped_mappings_round_trip_through_formatter():
    for name in ("earth_wide.d2s", "earth_normalized.d2s"):
        spec = parse_mapping(shipped(name))
        assert parse_mapping(format_mapping(spec)) == spec


def test_example_a_to_store_counts():
    from kosframe.store import SchemeRecord

    store, ids = small_store()
    store.upsert_scheme(SchemeRecord("http://www.eionet.europa.eu/gemet/concept?cp=", "GEMET", remote=True))
    tables = load_tables(Path(str(files("kosframe").joinpath("data/example_a"))))
    report = evaluate_to_store(parse_mapping(shipped("earth_wide.d2s")), tables, store, RES)
    assert (report.concepts, report.labels, report.relations) == (3, 6, 2)
    assert report.issues == []


def test_duplicate_pref_label_rows_are_reported():
    spec = parse_mapping(CLASSMAP + PREF_BRIDGE)
    store, _ = small_store()
    tables = TableSet([Table("EARTh", ("ID", "prefLabelEn"), [("1", "water"), ("1", "aqua")])])
    report = evaluate_to_store(spec, tables, store, RES)
    assert report.labels == 1
    assert [i.kind for i in report.issues] == ["DuplicatePrefLabel"]


def test_empty_tables_give_zero_report():
    spec = parse_mapping(CLASSMAP + PREF_BRIDGE)
    store, _ = small_store()
    report = evaluate_to_store(spec, TableSet([Table("EARTh", ("ID", "prefLabelEn"))]), store, RES)
    assert report.counts() == {"concepts": 0, "labels": 0, "relations": 0, "notes": 0, "skipped": 0}


def test_csv_loader_reports_bad_rows(tmp_path):
    path = tmp_path / "EARTh.csv"
    path.write_text('EARTh.ID,prefLabelEn\n1,"water, fresh"\n2,a,b\n3,"multi\nline"\n', encoding="utf-8")
    problems = []
    t = load_csv_table(path, problems)
    assert t.columns == ("ID", "prefLabelEn")
    assert t.rows == [("1", "water, fresh"), ("3", "multi\nline")]
    assert len(problems) == 1 and problems[0].line == 3


def test_malformed_generated_iri_is_counted():
    spec = parse_mapping(CLASSMAP.replace("|urify", ""))
    stats = EvalStats()
    out = evaluate(spec, TableSet([Table("EARTh", ("ID",), [("a b",), ("ok",)])]), RES, stats)
    assert len(out) == 1 and stats.malformed == 1
    with pytest.raises(MalformedIri):
        Iri(RES + "EARTh/a b")


JOIN_MAPPING = """map:A a d2rq:ClassMap;
    d2rq:uriPattern "A/@@a.ID|urify@@";
.
map:A_val a d2rq:PropertyBridge;
    d2rq:belongsToClassMap map:A;
    d2rq:property skos:prefLabel;
    d2rq:column "b.val";
    d2rq:join "a.k => b.k";
    d2rq:condition "b.typ='p' OR b.typ='q'";
    d2rq:lang "en";
.
"""

_cell = st.sampled_from(["", "1", "2", "3"])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_cell, _cell), max_size=6),
       st.lists(st.tuples(_cell, st.sampled_from(["", "x", "y"]), st.sampled_from(["p", "q", "r"])), max_size=6))
def test_join_matches_nested_loop_oracle(a_rows, b_rows):
    spec = parse_mapping(JOIN_MAPPING)
    tables = TableSet([Table("a", ("ID", "k"), a_rows), Table("b", ("k", "val", "typ"), b_rows)])
    got = {t for t in evaluate(spec, tables, RES) if t.predicate == PREF}
    joined = nested_loop_join({"a": (("ID", "k"), a_rows), "b": (("k", "val", "typ"), b_rows)},
                              ["a", "b"], [("a.k", "b.k")], {"b.typ": ["p", "q"]})
    want = {Triple(Iri(RES + "A/" + r["a.id"]), PREF, Literal(r["b.val"], "en"))
            for r in joined if r["a.id"] and r["b.val"]}
    assert got == want
