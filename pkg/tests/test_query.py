from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import RES, add, small_store
from oracles import naive_sparql
from kosframe.core import SKOS_NS, Iri, Literal, TermKind, Triple
from kosframe.entailment import entail
from kosframe.query import (
    LangEquals,
    QuerySyntaxError,
    Regex,
    SelectQuery,
    TermEquals,
    TriplePattern,
    UnboundVariable,
    UnsupportedFeature,
    Var,
    evaluate,
    parse_select,
    query,
    results_json,
)
from kosframe.store import LabelRecord

PREF = Iri(SKOS_NS + "prefLabel")


def test_parse_minimal_and_lang_filter():
    q = parse_select("SELECT ?c ?l WHERE { ?c skos:prefLabel ?l . FILTER(lang(?l) = \"it\") } LIMIT 5")
    assert q.variables == ("c", "l")
    assert q.patterns == (TriplePattern(Var("c"), PREF, Var("l")),)
    assert q.filters == (LangEquals("l", "it"),)
    assert q.limit == 5 and q.offset is None


def test_parse_prefix_a_and_regex():
    q = parse_select("PREFIX ex: <http://ex.org/>\nselect * { ?s a ex:T ; ex:p ?o . "
                     "FILTER regex(?o, \"^wat\", \"i\") FILTER(?s = ex:x) }")
    assert q.star and q.variables == ("s", "o")
    assert q.patterns[0].p == Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")
    assert q.patterns[1] == TriplePattern(Var("s"), Iri("http://ex.org/p"), Var("o"))
    assert q.filters == (Regex("o", "^wat", True), TermEquals("s", Iri("http://ex.org/x")))


@pytest.mark.parametrize("text,feature", [
    ("SELECT ?s WHERE { ?s ?p ?o OPTIONAL { ?s ?q ?r } }", "OPTIONAL"),
    ("SELECT ?s WHERE { { ?s ?p ?o } UNION { ?o ?p ?s } }", "UNION"),
    ("SELECT ?s WHERE { ?s ?p ?o } ORDER BY ?s", "ORDER"),
    ("ASK { ?s ?p ?o }", "ASK"),
    ("SELECT ?s WHERE { ?s ?p _:b }", "blank nodes"),
    ("SELECT ?s WHERE { ?s ?p ?o FILTER(?o > 3) }", "comparison operators"),
    ("SELECT ?s WHERE { ?s ?p ?o FILTER(?o = 3 || ?o = 4) }", "numeric literals"),
    ("SELECT ?s WHERE { ?s ?p ?o FILTER(?o = <http://a/b> || ?o = <http://a/c>) }", "compound FILTER expressions"),
])
def test_unsupported_features_are_named(text, feature):
    with pytest.raises(UnsupportedFeature) as e:
        parse_select(text)
    assert e.value.feature == feature


@pytest.mark.parametrize("text", [
    "SELECT ?s WHERE { ?s ?p }",
    "SELECT ?s WHERE { ?s nope:p ?o }",
    "SELECT WHERE { ?s ?p ?o }",
    "SELECT ?s WHERE { ?s ?p ?o } LIMIT -1",
    "SELECT ?s WHERE { }",
    "",
])
def test_syntax_errors(text):
    with pytest.raises(QuerySyntaxError):
        parse_select(text)


def test_unbound_variable():
    with pytest.raises(UnboundVariable) as e:
        parse_select("SELECT ?x WHERE { ?s ?p ?o }")
    assert e.value.name == "x"
    with pytest.raises(UnboundVariable):
        parse_select("SELECT ?s WHERE { ?s ?p ?o FILTER(lang(?l) = \"en\") }")


def chain_store():
    store, ids = small_store()
    sid = ids["EARTh"]
    add(store, sid, "1", "environment")
    store.add_label(LabelRecord(sid, "1", TermKind.PREF_LABEL, "it", "ambiente"))
    for i in (2, 3, 4):
        add(store, sid, str(i), f"level {i}", broader=[str(i - 1)])
    entail(store)
    return store.snapshot()


def test_closure_query():
    snap = chain_store()
    res = query(f"SELECT ?x WHERE {{ ?x skos:broaderTransitive <{RES}EARTh/1> }}", snap)
    assert [row[0].value for row in res.rows] == [f"{RES}EARTh/{i}" for i in (2, 3, 4)]


def test_limit_offset_and_empty():
    snap = chain_store()
    text = "SELECT ?c ?l WHERE { ?c skos:prefLabel ?l }"
    assert len(query(text, snap)) == 5
    assert len(query(text + " LIMIT 0", snap)) == 0
    assert query(text + " LIMIT 2 OFFSET 1", snap).rows == query(text, snap).rows[1:3]
    assert len(query("SELECT ?s WHERE { ?s <http://ex.org/unknown> ?o }", snap)) == 0


def test_results_json_shape():
    snap = chain_store()
    res = query("SELECT ?c ?l WHERE { ?c skos:prefLabel ?l FILTER(lang(?l) = \"it\") }", snap)
    doc = json.loads(results_json(res))
    assert doc["head"]["vars"] == ["c", "l"]
    (b,) = doc["results"]["bindings"]
    assert b["c"] == {"type": "uri", "value": f"{RES}EARTh/1"}
    assert b["l"] == {"type": "literal", "value": "ambiente", "xml:lang": "it"}


def test_results_are_deterministic():
    snap = chain_store()
    text = "SELECT * WHERE { ?s ?p ?o }"
    assert results_json(query(text, snap)) == results_json(query(text, list(snap.frozen_triples())))


def test_filters_on_iris_are_false():
    snap = chain_store()
    assert len(query("SELECT ?s WHERE { ?s skos:broader ?o FILTER regex(?o, \"EARTh\") }", snap)) == 0
    assert len(query("SELECT ?s WHERE { ?s skos:broader ?o FILTER(lang(?o) = \"\") }", snap)) == 0


# -- differential test against a brute-force evaluator ------------------------------------------

_IRIS = [Iri(f"http://ex.org/{c}") for c in "abcd"]
_PREDS = [Iri(f"http://ex.org/p{i}") for i in range(3)]
_LITS = [Literal("water", "en"), Literal("Water", None), Literal("acqua", "it"), Literal("wet", "en")]
_VARS = ["x", "y", "z"]

_triple = st.builds(Triple, st.sampled_from(_IRIS), st.sampled_from(_PREDS), st.sampled_from(_IRIS + _LITS))


def _slot(choices):
    return st.one_of(st.sampled_from([Var(v) for v in _VARS]), st.sampled_from(choices))


_pattern = st.builds(TriplePattern, _slot(_IRIS), _slot(_PREDS), _slot(_IRIS + _LITS))


@st.composite
def select_queries(draw):
    patterns = tuple(draw(st.lists(_pattern, min_size=1, max_size=3)))
    bound = sorted({v for tp in patterns for v in tp.variables()})
    if not bound:
        patterns = patterns + (TriplePattern(Var("x"), _PREDS[0], Var("y")),)
        bound = ["x", "y"]
    filters = []
    for _ in range(draw(st.integers(0, 2))):
        var = draw(st.sampled_from(bound))
        filters.append(draw(st.one_of(
            st.builds(LangEquals, st.just(var), st.sampled_from(["en", "it", ""])),
            st.builds(TermEquals, st.just(var), st.sampled_from(_IRIS + _LITS)),
            st.builds(Regex, st.just(var), st.sampled_from(["^w", "a", "ter$"]), st.booleans()),
        )))
    variables = tuple(draw(st.lists(st.sampled_from(bound), min_size=1, unique=True)))
    limit = draw(st.one_of(st.none(), st.integers(0, 5)))
    offset = draw(st.one_of(st.none(), st.integers(0, 3)))
    return SelectQuery(variables, patterns, tuple(filters), limit, offset)


@settings(max_examples=150, deadline=None)
@given(st.lists(_triple, max_size=25), select_queries())
def test_evaluator_matches_brute_force(triples, q):
    got = evaluate(q, triples)
    want = naive_sparql(q.patterns, q.filters, q.variables, triples, q.limit, q.offset)
    assert list(got.rows) == want
