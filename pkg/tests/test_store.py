from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from conftest import add, ns, small_store
from kosframe.core import (
    RDF_TYPE,
    SKOS_CONCEPT,
    SKOS_IN_SCHEME,
    Iri,
    Literal,
    NoteKind,
    RelationKind,
    TermKind,
    Triple,
    canonical_ntriples,
    parse_ntriples,
    skos_iri,
)
from kosframe.store import (
    DuplicatePrefLabel,
    InvalidRecord,
    LabelRecord,
    NamespaceClash,
    NoteRecord,
    PrefAltClash,
    Provenance,
    RelationRecord,
    SchemeRecord,
    Store,
    TopConceptRecord,
    UnknownConcept,
    UnknownScheme,
    ingest_triples,
    load_store,
    save_store,
)

GEMET = "http://www.eionet.europa.eu/gemet/concept?cp="


def test_upsert_scheme():
    store = Store()
    sid = store.upsert_scheme(SchemeRecord("http://ex.org/EARTh/", "EARTh"))
    assert sid == 1
    assert store.upsert_scheme(SchemeRecord("http://ex.org/EARTh/", "EARTh v2")) == 1
    assert store.scheme(1).title == "EARTh v2"
    with pytest.raises(NamespaceClash):
        store.upsert_scheme(SchemeRecord("http://ex.org/EARTh/", "again", scheme_id=7))
    with pytest.raises(InvalidRecord):
        store.upsert_scheme(SchemeRecord("http://ex.org/no-separator", "x"))


def test_prefix_must_be_unique():
    store = Store()
    store.upsert_scheme(SchemeRecord("http://ex.org/A/", "A", prefix="A"))
    with pytest.raises(NamespaceClash):
        store.upsert_scheme(SchemeRecord("http://ex.org/B/", "B", prefix="A"))


def test_add_concept():
    store, ids = small_store()
    sid = ids["EARTh"]
    assert store.add_concept(sid, "42")
    before = store.snapshot().triples()
    assert not store.add_concept(sid, "42")
    assert store.snapshot().triples() == before
    with pytest.raises(UnknownScheme):
        store.add_concept(99, "x")
    with pytest.raises(InvalidRecord):
        store.add_concept(sid, "")


def test_label_constraints():
    store, ids = small_store()
    sid = ids["EARTh"]
    store.add_concept(sid, "1")
    store.add_label(LabelRecord(sid, "1", TermKind.PREF_LABEL, "en", "water"))
    with pytest.raises(DuplicatePrefLabel):
        store.add_label(LabelRecord(sid, "1", TermKind.PREF_LABEL, "en", "aqua"))
    with pytest.raises(PrefAltClash):
        store.add_label(LabelRecord(sid, "1", TermKind.ALT_LABEL, "en", "water"))
    assert store.add_label(LabelRecord(sid, "1", TermKind.PREF_LABEL, "it", "acqua"))
    assert not store.add_label(LabelRecord(sid, "1", TermKind.PREF_LABEL, "en", "water"))
    assert store.pref_label((sid, "1"), "it") == "acqua"
    with pytest.raises(InvalidRecord):
        store.add_label(LabelRecord(sid, "1", TermKind.ALT_LABEL, "en", ""))
    with pytest.raises(UnknownConcept):
        store.add_label(LabelRecord(sid, "2", TermKind.ALT_LABEL, "en", "x"))


def test_unchecked_labels_are_kept_for_validation():
    store, ids = small_store()
    store.add_concept(ids["EARTh"], "1")
    store.add_label(LabelRecord(ids["EARTh"], "1", TermKind.PREF_LABEL, "en", "a"))
    assert store.add_label(LabelRecord(ids["EARTh"], "1", TermKind.PREF_LABEL, "en", "b"), check=False)


def test_add_relation():
    store, ids = small_store(remote={"GEMET": GEMET})
    sid = ids["EARTh"]
    a, b = add(store, sid, "A"), add(store, sid, "B")
    assert store.add_relation(RelationRecord(a, b, RelationKind.BROADER))
    assert store.add_relation(RelationRecord(a, (ids["GEMET"], "1347"), RelationKind.EXACT_MATCH))
    assert store.snapshot().concept_uri(ids["GEMET"], "1347") == Iri(GEMET + "1347")
    with pytest.raises(UnknownConcept):
        store.add_relation(RelationRecord((sid, "nope"), b, RelationKind.BROADER))
    with pytest.raises(UnknownScheme):
        store.add_relation(RelationRecord(a, (42, "x"), RelationKind.RELATED))


def test_concept_uri():
    store = Store()
    sid = store.upsert_scheme(SchemeRecord("http://ex.org/EARTh/", "EARTh"))
    assert store.concept_uri(sid, "42") == Iri("http://ex.org/EARTh/42")
    assert store.concept_uri(sid, "water body") == Iri("http://ex.org/EARTh/water%20body")
    with pytest.raises(UnknownScheme):
        store.concept_uri(9, "1")
    assert store.resolve_iri(Iri("http://ex.org/EARTh/water%20body")) == (sid, "water body")


def test_triples_of_cardinality():
    store, ids = small_store()
    sid = ids["EARTh"]
    a = add(store, sid, "A", "water", broader=["B"])
    snap = store.snapshot()
    uri = snap.concept_uri(*a)
    assert snap.triples_of(a) == {
        Triple(uri, RDF_TYPE, SKOS_CONCEPT),
        Triple(uri, SKOS_IN_SCHEME, Iri(ns("EARTh")[:-1])),
        Triple(uri, skos_iri(TermKind.PREF_LABEL), Literal("water", "en")),
        Triple(uri, skos_iri(RelationKind.BROADER), snap.concept_uri(sid, "B")),
    }
    assert len(snap.triples_of((sid, "B"))) == 2


def test_provenance_is_not_serialized():
    store, ids = small_store()
    sid = ids["EARTh"]
    a, b, c = add(store, sid, "A"), add(store, sid, "B"), add(store, sid, "C")
    store.add_relation(RelationRecord(a, b, RelationKind.RELATED, Provenance.ASSERTED))
    store.add_relation(RelationRecord(a, c, RelationKind.RELATED, Provenance.ENTAILED))
    rows = {t for t in store.snapshot().triples_of(a) if t.predicate == skos_iri(RelationKind.RELATED)}
    assert {t.object for t in rows} == {store.concept_uri(*b), store.concept_uri(*c)}


def test_snapshot_isolation():
    store, ids = small_store()
    sid = ids["EARTh"]
    add(store, sid, "1", "one")
    snap = store.snapshot()
    add(store, sid, "2", "two")
    store.add_label(LabelRecord(sid, "1", TermKind.ALT_LABEL, "en", "uno"))
    assert snap.concept_count() == 1
    assert len(snap.labels((sid, "1"))) == 1
    assert store.snapshot().concept_count() == 2
    s1, s2 = store.snapshot(), store.snapshot()
    assert s1.triples() == s2.triples()


def test_empty_store_snapshot_has_scheme_description_only():
    store, _ = small_store()
    triples = store.snapshot().triples()
    assert triples
    assert not any(t.object == SKOS_CONCEPT for t in triples)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["add", "label", "rel", "note"]), st.integers(0, 5), st.integers(0, 5)),
                max_size=30))
def test_snapshot_unaffected_by_later_writes(ops):
    store, ids = small_store()
    sid = ids["EARTh"]
    for i in range(3):
        add(store, sid, str(i), f"w{i}")
    snap = store.snapshot()
    frozen = set(snap.triples())
    for op, x, y in ops:
        if op == "add":
            store.add_concept(sid, str(x))
        elif op == "label" and store.has_concept((sid, str(x))):
            store.add_label(LabelRecord(sid, str(x), TermKind.HIDDEN_LABEL, "en", f"h{y}"))
        elif op == "rel" and store.has_concept((sid, str(x))):
            store.add_relation(RelationRecord((sid, str(x)), (sid, str(y)), RelationKind.RELATED))
        elif op == "note" and store.has_concept((sid, str(x))):
            store.add_note(NoteRecord(sid, str(x), NoteKind.NOTE, None, f"n{y}"))
    assert set(snap.triples()) == frozen


_text = st.text(st.characters(whitelist_categories=("Ll", "Lu", "Nd", "Zs", "Po")), min_size=1, max_size=12)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.from_regex(r"[a-z0-9 ]{1,6}", fullmatch=True),
                       st.tuples(_text, st.lists(_text, max_size=2), st.lists(st.integers(0, 9), max_size=3)),
                       min_size=1, max_size=8))
def test_decompose_recompose_round_trip(concepts):
    """Ingesting a store's own triples into a fresh store reproduces them exactly."""
    store, ids = small_store(("EARTh", "REGIONS"))
    sid = ids["EARTh"]
    keys = sorted(concepts)
    for lid, (pref, alts, rels) in concepts.items():
        add(store, sid, lid, pref)
        for alt in alts:
            if alt != pref:
                store.add_label(LabelRecord(sid, lid, TermKind.ALT_LABEL, "en", alt))
        store.add_note(NoteRecord(sid, lid, NoteKind.DEFINITION, "en", f"def of {pref}"))
        for r in rels:
            store.add_relation(RelationRecord((sid, lid), (sid, keys[r % len(keys)]), RelationKind.RELATED))
        store.add_relation(RelationRecord((sid, lid), (ids["REGIONS"], "r1"), RelationKind.CLOSE_MATCH))
    store.add_top_concept(TopConceptRecord(sid, keys[0]))
    original = store.snapshot().export_ntriples()
    fresh = Store()
    report = ingest_triples(fresh, parse_ntriples(original.decode("utf-8")))
    assert report.issues == []
    assert fresh.snapshot().export_ntriples() == original


def test_ingest_reports_constraint_violations():
    store, ids = small_store()
    uri = ns("EARTh") + "1"
    text = (f'<{uri}> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://www.w3.org/2004/02/skos/core#Concept> .\n'
            f'<{uri}> <http://www.w3.org/2004/02/skos/core#prefLabel> "a"@en .\n'
            f'<{uri}> <http://www.w3.org/2004/02/skos/core#prefLabel> "b"@en .\n'
            f'<{uri}> <http://www.w3.org/2004/02/skos/core#broader> <http://elsewhere.org/x> .\n')
    report = ingest_triples(store, parse_ntriples(text))
    kinds = sorted(i.kind for i in report.issues)
    assert kinds == ["DuplicatePrefLabel", "UnknownScheme"]
    assert report.labels == 1 and report.concepts == 1


def test_ingest_registers_scheme_descriptions():
    src, ids = small_store(remote={"GEMET": GEMET})
    add(src, ids["EARTh"], "1", "water")
    src.add_top_concept(TopConceptRecord(ids["EARTh"], "1"))
    data = src.snapshot().export_ntriples().decode("utf-8")
    fresh = Store()
    report = ingest_triples(fresh, parse_ntriples(data), local_base="http://localhost:2020/resource/")
    assert report.schemes == 2
    assert fresh.scheme_by_prefix("GEMET").remote
    assert not fresh.scheme_by_prefix("EARTh").remote
    assert fresh.top_concepts(fresh.scheme_by_prefix("EARTh").scheme_id) == ["1"]


def test_save_load_preserves_provenance(tmp_path):
    store, ids = small_store()
    sid = ids["EARTh"]
    a, b = add(store, sid, "A", "a"), add(store, sid, "B", "b")
    store.add_relation(RelationRecord(a, b, RelationKind.BROADER))
    store.add_relation(RelationRecord(b, a, RelationKind.NARROWER, Provenance.ENTAILED))
    store.add_relation(RelationRecord(a, b, RelationKind.RELATED, Provenance.LINKED))
    save_store(store.snapshot(), tmp_path / "s")
    back = load_store(tmp_path / "s")
    assert {(r.src, r.dst, r.rel, r.provenance) for r in back.all_relations()} == {
        (r.src, r.dst, r.rel, r.provenance) for r in store.all_relations()}
    assert back.snapshot().export_ntriples() == store.snapshot().export_ntriples()
    assert canonical_ntriples(back.snapshot().triples()) == store.snapshot().export_ntriples()


def test_remove_scheme_leaves_dangling_targets():
    store, ids = small_store(("EARTh", "REGIONS"))
    a = add(store, ids["EARTh"], "A")
    r = add(store, ids["REGIONS"], "R")
    store.add_relation(RelationRecord(a, r, RelationKind.CLOSE_MATCH))
    store.remove_scheme(ids["REGIONS"])
    assert not store.has_concept(r)
    assert store.has_relation(a, r, RelationKind.CLOSE_MATCH)
