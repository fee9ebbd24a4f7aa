from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from conftest import add, small_store
from oracles import levenshtein_recursive, mention_oracle
from kosframe.core import NoteKind, RelationKind as RK, TermKind
from kosframe.interlink import (
    LinkCandidate,
    LinkParseError,
    LinkRule,
    Manual,
    MentionScan,
    PreconditionViolated,
    RuleError,
    SharedKey,
    Similarity,
    SimilarityConfig,
    apply_links,
    candidates_csv,
    find_mentions,
    key_table_from_rows,
    levenshtein,
    link_mention_scan,
    link_shared_key,
    link_similarity,
    load_manual_links,
    load_rules,
    normalized_levenshtein,
    token_jaccard,
)
from kosframe.mapping import InvalidPattern
from kosframe.store import LabelRecord, NoteRecord, Provenance, UnknownScheme

GEMET = "http://www.eionet.europa.eu/gemet/concept?cp="
LABEL_ONLY = SimilarityConfig(1.0, 0.0, 0.0, 0.85)


@settings(max_examples=200)
@given(st.text("abc ", max_size=8), st.text("abc ", max_size=8))
def test_levenshtein_matches_recursive_oracle(a, b):
    assert levenshtein(a, b) == levenshtein_recursive(a, b)
    assert levenshtein(a, b) == levenshtein(b, a)


def test_normalized_levenshtein_examples():
    assert normalized_levenshtein("woodland", "wetland") == pytest.approx(0.625)
    assert normalized_levenshtein("Forest ", "forest") == 1.0
    assert normalized_levenshtein("", "") == 1.0
    assert token_jaccard("beech forest", "forest of beech") == pytest.approx(2 / 3)


@pytest.mark.parametrize("kwargs", [dict(w_label=0.5, w_def=0.2, w_neighbor=0.2),
                                    dict(threshold=1.5), dict(measure="soundex")])
def test_similarity_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        SimilarityConfig(**kwargs)


def two_schemes(**remote):
    return small_store(("EARTh", "HAB"), remote=remote or None)


def sim_rule(ids, cfg=LABEL_ONLY, blocking=True):
    return LinkRule("r", Similarity(cfg, blocking), ids["EARTh"], ids["HAB"])


def test_rule_needs_distinct_schemes_unless_manual():
    with pytest.raises(ValueError):
        LinkRule("r", Similarity(), 1, 1)
    LinkRule("m", Manual("x.links"), 1, 1)
    with pytest.raises(ValueError):
        MentionScan(emit=RK.BROADER)


def test_similarity_scores_and_emits():
    store, ids = two_schemes()
    a = add(store, ids["EARTh"], "1", "woodland")
    b = add(store, ids["HAB"], "1", "wetland")
    c = add(store, ids["EARTh"], "2", "Forest")
    d = add(store, ids["HAB"], "2", "forest")
    cands = {(x.src, x.dst): x for x in link_similarity(store, sim_rule(ids, blocking=False))}
    wb = cands[(a, b)]
    assert wb.score == pytest.approx(0.625) and not wb.accepted
    cd = cands[(c, d)]
    assert cd.score == 1.0 and cd.accepted and cd.emit is RK.EXACT_MATCH
    strict = link_similarity(store, sim_rule(ids, SimilarityConfig(1.0, 0.0, 0.0, 1.0), blocking=False))
    assert {(x.src, x.dst) for x in strict if x.accepted} == {(c, d)}


def test_near_match_emits_close_match():
    store, ids = two_schemes()
    a = add(store, ids["EARTh"], "1", "grasslands")
    b = add(store, ids["HAB"], "1", "grassland")
    (cand,) = [x for x in link_similarity(store, sim_rule(ids)) if x.accepted]
    assert (cand.src, cand.dst, cand.emit) == (a, b, RK.CLOSE_MATCH)


def test_missing_components_are_renormalized():
    store, ids = two_schemes()
    add(store, ids["EARTh"], "1", "forest")
    add(store, ids["HAB"], "1", "forest")
    # default weights, but no definitions or neighbours on either side
    (cand,) = link_similarity(store, sim_rule(ids, SimilarityConfig()))
    assert cand.score == 1.0


def test_labels_compared_within_shared_language_only():
    store, ids = two_schemes()
    add(store, ids["EARTh"], "1", "acqua", lang="it")
    store.add_label(LabelRecord(ids["EARTh"], "1", TermKind.ALT_LABEL, "en", "aqua"))
    add(store, ids["HAB"], "1", "acqua", lang="en")
    (cand,) = link_similarity(store, sim_rule(ids, blocking=False))
    assert cand.score == pytest.approx(normalized_levenshtein("aqua", "acqua"))


def test_similarity_refuses_remote_scheme():
    store, ids = small_store(remote={"GEMET": GEMET})
    with pytest.raises(UnknownScheme):
        link_similarity(store, LinkRule("r", Similarity(), ids["EARTh"], ids["GEMET"]))


_word = st.text("abcde", min_size=1, max_size=7)


@settings(max_examples=60, deadline=None)
@given(st.lists(_word, min_size=1, max_size=8), st.lists(_word, min_size=1, max_size=8))
def test_blocking_keeps_every_accepted_pair(left, right):
    store, ids = two_schemes()
    for i, text in enumerate(left):
        add(store, ids["EARTh"], str(i), text)
    for i, text in enumerate(right):
        add(store, ids["HAB"], str(i), text)
    blocked = {(c.src, c.dst) for c in link_similarity(store, sim_rule(ids)) if c.accepted}
    full = {(c.src, c.dst) for c in link_similarity(store, sim_rule(ids, blocking=False)) if c.accepted}
    assert blocked == full


def test_shared_key():
    store, ids = small_store(remote={"GEMET": GEMET})
    a = add(store, ids["EARTh"], "1", "water")
    add(store, ids["EARTh"], "2", "air")
    rule = LinkRule("g", SharedKey(GEMET + "@@EARTh.LinkToGEMET@@"), ids["EARTh"], ids["GEMET"])
    table = key_table_from_rows([{"ID": "1", "LinkToGEMET": "1347"}, {"ID": "2", "LinkToGEMET": ""}],
                                "ID", "LinkToGEMET")
    (cand,) = link_shared_key(store, rule, table)
    assert (cand.src, cand.dst, cand.emit, cand.accepted) == (a, (ids["GEMET"], "1347"), RK.EXACT_MATCH, True)
    assert store.concept_uri(*cand.dst).value == GEMET + "1347"


def test_shared_key_outside_target_namespace():
    store, ids = small_store(remote={"GEMET": GEMET})
    add(store, ids["EARTh"], "1", "water")
    rule = LinkRule("g", SharedKey("http://elsewhere.org/@@EARTh.k@@"), ids["EARTh"], ids["GEMET"])
    with pytest.raises(InvalidPattern):
        link_shared_key(store, rule, {"1": "5"})


def test_find_mentions_prefers_longest():
    labels = {"Fagus": [("S", "1")], "Fagus sylvatica": [("S", "2")], "beech": [("S", "3")]}
    assert find_mentions("Forest dominated by fagus sylvatica.", labels) == {("S", "2")}
    assert find_mentions("Fagus, and beech.", labels) == {("S", "1"), ("S", "3")}
    assert find_mentions("Fagusia beeches", labels) == set()
    assert find_mentions("anything", {}) == set()


_mword = st.text("abc", min_size=1, max_size=3)
_label = st.lists(_mword, min_size=1, max_size=3).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(st.lists(_mword, max_size=12).map(" ".join), st.dictionaries(_label, st.just(None), max_size=6))
def test_find_mentions_matches_regex_oracle(text, raw):
    labels = {lab: [("S", lab)] for lab in raw}
    assert find_mentions(text, labels) == mention_oracle(text, labels)


def test_mention_scan_rule():
    store, ids = small_store(("HAB", "SPECIES"))
    h = add(store, ids["HAB"], "1", "beech forest")
    store.add_note(NoteRecord(ids["HAB"], "1", NoteKind.DEFINITION, "en", "Woods of Fagus sylvatica."))
    s = add(store, ids["SPECIES"], "9", "Fagus sylvatica", lang="la")
    add(store, ids["SPECIES"], "10", "Quercus robur", lang="la")
    cands = link_mention_scan(store, LinkRule("m", MentionScan(), ids["HAB"], ids["SPECIES"]))
    assert [(c.src, c.dst, c.emit) for c in cands] == [(h, s, RK.RELATED)]
    assert apply_links(store, cands) == 2
    assert store.has_relation(s, h, RK.RELATED)


def test_apply_links():
    store, ids = small_store(("EARTh", "HAB"), remote={"GEMET": GEMET})
    a, b = add(store, ids["EARTh"], "1", "x"), add(store, ids["HAB"], "1", "y")
    assert apply_links(store, [LinkCandidate(a, b, 1.0, RK.BROAD_MATCH, True)]) == 2
    assert store.has_relation(b, a, RK.NARROW_MATCH)
    assert all(r.provenance is Provenance.LINKED for r in store.all_relations())
    remote = LinkCandidate(a, (ids["GEMET"], "7"), 1.0, RK.EXACT_MATCH, True)
    assert apply_links(store, [remote]) == 1
    assert apply_links(store, [remote]) == 0
    with pytest.raises(PreconditionViolated):
        apply_links(store, [LinkCandidate(a, b, 0.2, RK.CLOSE_MATCH, False)])


def test_manual_links(tmp_path):
    store, ids = small_store(("EARTh", "BIOGEO"))
    add(store, ids["EARTh"], "42", "alps")
    add(store, ids["BIOGEO"], "alpine", "alpine")
    path = tmp_path / "m.links"
    path.write_text("# curated\nEARTh:42 exactMatch BIOGEO:alpine\n\n", encoding="utf-8")
    (cand,) = load_manual_links(path, store)
    assert (cand.src, cand.dst, cand.emit) == ((ids["EARTh"], "42"), (ids["BIOGEO"], "alpine"), RK.EXACT_MATCH)
    path.write_text("EARTh:42 exactMatch BIOGEO:alpine\nEARTh:42 sameAs BIOGEO:alpine\n", encoding="utf-8")
    with pytest.raises(LinkParseError) as e:
        load_manual_links(path, store)
    assert e.value.line == 2
    path.write_text("NOPE:1 related BIOGEO:alpine\n", encoding="utf-8")
    with pytest.raises(LinkParseError):
        load_manual_links(path, store)
    path.write_text("", encoding="utf-8")
    assert load_manual_links(path, store) == []


def test_candidates_csv():
    store, ids = two_schemes()
    a, b = add(store, ids["EARTh"], "1", "x"), add(store, ids["HAB"], "1", "x")
    text = candidates_csv(store, [LinkCandidate(a, b, 1.0, RK.EXACT_MATCH, True)])
    assert text.splitlines() == ["src_iri,dst_iri,score,emit,accepted",
                                 "http://localhost:2020/resource/EARTh/1,http://localhost:2020/resource/HAB/1,"
                                 "1.000000,exactMatch,true"]


def test_load_rules(tmp_path):
    store, ids = small_store(("EARTh", "HAB"), remote={"GEMET": GEMET})
    path = tmp_path / "rules.ini"
    path.write_text("[sim]\nstrategy = similarity\nsrc = EARTh\ndst = HAB\nthreshold = 0.9\n\n"
                    "[keys]\nstrategy = shared-key\nsrc = EARTh\ndst = GEMET\ntable = t.csv\n"
                    f"pattern = {GEMET}@@EARTh.key@@\n", encoding="utf-8")
    sim, keys = load_rules(path, store)
    assert sim.rule.strategy.config.threshold == 0.9
    assert sim.rule.strategy.config.w_label == 0.6
    assert keys.table == tmp_path / "t.csv" and keys.rule.dst_scheme == ids["GEMET"]


@pytest.mark.parametrize("body", [
    "[r]\nstrategy = fuzzy\nsrc = EARTh\ndst = HAB\n",
    "[r]\nstrategy = similarity\nsrc = EARTh\ndst = NOPE\n",
    "[r]\nstrategy = similarity\nsrc = EARTh\n",
    "[r]\nstrategy = similarity\nsrc = EARTh\ndst = HAB\nw_label = 0.9\n",
    "[r]\nstrategy = similarity\nsrc = EARTh\ndst = EARTh\n",
    "[r]\nstrategy = mention-scan\nsrc = EARTh\ndst = HAB\nemit = broader\n",
    "not an ini file\n",
])
def test_load_rules_errors(tmp_path, body):
    store, _ = two_schemes()
    path = tmp_path / "rules.ini"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(RuleError):
        load_rules(path, store)


def test_empty_rule_file(tmp_path):
    store, _ = two_schemes()
    path = tmp_path / "rules.ini"
    path.write_text("", encoding="utf-8")
    assert load_rules(path, store) == []
