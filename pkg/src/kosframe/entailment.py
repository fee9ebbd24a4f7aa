"""SKOS entailment materialization and integrity validation.

The pipeline adds, with provenance ``entailed``:

* inverse / mirror rows for every relation between two local concepts,
* super-property rows (broadMatch => broader => broaderTransitive, ...,
  everything => semanticRelation),
* the transitive closure of broaderTransitive and narrowerTransitive.

It is run to a fixed point, so a second run adds nothing.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Set, Tuple

from .core import RelationKind, TermKind
from .store import ConceptKey, Provenance, RelationRecord, Store, _Reader

RK = RelationKind

# direct super-properties; semanticRelation is added for every kind separately
SUPER_PROPERTIES: Dict[RelationKind, Tuple[RelationKind, ...]] = {
    RK.BROAD_MATCH: (RK.BROADER,),
    RK.NARROW_MATCH: (RK.NARROWER,),
    RK.RELATED_MATCH: (RK.RELATED,),
    RK.BROADER: (RK.BROADER_TRANSITIVE,),
    RK.NARROWER: (RK.NARROWER_TRANSITIVE,),
}


def super_properties(kind: RelationKind) -> Set[RelationKind]:
    """All strict super-properties of ``kind``."""
    out: Set[RelationKind] = set()
    todo = [kind]
    while todo:
        for sup in SUPER_PROPERTIES.get(todo.pop(), ()):
            if sup not in out:
                out.add(sup)
                todo.append(sup)
    if kind is not RK.SEMANTIC_RELATION:
        out.add(RK.SEMANTIC_RELATION)
    return out


@dataclass
class EntailmentReport:
    added: Counter = field(default_factory=Counter)
    iterations: int = 0

    @property
    def total(self) -> int:
        return sum(self.added.values())

    def count(self, rows: Iterable[RelationRecord]) -> "EntailmentReport":
        for r in rows:
            self.added[r.rel] += 1
        return self

    def merge(self, other: "EntailmentReport") -> None:
        self.added.update(other.added)

    def lines(self) -> List[str]:
        return [f"{k.value}\t{self.added.get(k, 0)}" for k in RelationKind] + [f"iterations\t{self.iterations}"]


_SUPERS: Dict[RelationKind, Tuple[RelationKind, ...]] = {
    k: tuple(sorted(super_properties(k), key=lambda r: r.value)) for k in RelationKind
}


def materialize_inverses(store: Store) -> EntailmentReport:
    """Add (d, s, inverse(k)) for every row (s, d, k) whose target is a stored concept."""
    has_concept, has_relation = store.has_concept, store.has_relation
    new = []
    for src, dst, rel in store.relation_triples():
        if src == dst and rel.symmetric:
            continue
        if has_concept(dst) and not has_relation(dst, src, rel.inverse):
            new.append(RelationRecord(dst, src, rel.inverse, Provenance.ENTAILED))
    return EntailmentReport().count(store.add_relations(new))


def subproperty_closure(store: Store) -> EntailmentReport:
    has_relation = store.has_relation
    new = []
    for src, dst, rel in store.relation_triples():
        for sup in _SUPERS[rel]:
            if not has_relation(src, dst, sup):
                new.append(RelationRecord(src, dst, sup, Provenance.ENTAILED))
    return EntailmentReport().count(store.add_relations(new))


def reachability(edges: Dict[ConceptKey, Set[ConceptKey]]) -> Dict[ConceptKey, Set[ConceptKey]]:
    """Nodes reachable by one or more steps, per source node."""
    out = {}
    for start in edges:
        seen: Set[ConceptKey] = set()
        stack = list(edges[start])
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(edges.get(node, ()))
        out[start] = seen
    return out


def transitive_closure(store: Store) -> EntailmentReport:
    """Close broaderTransitive and narrowerTransitive (runs the subproperty step first)."""
    report = subproperty_closure(store)
    graphs: Dict[RelationKind, Dict[ConceptKey, Set[ConceptKey]]] = {
        RK.BROADER_TRANSITIVE: defaultdict(set), RK.NARROWER_TRANSITIVE: defaultdict(set)}
    for src, dst, rel in store.relation_triples():
        if rel in graphs:
            graphs[rel][src].add(dst)
    for kind, edges in graphs.items():
        new = []
        for src, reach in reachability(edges).items():
            for dst in reach:
                if dst not in edges[src]:
                    new.append(RelationRecord(src, dst, kind, Provenance.ENTAILED))
        new.sort(key=lambda r: (r.src, r.dst))
        report.count(store.add_relations(new))
    return report


def entail(store: Store, max_iterations: int = 20) -> EntailmentReport:
    """Repeat the inverse and closure steps until a pass adds nothing."""
    total = EntailmentReport()
    for _ in range(max_iterations):
        total.iterations += 1
        step = EntailmentReport()
        step.merge(materialize_inverses(store))
        step.merge(transitive_closure(store))
        total.merge(step)
        if step.total == 0:
            break
    return total


# -- validation -----------------------------------------------------------------------

ISSUE_KINDS = ("DuplicatePrefLabel", "PrefAltClash", "DanglingTarget", "BroaderCycle", "OrphanTopConcept")


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    subjects: Tuple[ConceptKey, ...]
    detail: str

    def __post_init__(self) -> None:
        if not self.subjects:
            raise ValueError("a validation issue names at least one concept")

    def format(self, view: _Reader) -> str:
        iris = ",".join(view.concept_uri(*k).value for k in self.subjects)
        return f"{self.kind}\t{iris}\t{self.detail}"


def strongly_connected_components(graph: Dict[ConceptKey, Set[ConceptKey]]) -> List[List[ConceptKey]]:
    """Tarjan's algorithm, iterative so deep hierarchies do not hit the recursion limit."""
    index: Dict[ConceptKey, int] = {}
    low: Dict[ConceptKey, int] = {}
    on_stack: Set[ConceptKey] = set()
    stack: List[ConceptKey] = []
    comps: List[List[ConceptKey]] = []
    counter = 0
    for root in sorted(graph):
        if root in index:
            continue
        work = [(root, iter(sorted(graph.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, children = work[-1]
            advanced = False
            for child in children:
                if child not in index:
                    index[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(sorted(graph.get(child, ())))))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    top = stack.pop()
                    on_stack.discard(top)
                    comp.append(top)
                    if top == node:
                        break
                comps.append(sorted(comp))
    return comps


def validate(view: _Reader) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    for key in view.concepts():
        prefs: Dict[str, List[str]] = defaultdict(list)
        alts: Set[Tuple[str, str]] = set()
        for lab in view.labels(key):
            if lab.kind is TermKind.PREF_LABEL:
                prefs[lab.lang].append(lab.text)
            elif lab.kind is TermKind.ALT_LABEL:
                alts.add((lab.lang, lab.text))
        for lang in sorted(prefs):
            if len(set(prefs[lang])) > 1:
                texts = ", ".join(repr(t) for t in sorted(set(prefs[lang])))
                issues.append(ValidationIssue("DuplicatePrefLabel", (key,), f"@{lang}: {texts}"))
        for lang in sorted(prefs):
            for text in sorted(set(prefs[lang])):
                if (lang, text) in alts:
                    issues.append(ValidationIssue("PrefAltClash", (key,), f"{text!r}@{lang} is both prefLabel and altLabel"))

    dangling: Dict[Tuple[ConceptKey, ConceptKey], Set[str]] = defaultdict(set)
    broader: Dict[ConceptKey, Set[ConceptKey]] = defaultdict(set)
    for r in view.all_relations():
        if view.is_local(r.dst[0]) and not view.has_concept(r.dst):
            dangling[(r.src, r.dst)].add(r.rel.value)
        if r.rel is RK.BROADER and r.provenance is not Provenance.ENTAILED and view.has_concept(r.dst):
            broader[r.src].add(r.dst)
    for (src, dst) in sorted(dangling):
        rels = ",".join(sorted(dangling[(src, dst)]))
        issues.append(ValidationIssue(
            "DanglingTarget", (src,), f"{rels} -> missing {view.concept_uri(*dst).value}"))

    for comp in strongly_connected_components(broader):
        if len(comp) > 1 or comp[0] in broader.get(comp[0], ()):
            issues.append(ValidationIssue("BroaderCycle", tuple(comp), f"{len(comp)} concept(s) in a broader cycle"))

    for rec in view.schemes():
        for lid in view.top_concepts(rec.scheme_id):
            key = (rec.scheme_id, lid)
            parents = sorted(d for d in broader.get(key, ()) if d[0] == rec.scheme_id)
            if parents:
                issues.append(ValidationIssue(
                    "OrphanTopConcept", (key,), f"top concept has broader {view.concept_uri(*parents[0]).value}"))
    order = {k: i for i, k in enumerate(ISSUE_KINDS)}
    issues.sort(key=lambda i: (order[i.kind], i.subjects))
    return issues
