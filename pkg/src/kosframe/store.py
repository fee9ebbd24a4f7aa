"""Normalized SKOS repository with copy-on-write snapshots.

The logical model mirrors a relational thesaurus schema: concept schemes,
concepts keyed by ``(scheme_id, local_id)``, labels, notes, semantic relations
and top concepts.  One writer mutates a :class:`Store`; readers work on
:class:`Snapshot` objects, which never change after creation.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple
from urllib.parse import unquote

from .core import (
    DC_CREATOR,
    DC_DESCRIPTION,
    DC_PUBLISHER,
    DC_TITLE,
    RDF_TYPE,
    SKOS_CONCEPT,
    SKOS_CONCEPT_SCHEME,
    SKOS_HAS_TOP_CONCEPT,
    SKOS_IN_SCHEME,
    VANN_PREFIX,
    VANN_URI,
    Iri,
    Literal,
    MalformedIri,
    MalformedLanguageTag,
    NoteKind,
    RelationKind,
    TermKind,
    Triple,
    canonical_ntriples,
    kind_of,
    parse_lang,
    parse_ntriples,
    skos_iri,
    urify,
)

log = logging.getLogger(__name__)

ConceptKey = Tuple[int, str]

NAMESPACE_ENDINGS = ("/", "#", "=")


class StoreError(Exception):
    pass


class NamespaceClash(StoreError):
    pass


class UnknownScheme(StoreError):
    pass


class UnknownConcept(StoreError):
    pass


class DuplicatePrefLabel(StoreError):
    pass


class PrefAltClash(StoreError):
    pass


class InvalidRecord(StoreError):
    pass


class Provenance(enum.Enum):
    ASSERTED = "asserted"
    ENTAILED = "entailed"
    LINKED = "linked"


@dataclass(frozen=True)
class SchemeRecord:
    namespace: str
    title: str
    description: str = ""
    publisher: str = ""
    prefix: str = ""
    remote: bool = False
    authors: Tuple[str, ...] = ()
    scheme_id: Optional[int] = None

    @property
    def iri(self) -> Iri:
        """The scheme's own IRI: its namespace without the trailing separator."""
        ns = self.namespace
        if ns.endswith(("/", "#")) and len(ns) > 1:
            ns = ns[:-1]
        return Iri(ns)


@dataclass(frozen=True, slots=True)
class LabelRecord:
    scheme_id: int
    local_id: str
    kind: TermKind
    lang: str
    text: str

    @property
    def key(self) -> ConceptKey:
        return (self.scheme_id, self.local_id)


@dataclass(frozen=True, slots=True)
class NoteRecord:
    scheme_id: int
    local_id: str
    kind: NoteKind
    lang: Optional[str]
    text: str

    @property
    def key(self) -> ConceptKey:
        return (self.scheme_id, self.local_id)


@dataclass(frozen=True, slots=True)
class RelationRecord:
    src: ConceptKey
    dst: ConceptKey
    rel: RelationKind
    provenance: Provenance = Provenance.ASSERTED


@dataclass(frozen=True, slots=True)
class TopConceptRecord:
    scheme_id: int
    local_id: str


def _split_iri(value: str) -> Optional[Tuple[str, str]]:
    cut = max(value.rfind("/"), value.rfind("#"), value.rfind("="))
    if cut < 0 or cut == len(value) - 1:
        return None
    return value[: cut + 1], value[cut + 1 :]


@lru_cache(maxsize=1 << 18)
def _namespace_and_id(value: str) -> Optional[Tuple[str, str]]:
    """(namespace, local id) when ``value`` is a namespace followed by a urified id."""
    parts = _split_iri(value)
    if parts is None:
        return None
    local_id = unquote(parts[1])
    if urify(local_id) != parts[1]:
        return None
    return parts[0], local_id


@lru_cache(maxsize=1 << 18)
def _concept_iri(namespace: str, local_id: str) -> Iri:
    return Iri(namespace + urify(local_id))


class _Tables:
    """Raw containers.  Inner containers are shared with older snapshots until
    a writer claims them (``owned``)."""

    def __init__(self) -> None:
        self.schemes: Dict[int, SchemeRecord] = {}
        self.by_namespace: Dict[str, int] = {}
        self.by_prefix: Dict[str, int] = {}
        self.concepts: Dict[int, Dict[str, None]] = {}
        self.labels: Dict[ConceptKey, List[LabelRecord]] = {}
        self.notes: Dict[ConceptKey, List[NoteRecord]] = {}
        self.relations: Dict[ConceptKey, Dict[Tuple[ConceptKey, RelationKind], Provenance]] = {}
        self.top: Dict[int, Dict[str, None]] = {}
        self.owned: Set[Tuple[str, object]] = set()
        self.forked = False
        self.version = 0

    def fork(self) -> "_Tables":
        t = _Tables()
        for name in ("schemes", "by_namespace", "by_prefix", "concepts", "labels", "notes", "relations", "top"):
            setattr(t, name, dict(getattr(self, name)))
        t.version = self.version
        t.forked = True
        return t

    def inner(self, table: str, key, factory):
        """Return a writable inner container of ``table`` for ``key``."""
        outer = getattr(self, table)
        current = outer.get(key)
        if current is None:
            current = outer[key] = factory()
            if self.forked:
                self.owned.add((table, key))
        elif self.forked and (table, key) not in self.owned:
            current = outer[key] = current.copy()
            self.owned.add((table, key))
        return current


class _Reader:
    """Read API shared by the live store and its snapshots."""

    _t: _Tables

    # -- schemes --------------------------------------------------------------
    def schemes(self) -> List[SchemeRecord]:
        return [self._t.schemes[k] for k in sorted(self._t.schemes)]

    def scheme(self, scheme_id: int) -> SchemeRecord:
        try:
            return self._t.schemes[scheme_id]
        except KeyError:
            raise UnknownScheme(f"no scheme with id {scheme_id}") from None

    def scheme_by_prefix(self, prefix: str) -> Optional[SchemeRecord]:
        sid = self._t.by_prefix.get(prefix)
        return None if sid is None else self._t.schemes[sid]

    def scheme_by_namespace(self, namespace: str) -> Optional[SchemeRecord]:
        sid = self._t.by_namespace.get(namespace)
        return None if sid is None else self._t.schemes[sid]

    def is_local(self, scheme_id: int) -> bool:
        return not self.scheme(scheme_id).remote

    # -- concepts -------------------------------------------------------------
    def has_concept(self, key: ConceptKey) -> bool:
        ids = self._t.concepts.get(key[0])
        return ids is not None and key[1] in ids

    def concepts(self, scheme_id: Optional[int] = None) -> Iterator[ConceptKey]:
        sids = [scheme_id] if scheme_id is not None else sorted(self._t.concepts)
        for sid in sids:
            for lid in self._t.concepts.get(sid, ()):
                yield (sid, lid)

    def concept_count(self, scheme_id: Optional[int] = None) -> int:
        if scheme_id is not None:
            return len(self._t.concepts.get(scheme_id, ()))
        return sum(len(ids) for ids in self._t.concepts.values())

    def labels(self, key: ConceptKey) -> List[LabelRecord]:
        return list(self._t.labels.get(key, ()))

    def notes(self, key: ConceptKey) -> List[NoteRecord]:
        return list(self._t.notes.get(key, ()))

    def relations(self, key: ConceptKey) -> Iterator[RelationRecord]:
        for (dst, rel), prov in self._t.relations.get(key, {}).items():
            yield RelationRecord(key, dst, rel, prov)

    def all_relations(self) -> Iterator[RelationRecord]:
        for key in list(self._t.relations):
            yield from self.relations(key)

    def relation_triples(self) -> List[Tuple[ConceptKey, ConceptKey, RelationKind]]:
        """Every (src, dst, rel) row as plain tuples; cheaper than :meth:`all_relations` for bulk scans."""
        return [(src, dst, rel) for src, rows in self._t.relations.items() for dst, rel in rows]

    def has_relation(self, src: ConceptKey, dst: ConceptKey, rel: RelationKind) -> bool:
        return (dst, rel) in self._t.relations.get(src, {})

    def relation_count(self) -> int:
        return sum(len(v) for v in self._t.relations.values())

    def top_concepts(self, scheme_id: int) -> List[str]:
        return list(self._t.top.get(scheme_id, ()))

    def pref_label(self, key: ConceptKey, lang: Optional[str] = None) -> Optional[str]:
        best = None
        for rec in self._t.labels.get(key, ()):
            if rec.kind is TermKind.PREF_LABEL:
                if rec.lang == lang:
                    return rec.text
                if best is None or (rec.lang == "en"):
                    best = rec.text
        return best

    # -- IRIs -----------------------------------------------------------------
    def concept_uri(self, scheme_id: int, local_id: str) -> Iri:
        return _concept_iri(self.scheme(scheme_id).namespace, local_id)

    def resolve_iri(self, iri: Iri) -> Optional[ConceptKey]:
        """Concept key whose :meth:`concept_uri` is exactly ``iri``."""
        parts = _namespace_and_id(iri.value)
        if parts is None:
            return None
        sid = self._t.by_namespace.get(parts[0])
        if sid is None:
            return None
        return (sid, parts[1])

    def scheme_of_iri(self, iri: Iri) -> Optional[SchemeRecord]:
        """Scheme whose IRI (not namespace) equals ``iri``."""
        for ending in ("/", "#", ""):
            rec = self.scheme_by_namespace(iri.value + ending)
            if rec is not None and rec.iri == iri:
                return rec
        return None

    # -- triples --------------------------------------------------------------
    def triples_of(self, key: ConceptKey) -> Set[Triple]:
        if not self.has_concept(key):
            raise UnknownConcept(f"no concept {key}")
        subject = self.concept_uri(*key)
        out = {
            Triple(subject, RDF_TYPE, SKOS_CONCEPT),
            Triple(subject, SKOS_IN_SCHEME, self.scheme(key[0]).iri),
        }
        for lab in self._t.labels.get(key, ()):
            out.add(Triple(subject, skos_iri(lab.kind), Literal(lab.text, lab.lang)))
        for note in self._t.notes.get(key, ()):
            out.add(Triple(subject, skos_iri(note.kind), Literal(note.text, note.lang)))
        for (dst, rel) in self._t.relations.get(key, {}):
            out.add(Triple(subject, skos_iri(rel), self.concept_uri(*dst)))
        return out

    def scheme_triples(self, scheme_id: int) -> Set[Triple]:
        rec = self.scheme(scheme_id)
        s = rec.iri
        out = {
            Triple(s, RDF_TYPE, SKOS_CONCEPT_SCHEME),
            Triple(s, DC_TITLE, Literal(rec.title)),
            Triple(s, VANN_URI, Literal(rec.namespace)),
        }
        if rec.prefix:
            out.add(Triple(s, VANN_PREFIX, Literal(rec.prefix)))
        if rec.description:
            out.add(Triple(s, DC_DESCRIPTION, Literal(rec.description)))
        if rec.publisher:
            out.add(Triple(s, DC_PUBLISHER, Literal(rec.publisher)))
        for author in rec.authors:
            out.add(Triple(s, DC_CREATOR, Literal(author)))
        for lid in self._t.top.get(scheme_id, ()):
            out.add(Triple(s, SKOS_HAS_TOP_CONCEPT, self.concept_uri(scheme_id, lid)))
        return out

    def scheme_graph(self, scheme_id: int) -> Set[Triple]:
        """Scheme description plus every triple of every concept in it."""
        out = self.scheme_triples(scheme_id)
        for key in self.concepts(scheme_id):
            out |= self.triples_of(key)
        return out

    def iter_triples(self) -> Iterator[Triple]:
        for rec in self.schemes():
            yield from self.scheme_triples(rec.scheme_id)
        for key in self.concepts():
            yield from self.triples_of(key)

    def triples(self) -> Set[Triple]:
        return set(self.iter_triples())

    def export_ntriples(self) -> bytes:
        return canonical_ntriples(self.iter_triples())


class Snapshot(_Reader):
    """Immutable view of a store at one point in time."""

    def __init__(self, tables: _Tables):
        self._t = tables
        self._lock = threading.RLock()
        self._triple_cache: Optional[frozenset] = None
        self._index = None

    @property
    def version(self) -> int:
        return self._t.version

    def triples(self) -> Set[Triple]:
        with self._lock:
            if self._triple_cache is None:
                self._triple_cache = frozenset(self.iter_triples())
        return set(self._triple_cache)

    def frozen_triples(self) -> frozenset:
        self.triples()
        return self._triple_cache

    def cached(self, name: str, build):
        """Per-snapshot memo for derived read structures (query indexes)."""
        with self._lock:
            if self._index is None:
                self._index = {}
            if name not in self._index:
                self._index[name] = build()
            return self._index[name]


class Store(_Reader):
    """Single-writer SKOS store; call :meth:`snapshot` for concurrent readers."""

    def __init__(self) -> None:
        self._t = _Tables()
        self._shared = False
        self._write_lock = threading.RLock()

    # -- copy-on-write plumbing ----------------------------------------------
    def _w(self) -> _Tables:
        if self._shared:
            self._t = self._t.fork()
            self._shared = False
        self._t.version += 1
        return self._t

    def snapshot(self) -> Snapshot:
        with self._write_lock:
            self._shared = True
            return Snapshot(self._t)

    # -- schemes --------------------------------------------------------------
    def upsert_scheme(self, rec: SchemeRecord) -> int:
        ns = rec.namespace
        try:
            Iri(ns)
        except MalformedIri as exc:
            raise InvalidRecord(f"invalid namespace: {exc}") from None
        if not ns.endswith(NAMESPACE_ENDINGS):
            raise InvalidRecord(f"namespace {ns!r} must end with one of {NAMESPACE_ENDINGS}")
        for ch in "\t\n\r":
            if ch in rec.title or ch in rec.publisher or ch in rec.prefix:
                raise InvalidRecord("tab/newline not allowed in scheme title, publisher or prefix")
        with self._write_lock:
            t = self._t
            existing = t.by_namespace.get(ns)
            if existing is not None and rec.scheme_id not in (None, existing):
                raise NamespaceClash(f"namespace {ns} already registered as scheme {existing}")
            if existing is None and rec.scheme_id is not None and rec.scheme_id in t.schemes:
                raise NamespaceClash(f"scheme id {rec.scheme_id} already used for {t.schemes[rec.scheme_id].namespace}")
            if rec.prefix:
                holder = t.by_prefix.get(rec.prefix)
                if holder is not None and holder != existing:
                    raise NamespaceClash(f"prefix {rec.prefix!r} already used by scheme {holder}")
            if rec.scheme_id is not None and rec.scheme_id < 1:
                raise InvalidRecord("scheme_id must be positive")
            sid = existing if existing is not None else (rec.scheme_id or max(t.schemes, default=0) + 1)
            t = self._w()
            old = t.schemes.get(sid)
            if old is not None and old.prefix and old.prefix != rec.prefix:
                del t.by_prefix[old.prefix]
            t.schemes[sid] = replace(rec, scheme_id=sid)
            t.by_namespace[ns] = sid
            if rec.prefix:
                t.by_prefix[rec.prefix] = sid
            t.concepts.setdefault(sid, {})
            return sid

    def remove_scheme(self, scheme_id: int) -> None:
        """Drop a scheme's concepts and everything hanging off them.

        The registration itself stays, so rows from other schemes that point
        into it still serialize and show up as dangling targets.
        """
        with self._write_lock:
            self.scheme(scheme_id)
            t = self._w()
            for lid in list(t.concepts.get(scheme_id, ())):
                key = (scheme_id, lid)
                t.labels.pop(key, None)
                t.notes.pop(key, None)
                t.relations.pop(key, None)
            t.concepts[scheme_id] = {}
            t.top.pop(scheme_id, None)

    # -- concepts and records -------------------------------------------------
    def add_concept(self, scheme_id: int, local_id: str) -> bool:
        if not local_id:
            raise InvalidRecord("local_id must be non-empty")
        with self._write_lock:
            if scheme_id not in self._t.schemes:
                raise UnknownScheme(f"no scheme with id {scheme_id}")
            if local_id in self._t.concepts.get(scheme_id, ()):
                return False
            t = self._w()
            t.inner("concepts", scheme_id, dict)[local_id] = None
            return True

    def _require_concept(self, key: ConceptKey) -> None:
        if not self.has_concept(key):
            raise UnknownConcept(f"no concept {key[1]!r} in scheme {key[0]}")

    def add_label(self, rec: LabelRecord, check: bool = True) -> bool:
        """Store a label; returns False for an exact duplicate.

        With ``check=False`` the SKOS label constraints are not enforced, so
        that raw external data can be loaded and then reported by validation.
        """
        if not rec.text:
            raise InvalidRecord("label text must be non-empty")
        try:
            lang = parse_lang(rec.lang)
        except MalformedLanguageTag as exc:
            raise InvalidRecord(str(exc)) from None
        if lang != rec.lang:
            rec = replace(rec, lang=lang)
        with self._write_lock:
            key = rec.key
            self._require_concept(key)
            existing = self._t.labels.get(key, ())
            if rec in existing:
                return False
            if check:
                for other in existing:
                    if other.lang != rec.lang:
                        continue
                    if rec.kind is TermKind.PREF_LABEL and other.kind is TermKind.PREF_LABEL:
                        raise DuplicatePrefLabel(
                            f"{key} already has prefLabel {other.text!r}@{lang}; rejected {rec.text!r}"
                        )
                    if other.text == rec.text and {rec.kind, other.kind} == {TermKind.PREF_LABEL, TermKind.ALT_LABEL}:
                        raise PrefAltClash(f"{key}: {rec.text!r}@{lang} is both prefLabel and altLabel")
            t = self._w()
            t.inner("labels", key, list).append(rec)
            return True

    def add_note(self, rec: NoteRecord) -> bool:
        if not rec.text:
            raise InvalidRecord("note text must be non-empty")
        if rec.lang is not None:
            try:
                lang = parse_lang(rec.lang)
            except MalformedLanguageTag as exc:
                raise InvalidRecord(str(exc)) from None
            if lang != rec.lang:
                rec = replace(rec, lang=lang)
        with self._write_lock:
            self._require_concept(rec.key)
            if rec in self._t.notes.get(rec.key, ()):
                return False
            t = self._w()
            t.inner("notes", rec.key, list).append(rec)
            return True

    def add_relation(self, rec: RelationRecord) -> bool:
        """Insert a relation row; duplicates of (src, dst, rel) are ignored."""
        with self._write_lock:
            self._require_concept(rec.src)
            if rec.dst[0] not in self._t.schemes:
                raise UnknownScheme(f"target scheme {rec.dst[0]} is not registered")
            if not rec.dst[1]:
                raise InvalidRecord("target local_id must be non-empty")
            if (rec.dst, rec.rel) in self._t.relations.get(rec.src, {}):
                return False
            t = self._w()
            t.inner("relations", rec.src, dict)[(rec.dst, rec.rel)] = rec.provenance
            return True

    def add_relations(self, records: Iterable[RelationRecord]) -> List[RelationRecord]:
        """Bulk :meth:`add_relation` under one lock; returns the rows actually added."""
        added = []
        with self._write_lock:
            for rec in records:
                if self.add_relation(rec):
                    added.append(rec)
        return added

    def add_top_concept(self, rec: TopConceptRecord) -> bool:
        with self._write_lock:
            self._require_concept((rec.scheme_id, rec.local_id))
            if rec.local_id in self._t.top.get(rec.scheme_id, ()):
                return False
            t = self._w()
            t.inner("top", rec.scheme_id, dict)[rec.local_id] = None
            return True

    # -- persistence ----------------------------------------------------------
    def save(self, directory: Path) -> None:
        save_store(self.snapshot(), directory)

    @classmethod
    def load(cls, directory: Path) -> "Store":
        return load_store(directory)


# -- bulk ingestion of triples --------------------------------------------------


@dataclass
class IngestIssue:
    kind: str
    message: str


@dataclass
class IngestReport:
    concepts: int = 0
    labels: int = 0
    notes: int = 0
    relations: int = 0
    top_concepts: int = 0
    schemes: int = 0
    skipped: int = 0
    issues: List[IngestIssue] = field(default_factory=list)

    def counts(self) -> Dict[str, int]:
        return {"concepts": self.concepts, "labels": self.labels, "relations": self.relations,
                "notes": self.notes, "skipped": self.skipped}

    def summary(self) -> str:
        return " ".join(f"{k}:{v}" for k, v in self.counts().items())

    def issue(self, kind: str, message: str) -> None:
        self.issues.append(IngestIssue(kind, message))


def ingest_triples(
    store: Store,
    triples: Iterable[Triple],
    check: bool = True,
    local_base: Optional[str] = None,
    report: Optional[IngestReport] = None,
    provenance: Provenance = Provenance.ASSERTED,
) -> IngestReport:
    """Decompose SKOS triples into store records.

    Unknown scheme descriptions (``skos:ConceptScheme`` subjects carrying a
    ``vann:preferredNamespaceUri``) are registered first; a scheme is remote
    when ``local_base`` is given and its namespace lies outside it.  Store
    errors are collected per triple in the report, never raised.
    """
    report = report or IngestReport()
    scheme_facts: Dict[Iri, Dict[Iri, List[str]]] = {}
    concept_rows: List[Triple] = []
    other_rows: List[Triple] = []
    type_rows: List[Triple] = []
    for t in triples:
        if t.predicate == RDF_TYPE and t.object == SKOS_CONCEPT_SCHEME:
            scheme_facts.setdefault(t.subject, {})
        elif t.predicate in _SCHEME_PREDICATES and isinstance(t.object, Literal):
            scheme_facts.setdefault(t.subject, {}).setdefault(t.predicate, []).append(t.object.lexical)
        elif t.predicate == RDF_TYPE and t.object == SKOS_CONCEPT:
            type_rows.append(t)
        elif t.predicate == SKOS_HAS_TOP_CONCEPT:
            other_rows.append(t)
        else:
            concept_rows.append(t)

    for subject in sorted(scheme_facts):
        facts = scheme_facts[subject]
        if VANN_URI not in facts:
            continue
        ns = facts[VANN_URI][0]
        existing = store.scheme_by_namespace(ns)
        remote = existing.remote if existing else bool(local_base and not ns.startswith(local_base))
        rec = SchemeRecord(
            namespace=ns,
            title=facts.get(DC_TITLE, [existing.title if existing else ""])[0],
            description=facts.get(DC_DESCRIPTION, [""])[0],
            publisher=facts.get(DC_PUBLISHER, [""])[0],
            prefix=facts.get(VANN_PREFIX, [existing.prefix if existing else ""])[0],
            remote=remote,
            authors=tuple(sorted(facts.get(DC_CREATOR, []))),
            scheme_id=existing.scheme_id if existing else None,
        )
        try:
            store.upsert_scheme(rec)
            if existing is None:
                report.schemes += 1
        except StoreError as exc:
            report.issue(type(exc).__name__, str(exc))

    def resolve(iri: Iri, what: str) -> Optional[ConceptKey]:
        key = store.resolve_iri(iri)
        if key is None:
            report.issue("UnknownScheme", f"{what} {iri} is not under any registered namespace")
        return key

    for t in type_rows:
        key = resolve(t.subject, "concept")
        if key is None:
            continue
        try:
            if store.add_concept(*key):
                report.concepts += 1
        except StoreError as exc:
            report.issue(type(exc).__name__, str(exc))

    for t in concept_rows:
        kind = kind_of(t.predicate)
        if t.predicate == SKOS_IN_SCHEME:
            key = resolve(t.subject, "concept")
            if key is None:
                continue
            if not isinstance(t.object, Iri) or store.scheme(key[0]).iri != t.object:
                report.issue("SchemeMismatch", f"{t.subject} inScheme {t.object} disagrees with its namespace")
            continue
        if kind is None:
            report.skipped += 1
            log.debug("skipping triple with unsupported predicate %s", t.predicate)
            continue
        key = resolve(t.subject, "concept")
        if key is None:
            continue
        try:
            if isinstance(kind, TermKind):
                if not isinstance(t.object, Literal):
                    raise InvalidRecord(f"{kind.value} of {t.subject} must be a literal")
                if t.object.lang is None:
                    raise InvalidRecord(f"{kind.value} {t.object.lexical!r} of {t.subject} has no language tag")
                if store.add_label(LabelRecord(key[0], key[1], kind, t.object.lang, t.object.lexical), check=check):
                    report.labels += 1
            elif isinstance(kind, NoteKind):
                if not isinstance(t.object, Literal):
                    raise InvalidRecord(f"{kind.value} of {t.subject} must be a literal")
                if store.add_note(NoteRecord(key[0], key[1], kind, t.object.lang, t.object.lexical)):
                    report.notes += 1
            else:
                if not isinstance(t.object, Iri):
                    raise InvalidRecord(f"{kind.value} of {t.subject} must be an IRI")
                dst = resolve(t.object, "target")
                if dst is None:
                    continue
                if store.add_relation(RelationRecord(key, dst, kind, provenance)):
                    report.relations += 1
        except StoreError as exc:
            report.issue(type(exc).__name__, str(exc))

    for t in other_rows:
        rec = store.scheme_of_iri(t.subject)
        key = store.resolve_iri(t.object) if isinstance(t.object, Iri) else None
        if rec is None or key is None or key[0] != rec.scheme_id:
            report.issue("UnknownConcept", f"top concept {t.object} does not belong to {t.subject}")
            continue
        try:
            if store.add_top_concept(TopConceptRecord(*key)):
                report.top_concepts += 1
        except StoreError as exc:
            report.issue(type(exc).__name__, str(exc))
    return report


_SCHEME_PREDICATES = frozenset({DC_TITLE, DC_DESCRIPTION, DC_PUBLISHER, DC_CREATOR, VANN_PREFIX, VANN_URI})


# -- on-disk format ---------------------------------------------------------------

REGISTRY_FILE = "schemes.tsv"


def _scheme_file(rec: SchemeRecord, provenance: Provenance = Provenance.ASSERTED) -> str:
    stem = f"{rec.prefix or 'scheme'}-{rec.scheme_id}"
    return f"{stem}.nt" if provenance is Provenance.ASSERTED else f"{stem}.{provenance.value}.nt"


def save_store(snap: _Reader, directory: Path) -> None:
    """Write the registry and canonical N-Triples per scheme: one file for the
    asserted graph and one per other provenance holding those relation rows."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("*.nt"):
        old.unlink()
    lines = []
    for rec in snap.schemes():
        lines.append("\t".join([str(rec.scheme_id), rec.namespace, rec.title, rec.publisher,
                                rec.prefix, "remote" if rec.remote else "local"]))
        derived: Dict[Provenance, Set[Triple]] = {p: set() for p in Provenance if p is not Provenance.ASSERTED}
        for key in snap.concepts(rec.scheme_id):
            for r in snap.relations(key):
                if r.provenance is not Provenance.ASSERTED:
                    derived[r.provenance].add(Triple(snap.concept_uri(*r.src), skos_iri(r.rel),
                                                     snap.concept_uri(*r.dst)))
        graph = snap.scheme_graph(rec.scheme_id)
        for prov, rows in derived.items():
            graph -= rows
            if rows:
                (directory / _scheme_file(rec, prov)).write_bytes(canonical_ntriples(rows))
        (directory / _scheme_file(rec)).write_bytes(canonical_ntriples(graph))
    (directory / REGISTRY_FILE).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_store(directory: Path) -> Store:
    directory = Path(directory)
    store = Store()
    registry = directory / REGISTRY_FILE
    if not registry.exists():
        return store
    recs = []
    for line in registry.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        cols = line.split("\t")
        sid, ns, title, publisher = cols[:4]
        prefix = cols[4] if len(cols) > 4 else ""
        remote = len(cols) > 5 and cols[5] == "remote"
        rec = SchemeRecord(ns, title, publisher=publisher, prefix=prefix, remote=remote, scheme_id=int(sid))
        store.upsert_scheme(rec)
        recs.append(store.scheme(int(sid)))
    # asserted graphs first, so derived rows find their concepts
    for prov in Provenance:
        for rec in recs:
            path = directory / _scheme_file(rec, prov)
            if path.exists():
                report = ingest_triples(store, parse_ntriples(path.read_text(encoding="utf-8")), check=False,
                                        provenance=prov)
                for issue in report.issues:
                    log.warning("%s: %s: %s", path.name, issue.kind, issue.message)
    return store
