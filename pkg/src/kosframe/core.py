"""RDF atoms, SKOS vocabulary constants and the N-Triples line format.

Everything here is immutable; the rest of the package exchanges these values.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Optional, Union
from urllib.parse import quote

SKOS_NS = "http://www.w3.org/2004/02/skos/core#"
RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
DCTERMS_NS = "http://purl.org/dc/terms/"
VANN_NS = "http://purl.org/vocab/vann/"
VOID_NS = "http://rdfs.org/ns/void#"


class MalformedIri(ValueError):
    pass


class MalformedLanguageTag(ValueError):
    pass


_SCHEME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
# characters that cannot appear unescaped inside an N-Triples IRIREF
_FORBIDDEN_IRI_CHARS = '<>"{}|^`\\'
_BAD_IRI_CHAR = re.compile(r'[\s\x00-\x1f\x7f<>"{}|^`\\]')
_LANG_RE = re.compile(r"^[a-z]{2,8}(-[a-z0-9]{1,8})?$")


def _iri_problem(value: str) -> Optional[str]:
    if not value:
        return "empty IRI"
    if not _SCHEME_RE.match(value):
        return f"missing scheme in {value!r}"
    m = _BAD_IRI_CHAR.search(value)
    if m is None:
        return None
    ch = m.group(0)
    if ch in _FORBIDDEN_IRI_CHARS:
        return f"character {ch!r} not allowed in IRI {value!r}"
    return f"whitespace or control character in {value!r}"


@dataclass(frozen=True, slots=True, order=True)
class Iri:
    value: str

    def __post_init__(self) -> None:
        problem = _iri_problem(self.value)
        if problem:
            raise MalformedIri(problem)

    def __str__(self) -> str:
        return self.value


def parse_iri(s: str) -> Iri:
    """Validate ``s`` syntactically (scheme + no whitespace) and wrap it."""
    return Iri(s)


def parse_lang(tag: str) -> str:
    """Return the canonical (lowercase) form of a language tag."""
    canon = tag.strip().lower()
    if not _LANG_RE.match(canon):
        raise MalformedLanguageTag(f"invalid language tag {tag!r}")
    return canon


@dataclass(frozen=True, slots=True, order=True)
class Literal:
    lexical: str
    lang: Optional[str] = None

    def __post_init__(self) -> None:
        if self.lang is not None:
            canon = parse_lang(self.lang)
            if canon != self.lang:
                object.__setattr__(self, "lang", canon)


Term = Union[Iri, Literal]


class Triple(NamedTuple):
    subject: Iri
    predicate: Iri
    object: Term


class TermKind(enum.Enum):
    PREF_LABEL = "prefLabel"
    ALT_LABEL = "altLabel"
    HIDDEN_LABEL = "hiddenLabel"


class NoteKind(enum.Enum):
    DEFINITION = "definition"
    NOTE = "note"
    SCOPE_NOTE = "scopeNote"
    EDITORIAL_NOTE = "editorialNote"


class RelationKind(enum.Enum):
    BROADER = "broader"
    NARROWER = "narrower"
    RELATED = "related"
    BROADER_TRANSITIVE = "broaderTransitive"
    NARROWER_TRANSITIVE = "narrowerTransitive"
    SEMANTIC_RELATION = "semanticRelation"
    EXACT_MATCH = "exactMatch"
    CLOSE_MATCH = "closeMatch"
    BROAD_MATCH = "broadMatch"
    NARROW_MATCH = "narrowMatch"
    RELATED_MATCH = "relatedMatch"

    # members are singletons compared by identity; skips Enum's Python-level hash
    __hash__ = object.__hash__

    @property
    def inverse(self) -> "RelationKind":
        return _INVERSES.get(self, self)

    @property
    def symmetric(self) -> bool:
        return self.inverse is self


_INVERSES = {
    RelationKind.BROADER: RelationKind.NARROWER,
    RelationKind.NARROWER: RelationKind.BROADER,
    RelationKind.BROADER_TRANSITIVE: RelationKind.NARROWER_TRANSITIVE,
    RelationKind.NARROWER_TRANSITIVE: RelationKind.BROADER_TRANSITIVE,
    RelationKind.BROAD_MATCH: RelationKind.NARROW_MATCH,
    RelationKind.NARROW_MATCH: RelationKind.BROAD_MATCH,
}


def inverse(kind: RelationKind) -> RelationKind:
    return kind.inverse


SkosKind = Union[RelationKind, TermKind, NoteKind]


def skos_iri(kind: SkosKind) -> Iri:
    return _SKOS_IRIS[kind]


_SKOS_IRIS = {k: Iri(SKOS_NS + k.value) for e in (RelationKind, TermKind, NoteKind) for k in e}
_KIND_BY_IRI = {iri: kind for kind, iri in _SKOS_IRIS.items()}


def kind_of(predicate: Iri) -> Optional[SkosKind]:
    """Inverse of :func:`skos_iri`; ``None`` for predicates outside the enumerations."""
    return _KIND_BY_IRI.get(predicate)


RDF_TYPE = Iri(RDF_NS + "type")
RDFS_LABEL = Iri(RDFS_NS + "label")
RDFS_SEE_ALSO = Iri(RDFS_NS + "seeAlso")
SKOS_CONCEPT = Iri(SKOS_NS + "Concept")
SKOS_CONCEPT_SCHEME = Iri(SKOS_NS + "ConceptScheme")
SKOS_IN_SCHEME = Iri(SKOS_NS + "inScheme")
SKOS_HAS_TOP_CONCEPT = Iri(SKOS_NS + "hasTopConcept")
DC_TITLE = Iri(DCTERMS_NS + "title")
DC_DESCRIPTION = Iri(DCTERMS_NS + "description")
DC_PUBLISHER = Iri(DCTERMS_NS + "publisher")
DC_CREATOR = Iri(DCTERMS_NS + "creator")
VANN_PREFIX = Iri(VANN_NS + "preferredNamespacePrefix")
VANN_URI = Iri(VANN_NS + "preferredNamespaceUri")
VOID_ENTITIES = Iri(VOID_NS + "entities")

# RFC 3986 unreserved characters; everything else is percent-encoded
_UNRESERVED = "-._~"


@lru_cache(maxsize=1 << 18)
def urify(value: str) -> str:
    return quote(value, safe=_UNRESERVED, encoding="utf-8")


# --- N-Triples ----------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_ESCAPE_RE = re.compile(r'[\\"\n\r\t]')


def escape_string(s: str) -> str:
    return _ESCAPE_RE.sub(lambda m: _ESCAPES[m.group(0)], s)


def format_term(term: Term) -> str:
    if isinstance(term, Iri):
        return f"<{term.value}>"
    text = f'"{escape_string(term.lexical)}"'
    if term.lang:
        text += "@" + term.lang
    return text


def format_ntriples(t: Triple) -> str:
    """Serialize one triple as an N-Triples line, newline included."""
    return f"{format_term(t.subject)} {format_term(t.predicate)} {format_term(t.object)} .\n"


def canonical_ntriples(triples: Iterable[Triple]) -> bytes:
    """Bytewise-sorted N-Triples document; identical inputs give identical bytes."""
    lines = sorted({format_ntriples(t).encode("utf-8") for t in triples})
    return b"".join(lines)


TURTLE_PREFIXES = (
    ("rdf", RDF_NS),
    ("rdfs", RDFS_NS),
    ("skos", SKOS_NS),
    ("dcterms", DCTERMS_NS),
    ("vann", VANN_NS),
    ("void", VOID_NS),
)
_PN_LOCAL_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


def _turtle_term(term: Term) -> str:
    if isinstance(term, Iri):
        for prefix, ns in TURTLE_PREFIXES:
            if term.value.startswith(ns) and _PN_LOCAL_RE.match(term.value[len(ns):]):
                return f"{prefix}:{term.value[len(ns):]}"
    return format_term(term)


def format_turtle(triples: Iterable[Triple]) -> str:
    """Turtle with one block per subject and objects grouped by predicate.

    Subjects, predicates and objects are sorted by their N-Triples form so the
    output is stable.
    """
    grouped: dict = {}
    for s, p, o in set(triples):
        grouped.setdefault(s, {}).setdefault(p, []).append(o)
    lines = [f"@prefix {prefix}: <{ns}> ." for prefix, ns in TURTLE_PREFIXES]
    for s in sorted(grouped, key=format_term):
        preds = sorted(grouped[s], key=lambda p: (p != RDF_TYPE, format_term(p)))
        lines.append("")
        lines.append(format_term(s))
        for i, p in enumerate(preds):
            objs = " , ".join(_turtle_term(o) for o in sorted(grouped[s][p], key=format_term))
            verb = "a" if p == RDF_TYPE else _turtle_term(p)
            end = " ." if i == len(preds) - 1 else " ;"
            lines.append(f"    {verb} {objs}{end}")
    return "\n".join(lines) + "\n"


class NTriplesError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


_UNESCAPE = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _LineReader:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def fail(self, msg: str) -> NTriplesError:
        return NTriplesError(f"{msg} at column {self.pos + 1}", self.lineno)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def iri(self) -> Iri:
        if self.text[self.pos : self.pos + 1] != "<":
            raise self.fail("expected '<'")
        end = self.text.find(">", self.pos)
        if end < 0:
            raise self.fail("unterminated IRI")
        raw = self.text[self.pos + 1 : end]
        self.pos = end + 1
        if "\\" in raw:
            raw = re.sub(
                r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})",
                lambda m: chr(int(m.group(1) or m.group(2), 16)),
                raw,
            )
        try:
            return Iri(raw)
        except MalformedIri as exc:
            raise self.fail(str(exc)) from None

    def literal(self) -> Literal:
        text = self.text
        i = self.pos + 1
        out = []
        while True:
            if i >= len(text):
                raise self.fail("unterminated string literal")
            ch = text[i]
            if ch == '"':
                break
            if ch == "\\":
                nxt = text[i + 1 : i + 2]
                if nxt in _UNESCAPE:
                    out.append(_UNESCAPE[nxt])
                    i += 2
                elif nxt == "u":
                    out.append(chr(int(text[i + 2 : i + 6], 16)))
                    i += 6
                elif nxt == "U":
                    out.append(chr(int(text[i + 2 : i + 10], 16)))
                    i += 10
                else:
                    self.pos = i
                    raise self.fail("bad escape sequence")
                continue
            out.append(ch)
            i += 1
        i += 1
        lang = None
        if text[i : i + 1] == "@":
            m = re.compile(r"[A-Za-z]+(-[A-Za-z0-9]+)*").match(text, i + 1)
            if not m:
                self.pos = i
                raise self.fail("bad language tag")
            lang = m.group(0)
            i = m.end()
        elif text[i : i + 2] == "^^":
            self.pos = i
            raise self.fail("datatyped literals are not supported")
        self.pos = i
        try:
            return Literal("".join(out), lang)
        except MalformedLanguageTag as exc:
            raise self.fail(str(exc)) from None


_IRIREF = r'<([^<>"{}|^`\\\x00-\x20]*)>'
# escape-free lines, which is nearly everything this package writes
_FAST_LINE = re.compile(
    _IRIREF + r"[ \t]+" + _IRIREF + r"[ \t]+(?:" + _IRIREF
    + r'|"([^"\\\n\r]*)"(?:@([A-Za-z]+(?:-[A-Za-z0-9]+)*))?)[ \t]*\.[ \t]*\r?$'
)


@lru_cache(maxsize=1 << 16)
def _cached_iri(value: str) -> Iri:
    return Iri(value)


@lru_cache(maxsize=256)
def _cached_lang(tag: str) -> str:
    return parse_lang(tag)


def parse_ntriples_line(line: str, lineno: int = 0) -> Optional[Triple]:
    """Parse one N-Triples line; blank and comment lines yield ``None``."""
    m = _FAST_LINE.match(line)
    if m is not None:
        s, p, o, lexical, lang = m.groups()
        try:
            if o is not None:
                return Triple(_cached_iri(s), _cached_iri(p), _cached_iri(o))
            return Triple(_cached_iri(s), _cached_iri(p),
                          Literal(lexical, None if lang is None else _cached_lang(lang)))
        except (MalformedIri, MalformedLanguageTag):
            pass  # let the full reader produce the positioned error
    reader = _LineReader(line.rstrip("\r\n"), lineno)
    reader.skip_ws()
    if reader.pos >= len(reader.text) or reader.text[reader.pos] == "#":
        return None
    s = reader.iri()
    reader.skip_ws()
    p = reader.iri()
    reader.skip_ws()
    if reader.text[reader.pos : reader.pos + 1] == '"':
        o: Term = reader.literal()
    elif reader.text[reader.pos : reader.pos + 2] == "_:":
        raise reader.fail("blank nodes are not supported")
    else:
        o = reader.iri()
    reader.skip_ws()
    if reader.text[reader.pos : reader.pos + 1] != ".":
        raise reader.fail("expected '.'")
    reader.pos += 1
    reader.skip_ws()
    if reader.pos < len(reader.text) and reader.text[reader.pos] != "#":
        raise reader.fail("trailing content")
    return Triple(s, p, o)


def parse_ntriples(text: str) -> Iterator[Triple]:
    # only LF ends a line; splitlines() would also split on \x0b, \x1c, etc.
    for lineno, line in enumerate(text.split("\n"), start=1):
        triple = parse_ntriples_line(line, lineno)
        if triple is not None:
            yield triple
