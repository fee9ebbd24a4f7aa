"""A SPARQL SELECT subset: basic graph patterns, three filter forms, LIMIT/OFFSET.

Anything outside the subset fails with :class:`UnsupportedFeature` naming
the construct, so clients can tell "not supported" from "malformed".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

from .core import RDF_TYPE, Iri, Literal, MalformedIri, MalformedLanguageTag, Term, Triple, format_term, parse_lang
from .mapping import DEFAULT_PREFIXES


class QueryError(ValueError):
    pass


class QuerySyntaxError(QueryError):
    pass


class UnsupportedFeature(QueryError):
    def __init__(self, feature: str):
        super().__init__(f"unsupported SPARQL feature: {feature}")
        self.feature = feature


class UnboundVariable(QueryError):
    def __init__(self, name: str):
        super().__init__(f"variable ?{name} does not occur in any triple pattern")
        self.name = name


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


Slot = Union[Var, Iri, Literal]


@dataclass(frozen=True)
class TriplePattern:
    s: Slot
    p: Slot
    o: Slot

    def variables(self) -> List[str]:
        return [x.name for x in (self.s, self.p, self.o) if isinstance(x, Var)]


@dataclass(frozen=True)
class LangEquals:
    var: str
    tag: str


@dataclass(frozen=True)
class TermEquals:
    var: str
    term: Term


@dataclass(frozen=True)
class Regex:
    var: str
    pattern: str
    case_insensitive: bool = False


Filter = Union[LangEquals, TermEquals, Regex]


@dataclass(frozen=True)
class SelectQuery:
    variables: Tuple[str, ...]
    patterns: Tuple[TriplePattern, ...]
    filters: Tuple[Filter, ...] = ()
    limit: Optional[int] = None
    offset: Optional[int] = None
    star: bool = False


@dataclass(frozen=True)
class BindingSet:
    variables: Tuple[str, ...]
    rows: Tuple[Tuple[Term, ...], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def dicts(self) -> List[Dict[str, Term]]:
        return [dict(zip(self.variables, row)) for row in self.rows]


# -- tokenizer -----------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<typed>\^\^)
  | (?P<number>[+-]?\d+(?:\.\d+)?)
  | (?P<pname>(?:[A-Za-z][\w.-]*)?:(?:[\w%-](?:[\w.%-]*[\w%-])?)?)
  | (?P<blank>_:\w+|\[\s*\])
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}().,;*=!<>&|])
    """,
    re.VERBOSE,
)

_UNSUPPORTED_WORDS = {
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "CONSTRUCT", "DESCRIBE",
    "ASK", "ORDER", "GROUP", "HAVING", "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE",
    "FROM", "EXISTS", "NOT", "BASE", "WITH", "COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE",
}

_STRING_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> List[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(0), pos))
        pos = m.end()
    return out


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[nxt])
            i += 2
        elif nxt in "uU":
            width = 4 if nxt == "u" else 8
            out.append(chr(int(body[i + 2 : i + 2 + width], 16)))
            i += 2 + width
        else:
            raise QuerySyntaxError(f"bad escape \\{nxt} in string literal")
    return "".join(out)


# -- parser ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes: Dict[str, str] = {}

    def peek(self, offset: int = 0) -> Optional[_Tok]:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError(f"unexpected end of query, expected {what}")
        self.i += 1
        return tok

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "word" and tok.text.upper() == word

    def expect_word(self, word: str) -> None:
        tok = self.next(word)
        if tok.kind != "word" or tok.text.upper() != word:
            self.reject(tok, word)

    def expect_punct(self, p: str) -> None:
        tok = self.next(repr(p))
        if tok.text != p:
            self.reject(tok, repr(p))

    def reject(self, tok: _Tok, expected: str):
        if tok.kind == "word" and tok.text.upper() in _UNSUPPORTED_WORDS:
            raise UnsupportedFeature(tok.text.upper())
        if tok.kind == "blank":
            raise UnsupportedFeature("blank nodes")
        raise QuerySyntaxError(f"expected {expected} but found {tok.text!r} at offset {tok.pos}")

    def parse(self) -> SelectQuery:
        for tok in self.toks:
            if tok.kind == "word" and tok.text.upper() in _UNSUPPORTED_WORDS:
                raise UnsupportedFeature(tok.text.upper())
        while self.at_word("PREFIX") or self.at_word("BASE"):
            if self.at_word("BASE"):
                raise UnsupportedFeature("BASE")
            self.i += 1
            name = self.next("prefix name")
            if name.kind != "pname" or not name.text.endswith(":"):
                raise QuerySyntaxError(f"bad PREFIX name {name.text!r}")
            iri = self.next("namespace IRI")
            if iri.kind != "iri":
                raise QuerySyntaxError(f"expected <namespace> after PREFIX {name.text}")
            self.prefixes[name.text[:-1]] = iri.text[1:-1]
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError("empty query")
        if not self.at_word("SELECT"):
            self.reject(tok, "SELECT")
        self.i += 1
        if self.at_word("DISTINCT") or self.at_word("REDUCED"):
            self.i += 1
        star = False
        variables: List[str] = []
        if self.peek() is not None and self.peek().text == "*":
            self.i += 1
            star = True
        else:
            while self.peek() is not None and self.peek().kind == "var":
                variables.append(self.next("variable").text[1:])
            if not variables:
                tok = self.next("projection")
                if tok.text == "(":
                    raise UnsupportedFeature("projection expressions")
                self.reject(tok, "?variable or *")
        if self.at_word("WHERE"):
            self.i += 1
        patterns, filters = self.group()
        limit = offset = None
        while self.peek() is not None:
            tok = self.next("LIMIT or OFFSET")
            word = tok.text.upper() if tok.kind == "word" else None
            if word in ("LIMIT", "OFFSET"):
                n = self.next("integer")
                if n.kind != "number" or not n.text.isdigit():
                    raise QuerySyntaxError(f"{word} needs a non-negative integer, got {n.text!r}")
                if word == "LIMIT":
                    if limit is not None:
                        raise QuerySyntaxError("LIMIT given twice")
                    limit = int(n.text)
                else:
                    if offset is not None:
                        raise QuerySyntaxError("OFFSET given twice")
                    offset = int(n.text)
            else:
                self.reject(tok, "LIMIT, OFFSET or end of query")
        if not patterns:
            raise QuerySyntaxError("WHERE clause has no triple pattern")
        bound: List[str] = []
        for tp in patterns:
            for v in tp.variables():
                if v not in bound:
                    bound.append(v)
        if star:
            variables = bound
        for v in variables:
            if v not in bound:
                raise UnboundVariable(v)
        for f in filters:
            if f.var not in bound:
                raise UnboundVariable(f.var)
        if len(set(variables)) != len(variables):
            raise QuerySyntaxError("a variable is projected twice")
        return SelectQuery(tuple(variables), tuple(patterns), tuple(filters), limit, offset, star)

    def group(self) -> Tuple[List[TriplePattern], List[Filter]]:
        self.expect_punct("{")
        patterns: List[TriplePattern] = []
        filters: List[Filter] = []
        while True:
            tok = self.peek()
            if tok is None:
                raise QuerySyntaxError("unterminated '{'")
            if tok.text == "}":
                self.i += 1
                return patterns, filters
            if tok.text == ".":
                self.i += 1
                continue
            if tok.text == "{":
                raise UnsupportedFeature("nested group patterns")
            if tok.kind == "word" and tok.text.upper() == "FILTER":
                self.i += 1
                filters.append(self.filter())
                continue
            if tok.kind == "word" and tok.text != "a":
                self.reject(tok, "triple pattern")
            patterns.extend(self.triples_block())

    def triples_block(self) -> List[TriplePattern]:
        s = self.slot("subject", allow_literal=False)
        out = []
        while True:
            p = self.slot("predicate", allow_literal=False, verb=True)
            while True:
                o = self.slot("object", allow_literal=True)
                out.append(TriplePattern(s, p, o))
                if self.peek() is not None and self.peek().text == ",":
                    self.i += 1
                    continue
                break
            if self.peek() is not None and self.peek().text == ";":
                self.i += 1
                if self.peek() is not None and self.peek().text in (".", "}"):
                    break
                continue
            break
        tok = self.peek()
        if tok is not None and tok.text not in (".", "}"):
            if tok.kind == "word" and tok.text.upper() == "FILTER":
                return out
            self.reject(tok, "'.' or '}'")
        return out

    def slot(self, what: str, allow_literal: bool, verb: bool = False) -> Slot:
        tok = self.next(what)
        if tok.kind == "var":
            return Var(tok.text[1:])
        if verb and tok.kind == "word" and tok.text == "a":
            return RDF_TYPE
        if tok.kind in ("iri", "pname"):
            return self.iri(tok)
        if tok.kind == "string":
            if not allow_literal:
                raise QuerySyntaxError(f"a literal cannot be the {what}")
            return self.literal(tok)
        if tok.kind == "number":
            raise UnsupportedFeature("numeric literals")
        if verb and tok.text in ("^", "/", "|", "!", "("):
            raise UnsupportedFeature("property paths")
        self.reject(tok, what)
        raise AssertionError  # unreachable

    def iri(self, tok: _Tok) -> Iri:
        if tok.kind == "iri":
            text = tok.text[1:-1]
        else:
            prefix, _, local = tok.text.partition(":")
            ns = self.prefixes.get(prefix, DEFAULT_PREFIXES.get(prefix))
            if ns is None:
                raise QuerySyntaxError(f"undeclared prefix {prefix!r}:")
            text = ns + local
        try:
            return Iri(text)
        except MalformedIri as exc:
            raise QuerySyntaxError(str(exc)) from None

    def literal(self, tok: _Tok) -> Literal:
        lexical = _unescape(tok.text[1:-1])
        nxt = self.peek()
        if nxt is not None and nxt.kind == "typed":
            raise UnsupportedFeature("datatyped literals")
        lang = None
        if nxt is not None and nxt.kind == "lang":
            self.i += 1
            try:
                lang = parse_lang(nxt.text[1:])
            except MalformedLanguageTag as exc:
                raise QuerySyntaxError(str(exc)) from None
        return Literal(lexical, lang)

    def filter(self) -> Filter:
        tok = self.peek()
        if tok is not None and tok.kind == "word" and tok.text.lower() == "regex":
            return self.regex()
        self.expect_punct("(")
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError("unterminated FILTER")
        if tok.kind == "word" and tok.text.lower() == "regex":
            f = self.regex()
        elif tok.kind == "word" and tok.text.lower() == "lang":
            self.i += 1
            self.expect_punct("(")
            var = self.variable()
            self.expect_punct(")")
            self.expect_punct("=")
            s = self.next("language tag string")
            if s.kind != "string":
                raise QuerySyntaxError("lang(?v) must be compared with a string")
            tag = _unescape(s.text[1:-1])
            if tag:
                try:
                    tag = parse_lang(tag)
                except MalformedLanguageTag as exc:
                    raise QuerySyntaxError(str(exc)) from None
            f = LangEquals(var, tag)
        elif tok.kind == "var":
            var = self.variable()
            op = self.next("'='")
            if op.text in ("<", ">", "!"):
                raise UnsupportedFeature("comparison operators")
            if op.text != "=":
                self.reject(op, "'='")
            other = self.next("term")
            if other.kind == "string":
                term: Term = self.literal(other)
            elif other.kind in ("iri", "pname"):
                term = self.iri(other)
            elif other.kind == "number":
                raise UnsupportedFeature("numeric literals")
            else:
                self.reject(other, "IRI or literal")
            f = TermEquals(var, term)
        elif tok.kind == "word":
            raise UnsupportedFeature(f"FILTER function {tok.text}")
        else:
            raise UnsupportedFeature(f"FILTER expression starting with {tok.text!r}")
        nxt = self.next("')'")
        if nxt.text != ")":
            if nxt.text in ("&", "|", "!", "<", ">"):
                raise UnsupportedFeature("compound FILTER expressions")
            self.reject(nxt, "')'")
        return f

    def variable(self) -> str:
        tok = self.next("variable")
        if tok.kind != "var":
            raise QuerySyntaxError(f"expected a variable, found {tok.text!r}")
        return tok.text[1:]

    def regex(self) -> Regex:
        self.i += 1
        self.expect_punct("(")
        var = self.variable()
        self.expect_punct(",")
        pat = self.next("pattern string")
        if pat.kind != "string":
            raise QuerySyntaxError("regex pattern must be a string")
        pattern = _unescape(pat.text[1:-1])
        flags = ""
        if self.peek() is not None and self.peek().text == ",":
            self.i += 1
            fl = self.next("flags string")
            if fl.kind != "string":
                raise QuerySyntaxError("regex flags must be a string")
            flags = _unescape(fl.text[1:-1])
        if set(flags) - {"i"}:
            raise UnsupportedFeature(f"regex flags {flags!r}")
        try:
            re.compile(pattern)
        except re.error as exc:
            raise QuerySyntaxError(f"bad regex {pattern!r}: {exc}") from None
        self.expect_punct(")")
        return Regex(var, pattern, "i" in flags)


def parse_select(text: str) -> SelectQuery:
    return _Parser(text).parse()


# -- evaluation -------------------------------------------------------------------------


class TripleIndex:
    """Three nested-dict permutations (s-p-o, p-o-s, o-s-p) over a triple set."""

    def __init__(self, triples: Iterable[Triple]):
        self.spo: Dict[Term, Dict[Term, Set[Term]]] = {}
        self.pos: Dict[Term, Dict[Term, Set[Term]]] = {}
        self.osp: Dict[Term, Dict[Term, Set[Term]]] = {}
        for s, p, o in triples:
            self.spo.setdefault(s, {}).setdefault(p, set()).add(o)
            self.pos.setdefault(p, {}).setdefault(o, set()).add(s)
            self.osp.setdefault(o, {}).setdefault(s, set()).add(p)

    def match(self, s: Optional[Term], p: Optional[Term], o: Optional[Term]) -> Iterator[Triple]:
        if s is not None:
            by_p = self.spo.get(s, {})
            preds = [p] if p is not None else list(by_p)
            for pp in preds:
                objs = by_p.get(pp, ())
                if o is not None:
                    if o in objs:
                        yield Triple(s, pp, o)
                else:
                    for oo in objs:
                        yield Triple(s, pp, oo)
        elif p is not None:
            by_o = self.pos.get(p, {})
            objs = [o] if o is not None else list(by_o)
            for oo in objs:
                for ss in by_o.get(oo, ()):
                    yield Triple(ss, p, oo)
        elif o is not None:
            for ss, preds in self.osp.get(o, {}).items():
                for pp in preds:
                    yield Triple(ss, pp, o)
        else:
            for ss, by_p in self.spo.items():
                for pp, objs in by_p.items():
                    for oo in objs:
                        yield Triple(ss, pp, oo)

    def estimate(self, s: Optional[Term], p: Optional[Term], o: Optional[Term]) -> int:
        if s is not None:
            return sum(len(v) for v in self.spo.get(s, {}).values()) if p is None else len(self.spo.get(s, {}).get(p, ()))
        if p is not None:
            return len(self.pos.get(p, {}).get(o, ())) if o is not None else sum(len(v) for v in self.pos.get(p, {}).values())
        if o is not None:
            return sum(len(v) for v in self.osp.get(o, {}).values())
        return 1 << 62


def index_of(source) -> TripleIndex:
    """Index for a Snapshot (built once per snapshot and cached) or any triple iterable."""
    if isinstance(source, TripleIndex):
        return source
    cached = getattr(source, "cached", None)
    if cached is not None:
        return cached("query-index", lambda: TripleIndex(source.frozen_triples()))
    return TripleIndex(source)


def _passes(f: Filter, value: Term) -> bool:
    if isinstance(f, LangEquals):
        return isinstance(value, Literal) and (value.lang or "") == f.tag
    if isinstance(f, TermEquals):
        return value == f.term
    if not isinstance(value, Literal):
        return False
    return re.search(f.pattern, value.lexical, re.IGNORECASE if f.case_insensitive else 0) is not None


def _resolve(slot: Slot, binding: Dict[str, Term]) -> Optional[Term]:
    if isinstance(slot, Var):
        return binding.get(slot.name)
    return slot


def _extend(tp: TriplePattern, t: Triple, binding: Dict[str, Term]) -> Optional[Dict[str, Term]]:
    out = binding
    for slot, value in zip((tp.s, tp.p, tp.o), t):
        if isinstance(slot, Var):
            have = out.get(slot.name)
            if have is None:
                if out is binding:
                    out = dict(binding)
                out[slot.name] = value
            elif have != value:
                return None
    return out


def sort_key(row: Sequence[Term]) -> Tuple[bytes, ...]:
    return tuple(format_term(t).encode("utf-8") for t in row)


def evaluate(q: SelectQuery, source) -> BindingSet:
    index = index_of(source)
    filters_by_var: Dict[str, List[Filter]] = {}
    for f in q.filters:
        filters_by_var.setdefault(f.var, []).append(f)

    remaining = list(q.patterns)
    bound: Set[str] = set()
    order = []
    while remaining:
        def cost(tp: TriplePattern):
            free = sum(1 for x in (tp.s, tp.p, tp.o) if isinstance(x, Var) and x.name not in bound)
            ground = [None if isinstance(x, Var) else x for x in (tp.s, tp.p, tp.o)]
            return (free, index.estimate(*ground))
        best = min(remaining, key=cost)
        remaining.remove(best)
        order.append(best)
        bound.update(best.variables())

    def ok(binding: Dict[str, Term], names: Iterable[str]) -> bool:
        return all(_passes(f, binding[n]) for n in names for f in filters_by_var.get(n, ()))

    bindings: List[Dict[str, Term]] = [{}]
    for tp in order:
        nxt = []
        for b in bindings:
            fresh = [v for v in tp.variables() if v not in b]
            for t in index.match(_resolve(tp.s, b), _resolve(tp.p, b), _resolve(tp.o, b)):
                ext = _extend(tp, t, b)
                if ext is not None and ok(ext, set(fresh)):
                    nxt.append(ext)
        bindings = nxt
        if not bindings:
            break
    rows = {tuple(b[v] for v in q.variables) for b in bindings}
    ordered = sorted(rows, key=sort_key)
    start = q.offset or 0
    end = None if q.limit is None else start + q.limit
    return BindingSet(q.variables, tuple(ordered[start:end]))


def query(text: str, source) -> BindingSet:
    return evaluate(parse_select(text), source)


def term_json(term: Term) -> Dict[str, str]:
    if isinstance(term, Iri):
        return {"type": "uri", "value": term.value}
    out = {"type": "literal", "value": term.lexical}
    if term.lang:
        out["xml:lang"] = term.lang
    return out


def results_json(b: BindingSet) -> str:
    doc = {
        "head": {"vars": list(b.variables)},
        "results": {"bindings": [{v: term_json(t) for v, t in zip(b.variables, row)} for row in b.rows]},
    }
    return json.dumps(doc, ensure_ascii=False)
