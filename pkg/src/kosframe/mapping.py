"""Declarative table-to-SKOS mapping language (a D2RQ-flavoured subset).

A mapping file is a sequence of Turtle-like blocks::

    map:EARTh a d2rq:ClassMap;
        d2rq:uriPattern "EARTh/@@EARTh.ID|urify@@";
        d2rq:class skos:Concept;
    .

Class maps turn rows of one base table into subjects; property bridges attach
values to those subjects, optionally through inner joins and equality
conditions.  Evaluation is materializing: it returns a set of triples.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .core import (
    DCTERMS_NS,
    RDF_NS,
    RDF_TYPE,
    RDFS_NS,
    SKOS_NS,
    Iri,
    Literal,
    MalformedIri,
    MalformedLanguageTag,
    Triple,
    parse_lang,
    urify,
)
from .store import IngestReport, Store, ingest_triples

D2RQ_NS = "http://www.wiwiss.fu-berlin.de/suhl/bizer/D2RQ/0.1#"

DEFAULT_PREFIXES = {
    "rdf": RDF_NS,
    "rdfs": RDFS_NS,
    "skos": SKOS_NS,
    "dcterms": DCTERMS_NS,
    "d2rq": D2RQ_NS,
    "owl": "http://www.w3.org/2002/07/owl#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}


class MappingError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class MappingSyntaxError(MappingError):
    pass


class UnknownDirective(MappingError):
    pass


class DanglingBridge(MappingError):
    pass


class InvalidPattern(MappingError):
    pass


class UnknownTable(MappingError):
    pass


class UnknownColumn(MappingError):
    pass


class NullColumn(Exception):
    """A referenced column is NULL (empty); the row produces no URI."""


# -- AST -----------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnRef:
    table: Optional[str]
    column: str

    @property
    def key(self) -> str:
        return f"{self.table}.{self.column}".lower() if self.table else self.column.lower()

    def __str__(self) -> str:
        return f"{self.table}.{self.column}" if self.table else self.column


@dataclass(frozen=True)
class Placeholder:
    column: ColumnRef
    urify: bool = False


@dataclass(frozen=True)
class UriPattern:
    parts: Tuple[Union[str, Placeholder], ...]

    @property
    def placeholders(self) -> List[Placeholder]:
        return [p for p in self.parts if isinstance(p, Placeholder)]

    @property
    def absolute(self) -> bool:
        head = self.parts[0] if self.parts and isinstance(self.parts[0], str) else ""
        return bool(re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*:", head))

    def __str__(self) -> str:
        out = []
        for p in self.parts:
            if isinstance(p, str):
                out.append(p)
            else:
                out.append(f"@@{p.column}{'|urify' if p.urify else ''}@@")
        return "".join(out)


@dataclass(frozen=True)
class UriConcat:
    parts: Tuple[Union[str, ColumnRef], ...]

    def __str__(self) -> str:
        rendered = [f"'{p}'" if isinstance(p, str) else str(p) for p in self.parts]
        return f"CONCAT({','.join(rendered)})"


@dataclass(frozen=True)
class Condition:
    column: ColumnRef
    values: Tuple[str, ...]

    def __str__(self) -> str:
        return " OR ".join(f"{self.column}='{v}'" for v in self.values)


@dataclass(frozen=True)
class Join:
    left: ColumnRef
    right: ColumnRef

    def __str__(self) -> str:
        return f"{self.left}=> {self.right}"


ValueSource = Union[ColumnRef, UriPattern, UriConcat]


@dataclass
class ClassMap:
    name: str
    uri_pattern: UriPattern
    rdf_class: Optional[Iri] = None
    conditions: List[Condition] = field(default_factory=list)

    @property
    def base_table(self) -> str:
        return self.uri_pattern.placeholders[0].column.table or ""


@dataclass
class PropertyBridge:
    name: str
    belongs_to: str
    property: Iri
    value: ValueSource
    lang: Optional[str] = None
    joins: List[Join] = field(default_factory=list)
    conditions: List[Condition] = field(default_factory=list)


@dataclass
class MappingSpec:
    prefixes: Dict[str, str] = field(default_factory=dict)
    class_maps: List[ClassMap] = field(default_factory=list)
    bridges: List[PropertyBridge] = field(default_factory=list)

    def class_map(self, name: str) -> ClassMap:
        for cm in self.class_maps:
            if cm.name == name:
                return cm
        raise KeyError(name)

    def bridges_of(self, name: str) -> List[PropertyBridge]:
        return [b for b in self.bridges if b.belongs_to == name]


# -- expression parsers ------------------------------------------------------------

_IDENT = r"[A-Za-z_][\w\-]*"
_COLREF_RE = re.compile(rf"^\s*({_IDENT})\s*(?:\.\s*({_IDENT}))?\s*$")


def parse_column_ref(text: str, line: int = 0, qualified: bool = True) -> ColumnRef:
    # stray whitespace around the dot ("EARTh. prefLabelIt") is tolerated
    m = _COLREF_RE.match(text)
    if not m or (qualified and m.group(2) is None):
        raise InvalidPattern(f"expected table.column, got {text!r}", line)
    if m.group(2) is None:
        return ColumnRef(None, m.group(1))
    return ColumnRef(m.group(1), m.group(2))


def parse_uri_pattern(text: str, line: int = 0) -> UriPattern:
    pieces = text.split("@@")
    if len(pieces) % 2 == 0:
        raise InvalidPattern(f"unbalanced @@ delimiters in {text!r}", line)
    parts: List[Union[str, Placeholder]] = []
    for i, piece in enumerate(pieces):
        if i % 2 == 0:
            piece = piece.strip() if i == 0 or i == len(pieces) - 1 else piece
            if piece:
                parts.append(piece)
            continue
        col, _, fn = piece.partition("|")
        fn = fn.strip()
        if fn not in ("", "urify"):
            raise InvalidPattern(f"unsupported placeholder function {fn!r}", line)
        parts.append(Placeholder(parse_column_ref(col, line, qualified=False), fn == "urify"))
    pattern = UriPattern(tuple(parts))
    if not pattern.placeholders:
        raise InvalidPattern(f"URI pattern {text!r} has no @@column@@ placeholder", line)
    return pattern


def _strip_embedded_comments(text: str) -> str:
    return "\n".join(ln for ln in text.splitlines() if not ln.strip().startswith("#"))


_EQ_RE = re.compile(rf"^\s*({_IDENT}\s*(?:\.\s*{_IDENT})?)\s*=\s*('([^']*)'|\"([^\"]*)\"|([^\s']+))\s*$")


def parse_condition(text: str, line: int = 0) -> Condition:
    """``t.c='v'`` or a disjunction ``t.c='v1' OR t.c='v2'`` over one column."""
    body = _strip_embedded_comments(text)
    column: Optional[ColumnRef] = None
    values: List[str] = []
    for clause in re.split(r"\s+OR\s+", body.strip(), flags=re.IGNORECASE):
        m = _EQ_RE.match(clause)
        if not m:
            raise InvalidPattern(f"unsupported condition {clause.strip()!r}", line)
        ref = parse_column_ref(m.group(1), line)
        if column is not None and ref != column:
            raise InvalidPattern("a disjunction must test a single column", line)
        column = ref
        value = next(v for v in (m.group(3), m.group(4), m.group(5)) if v is not None)
        values.append(value)
    if column is None:
        raise InvalidPattern("empty condition", line)
    return Condition(column, tuple(values))


_JOIN_RE = re.compile(r"^(.+?)\s*(=>|<=|=)\s*(.+)$")


def parse_join(text: str, line: int = 0) -> Join:
    m = _JOIN_RE.match(text.strip())
    if not m:
        raise InvalidPattern(f"bad join {text!r}", line)
    left, op, right = parse_column_ref(m.group(1), line), m.group(2), parse_column_ref(m.group(3), line)
    if left.table and right.table and left.table.lower() == right.table.lower():
        raise InvalidPattern("self-joins are not supported", line)
    # join direction is irrelevant for inner-join semantics
    if op == "<=":
        left, right = right, left
    return Join(left, right)


_CONCAT_RE = re.compile(r"^\s*CONCAT\s*\((.*)\)\s*$", re.IGNORECASE | re.DOTALL)


def parse_concat(text: str, line: int = 0) -> UriConcat:
    m = _CONCAT_RE.match(text)
    if not m:
        raise InvalidPattern(f"only CONCAT(...) URI expressions are supported, got {text.strip()!r}", line)
    parts: List[Union[str, ColumnRef]] = []
    for arg in next(csv.reader([m.group(1)], quotechar="'", skipinitialspace=True)):
        arg = arg.strip()
        if not arg:
            raise InvalidPattern("empty CONCAT argument", line)
        if re.fullmatch(rf"{_IDENT}\s*\.\s*{_IDENT}", arg):
            parts.append(parse_column_ref(arg, line))
        else:
            parts.append(arg)
    if not any(isinstance(p, ColumnRef) for p in parts):
        raise InvalidPattern("CONCAT needs at least one column", line)
    return UriConcat(tuple(parts))


# -- block grammar ---------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<iri><[^>\s]*>)
  | (?P<punct>[;,])
  | (?P<name>[^\s;,"<>]+)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    pos, line = 0, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MappingSyntaxError(f"unexpected character {text[pos]!r}", line)
        kind, value = m.lastgroup, m.group(0)
        if kind == "string":
            toks.append(_Tok("string", re.sub(r'\\(.)', r"\1", value[1:-1]), line))
        elif kind == "iri":
            toks.append(_Tok("iri", value[1:-1], line))
        elif kind == "punct":
            toks.append(_Tok(value, value, line))
        elif kind == "name":
            # a trailing "." ends the statement; names never end with one
            stripped = value.rstrip(".")
            if stripped:
                toks.append(_Tok("name", stripped, line))
            for _ in range(len(value) - len(stripped)):
                toks.append(_Tok(".", ".", line))
        line += value.count("\n")
        pos = m.end()
    return toks


_CLASSMAP_KEYS = {"dataStorage", "uriPattern", "class", "classDefinitionLabel", "condition", "uriSqlExpression"}
_BRIDGE_KEYS = {
    "belongsToClassMap", "property", "column", "lang", "uriPattern", "uriSqlExpression",
    "join", "condition", "propertyDefinitionLabel", "dataStorage",
}


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.spec = MappingSpec()

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1].line if self.toks else 1
            raise MappingSyntaxError(f"unexpected end of file, expected {what}", last)
        self.i += 1
        return tok

    def resolve(self, tok: _Tok) -> Iri:
        try:
            if tok.kind == "iri":
                return Iri(tok.text)
            if tok.kind == "name" and ":" in tok.text:
                prefix, local = tok.text.split(":", 1)
                ns = self.spec.prefixes.get(prefix, DEFAULT_PREFIXES.get(prefix))
                if ns is None:
                    raise MappingSyntaxError(f"undeclared prefix {prefix!r}", tok.line)
                return Iri(ns + local)
        except MalformedIri as exc:
            raise MappingSyntaxError(str(exc), tok.line) from None
        raise MappingSyntaxError(f"expected an IRI or prefixed name, got {tok.text!r}", tok.line)

    def parse(self) -> MappingSpec:
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "name" and tok.text in ("@prefix", "PREFIX"):
                self.prefix_decl()
            else:
                self.statement()
        self.check()
        return self.spec

    def prefix_decl(self) -> None:
        kw = self.next("@prefix")
        name = self.next("prefix name")
        if name.kind != "name" or not name.text.endswith(":"):
            raise MappingSyntaxError("expected 'name:' after @prefix", name.line)
        iri = self.next("namespace IRI")
        if iri.kind != "iri":
            raise MappingSyntaxError("expected <namespace> in prefix declaration", iri.line)
        prefix = name.text[:-1]
        if prefix in self.spec.prefixes:
            raise MappingSyntaxError(f"prefix {prefix!r} declared twice", name.line)
        self.spec.prefixes[prefix] = iri.text
        if kw.text == "@prefix":
            end = self.next("'.'")
            if end.kind != ".":
                raise MappingSyntaxError("prefix declaration must end with '.'", end.line)

    def statement(self) -> None:
        first = self.peek()
        words = []
        while True:
            tok = self.next("'a'")
            if tok.kind == "name" and tok.text == "a" and words:
                break
            if tok.kind != "name":
                raise MappingSyntaxError(f"unexpected {tok.text!r} in subject", tok.line)
            words.append(tok.text)
        subject = "".join(words)
        rdf_type = self.resolve(self.next("block type"))
        pairs: List[Tuple[str, _Tok]] = []
        sep = self.next("';' or '.'")
        while sep.kind != ".":
            if sep.kind != ";":
                raise MappingSyntaxError(f"expected ';' or '.', got {sep.text!r}", sep.line)
            key = self.next("directive or '.'")
            if key.kind in (".", ";"):
                sep = key
                continue
            if key.kind != "name" or ":" not in key.text:
                raise MappingSyntaxError(f"expected a directive, got {key.text!r}", key.line)
            value = self.next("value")
            if value.kind == "name" and value.text == "a":
                raise MappingSyntaxError(
                    f"block {subject} (line {first.line}) is missing its terminating '.'", key.line
                )
            if value.kind in (";", ".", ","):
                raise MappingSyntaxError(f"missing value for {key.text}", value.line)
            pairs.append((key.text, value))
            sep = self.next("';' or '.'")
        self.build(subject, rdf_type, pairs, first.line)

    def build(self, subject: str, rdf_type: Iri, pairs: List[Tuple[str, _Tok]], line: int) -> None:
        kind = rdf_type.value[len(D2RQ_NS):] if rdf_type.value.startswith(D2RQ_NS) else None
        if kind == "Database":
            return
        if kind not in ("ClassMap", "PropertyBridge"):
            raise UnknownDirective(f"unsupported block type {rdf_type.value}", line)
        allowed = _CLASSMAP_KEYS if kind == "ClassMap" else _BRIDGE_KEYS
        fields: Dict[str, List[_Tok]] = {}
        for key, tok in pairs:
            iri = self.resolve(_Tok("name", key, tok.line))
            local = iri.value[len(D2RQ_NS):] if iri.value.startswith(D2RQ_NS) else None
            if local not in allowed:
                raise UnknownDirective(f"unsupported directive {key} in {kind}", tok.line)
            fields.setdefault(local, []).append(tok)

        def one(name: str, required: bool = False) -> Optional[_Tok]:
            toks = fields.get(name, [])
            if len(toks) > 1:
                raise MappingSyntaxError(f"d2rq:{name} given more than once", toks[1].line)
            if not toks and required:
                raise MappingSyntaxError(f"{subject} lacks d2rq:{name}", line)
            return toks[0] if toks else None

        def string(tok: _Tok) -> str:
            if tok.kind != "string":
                raise MappingSyntaxError(f"expected a quoted string, got {tok.text!r}", tok.line)
            return tok.text

        conditions = [parse_condition(string(t), t.line) for t in fields.get("condition", [])]
        if kind == "ClassMap":
            if "uriSqlExpression" in fields:
                raise InvalidPattern("class maps must use d2rq:uriPattern", line)
            pat_tok = one("uriPattern", required=True)
            pattern = parse_uri_pattern(string(pat_tok), pat_tok.line)
            tables = {p.column.table.lower() if p.column.table else None for p in pattern.placeholders}
            if None in tables or len(tables) != 1:
                raise InvalidPattern("a class map URI pattern must reference columns of exactly one table", pat_tok.line)
            (base,) = tables
            for cond in conditions:
                if (cond.column.table or "").lower() != base:
                    raise InvalidPattern("class map conditions may only test its base table", line)
            cls_tok = one("class")
            if any(cm.name == subject for cm in self.spec.class_maps):
                raise MappingSyntaxError(f"class map {subject} defined twice", line)
            self.spec.class_maps.append(
                ClassMap(subject, pattern, self.resolve(cls_tok) if cls_tok else None, conditions)
            )
            return

        owner = one("belongsToClassMap", required=True)
        prop = one("property", required=True)
        sources = [n for n in ("column", "uriPattern", "uriSqlExpression") if n in fields]
        if len(sources) != 1:
            raise MappingSyntaxError(f"{subject} needs exactly one of d2rq:column, d2rq:uriPattern, d2rq:uriSqlExpression", line)
        src_tok = one(sources[0])
        if sources[0] == "column":
            value: ValueSource = parse_column_ref(string(src_tok), src_tok.line)
        elif sources[0] == "uriPattern":
            value = parse_uri_pattern(string(src_tok), src_tok.line)
            if any(p.column.table is None for p in value.placeholders):
                raise InvalidPattern("pattern columns must be table-qualified", src_tok.line)
        else:
            value = parse_concat(string(src_tok), src_tok.line)
        lang_tok = one("lang")
        lang = None
        if lang_tok is not None:
            if sources[0] != "column":
                raise MappingSyntaxError("d2rq:lang only applies to d2rq:column bridges", lang_tok.line)
            try:
                lang = parse_lang(string(lang_tok))
            except MalformedLanguageTag as exc:
                raise MappingSyntaxError(str(exc), lang_tok.line) from None
        joins = [parse_join(string(t), t.line) for t in fields.get("join", [])]
        self.spec.bridges.append(
            PropertyBridge(subject, owner.text, self.resolve(prop), value, lang, joins, conditions)
        )
        self._bridge_lines[subject] = owner.line

    _bridge_lines: Dict[str, int]

    def check(self) -> None:
        names = {cm.name for cm in self.spec.class_maps}
        for b in self.spec.bridges:
            if b.belongs_to not in names:
                raise DanglingBridge(f"{b.name} belongs to undeclared class map {b.belongs_to}",
                                     self._bridge_lines.get(b.name, 0))


def parse_mapping(text: str) -> MappingSpec:
    """Parse and validate a mapping document."""
    parser = _Parser(text)
    parser._bridge_lines = {}
    return parser.parse()


def format_mapping(spec: MappingSpec) -> str:
    """Pretty-print a spec; ``parse_mapping(format_mapping(s)) == s``."""
    out: List[str] = []
    for name, ns in spec.prefixes.items():
        out.append(f"@prefix {name}: <{ns}> .")
    if out:
        out.append("")

    def q(s: str) -> str:
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    for cm in spec.class_maps:
        out.append(f"{cm.name} a d2rq:ClassMap;")
        out.append(f"    d2rq:uriPattern {q(str(cm.uri_pattern))};")
        if cm.rdf_class is not None:
            out.append(f"    d2rq:class <{cm.rdf_class.value}>;")
        for c in cm.conditions:
            out.append(f"    d2rq:condition {q(str(c))};")
        out.append(".")
        out.append("")
    for b in spec.bridges:
        out.append(f"{b.name} a d2rq:PropertyBridge;")
        out.append(f"    d2rq:belongsToClassMap {b.belongs_to};")
        out.append(f"    d2rq:property <{b.property.value}>;")
        if isinstance(b.value, ColumnRef):
            out.append(f"    d2rq:column {q(str(b.value))};")
        elif isinstance(b.value, UriPattern):
            out.append(f"    d2rq:uriPattern {q(str(b.value))};")
        else:
            out.append(f"    d2rq:uriSqlExpression {q(str(b.value))};")
        if b.lang:
            out.append(f"    d2rq:lang {q(b.lang)};")
        for j in b.joins:
            out.append(f"    d2rq:join {q(str(j))};")
        for c in b.conditions:
            out.append(f"    d2rq:condition {q(str(c))};")
        out.append(".")
        out.append("")
    return "\n".join(out)


# -- tables ------------------------------------------------------------------------------


@dataclass
class Table:
    name: str
    columns: Tuple[str, ...]
    rows: List[Tuple[str, ...]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index = {c.lower(): i for i, c in enumerate(self.columns)}
        if len(self._index) != len(self.columns):
            raise ValueError(f"table {self.name}: duplicate column names (case-insensitive)")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"table {self.name}: row {row!r} has {len(row)} values, expected {len(self.columns)}")

    def col(self, name: str) -> int:
        return self._index[name.lower()]

    def has_column(self, name: str) -> bool:
        return name.lower() in self._index


class TableSet(dict):
    """Named tables; lookup is case-insensitive on table names."""

    def __init__(self, tables: Iterable[Table] = ()):
        super().__init__()
        for t in tables:
            self.add(t)

    def add(self, table: Table) -> None:
        self[table.name.lower()] = table

    def get_table(self, name: str) -> Table:
        return self[name.lower()]


@dataclass
class CsvProblem:
    path: str
    line: int
    message: str


def load_csv_table(path: Path, problems: Optional[List[CsvProblem]] = None) -> Table:
    """Load one CSV file (RFC 4180).  Header names may be qualified with the
    table name; rows with the wrong arity are reported and skipped."""
    path = Path(path)
    name = path.stem
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return Table(name, ())
        columns = []
        for h in header:
            h = h.strip()
            if "." in h and h.split(".", 1)[0].strip().lower() == name.lower():
                h = h.split(".", 1)[1].strip()
            columns.append(h)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(columns):
                msg = f"expected {len(columns)} fields, got {len(row)}"
                if problems is None:
                    raise ValueError(f"{path}:{reader.line_num}: {msg}")
                problems.append(CsvProblem(str(path), reader.line_num, msg))
                continue
            rows.append(tuple(row))
    return Table(name, tuple(columns), rows)


def load_tables(directory: Path, problems: Optional[List[CsvProblem]] = None) -> TableSet:
    return TableSet(load_csv_table(p, problems) for p in sorted(Path(directory).glob("*.csv")))


# -- evaluation ---------------------------------------------------------------------------


def expand_uri_pattern(pattern: UriPattern, row: Mapping[str, str], base: str = "") -> Iri:
    """Substitute placeholder columns from ``row`` (keyed by lowercase
    ``table.column`` or bare column).  Relative patterns are prefixed with
    ``base``.  Raises :class:`NullColumn` when a referenced value is empty."""
    out = []
    for part in pattern.parts:
        if isinstance(part, str):
            out.append(part)
            continue
        value = row.get(part.column.key)
        if value is None and part.column.table is not None:
            value = row.get(part.column.column.lower())
        if value is None:
            raise KeyError(f"row does not supply column {part.column}")
        if value == "":
            raise NullColumn(str(part.column))
        out.append(urify(value) if part.urify else value)
    text = "".join(out)
    return Iri(text if pattern.absolute else base + text)


@dataclass
class EvalStats:
    null_skipped: int = 0
    malformed: int = 0


def _refs_of_bridge(b: PropertyBridge) -> List[ColumnRef]:
    refs = [c.column for c in b.conditions]
    for j in b.joins:
        refs += [j.left, j.right]
    if isinstance(b.value, ColumnRef):
        refs.append(b.value)
    elif isinstance(b.value, UriPattern):
        refs += [p.column for p in b.value.placeholders]
    else:
        refs += [p for p in b.value.parts if isinstance(p, ColumnRef)]
    return refs


def check_references(spec: MappingSpec, tables: TableSet) -> None:
    """Fail fast on references to tables or columns that are not loaded."""
    refs: List[ColumnRef] = []
    for cm in spec.class_maps:
        refs += [p.column for p in cm.uri_pattern.placeholders] + [c.column for c in cm.conditions]
    for b in spec.bridges:
        refs += _refs_of_bridge(b)
    for ref in refs:
        if ref.table is None or ref.table.lower() not in tables:
            raise UnknownTable(f"table {ref.table!r} (in {ref}) is not loaded")
        if not tables.get_table(ref.table).has_column(ref.column):
            raise UnknownColumn(f"column {ref} does not exist")


class _Binding:
    """Row lookup over a partial join: table name -> row tuple."""

    __slots__ = ("rows", "tables")

    def __init__(self, tables: TableSet, rows: Dict[str, Tuple[str, ...]]):
        self.tables = tables
        self.rows = rows

    def value(self, ref: ColumnRef) -> str:
        t = ref.table.lower()
        return self.rows[t][self.tables[t].col(ref.column)]

    def get(self, key: str, default=None):
        table, _, column = key.partition(".")
        if not column or table not in self.rows:
            return default
        return self.rows[table][self.tables[table].col(column)]


def _passes(table: Table, row: Tuple[str, ...], conds: Sequence[Condition]) -> bool:
    for c in conds:
        v = row[table.col(c.column.column)]
        if v == "" or v not in c.values:
            return False
    return True


def joined_rows(
    b: PropertyBridge, base: str, base_rows: Sequence[Tuple[str, ...]], tables: TableSet
) -> List[Dict[str, Tuple[str, ...]]]:
    """Inner join of the bridge's tables, seeded with ``base_rows``.

    Conditions are single-column, so they are applied as per-table filters
    before joining.  Join columns that are NULL never match.
    """
    involved = {r.table.lower() for r in _refs_of_bridge(b)} | {base}
    conds: Dict[str, List[Condition]] = {t: [] for t in involved}
    for c in b.conditions:
        conds[c.column.table.lower()].append(c)
    filtered = {
        t: [r for r in (base_rows if t == base else tables[t].rows) if _passes(tables[t], r, conds[t])]
        for t in involved
    }
    edges = [(j.left.table.lower(), j.left.column, j.right.table.lower(), j.right.column) for j in b.joins]
    partial: List[Dict[str, Tuple[str, ...]]] = [{base: r} for r in filtered[base]]
    bound = {base}
    while len(bound) < len(involved) and partial:
        # prefer a table connected to what is already bound
        nxt = None
        for lt, lc, rt, rc in edges:
            if lt in bound and rt not in bound:
                nxt = rt
                break
            if rt in bound and lt not in bound:
                nxt = lt
                break
        if nxt is None:
            nxt = sorted(involved - bound)[0]
        keys = []  # (bound table, bound col, new col)
        for lt, lc, rt, rc in edges:
            if rt == nxt and lt in bound:
                keys.append((lt, lc, rc))
            elif lt == nxt and rt in bound:
                keys.append((rt, rc, lc))
        table = tables[nxt]
        if keys:
            index: Dict[Tuple[str, ...], List[Tuple[str, ...]]] = {}
            new_cols = [table.col(k[2]) for k in keys]
            for r in filtered[nxt]:
                k = tuple(r[i] for i in new_cols)
                if "" in k:
                    continue
                index.setdefault(k, []).append(r)
            lookups = [(bt, tables[bt].col(bc)) for bt, bc, _ in keys]
            grown = []
            for p in partial:
                k = tuple(p[bt][i] for bt, i in lookups)
                for r in index.get(k, ()):
                    q = dict(p)
                    q[nxt] = r
                    grown.append(q)
        else:
            grown = [dict(p, **{nxt: r}) for p in partial for r in filtered[nxt]]
        partial = grown
        bound.add(nxt)
    # equalities between tables bound earlier (join cycles)
    result = []
    for p in partial:
        ok = True
        for lt, lc, rt, rc in edges:
            lv = p[lt][tables[lt].col(lc)]
            rv = p[rt][tables[rt].col(rc)]
            if lv == "" or lv != rv:
                ok = False
                break
        if ok:
            result.append(p)
    return result


def _object_of(b: PropertyBridge, binding: _Binding, base: str):
    if isinstance(b.value, ColumnRef):
        text = binding.value(b.value)
        if text == "":
            raise NullColumn(str(b.value))
        return Literal(text, b.lang)
    if isinstance(b.value, UriPattern):
        return expand_uri_pattern(b.value, binding, base)
    pieces = []
    for part in b.value.parts:
        if isinstance(part, str):
            pieces.append(part)
        else:
            v = binding.value(part)
            if v == "":
                raise NullColumn(str(part))
            pieces.append(v)
    return Iri("".join(pieces))


def evaluate(spec: MappingSpec, tables: TableSet, base: str, stats: Optional[EvalStats] = None) -> Set[Triple]:
    """Materialize the mapping over ``tables``; relative URI patterns resolve against ``base``."""
    check_references(spec, tables)
    stats = stats if stats is not None else EvalStats()
    out: Set[Triple] = set()
    for cm in spec.class_maps:
        base_name = cm.base_table.lower()
        table = tables[base_name]
        subjects: Dict[Tuple[str, ...], Iri] = {}
        for row in table.rows:
            if not _passes(table, row, cm.conditions):
                continue
            try:
                subj = expand_uri_pattern(cm.uri_pattern, _Binding(tables, {base_name: row}), base)
            except NullColumn:
                stats.null_skipped += 1
                continue
            except MalformedIri:
                stats.malformed += 1
                continue
            subjects[row] = subj
            if cm.rdf_class is not None:
                out.add(Triple(subj, RDF_TYPE, cm.rdf_class))
        for b in spec.bridges_of(cm.name):
            for rows in joined_rows(b, base_name, list(subjects), tables):
                try:
                    obj = _object_of(b, _Binding(tables, rows), base)
                except NullColumn:
                    stats.null_skipped += 1
                    continue
                except MalformedIri:
                    stats.malformed += 1
                    continue
                out.add(Triple(subjects[rows[base_name]], b.property, obj))
    return out


def evaluate_to_store(
    spec: MappingSpec, tables: TableSet, store: Store, base: str, check: bool = True
) -> IngestReport:
    """Evaluate and decompose the triples into store records.

    Per-row store errors (duplicate prefLabels, unknown targets, ...) are
    collected in the report; reference errors abort before anything is stored.
    """
    stats = EvalStats()
    triples = evaluate(spec, tables, base, stats)
    report = IngestReport()
    report.skipped += stats.null_skipped + stats.malformed
    return ingest_triples(store, sorted(triples, key=_triple_order), check=check, report=report)


def _triple_order(t: Triple):
    # deterministic insertion order, so "first prefLabel wins" is reproducible
    obj = t.object
    return (t.subject.value, t.predicate.value, isinstance(obj, Literal), str(obj) if isinstance(obj, Iri) else obj.lexical,
            getattr(obj, "lang", None) or "")
