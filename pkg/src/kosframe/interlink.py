"""Cross-scheme link discovery.

Strategies: label/definition/neighbourhood similarity with a threshold,
shared identifiers (a key column expanded through a URI pattern), scanning
notes for mentions of another scheme's labels, and expert-curated link files.
All of them produce :class:`LinkCandidate` rows; :func:`apply_links` writes the
accepted ones as relations with provenance ``linked``.
"""

from __future__ import annotations

import configparser
import csv
import io
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .core import MalformedIri, NoteKind, RelationKind, TermKind
from .mapping import InvalidPattern, expand_uri_pattern, parse_uri_pattern
from .store import ConceptKey, Provenance, RelationRecord, Store, UnknownConcept, UnknownScheme, _Reader

RK = RelationKind

# -- string measures -----------------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalize(text: str) -> str:
    return " ".join(text.casefold().split())


def normalized_levenshtein(a: str, b: str) -> float:
    a, b = normalize(a), normalize(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


_WORD_RE = re.compile(r"\w+")


def multiset_jaccard(a: Counter, b: Counter) -> float:
    if not a and not b:
        return 1.0
    union = sum((a | b).values())
    return sum((a & b).values()) / union


def token_jaccard(a: str, b: str) -> float:
    return multiset_jaccard(Counter(_WORD_RE.findall(a.casefold())), Counter(_WORD_RE.findall(b.casefold())))


MEASURES = {
    "normalized-levenshtein": normalized_levenshtein,
    "token-jaccard": token_jaccard,
}

# -- rules and candidates --------------------------------------------------------------


@dataclass(frozen=True)
class SimilarityConfig:
    w_label: float = 0.6
    w_def: float = 0.2
    w_neighbor: float = 0.2
    threshold: float = 0.85
    measure: str = "normalized-levenshtein"

    def __post_init__(self) -> None:
        weights = (self.w_label, self.w_def, self.w_neighbor)
        if any(w < 0 or w > 1 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"similarity weights must lie in [0,1] and sum to 1, got {weights}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0,1], got {self.threshold}")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}; expected one of {sorted(MEASURES)}")


@dataclass(frozen=True)
class Similarity:
    config: SimilarityConfig = SimilarityConfig()
    blocking: bool = True


@dataclass(frozen=True)
class SharedKey:
    target_pattern: str
    key_column: str = "key"


@dataclass(frozen=True)
class MentionScan:
    source_note_kind: NoteKind = NoteKind.DEFINITION
    emit: RelationKind = RK.RELATED

    def __post_init__(self) -> None:
        if self.emit not in (RK.RELATED, RK.EXACT_MATCH):
            raise ValueError("mention scan can only emit related or exactMatch")


@dataclass(frozen=True)
class Manual:
    path: str


Strategy = Union[Similarity, SharedKey, MentionScan, Manual]


@dataclass(frozen=True)
class LinkRule:
    name: str
    strategy: Strategy
    src_scheme: int
    dst_scheme: int

    def __post_init__(self) -> None:
        if self.src_scheme == self.dst_scheme and not isinstance(self.strategy, Manual):
            raise ValueError(f"rule {self.name}: source and target scheme must differ")


@dataclass(frozen=True)
class LinkCandidate:
    src: ConceptKey
    dst: ConceptKey
    score: float
    emit: RelationKind
    accepted: bool


class PreconditionViolated(ValueError):
    pass


class LinkParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# -- strategy A: similarity --------------------------------------------------------------


@dataclass
class _Profile:
    labels: List[Tuple[str, str]]  # (lang, text)
    definitions: List[str]
    neighbors: Counter


def _profile(view: _Reader, key: ConceptKey) -> _Profile:
    labels = [(lab.lang, lab.text) for lab in view.labels(key)
              if lab.kind in (TermKind.PREF_LABEL, TermKind.ALT_LABEL)]
    defs = [n.text for n in view.notes(key) if n.kind is NoteKind.DEFINITION]
    neighbors: Counter = Counter()
    for r in view.relations(key):
        if r.rel in (RK.BROADER, RK.NARROWER, RK.RELATED) and view.has_concept(r.dst):
            for lab in view.labels(r.dst):
                if lab.kind is TermKind.PREF_LABEL:
                    neighbors[normalize(lab.text)] += 1
    return _Profile(labels, defs, neighbors)


def label_score(a: _Profile, b: _Profile, measure) -> Optional[float]:
    if not a.labels or not b.labels:
        return None
    shared = {lang for lang, _ in a.labels} & {lang for lang, _ in b.labels}
    best = 0.0
    for la, ta in a.labels:
        for lb, tb in b.labels:
            if shared and not (la == lb and la in shared):
                continue
            best = max(best, measure(ta, tb))
    return best


def similarity_score(a: _Profile, b: _Profile, cfg: SimilarityConfig) -> Tuple[float, float]:
    """(score, label component).  Components missing on either side drop out
    and their weight is redistributed proportionally over the others."""
    measure = MEASURES[cfg.measure]
    parts: List[Tuple[float, float]] = []
    label = label_score(a, b, measure)
    if label is not None:
        parts.append((cfg.w_label, label))
    if a.definitions and b.definitions:
        parts.append((cfg.w_def, max(measure(x, y) for x in a.definitions for y in b.definitions)))
    if a.neighbors and b.neighbors:
        parts.append((cfg.w_neighbor, multiset_jaccard(a.neighbors, b.neighbors)))
    weight = sum(w for w, _ in parts)
    if weight == 0:
        return 0.0, label or 0.0
    score = sum(w * v for w, v in parts) / weight
    return min(1.0, max(0.0, score)), label or 0.0


def trigrams(text: str) -> Set[str]:
    t = normalize(text)
    if len(t) < 3:
        return {t} if t else set()
    return {t[i : i + 3] for i in range(len(t) - 2)}


def link_similarity(view: _Reader, rule: LinkRule) -> List[LinkCandidate]:
    strat = rule.strategy
    assert isinstance(strat, Similarity)
    cfg = strat.config
    for sid in (rule.src_scheme, rule.dst_scheme):
        if view.scheme(sid).remote:
            raise UnknownScheme(f"scheme {sid} is remote; similarity needs local concepts")
    src_keys = list(view.concepts(rule.src_scheme))
    dst_keys = list(view.concepts(rule.dst_scheme))
    profiles = {k: _profile(view, k) for k in src_keys + dst_keys}
    if strat.blocking:
        block: Dict[str, List[ConceptKey]] = defaultdict(list)
        for k in dst_keys:
            grams = set().union(*(trigrams(t) for _, t in profiles[k].labels)) if profiles[k].labels else set()
            for g in grams:
                block[g].append(k)
        pairs = []
        for s in src_keys:
            grams = set().union(*(trigrams(t) for _, t in profiles[s].labels)) if profiles[s].labels else set()
            near = set()
            for g in grams:
                near.update(block.get(g, ()))
            pairs.extend((s, d) for d in sorted(near))
    else:
        pairs = [(s, d) for s in src_keys for d in dst_keys]
    out = []
    for s, d in pairs:
        score, label = similarity_score(profiles[s], profiles[d], cfg)
        emit = RK.EXACT_MATCH if label == 1.0 else RK.CLOSE_MATCH
        out.append(LinkCandidate(s, d, score, emit, score >= cfg.threshold))
    return out


# -- strategy B: shared keys ---------------------------------------------------------------


def link_shared_key(view: _Reader, rule: LinkRule, key_table: Mapping[str, Optional[str]]) -> List[LinkCandidate]:
    """One exactMatch per source concept with a non-null key.

    ``key_table`` maps source local ids to foreign key values.  Every
    placeholder of the rule's pattern is filled with the key; a relative
    pattern is resolved against the target scheme's namespace.
    """
    strat = rule.strategy
    assert isinstance(strat, SharedKey)
    pattern = parse_uri_pattern(strat.target_pattern)
    target = view.scheme(rule.dst_scheme)
    out = []
    for local_id in sorted(key_table):
        key = key_table[local_id]
        if key is None or key.strip() == "":
            continue
        src = (rule.src_scheme, local_id)
        if not view.has_concept(src):
            continue
        row = {p.column.key: key.strip() for p in pattern.placeholders}
        try:
            iri = expand_uri_pattern(pattern, row, target.namespace)
        except MalformedIri as exc:
            raise InvalidPattern(f"cannot expand {strat.target_pattern!r}: {exc}") from None
        dst = view.resolve_iri(iri)
        if dst is None or dst[0] != target.scheme_id:
            raise InvalidPattern(f"{iri} does not fall under the namespace {target.namespace}")
        out.append(LinkCandidate(src, dst, 1.0, RK.EXACT_MATCH, True))
    return out


def key_table_from_rows(table_rows: Iterable[Mapping[str, str]], id_column: str, key_column: str) -> Dict[str, Optional[str]]:
    """Build a shared-key table from CSV-like rows (case-insensitive headers)."""
    out: Dict[str, Optional[str]] = {}
    for raw in table_rows:
        row = {k.strip().lower(): (v or "") for k, v in raw.items()}
        local_id = row.get(id_column.lower(), "").strip()
        if local_id:
            out[local_id] = row.get(key_column.lower()) or None
    return out


# -- mention scan -----------------------------------------------------------------------------


def _is_word(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def find_mentions(text: str, labels: Mapping[str, Sequence[ConceptKey]]) -> Set[ConceptKey]:
    """Concepts whose label occurs in ``text`` as a whole word, case-insensitively.

    Overlapping occurrences are resolved longest-first: a label that sits
    inside a longer matched label does not count.
    """
    by_first: Dict[str, List[str]] = defaultdict(list)
    for label in labels:
        m = _WORD_RE.match(label.lower())
        if m and _is_word(label[0]) and _is_word(label[-1]):
            by_first[m.group(0)].append(label.lower())
    lowered = text.lower()
    hits: List[Tuple[int, int, str]] = []
    for m in _WORD_RE.finditer(lowered):
        start = m.start()
        for label in by_first.get(m.group(0), ()):
            end = start + len(label)
            if lowered.startswith(label, start) and (end == len(lowered) or not _is_word(lowered[end])):
                hits.append((start, end, label))
    hits.sort(key=lambda h: (-(h[1] - h[0]), h[0]))
    taken: List[Tuple[int, int]] = []
    found: Set[ConceptKey] = set()
    original = {lab.lower(): lab for lab in labels}
    for start, end, label in hits:
        if any(start < e and s < end for s, e in taken):
            continue
        taken.append((start, end))
        found.update(labels[original[label]])
    return found


def link_mention_scan(view: _Reader, rule: LinkRule) -> List[LinkCandidate]:
    strat = rule.strategy
    assert isinstance(strat, MentionScan)
    labels: Dict[str, List[ConceptKey]] = defaultdict(list)
    for key in view.concepts(rule.dst_scheme):
        for lab in view.labels(key):
            if lab.kind is TermKind.PREF_LABEL and key not in labels[lab.text]:
                labels[lab.text].append(key)
    out = []
    for src in view.concepts(rule.src_scheme):
        found: Set[ConceptKey] = set()
        for note in view.notes(src):
            if note.kind is strat.source_note_kind:
                found |= find_mentions(note.text, labels)
        for dst in sorted(found):
            out.append(LinkCandidate(src, dst, 1.0, strat.emit, True))
    return out


# -- manual links --------------------------------------------------------------------------------

MANUAL_KEYWORDS = {k.value: k for k in (RK.EXACT_MATCH, RK.CLOSE_MATCH, RK.RELATED, RK.BROAD_MATCH, RK.NARROW_MATCH)}


def load_manual_links(path: Union[str, Path], view: _Reader) -> List[LinkCandidate]:
    """``SRC_PREFIX:local_id REL DST_PREFIX:local_id`` per line, ``#`` comments."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise LinkParseError(f"expected 'SRC REL DST', got {raw.strip()!r}", lineno)
        rel = MANUAL_KEYWORDS.get(fields[1])
        if rel is None:
            raise LinkParseError(f"unknown relation keyword {fields[1]!r}", lineno)
        ends = []
        for ref in (fields[0], fields[2]):
            prefix, sep, local_id = ref.partition(":")
            scheme = view.scheme_by_prefix(prefix) if sep else None
            if scheme is None or not local_id:
                raise LinkParseError(f"cannot resolve {ref!r} (expected PREFIX:local_id with a registered prefix)", lineno)
            ends.append((scheme.scheme_id, local_id))
        out.append(LinkCandidate(ends[0], ends[1], 1.0, rel, True))
    return out


# -- applying and dumping ---------------------------------------------------------------------------


def apply_links(store: Store, candidates: Iterable[LinkCandidate], bidirectional: bool = True) -> int:
    """Insert accepted candidates as ``linked`` relations; returns rows added."""
    candidates = list(candidates)
    for c in candidates:
        if not c.accepted:
            raise PreconditionViolated(f"candidate {c.src} -> {c.dst} was not accepted")
        if not store.has_concept(c.src):
            raise UnknownConcept(f"link source {c.src} is not a stored concept")
    rows = []
    for c in candidates:
        rows.append(RelationRecord(c.src, c.dst, c.emit, Provenance.LINKED))
        if bidirectional and store.has_concept(c.dst):
            rows.append(RelationRecord(c.dst, c.src, c.emit.inverse, Provenance.LINKED))
    return len(store.add_relations(rows))


def candidates_csv(view: _Reader, candidates: Iterable[LinkCandidate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["src_iri", "dst_iri", "score", "emit", "accepted"])
    for c in candidates:
        writer.writerow([view.concept_uri(*c.src).value, view.concept_uri(*c.dst).value,
                         f"{c.score:.6f}", c.emit.value, "true" if c.accepted else "false"])
    return buf.getvalue()


# -- rule files -----------------------------------------------------------------------------------


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class RuleEntry:
    """A rule plus what it needs from outside the store (the key table of a
    shared-key rule)."""

    rule: LinkRule
    table: Optional[Path] = None
    id_column: str = "ID"


_STRATEGIES = ("similarity", "shared-key", "mention-scan", "manual")


def load_rules(path: Union[str, Path], view: _Reader, defaults: SimilarityConfig = SimilarityConfig()) -> List[RuleEntry]:
    """Parse an INI rule file; one section per rule, applied in file order.

    Keys: ``strategy`` (similarity | shared-key | mention-scan | manual),
    ``src``/``dst`` scheme prefixes, and per strategy ``threshold``,
    ``w_label``, ``w_def``, ``w_neighbor``, ``measure``, ``blocking``;
    ``table``, ``id_column``, ``key_column``, ``pattern``; ``note``, ``emit``;
    ``path``.  Relative paths are resolved against the rule file.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise RuleError(f"cannot read rule file {path}: {exc}") from None
    out = []
    for name in parser.sections():
        sec = parser[name]

        def need(key: str) -> str:
            value = sec.get(key, "").strip()
            if not value:
                raise RuleError(f"[{name}] missing '{key}'")
            return value

        def scheme_id(key: str) -> int:
            prefix = need(key)
            rec = view.scheme_by_prefix(prefix)
            if rec is None:
                raise RuleError(f"[{name}] unknown scheme prefix {prefix!r} in '{key}'")
            return rec.scheme_id

        kind = need("strategy")
        if kind not in _STRATEGIES:
            raise RuleError(f"[{name}] strategy must be one of {', '.join(_STRATEGIES)}, got {kind!r}")
        src, dst = scheme_id("src"), scheme_id("dst")
        table = None
        id_column = "ID"
        try:
            if kind == "similarity":
                cfg = SimilarityConfig(
                    w_label=float(sec.get("w_label", defaults.w_label)),
                    w_def=float(sec.get("w_def", defaults.w_def)),
                    w_neighbor=float(sec.get("w_neighbor", defaults.w_neighbor)),
                    threshold=float(sec.get("threshold", defaults.threshold)),
                    measure=sec.get("measure", defaults.measure).strip(),
                )
                strategy: Strategy = Similarity(cfg, sec.getboolean("blocking", True))
            elif kind == "shared-key":
                strategy = SharedKey(need("pattern"), sec.get("key_column", "key").strip())
                parse_uri_pattern(strategy.target_pattern)
                table = path.parent / need("table")
                id_column = sec.get("id_column", "ID").strip()
            elif kind == "mention-scan":
                strategy = MentionScan(NoteKind(sec.get("note", "definition").strip()),
                                       RelationKind(sec.get("emit", "related").strip()))
            else:
                strategy = Manual(str(path.parent / need("path")))
            out.append(RuleEntry(LinkRule(name, strategy, src, dst), table, id_column))
        except (ValueError, InvalidPattern) as exc:
            raise RuleError(f"[{name}] {exc}") from None
    return out


def run_rule(view: _Reader, entry: RuleEntry) -> List[LinkCandidate]:
    rule = entry.rule
    strat = rule.strategy
    if isinstance(strat, Similarity):
        return link_similarity(view, rule)
    if isinstance(strat, MentionScan):
        return link_mention_scan(view, rule)
    if isinstance(strat, Manual):
        cands = load_manual_links(strat.path, view)
        for c in cands:
            if {c.src[0], c.dst[0]} != {rule.src_scheme, rule.dst_scheme} and rule.src_scheme != rule.dst_scheme:
                raise RuleError(f"[{rule.name}] manual link {c.src} -> {c.dst} is outside the rule's schemes")
        return cands
    assert isinstance(strat, SharedKey)
    if entry.table is None:
        raise RuleError(f"[{rule.name}] shared-key rule without a key table")
    try:
        with entry.table.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise RuleError(f"[{rule.name}] cannot read key table: {exc}") from None
    return link_shared_key(view, rule, key_table_from_rows(rows, entry.id_column, strat.key_column))
