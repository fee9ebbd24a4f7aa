"""Deterministic synthetic datasets shaped like the nature-conservation roster:
a bilingual general thesaurus, three small classifications (protected-site
categories, threats, bio-geographical regions), habitat types whose
definitions mention species, and a species taxonomy, plus two remote
stand-ins (GEMET and the official EUNIS species dataset).

Only cardinalities and feature shapes are mirrored; every term is generated.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

from .config import Config, SchemeEntry, format_config

# nominal full-scale counts of the real vocabularies, for reference only
FULL_SCALE = {"EARTh": 14340, "IUCN": 8, "HABITATS": 5431, "SPECIES": 183447, "THREATS": 12, "REGIONS": 68}

GEMET_NS = "http://www.eionet.europa.eu/gemet/concept?cp="
EUNIS_NS = "http://eunis.eea.europa.eu/species/"


@dataclass(frozen=True)
class SchemeShape:
    prefix: str
    title: str
    count: int
    languages: Tuple[str, ...]
    alt_labels: bool = False
    definitions: bool = False
    related: bool = False

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"{self.prefix}: concept count must be at least 1")


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 7
    base: str = "http://localhost:2020/"
    earth: int = 500
    habitats: int = 200
    species: int = 1000
    iucn: int = 8
    threats: int = 12
    regions: int = 68
    manual_links: int = 12

    def shapes(self) -> List[SchemeShape]:
        return [
            SchemeShape("EARTh", "EARTh general thesaurus", self.earth, ("en", "it"), True, True, True),
            SchemeShape("IUCN", "Protected area management categories", self.iucn, ("en",), definitions=True),
            SchemeShape("HABITATS", "Habitat types", self.habitats, ("en",), definitions=True),
            SchemeShape("SPECIES", "Species taxonomy", self.species, ("la",), alt_labels=True),
            SchemeShape("THREATS", "Main threats to biodiversity", self.threats, ("en",)),
            SchemeShape("REGIONS", "European ecological regions", self.regions, ("en",)),
        ]

    def total(self) -> int:
        return sum(s.count for s in self.shapes())

    def scaled(self, total: int) -> "FixtureSpec":
        """Grow the species scheme so the whole fixture holds ``total`` concepts."""
        extra = total - self.total()
        return self if extra <= 0 else replace(self, species=self.species + extra)


# -- pseudo-words ---------------------------------------------------------------------

_ONSETS = ["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "br", "cr", "gl", "pl", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ae", "io"]
_CODAS = ["", "", "n", "r", "s", "l", "x"]


class Words:
    """Unique pseudo-words from a seeded generator."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: Set[str] = set()

    def word(self, syllables: Tuple[int, int] = (2, 3), suffix: str = "") -> str:
        while True:
            n = self.rng.randint(*syllables)
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(n))
            w += self.rng.choice(_CODAS) + suffix
            if w not in self.used:
                self.used.add(w)
                return w

    def phrase(self, words: int) -> str:
        return " ".join(self.word() for _ in range(words))


# -- table generation ----------------------------------------------------------------------


@dataclass
class TableData:
    columns: List[str]
    rows: List[Dict[str, str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, self.columns, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({c: row.get(c, "") for c in self.columns})
        return buf.getvalue()


def _tree_parents(rng: random.Random, n: int, roots: int, max_depth: int) -> List[Optional[int]]:
    """Parent index per node; node i only points at an earlier node, so no cycles."""
    parents: List[Optional[int]] = []
    depth: List[int] = []
    for i in range(n):
        if i < roots:
            parents.append(None)
            depth.append(0)
            continue
        while True:
            p = rng.randrange(i)
            if depth[p] < max_depth:
                break
        parents.append(p)
        depth.append(depth[p] + 1)
    return parents


def _ids(prefix: str, n: int) -> List[str]:
    return [str(i + 1) for i in range(n)]


def earth_table(spec: FixtureSpec, rng: random.Random) -> TableData:
    n = spec.earth
    words_en, words_it = Words(rng), Words(rng)
    cols = ["ID", "prefLabelEn", "prefLabelIt", "altLabelEn", "altLabelIt", "descriptionEn", "descriptionIt",
            "BT", "RT", "NT", "LinkToGEMET", "linkToBiogeographicalRegions", "inScheme"]
    t = TableData(cols)
    ids = _ids("EARTh", n)
    parents = _tree_parents(rng, n, roots=min(10, n), max_depth=5)
    first_child: Dict[int, int] = {}
    for i, p in enumerate(parents):
        if p is not None:
            first_child.setdefault(p, i)
    gemet = rng.sample(range(100, 100 + 20 * n), n)
    for i in range(n):
        row = {
            "ID": ids[i],
            "prefLabelEn": words_en.phrase(rng.choice((1, 1, 2))),
            "prefLabelIt": words_it.phrase(rng.choice((1, 1, 2))),
            "inScheme": "EARTh",
        }
        if rng.random() < 0.2:
            row["altLabelEn"] = words_en.phrase(2)
        if rng.random() < 0.1:
            row["altLabelIt"] = words_it.phrase(2)
        if rng.random() < 0.5:
            row["descriptionEn"] = f"{row['prefLabelEn'].capitalize()} is a {words_en.phrase(3)}."
            row["descriptionIt"] = f"{row['prefLabelIt'].capitalize()} e un {words_it.phrase(3)}."
        if parents[i] is not None:
            row["BT"] = ids[parents[i]]
        if i in first_child:
            row["NT"] = ids[first_child[i]]
        if i >= 20 and rng.random() < 0.1:
            row["RT"] = ids[rng.randrange(10, i)]
        if rng.random() < 0.4:
            row["LinkToGEMET"] = str(gemet[i])
        t.rows.append(row)
    return t


def simple_table(shape: SchemeShape, rng: random.Random, roots: int, max_depth: int) -> TableData:
    words = Words(rng)
    langs = shape.languages
    cols = ["ID"] + [f"prefLabel_{l}" for l in langs]
    if shape.definitions:
        cols += [f"definition_{l}" for l in langs]
    cols += ["BT", "inScheme"]
    t = TableData(cols)
    ids = _ids(shape.prefix, shape.count)
    parents = _tree_parents(rng, shape.count, roots=min(roots, shape.count), max_depth=max_depth)
    for i in range(shape.count):
        row = {"ID": ids[i], "inScheme": shape.prefix}
        for l in langs:
            row[f"prefLabel_{l}"] = words.phrase(rng.choice((1, 2)))
            if shape.definitions:
                row[f"definition_{l}"] = f"{words.phrase(4).capitalize()}."
        if parents[i] is not None:
            row["BT"] = ids[parents[i]]
        t.rows.append(row)
    return t


def species_table(spec: FixtureSpec, rng: random.Random) -> TableData:
    """order > family > genus > species; species labels are binomials whose
    first word is the genus label (exercises longest-match mention scanning)."""
    n = spec.species
    words = Words(rng)
    vernacular = Words(rng)
    n_orders = max(1, min(8, n // 100))
    n_families = max(1, min(n // 40, 400))
    n_genera = max(1, min(n // 8, 20000))
    cols = ["ID", "prefLabel_la", "altLabel_en", "rank", "BT", "EUNIS_ID", "inScheme"]
    t = TableData(cols)
    keys = rng.sample(range(1000, 1000 + 4 * n), n)
    genera: List[Tuple[str, str]] = []
    i = 0

    def add(label: str, rank: str, parent: Optional[str]) -> str:
        nonlocal i
        ident = str(i + 1)
        row = {"ID": ident, "prefLabel_la": label, "rank": rank, "BT": parent or "",
               "EUNIS_ID": str(keys[i]), "inScheme": "SPECIES"}
        if rank == "species" and rng.random() < 0.3:
            row["altLabel_en"] = f"{vernacular.word()} {vernacular.word()}"
        t.rows.append(row)
        i += 1
        return ident

    orders = [add(words.word(suffix="ales").capitalize(), "order", None) for _ in range(min(n_orders, n))]
    families = [add(words.word(suffix="aceae").capitalize(), "family", rng.choice(orders))
                for _ in range(min(n_families, n - i))]
    parents_for_genus = families or orders
    for _ in range(min(n_genera, n - i)):
        label = words.word().capitalize()
        genera.append((add(label, "genus", rng.choice(parents_for_genus)), label))
    epithets: Dict[str, Set[str]] = {}
    while i < n:
        gid, glabel = rng.choice(genera) if genera else (orders[0], "Incerta")
        while True:
            ep = words.word((2, 3))
            if ep not in epithets.setdefault(gid, set()):
                epithets[gid].add(ep)
                break
        add(f"{glabel} {ep}", "species", gid)
    return t


def habitats_table(spec: FixtureSpec, rng: random.Random, species: TableData) -> TableData:
    words = Words(rng)
    binomials = [r["prefLabel_la"] for r in species.rows if r["rank"] == "species"]
    cols = ["ID", "prefLabel_en", "definition_en", "BT", "inScheme"]
    t = TableData(cols)
    parents = _tree_parents(rng, spec.habitats, roots=min(6, spec.habitats), max_depth=3)
    for i in range(spec.habitats):
        label = words.phrase(rng.choice((1, 2, 2)))
        text = f"{label.capitalize()} with {words.phrase(2)}"
        # every third habitat mentions nothing; the first always mentions one species
        if binomials and (i == 0 or i % 3):
            picks = rng.sample(binomials, min(len(binomials), rng.randint(1, 3)))
            text += ", characterised by " + " and ".join(picks)
        row = {"ID": str(i + 1), "prefLabel_en": label, "definition_en": text + ".", "inScheme": "HABITATS"}
        if parents[i] is not None:
            row["BT"] = str(parents[i] + 1)
        t.rows.append(row)
    return t


# -- mapping text -----------------------------------------------------------------------------------

_HEADER = """@prefix map: <#> .
@prefix d2rq: <http://www.wiwiss.fu-berlin.de/suhl/bizer/D2RQ/0.1#> .
@prefix skos: <http://www.w3.org/2004/02/skos/core#> .

map:{p} a d2rq:ClassMap;
    d2rq:uriPattern "{p}/@@{p}.ID|urify@@";
    d2rq:class skos:Concept;
.

map:{p}_inScheme a d2rq:PropertyBridge;
    d2rq:belongsToClassMap map:{p};
    d2rq:property skos:inScheme;
    d2rq:uriPattern "@@{p}.inScheme|urify@@";
.
"""


def _literal_bridge(p: str, prop: str, column: str, lang: str) -> str:
    return (f"\nmap:{p}_{column} a d2rq:PropertyBridge;\n    d2rq:belongsToClassMap map:{p};\n"
            f"    d2rq:property skos:{prop};\n    d2rq:lang \"{lang}\";\n    d2rq:column \"{p}.{column}\";\n.\n")


def _link_bridge(p: str, prop: str, column: str) -> str:
    return (f"\nmap:{p}_{column} a d2rq:PropertyBridge;\n    d2rq:belongsToClassMap map:{p};\n"
            f"    d2rq:property skos:{prop};\n    d2rq:uriPattern \"{p}/@@{p}.{column}|urify@@\";\n.\n")


def wide_mapping(prefix: str, table: TableData) -> str:
    out = [_HEADER.format(p=prefix)]
    for col in table.columns:
        head, _, lang = col.partition("_")
        if head in ("prefLabel", "altLabel", "definition") and lang:
            out.append(_literal_bridge(prefix, head, col, lang))
    if "BT" in table.columns:
        out.append(_link_bridge(prefix, "broader", "BT"))
    return "".join(out)


def earth_mapping() -> str:
    """The shipped wide-table EARTh mapping without its GEMET bridge: in the
    fixture pipeline that equivalence is produced by the shared-key link rule."""
    from importlib.resources import files

    text = files("kosframe").joinpath("data/mappings/earth_wide.d2s").read_text(encoding="utf-8")
    start = text.index("map:EARTh_LinkToGEMET")
    end = text.index("\n.\n", start) + 3
    return text[:start] + text[end:].lstrip("\n")


# -- the whole dataset ------------------------------------------------------------------------------


@dataclass
class Fixture:
    spec: FixtureSpec
    config: Config
    tables: Dict[str, TableData]
    mappings: Dict[str, str]
    manual_links: List[str]
    rules: str

    def write(self, out: Path) -> List[Path]:
        out = Path(out)
        written = []

        def put(rel: str, text: str) -> None:
            path = out / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(text.encode("utf-8"))
            written.append(path)

        put("kosframe.ini", format_config(self.config))
        for prefix, table in self.tables.items():
            put(f"{prefix}/{prefix}.csv", table.to_csv())
            put(f"mappings/{prefix}.d2s", self.mappings[prefix])
        put("earth_regions.links", "".join(line + "\n" for line in self.manual_links))
        put("rules.ini", self.rules)
        return written


RULES = """# Link rules applied by `kosframe link`, in file order.

[habitats-species]
strategy = mention-scan
src = HABITATS
dst = SPECIES
note = definition
emit = related

[earth-gemet]
strategy = shared-key
src = EARTh
dst = GEMET
table = EARTh/EARTh.csv
id_column = ID
key_column = LinkToGEMET
pattern = @@key@@

[species-eunis]
strategy = shared-key
src = SPECIES
dst = EUNIS
table = SPECIES/SPECIES.csv
id_column = ID
key_column = EUNIS_ID
pattern = @@key@@

[earth-regions]
strategy = manual
src = EARTh
dst = REGIONS
path = earth_regions.links
"""


def build_fixture(spec: FixtureSpec = FixtureSpec()) -> Fixture:
    rng = random.Random(spec.seed)
    shapes = {s.prefix: s for s in spec.shapes()}
    tables: Dict[str, TableData] = {}
    tables["EARTh"] = earth_table(spec, random.Random(rng.random()))
    tables["IUCN"] = simple_table(shapes["IUCN"], random.Random(rng.random()), roots=2, max_depth=1)
    species = species_table(spec, random.Random(rng.random()))
    tables["HABITATS"] = habitats_table(spec, random.Random(rng.random()), species)
    tables["SPECIES"] = species
    tables["THREATS"] = simple_table(shapes["THREATS"], random.Random(rng.random()), roots=3, max_depth=1)
    tables["REGIONS"] = simple_table(shapes["REGIONS"], random.Random(rng.random()), roots=8, max_depth=2)
    mappings = {p: wide_mapping(p, t) for p, t in tables.items()}
    mappings["EARTh"] = earth_mapping()
    schemes = [SchemeEntry(s.prefix, f"{spec.base}resource/{s.prefix}/", s.title) for s in shapes.values()]
    schemes += [
        SchemeEntry("GEMET", GEMET_NS, "GEMET (remote)", remote=True, publisher="EEA"),
        SchemeEntry("EUNIS", EUNIS_NS, "EUNIS species (remote)", remote=True, publisher="EEA"),
    ]
    config = Config(base=spec.base, schemes=tuple(schemes))
    link_rng = random.Random(rng.random())
    kinds = ["closeMatch", "related", "exactMatch", "related"]
    pairs = set()
    links = ["# EARTh concept, relation, region"]
    while len(pairs) < min(spec.manual_links, spec.earth * spec.regions):
        pairs.add((link_rng.randint(1, spec.earth), link_rng.randint(1, spec.regions)))
    for n, (e, r) in enumerate(sorted(pairs)):
        links.append(f"EARTh:{e} {kinds[n % len(kinds)]} REGIONS:{r}")
    return Fixture(spec, config, tables, mappings, links, RULES)
