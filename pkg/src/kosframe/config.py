"""INI configuration: store location, public base URI, listen address,
similarity defaults and the scheme registry.

    [kosframe]
    store = store
    base = http://localhost:2020/
    host = 127.0.0.1
    port = 2020

    [similarity]
    w_label = 0.6
    threshold = 0.85

    [scheme EARTh]
    namespace = http://localhost:2020/resource/EARTh/
    title = EARTh general thesaurus
    locality = local

Relative paths are resolved against the directory holding the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .core import Iri, MalformedIri
from .interlink import SimilarityConfig
from .store import SchemeRecord

DEFAULT_BASE = "http://localhost:2020/"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeEntry:
    prefix: str
    namespace: str
    title: str
    remote: bool = False
    description: str = ""
    publisher: str = ""

    def record(self) -> SchemeRecord:
        return SchemeRecord(self.namespace, self.title, description=self.description,
                            publisher=self.publisher, prefix=self.prefix, remote=self.remote)


@dataclass(frozen=True)
class Config:
    store: Path = Path("store")
    base: str = DEFAULT_BASE
    host: str = "127.0.0.1"
    port: int = 2020
    similarity: SimilarityConfig = SimilarityConfig()
    schemes: Tuple[SchemeEntry, ...] = ()

    def __post_init__(self) -> None:
        if not self.base.endswith("/"):
            raise ConfigError(f"base URI must end with '/', got {self.base!r}")
        try:
            Iri(self.base)
        except MalformedIri as exc:
            raise ConfigError(f"bad base URI: {exc}") from None
        prefixes = [s.prefix for s in self.schemes]
        dupes = sorted({p for p in prefixes if prefixes.count(p) > 1})
        if dupes:
            raise ConfigError(f"scheme prefixes must be unique; repeated: {', '.join(dupes)}")

    @property
    def resource_base(self) -> str:
        return self.base + "resource/"

    def local_namespace(self, prefix: str) -> str:
        return f"{self.resource_base}{prefix}/"

    def scheme(self, prefix: str) -> Optional[SchemeEntry]:
        for s in self.schemes:
            if s.prefix == prefix:
                return s
        return None


def load_config(path: Union[str, Path, None]) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    root = path.parent
    main = parser["kosframe"] if parser.has_section("kosframe") else {}
    kwargs: Dict[str, object] = {}
    if "store" in main:
        kwargs["store"] = root / main["store"]
    else:
        kwargs["store"] = root / "store"
    if "base" in main:
        kwargs["base"] = main["base"].strip()
    if "host" in main:
        kwargs["host"] = main["host"].strip()
    if "port" in main:
        try:
            kwargs["port"] = int(main["port"])
        except ValueError:
            raise ConfigError(f"port must be an integer, got {main['port']!r}") from None
    if parser.has_section("similarity"):
        sim = parser["similarity"]
        try:
            kwargs["similarity"] = SimilarityConfig(
                w_label=float(sim.get("w_label", 0.6)),
                w_def=float(sim.get("w_def", 0.2)),
                w_neighbor=float(sim.get("w_neighbor", 0.2)),
                threshold=float(sim.get("threshold", 0.85)),
                measure=sim.get("measure", "normalized-levenshtein"),
            )
        except ValueError as exc:
            raise ConfigError(f"[similarity]: {exc}") from None
    schemes: List[SchemeEntry] = []
    base = str(kwargs.get("base", DEFAULT_BASE))
    for section in parser.sections():
        if not section.startswith("scheme "):
            continue
        prefix = section[len("scheme "):].strip()
        sec = parser[section]
        locality = sec.get("locality", "local").strip()
        if locality not in ("local", "remote"):
            raise ConfigError(f"[{section}] locality must be local or remote, got {locality!r}")
        namespace = sec.get("namespace", f"{base}resource/{prefix}/" if locality == "local" else "")
        if not namespace:
            raise ConfigError(f"[{section}] a remote scheme needs a namespace")
        schemes.append(SchemeEntry(prefix, namespace.strip(), sec.get("title", prefix), locality == "remote",
                                   sec.get("description", ""), sec.get("publisher", "")))
    kwargs["schemes"] = tuple(schemes)
    return Config(**kwargs)


def format_config(cfg: Config, store: str = "store") -> str:
    out = [
        "[kosframe]",
        f"store = {store}",
        f"base = {cfg.base}",
        f"host = {cfg.host}",
        f"port = {cfg.port}",
        "",
        "[similarity]",
        f"w_label = {cfg.similarity.w_label}",
        f"w_def = {cfg.similarity.w_def}",
        f"w_neighbor = {cfg.similarity.w_neighbor}",
        f"threshold = {cfg.similarity.threshold}",
        f"measure = {cfg.similarity.measure}",
    ]
    for s in cfg.schemes:
        out += ["", f"[scheme {s.prefix}]", f"namespace = {s.namespace}", f"title = {s.title}",
                f"locality = {'remote' if s.remote else 'local'}"]
        if s.publisher:
            out.append(f"publisher = {s.publisher}")
        if s.description:
            out.append(f"description = {s.description}")
    return "\n".join(out) + "\n"
