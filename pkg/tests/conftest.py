from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import pytest

from kosframe.cli import main
from kosframe.core import RelationKind, TermKind
from kosframe.fixtures import FixtureSpec, build_fixture
from kosframe.store import LabelRecord, RelationRecord, SchemeRecord, Store, load_store

BASE = "http://localhost:2020/"
RES = BASE + "resource/"


def ns(prefix: str) -> str:
    return f"{RES}{prefix}/"


def small_store(schemes: Iterable[str] = ("EARTh",), remote: Dict[str, str] = None) -> Tuple[Store, Dict[str, int]]:
    """Empty store with local schemes under the test base and optional remote ones."""
    store = Store()
    ids = {}
    for p in schemes:
        ids[p] = store.upsert_scheme(SchemeRecord(ns(p), f"{p} title", prefix=p))
    for p, namespace in (remote or {}).items():
        ids[p] = store.upsert_scheme(SchemeRecord(namespace, f"{p} title", prefix=p, remote=True))
    return store, ids


def add(store: Store, sid: int, lid: str, pref: Optional[str] = None, lang: str = "en",
        broader: Iterable[str] = ()) -> Tuple[int, str]:
    store.add_concept(sid, lid)
    if pref:
        store.add_label(LabelRecord(sid, lid, TermKind.PREF_LABEL, lang, pref))
    for b in broader:
        store.add_concept(sid, b)
        store.add_relation(RelationRecord((sid, lid), (sid, b), RelationKind.BROADER))
    return (sid, lid)


@dataclass
class Pipeline:
    root: Path
    config: Path
    outputs: Dict[str, str]

    def store(self) -> Store:
        return load_store(self.root / "store")


def run_cli(args, capsys) -> Tuple[int, str, str]:
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def _run_pipeline(root: Path, spec: FixtureSpec) -> Pipeline:
    import contextlib
    import io

    fx = build_fixture(spec)
    fx.write(root)
    cfg = root / "kosframe.ini"
    outputs = {}

    def call(name, *args):
        buf, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(err):
            code = main(["--config", str(cfg), *map(str, args)])
        if code != 0:
            raise AssertionError(f"{name} failed ({code}): {err.getvalue()}")
        outputs[name] = outputs.get(name, "") + buf.getvalue()

    for prefix in fx.tables:
        call("ingest", "ingest", root / prefix, root / "mappings" / f"{prefix}.d2s", "--scheme", prefix)
    call("entail", "entail")
    call("link", "link", root / "rules.ini")
    call("entail2", "entail")
    return Pipeline(root, cfg, outputs)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory) -> Pipeline:
    """Default fixture ingested, entailed, linked and entailed again via the CLI."""
    return _run_pipeline(tmp_path_factory.mktemp("pipeline"), FixtureSpec())


@pytest.fixture(scope="session")
def pipeline_store(pipeline):
    return pipeline.store()


# -- acceptance report -----------------------------------------------------------------

ACCEPTANCE: Dict[int, str] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    """Print and remember one verdict line for the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
