"""Scale smoke run: generate a large fixture, ingest and entail it through the
CLI, serve it over HTTP and time random dereferences.

    python3 scripts/scale_smoke.py --total 200000 --samples 1000 --workdir /tmp/kos-scale
"""

from __future__ import annotations

import argparse
import contextlib
import http.client
import io
import random
import statistics
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List
from urllib.parse import urlsplit

from kosframe.cli import main
from kosframe.fixtures import FixtureSpec, build_fixture
from kosframe.server import App, make_server
from kosframe.store import load_store


@dataclass
class SmokeResult:
    concepts: int
    samples: int
    failures: int
    p50_ms: float
    p95_ms: float
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return sum(self.timings.values())

    def lines(self) -> List[str]:
        out = [f"concepts\t{self.concepts}"]
        out += [f"{stage}_s\t{secs:.1f}" for stage, secs in self.timings.items()]
        out += [f"samples\t{self.samples}", f"failures\t{self.failures}",
                f"p50_ms\t{self.p50_ms:.2f}", f"p95_ms\t{self.p95_ms:.2f}", f"total_s\t{self.total_seconds:.1f}"]
        return out


def _cli(*args: object) -> None:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in args])
    if code != 0:
        raise RuntimeError(f"kosframe {' '.join(map(str, args))} exited {code}: {err.getvalue()}")


def _deref(conn: http.client.HTTPConnection, path: str) -> bool:
    conn.request("GET", path, headers={"Accept": "text/turtle"})
    resp = conn.getresponse()
    resp.read()
    if resp.status != 303:
        return False
    conn.request("GET", urlsplit(resp.getheader("Location")).path, headers={"Accept": "text/turtle"})
    resp = conn.getresponse()
    body = resp.read()
    return resp.status == 200 and len(body) > 0


def run(total: int = 200_000, samples: int = 1000, workdir: Path = None, seed: int = 7) -> SmokeResult:
    workdir = Path(workdir or tempfile.mkdtemp(prefix="kos-scale-"))
    timings: Dict[str, float] = {}

    t = time.perf_counter()
    spec = FixtureSpec(seed=seed).scaled(total)
    fx = build_fixture(spec)
    fx.write(workdir)
    cfg = workdir / "kosframe.ini"
    timings["fixture"] = time.perf_counter() - t

    t = time.perf_counter()
    for prefix in fx.tables:
        _cli("--config", cfg, "ingest", workdir / prefix, workdir / "mappings" / f"{prefix}.d2s", "--scheme", prefix)
    timings["ingest"] = time.perf_counter() - t

    t = time.perf_counter()
    _cli("--config", cfg, "entail")
    timings["entail"] = time.perf_counter() - t

    t = time.perf_counter()
    store = load_store(workdir / "store")
    app = App(store.snapshot(), spec.base)
    server = make_server(app, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    timings["load"] = time.perf_counter() - t

    keys = [k for rec in store.schemes() if not rec.remote for k in store.concepts(rec.scheme_id)]
    rng = random.Random(seed)
    picked = rng.sample(keys, min(samples, len(keys)))
    base_path = urlsplit(spec.base).path
    latencies: List[float] = []
    failures = 0
    t = time.perf_counter()
    conn = http.client.HTTPConnection("127.0.0.1", server.server_address[1], timeout=10)
    try:
        for key in picked:
            path = urlsplit(store.concept_uri(*key).value).path
            assert path.startswith(base_path)
            started = time.perf_counter()
            ok = _deref(conn, path)
            latencies.append((time.perf_counter() - started) * 1000)
            failures += not ok
    finally:
        conn.close()
        server.shutdown()
        server.server_close()
    timings["serve"] = time.perf_counter() - t

    latencies.sort()
    p95 = latencies[max(0, int(round(0.95 * len(latencies))) - 1)]
    return SmokeResult(len(keys), len(picked), failures, statistics.median(latencies), p95, timings)


def cli_main(argv: List[str] = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--total", type=int, default=200_000)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workdir", type=Path)
    args = ap.parse_args(argv)
    result = run(args.total, args.samples, args.workdir, args.seed)
    for line in result.lines():
        print(line)
    return 0 if result.failures == 0 else 1


if __name__ == "__main__":
    sys.exit(cli_main())
