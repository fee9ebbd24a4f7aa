"""Build the default fixture and push it through the whole CLI pipeline:
fixture, ingest per scheme, entail, link, entail again, validate.

    python3 scripts/run_pipeline.py /tmp/kos-demo
    python3 scripts/run_pipeline.py /tmp/kos-demo --serve --port 2020

Afterwards ``kosframe --config /tmp/kos-demo/kosframe.ini query ...`` works
against the same store.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List

from kosframe.cli import main
from kosframe.fixtures import FixtureSpec, build_fixture


def _step(title: str, args: List[object]) -> None:
    print(f"== {title}", flush=True)
    code = main([str(a) for a in args])
    if code != 0:
        raise SystemExit(f"{title} failed with exit code {code}")


def run(root: Path, seed: int = 7, scale: int = 0) -> Path:
    spec = FixtureSpec(seed=seed)
    if scale:
        spec = spec.scaled(scale)
    fx = build_fixture(spec)
    fx.write(root)
    cfg = root / "kosframe.ini"
    for prefix in fx.tables:
        _step(f"ingest {prefix}", ["--config", cfg, "ingest", root / prefix, root / "mappings" / f"{prefix}.d2s",
                                   "--scheme", prefix])
    _step("entail", ["--config", cfg, "entail"])
    _step("link", ["--config", cfg, "link", root / "rules.ini"])
    _step("entail", ["--config", cfg, "entail"])
    _step("validate", ["--config", cfg, "validate"])
    return cfg


def cli_main(argv: List[str] = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--scale", type=int, default=0, help="total concepts; 0 keeps the default fixture size")
    ap.add_argument("--serve", action="store_true", help="serve the result once built")
    ap.add_argument("--port", type=int, default=2020)
    args = ap.parse_args(argv)
    cfg = run(args.out_dir, args.seed, args.scale)
    if args.serve:
        return main(["--config", str(cfg), "serve", "--port", str(args.port)])
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())
