"""``kosframe`` command line: fixture, ingest, entail, link, validate, query,
serve and export over an on-disk store.

Exit codes: 0 success, 1 user or data error, 2 internal error.  Data goes to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import logging
import os
import shutil
import sys
import threading
import traceback
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import click

from .config import Config, ConfigError, SchemeEntry, load_config
from .core import NTriplesError, parse_ntriples
from .entailment import entail, validate
from .fixtures import FixtureSpec, build_fixture
from .interlink import LinkParseError, PreconditionViolated, RuleError, apply_links, candidates_csv, load_rules, run_rule
from .mapping import CsvProblem, MappingError, evaluate_to_store, load_tables, parse_mapping
from .query import QueryError, evaluate, parse_select, results_json
from .server import App, make_server
from .store import REGISTRY_FILE, IngestReport, StoreError, Store, ingest_triples, load_store, save_store

log = logging.getLogger("kosframe")

USER_ERRORS = (StoreError, MappingError, QueryError, ConfigError, RuleError, LinkParseError, PreconditionViolated,
               NTriplesError, OSError, UnicodeDecodeError)


class Env:
    def __init__(self, config: Config):
        self.config = config

    def open_store(self) -> Store:
        store = load_store(self.config.store)
        sync_registry(store, self.config)
        return store

    def save(self, store: Store) -> None:
        save_atomically(store, self.config.store)


def sync_registry(store: Store, cfg: Config) -> None:
    """Register every configured scheme, updating changed metadata in place."""
    for entry in cfg.schemes:
        rec = entry.record()
        existing = store.scheme_by_namespace(rec.namespace)
        if existing is None:
            store.upsert_scheme(rec)
        elif (existing.title, existing.prefix, existing.remote, existing.publisher, existing.description) != (
            rec.title, rec.prefix, rec.remote, rec.publisher, rec.description
        ):
            store.upsert_scheme(replace(rec, scheme_id=existing.scheme_id, authors=existing.authors))


def save_atomically(store: Store, directory: Path) -> None:
    """Write into a sibling directory and swap it in, so a serving process
    polling the store never reads a half-written one."""
    directory = Path(directory)
    tmp = directory.with_name(directory.name + ".tmp")
    old = directory.with_name(directory.name + ".old")
    shutil.rmtree(tmp, ignore_errors=True)
    save_store(store.snapshot(), tmp)
    shutil.rmtree(old, ignore_errors=True)
    if directory.exists():
        os.replace(directory, old)
    os.replace(tmp, directory)
    shutil.rmtree(old, ignore_errors=True)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), envvar="KOSFRAME_CONFIG",
              help="INI config file (default: kosframe.ini in the working directory, if present).")
@click.option("--store", "store_path", type=click.Path(file_okay=False), help="Store directory (overrides config).")
@click.option("--base", help="Public base URI (overrides config).")
@click.option("-v", "--verbose", count=True, help="More log output on stderr.")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], store_path: Optional[str], base: Optional[str], verbose: int) -> None:
    """Manage, interlink and publish SKOS thesauri."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if config_path is None and Path("kosframe.ini").exists():
        config_path = "kosframe.ini"
    cfg = load_config(config_path)
    if store_path:
        cfg = replace(cfg, store=Path(store_path))
    if base:
        cfg = replace(cfg, base=base)
    ctx.obj = Env(cfg)


def _report_ingest(report: IngestReport) -> None:
    for issue in report.issues:
        click.echo(f"warning: {issue.kind}: {issue.message}", err=True)
    click.echo(report.summary())


@cli.command()
@click.argument("csv_dir", required=False, type=click.Path(file_okay=False))
@click.argument("mapping", required=False, type=click.Path(dir_okay=False))
@click.option("--scheme", "prefix", help="Prefix of the configured scheme the mapping populates.")
@click.option("--ntriples", type=click.Path(dir_okay=False), help="Ingest an N-Triples file instead of CSV + mapping.")
@click.pass_obj
def ingest(env: Env, csv_dir: Optional[str], mapping: Optional[str], prefix: Optional[str], ntriples: Optional[str]) -> int:
    """Evaluate MAPPING over the CSV tables in CSV_DIR (or load --ntriples) into the store."""
    cfg = env.config
    if ntriples:
        if csv_dir or mapping:
            raise click.UsageError("give either CSV_DIR and MAPPING or --ntriples, not both")
        text = Path(ntriples).read_text(encoding="utf-8")
        store = env.open_store()
        report = ingest_triples(store, parse_ntriples(text), local_base=cfg.resource_base)
    else:
        if not csv_dir or not mapping:
            raise click.UsageError("CSV_DIR and MAPPING are required (or use --ntriples)")
        spec = parse_mapping(Path(mapping).read_text(encoding="utf-8"))
        if not Path(csv_dir).is_dir():
            raise click.UsageError(f"no such directory: {csv_dir}")
        problems: List[CsvProblem] = []
        tables = load_tables(Path(csv_dir), problems)
        for p in problems:
            click.echo(f"warning: {p.path}:{p.line}: {p.message}", err=True)
        store = env.open_store()
        if prefix is not None:
            entry = cfg.scheme(prefix)
            if entry is None:
                # not configured: register it as a local scheme under the base URI
                entry = SchemeEntry(prefix, cfg.local_namespace(prefix), prefix)
                if store.scheme_by_namespace(entry.namespace) is None:
                    store.upsert_scheme(entry.record())
            if entry.remote:
                raise ConfigError(f"scheme {prefix!r} is remote; only local schemes can be ingested")
        report = evaluate_to_store(spec, tables, store, cfg.resource_base)
        report.skipped += len(problems)
    env.save(store)
    _report_ingest(report)
    return 0


@cli.command(name="entail")
@click.pass_obj
def entail_cmd(env: Env) -> int:
    """Materialize inverse, super-property and transitive relations."""
    store = env.open_store()
    report = entail(store)
    env.save(store)
    for line in report.lines():
        click.echo(line)
    return 0


@cli.command()
@click.argument("rules", type=click.Path(dir_okay=False))
@click.option("--candidates", "candidates_path", type=click.Path(dir_okay=False),
              help="Where to write the candidate CSV (default: candidates.csv next to RULES).")
@click.pass_obj
def link(env: Env, rules: str, candidates_path: Optional[str]) -> int:
    """Run the link RULES file and apply accepted candidates."""
    store = env.open_store()
    entries = load_rules(rules, store, env.config.similarity)
    all_candidates = []
    total = 0
    for entry in entries:
        cands = run_rule(store.snapshot(), entry)
        accepted = [c for c in cands if c.accepted]
        added = apply_links(store, accepted, bidirectional=True)
        total += added
        all_candidates += cands
        click.echo(f"{entry.rule.name}\tcandidates:{len(cands)}\taccepted:{len(accepted)}\tapplied:{added}")
    env.save(store)
    out = Path(candidates_path) if candidates_path else Path(rules).parent / "candidates.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(candidates_csv(store, all_candidates), encoding="utf-8")
    click.echo(f"total\tapplied:{total}")
    return 0


@cli.command(name="validate")
@click.pass_obj
def validate_cmd(env: Env) -> int:
    """Report integrity violations; exit 1 if there are any."""
    store = env.open_store()
    issues = validate(store)
    for issue in issues:
        click.echo(issue.format(store))
    return 1 if issues else 0


@cli.command()
@click.argument("text", required=False)
@click.option("--file", "query_file", type=click.Path(dir_okay=False), help="Read the query from a file.")
@click.pass_obj
def query(env: Env, text: Optional[str], query_file: Optional[str]) -> int:
    """Evaluate a SPARQL SELECT (subset) query and print JSON results."""
    if query_file:
        text = Path(query_file).read_text(encoding="utf-8")
    if not text:
        raise click.UsageError("give a query string or --file")
    q = parse_select(text)
    store = env.open_store()
    click.echo(results_json(evaluate(q, store.snapshot())))
    return 0


@cli.command()
@click.option("--host", help="Listen address (overrides config).")
@click.option("--port", type=int, help="Listen port (overrides config).")
@click.option("--reload-interval", default=2.0, show_default=True,
              help="Seconds between checks for a rewritten store; 0 disables reloading.")
@click.pass_obj
def serve(env: Env, host: Optional[str], port: Optional[int], reload_interval: float) -> int:
    """Serve the store as Linked Data plus a SPARQL endpoint until interrupted."""
    cfg = env.config
    logging.getLogger("kosframe.server").setLevel(logging.INFO)
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr)
    store = env.open_store()
    app = App(store.snapshot(), cfg.base)
    server = make_server(app, host or cfg.host, cfg.port if port is None else port)
    stop = threading.Event()
    if reload_interval > 0:
        threading.Thread(target=_watch_store, args=(env, app, reload_interval, stop), daemon=True).start()
    click.echo(f"serving {cfg.base} on http://{server.server_address[0]}:{server.server_address[1]}/", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        click.echo("shutting down", err=True)
    finally:
        stop.set()
        server.server_close()
    return 0


def _registry_stamp(cfg: Config) -> Optional[int]:
    try:
        return (Path(cfg.store) / REGISTRY_FILE).stat().st_mtime_ns
    except OSError:
        return None


def _watch_store(env: Env, app: App, interval: float, stop: threading.Event) -> None:
    stamp = _registry_stamp(env.config)
    while not stop.wait(interval):
        now = _registry_stamp(env.config)
        if now is None or now == stamp:
            continue
        try:
            app.swap(env.open_store().snapshot())
            stamp = now
            log.info("store reloaded")
        except Exception as exc:  # keep serving the old snapshot
            log.warning("store reload failed: %s", exc)


@cli.command()
@click.option("--format", "fmt", type=click.Choice(["ntriples"]), default="ntriples", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="-", show_default=True,
              help="Output file; '-' for stdout.")
@click.pass_obj
def export(env: Env, fmt: str, out_path: str) -> int:
    """Write the whole graph as canonical (sorted) N-Triples."""
    store = env.open_store()
    data = store.snapshot().export_ntriples()
    if out_path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out_path).write_bytes(data)
    return 0


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", default=7, show_default=True)
@click.option("--scale", type=int, default=None, help="Grow the species scheme to reach this many concepts in total.")
@click.option("--earth", type=int, default=500, show_default=True)
@click.option("--habitats", type=int, default=200, show_default=True)
@click.option("--species", type=int, default=1000, show_default=True)
@click.pass_obj
def fixture(env: Env, out_dir: str, seed: int, scale: Optional[int], earth: int, habitats: int, species: int) -> int:
    """Generate a synthetic dataset (CSV tables, mappings, config, link rules)."""
    spec = FixtureSpec(seed=seed, base=env.config.base, earth=earth, habitats=habitats, species=species)
    if scale is not None:
        spec = spec.scaled(scale)
    fx = build_fixture(spec)
    fx.write(Path(out_dir))
    for shape in spec.shapes():
        click.echo(f"{shape.prefix}\t{shape.count}")
    click.echo(f"total\t{spec.total()}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="kosframe", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except USER_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    return rv if isinstance(rv, int) else 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
