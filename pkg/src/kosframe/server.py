"""Linked Data publication: dereferenceable concept URIs, HTML browse pages,
dataset listings and a SPARQL endpoint, served from one immutable snapshot.

:class:`App` is a pure request -> response function so it can be exercised
without sockets; :func:`serve` wraps it in a threaded ``http.server``.
"""

from __future__ import annotations

import html
import logging
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from urllib.parse import parse_qs, quote, unquote, urlsplit

from .core import (
    DC_TITLE,
    RDF_TYPE,
    SKOS_CONCEPT_SCHEME,
    SKOS_IN_SCHEME,
    VOID_ENTITIES,
    Iri,
    Literal,
    MalformedIri,
    NoteKind,
    RelationKind,
    TermKind,
    Triple,
    canonical_ntriples,
    format_turtle,
    skos_iri,
)
from .query import QueryError, evaluate, parse_select, results_json
from .store import ConceptKey, SchemeRecord, Snapshot

log = logging.getLogger("kosframe.server")

TURTLE = "text/turtle"
NTRIPLES = "application/n-triples"
HTML = "text/html"
SPARQL_JSON = "application/sparql-results+json"

# server preference order, used to break q-value ties
PREFERENCE = (TURTLE, NTRIPLES, HTML)
RDF_TYPES = (TURTLE, NTRIPLES)
PAGE_SIZE = 100
MAX_GET_QUERY = 8 * 1024


class NotAcceptable(Exception):
    pass


def _parse_accept(header: str) -> Optional[List[Tuple[str, str, float]]]:
    ranges = []
    for item in header.split(","):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(";")]
        mtype, _, subtype = parts[0].lower().partition("/")
        if not mtype or not subtype:
            return None
        q = 1.0
        for param in parts[1:]:
            name, _, value = param.partition("=")
            if name.strip().lower() == "q":
                try:
                    q = float(value)
                except ValueError:
                    return None
                if not 0.0 <= q <= 1.0:
                    return None
        ranges.append((mtype, subtype, q))
    return ranges or None


def _q_for(media_type: str, ranges: Sequence[Tuple[str, str, float]]) -> Optional[float]:
    """q of the most specific range matching ``media_type``; None if none matches."""
    mtype, _, subtype = media_type.partition("/")
    best: Optional[Tuple[int, float]] = None
    for rt, rs, q in ranges:
        if rt == mtype and rs == subtype:
            spec = 2
        elif rt == mtype and rs == "*":
            spec = 1
        elif rt == "*" and rs == "*":
            spec = 0
        else:
            continue
        if best is None or spec > best[0]:
            best = (spec, q)
    return None if best is None else best[1]


def negotiate(accept: Optional[str], offered: Sequence[str] = PREFERENCE) -> str:
    """Highest-q offered type, ties broken by the order of ``offered``.

    A missing or malformed header, or one that names none of the offered
    types, yields the first offered type.  :class:`NotAcceptable` is raised
    only when every offered type is explicitly refused with q=0.
    """
    if not accept or not accept.strip():
        return offered[0]
    ranges = _parse_accept(accept)
    if ranges is None:
        return offered[0]
    scored = [(_q_for(t, ranges), t) for t in offered]
    if all(q is None for q, _ in scored):
        return offered[0]
    best_q = max(q or 0.0 for q, _ in scored)
    if best_q <= 0.0:
        if all(q == 0.0 for q, _ in scored):
            raise NotAcceptable(accept)
        return next(t for q, t in scored if q is None)
    for q, t in scored:
        if q == best_q:
            return t
    raise AssertionError("unreachable")


@dataclass
class Response:
    status: int
    body: bytes = b""
    content_type: Optional[str] = None
    headers: Dict[str, str] = field(default_factory=dict)

    def header_items(self) -> List[Tuple[str, str]]:
        out = list(self.headers.items())
        if self.content_type:
            out.insert(0, ("Content-Type", self.content_type))
        return out


def _text(status: int, message: str) -> Response:
    return Response(status, (message + "\n").encode("utf-8"), "text/plain; charset=utf-8")


def _rdf(triples: Iterable[Triple], media_type: str) -> Response:
    if media_type == NTRIPLES:
        return Response(200, canonical_ntriples(triples), NTRIPLES)
    return Response(200, format_turtle(triples).encode("utf-8"), TURTLE + "; charset=utf-8")


def _page(title: str, body: str) -> Response:
    doc = (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n</head>\n<body>\n{body}</body>\n</html>\n"
    )
    return Response(200, doc.encode("utf-8"), HTML + "; charset=utf-8")


def _a(href: str, text: str) -> str:
    return f'<a href="{html.escape(href, quote=True)}">{html.escape(text)}</a>'


RELATION_ORDER = [k for k in RelationKind]
NOTE_ORDER = [k for k in NoteKind]
LABEL_ORDER = [k for k in TermKind]


class App:
    """Routes requests against the current snapshot.

    ``base`` is the public base URI; concept URIs of served schemes look like
    ``{base}resource/{prefix}/{local_id}``.  :meth:`swap` replaces the
    snapshot atomically; a request in flight keeps the one it started with.
    """

    def __init__(self, snapshot: Snapshot, base: str):
        if not base.endswith("/"):
            raise ValueError(f"base URI must end with '/', got {base!r}")
        Iri(base)
        self.base = base
        self._snapshot = snapshot
        self._swap_lock = threading.Lock()

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def swap(self, snapshot: Snapshot) -> None:
        with self._swap_lock:
            self._snapshot = snapshot

    # -- entry point ---------------------------------------------------------
    def handle(self, method: str, target: str, headers: Optional[Dict[str, str]] = None, body: bytes = b"") -> Response:
        started = time.perf_counter()
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        snap = self._snapshot
        try:
            resp = self._route(snap, method.upper(), target, headers, body)
        except NotAcceptable:
            resp = _text(406, "none of the available representations is acceptable")
        if method.upper() == "HEAD":
            resp = Response(resp.status, b"", resp.content_type, dict(resp.headers, **{"Content-Length": str(len(resp.body))}))
        log.info("%s %s %d %d %.1fms", method.upper(), target, resp.status, len(resp.body),
                 (time.perf_counter() - started) * 1000)
        return resp

    def _route(self, snap: Snapshot, method: str, target: str, headers: Dict[str, str], body: bytes) -> Response:
        parts = urlsplit(target)
        raw_segments = [s for s in parts.path.split("/")]
        segments = [unquote(s) for s in raw_segments[1:]] if parts.path.startswith("/") else []
        if segments and segments[-1] == "" and len(segments) > 1:
            return _text(404, f"not found: {parts.path}")
        accept = headers.get("accept")
        head = segments[0] if segments else ""
        if head == "sparql" and len(segments) == 1:
            return self._sparql(snap, method, parts.query, headers, body)
        if method not in ("GET", "HEAD"):
            return Response(405, b"method not allowed\n", "text/plain; charset=utf-8", {"Allow": "GET, HEAD"})
        if head in ("", "all") and len(segments) == 1:
            return self._all(snap, negotiate(accept))
        if head == "all" and len(segments) == 2:
            return self._scheme_listing(snap, segments[1], parts.query, negotiate(accept))
        if head in ("resource", "data", "page") and len(segments) in (2, 3):
            return self._entity(snap, head, raw_segments[2:], accept)
        return _text(404, f"not found: {parts.path}")

    # -- resources -------------------------------------------------------------
    def resource_uri(self, snap: Snapshot, key: ConceptKey) -> Iri:
        return snap.concept_uri(*key)

    def _served_scheme(self, snap: Snapshot, prefix: str) -> Optional[SchemeRecord]:
        rec = snap.scheme_by_prefix(prefix)
        if rec is None or rec.remote or rec.namespace != f"{self.base}resource/{quote(prefix, safe='')}/":
            return None
        return rec

    def _entity(self, snap: Snapshot, kind: str, raw: List[str], accept: Optional[str]) -> Response:
        prefix = unquote(raw[0])
        rec = self._served_scheme(snap, prefix)
        if rec is None:
            return _text(404, f"unknown scheme {prefix!r}")
        tail = "/".join(raw)
        if len(raw) == 1:
            key = None
        else:
            try:
                key = snap.resolve_iri(Iri(f"{self.base}resource/{tail}"))
            except MalformedIri:
                key = None
            if key is None or key[0] != rec.scheme_id or not snap.has_concept(key):
                return _text(404, f"unknown concept {tail!r}")
        if kind == "resource":
            media = negotiate(accept)
            target = "page" if media == HTML else "data"
            return Response(303, b"", None, {"Location": f"{self.base}{target}/{tail}", "Vary": "Accept"})
        if kind == "data":
            media = negotiate(accept, RDF_TYPES)
            triples = snap.scheme_triples(rec.scheme_id) if key is None else snap.triples_of(key)
            return _rdf(triples, media)
        if key is None:
            return self._scheme_page(snap, rec)
        return self._concept_page(snap, key, tail)

    def _label(self, snap: Snapshot, key: ConceptKey) -> str:
        if not snap.has_concept(key):
            return key[1]
        return snap.pref_label(key, "en") or key[1]

    def _link_to(self, snap: Snapshot, key: ConceptKey) -> str:
        iri = snap.concept_uri(*key).value
        rec = snap.scheme(key[0])
        text = self._label(snap, key)
        return f"{_a(iri, text)} <small>({html.escape(rec.prefix or rec.title)})</small>"

    def _concept_page(self, snap: Snapshot, key: ConceptKey, tail: str) -> Response:
        rec = snap.scheme(key[0])
        uri = snap.concept_uri(*key).value
        title = self._label(snap, key)
        out = [f"<h1>{html.escape(title)}</h1>\n",
               f"<p>URI: {_a(uri, uri)}<br>\n",
               f"Scheme: {_a(rec.iri.value, rec.title)}<br>\n",
               f"RDF: {_a(self.base + 'data/' + tail, 'data')}</p>\n"]
        labels = snap.labels(key)
        if labels:
            out.append("<h2>Labels</h2>\n<dl>\n")
            for lang in sorted({lab.lang for lab in labels}):
                out.append(f"<dt>{html.escape(lang)}</dt>\n")
                for kind in LABEL_ORDER:
                    for lab in sorted(l.text for l in labels if l.lang == lang and l.kind is kind):
                        out.append(f'<dd><span class="{kind.value}">{html.escape(lab)}</span>'
                                   f" <small>skos:{kind.value} @{html.escape(lang)}</small></dd>\n")
            out.append("</dl>\n")
        notes = snap.notes(key)
        for kind in NOTE_ORDER:
            these = sorted((n.lang or "", n.text) for n in notes if n.kind is kind)
            if these:
                out.append(f"<h2>skos:{kind.value}</h2>\n<ul>\n")
                for lang, text in these:
                    tag = f" <small>@{html.escape(lang)}</small>" if lang else ""
                    out.append(f"<li>{html.escape(text)}{tag}</li>\n")
                out.append("</ul>\n")
        rels: Dict[RelationKind, List[ConceptKey]] = {}
        for r in snap.relations(key):
            rels.setdefault(r.rel, []).append(r.dst)
        for kind in RELATION_ORDER:
            if kind in rels:
                out.append(f"<h2>skos:{kind.value}</h2>\n<ul>\n")
                for dst in sorted(rels[kind]):
                    out.append(f"<li>{self._link_to(snap, dst)}</li>\n")
                out.append("</ul>\n")
        return _page(title, "".join(out))

    def _scheme_page(self, snap: Snapshot, rec: SchemeRecord) -> Response:
        out = [f"<h1>{html.escape(rec.title)}</h1>\n<p>"]
        if rec.description:
            out.append(f"{html.escape(rec.description)}<br>\n")
        if rec.publisher:
            out.append(f"Publisher: {html.escape(rec.publisher)}<br>\n")
        out.append(f"Concepts: {snap.concept_count(rec.scheme_id)}<br>\n")
        out.append(f"{_a(self.base + 'all/' + quote(rec.prefix, safe=''), 'browse concepts')} | "
                   f"{_a(self.base + 'data/' + quote(rec.prefix, safe=''), 'data')}</p>\n")
        tops = snap.top_concepts(rec.scheme_id)
        if tops:
            out.append("<h2>Top concepts</h2>\n<ul>\n")
            for lid in sorted(tops):
                out.append(f"<li>{self._link_to(snap, (rec.scheme_id, lid))}</li>\n")
            out.append("</ul>\n")
        return _page(rec.title, "".join(out))

    # -- listings -----------------------------------------------------------------
    def _served(self, snap: Snapshot) -> List[SchemeRecord]:
        return [r for r in snap.schemes() if self._served_scheme(snap, r.prefix) is not None]

    def _all(self, snap: Snapshot, media: str) -> Response:
        schemes = self._served(snap)
        if media != HTML:
            triples = set()
            for rec in schemes:
                triples.add(Triple(rec.iri, RDF_TYPE, SKOS_CONCEPT_SCHEME))
                triples.add(Triple(rec.iri, DC_TITLE, Literal(rec.title)))
                triples.add(Triple(rec.iri, VOID_ENTITIES, Literal(str(snap.concept_count(rec.scheme_id)))))
            return _rdf(triples, media)
        out = ["<h1>Concept schemes</h1>\n<ul>\n"]
        for rec in schemes:
            n = snap.concept_count(rec.scheme_id)
            out.append(f"<li>{_a(rec.iri.value, rec.title)} ({n} concepts) "
                       f"{_a(self.base + 'all/' + quote(rec.prefix, safe=''), 'list')}</li>\n")
        out.append("</ul>\n")
        out.append(f"<p>SPARQL endpoint: {html.escape(self.base)}sparql</p>\n")
        return _page("Concept schemes", "".join(out))

    def _sorted_concepts(self, snap: Snapshot, sid: int) -> List[str]:
        return snap.cached(f"listing:{sid}", lambda: sorted(lid for _, lid in snap.concepts(sid)))

    def _scheme_listing(self, snap: Snapshot, prefix: str, query: str, media: str) -> Response:
        rec = self._served_scheme(snap, prefix)
        if rec is None:
            return _text(404, f"unknown scheme {prefix!r}")
        raw_page = parse_qs(query).get("page", ["1"])[0]
        if not raw_page.isdigit() or int(raw_page) < 1:
            return _text(400, f"page must be a positive integer, got {raw_page!r}")
        page = int(raw_page)
        ids = self._sorted_concepts(snap, rec.scheme_id)
        chunk = ids[(page - 1) * PAGE_SIZE : page * PAGE_SIZE]
        if not chunk and page > 1:
            return _text(404, f"page {page} is past the end")
        if media != HTML:
            triples = {Triple(rec.iri, RDF_TYPE, SKOS_CONCEPT_SCHEME)}
            for lid in chunk:
                uri = snap.concept_uri(rec.scheme_id, lid)
                triples.add(Triple(uri, SKOS_IN_SCHEME, rec.iri))
                for lab in snap.labels((rec.scheme_id, lid)):
                    if lab.kind is TermKind.PREF_LABEL:
                        triples.add(Triple(uri, skos_iri(TermKind.PREF_LABEL), Literal(lab.text, lab.lang)))
            return _rdf(triples, media)
        pages = max(1, (len(ids) + PAGE_SIZE - 1) // PAGE_SIZE)
        listing = self.base + "all/" + quote(rec.prefix, safe="")
        out = [f"<h1>{html.escape(rec.title)}</h1>\n<p>Page {page} of {pages}</p>\n<ul>\n"]
        for lid in chunk:
            out.append(f"<li>{self._link_to(snap, (rec.scheme_id, lid))}</li>\n")
        out.append("</ul>\n<p>")
        if page > 1:
            out.append(_a(f"{listing}?page={page - 1}", "previous") + " ")
        if page < pages:
            out.append(_a(f"{listing}?page={page + 1}", "next"))
        out.append("</p>\n")
        return _page(rec.title, "".join(out))

    # -- SPARQL -------------------------------------------------------------------
    def _sparql(self, snap: Snapshot, method: str, query: str, headers: Dict[str, str], body: bytes) -> Response:
        if method in ("GET", "HEAD"):
            if len(query.encode("utf-8")) > MAX_GET_QUERY:
                return _text(414, f"query string over {MAX_GET_QUERY} bytes; send it with POST")
            text = parse_qs(query).get("query", [None])[0]
        elif method == "POST":
            ctype = headers.get("content-type", "").split(";")[0].strip().lower()
            try:
                decoded = body.decode("utf-8")
            except UnicodeDecodeError:
                return _text(400, "request body is not UTF-8")
            if ctype == "application/sparql-query":
                text = decoded
            else:
                text = parse_qs(decoded).get("query", [None])[0]
        else:
            return Response(405, b"method not allowed\n", "text/plain; charset=utf-8", {"Allow": "GET, POST"})
        if not text:
            return _text(400, "missing 'query' parameter")
        try:
            result = evaluate(parse_select(text), snap)
        except QueryError as exc:
            return _text(400, str(exc))
        return Response(200, results_json(result).encode("utf-8"), SPARQL_JSON + "; charset=utf-8")


# -- HTTP wrapper -----------------------------------------------------------------------


def _handler_for(app: App):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # headers and body leave in one write; otherwise delayed ACKs add ~40 ms per keep-alive response
        wbufsize = -1
        disable_nagle_algorithm = True

        def _dispatch(self) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            resp = app.handle(self.command, self.path, dict(self.headers.items()), body)
            self.send_response(resp.status)
            for name, value in resp.header_items():
                self.send_header(name, value)
            if "Content-Length" not in resp.headers:
                self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            if resp.body:
                self.wfile.write(resp.body)

        do_GET = do_HEAD = do_POST = _dispatch

        def log_message(self, format: str, *args) -> None:  # App.handle already logs
            pass

    return Handler


def make_server(app: App, host: str = "127.0.0.1", port: int = 2020) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _handler_for(app))
    server.daemon_threads = True
    return server


def serve(app: App, host: str = "127.0.0.1", port: int = 2020) -> None:
    server = make_server(app, host, port)
    log.info("serving %s on http://%s:%d/", app.base, host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
