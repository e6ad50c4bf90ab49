"""HTTP service for the manual review stage.

Serves pending records from a manifest, accepts keep/drop decisions, and
persists every decision to an append-only JSONL log (flushed per write).
Replaying the log onto the manifest reproduces the served state exactly,
so the service can crash and resume without losing work. Later decisions
for the same id win.

Endpoints (all JSON unless noted):
  GET  /api/pending?limit=N   -> [{id, path, meta}]
  GET  /api/image/<id>        -> image bytes
  POST /api/decision          <- {id, verdict, annotator}
  GET  /api/progress          -> {total, decided, kept, dropped}
Static files (the review UI bundle) are served from an optional directory.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from .datasets import Manifest, record_to_obj
from .errors import ValidationError

VERDICTS = ("keep", "drop")

CONTENT_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


@dataclass(frozen=True)
class ReviewDecision:
    record_id: str
    verdict: str
    annotator: str
    timestamp: str  # UTC instant, ISO-8601

    def to_obj(self) -> dict:
        return {
            "id": self.record_id,
            "verdict": self.verdict,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }


def decision_from_obj(obj: dict) -> ReviewDecision:
    verdict = obj.get("verdict")
    if verdict not in VERDICTS:
        raise ValidationError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
    return ReviewDecision(
        record_id=obj["id"],
        verdict=verdict,
        annotator=obj.get("annotator", ""),
        timestamp=obj.get("timestamp", ""),
    )


def load_decision_log(path) -> list[ReviewDecision]:
    decisions = []
    p = Path(path)
    if not p.exists():
        return decisions
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                decisions.append(decision_from_obj(json.loads(line)))
    return decisions


def replay_decisions(manifest: Manifest, decisions) -> Manifest:
    """Apply a decision log to a manifest: meta.review gets the last verdict.

    Deterministic in log order and idempotent; unknown ids are ignored so a
    log can be replayed onto a filtered manifest.
    """
    latest = {}
    for d in decisions:
        latest[d.record_id] = d.verdict
    records = []
    for r in manifest.records:
        if r.id in latest:
            r = replace(r, meta={**r.meta, "review": latest[r.id]}, extra=dict(r.extra))
        records.append(r)
    return Manifest(records=records, sources=dict(manifest.sources))


class ReviewState:
    """Shared service state: immutable manifest, mutable decision map.

    Writes go through one lock and hit the log before the in-memory map, so
    the log is always at least as current as what clients have seen.
    """

    def __init__(self, manifest: Manifest, log_path, image_root=None):
        self.manifest = manifest
        self.by_id = {r.id: r for r in manifest.records}
        self.image_root = image_root
        self.log_path = Path(log_path)
        self.lock = threading.Lock()
        self.decisions: dict[str, str] = {}
        for r in manifest.records:
            if r.meta.get("review") in VERDICTS:
                self.decisions[r.id] = r.meta["review"]
        for d in load_decision_log(self.log_path):
            if d.record_id in self.by_id:
                self.decisions[d.record_id] = d.verdict
        self._log_fh = open(self.log_path, "a", encoding="utf-8")

    def pending(self, limit=None) -> list[dict]:
        with self.lock:
            decided = set(self.decisions)
        out = []
        for r in self.manifest.records:
            if r.id in decided:
                continue
            obj = record_to_obj(r)
            out.append({"id": obj["id"], "path": obj["path"], "meta": obj.get("meta", {})})
            if limit is not None and len(out) >= limit:
                break
        return out

    def decide(self, record_id: str, verdict: str, annotator: str) -> int:
        if verdict not in VERDICTS:
            raise ValidationError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
        if record_id not in self.by_id:
            raise KeyError(record_id)
        decision = ReviewDecision(
            record_id=record_id,
            verdict=verdict,
            annotator=annotator,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        with self.lock:
            self._log_fh.write(json.dumps(decision.to_obj()) + "\n")
            self._log_fh.flush()
            self.decisions[record_id] = verdict
            return len(self.decisions)

    def progress(self) -> dict:
        with self.lock:
            verdicts = list(self.decisions.values())
        return {
            "total": len(self.manifest.records),
            "decided": len(verdicts),
            "kept": sum(1 for v in verdicts if v == "keep"),
            "dropped": sum(1 for v in verdicts if v == "drop"),
        }

    def decided_manifest(self) -> Manifest:
        """The manifest with every logged decision folded into meta.review."""
        with self.lock:
            decisions = [
                ReviewDecision(record_id=i, verdict=v, annotator="", timestamp="")
                for i, v in self.decisions.items()
            ]
        return replay_decisions(self.manifest, decisions)

    def close(self):
        with self.lock:
            self._log_fh.flush()
            self._log_fh.close()


class ReviewHandler(BaseHTTPRequestHandler):
    # state and static_dir are attached by make_server
    state: ReviewState
    static_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default; tests parse stdout
        pass

    def _send_json(self, obj, status=200):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, body: bytes, content_type: str, status=200):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/pending":
            params = parse_qs(url.query)
            limit = None
            if "limit" in params:
                try:
                    limit = int(params["limit"][0])
                except ValueError:
                    self._send_json({"error": "limit must be an integer"}, 400)
                    return
            self._send_json(self.state.pending(limit))
        elif url.path.startswith("/api/image/"):
            self._serve_image(unquote(url.path[len("/api/image/") :]))
        elif url.path == "/api/progress":
            self._send_json(self.state.progress())
        else:
            self._serve_static(url.path)

    def _serve_image(self, record_id: str):
        record = self.state.by_id.get(record_id)
        if record is None:
            self._send_json({"error": f"unknown record {record_id!r}"}, 404)
            return
        if self.state.image_root is None or record.path == "synthetic":
            self._send_json({"error": "record has no image file"}, 404)
            return
        path = Path(self.state.image_root) / record.path
        if not path.is_file():
            self._send_json({"error": f"image file {record.path!r} not found"}, 404)
            return
        ctype = CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        self._send_bytes(path.read_bytes(), ctype)

    def _serve_static(self, path: str):
        if self.static_dir is None:
            if path in ("/", "/index.html"):
                body = b"<!doctype html><title>review</title><p>No UI bundle installed.</p>"
                self._send_bytes(body, "text/html; charset=utf-8")
                return
            self._send_json({"error": "not found"}, 404)
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        # Never serve files outside the bundle directory.
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, 404)
            return
        ctype = CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send_bytes(target.read_bytes(), ctype)

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/decision":
            self._send_json({"error": "not found"}, 404)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            obj = json.loads(self.rfile.read(length) or b"{}")
            record_id = obj["id"]
            verdict = obj["verdict"]
            annotator = obj.get("annotator", "")
        except (ValueError, KeyError) as exc:
            self._send_json({"error": f"malformed decision: {exc}"}, 400)
            return
        try:
            decided = self.state.decide(record_id, verdict, annotator)
        except ValidationError as exc:
            self._send_json({"error": str(exc)}, 400)
            return
        except KeyError:
            self._send_json({"error": f"unknown record {record_id!r}"}, 404)
            return
        self._send_json({"accepted": True, "decided_count": decided})


def make_server(manifest: Manifest, log_path, port: int = 0, image_root=None, static_dir=None):
    """Build the HTTP server; port 0 picks a free port (server.server_port)."""
    state = ReviewState(manifest, log_path, image_root=image_root)
    handler = type(
        "BoundReviewHandler",
        (ReviewHandler,),
        {"state": state, "static_dir": Path(static_dir) if static_dir else None},
    )
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.state = state
    return server


def serve_review(manifest: Manifest, log_path, port: int, image_root=None, static_dir=None):
    """Run the review service until interrupted; flushes the log on the way out."""
    server = make_server(manifest, log_path, port=port, image_root=image_root, static_dir=static_dir)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.state.close()
        server.server_close()
