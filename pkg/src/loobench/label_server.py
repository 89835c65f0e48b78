"""Local HTTP API for annotators, plus static serving of the browser UI.

Mutations run strictly serially under one lock (single-writer contract)
and the session checkpoints to disk after each one. Reads are safe at any
time. Binds loopback by default; this is a single-team local tool, not a
multi-user service.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import (
    AlreadyLabeledError,
    MissingResolutionError,
    SchemaError,
    ValidationError,
)
from .labeling import LabelSession, checkpoint_session, consensus_artifact
from .models import LabelItem
from .store import ArtifactStore

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8787


def item_view(session: LabelSession, item: LabelItem, annotator: str) -> dict:
    labeled, total = session.progress(annotator)
    return {
        "item_id": item.item_id,
        "question": item.question,
        "model_answer": item.model_answer,
        "expected_answer": item.expected_answer,
        "outcomes": list(session.state.schema.outcomes),
        "progress": {"labeled": labeled, "total": total},
    }


class LabelService:
    """Session mutations and queries behind one mutex."""

    def __init__(self, session: LabelSession, store: ArtifactStore):
        self.session = session
        self.store = store
        self._lock = threading.Lock()
        self.consensus_artifact_id: str | None = None

    def summary(self) -> dict:
        s = self.session.state
        return {
            "session_id": s.session_id,
            "status": s.status,
            "annotators": list(s.annotators),
            "total_items": len(s.items),
            "labeled": {a: len(s.labels.get(a, {})) for a in s.annotators},
            "schema": {
                "evaluation_name": s.schema.evaluation_name,
                "outcomes": list(s.schema.outcomes),
            },
            "agreement": self.session.agreement().to_json(),
        }

    def next_for(self, annotator: str) -> dict | None:
        item = self.session.next_item(annotator)
        if item is None:
            return None
        return item_view(self.session, item, annotator)

    def record(self, annotator: str, item_id: str, outcome: str) -> dict:
        with self._lock:
            self.session.record_label(annotator, item_id, outcome)
            checkpoint_session(self.store, self.session)
        return {"ok": True, "complete": self.session.is_complete()}

    def agreement(self) -> dict:
        return self.session.agreement().to_json()

    def disagreement_detail(self) -> list[dict]:
        s = self.session.state
        detail = []
        for item_id in self.session.disagreements():
            item = self.session.item(item_id)
            detail.append(
                {
                    "item_id": item_id,
                    "question": item.question,
                    "model_answer": item.model_answer,
                    "expected_answer": item.expected_answer,
                    "labels": {a: s.labels[a][item_id] for a in s.annotators},
                }
            )
        return detail

    def consensus(self, resolutions: dict[str, str]) -> dict:
        with self._lock:
            artifact = consensus_artifact(self.store, self.session, resolutions)
            ref = self.store.save(artifact)
            self.consensus_artifact_id = ref.artifact_id
            checkpoint_session(self.store, self.session)
        return {"artifact_id": ref.artifact_id}


def _make_handler(service: LabelService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send_json(self, status: int, payload) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error_json(self, status: int, message: str) -> None:
            self._send_json(status, {"error": message})

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                parsed = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                raise ValidationError("request body is not valid JSON")
            if not isinstance(parsed, dict):
                raise ValidationError("request body must be a JSON object")
            return parsed

        def _serve_static(self, path: str) -> None:
            if ui_dir is None:
                self._send_error_json(404, "no UI bundle installed; use the terminal mode")
                return
            rel = path.lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                self._send_error_json(404, f"not found: {path}")
                return
            body = target.read_bytes()
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            try:
                if url.path == "/api/session":
                    self._send_json(200, service.summary())
                elif url.path == "/api/next":
                    annotator = parse_qs(url.query).get("annotator", [""])[0]
                    if not annotator:
                        self._send_error_json(422, "annotator query parameter required")
                        return
                    view = service.next_for(annotator)
                    if view is None:
                        self.send_response(204)
                        self.end_headers()
                    else:
                        self._send_json(200, view)
                elif url.path == "/api/agreement":
                    self._send_json(200, service.agreement())
                elif url.path == "/api/disagreements":
                    self._send_json(200, service.disagreement_detail())
                else:
                    self._serve_static(url.path)
            except ValidationError as exc:
                self._send_error_json(422, str(exc))

        def do_POST(self):
            url = urlparse(self.path)
            try:
                body = self._read_body()
                if url.path == "/api/labels":
                    for field in ("annotator", "item_id", "outcome"):
                        if field not in body:
                            raise ValidationError(f"missing field {field!r}")
                    result = service.record(
                        str(body["annotator"]), str(body["item_id"]), str(body["outcome"])
                    )
                    self._send_json(201, result)
                elif url.path == "/api/consensus":
                    resolutions = body.get("resolutions", {})
                    if not isinstance(resolutions, dict):
                        raise ValidationError("resolutions must be an object")
                    result = service.consensus({str(k): str(v) for k, v in resolutions.items()})
                    self._send_json(201, result)
                else:
                    self._send_error_json(404, f"not found: {url.path}")
            except AlreadyLabeledError as exc:
                self._send_error_json(409, str(exc))
            except MissingResolutionError as exc:
                self._send_json(422, {"error": str(exc), "item_ids": exc.item_ids})
            except (SchemaError, ValidationError) as exc:
                self._send_error_json(422, str(exc))

    return Handler


class LabelServer:
    def __init__(
        self,
        session: LabelSession,
        store: ArtifactStore,
        host: str = DEFAULT_HOST,
        port: int = DEFAULT_PORT,
        ui_dir: str | Path | None = None,
    ):
        self.service = LabelService(session, store)
        ui_path = Path(ui_dir) if ui_dir else None
        if ui_path is not None and not ui_path.is_dir():
            raise ValidationError(f"UI directory {ui_path} does not exist")
        self.httpd = ThreadingHTTPServer(
            (host, port), _make_handler(self.service, ui_path)
        )

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    def serve_forever(self) -> None:
        self.httpd.serve_forever(poll_interval=0.05)

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        thread.start()
        return thread

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
