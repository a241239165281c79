"""HTTP session API for the live loop (the surface the console polls).

Sessions are driven lazily by requests: creating one advances the flow to the
first artist-evaluation point; posting feedback applies it and advances to the
next.  Per-session operations are serialized by a lock, so concurrent requests
see consistent snapshots, and every session appends to its own log file.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import embedding as em
from . import engine as eg
from . import labanstr as lb
from .store import attach_log

API_PREFIX = "/api/v1"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ManagedSession:
    session: eg.SessionState
    max_iterations: int
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionService:
    """Owns the live sessions; one lock per session, one log file per session."""

    def __init__(self, data_dir, vocab: em.Vocab | None = None, max_iterations: int = 500):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.vocab = vocab or em.default_vocab()
        self.max_iterations = max_iterations
        self._sessions: dict[str, ManagedSession] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def _advance_to_eval(self, managed: ManagedSession):
        session = managed.session
        while (
            session.stage not in (eg.Stage.ARTIST_EVAL, eg.Stage.ACCEPTED)
            and session.iteration < managed.max_iterations
        ):
            eg.flow_step(session)

    def create_session(self, config_payload: dict) -> str:
        payload = dict(config_payload or {})
        seed = payload.pop("seed", None)
        try:
            config = eg.LoopConfig(**payload)
        except (TypeError, ValueError) as err:
            raise ApiError(400, "bad_config", str(err)) from None
        with self._lock:
            self._counter += 1
            session_id = f"s{self._counter:06d}"
        if seed is None:
            seed = self._counter
        session = eg.create_session(config, self.vocab, seed=int(seed))
        attach_log(session, self.data_dir / f"{session_id}.jsonl")
        managed = ManagedSession(session=session, max_iterations=self.max_iterations)
        with managed.lock:
            self._advance_to_eval(managed)
        with self._lock:
            self._sessions[session_id] = managed
        return session_id

    def _managed(self, session_id: str) -> ManagedSession:
        with self._lock:
            managed = self._sessions.get(session_id)
        if managed is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return managed

    def snapshot(self, session_id: str) -> dict:
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.session
            latest = (
                lb.serialize_score(session.last_score) if session.last_score is not None else None
            )
            return {
                "id": session_id,
                "stage": session.stage.value,
                "iteration": session.iteration,
                "latest_score": latest,
                "rating_history": session.rating_history(),
                "best_rating": None if session.best_rating == -float("inf") else session.best_rating,
                "accept_threshold": session.config.accept_threshold,
                "vocab": [
                    {"word": w.text, "role": w.role, "column": w.column.value if w.column else None}
                    for w in session.vocab.words
                ],
            }

    def feedback(self, session_id: str, payload: dict) -> dict:
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.session
            if session.stage is not eg.Stage.ARTIST_EVAL:
                raise ApiError(
                    409, "not_waiting", f"session is at {session.stage.value}, not artist_eval"
                )
            try:
                event = eg.FeedbackEvent(
                    iteration=session.iteration,
                    rating=float(payload["rating"]),
                    judgement=eg.judgement_from_payload(payload.get("judgement", {})),
                    decision=eg.Decision(payload.get("decision", "none")),
                )
            except (KeyError, ValueError) as err:
                raise ApiError(400, "bad_feedback", str(err)) from None
            eg.flow_step(session, event)
            self._advance_to_eval(managed)
            return {"ok": True, "stage": session.stage.value, "iteration": session.iteration}

    def events(self, session_id: str, since: int) -> list[dict]:
        managed = self._managed(session_id)
        with managed.lock:
            return [e for e in managed.session.events if e["seq"] > since]

    def artifact(self, session_id: str) -> str:
        managed = self._managed(session_id)
        with managed.lock:
            if managed.session.last_score is None:
                raise ApiError(404, "no_artifact", "nothing generated yet")
            return lb.serialize_score(managed.session.last_score)


def make_handler(service: SessionService, static_dir=None):
    static_root = Path(static_dir) if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send_json(self, status: int, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_text(self, status: int, text: str, content_type="text/plain; charset=utf-8"):
            body = text.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError:
                raise ApiError(400, "bad_json", "request body is not valid JSON") from None

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

        def _route(self, method: str):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if url.path == API_PREFIX + "/sessions" and method == "POST":
                payload = self._read_body()
                session_id = service.create_session(payload.get("config", {}))
                return self._send_json(200, {"id": session_id})
            if len(parts) >= 4 and parts[0] == "api" and parts[1] == "v1" and parts[2] == "sessions":
                session_id = parts[3]
                rest = parts[4:]
                if not rest and method == "GET":
                    return self._send_json(200, service.snapshot(session_id))
                if rest == ["feedback"] and method == "POST":
                    return self._send_json(200, service.feedback(session_id, self._read_body()))
                if rest == ["events"] and method == "GET":
                    since = int(parse_qs(url.query).get("since", ["0"])[0])
                    return self._send_json(200, {"events": service.events(session_id, since)})
                if rest == ["artifact", "latest"] and method == "GET":
                    return self._send_text(200, service.artifact(session_id))
            if method == "GET" and static_root is not None:
                return self._serve_static(url.path)
            raise ApiError(404, "not_found", f"no route for {method} {url.path}")

        def _serve_static(self, path: str):
            relative = path.lstrip("/") or "index.html"
            target = (static_root / relative).resolve()
            if not str(target).startswith(str(static_root.resolve())) or not target.is_file():
                raise ApiError(404, "not_found", f"no route for GET {path}")
            content_types = {
                ".html": "text/html; charset=utf-8",
                ".js": "text/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
            }
            self._send_text(
                200, target.read_text(encoding="utf-8"),
                content_types.get(target.suffix, "text/plain; charset=utf-8"),
            )

        def _handle(self, method: str):
            try:
                self._route(method)
            except ApiError as err:
                self._send_json(err.status, {"code": err.code, "message": err.message})
            except Exception as err:  # noqa: BLE001 - surface as a 500 payload
                self._send_json(500, {"code": "internal", "message": str(err)})

        def do_GET(self):
            self._handle("GET")

        def do_POST(self):
            self._handle("POST")

    return Handler


def serve(port: int, data_dir, vocab: em.Vocab | None = None, static_dir=None, max_iterations: int = 500):
    service = SessionService(data_dir, vocab=vocab, max_iterations=max_iterations)
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(service, static_dir))
    return server, service
