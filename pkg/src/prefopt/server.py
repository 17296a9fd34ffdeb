"""HTTP labeling service for human preference entry.

Serves pre-sampled segment pairs over a small JSON API plus the static
labeling UI. Labels append to a JSON Lines file; each append is flushed and
fsynced under a lock, so a killed session leaves exactly the committed
records behind, and a restarted session (same dataset, seed, output file)
resumes where it stopped.

API (all JSON, UTF-8):
  GET  /api/pair      next pending pair, or 204 when the queue is empty
  POST /api/label     {"pair_id": ..., "y": 0|0.5|1} -> {"done", "target"}
  GET  /api/progress  {"done", "target"}
  GET  /...           static UI assets
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .data import (PreferenceTriple, TrajectoryDataset, append_pref, load_prefs,
                   pref_header, sample_segment_pair, save_prefs)

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
}

FALLBACK_PAGE = b"""<!doctype html><meta charset="utf-8">
<title>labeling service</title>
<p>The labeling API is running, but no UI bundle was found.
Build the frontend (see README) or point --ui-dir at a built bundle.
The JSON API lives under /api/.</p>
"""


def _pair_bounds(env: str, states0: np.ndarray, states1: np.ndarray) -> dict:
    """Viewport bounds for the two tracks, symmetrized to equal spans."""
    if env == "pendulum":
        return {"low": [-1.2, -1.2], "high": [1.2, 1.2]}
    pos = np.concatenate([states0[:, :2], states1[:, :2]], axis=0)
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    center = (lo + hi) / 2.0
    half = float(max((hi - lo).max() / 2.0, 0.5)) * 1.1
    return {"low": [float(center[0] - half), float(center[1] - half)],
            "high": [float(center[0] + half), float(center[1] + half)]}


class LabelSession:
    """Pre-sampled pair queue plus the durable label log."""

    def __init__(self, dataset: TrajectoryDataset, k: int, n_pairs: int,
                 seed: int, out_path: str | Path):
        self.dataset = dataset
        self.k = k
        self.out_path = Path(out_path)
        self.lock = threading.Lock()
        rng = np.random.default_rng(seed)
        self.pairs = []
        for i in range(n_pairs):
            seg0, seg1 = sample_segment_pair(dataset, k, rng)
            self.pairs.append((f"pair-{i:05d}", seg0, seg1))
        self.by_id = {pid: (s0, s1) for pid, s0, s1 in self.pairs}
        self.labeled: set[str] = set()
        if self.out_path.exists():
            committed, _ = load_prefs(self.out_path)
            self.labeled = {t.pair_id for t in committed if t.pair_id in self.by_id}
        else:
            save_prefs(self.out_path, [],
                       header=pref_header(dataset.env, k, n_pairs, seed, "human"))

    @property
    def target(self) -> int:
        return len(self.pairs)

    def progress(self) -> dict:
        with self.lock:
            return {"done": len(self.labeled), "target": self.target}

    def done(self) -> bool:
        with self.lock:
            return len(self.labeled) >= self.target

    def next_pair_payload(self) -> dict | None:
        with self.lock:
            for pid, seg0, seg1 in self.pairs:
                if pid not in self.labeled:
                    return {
                        "pair_id": pid,
                        "k": self.k,
                        "env": self.dataset.env,
                        "seg0": {"states": seg0.states.tolist(),
                                 "actions": seg0.actions.tolist()},
                        "seg1": {"states": seg1.states.tolist(),
                                 "actions": seg1.actions.tolist()},
                        "bounds": _pair_bounds(self.dataset.env, seg0.states, seg1.states),
                    }
        return None

    def submit(self, pair_id, y) -> tuple[int, dict]:
        """Returns (http status, body). 400 never mutates state; 409 means
        the pair was already labeled."""
        if not isinstance(pair_id, str) or pair_id not in self.by_id:
            return 400, {"error": f"unknown pair_id {pair_id!r}"}
        if not isinstance(y, (int, float)) or isinstance(y, bool) or float(y) not in (0.0, 0.5, 1.0):
            return 400, {"error": f"label y must be 0, 0.5 or 1, got {y!r}"}
        with self.lock:
            if pair_id in self.labeled:
                return 409, {"error": f"{pair_id} already labeled"}
            seg0, seg1 = self.by_id[pair_id]
            triple = PreferenceTriple(
                pair_id=pair_id, traj0=seg0.traj_id, start0=seg0.start,
                traj1=seg1.traj_id, start1=seg1.start, k=self.k,
                y=float(y), teacher="human")
            append_pref(self.out_path, triple)
            self.labeled.add(pair_id)
            return 200, {"done": len(self.labeled), "target": self.target}


def _make_handler(session: LabelSession, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path == "/api/pair":
                payload = session.next_pair_payload()
                if payload is None:
                    self.send_response(204)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                else:
                    self._send_json(200, payload)
                return
            if path == "/api/progress":
                self._send_json(200, session.progress())
                return
            self._serve_static(path)

        def _serve_static(self, path: str) -> None:
            if path == "/":
                path = "/index.html"
            if ui_dir is not None:
                target = (ui_dir / path.lstrip("/")).resolve()
                if target.is_file() and ui_dir.resolve() in target.parents:
                    data = target.read_bytes()
                    self.send_response(200)
                    ctype = CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                    self.send_header("Content-Type", ctype)
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                    return
            if path == "/index.html":
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(FALLBACK_PAGE)))
                self.end_headers()
                self.wfile.write(FALLBACK_PAGE)
                return
            self._send_json(404, {"error": f"no such path {path}"})

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            if path != "/api/label":
                self._send_json(404, {"error": f"no such path {path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                if not isinstance(body, dict):
                    raise ValueError("body must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._send_json(400, {"error": f"malformed body: {exc}"})
                return
            if "pair_id" not in body or "y" not in body:
                self._send_json(400, {"error": "body needs pair_id and y"})
                return
            status, reply = session.submit(body["pair_id"], body["y"])
            self._send_json(status, reply)

    return Handler


class LabelServer:
    """ThreadingHTTPServer wrapper; port 0 binds an ephemeral port."""

    def __init__(self, session: LabelSession, port: int = 0,
                 host: str = "127.0.0.1", ui_dir: str | Path | None = None):
        self.session = session
        ui = Path(ui_dir) if ui_dir is not None else None
        self.httpd = ThreadingHTTPServer((host, port), _make_handler(session, ui))
        self.host = host
        self.port = self.httpd.server_address[1]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def serve_until_done(self, poll_seconds: float = 0.25,
                         linger_seconds: float = 0.5) -> None:
        """Block until every pair is labeled (or KeyboardInterrupt), then stop.

        A short linger lets the client fetch the final progress screen.
        """
        import time

        self.start()
        try:
            while not self.session.done():
                time.sleep(poll_seconds)
            time.sleep(linger_seconds)
        finally:
            self.stop()
