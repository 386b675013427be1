"""Shared fixtures: a small vocabulary, videos, and a fake HTTP backend."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from commonact.vocab import FrameRecord, LabelSet, VideoRecord, Vocabulary

ACTIVITY_NAMES = [
    "Holding some food",
    "Putting something on a table",
    "Someone is undressing",
    "Closing a closet/cabinet",
    "Washing a cup/glass/bottle",
]
OBJECT_NAMES = ["bread", "plate", "table", "clothes", "closet/cabinet", "towel", "blanket"]
INTERACTION_NAMES = ["in front of", "holding", "looking at", "not looking at", "not contacting"]


@pytest.fixture
def tiny_vocab() -> Vocabulary:
    return Vocabulary(
        activities=LabelSet(ACTIVITY_NAMES, kind="activity"),
        objects=LabelSet(OBJECT_NAMES, kind="object"),
        interactions=LabelSet(INTERACTION_NAMES, kind="interaction"),
    )


def make_video(video_id: str = "v0", *, frame_activities=(), fps: float = 1.0,
               objects=(), interactions=()) -> VideoRecord:
    """Video whose frame i carries frame_activities[i] (a set of ids)."""
    frames = []
    for i, acts in enumerate(frame_activities):
        frames.append(FrameRecord(
            video_id=video_id, frame_index=i, timestamp_s=i / fps,
            gt_activities=frozenset(acts),
            gt_objects=frozenset(objects),
            gt_interactions=frozenset(interactions),
            image_ref=f"{video_id}/{i}",
        ))
    union = frozenset(a for acts in frame_activities for a in acts)
    return VideoRecord(video_id, fps, tuple(frames), union)


class _JsonHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length)) if length else {}
        self.server.requests.append((self.path, body))
        status, payload = self.server.responder(self.path, body)
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class _QuietServer(ThreadingHTTPServer):
    def handle_error(self, request, client_address):
        pass  # clients aborting mid-response (timeout tests) are expected


@contextmanager
def fake_http_server(responder):
    """Serve POST requests with ``responder(path, body) -> (status, payload)``."""
    server = _QuietServer(("127.0.0.1", 0), _JsonHandler)
    server.requests = []
    server.responder = responder
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join()
