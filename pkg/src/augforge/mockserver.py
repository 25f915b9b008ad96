"""In-process mock servers for the model endpoint and the evaluation worker.

Both speak the exact wire shapes the real services use, so the rest of the
system cannot tell the difference. The mock model derives its completion
deterministically from a hash of the request body: the same request always
yields the same candidate, across processes and runs, which is what makes
whole-loop replays reproducible. The mock worker scores candidates with the
deterministic surrogate evaluator.

Intended for tests and the ``mock-serve`` CLI command; nothing here is part
of the production path.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .scheduler import EvalConfig, surrogate_evaluate
from .transform_space import PipelineSpec, default_catalog, render_pipeline

MODE_PIPELINE = "pipeline"
MODE_ECHO = "echo"
MODE_FLAKY = "flaky"

# 1-in-N request hashes produce a degenerate completion (no tag pair), so
# loop runs exercise the rejection path while staying deterministic.
_DEGENERATE_EVERY = 23
# 1-in-N request hashes upscale the resize target to 256, the variant the
# pair augmentation mirrors.
_RESIZE_256_EVERY = 5


def _candidate_for_body(body: bytes) -> str:
    """Deterministic completion text for a request body."""
    h = int(hashlib.sha256(body).hexdigest()[:16], 16)
    if h % _DEGENERATE_EVERY == 0:
        return "I considered several options but cannot settle on a transform."

    catalog = default_catalog()
    arity = (h % 3) + 1
    rng = random.Random(h)
    combo = rng.sample(range(len(catalog)), arity)
    variable_ops = tuple((catalog[i].name, catalog[i].bind(rng)) for i in combo)
    code = render_pipeline(PipelineSpec(variable_ops=variable_ops, rng_seed=h))
    if h % _RESIZE_256_EVERY == 0:
        code = code.replace("transforms.Resize((64, 64))", "transforms.Resize((256, 256))")
    return f"Here is an improved transform.\n<tr>\n{code}</tr>"


class _SilentHandler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # pragma: no cover - silence only
        pass

    def _send_json(self, status: int, payload: dict):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length)


class _LLMHandler(_SilentHandler):
    def do_POST(self):
        server: MockLLMServer = self.server  # type: ignore[assignment]
        body = self._read_body()

        if server.mode == MODE_FLAKY and server.take_failure():
            self._send_json(500, {"error": "transient overload"})
            return

        if server.mode == MODE_ECHO:
            content = server.echo_text
        else:
            content = _candidate_for_body(body)
        self._send_json(200, {"choices": [{"message": {"role": "assistant", "content": content}}]})


class MockLLMServer(ThreadingHTTPServer):
    """Chat-completions endpoint that answers deterministically.

    Modes: "pipeline" (default) derives a candidate from the request body
    hash; "echo" returns a fixed text; "flaky" fails the first ``fail_first``
    requests with HTTP 500 and then behaves like "pipeline".
    """

    daemon_threads = True

    def __init__(
        self,
        port: int = 0,
        mode: str = MODE_PIPELINE,
        echo_text: str = "",
        fail_first: int = 0,
    ):
        if mode not in (MODE_PIPELINE, MODE_ECHO, MODE_FLAKY):
            raise ValueError(f"unknown mock model mode {mode!r}")
        super().__init__(("127.0.0.1", port), _LLMHandler)
        self.mode = mode
        self.echo_text = echo_text
        self._failures_left = fail_first
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def take_failure(self) -> bool:
        with self._lock:
            if self._failures_left > 0:
                self._failures_left -= 1
                return True
            return False

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}/v1/chat/completions"

    def start(self) -> "MockLLMServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()

    def __enter__(self) -> "MockLLMServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class _WorkerHandler(_SilentHandler):
    def do_POST(self):
        server: MockWorkerServer = self.server  # type: ignore[assignment]
        if self.path.rstrip("/") != "/evaluate":
            self._send_json(404, {"error": f"unknown path {self.path}"})
            return
        if server.delay_s > 0:
            time.sleep(server.delay_s)
        if server.always_fail:
            self._send_json(500, {"error": "worker is down"})
            return
        try:
            payload = json.loads(self._read_body())
            job_id = payload["job_id"]
            code = payload["code"]
            config = EvalConfig.from_json(payload["config"])
        except (ValueError, KeyError, TypeError) as exc:
            self._send_json(400, {"error": f"bad request: {exc}"})
            return
        result = surrogate_evaluate(code, config)
        if result.ok:
            self._send_json(200, {"job_id": job_id, "accuracy": result.accuracy})
        else:
            self._send_json(
                200,
                {"job_id": job_id, "error_class": result.error_class, "detail": result.detail},
            )


class MockWorkerServer(ThreadingHTTPServer):
    """Evaluation worker that scores with the surrogate evaluator.

    ``delay_s`` injects latency ahead of every reply (timeout testing);
    ``always_fail`` answers every request with HTTP 500.
    """

    daemon_threads = True

    def __init__(self, port: int = 0, delay_s: float = 0.0, always_fail: bool = False):
        super().__init__(("127.0.0.1", port), _WorkerHandler)
        self.delay_s = delay_s
        self.always_fail = always_fail
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start(self) -> "MockWorkerServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()

    def __enter__(self) -> "MockWorkerServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
