"""HTTP JSON transport for the verification service.

Endpoints (bodies are UTF-8 JSON; binary fields base64):

    POST /api/v1/capture  {domain, user_ip, site_key, payload, signature,
                           public_key}              -> 200 {token} | 4xx {error}
    POST /api/v1/verify   {site_key, shared_key, token, uid, device_fp}
                                                    -> 200 {sealed_score} | 4xx {error}
    POST /api/v1/sites    {domain, site_key, shared_key} -> 201 | 409
    GET  /api/v1/health                             -> 200 {status, uptime_ms}

Error bodies carry the pipeline rejection name verbatim; the attack
harness asserts on those strings.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .crypto import TraceableToken
from .server import CaptchaServer, CaptureSubmission, PipelineRejection

_MAX_BODY = 8 * 1024 * 1024


class _BadRequest(Exception):
    """Malformed transport-level request; reported as InvalidFormat."""


def _field(body: dict, name: str) -> str:
    value = body.get(name)
    if not isinstance(value, str) or not value:
        raise _BadRequest(f"missing or empty field {name!r}")
    return value


def _b64_field(body: dict, name: str) -> bytes:
    try:
        return base64.b64decode(_field(body, name), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _BadRequest(f"field {name!r} is not valid base64") from exc


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "thermoguard"

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        pass  # request logging is the embedding application's concern

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length <= 0 or length > _MAX_BODY:
            raise _BadRequest("missing or oversized body")
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise _BadRequest("body is not valid JSON") from exc
        if not isinstance(body, dict):
            raise _BadRequest("body must be a JSON object")
        return body

    def do_GET(self) -> None:
        if self.path == "/api/v1/health":
            uptime = int((time.monotonic() - self.server.started_monotonic) * 1000)
            self._send_json(200, {"status": "ok", "uptime_ms": uptime})
        else:
            self._send_json(404, {"error": "NotFound"})

    def do_POST(self) -> None:
        core: CaptchaServer = self.server.core
        try:
            if self.path == "/api/v1/capture":
                body = self._read_body()
                submission = CaptureSubmission(
                    domain=_field(body, "domain"),
                    user_ip=_field(body, "user_ip"),
                    site_key=_field(body, "site_key"),
                    payload=_b64_field(body, "payload"),
                    signature=_b64_field(body, "signature"),
                    public_key=_field(body, "public_key"),
                )
                token = core.handle_capture(submission)
                self._send_json(
                    200, {"token": base64.b64encode(token.ciphertext).decode("ascii")}
                )
            elif self.path == "/api/v1/verify":
                body = self._read_body()
                sealed = core.handle_verify(
                    token=TraceableToken(_b64_field(body, "token")),
                    site_key=_field(body, "site_key"),
                    shared_key=_b64_field(body, "shared_key"),
                    uid=_field(body, "uid"),
                    device_fp=_b64_field(body, "device_fp"),
                )
                self._send_json(
                    200, {"sealed_score": base64.b64encode(sealed).decode("ascii")}
                )
            elif self.path == "/api/v1/sites":
                body = self._read_body()
                shared_key = _b64_field(body, "shared_key")
                if len(shared_key) != 32:
                    raise _BadRequest("shared_key must be 32 bytes")
                core.register_site(
                    domain=_field(body, "domain"),
                    site_key=_field(body, "site_key"),
                    shared_key=shared_key,
                )
                self._send_json(201, {"status": "registered"})
            else:
                self._send_json(404, {"error": "NotFound"})
        except PipelineRejection as exc:
            self._send_json(exc.http_status, {"error": exc.name})
        except (_BadRequest, ValueError):
            self._send_json(400, {"error": "InvalidFormat"})


class ApiServer:
    """Threaded HTTP front for a CaptchaServer core.

    Port 0 binds an ephemeral port (read it back from ``.port``).
    """

    def __init__(self, core: CaptchaServer, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.daemon_threads = True
        self._httpd.core = core
        self._httpd.started_monotonic = time.monotonic()
        self._thread: threading.Thread | None = None

    @property
    def core(self) -> CaptchaServer:
        return self._httpd.core

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="thermoguard-http", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
