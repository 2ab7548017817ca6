"""Honest-party simulators: the capturing client and the relying website.

These drive the real HTTP API the way a browser widget and a site backend
would, and are the baseline flows the attack harness perturbs. Client
clocks are modeled as a millisecond offset from the reference clock so
stale-timestamp behavior is testable without sleeping.
"""

from __future__ import annotations

import base64
import secrets
import time
from dataclasses import dataclass

import requests

from .crypto import (
    TokenError,
    TraceableToken,
    digest,
    encode_verification_key,
    gen_keypair,
    open_score,
    sign,
)
from .frames import SceneKind, encode_frame, generate_scene
from .payload import Nonce, Timestamp, assemble_capture
from .server import derive_device_fp, derive_uid

DEFAULT_TIMEOUT_S = 30.0


class ServerRejectedError(Exception):
    """The server answered with a pipeline rejection."""

    def __init__(self, error: str, status: int):
        super().__init__(f"{error} (HTTP {status})")
        self.error = error
        self.status = status


class ServerUnreachable(Exception):
    """No usable HTTP response from the server."""


class SealOpenFailure(Exception):
    """The sealed risk score did not open under the site's shared key."""


@dataclass
class ClientContext:
    """One capturing user: network origin, keypair, and simulated clock skew."""

    user_ip: str
    signing_key: object
    verification_key: object
    clock_offset_ms: int = 0
    last_solve_ms: float | None = None

    @classmethod
    def create(
        cls,
        user_ip: str,
        clock_offset_ms: int = 0,
        keypair: tuple | None = None,
        seed: int | None = None,
    ) -> "ClientContext":
        sk, pk = keypair if keypair is not None else gen_keypair(seed)
        return cls(user_ip, sk, pk, clock_offset_ms)

    @property
    def public_key_pem(self) -> str:
        return encode_verification_key(self.verification_key)

    def uid(self) -> str:
        return derive_uid(self.user_ip, self.public_key_pem)

    def device_fp(self, site_key: str) -> bytes:
        return derive_device_fp(self.user_ip, self.public_key_pem, site_key)


@dataclass
class WebsiteContext:
    """One relying website: registered keys and local accept policy."""

    domain: str
    site_key: str
    shared_key: bytes
    accept_threshold: float = 0.5

    @classmethod
    def create(cls, domain: str, site_key: str | None = None) -> "WebsiteContext":
        return cls(
            domain=domain,
            site_key=site_key or f"sk-{secrets.token_hex(8)}",
            shared_key=secrets.token_bytes(32),
        )

    def register(self, server_url: str, session: requests.Session | None = None) -> None:
        response = _post(
            session,
            f"{server_url}/api/v1/sites",
            {
                "domain": self.domain,
                "site_key": self.site_key,
                "shared_key": base64.b64encode(self.shared_key).decode("ascii"),
            },
        )
        if response.status_code not in (200, 201):
            raise ServerRejectedError(
                response.json().get("error", "unknown"), response.status_code
            )


def _post(session: requests.Session | None, url: str, body: dict) -> requests.Response:
    poster = session if session is not None else requests
    try:
        return poster.post(url, json=body, timeout=DEFAULT_TIMEOUT_S)
    except requests.RequestException as exc:
        raise ServerUnreachable(str(exc)) from exc


def build_submission_body(
    client: ClientContext,
    site: WebsiteContext,
    scene: SceneKind,
    seed: int = 0,
    base_now_ms: int | None = None,
    nonce: Nonce | None = None,
    frame_bytes: bytes | None = None,
) -> dict:
    """Capture, assemble, and sign one submission; returns the JSON body.

    Exposed separately so the attack harness can tamper with a well-formed
    request before it hits the wire. ``frame_bytes`` substitutes a
    pre-encoded capture (e.g. a .thermo file) for the generated scene.
    """
    if frame_bytes is None:
        frame_bytes = encode_frame(generate_scene(scene, seed))
    now = int(time.time() * 1000) if base_now_ms is None else base_now_ms
    payload = assemble_capture(
        frame_bytes,
        nonce if nonce is not None else Nonce.generate(),
        Timestamp(now + client.clock_offset_ms),
    )
    signature = sign(digest(payload), client.signing_key)
    return {
        "domain": site.domain,
        "user_ip": client.user_ip,
        "site_key": site.site_key,
        "payload": base64.b64encode(payload).decode("ascii"),
        "signature": base64.b64encode(signature).decode("ascii"),
        "public_key": client.public_key_pem,
    }


def solve_captcha(
    client: ClientContext,
    site: WebsiteContext,
    scene: SceneKind,
    server_url: str,
    seed: int = 0,
    base_now_ms: int | None = None,
    session: requests.Session | None = None,
    frame_bytes: bytes | None = None,
) -> TraceableToken:
    """Run the honest capture flow; returns the issued token.

    Server rejections propagate verbatim as ServerRejectedError. Wall time
    from submission to token is recorded on ``client.last_solve_ms``.
    """
    body = build_submission_body(client, site, scene, seed, base_now_ms,
                                 frame_bytes=frame_bytes)
    started = time.perf_counter()
    response = _post(session, f"{server_url}/api/v1/capture", body)
    client.last_solve_ms = (time.perf_counter() - started) * 1000.0
    if response.status_code != 200:
        raise ServerRejectedError(
            response.json().get("error", "unknown"), response.status_code
        )
    return TraceableToken(base64.b64decode(response.json()["token"]))


def forward_and_verify(
    site: WebsiteContext,
    token: TraceableToken,
    client: ClientContext,
    server_url: str,
    session: requests.Session | None = None,
) -> tuple[bool, float]:
    """Redeem a token from the given client context; returns (accept, score)."""
    response = _post(
        session,
        f"{server_url}/api/v1/verify",
        {
            "site_key": site.site_key,
            "shared_key": base64.b64encode(site.shared_key).decode("ascii"),
            "token": base64.b64encode(token.ciphertext).decode("ascii"),
            "uid": client.uid(),
            "device_fp": base64.b64encode(client.device_fp(site.site_key)).decode("ascii"),
        },
    )
    if response.status_code != 200:
        raise ServerRejectedError(
            response.json().get("error", "unknown"), response.status_code
        )
    try:
        score = open_score(
            base64.b64decode(response.json()["sealed_score"]), site.shared_key
        )
    except TokenError as exc:
        raise SealOpenFailure(str(exc)) from exc
    return score > site.accept_threshold, score
