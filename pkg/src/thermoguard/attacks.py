"""Adversarial campaigns against a live verification server.

Campaigns manipulate real wire messages over the HTTP API (the adversary
sits between client and server), tally accept/reject outcomes per attack
class, and render machine-readable reports. Every campaign first proves
the honest path works (the control); a campaign whose control fails is
inconclusive, not a security win.
"""

from __future__ import annotations

import base64
import concurrent.futures
import json
import random
import threading
import time
from dataclasses import dataclass

import requests

from .frames import SceneKind
from .payload import TRAILER_LEN, Nonce
from .sim import (
    ClientContext,
    ServerUnreachable,
    WebsiteContext,
    build_submission_body,
    forward_and_verify,
    solve_captcha,
)

REPLAY = "replay"
STALE_TIMESTAMP = "stale_timestamp"
NONCE_REUSE = "nonce_reuse"
MODIFIED_BINARY = "modified_binary"
MODIFIED_METADATA = "modified_metadata"
TOKEN_FORWARD = "token_forward"
NON_THERMAL_UPLOAD = "non_thermal_upload"
TAMPERED_CLIENT = "tampered_client"
NON_HUMAN_SCENE = "non_human_scene"

MITM_CLASSES = (REPLAY, STALE_TIMESTAMP, NONCE_REUSE, MODIFIED_BINARY,
                MODIFIED_METADATA)
MISUSE_CLASSES = (NON_THERMAL_UPLOAD, TAMPERED_CLIENT, NON_HUMAN_SCENE)
ALL_CLASSES = MITM_CLASSES + (TOKEN_FORWARD,) + MISUSE_CLASSES

_STALE_OFFSET_RANGE_MS = (3 * 60_000, 60 * 60_000)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


class InconclusiveCampaign(Exception):
    """The honest-path control was rejected; results prove nothing."""


@dataclass(frozen=True)
class AttackReport:
    """Tally of one campaign, mirroring the attempts/accepted/rejected layout."""

    attack_class: str
    attempts: int
    accepted: int
    rejected: int
    success_pct: float
    errors: dict[str, int]
    seed: int

    def to_dict(self) -> dict:
        return {
            "class": self.attack_class,
            "attempts": self.attempts,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "success_pct": self.success_pct,
            "errors": dict(sorted(self.errors.items())),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttackReport":
        return cls(
            attack_class=data["class"],
            attempts=data["attempts"],
            accepted=data["accepted"],
            rejected=data["rejected"],
            success_pct=data["success_pct"],
            errors=dict(data["errors"]),
            seed=data["seed"],
        )


def _tally(attack_class: str, outcomes: list[tuple[bool, str | None]],
           seed: int) -> AttackReport:
    accepted = sum(1 for ok, _ in outcomes if ok)
    errors: dict[str, int] = {}
    for ok, error in outcomes:
        if not ok:
            errors[error or "unknown"] = errors.get(error or "unknown", 0) + 1
    attempts = len(outcomes)
    return AttackReport(
        attack_class=attack_class,
        attempts=attempts,
        accepted=accepted,
        rejected=attempts - accepted,
        success_pct=100.0 * accepted / attempts if attempts else 0.0,
        errors=errors,
        seed=seed,
    )


class _Sessions(threading.local):
    """One requests.Session per worker thread."""

    def get(self) -> requests.Session:
        if not hasattr(self, "session"):
            self.session = requests.Session()
        return self.session


def _post_capture(session: requests.Session, server_url: str,
                  body: dict) -> tuple[bool, str | None]:
    try:
        response = session.post(f"{server_url}/api/v1/capture", json=body, timeout=30)
    except requests.RequestException as exc:
        raise ServerUnreachable(str(exc)) from exc
    if response.status_code == 200:
        return True, None
    return False, response.json().get("error", "unknown")


def _post_verify(session: requests.Session, server_url: str,
                 body: dict) -> tuple[bool, str | None]:
    try:
        response = session.post(f"{server_url}/api/v1/verify", json=body, timeout=30)
    except requests.RequestException as exc:
        raise ServerUnreachable(str(exc)) from exc
    if response.status_code == 200:
        return True, None
    return False, response.json().get("error", "unknown")


def _run_parallel(tasks, parallelism: int) -> list:
    if parallelism <= 1:
        return [task() for task in tasks]
    with concurrent.futures.ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _require_control(condition: bool, detail: str) -> None:
    if not condition:
        raise InconclusiveCampaign(f"honest control failed: {detail}")


def _flip_bit(data: bytes, byte_index: int, bit: int) -> bytes:
    tampered = bytearray(data)
    tampered[byte_index] ^= 1 << bit
    return bytes(tampered)


def _honest_client(rng: random.Random, keypair=None) -> ClientContext:
    ip = f"203.0.{rng.randrange(256)}.{rng.randrange(1, 255)}"
    return ClientContext.create(ip, keypair=keypair)


def run_mitm_campaign(
    attack_class: str,
    n: int,
    seed: int,
    server_url: str,
    site: WebsiteContext,
    parallelism: int = 8,
    burn_nonce: bool = True,
) -> AttackReport:
    """Execute one of the five in-transit manipulation classes n times.

    replay: resend one honestly accepted submission byte-identically.
    stale_timestamp: fresh honest payloads timestamped 3-60 min in the past.
    nonce_reuse: fresh payloads all bearing one already-consumed nonce.
    modified_binary / modified_metadata: honest signed submissions with one
    random bit flipped post-signing, in a pixel byte or in the 72-byte
    trailer respectively.

    ``burn_nonce=False`` skips consuming the shared nonce up front in the
    nonce_reuse class; the first attempt then legitimately succeeds, which
    is the degenerate control proving the harness can observe acceptance.
    """
    if attack_class not in MITM_CLASSES:
        raise ValueError(f"unknown MITM class {attack_class!r}")
    rng = random.Random(f"{seed}:{attack_class}")
    sessions = _Sessions()
    client = _honest_client(rng)
    control_session = sessions.get()

    def scene_seed() -> int:
        return rng.getrandbits(63)

    bodies: list[dict] = []
    if attack_class == REPLAY:
        body = build_submission_body(client, site, SceneKind.human(), scene_seed())
        ok, error = _post_capture(control_session, server_url, body)
        _require_control(ok, f"replay control rejected with {error}")
        bodies = [body] * n
    elif attack_class == STALE_TIMESTAMP:
        control = build_submission_body(client, site, SceneKind.human(), scene_seed())
        ok, error = _post_capture(control_session, server_url, control)
        _require_control(ok, f"control rejected with {error}")
        now = int(time.time() * 1000)
        for _ in range(n):
            offset = rng.randint(*_STALE_OFFSET_RANGE_MS)
            bodies.append(
                build_submission_body(
                    client, site, SceneKind.human(), scene_seed(),
                    base_now_ms=now - offset,
                )
            )
    elif attack_class == NONCE_REUSE:
        burned = Nonce.generate()
        if burn_nonce:
            control = build_submission_body(
                client, site, SceneKind.human(), scene_seed(), nonce=burned
            )
            ok, error = _post_capture(control_session, server_url, control)
            _require_control(ok, f"nonce-burning control rejected with {error}")
        for _ in range(n):
            bodies.append(
                build_submission_body(
                    client, site, SceneKind.human(), scene_seed(), nonce=burned
                )
            )
    else:  # modified_binary / modified_metadata
        control = build_submission_body(client, site, SceneKind.human(), scene_seed())
        ok, error = _post_capture(control_session, server_url, control)
        _require_control(ok, f"control rejected with {error}")
        for _ in range(n):
            body = build_submission_body(client, site, SceneKind.human(), scene_seed())
            payload = base64.b64decode(body["payload"])
            if attack_class == MODIFIED_BINARY:
                index = rng.randrange(9, len(payload) - TRAILER_LEN)
            else:
                index = rng.randrange(len(payload) - TRAILER_LEN, len(payload))
            payload = _flip_bit(payload, index, rng.randrange(8))
            body = dict(body)
            body["payload"] = base64.b64encode(payload).decode("ascii")
            bodies.append(body)

    tasks = [
        (lambda b=body: _post_capture(sessions.get(), server_url, b))
        for body in bodies
    ]
    outcomes = _run_parallel(tasks, parallelism)
    return _tally(attack_class, outcomes, seed)


def run_token_forward_campaign(
    n: int,
    seed: int,
    server_url: str,
    site: WebsiteContext,
    parallelism: int = 8,
    keypair_pool_size: int = 16,
    from_original_context: bool = False,
) -> AttackReport:
    """Farm-style outsourcing: n tokens solved honestly by workers, each
    redeemed once from a foreign (uid, device_fp) context.

    ``from_original_context=True`` is the sanity control: every redemption
    comes from the worker that solved, and must be accepted.
    """
    rng = random.Random(f"{seed}:{TOKEN_FORWARD}")
    sessions = _Sessions()
    from .crypto import gen_keypair

    pool = [gen_keypair() for _ in range(min(keypair_pool_size, max(1, n)))]

    control_client = _honest_client(rng, keypair=pool[0])
    control_token = solve_captcha(
        control_client, site, SceneKind.human(), server_url,
        seed=rng.getrandbits(63), session=sessions.get(),
    )
    accepted_control, _ = forward_and_verify(
        site, control_token, control_client, server_url, session=sessions.get()
    )
    _require_control(accepted_control, "original-context redemption rejected")

    units: list[tuple[ClientContext, int, str, str, bytes]] = []
    for i in range(n):
        worker = ClientContext.create(
            f"10.{(i >> 16) & 255}.{(i >> 8) & 255}.{i & 255}",
            keypair=pool[i % len(pool)],
        )
        attacker_ip = f"198.51.{(i >> 8) & 255}.{i & 255}"
        attacker_uid = f"{attacker_ip}:{rng.getrandbits(32):08x}"
        attacker_fp = rng.getrandbits(256).to_bytes(32, "big")
        units.append((worker, rng.getrandbits(63), attacker_ip, attacker_uid,
                      attacker_fp))

    def attempt(unit) -> tuple[bool, str | None]:
        worker, scene_seed, _, attacker_uid, attacker_fp = unit
        session = sessions.get()
        token = solve_captcha(
            worker, site, SceneKind.human(), server_url,
            seed=scene_seed, session=session,
        )
        if from_original_context:
            uid, fp = worker.uid(), worker.device_fp(site.site_key)
        else:
            uid, fp = attacker_uid, attacker_fp
        return _post_verify(
            session,
            server_url,
            {
                "site_key": site.site_key,
                "shared_key": base64.b64encode(site.shared_key).decode("ascii"),
                "token": base64.b64encode(token.ciphertext).decode("ascii"),
                "uid": uid,
                "device_fp": base64.b64encode(fp).decode("ascii"),
            },
        )

    tasks = [(lambda u=unit: attempt(u)) for unit in units]
    outcomes = _run_parallel(tasks, parallelism)
    return _tally(TOKEN_FORWARD, outcomes, seed)


def _junk_image(kind_index: int, rng: random.Random) -> bytes:
    """Non-thermal upload bodies: RGB-like, grayscale-like, random, text-like."""
    if kind_index == 0:
        return b"\x89PNG\r\n\x1a\n" + rng.randbytes(600)
    if kind_index == 1:
        return b"P5\n160 120\n255\n" + rng.randbytes(400)
    if kind_index == 2:
        return rng.randbytes(rng.randint(120, 2000))
    words = ("the", "quick", "thermal", "capture", "of", "a", "browser",
             "window", "is", "not", "an", "image")
    text = " ".join(rng.choice(words) for _ in range(80))
    return text.encode("ascii")


def run_misuse_campaign(
    attack_class: str,
    n_per_kind: int,
    seed: int,
    server_url: str,
    site: WebsiteContext,
    parallelism: int = 8,
) -> AttackReport:
    """Input-misuse classes: wrong encodings, post-signing client tampering,
    and genuine thermal frames of non-human sources."""
    if attack_class not in MISUSE_CLASSES:
        raise ValueError(f"unknown misuse class {attack_class!r}")
    rng = random.Random(f"{seed}:{attack_class}")
    sessions = _Sessions()
    client = _honest_client(rng)
    control_session = sessions.get()

    control = build_submission_body(client, site, SceneKind.human(),
                                    rng.getrandbits(63))
    ok, error = _post_capture(control_session, server_url, control)
    _require_control(ok, f"control rejected with {error}")

    bodies: list[dict] = []
    if attack_class == NON_THERMAL_UPLOAD:
        from .crypto import digest as _digest, sign as _sign
        from .payload import Timestamp as _Timestamp

        for kind_index in range(4):
            for _ in range(n_per_kind):
                payload = (
                    _junk_image(kind_index, rng)
                    + Nonce.generate().value
                    + _Timestamp(int(time.time() * 1000)).to_bytes()
                )
                signature = _sign(_digest(payload), client.signing_key)
                bodies.append({
                    "domain": site.domain,
                    "user_ip": client.user_ip,
                    "site_key": site.site_key,
                    "payload": base64.b64encode(payload).decode("ascii"),
                    "signature": base64.b64encode(signature).decode("ascii"),
                    "public_key": client.public_key_pem,
                })
    elif attack_class == TAMPERED_CLIENT:
        from .frames import decode_frame, encode_frame, ThermalFrame
        import numpy as np

        donor = build_submission_body(client, site, SceneKind.human(),
                                      rng.getrandbits(63))
        ok, error = _post_capture(control_session, server_url, donor)
        _require_control(ok, f"donor submission rejected with {error}")
        donor_trailer = base64.b64decode(donor["payload"])[-TRAILER_LEN:]

        for _ in range(n_per_kind):
            # Re-encoded image: pixel values shifted after signing.
            body = build_submission_body(client, site, SceneKind.human(),
                                         rng.getrandbits(63))
            payload = base64.b64decode(body["payload"])
            frame = decode_frame(payload[:-TRAILER_LEN])
            shifted = ThermalFrame(
                frame.width, frame.height,
                (frame.pixels.astype(np.uint32) + 1).clip(0, 0xFFFF).astype(np.uint16),
            )
            tampered = encode_frame(shifted) + payload[-TRAILER_LEN:]
            body = dict(body)
            body["payload"] = base64.b64encode(tampered).decode("ascii")
            bodies.append(body)
        for index in range(n_per_kind):
            # Metadata tampering: nudge the timestamp inside the window, or
            # splice in the consumed donor trailer wholesale.
            body = build_submission_body(client, site, SceneKind.human(),
                                         rng.getrandbits(63))
            payload = base64.b64decode(body["payload"])
            if index % 2 == 0:
                ts = int.from_bytes(payload[-8:], "big") + 1000
                payload = payload[:-8] + ts.to_bytes(8, "big")
            else:
                payload = payload[:-TRAILER_LEN] + donor_trailer
            body = dict(body)
            body["payload"] = base64.b64encode(payload).decode("ascii")
            bodies.append(body)
    else:  # NON_HUMAN_SCENE
        kinds = (SceneKind.hot_object(), SceneKind.cold_object(),
                 SceneKind.vacuum_robot(), SceneKind.pet())
        for kind in kinds:
            for _ in range(n_per_kind):
                bodies.append(
                    build_submission_body(client, site, kind, rng.getrandbits(63))
                )

    tasks = [
        (lambda b=body: _post_capture(sessions.get(), server_url, b))
        for body in bodies
    ]
    outcomes = _run_parallel(tasks, parallelism)
    return _tally(attack_class, outcomes, seed)


def run_concurrent_nonce_burst(
    k: int,
    trials: int,
    seed: int,
    server_url: str,
    site: WebsiteContext,
) -> list[int]:
    """Fire k byte-identical valid submissions concurrently per trial.

    Returns accepted counts per trial; the atomic nonce check must let at
    most one through. This is the live-race companion to the nonce_reuse
    campaign (which replays an already-consumed nonce).
    """
    rng = random.Random(f"{seed}:nonce_burst")
    sessions = _Sessions()
    client = _honest_client(rng)
    accepted_per_trial: list[int] = []

    def fire(body: dict) -> tuple[bool, str | None]:
        # resolve the per-thread session in the worker, not the submitter
        return _post_capture(sessions.get(), server_url, body)

    with concurrent.futures.ThreadPoolExecutor(max_workers=k) as pool:
        for _ in range(trials):
            body = build_submission_body(client, site, SceneKind.human(),
                                         rng.getrandbits(63))
            futures = [pool.submit(fire, body) for _ in range(k)]
            outcomes = [f.result() for f in futures]
            accepted_per_trial.append(sum(1 for ok, _ in outcomes if ok))
    return accepted_per_trial


_TABLE_HEADER = ("Attack Type", "Attempts", "Accepted", "Rejected", "Success (%)")


def render_report(reports: list[AttackReport], fmt: str = "table") -> str:
    """Render campaign reports as an aligned table or stable JSON."""
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=False)
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    rows = [
        (
            report.attack_class,
            str(report.attempts),
            str(report.accepted),
            str(report.rejected),
            f"{report.success_pct:.1f}",
        )
        for report in reports
    ]
    widths = [
        max(len(_TABLE_HEADER[col]), *(len(row[col]) for row in rows))
        if rows
        else len(_TABLE_HEADER[col])
        for col in range(5)
    ]
    lines = [
        "  ".join(_TABLE_HEADER[col].ljust(widths[col]) for col in range(5)).rstrip()
    ]
    for row in rows:
        lines.append(
            "  ".join(
                row[col].ljust(widths[col]) if col == 0 else row[col].rjust(widths[col])
                for col in range(5)
            ).rstrip()
        )
    return "\n".join(lines)
