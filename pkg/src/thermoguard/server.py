"""Verification service core: capture validation, token issuance, token redemption.

`handle_capture` runs a fixed pipeline — site lookup, format validation,
freshness window, atomic nonce check, signature verification, presence
scoring — and the first failing step aborts with its typed rejection. The
nonce is burned from the moment it passes the uniqueness check, even if a
later step rejects, so probing signatures cannot preserve freshness.

`handle_verify` redeems a sealed token exactly once, and only when the
presented (uid, device fingerprint) context matches both the token and the
stored session record.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import time
from dataclasses import dataclass

from .crypto import (
    SignatureBundle,
    TokenError,
    TokenFields,
    TraceableToken,
    digest,
    open_token,
    seal_score,
    seal_token,
)
from .detector import DEFAULT_CONFIG, DetectorConfig, decide, detect
from .frames import decode_frame
from .payload import PayloadError, Timestamp, parse_capture
from .storage import MemoryStore, SessionRecord, SiteRegistration

DEFAULT_VALIDITY_MS = 120_000
DEFAULT_SKEW_MS = 30_000

# Session and nonce state is retained for twice the validity window.
PURGE_FACTOR = 2


class PipelineRejection(Exception):
    """A typed rejection; `name` is the bit-exact wire error string."""

    http_status = 400

    @property
    def name(self) -> str:
        return type(self).__name__


class UnknownSiteKey(PipelineRejection):
    http_status = 404


class InvalidFormat(PipelineRejection):
    http_status = 400


class StaleTimestamp(PipelineRejection):
    http_status = 403


class NonceReplayed(PipelineRejection):
    http_status = 409


class BadSignature(PipelineRejection):
    http_status = 401


class NotHuman(PipelineRejection):
    http_status = 403


class SharedKeyMismatch(PipelineRejection):
    http_status = 401


class TokenAuthFailure(PipelineRejection):
    http_status = 401


class TokenExpired(PipelineRejection):
    http_status = 403


class UnknownSession(PipelineRejection):
    http_status = 404


class TokenConsumed(PipelineRejection):
    http_status = 409


class ContextMismatch(PipelineRejection):
    http_status = 403


class DuplicateSiteKey(PipelineRejection):
    http_status = 409


@dataclass(frozen=True)
class CaptureSubmission:
    """The client's capture request: payload, signature, and identity fields."""

    domain: str
    user_ip: str
    site_key: str
    payload: bytes
    signature: bytes
    public_key: str

    def __post_init__(self) -> None:
        for label in ("domain", "user_ip", "site_key", "payload", "signature",
                      "public_key"):
            if not getattr(self, label):
                raise ValueError(f"submission field {label} is empty")


@dataclass
class ServerStats:
    sessions_created: int = 0
    tokens_issued: int = 0
    sessions_consumed: int = 0


def derive_uid(user_ip: str, public_key_pem: str) -> str:
    """User identifier: IP plus the first 8 hex chars of the key digest."""
    key_hash = hashlib.sha256(public_key_pem.encode("utf-8")).hexdigest()
    return f"{user_ip}:{key_hash[:8]}"


def derive_device_fp(user_ip: str, public_key_pem: str, site_key: str) -> bytes:
    """Fingerprint binding network origin, client key, and relying site."""
    material = (
        user_ip.encode("utf-8")
        + public_key_pem.encode("utf-8")
        + site_key.encode("utf-8")
    )
    return hashlib.sha256(material).digest()


class CaptchaServer:
    """The verification service, independent of any transport.

    All state mutations go through the store's linearizable operations;
    handlers are safe to call from any number of threads.
    """

    def __init__(
        self,
        server_secret_key: bytes,
        store=None,
        detector_config: DetectorConfig = DEFAULT_CONFIG,
        validity_ms: int = DEFAULT_VALIDITY_MS,
        skew_ms: int = DEFAULT_SKEW_MS,
        clock=None,
    ) -> None:
        if len(server_secret_key) != 32:
            raise ValueError("server secret key must be 32 bytes")
        self._secret = server_secret_key
        self._store = store if store is not None else MemoryStore()
        self._detector_config = detector_config
        self.validity_ms = validity_ms
        self.skew_ms = skew_ms
        self._clock = clock if clock is not None else (lambda: int(time.time() * 1000))
        self._stats = ServerStats()
        self._stats_lock = threading.Lock()

    @property
    def store(self):
        return self._store

    def now_ms(self) -> int:
        return self._clock()

    def stats(self) -> ServerStats:
        with self._stats_lock:
            return ServerStats(
                self._stats.sessions_created,
                self._stats.tokens_issued,
                self._stats.sessions_consumed,
            )

    def register_site(self, domain: str, site_key: str, shared_key: bytes) -> None:
        """Provision a relying website; idempotent for identical material."""
        if len(shared_key) != 32:
            raise ValueError("shared key must be 32 bytes")
        if not site_key or not domain:
            raise ValueError("domain and site_key must be non-empty")
        ok = self._store.register_site(SiteRegistration(site_key, shared_key, domain))
        if not ok:
            raise DuplicateSiteKey(f"site_key {site_key!r} already registered")

    def handle_capture(
        self, submission: CaptureSubmission, now: int | None = None
    ) -> TraceableToken:
        """Validate a signed capture and issue a traceable token.

        Pipeline order is fixed; the first failure wins. Raises a
        PipelineRejection subclass on any rejection.
        """
        now = self.now_ms() if now is None else now

        site = self._store.get_site(submission.site_key)
        if site is None:
            raise UnknownSiteKey(f"unknown site_key {submission.site_key!r}")

        try:
            capture = parse_capture(submission.payload)
        except PayloadError as exc:
            raise InvalidFormat(str(exc)) from exc

        age = abs(now - capture.timestamp.value)
        if age > self.validity_ms + self.skew_ms:
            raise StaleTimestamp(f"timestamp off by {age} ms")

        if not self._store.nonce_check_and_insert(capture.nonce.value, now):
            raise NonceReplayed("nonce already consumed")

        bundle = SignatureBundle(submission.signature, submission.public_key)
        if not bundle.verifies(digest(submission.payload)):
            raise BadSignature("signature does not verify")

        detection = detect(decode_frame(capture.frame_bytes), self._detector_config)
        if not decide(detection):
            raise NotHuman(f"confidence {detection.confidence:.4f} at or below 0.50")

        session_id = secrets.token_bytes(16)
        uid = derive_uid(submission.user_ip, submission.public_key)
        device_fp = derive_device_fp(
            submission.user_ip, submission.public_key, submission.site_key
        )
        exp = now + self.validity_ms
        self._store.add_session(
            SessionRecord(
                session_id=session_id,
                uid=uid,
                device_fp=device_fp,
                risk_score=detection.confidence,
                nonce=capture.nonce.value,
                issued_at=now,
                exp=exp,
            )
        )
        token = seal_token(
            TokenFields(uid, session_id, device_fp, capture.nonce, Timestamp(exp)),
            self._secret,
            site.shared_key,
            now_ms=now,
        )
        with self._stats_lock:
            self._stats.sessions_created += 1
            self._stats.tokens_issued += 1
        return token

    def handle_verify(
        self,
        token: TraceableToken,
        site_key: str,
        shared_key: bytes,
        uid: str,
        device_fp: bytes,
        now: int | None = None,
    ) -> bytes:
        """Redeem a token in a presented context; returns the sealed risk score.

        Single use: the backing session is consumed atomically, so a second
        redemption fails even under concurrent attempts.
        """
        now = self.now_ms() if now is None else now

        site = self._store.get_site(site_key)
        if site is None:
            raise UnknownSiteKey(f"unknown site_key {site_key!r}")
        if not hmac.compare_digest(shared_key, site.shared_key):
            raise SharedKeyMismatch("shared key does not match registration")

        try:
            fields = open_token(token, self._secret, site.shared_key)
        except TokenError as exc:
            raise TokenAuthFailure(str(exc)) from exc

        if fields.exp.value <= now:
            raise TokenExpired(f"expired {now - fields.exp.value} ms ago")

        record = self._store.get_session(fields.session_id)
        if record is None:
            raise UnknownSession("no session for token")
        if record.consumed:
            raise TokenConsumed("session already consumed")

        token_context = (fields.uid, fields.device_fp, fields.nonce.value)
        if token_context != (record.uid, record.device_fp, record.nonce):
            raise ContextMismatch("token does not match session record")
        if (uid, device_fp) != (fields.uid, fields.device_fp):
            raise ContextMismatch("presented context does not match token")

        if not self._store.consume_session(fields.session_id):
            raise TokenConsumed("session already consumed")
        with self._stats_lock:
            self._stats.sessions_consumed += 1
        return seal_score(record.risk_score, site.shared_key)

    def purge_expired(self, now: int | None = None) -> int:
        """Drop sessions and nonces older than twice the validity window."""
        now = self.now_ms() if now is None else now
        return self._store.purge_older_than(now - PURGE_FACTOR * self.validity_ms)
