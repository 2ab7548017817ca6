"""Capture payload assembly: encoded frame plus a 72-byte freshness trailer.

The client appends a 64-byte random nonce and an 8-byte big-endian
millisecond timestamp to the encoded frame; the digest of the whole
sequence is what gets signed. The trailer is a plain concatenation so the
frame codec stays independent of the metadata.
"""

from __future__ import annotations

import secrets
import time
from dataclasses import dataclass

from .frames import FrameError, decode_frame

NONCE_LEN = 64
TIMESTAMP_LEN = 8
TRAILER_LEN = NONCE_LEN + TIMESTAMP_LEN

# Smallest parseable payload: a 9-byte frame header plus the trailer.
MIN_PAYLOAD_LEN = 9 + TRAILER_LEN

_U64_MAX = 2**64 - 1


class PayloadError(Exception):
    """Base class for capture payload errors."""


class TooShort(PayloadError):
    """Payload shorter than any possible frame plus trailer."""


class InvalidFrame(PayloadError):
    """Embedded frame bytes failed codec validation."""


@dataclass(frozen=True)
class Nonce:
    """64 bytes of CSPRNG output; one per capture, never reused."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes, got {len(self.value)}")

    @classmethod
    def generate(cls) -> "Nonce":
        return cls(secrets.token_bytes(NONCE_LEN))


@dataclass(frozen=True)
class Timestamp:
    """Unsigned 64-bit milliseconds since the Unix epoch (UTC)."""

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= _U64_MAX:
            raise ValueError(f"timestamp {self.value} outside u64 range")

    @classmethod
    def now(cls) -> "Timestamp":
        return cls(int(time.time() * 1000))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(TIMESTAMP_LEN, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Timestamp":
        if len(data) != TIMESTAMP_LEN:
            raise ValueError("timestamp must be 8 bytes")
        return cls(int.from_bytes(data, "big"))


@dataclass(frozen=True)
class CapturePayload:
    """Parsed binary-with-metadata object."""

    frame_bytes: bytes
    nonce: Nonce
    timestamp: Timestamp

    def to_bytes(self) -> bytes:
        return self.frame_bytes + self.nonce.value + self.timestamp.to_bytes()


def assemble_capture(frame_bytes: bytes, nonce: Nonce, ts: Timestamp) -> bytes:
    """Concatenate frame bytes with the nonce and timestamp trailer.

    Always exactly 72 bytes longer than the frame encoding.
    """
    try:
        decode_frame(frame_bytes)
    except FrameError as exc:
        raise InvalidFrame(str(exc)) from exc
    return frame_bytes + nonce.value + ts.to_bytes()


def parse_capture(data: bytes) -> CapturePayload:
    """Split and validate an assembled payload.

    Timestamp freshness is server policy, not checked here.
    """
    if len(data) < MIN_PAYLOAD_LEN:
        raise TooShort(f"payload of {len(data)} bytes below minimum {MIN_PAYLOAD_LEN}")
    frame_bytes = data[:-TRAILER_LEN]
    trailer = data[-TRAILER_LEN:]
    try:
        decode_frame(frame_bytes)
    except FrameError as exc:
        raise InvalidFrame(str(exc)) from exc
    return CapturePayload(
        frame_bytes=frame_bytes,
        nonce=Nonce(trailer[:NONCE_LEN]),
        timestamp=Timestamp.from_bytes(trailer[NONCE_LEN:]),
    )
