"""Capture payload assembly/parsing tests."""

import numpy as np
import pytest

from thermoguard.frames import SceneKind, ThermalFrame, encode_frame, generate_scene
from thermoguard.payload import (
    InvalidFrame,
    Nonce,
    Timestamp,
    TooShort,
    assemble_capture,
    parse_capture,
)

PNG_BYTES = b"\x89PNG\r\n\x1a\n" + bytes(200)


@pytest.fixture
def frame_bytes() -> bytes:
    return encode_frame(generate_scene(SceneKind.human(), 1))


class TestNonce:
    def test_length_enforced(self):
        with pytest.raises(ValueError):
            Nonce(b"short")

    def test_generate_is_64_random_bytes(self):
        a, b = Nonce.generate(), Nonce.generate()
        assert len(a.value) == 64
        assert a != b

    def test_no_collisions_in_a_million(self):
        # At 64 random bytes a single duplicate would be a generator bug,
        # not a statistical fluke.
        seen = set()
        for _ in range(1_000_000):
            value = Nonce.generate().value
            assert value not in seen
            seen.add(value)


class TestTimestamp:
    def test_round_trip(self):
        ts = Timestamp(1_700_000_000_123)
        assert Timestamp.from_bytes(ts.to_bytes()) == ts

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            Timestamp(-1)
        with pytest.raises(ValueError):
            Timestamp(2**64)


class TestAssemble:
    def test_overhead_is_exactly_72_bytes(self, frame_bytes):
        payload = assemble_capture(frame_bytes, Nonce.generate(), Timestamp.now())
        assert len(payload) - len(frame_bytes) == 72
        assert len(payload) == 38481  # 160x120 default frame

    def test_overhead_72_over_1000_random_frames(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            width = int(rng.integers(8, 48))
            height = int(rng.integers(8, 48))
            pixels = rng.integers(0, 0x10000, size=width * height, dtype=np.uint32)
            fb = encode_frame(ThermalFrame(width, height, pixels.astype(np.uint16)))
            payload = assemble_capture(fb, Nonce.generate(), Timestamp.now())
            assert len(payload) - len(fb) == 72

    def test_invalid_frame_rejected(self):
        with pytest.raises(InvalidFrame):
            assemble_capture(PNG_BYTES, Nonce.generate(), Timestamp.now())

    def test_nonce_occupies_fixed_bytes(self, frame_bytes):
        ts = Timestamp(1_700_000_000_000)
        n1, n2 = Nonce.generate(), Nonce.generate()
        p1 = assemble_capture(frame_bytes, n1, ts)
        p2 = assemble_capture(frame_bytes, n2, ts)
        differing = [i for i, (a, b) in enumerate(zip(p1, p2)) if a != b]
        assert set(differing) <= set(range(len(frame_bytes), len(frame_bytes) + 64))
        assert p1[: len(frame_bytes)] == p2[: len(frame_bytes)]
        assert p1[-8:] == p2[-8:]


class TestParse:
    def test_round_trip(self, frame_bytes):
        nonce, ts = Nonce.generate(), Timestamp(1_699_999_999_999)
        capture = parse_capture(assemble_capture(frame_bytes, nonce, ts))
        assert capture.frame_bytes == frame_bytes
        assert capture.nonce == nonce
        assert capture.timestamp == ts

    def test_80_bytes_is_too_short(self):
        with pytest.raises(TooShort):
            parse_capture(b"\x00" * 80)

    def test_81_bytes_is_not_too_short(self):
        # Past the minimum it fails frame validation instead.
        with pytest.raises(InvalidFrame):
            parse_capture(b"\x00" * 81)

    def test_rgb_photo_with_trailer_is_invalid_frame(self):
        with pytest.raises(InvalidFrame):
            parse_capture(PNG_BYTES + bytes(72))

    def test_parse_left_inverse_of_assemble(self, frame_bytes):
        rng = np.random.default_rng(11)
        for _ in range(50):
            nonce = Nonce(rng.bytes(64))
            ts = Timestamp(int(rng.integers(0, 2**63)))
            payload = assemble_capture(frame_bytes, nonce, ts)
            capture = parse_capture(payload)
            assert (capture.frame_bytes, capture.nonce, capture.timestamp) == (
                frame_bytes, nonce, ts,
            )
            assert capture.to_bytes() == payload
