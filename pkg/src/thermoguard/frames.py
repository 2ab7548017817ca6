"""Thermal frame representation, bit-exact codec, and synthetic scene generator.

Frames hold absolute temperatures in centi-kelvin (cK) on an unsigned 16-bit
grid. The `.thermo` wire format is::

    "THRM" | version 0x01 | width u16 BE | height u16 BE | pixels u16 BE each

The scene generator stands in for a thermal camera: it renders seeded,
deterministic scenes (a human head-over-torso signature, household heat
sources, or empty ambient background) that downstream presence scoring
consumes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MAGIC = b"THRM"
VERSION = 1
HEADER_LEN = 9

MIN_DIM = 8
MAX_DIM = 1024
DEFAULT_WIDTH = 160
DEFAULT_HEIGHT = 120

# Generator output stays inside this band; the codec accepts the full u16 range.
GEN_MIN_CK = 20000
GEN_MAX_CK = 45000

# Blob segmentation: pixels at least this far above the ambient estimate.
BLOB_DELTA_CK = 500  # 5 degC

_U64_MASK = 0xFFFFFFFFFFFFFFFF


class FrameError(Exception):
    """Base class for thermal frame codec and generator errors."""


class BadMagic(FrameError):
    """Input does not start with the THRM magic."""


class BadVersion(FrameError):
    """Unsupported format version byte."""


class LengthMismatch(FrameError):
    """Declared dimensions do not match the actual byte length."""


class DimensionOutOfRange(FrameError):
    """Width or height outside the supported 8..1024 range."""


class ParameterOutOfRange(FrameError):
    """Scene parameters outside the supported capture geometry."""


def celsius_to_ck(deg_c: float) -> int:
    """Convert degrees Celsius to integer centi-kelvin."""
    return int(round((deg_c + 273.15) * 100.0))


def ck_to_celsius(ck: float) -> float:
    """Convert centi-kelvin to degrees Celsius."""
    return ck / 100.0 - 273.15


@dataclass(frozen=True, eq=False)
class ThermalFrame:
    """A rectangular grid of absolute temperatures in centi-kelvin.

    ``pixels`` is stored as a read-only ``(height, width)`` uint16 array;
    the constructor accepts any row-major array-like of matching size.
    """

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        for dim in (self.width, self.height):
            if not (MIN_DIM <= dim <= MAX_DIM):
                raise DimensionOutOfRange(
                    f"dimension {dim} outside [{MIN_DIM}, {MAX_DIM}]"
                )
        arr = np.asarray(self.pixels)
        if arr.size != self.width * self.height:
            raise LengthMismatch(
                f"expected {self.width * self.height} pixels, got {arr.size}"
            )
        if arr.dtype != np.uint16:
            if np.any(arr < 0) or np.any(arr > 0xFFFF):
                raise ValueError("pixel values must fit in unsigned 16 bits")
            arr = arr.astype(np.uint16)
        arr = arr.reshape(self.height, self.width).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ThermalFrame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class FrameStats:
    """Summary statistics feeding the presence detector."""

    min_ck: int
    max_ck: int
    mean_ck: float
    hottest_blob_area: int
    hottest_blob_aspect: float


HUMAN = "human"
HOT_OBJECT = "hot_object"
COLD_OBJECT = "cold_object"
VACUUM_ROBOT = "vacuum_robot"
PET = "pet"
AMBIENT_EMPTY = "ambient_empty"

SCENE_KINDS = (HUMAN, HOT_OBJECT, COLD_OBJECT, VACUUM_ROBOT, PET, AMBIENT_EMPTY)
NON_HUMAN_KINDS = (HOT_OBJECT, COLD_OBJECT, VACUUM_ROBOT, PET)

# Tested capture geometry (camera placement envelope).
ANGLE_RANGE = (50.0, 130.0)
TILT_RANGE = (80.0, 100.0)
DISTANCE_RANGE = (3.0, 6.0)

# Per-kind stream tags so one seed yields unrelated noise across kinds.
_KIND_TAG = {kind: i + 1 for i, kind in enumerate(SCENE_KINDS)}


@dataclass(frozen=True)
class SceneKind:
    """A scene variant plus capture geometry (geometry applies to humans only)."""

    name: str
    angle_deg: float = 90.0
    distance_ft: float = 3.0
    tilt_deg: float = 90.0

    def __post_init__(self) -> None:
        if self.name not in SCENE_KINDS:
            raise ParameterOutOfRange(f"unknown scene kind {self.name!r}")
        if self.name == HUMAN:
            checks = (
                ("angle_deg", self.angle_deg, ANGLE_RANGE),
                ("distance_ft", self.distance_ft, DISTANCE_RANGE),
                ("tilt_deg", self.tilt_deg, TILT_RANGE),
            )
            for label, value, (lo, hi) in checks:
                if not (lo <= value <= hi):
                    raise ParameterOutOfRange(
                        f"{label}={value} outside [{lo}, {hi}]"
                    )

    @classmethod
    def human(
        cls,
        angle_deg: float = 90.0,
        distance_ft: float = 3.0,
        tilt_deg: float = 90.0,
    ) -> "SceneKind":
        return cls(HUMAN, angle_deg, distance_ft, tilt_deg)

    @classmethod
    def hot_object(cls) -> "SceneKind":
        return cls(HOT_OBJECT)

    @classmethod
    def cold_object(cls) -> "SceneKind":
        return cls(COLD_OBJECT)

    @classmethod
    def vacuum_robot(cls) -> "SceneKind":
        return cls(VACUUM_ROBOT)

    @classmethod
    def pet(cls) -> "SceneKind":
        return cls(PET)

    @classmethod
    def ambient_empty(cls) -> "SceneKind":
        return cls(AMBIENT_EMPTY)


def encode_frame(frame: ThermalFrame) -> bytes:
    """Serialize a frame to the THRM wire format (9 + 2*w*h bytes)."""
    header = MAGIC + bytes([VERSION]) + struct.pack(">HH", frame.width, frame.height)
    return header + frame.pixels.astype(">u2").tobytes()


def decode_frame(data: bytes) -> ThermalFrame:
    """Parse THRM bytes back into a frame, validating strictly.

    Never raises anything other than a FrameError subclass, whatever the
    input; uploads of non-thermal content fail here.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise BadMagic("input is not a byte sequence")
    data = bytes(data)
    if data[:4] != MAGIC:
        raise BadMagic("missing THRM magic")
    if len(data) < 5:
        raise LengthMismatch("truncated header")
    if data[4] != VERSION:
        raise BadVersion(f"unsupported version {data[4]}")
    if len(data) < HEADER_LEN:
        raise LengthMismatch("truncated header")
    width, height = struct.unpack(">HH", data[5:9])
    for dim in (width, height):
        if not (MIN_DIM <= dim <= MAX_DIM):
            raise DimensionOutOfRange(f"dimension {dim} outside [{MIN_DIM}, {MAX_DIM}]")
    expected = HEADER_LEN + 2 * width * height
    if len(data) != expected:
        raise LengthMismatch(f"expected {expected} bytes, got {len(data)}")
    pixels = np.frombuffer(data, dtype=">u2", offset=HEADER_LEN).astype(np.uint16)
    return ThermalFrame(width, height, pixels)


def _ellipse_delta(
    shape: tuple[int, int],
    center: tuple[float, float],
    semi_axes: tuple[float, float],
    rise_c: float,
    shell_px: float,
) -> np.ndarray:
    """Temperature rise (degC) of one elliptical blob over ambient.

    The profile is a logistic shoulder: flat core inside the ellipse,
    falling to ambient across a shell of roughly ``shell_px`` pixels. The
    shell width is fixed in pixels, so small (distant) blobs spend a larger
    share of their area in the falloff region, which is what erodes
    presence confidence with distance.
    """
    h, w = shape
    cx, cy = center
    a, b = semi_axes
    yy, xx = np.mgrid[0:h, 0:w]
    rho = np.sqrt(((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2)
    sharpness = math.sqrt(a * b) / shell_px
    profile = 1.0 / (1.0 + np.exp(np.clip((rho - 1.0) * sharpness, -50.0, 50.0)))
    center_value = 1.0 / (1.0 + math.exp(-min(sharpness, 50.0)))
    return rise_c * profile / center_value


def _rect_delta(
    shape: tuple[int, int],
    center: tuple[float, float],
    half_extent: tuple[float, float],
    rise_c: float,
    shell_px: float,
) -> np.ndarray:
    """Temperature rise of a soft-edged rectangle (appliance-style source)."""
    h, w = shape
    cx, cy = center
    hx, hy = half_extent
    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.maximum(np.abs(xx - cx) - hx, np.abs(yy - cy) - hy)
    profile = 1.0 / (1.0 + np.exp(np.clip(dist / shell_px * 4.0, -50.0, 50.0)))
    center_value = 1.0 / (1.0 + math.exp(max(-min(hx, hy) / shell_px * 4.0, -50.0)))
    return rise_c * profile / center_value


def generate_scene(
    kind: SceneKind,
    seed: int,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
) -> ThermalFrame:
    """Render a deterministic synthetic thermal capture.

    Identical ``(kind, seed)`` pairs produce bit-identical frames. Random
    draws happen in a fixed order independent of the geometry parameters,
    so sweeping distance or angle at a fixed seed moves only the blob
    geometry, not the ambient field or body temperatures.
    """
    if not isinstance(kind, SceneKind):
        raise ParameterOutOfRange("kind must be a SceneKind")
    rng = np.random.default_rng([_KIND_TAG[kind.name], seed & _U64_MASK])
    shape = (height, width)
    unit = min(width, height) / 120.0

    ambient_c = rng.uniform(20.5, 23.5)
    noise = rng.uniform(-0.5, 0.5, size=shape)
    field = ambient_c + noise

    # Fraction of the blob profile at each pixel; used to damp sensor noise
    # inside hot cores so peak temperatures stay within their stated bands.
    profile = np.zeros(shape)

    def add_blob(delta: np.ndarray, rise_c: float) -> None:
        nonlocal field, profile
        field = np.maximum(field, ambient_c + noise * 0.2 + delta)
        if rise_c > 0:
            profile = np.maximum(profile, delta / rise_c)

    if kind.name == HUMAN:
        head_core = rng.uniform(36.6, 37.4)
        torso_core = rng.uniform(35.2, 36.0)
        cx = width / 2.0 + rng.uniform(-6.0, 6.0) * unit
        head_cy = height * 0.30 + rng.uniform(-4.0, 4.0) * unit

        scale = 3.0 / kind.distance_ft
        foreshorten = math.cos(math.radians(abs(kind.angle_deg - 90.0)))
        tilt = math.cos(math.radians(abs(kind.tilt_deg - 90.0)))
        # Oblique views smear edges as well as narrowing the silhouette.
        shell = 1.6 * unit * (1.0 + 0.6 * (1.0 - foreshorten))

        head_a = 9.0 * scale * foreshorten * unit
        head_b = 12.0 * scale * tilt * unit
        torso_a = 19.0 * scale * foreshorten * unit
        torso_b = 26.0 * scale * tilt * unit
        torso_cy = head_cy + head_b + 0.80 * torso_b

        add_blob(
            _ellipse_delta(shape, (cx, torso_cy), (torso_a, torso_b),
                           torso_core - ambient_c, shell),
            torso_core - ambient_c,
        )
        add_blob(
            _ellipse_delta(shape, (cx, head_cy), (head_a, head_b),
                           head_core - ambient_c, shell),
            head_core - ambient_c,
        )
    elif kind.name == HOT_OBJECT:
        core = rng.uniform(60.0, 80.0)
        radius = rng.uniform(6.0, 10.0) * unit
        cx = rng.uniform(0.25, 0.75) * width
        cy = rng.uniform(0.30, 0.70) * height
        add_blob(
            _ellipse_delta(shape, (cx, cy), (radius, radius),
                           core - ambient_c, 1.8 * unit),
            core - ambient_c,
        )
    elif kind.name == COLD_OBJECT:
        core = rng.uniform(0.0, 10.0)
        radius = rng.uniform(7.0, 12.0) * unit
        cx = rng.uniform(0.25, 0.75) * width
        cy = rng.uniform(0.30, 0.70) * height
        dip = _ellipse_delta(shape, (cx, cy), (radius, radius),
                             ambient_c - core, 2.0 * unit)
        field = np.minimum(field, ambient_c + noise * 0.2 - dip)
    elif kind.name == VACUUM_ROBOT:
        core = rng.uniform(29.5, 31.5)
        half_w = rng.uniform(14.0, 20.0) * unit
        half_h = rng.uniform(4.0, 6.0) * unit
        cx = rng.uniform(0.30, 0.70) * width
        cy = height - half_h - rng.uniform(4.0, 10.0) * unit
        add_blob(
            _rect_delta(shape, (cx, cy), (half_w, half_h),
                        core - ambient_c, 1.6 * unit),
            core - ambient_c,
        )
    elif kind.name == PET:
        core = rng.uniform(33.5, 36.5)
        body_a = rng.uniform(10.0, 14.0) * unit
        body_b = rng.uniform(5.5, 7.5) * unit
        cx = rng.uniform(0.30, 0.70) * width
        cy = rng.uniform(0.55, 0.80) * height
        add_blob(
            _ellipse_delta(shape, (cx, cy), (body_a, body_b),
                           core - ambient_c, 2.2 * unit),
            core - ambient_c,
        )
    # AMBIENT_EMPTY: background only.

    ck = np.clip(np.round((field + 273.15) * 100.0), GEN_MIN_CK, GEN_MAX_CK)
    return ThermalFrame(width, height, ck.astype(np.uint16))


def hottest_blob(pixels: np.ndarray) -> tuple[np.ndarray | None, tuple[int, int, int, int] | None, int]:
    """Largest 4-connected component above ambient + 5 degC.

    Ambient is estimated as the median pixel temperature. Returns
    ``(mask, bbox, area)`` with bbox as ``(x, y, w, h)``; ``(None, None, 0)``
    when nothing clears the threshold.
    """
    threshold = float(np.median(pixels)) + BLOB_DELTA_CK
    mask = pixels >= threshold
    if not mask.any():
        return None, None, 0
    labels, count = ndimage.label(mask)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    best = int(np.argmax(sizes))
    blob = labels == best
    rows = np.flatnonzero(blob.any(axis=1))
    cols = np.flatnonzero(blob.any(axis=0))
    bbox = (
        int(cols[0]),
        int(rows[0]),
        int(cols[-1] - cols[0] + 1),
        int(rows[-1] - rows[0] + 1),
    )
    return blob, bbox, int(sizes[best])


def frame_stats(frame: ThermalFrame) -> FrameStats:
    """Exact min/max/mean plus hottest-blob geometry."""
    pixels = frame.pixels
    blob, bbox, area = hottest_blob(pixels)
    if bbox is None:
        aspect = 0.0
    else:
        aspect = bbox[3] / bbox[2]
    return FrameStats(
        min_ck=int(pixels.min()),
        max_ck=int(pixels.max()),
        mean_ck=float(pixels.mean()),
        hottest_blob_area=area,
        hottest_blob_aspect=aspect,
    )
