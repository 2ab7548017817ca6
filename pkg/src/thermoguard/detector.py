"""Heuristic human-presence scoring over thermal frames.

This is the pluggable stand-in for a learned detector: a deterministic
score built from the hottest blob's temperature band, size, shape, and
edge steepness. Anything exposing ``detect(frame, cfg) -> Detection`` can
replace it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .frames import ThermalFrame, ck_to_celsius, hottest_blob

# A capture counts as human only above this confidence (strictly).
DECISION_THRESHOLD = 0.50

# Steepness of the blob-size sigmoid around min_area_frac.
_AREA_SIGMOID_K = 4.0


@dataclass(frozen=True)
class DetectorConfig:
    """Score band thresholds; defaults target the synthetic human signature.

    core_temp_low/high: degC band a human core should occupy.
    min_area_frac: blob area fraction at which the size score crosses 0.5.
    aspect_low/high: acceptable blob height/width band.
    gradient_min: required mean edge steepness in degC per pixel.
    """

    core_temp_low: float = 34.0
    core_temp_high: float = 39.0
    min_area_frac: float = 0.01
    aspect_low: float = 1.1
    aspect_high: float = 3.5
    gradient_min: float = 0.5

    def __post_init__(self) -> None:
        if not self.core_temp_low < self.core_temp_high:
            raise ValueError("core temperature band is empty")
        if not self.aspect_low < self.aspect_high:
            raise ValueError("aspect band is empty")
        if not 0.0 < self.min_area_frac < 1.0:
            raise ValueError("min_area_frac must be in (0, 1)")
        if self.gradient_min <= 0.0:
            raise ValueError("gradient_min must be positive")


DEFAULT_CONFIG = DetectorConfig()


@dataclass(frozen=True)
class Detection:
    """Outcome of presence scoring for one frame."""

    human_present: bool
    confidence: float
    bbox: tuple[int, int, int, int] | None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.human_present != (self.confidence > DECISION_THRESHOLD):
            raise ValueError("human_present inconsistent with confidence")
        if (self.bbox is not None) != (self.confidence > 0.0):
            raise ValueError("bbox must be present exactly when confidence > 0")


def _band_score(celsius: np.ndarray, blob: np.ndarray, cfg: DetectorConfig) -> float:
    temps = celsius[blob]
    in_band = (temps >= cfg.core_temp_low) & (temps <= cfg.core_temp_high)
    return float(in_band.mean())


def _area_score(area: int, total: int, cfg: DetectorConfig) -> float:
    frac = area / total
    x = _AREA_SIGMOID_K * (frac - cfg.min_area_frac) / cfg.min_area_frac
    return 1.0 / (1.0 + math.exp(-min(max(x, -50.0), 50.0)))


def _aspect_score(aspect: float, cfg: DetectorConfig) -> float:
    if cfg.aspect_low <= aspect <= cfg.aspect_high:
        return 1.0
    if aspect < cfg.aspect_low:
        return max(0.0, 1.0 - (cfg.aspect_low - aspect) / cfg.aspect_low)
    return max(0.0, 1.0 - (aspect - cfg.aspect_high) / cfg.aspect_high)


def _gradient_score(celsius: np.ndarray, blob: np.ndarray, cfg: DetectorConfig) -> float:
    gy, gx = np.gradient(celsius)
    magnitude = np.hypot(gx, gy)
    boundary = blob & ~ndimage.binary_erosion(blob)
    if not boundary.any():
        boundary = blob
    steepness = float(magnitude[boundary].mean())
    return min(1.0, steepness / cfg.gradient_min)


def detect(frame: ThermalFrame, cfg: DetectorConfig = DEFAULT_CONFIG) -> Detection:
    """Score a frame for live human presence.

    Confidence is the product of four sub-scores (temperature band, blob
    size, aspect ratio, edge steepness) over the hottest blob; zero when no
    blob clears the segmentation threshold. Deterministic for a given
    frame and config.
    """
    blob, bbox, area = hottest_blob(frame.pixels)
    if blob is None:
        return Detection(False, 0.0, None)
    celsius = ck_to_celsius(frame.pixels.astype(np.float64))
    confidence = (
        _band_score(celsius, blob, cfg)
        * _area_score(area, frame.width * frame.height, cfg)
        * _aspect_score(bbox[3] / bbox[2], cfg)
        * _gradient_score(celsius, blob, cfg)
    )
    confidence = min(1.0, max(0.0, confidence))
    return Detection(
        human_present=confidence > DECISION_THRESHOLD,
        confidence=confidence,
        bbox=bbox if confidence > 0.0 else None,
    )


def decide(detection: Detection) -> bool:
    """Accept iff confidence strictly exceeds the 0.50 threshold."""
    return detection.confidence > DECISION_THRESHOLD
