"""Thermal-capture human verification with farm-resistant traceable tokens.

Submodules:
    frames    thermal frame type, THRM codec, synthetic scene generator
    payload   capture payload (frame bytes + nonce + timestamp trailer)
    crypto    digests, RSA signatures, token MAC, sealed token/score codec
    detector  heuristic human-presence scoring
    storage   in-memory and SQLite state stores
    server    the verification pipeline (captures in, tokens out)
    httpd     HTTP JSON transport
    sim       honest client and relying-website simulators
    attacks   adversarial campaigns and reporting
    cli       command-line entry point
"""

from .detector import Detection, DetectorConfig, decide, detect
from .frames import (
    FrameStats,
    SceneKind,
    ThermalFrame,
    decode_frame,
    encode_frame,
    frame_stats,
    generate_scene,
)
from .payload import CapturePayload, Nonce, Timestamp, assemble_capture, parse_capture
from .server import CaptchaServer, CaptureSubmission
from .sim import ClientContext, WebsiteContext, forward_and_verify, solve_captcha

__version__ = "0.1.0"

__all__ = [
    "CaptchaServer",
    "CapturePayload",
    "CaptureSubmission",
    "ClientContext",
    "Detection",
    "DetectorConfig",
    "FrameStats",
    "Nonce",
    "SceneKind",
    "ThermalFrame",
    "Timestamp",
    "WebsiteContext",
    "assemble_capture",
    "decide",
    "decode_frame",
    "detect",
    "encode_frame",
    "forward_and_verify",
    "frame_stats",
    "generate_scene",
    "parse_capture",
    "solve_captcha",
    "__version__",
]
