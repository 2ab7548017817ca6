"""Line-oriented key=value server configuration.

Recognized keys::

    listen_addr=127.0.0.1:8787
    validity_ms=120000
    skew_ms=30000
    storage_path=/var/lib/thermoguard/state.db   # empty/absent -> in-memory
    server_secret_key=<64 hex chars>             # absent -> fresh random key
    detector_core_temp_low=34.0
    detector_core_temp_high=39.0
    detector_min_area_frac=0.01
    detector_aspect_low=1.1
    detector_aspect_high=3.5
    detector_gradient_min=0.5

Blank lines and ``#`` comments are ignored; unknown keys are an error.
The THERMOGUARD_CONFIG environment variable overrides the config path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields as dc_fields

from .detector import DetectorConfig
from .server import DEFAULT_SKEW_MS, DEFAULT_VALIDITY_MS

ENV_CONFIG = "THERMOGUARD_CONFIG"

_DETECTOR_PREFIX = "detector_"


@dataclass(frozen=True)
class ServerConfig:
    listen_addr: str = "127.0.0.1:8787"
    validity_ms: int = DEFAULT_VALIDITY_MS
    skew_ms: int = DEFAULT_SKEW_MS
    storage_path: str | None = None
    server_secret_key: bytes | None = None
    detector: DetectorConfig = DetectorConfig()

    @property
    def host(self) -> str:
        return self.listen_addr.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_addr.rsplit(":", 1)[1])


def parse_config(text: str) -> ServerConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    detector_fields = {f.name: f for f in dc_fields(DetectorConfig)}
    detector_kwargs: dict[str, float] = {}
    kwargs: dict[str, object] = {}
    for key, value in values.items():
        if key.startswith(_DETECTOR_PREFIX):
            name = key[len(_DETECTOR_PREFIX):]
            if name not in detector_fields:
                raise ValueError(f"unknown config key {key!r}")
            detector_kwargs[name] = float(value)
        elif key == "listen_addr":
            kwargs["listen_addr"] = value
        elif key in ("validity_ms", "skew_ms"):
            kwargs[key] = int(value)
        elif key == "storage_path":
            kwargs["storage_path"] = value or None
        elif key == "server_secret_key":
            secret = bytes.fromhex(value)
            if len(secret) != 32:
                raise ValueError("server_secret_key must be 32 bytes of hex")
            kwargs["server_secret_key"] = secret
        else:
            raise ValueError(f"unknown config key {key!r}")
    if detector_kwargs:
        kwargs["detector"] = DetectorConfig(**detector_kwargs)
    return ServerConfig(**kwargs)


def load_config(path: str) -> ServerConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def resolve_config_path(cli_path: str | None) -> str | None:
    """Environment variable wins over the command-line path."""
    return os.environ.get(ENV_CONFIG) or cli_path
