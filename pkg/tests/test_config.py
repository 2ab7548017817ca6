"""Config file parsing and environment override."""

import pytest

from thermoguard.config import (
    ENV_CONFIG,
    ServerConfig,
    load_config,
    parse_config,
    resolve_config_path,
)

FULL = """
# thermoguard server configuration
listen_addr=0.0.0.0:9000
validity_ms=60000
skew_ms=15000
storage_path=/tmp/state.db
server_secret_key=00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff

detector_core_temp_low=33.5
detector_core_temp_high=38.5
detector_min_area_frac=0.02
detector_aspect_low=1.2
detector_aspect_high=3.0
detector_gradient_min=0.4
"""


class TestParse:
    def test_full_file(self):
        config = parse_config(FULL)
        assert config.listen_addr == "0.0.0.0:9000"
        assert (config.host, config.port) == ("0.0.0.0", 9000)
        assert config.validity_ms == 60_000
        assert config.skew_ms == 15_000
        assert config.storage_path == "/tmp/state.db"
        assert config.server_secret_key == bytes.fromhex(
            "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff"
        )
        assert config.detector.core_temp_low == 33.5
        assert config.detector.min_area_frac == 0.02
        assert config.detector.gradient_min == 0.4

    def test_defaults(self):
        config = parse_config("")
        assert config == ServerConfig()
        assert config.validity_ms == 120_000
        assert config.skew_ms == 30_000
        assert config.storage_path is None

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            parse_config("nonsense_key=1")
        with pytest.raises(ValueError):
            parse_config("detector_nonsense=1")

    def test_bad_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config("listen_addr 127.0.0.1:1")

    def test_bad_secret_length(self):
        with pytest.raises(ValueError):
            parse_config("server_secret_key=00ff")

    def test_empty_storage_path_means_memory(self):
        assert parse_config("storage_path=").storage_path is None


class TestLoadAndEnv:
    def test_load_from_file(self, tmp_path):
        path = tmp_path / "tg.conf"
        path.write_text("validity_ms=90000\n")
        assert load_config(str(path)).validity_ms == 90_000

    def test_env_overrides_cli_path(self, monkeypatch):
        monkeypatch.setenv(ENV_CONFIG, "/env/path.conf")
        assert resolve_config_path("/cli/path.conf") == "/env/path.conf"

    def test_cli_path_used_without_env(self, monkeypatch):
        monkeypatch.delenv(ENV_CONFIG, raising=False)
        assert resolve_config_path("/cli/path.conf") == "/cli/path.conf"
        assert resolve_config_path(None) is None
