"""Shared fixtures: a live loopback server with a controllable clock."""

import secrets
import threading

import pytest
import requests

from thermoguard.httpd import ApiServer
from thermoguard.server import CaptchaServer
from thermoguard.sim import WebsiteContext


class FakeClock:
    """Millisecond clock that only moves when told to."""

    def __init__(self, start_ms: int = 1_700_000_000_000) -> None:
        self._now = start_ms
        self._lock = threading.Lock()

    def __call__(self) -> int:
        with self._lock:
            return self._now

    def advance(self, delta_ms: int) -> int:
        with self._lock:
            self._now += delta_ms
            return self._now


@pytest.fixture
def server_secret() -> bytes:
    return secrets.token_bytes(32)


@pytest.fixture
def core(server_secret) -> CaptchaServer:
    return CaptchaServer(server_secret)


@pytest.fixture
def clocked_core(server_secret):
    clock = FakeClock()
    return CaptchaServer(server_secret, clock=clock), clock


@pytest.fixture
def api(core):
    server = ApiServer(core).start()
    yield server
    server.stop()


@pytest.fixture
def clocked_api(clocked_core):
    core, clock = clocked_core
    server = ApiServer(core).start()
    yield server, clock
    server.stop()


@pytest.fixture
def site(api) -> WebsiteContext:
    context = WebsiteContext.create("example.site")
    context.register(api.url)
    return context


@pytest.fixture
def http() -> requests.Session:
    session = requests.Session()
    yield session
    session.close()
