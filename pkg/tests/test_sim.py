"""Honest client and website simulator behavior over the live API."""

import base64

import pytest

from thermoguard import crypto
from thermoguard.frames import SceneKind
from thermoguard.sim import (
    ClientContext,
    SealOpenFailure,
    ServerRejectedError,
    ServerUnreachable,
    WebsiteContext,
    forward_and_verify,
    solve_captcha,
)

KEYPAIR = crypto.gen_keypair(seed=808)


def make_client(ip="203.0.113.50", offset=0) -> ClientContext:
    return ClientContext.create(ip, clock_offset_ms=offset, keypair=KEYPAIR)


class TestSolve:
    def test_human_scene_yields_token(self, api, site, http):
        client = make_client()
        token = solve_captcha(client, site, SceneKind.human(), api.url, seed=1,
                              session=http)
        assert len(token.ciphertext) > 100
        assert client.last_solve_ms is not None and client.last_solve_ms > 0

    def test_hot_object_propagates_not_human(self, api, site, http):
        with pytest.raises(ServerRejectedError) as err:
            solve_captcha(make_client(), site, SceneKind.hot_object(), api.url,
                          seed=2, session=http)
        assert err.value.error == "NotHuman"

    def test_ten_minute_slow_clock_is_stale(self, api, site, http):
        client = make_client(offset=-600_000)
        with pytest.raises(ServerRejectedError) as err:
            solve_captcha(client, site, SceneKind.human(), api.url, seed=3,
                          session=http)
        assert err.value.error == "StaleTimestamp"

    def test_unreachable_server(self, site):
        with pytest.raises(ServerUnreachable):
            solve_captcha(make_client(), site, SceneKind.human(),
                          "http://127.0.0.1:9", seed=4)


class TestForwardAndVerify:
    def test_round_trip_score(self, api, site, http):
        client = make_client()
        token = solve_captcha(client, site, SceneKind.human(), api.url, seed=5,
                              session=http)
        accepted, score = forward_and_verify(site, token, client, api.url,
                                             session=http)
        assert accepted
        assert 0.5 < score <= 1.0

    def test_expired_token(self, clocked_api, http):
        api, clock = clocked_api
        site = WebsiteContext.create("clocked.example")
        site.register(api.url)
        client = make_client()
        token = solve_captcha(client, site, SceneKind.human(), api.url, seed=6,
                              base_now_ms=clock(), session=http)
        clock.advance(120_001)
        with pytest.raises(ServerRejectedError) as err:
            forward_and_verify(site, token, client, api.url, session=http)
        assert err.value.error == "TokenExpired"

    def test_score_sealed_for_other_site_fails_open(self, api, site, http, core):
        # A site presenting the right shared key gets a score only it can
        # open; opening with a different key must fail, not mis-decode.
        client = make_client()
        token = solve_captcha(client, site, SceneKind.human(), api.url, seed=7,
                              session=http)
        response = http.post(
            f"{api.url}/api/v1/verify",
            json={
                "site_key": site.site_key,
                "shared_key": base64.b64encode(site.shared_key).decode(),
                "token": base64.b64encode(token.ciphertext).decode(),
                "uid": client.uid(),
                "device_fp": base64.b64encode(client.device_fp(site.site_key)).decode(),
            },
            timeout=10,
        )
        sealed = base64.b64decode(response.json()["sealed_score"])
        with pytest.raises(crypto.AuthFailure):
            crypto.open_score(sealed, b"\x31" * 32)

    def test_forwarded_token_rejected_in_foreign_context(self, api, site, http):
        worker = make_client()
        token = solve_captcha(worker, site, SceneKind.human(), api.url, seed=8,
                              session=http)
        attacker = ClientContext.create("198.51.100.200", keypair=crypto.gen_keypair(seed=809))
        with pytest.raises(ServerRejectedError) as err:
            forward_and_verify(site, token, attacker, api.url, session=http)
        assert err.value.error == "ContextMismatch"


class TestBaselineHonesty:
    def test_twenty_seeded_solves_all_succeed(self, api, site, http):
        # Smoke-scale version of the 100/100 baseline in the acceptance suite.
        for seed in range(20):
            client = make_client(ip=f"203.0.113.{seed + 1}")
            token = solve_captcha(client, site, SceneKind.human(), api.url,
                                  seed=seed, session=http)
            accepted, score = forward_and_verify(site, token, client, api.url,
                                                 session=http)
            assert accepted and score > 0.5
