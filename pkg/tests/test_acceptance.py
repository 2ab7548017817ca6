"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``. Campaign criteria drive
a live loopback HTTP server; tolerance on every security tally is zero.
"""

import itertools
import random
import secrets
import time

import numpy as np
import pytest

from thermoguard import attacks, crypto
from thermoguard.detector import detect
from thermoguard.frames import (
    SceneKind,
    ThermalFrame,
    decode_frame,
    encode_frame,
    generate_scene,
)
from thermoguard.httpd import ApiServer
from thermoguard.payload import Nonce, Timestamp, assemble_capture
from thermoguard.server import CaptchaServer
from thermoguard.sim import ClientContext, WebsiteContext, forward_and_verify, solve_captcha

SEED = 20_240_101


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def live():
    core = CaptchaServer(secrets.token_bytes(32))
    api = ApiServer(core).start()
    site = WebsiteContext.create("acceptance.example")
    site.register(api.url)
    yield api.url, site
    api.stop()


def test_criterion_1_mitm_zero_acceptance(live):
    """Five MITM classes x 500 attempts: zero accepted anywhere."""
    url, site = live
    started = time.perf_counter()
    reports = [
        attacks.run_mitm_campaign(attack_class, 500, SEED, url, site, parallelism=16)
        for attack_class in attacks.MITM_CLASSES
    ]
    elapsed = time.perf_counter() - started
    for report in reports:
        assert report.attempts == 500, report
        assert report.accepted == 0, report
        assert report.rejected == 500, report
        assert report.success_pct == 0.0, report
    binary = next(r for r in reports if r.attack_class == attacks.MODIFIED_BINARY)
    assert binary.errors == {"BadSignature": 500}
    _report(
        "1 (MITM campaigns)", elapsed < 60.0,
        f"2500 attempts, 0 accepted, {elapsed:.1f}s",
    )


def test_criterion_2_token_forwarding_zero_acceptance(live):
    """1600 forwarded tokens across N in {100, 500, 1000}: all rejected."""
    url, site = live
    started = time.perf_counter()
    total_attempts = total_accepted = 0
    for n in (100, 500, 1000):
        report = attacks.run_token_forward_campaign(n, SEED + n, url, site,
                                                    parallelism=16)
        assert report.attempts == n and report.rejected == n, report
        assert report.errors == {"ContextMismatch": n}, report
        total_attempts += report.attempts
        total_accepted += report.accepted
    elapsed = time.perf_counter() - started
    _report(
        "2 (token forwarding)",
        total_attempts == 1600 and total_accepted == 0 and elapsed < 120.0,
        f"{total_accepted}/{total_attempts} accepted, {elapsed:.1f}s",
    )


def test_criterion_3_misuse_zero_acceptance(live):
    """80 non-thermal + 40 tampered + 80 non-human inputs: all rejected."""
    url, site = live
    started = time.perf_counter()
    non_thermal = attacks.run_misuse_campaign(attacks.NON_THERMAL_UPLOAD, 20,
                                              SEED, url, site, parallelism=16)
    tampered = attacks.run_misuse_campaign(attacks.TAMPERED_CLIENT, 20,
                                           SEED, url, site, parallelism=16)
    non_human = attacks.run_misuse_campaign(attacks.NON_HUMAN_SCENE, 20,
                                            SEED, url, site, parallelism=16)
    elapsed = time.perf_counter() - started

    assert non_thermal.attempts == 80 and non_thermal.accepted == 0
    assert non_thermal.errors == {"InvalidFormat": 80}, non_thermal
    assert tampered.attempts == 40 and tampered.accepted == 0
    assert set(tampered.errors) <= {"BadSignature", "NonceReplayed"}, tampered
    assert non_human.attempts == 80 and non_human.accepted == 0
    assert non_human.errors == {"NotHuman": 80}, non_human
    _report(
        "3 (input misuse)", elapsed < 60.0,
        f"200 attempts, 0 accepted, {elapsed:.1f}s",
    )


def test_criterion_4_context_binding_property_suite():
    """Exhaustive 3x3x3 contexts: a token validates iff all three match."""
    started = time.perf_counter()
    sk_server, k_shared = secrets.token_bytes(32), secrets.token_bytes(32)
    uids = ("1.1.1.1:aaaaaaaa", "2.2.2.2:bbbbbbbb", "3.3.3.3:cccccccc")
    sessions = tuple(bytes([i]) * 16 for i in (1, 2, 3))
    fingerprints = tuple(bytes([i]) * 32 for i in (10, 11, 12))
    nonce, exp = Nonce(b"\x07" * 64), Timestamp(2_000_000_000_000)
    contexts = list(itertools.product(uids, sessions, fingerprints))
    assert len(contexts) == 27

    tokens = {}
    macs = {}
    for ctx in contexts:
        fields = crypto.TokenFields(ctx[0], ctx[1], ctx[2], nonce, exp)
        tokens[ctx] = crypto.seal_token(fields, sk_server, k_shared, now_ms=0)
        macs[ctx] = crypto.mac(fields, k_shared)

    checked = 0
    for issued, presented in itertools.product(contexts, repeat=2):
        fields = crypto.open_token(tokens[issued], sk_server, k_shared)
        token_context = (fields.uid, fields.session_id, fields.device_fp)
        validates = token_context == presented and crypto.mac(
            crypto.TokenFields(*presented, nonce, exp), k_shared
        ) == macs[issued]
        assert validates == (issued == presented), (issued, presented)
        checked += 1
    elapsed = time.perf_counter() - started
    _report(
        "4 (context-binding suite)",
        checked == 729 and elapsed < 5.0,
        f"27x27 cross-verifications, {elapsed:.2f}s",
    )


def test_criterion_5_tamper_totality():
    """Every bit flip of a sealed token fails with a typed error."""
    started = time.perf_counter()
    sk_server, k_shared = secrets.token_bytes(32), secrets.token_bytes(32)

    def sealed(uid: str) -> bytes:
        fields = crypto.TokenFields(uid, b"\x01" * 16, b"\x02" * 32,
                                    Nonce(b"\x03" * 64), Timestamp(10_000))
        return crypto.seal_token(fields, sk_server, k_shared, now_ms=0).ciphertext

    minimal = bytearray(sealed("a"))
    exhaustive_flips = 0
    for index in range(len(minimal)):
        for bit in range(8):
            minimal[index] ^= 1 << bit
            try:
                crypto.open_token(crypto.TraceableToken(bytes(minimal)),
                                  sk_server, k_shared)
                _report("5 (tamper totality)", False,
                        f"bit {bit} of byte {index} accepted")
            except crypto.TokenError:
                exhaustive_flips += 1
            minimal[index] ^= 1 << bit

    full = bytearray(sealed("203.0.113.250:" + "f" * 64))
    rng = random.Random(SEED)
    random_flips = 0
    for _ in range(10_000):
        index, bit = rng.randrange(len(full)), rng.randrange(8)
        full[index] ^= 1 << bit
        try:
            crypto.open_token(crypto.TraceableToken(bytes(full)), sk_server, k_shared)
            _report("5 (tamper totality)", False,
                    f"random flip at byte {index} accepted")
        except crypto.TokenError:
            random_flips += 1
        full[index] ^= 1 << bit

    elapsed = time.perf_counter() - started
    _report(
        "5 (tamper totality)",
        exhaustive_flips == len(minimal) * 8 and random_flips == 10_000
        and elapsed < 30.0,
        f"{exhaustive_flips} exhaustive + {random_flips} random flips, "
        f"0 acceptances, {elapsed:.1f}s",
    )


def test_criterion_6_concurrent_nonce_atomicity(live):
    """64 concurrent submissions sharing one nonce, 100 trials: <=1 token each."""
    url, site = live
    started = time.perf_counter()
    accepted = attacks.run_concurrent_nonce_burst(64, 100, SEED, url, site)
    elapsed = time.perf_counter() - started
    _report(
        "6 (nonce atomicity)",
        len(accepted) == 100 and all(count == 1 for count in accepted)
        and elapsed < 30.0,
        f"max accepted per trial {max(accepted)}, {elapsed:.1f}s",
    )


def test_criterion_7_detector_substitutes(live):
    """Separation, geometry monotonicity, and loopback latency budget."""
    url, site = live
    started = time.perf_counter()

    human_scores = [
        detect(generate_scene(SceneKind.human(), seed)).confidence
        for seed in range(200)
    ]
    false_accepts = 0
    for kind in (SceneKind.hot_object(), SceneKind.cold_object(),
                 SceneKind.vacuum_robot(), SceneKind.pet()):
        false_accepts += sum(
            1 for seed in range(200)
            if detect(generate_scene(kind, seed)).confidence > 0.50
        )
    separation_ok = min(human_scores) > 0.50 and false_accepts == 0

    distance_means = [
        np.mean([
            detect(generate_scene(SceneKind.human(distance_ft=d), seed)).confidence
            for seed in range(27)
        ])
        for d in (3, 4, 5, 6)
    ]
    angle_means = {
        angle: np.mean([
            detect(generate_scene(SceneKind.human(angle_deg=angle), seed)).confidence
            for seed in range(27)
        ])
        for angle in range(50, 131, 10)
    }
    monotonic_ok = (
        all(a >= b for a, b in zip(distance_means, distance_means[1:]))
        and max(angle_means, key=angle_means.get) == 90
    )

    import requests

    session = requests.Session()
    latencies = []
    keypair = crypto.gen_keypair()
    for seed in range(100):
        client = ClientContext.create(f"203.0.112.{seed + 1}", keypair=keypair)
        token = solve_captcha(client, site, SceneKind.human(), url,
                              seed=SEED + seed, session=session)
        latencies.append(client.last_solve_ms)
        accepted, score = forward_and_verify(site, token, client, url,
                                             session=session)
        assert accepted and score > 0.5, f"baseline solve {seed} failed"
    p95 = float(np.percentile(latencies, 95))
    session.close()

    elapsed = time.perf_counter() - started
    _report(
        "7 (detector substitutes)",
        separation_ok and monotonic_ok and p95 < 100.0 and elapsed < 120.0,
        f"min human {min(human_scores):.3f}, false accepts {false_accepts}, "
        f"baseline 100/100, p95 latency {p95:.1f}ms, {elapsed:.1f}s",
    )


def test_criterion_8_wire_and_codec_properties():
    """Codec round trip, 72-byte overhead, and standard crypto vectors."""
    started = time.perf_counter()
    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        width = int(rng.integers(8, 64))
        height = int(rng.integers(8, 64))
        pixels = rng.integers(0, 0x10000, size=width * height, dtype=np.uint32)
        frame = ThermalFrame(width, height, pixels.astype(np.uint16))
        assert decode_frame(encode_frame(frame)) == frame

    base = encode_frame(generate_scene(SceneKind.human(), 1, width=32, height=24))
    for _ in range(1000):
        payload = assemble_capture(base, Nonce.generate(), Timestamp.now())
        assert len(payload) - len(base) == 72

    sha_ok = (
        crypto.digest(b"").value.hex()
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        and crypto.digest(b"abc").value.hex()
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
    hmac_ok = (
        crypto.hmac_sha256(b"\x0b" * 20, b"Hi There").hex()
        == "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        and crypto.hmac_sha256(b"Jefe", b"what do ya want for nothing?").hex()
        == "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
    )
    elapsed = time.perf_counter() - started
    _report(
        "8 (wire/codec properties)",
        sha_ok and hmac_ok and elapsed < 10.0,
        f"1000 round trips, 1000 overhead checks, vectors OK, {elapsed:.1f}s",
    )
