"""Single entry point: serve, gen-frame, solve, attack, report, keygen.

Every subcommand is non-interactive and scriptable. Exit codes: 0 success,
1 operational error, 2 usage error, 3 when an attack campaign saw at least
one accepted attempt (a security regression signal for CI).
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys

from cryptography.hazmat.primitives import serialization

from . import attacks
from .config import ServerConfig, load_config, resolve_config_path
from .crypto import gen_keypair
from .frames import (
    DEFAULT_HEIGHT,
    DEFAULT_WIDTH,
    FrameError,
    SCENE_KINDS,
    SceneKind,
    encode_frame,
    generate_scene,
)
from .httpd import ApiServer
from .server import CaptchaServer, PipelineRejection
from .sim import (
    ClientContext,
    ServerRejectedError,
    ServerUnreachable,
    WebsiteContext,
    forward_and_verify,
    solve_captcha,
)
from .storage import MemoryStore, SqliteStore

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_USAGE = 2
EXIT_ATTACK_ACCEPTED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoguard",
        description="Thermal-capture human verification service and attack harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the verification server")
    serve.add_argument("--config", help="key=value config file (THERMOGUARD_CONFIG overrides)")

    gen = sub.add_parser("gen-frame", help="write a synthetic .thermo capture")
    gen.add_argument("--kind", required=True, choices=SCENE_KINDS)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--angle", type=float, default=90.0)
    gen.add_argument("--distance", type=float, default=3.0)
    gen.add_argument("--tilt", type=float, default=90.0)
    gen.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    gen.add_argument("--height", type=int, default=DEFAULT_HEIGHT)

    solve = sub.add_parser("solve", help="run one honest end-to-end verification")
    _add_site_args(solve)
    solve.add_argument("--scene", default="human", choices=SCENE_KINDS)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--user-ip", default="203.0.113.10")
    solve.add_argument("--frame", help="submit this .thermo file instead of a generated scene")

    attack = sub.add_parser("attack", help="run an adversarial campaign")
    _add_site_args(attack)
    attack.add_argument("--class", dest="attack_class", required=True,
                        choices=attacks.ALL_CLASSES)
    attack.add_argument("--n", type=int, default=500,
                        help="attempts (per sub-kind for misuse classes)")
    attack.add_argument("--seed", type=int, default=0)
    attack.add_argument("--parallelism", type=int, default=8)
    attack.add_argument("--out", help="write the JSON report here instead of stdout")

    report = sub.add_parser("report", help="render saved JSON campaign reports")
    report.add_argument("--format", default="table", choices=("table", "json"))
    report.add_argument("files", nargs="+")

    keygen = sub.add_parser("keygen", help="emit a client keypair or a shared secret")
    keygen.add_argument("--seed", type=int, help="deterministic keypair (test use)")
    keygen.add_argument("--secret", action="store_true",
                        help="emit a 32-byte hex secret instead of a keypair")
    return parser


def _add_site_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--server", required=True, help="server base URL")
    sub.add_argument("--site-key", default="cli-site")
    sub.add_argument("--shared-key", help="64 hex chars; random if omitted")
    sub.add_argument("--domain", default="example.site")


def _website(args) -> WebsiteContext:
    shared = bytes.fromhex(args.shared_key) if args.shared_key else secrets.token_bytes(32)
    if len(shared) != 32:
        raise ValueError("--shared-key must be 32 bytes of hex")
    return WebsiteContext(domain=args.domain, site_key=args.site_key, shared_key=shared)


def _cmd_serve(args) -> int:
    path = resolve_config_path(args.config)
    config = load_config(path) if path else ServerConfig()
    store = SqliteStore(config.storage_path) if config.storage_path else MemoryStore()
    secret = config.server_secret_key or secrets.token_bytes(32)
    core = CaptchaServer(
        secret,
        store=store,
        detector_config=config.detector,
        validity_ms=config.validity_ms,
        skew_ms=config.skew_ms,
    )
    api = ApiServer(core, host=config.host, port=config.port)
    print(f"listening on {api.url}", file=sys.stderr)
    try:
        api.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        store.close()
    return EXIT_OK


def _cmd_gen_frame(args) -> int:
    if args.kind == "human":
        kind = SceneKind.human(args.angle, args.distance, args.tilt)
    else:
        kind = SceneKind(args.kind)
    frame = generate_scene(kind, args.seed, width=args.width, height=args.height)
    with open(args.out, "wb") as handle:
        handle.write(encode_frame(frame))
    print(f"wrote {args.out} ({frame.width}x{frame.height})", file=sys.stderr)
    return EXIT_OK


def _cmd_solve(args) -> int:
    site = _website(args)
    site.register(args.server)
    client = ClientContext.create(args.user_ip)
    frame_bytes = None
    if args.frame:
        with open(args.frame, "rb") as handle:
            frame_bytes = handle.read()
    token = solve_captcha(client, site, _scene(args.scene), args.server,
                          seed=args.seed, frame_bytes=frame_bytes)
    accepted, score = forward_and_verify(site, token, client, args.server)
    print(json.dumps({
        "token_issued": True,
        "score": score,
        "accepted": accepted,
        "solve_ms": client.last_solve_ms,
    }))
    return EXIT_OK if accepted else EXIT_OPERATIONAL


def _scene(name: str) -> SceneKind:
    return SceneKind.human() if name == "human" else SceneKind(name)


def _cmd_attack(args) -> int:
    site = _website(args)
    site.register(args.server)
    if args.attack_class in attacks.MITM_CLASSES:
        result = attacks.run_mitm_campaign(
            args.attack_class, args.n, args.seed, args.server, site,
            parallelism=args.parallelism,
        )
    elif args.attack_class == attacks.TOKEN_FORWARD:
        result = attacks.run_token_forward_campaign(
            args.n, args.seed, args.server, site, parallelism=args.parallelism,
        )
    else:
        result = attacks.run_misuse_campaign(
            args.attack_class, args.n, args.seed, args.server, site,
            parallelism=args.parallelism,
        )
    rendered = attacks.render_report([result], "json")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(rendered + "\n")
    else:
        print(rendered)
    print(attacks.render_report([result], "table"), file=sys.stderr)
    return EXIT_ATTACK_ACCEPTED if result.accepted > 0 else EXIT_OK


def _cmd_report(args) -> int:
    reports: list[attacks.AttackReport] = []
    for path in args.files:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        entries = data if isinstance(data, list) else [data]
        reports.extend(attacks.AttackReport.from_dict(entry) for entry in entries)
    print(attacks.render_report(reports, args.format))
    return EXIT_OK


def _cmd_keygen(args) -> int:
    if args.secret:
        print(secrets.token_hex(32))
        return EXIT_OK
    sk, pk = gen_keypair(args.seed)
    private_pem = sk.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    ).decode("ascii")
    public_pem = pk.public_bytes(
        serialization.Encoding.PEM,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    ).decode("ascii")
    print(private_pem, end="")
    print(public_pem, end="")
    return EXIT_OK


_COMMANDS = {
    "serve": _cmd_serve,
    "gen-frame": _cmd_gen_frame,
    "solve": _cmd_solve,
    "attack": _cmd_attack,
    "report": _cmd_report,
    "keygen": _cmd_keygen,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (
        ServerRejectedError,
        ServerUnreachable,
        PipelineRejection,
        attacks.InconclusiveCampaign,
        FrameError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
