"""Digests, RSA signatures, token MAC, and the dual-key sealed token codec.

Traceable tokens carry ``canonical(fields) || HMAC-SHA256(k_shared, canonical)``
inside two AES-256-GCM layers: the inner layer under a key derived from the
verification server's secret, the outer under a key derived from the relying
site's shared key. Opening a token therefore requires the issuing site's key
first, and any tamper or context change surfaces as a typed error.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import math
import os
import random
import struct
import time
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa, utils
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .payload import NONCE_LEN, TIMESTAMP_LEN, Nonce, Timestamp

DIGEST_LEN = 32
KEY_LEN = 32
SESSION_ID_LEN = 16
DEVICE_FP_LEN = 32
MAC_LEN = 32
AEAD_NONCE_LEN = 12

RSA_KEY_BITS = 2048
RSA_PUBLIC_EXPONENT = 65537

# Domain separation labels: the shared key also keys the MAC, so the AEAD
# layers and the score seal each run under a derived subkey.
_LABEL_INNER = b"thermoguard/token/inner"
_LABEL_OUTER = b"thermoguard/token/outer"
_LABEL_SCORE = b"thermoguard/score"

_SCORE_SCALE = 10_000


class TokenError(Exception):
    """Base class for sealed token and sealed score errors."""


class ExpiredAtIssue(TokenError):
    """Token expiration was not in the future at seal time."""


class OuterLayerAuthFailure(TokenError):
    """Outer (shared-key) AEAD layer failed to authenticate."""


class InnerLayerAuthFailure(TokenError):
    """Inner (server-key) AEAD layer failed to authenticate."""


class MacMismatch(TokenError):
    """Recomputed field MAC differs from the embedded tag."""


class MalformedPlaintext(TokenError):
    """Decrypted bytes do not parse as token fields or a score."""


class AuthFailure(TokenError):
    """Sealed score failed to authenticate."""


@dataclass(frozen=True)
class Digest:
    """A SHA-256 output."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != DIGEST_LEN:
            raise ValueError(f"digest must be {DIGEST_LEN} bytes")


@dataclass(frozen=True)
class SignatureBundle:
    """A detached signature plus the PEM verification key that travels with it."""

    signature: bytes
    public_key: str

    def verifies(self, d: "Digest") -> bool:
        """True iff the signature checks out under the bundled key.

        Malformed key material or signature bytes count as failure.
        """
        try:
            key = load_verification_key(self.public_key)
        except ValueError:
            return False
        return verify_sig(self.signature, d, key)


@dataclass(frozen=True)
class TokenFields:
    """The context a traceable token is bound to."""

    uid: str
    session_id: bytes
    device_fp: bytes
    nonce: Nonce
    exp: Timestamp

    def __post_init__(self) -> None:
        if len(self.session_id) != SESSION_ID_LEN:
            raise ValueError(f"session_id must be {SESSION_ID_LEN} bytes")
        if len(self.device_fp) != DEVICE_FP_LEN:
            raise ValueError(f"device_fp must be {DEVICE_FP_LEN} bytes")


@dataclass(frozen=True)
class TraceableToken:
    """Sealed, MAC-bound verification token."""

    ciphertext: bytes


def digest(data: bytes) -> Digest:
    """SHA-256 of the input."""
    return Digest(hashlib.sha256(data).digest())


def _deterministic_prime(rng: random.Random, bits: int) -> int:
    import gmpy2

    while True:
        candidate = rng.getrandbits(bits)
        candidate |= (3 << (bits - 2)) | 1  # full bit length, odd
        prime = int(gmpy2.next_prime(candidate - 1))
        if prime.bit_length() == bits and math.gcd(RSA_PUBLIC_EXPONENT, prime - 1) == 1:
            return prime


def gen_keypair(seed: int | None = None) -> tuple[rsa.RSAPrivateKey, rsa.RSAPublicKey]:
    """Generate an RSA-2048 keypair.

    With ``seed`` the key material is a deterministic function of the seed
    (test mode only; the stream is not cryptographically strong). Without a
    seed, generation uses the library's secure randomness.
    """
    if seed is None:
        private = rsa.generate_private_key(
            public_exponent=RSA_PUBLIC_EXPONENT, key_size=RSA_KEY_BITS
        )
        return private, private.public_key()

    rng = random.Random(seed)
    p = _deterministic_prime(rng, RSA_KEY_BITS // 2)
    q = _deterministic_prime(rng, RSA_KEY_BITS // 2)
    while q == p:
        q = _deterministic_prime(rng, RSA_KEY_BITS // 2)
    n = p * q
    phi = (p - 1) * (q - 1)
    d = pow(RSA_PUBLIC_EXPONENT, -1, phi)
    public_numbers = rsa.RSAPublicNumbers(RSA_PUBLIC_EXPONENT, n)
    private = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=rsa.rsa_crt_dmp1(d, p),
        dmq1=rsa.rsa_crt_dmq1(d, q),
        iqmp=rsa.rsa_crt_iqmp(p, q),
        public_numbers=public_numbers,
    ).private_key()
    return private, private.public_key()


def sign(d: Digest, sk: rsa.RSAPrivateKey) -> bytes:
    """Detached RSA PKCS#1 v1.5 signature over a precomputed SHA-256 digest."""
    return sk.sign(d.value, padding.PKCS1v15(), utils.Prehashed(hashes.SHA256()))


def verify_sig(sig: bytes, d: Digest, pk: rsa.RSAPublicKey) -> bool:
    """True iff ``sig`` is a valid signature of ``d`` under ``pk``.

    Malformed inputs yield False, never an exception.
    """
    try:
        pk.verify(sig, d.value, padding.PKCS1v15(), utils.Prehashed(hashes.SHA256()))
        return True
    except (InvalidSignature, ValueError, TypeError, AttributeError):
        return False


def encode_verification_key(pk: rsa.RSAPublicKey) -> str:
    """PEM (SubjectPublicKeyInfo) text for transport inside JSON."""
    return pk.public_bytes(
        serialization.Encoding.PEM,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    ).decode("ascii")


def load_verification_key(pem: str | bytes) -> rsa.RSAPublicKey:
    """Parse a PEM verification key; raises ValueError on anything malformed."""
    if isinstance(pem, str):
        pem = pem.encode("ascii", errors="replace")
    try:
        key = serialization.load_pem_public_key(pem)
    except Exception as exc:
        raise ValueError(f"not a valid PEM public key: {exc}") from exc
    if not isinstance(key, rsa.RSAPublicKey):
        raise ValueError("expected an RSA public key")
    return key


def canonical_fields(fields: TokenFields) -> bytes:
    """Injective serialization: uid_len u16 BE || uid || session || fp || nonce || exp."""
    uid_bytes = fields.uid.encode("utf-8")
    if len(uid_bytes) > 0xFFFF:
        raise ValueError("uid too long to serialize")
    return (
        struct.pack(">H", len(uid_bytes))
        + uid_bytes
        + fields.session_id
        + fields.device_fp
        + fields.nonce.value
        + fields.exp.to_bytes()
    )


def parse_fields(data: bytes) -> TokenFields:
    """Inverse of canonical_fields; raises MalformedPlaintext on any defect."""
    fixed = SESSION_ID_LEN + DEVICE_FP_LEN + NONCE_LEN + TIMESTAMP_LEN
    if len(data) < 2:
        raise MalformedPlaintext("missing uid length")
    (uid_len,) = struct.unpack(">H", data[:2])
    expected = 2 + uid_len + fixed
    if len(data) != expected:
        raise MalformedPlaintext(f"expected {expected} bytes, got {len(data)}")
    offset = 2
    try:
        uid = data[offset : offset + uid_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPlaintext("uid is not valid UTF-8") from exc
    offset += uid_len
    session_id = data[offset : offset + SESSION_ID_LEN]
    offset += SESSION_ID_LEN
    device_fp = data[offset : offset + DEVICE_FP_LEN]
    offset += DEVICE_FP_LEN
    nonce = Nonce(data[offset : offset + NONCE_LEN])
    offset += NONCE_LEN
    exp = Timestamp.from_bytes(data[offset : offset + TIMESTAMP_LEN])
    return TokenFields(uid, session_id, device_fp, nonce, exp)


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA256 primitive (any key length)."""
    return hmac_mod.new(key, data, hashlib.sha256).digest()


def mac(fields: TokenFields, k_shared: bytes) -> bytes:
    """HMAC-SHA256 over the canonical field serialization."""
    _check_key(k_shared)
    return hmac_sha256(k_shared, canonical_fields(fields))


def _check_key(key: bytes) -> None:
    if len(key) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} bytes, got {len(key)}")


def derive_key(key: bytes, label: bytes) -> bytes:
    """Label-separated AEAD subkey."""
    _check_key(key)
    return hmac_sha256(key, label)


def aead_seal(key: bytes, plaintext: bytes) -> bytes:
    """nonce(12) || AES-256-GCM ciphertext+tag under a fresh random nonce."""
    nonce = os.urandom(AEAD_NONCE_LEN)
    return nonce + AESGCM(key).encrypt(nonce, plaintext, None)


def aead_open(key: bytes, sealed: bytes, failure: type[TokenError]) -> bytes:
    if len(sealed) < AEAD_NONCE_LEN + 16:
        raise failure("sealed blob too short")
    try:
        return AESGCM(key).decrypt(sealed[:AEAD_NONCE_LEN], sealed[AEAD_NONCE_LEN:], None)
    except Exception as exc:
        raise failure("authentication failed") from exc


def seal_token(
    fields: TokenFields,
    sk_server: bytes,
    k_shared: bytes,
    now_ms: int | None = None,
) -> TraceableToken:
    """Seal fields and their MAC under the server key then the shared key."""
    _check_key(sk_server)
    _check_key(k_shared)
    now = int(time.time() * 1000) if now_ms is None else now_ms
    if fields.exp.value <= now:
        raise ExpiredAtIssue(f"exp {fields.exp.value} not after {now}")
    plaintext = canonical_fields(fields) + mac(fields, k_shared)
    inner = aead_seal(derive_key(sk_server, _LABEL_INNER), plaintext)
    outer = aead_seal(derive_key(k_shared, _LABEL_OUTER), inner)
    return TraceableToken(outer)


def open_token(token: TraceableToken, sk_server: bytes, k_shared: bytes) -> TokenFields:
    """Unseal both layers, verify the embedded MAC, return the fields.

    Every failure is one of the typed TokenError subclasses; the MAC
    comparison is constant-time.
    """
    _check_key(sk_server)
    _check_key(k_shared)
    inner = aead_open(derive_key(k_shared, _LABEL_OUTER), token.ciphertext,
                      OuterLayerAuthFailure)
    plaintext = aead_open(derive_key(sk_server, _LABEL_INNER), inner,
                          InnerLayerAuthFailure)
    if len(plaintext) < MAC_LEN:
        raise MalformedPlaintext("plaintext shorter than a MAC")
    body, tag = plaintext[:-MAC_LEN], plaintext[-MAC_LEN:]
    fields = parse_fields(body)
    if not hmac_mod.compare_digest(mac(fields, k_shared), tag):
        raise MacMismatch("field MAC does not match")
    return fields


def seal_score(score: float, k_shared: bytes) -> bytes:
    """Seal a risk score as fixed-point u32 (score * 10^4) padded to 8 bytes."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    quantized = round(score * _SCORE_SCALE)
    plaintext = struct.pack(">I", quantized) + b"\x00" * 4
    return aead_seal(derive_key(k_shared, _LABEL_SCORE), plaintext)


def open_score(sealed: bytes, k_shared: bytes) -> float:
    """Open a sealed risk score; AuthFailure or MalformedPlaintext on defects."""
    plaintext = aead_open(derive_key(k_shared, _LABEL_SCORE), sealed, AuthFailure)
    if len(plaintext) != 8 or plaintext[4:] != b"\x00" * 4:
        raise MalformedPlaintext("bad score encoding")
    (quantized,) = struct.unpack(">I", plaintext[:4])
    if quantized > _SCORE_SCALE:
        raise MalformedPlaintext(f"score {quantized} above scale")
    return quantized / _SCORE_SCALE
