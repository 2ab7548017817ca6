"""Server-side state: site registrations, consumed nonces, session records.

Two interchangeable backends: an in-memory store for tests and ephemeral
runs, and a SQLite store (WAL journaling) for durable deployments. Both
make nonce check-and-insert and session consumption linearizable
read-modify-write operations, which is what the replay and single-use
guarantees rest on.
"""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SiteRegistration:
    """A relying website's site-key / shared-key pairing."""

    site_key: str
    shared_key: bytes
    domain: str


@dataclass(frozen=True)
class SessionRecord:
    """One issued verification, keyed by session_id; single-use."""

    session_id: bytes
    uid: str
    device_fp: bytes
    risk_score: float
    nonce: bytes
    issued_at: int
    exp: int
    consumed: bool = False


class MemoryStore:
    """Dict-backed store; a single lock serializes every mutation."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._sites: dict[str, SiteRegistration] = {}
        self._nonces: dict[bytes, int] = {}
        self._sessions: dict[bytes, SessionRecord] = {}

    def register_site(self, registration: SiteRegistration) -> bool:
        """Persist a registration; True unless the site_key is taken with
        different material (identical re-registration is idempotent)."""
        with self._lock:
            existing = self._sites.get(registration.site_key)
            if existing is not None:
                return existing == registration
            self._sites[registration.site_key] = registration
            return True

    def get_site(self, site_key: str) -> SiteRegistration | None:
        with self._lock:
            return self._sites.get(site_key)

    def nonce_check_and_insert(self, nonce: bytes, seen_at: int) -> bool:
        """Atomically record a nonce; False if it was already present."""
        with self._lock:
            if nonce in self._nonces:
                return False
            self._nonces[nonce] = seen_at
            return True

    def add_session(self, record: SessionRecord) -> None:
        with self._lock:
            self._sessions[record.session_id] = record

    def get_session(self, session_id: bytes) -> SessionRecord | None:
        with self._lock:
            return self._sessions.get(session_id)

    def consume_session(self, session_id: bytes) -> bool:
        """Flip consumed False->True; False if missing or already consumed."""
        with self._lock:
            record = self._sessions.get(session_id)
            if record is None or record.consumed:
                return False
            self._sessions[session_id] = replace(record, consumed=True)
            return True

    def purge_older_than(self, cutoff: int) -> int:
        with self._lock:
            dead_nonces = [n for n, t in self._nonces.items() if t < cutoff]
            for n in dead_nonces:
                del self._nonces[n]
            dead_sessions = [
                s for s, r in self._sessions.items() if r.issued_at < cutoff
            ]
            for s in dead_sessions:
                del self._sessions[s]
            return len(dead_nonces) + len(dead_sessions)

    def close(self) -> None:
        pass


_SCHEMA = """
CREATE TABLE IF NOT EXISTS sites (
    site_key   TEXT PRIMARY KEY,
    shared_key BLOB NOT NULL,
    domain     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS nonces (
    nonce   BLOB PRIMARY KEY,
    seen_at INTEGER NOT NULL
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS sessions (
    session_id BLOB PRIMARY KEY,
    uid        TEXT NOT NULL,
    device_fp  BLOB NOT NULL,
    risk_score REAL NOT NULL,
    nonce      BLOB NOT NULL,
    issued_at  INTEGER NOT NULL,
    exp        INTEGER NOT NULL,
    consumed   INTEGER NOT NULL DEFAULT 0
) WITHOUT ROWID;
"""


class SqliteStore:
    """SQLite-backed store with write-ahead journaling.

    One shared connection guarded by a lock: SQLite serializes writers
    anyway, and the lock gives us linearizable check-and-insert semantics
    identical to the in-memory store.
    """

    def __init__(self, path: str) -> None:
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def register_site(self, registration: SiteRegistration) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT shared_key, domain FROM sites WHERE site_key = ?",
                (registration.site_key,),
            ).fetchone()
            if row is not None:
                return (
                    bytes(row[0]) == registration.shared_key
                    and row[1] == registration.domain
                )
            self._conn.execute(
                "INSERT INTO sites (site_key, shared_key, domain) VALUES (?, ?, ?)",
                (registration.site_key, registration.shared_key, registration.domain),
            )
            self._conn.commit()
            return True

    def get_site(self, site_key: str) -> SiteRegistration | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT shared_key, domain FROM sites WHERE site_key = ?",
                (site_key,),
            ).fetchone()
        if row is None:
            return None
        return SiteRegistration(site_key, bytes(row[0]), row[1])

    def nonce_check_and_insert(self, nonce: bytes, seen_at: int) -> bool:
        with self._lock:
            cursor = self._conn.execute(
                "INSERT OR IGNORE INTO nonces (nonce, seen_at) VALUES (?, ?)",
                (nonce, seen_at),
            )
            self._conn.commit()
            return cursor.rowcount == 1

    def add_session(self, record: SessionRecord) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO sessions (session_id, uid, device_fp, risk_score,"
                " nonce, issued_at, exp, consumed) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    record.session_id,
                    record.uid,
                    record.device_fp,
                    record.risk_score,
                    record.nonce,
                    record.issued_at,
                    record.exp,
                    int(record.consumed),
                ),
            )
            self._conn.commit()

    def get_session(self, session_id: bytes) -> SessionRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT uid, device_fp, risk_score, nonce, issued_at, exp, consumed"
                " FROM sessions WHERE session_id = ?",
                (session_id,),
            ).fetchone()
        if row is None:
            return None
        return SessionRecord(
            session_id=session_id,
            uid=row[0],
            device_fp=bytes(row[1]),
            risk_score=row[2],
            nonce=bytes(row[3]),
            issued_at=row[4],
            exp=row[5],
            consumed=bool(row[6]),
        )

    def consume_session(self, session_id: bytes) -> bool:
        with self._lock:
            cursor = self._conn.execute(
                "UPDATE sessions SET consumed = 1"
                " WHERE session_id = ? AND consumed = 0",
                (session_id,),
            )
            self._conn.commit()
            return cursor.rowcount == 1

    def purge_older_than(self, cutoff: int) -> int:
        with self._lock:
            removed = self._conn.execute(
                "DELETE FROM nonces WHERE seen_at < ?", (cutoff,)
            ).rowcount
            removed += self._conn.execute(
                "DELETE FROM sessions WHERE issued_at < ?", (cutoff,)
            ).rowcount
            self._conn.commit()
            return removed

    def close(self) -> None:
        with self._lock:
            self._conn.close()
