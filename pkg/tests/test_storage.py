"""State store behavior, backend parity, and durability."""

import concurrent.futures
import secrets

import pytest

from thermoguard.storage import MemoryStore, SessionRecord, SiteRegistration, SqliteStore


@pytest.fixture(params=["memory", "sqlite"])
def store(request, tmp_path):
    if request.param == "memory":
        backend = MemoryStore()
    else:
        backend = SqliteStore(str(tmp_path / "state.db"))
    yield backend
    backend.close()


def make_record(session_id=b"\x01" * 16, issued_at=1_000, consumed=False):
    return SessionRecord(
        session_id=session_id,
        uid="1.2.3.4:aabbccdd",
        device_fp=b"\x0f" * 32,
        risk_score=0.73,
        nonce=b"\x0e" * 64,
        issued_at=issued_at,
        exp=issued_at + 120_000,
        consumed=consumed,
    )


class TestSites:
    def test_register_and_get(self, store):
        reg = SiteRegistration("sk-a", b"\x01" * 32, "a.example")
        assert store.register_site(reg)
        assert store.get_site("sk-a") == reg

    def test_identical_reregistration_ok(self, store):
        reg = SiteRegistration("sk-a", b"\x01" * 32, "a.example")
        assert store.register_site(reg)
        assert store.register_site(reg)

    def test_conflict_rejected(self, store):
        assert store.register_site(SiteRegistration("sk-a", b"\x01" * 32, "a.example"))
        assert not store.register_site(SiteRegistration("sk-a", b"\x02" * 32, "a.example"))
        assert not store.register_site(SiteRegistration("sk-a", b"\x01" * 32, "b.example"))

    def test_missing_site(self, store):
        assert store.get_site("sk-missing") is None


class TestNonces:
    def test_first_insert_wins(self, store):
        nonce = secrets.token_bytes(64)
        assert store.nonce_check_and_insert(nonce, 1_000)
        assert not store.nonce_check_and_insert(nonce, 2_000)

    def test_distinct_nonces_independent(self, store):
        assert store.nonce_check_and_insert(secrets.token_bytes(64), 1)
        assert store.nonce_check_and_insert(secrets.token_bytes(64), 1)

    def test_concurrent_insert_exactly_one_winner(self, store):
        nonce = secrets.token_bytes(64)
        with concurrent.futures.ThreadPoolExecutor(max_workers=24) as pool:
            outcomes = list(
                pool.map(lambda _: store.nonce_check_and_insert(nonce, 5), range(24))
            )
        assert outcomes.count(True) == 1


class TestSessions:
    def test_round_trip(self, store):
        record = make_record()
        store.add_session(record)
        assert store.get_session(record.session_id) == record

    def test_missing_session(self, store):
        assert store.get_session(b"\x99" * 16) is None

    def test_consume_once(self, store):
        record = make_record()
        store.add_session(record)
        assert store.consume_session(record.session_id)
        assert not store.consume_session(record.session_id)
        assert store.get_session(record.session_id).consumed

    def test_consume_missing(self, store):
        assert not store.consume_session(b"\x42" * 16)

    def test_concurrent_consume_single_winner(self, store):
        record = make_record(session_id=secrets.token_bytes(16))
        store.add_session(record)
        with concurrent.futures.ThreadPoolExecutor(max_workers=16) as pool:
            outcomes = list(
                pool.map(lambda _: store.consume_session(record.session_id), range(16))
            )
        assert outcomes.count(True) == 1


class TestPurge:
    def test_purges_old_keeps_new(self, store):
        store.add_session(make_record(session_id=b"\x01" * 16, issued_at=1_000))
        store.add_session(make_record(session_id=b"\x02" * 16, issued_at=900_000))
        store.nonce_check_and_insert(b"\x03" * 64, 1_000)
        store.nonce_check_and_insert(b"\x04" * 64, 900_000)
        assert store.purge_older_than(500_000) == 2
        assert store.get_session(b"\x01" * 16) is None
        assert store.get_session(b"\x02" * 16) is not None
        assert not store.nonce_check_and_insert(b"\x04" * 64, 901_000)
        # the purged nonce slot is reusable again
        assert store.nonce_check_and_insert(b"\x03" * 64, 901_000)


class TestSqliteDurability:
    def test_state_survives_reopen(self, tmp_path):
        path = str(tmp_path / "durable.db")
        store = SqliteStore(path)
        reg = SiteRegistration("sk-d", b"\x0d" * 32, "d.example")
        record = make_record(session_id=b"\x0c" * 16)
        store.register_site(reg)
        store.add_session(record)
        store.nonce_check_and_insert(b"\x0b" * 64, 77)
        store.close()

        reopened = SqliteStore(path)
        assert reopened.get_site("sk-d") == reg
        assert reopened.get_session(b"\x0c" * 16) == record
        assert not reopened.nonce_check_and_insert(b"\x0b" * 64, 78)
        reopened.close()

    def test_wal_mode_active(self, tmp_path):
        store = SqliteStore(str(tmp_path / "wal.db"))
        mode = store._conn.execute("PRAGMA journal_mode").fetchone()[0]
        assert mode == "wal"
        store.close()
