import hashlib
import threading

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mlcatalog.errors import ChecksumMismatchError, ConflictError, IntegrityError, NotFoundError, ValidationError
from mlcatalog.objectstore import ObjectStore, split_version


@pytest.fixture
def store(tmp_path):
    return ObjectStore(tmp_path / "store")


def test_empty_object(store):
    obj = store.put_object("/ns/empty", b"")
    assert obj.checksum == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert obj.length == 0
    assert store.get_object("/ns/empty")[0] == b""


def test_dedupe_and_versions(store):
    a = store.put_object("/ns/x", b"one")
    assert store.put_object("/ns/x", b"one").version_id == a.version_id
    b = store.put_object("/ns/x", b"two")
    assert b.version_id != a.version_id
    assert store.get_object("/ns/x")[0] == b"two"
    assert store.get_object("/ns/x", a.version_id)[0] == b"one"
    assert [v.version_id for v in store.versions("/ns/x")] == [a.version_id, b.version_id]
    assert split_version(b.versioned_path) == ("/ns/x", b.version_id)


def test_declared_checksum_mismatch(store):
    with pytest.raises(ChecksumMismatchError):
        store.put_object("/ns/bad", b"data", declared_checksum="0" * 64)
    with pytest.raises(NotFoundError):
        store.head_object("/ns/bad")
    ok = store.put_object("/ns/ok", b"data", declared_checksum=hashlib.sha256(b"data").hexdigest())
    assert ok.length == 4


def test_namespace_conflicts(store):
    store.put_object("/a/b", b"x")
    with pytest.raises(ConflictError):
        store.put_object("/a/b/c", b"y")
    store.put_object("/d/e/f", b"z")
    with pytest.raises(ConflictError):
        store.put_object("/d/e", b"w")
    for bad in ("nope", "/a/", "/a//b", "/a/../b", "/a:b"):
        with pytest.raises(ValidationError):
            store.put_object(bad, b"")


def test_list_namespace(store):
    for p in ("/n/b", "/n/a", "/n/sub/c", "/m/x"):
        store.put_object(p, p.encode())
    assert store.list_namespace("/n") == ["/n/a", "/n/b", "/n/sub/c"]
    assert store.list_namespace("/missing") == []


def test_tamper_evidence(store):
    payload = bytes(range(256)) * 4
    obj = store.put_object("/t/blob", payload)
    blob = store._blob(obj.checksum)
    for i in (0, 500, len(payload) - 1):
        blob.chmod(0o644)
        raw = bytearray(blob.read_bytes())
        raw[i] ^= 0x01
        blob.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            store.get_object("/t/blob")
        with pytest.raises(IntegrityError):
            store.copy_to("/t/blob", store.root / "out")
        raw[i] ^= 0x01
        blob.write_bytes(bytes(raw))
        assert store.get_object("/t/blob")[0] == payload


def test_concurrent_puts_distinct_paths(store):
    errors = []

    def worker(i):
        try:
            store.put_object(f"/c/{i}", str(i).encode() * 1000)
        except Exception as e:  # pragma: no cover
            errors.append(e)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(store.list_namespace("/c")) == 16


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(payload=st.binary(max_size=1 << 20))
def test_round_trip(store, payload):
    obj = store.put_object("/rt/obj", payload)
    data, head = store.get_object("/rt/obj", obj.version_id)
    assert data == payload and head == obj
    assert store.get_object("/rt/obj", obj.version_id)[0] == payload
