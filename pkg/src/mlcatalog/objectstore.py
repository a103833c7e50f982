"""Versioned object store with content-addressed blobs.

Layout under the store root::

    objects/sha256/<aa>/<rest-of-digest>     immutable blob files
    paths/<object path>/@versions.json       version list for one object

Every read re-digests the blob, so on-disk tampering surfaces as
:class:`IntegrityError` instead of wrong bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from filelock import FileLock

from .catalog import _atomic_write, utcnow
from .errors import (
    ChecksumMismatchError,
    ConflictError,
    IntegrityError,
    NotFoundError,
    ValidationError,
)

EMPTY_SHA256 = hashlib.sha256(b"").hexdigest()
_VERSIONS = "@versions.json"
_CHUNK = 1 << 20


@dataclass(frozen=True)
class StoredObject:
    path: str
    version_id: str
    checksum: str
    length: int
    content_type: str = "application/octet-stream"
    created: str = ""
    md5: str | None = None

    @property
    def versioned_path(self):
        return f"{self.path}:{self.version_id}"

    def to_dict(self):
        return asdict(self)


def check_path(path):
    """Validate an object path such as ``/ns/sub/name``."""
    if not isinstance(path, str) or not path.startswith("/") or path.endswith("/"):
        raise ValidationError(f"invalid object path {path!r}", code="bad_path")
    for seg in path[1:].split("/"):
        if seg in ("", ".", "..") or seg.startswith("@") or ":" in seg or "\0" in seg:
            raise ValidationError(f"invalid object path {path!r}", code="bad_path")
    return path


def split_version(ref):
    """Split ``/path:version`` into ``(path, version)``; version may be None."""
    head, sep, tail = ref.rpartition(":")
    if sep and "/" not in tail:
        return head, tail
    return ref, None


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(_CHUNK), b""):
            h.update(chunk)
    return h.hexdigest()


class ObjectStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "objects" / "sha256").mkdir(parents=True, exist_ok=True)
        (self.root / "paths").mkdir(exist_ok=True)
        self._locks = {}
        self._guard = threading.Lock()
        self.reads = 0

    def _blob(self, checksum):
        return self.root / "objects" / "sha256" / checksum[:2] / checksum[2:]

    def _node(self, path):
        return self.root / "paths" / path.lstrip("/")

    def _path_lock(self, path):
        with self._guard:
            lock = self._locks.get(path)
            if lock is None:
                lockfile = self.root / "locks" / (hashlib.sha256(path.encode()).hexdigest() + ".lock")
                lockfile.parent.mkdir(exist_ok=True)
                lock = self._locks[path] = FileLock(str(lockfile))
            return lock

    def _versions(self, path):
        f = self._node(path) / _VERSIONS
        try:
            return json.loads(f.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return []
        except ValueError:
            raise IntegrityError(f"version index for {path} is corrupt") from None

    def _check_namespace(self, path):
        node = self._node(path)
        if node.is_dir() and any(p.is_dir() for p in node.iterdir()):
            raise ConflictError(f"{path} is an existing namespace", code="namespace_conflict")
        parts = path[1:].split("/")
        for i in range(1, len(parts)):
            parent = "/" + "/".join(parts[:i])
            if (self._node(parent) / _VERSIONS).exists():
                raise ConflictError(f"{parent} is an object, not a namespace", code="namespace_conflict")

    def put_object(self, path, data, declared_checksum=None, content_type=None, md5=None):
        """Store bytes (or a binary file object) at ``path``.

        Re-putting content already stored at ``path`` returns that version.
        """
        check_path(path)
        stream = io.BytesIO(data) if isinstance(data, (bytes, bytearray, memoryview)) else data
        sha, h5, length = hashlib.sha256(), hashlib.md5(), 0
        fd, tmp = tempfile.mkstemp(dir=self.root / "objects", prefix=".upload-")
        try:
            with os.fdopen(fd, "wb") as out:
                for chunk in iter(lambda: stream.read(_CHUNK), b""):
                    sha.update(chunk)
                    h5.update(chunk)
                    length += len(chunk)
                    out.write(chunk)
                out.flush()
                os.fsync(out.fileno())
            checksum = sha.hexdigest()
            if declared_checksum is not None and declared_checksum.lower() != checksum:
                raise ChecksumMismatchError(
                    f"declared sha256 {declared_checksum} does not match computed {checksum}")
            if md5 is not None and md5.lower() != h5.hexdigest():
                raise ChecksumMismatchError(f"declared md5 {md5} does not match content")
            with self._path_lock(path):
                self._check_namespace(path)
                versions = self._versions(path)
                for v in versions:
                    if v["checksum"] == checksum:
                        os.unlink(tmp)
                        return StoredObject(**v)
                blob = self._blob(checksum)
                if blob.exists():
                    os.unlink(tmp)
                else:
                    blob.parent.mkdir(exist_ok=True)
                    os.chmod(tmp, 0o444)
                    os.replace(tmp, blob)
                obj = StoredObject(path, checksum[:16], checksum, length,
                                   content_type or "application/octet-stream",
                                   utcnow().isoformat(), h5.hexdigest())
                node = self._node(path)
                node.mkdir(parents=True, exist_ok=True)
                _atomic_write(node / _VERSIONS, json.dumps(versions + [obj.to_dict()], indent=1).encode())
                return obj
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def head_object(self, path, version_id=None):
        check_path(path)
        versions = self._versions(path)
        if not versions:
            raise NotFoundError(f"no object at {path}", code="object_not_found")
        if version_id is None:
            return StoredObject(**versions[-1])
        for v in versions:
            if v["version_id"] == version_id:
                return StoredObject(**v)
        raise NotFoundError(f"no version {version_id} of {path}", code="version_not_found")

    def get_object(self, path, version_id=None):
        """Return ``(bytes, StoredObject)`` after verifying the digest."""
        obj = self.head_object(path, version_id)
        try:
            data = self._blob(obj.checksum).read_bytes()
        except FileNotFoundError:
            raise IntegrityError(f"blob for {obj.versioned_path} is missing") from None
        self.reads += 1
        if len(data) != obj.length or hashlib.sha256(data).hexdigest() != obj.checksum:
            raise IntegrityError(f"stored bytes for {obj.versioned_path} fail verification")
        return data, obj

    def copy_to(self, path, dest, version_id=None):
        """Stream an object into file ``dest``, verifying as it copies."""
        obj = self.head_object(path, version_id)
        h, n = hashlib.sha256(), 0
        dest = Path(dest)
        tmp = dest.with_name(dest.name + ".part")
        dest.parent.mkdir(parents=True, exist_ok=True)
        try:
            src = open(self._blob(obj.checksum), "rb")
        except FileNotFoundError:
            raise IntegrityError(f"blob for {obj.versioned_path} is missing") from None
        with src, open(tmp, "wb") as out:
            for chunk in iter(lambda: src.read(_CHUNK), b""):
                h.update(chunk)
                n += len(chunk)
                out.write(chunk)
        self.reads += 1
        if n != obj.length or h.hexdigest() != obj.checksum:
            tmp.unlink()
            raise IntegrityError(f"stored bytes for {obj.versioned_path} fail verification")
        os.replace(tmp, dest)
        return obj

    def list_namespace(self, prefix="/"):
        """Object paths under ``prefix``, sorted."""
        base = self._node(prefix.rstrip("/") or "/")
        if not base.is_dir():
            return []
        found = []
        for dirpath, _, files in os.walk(base):
            if _VERSIONS in files:
                rel = Path(dirpath).relative_to(self.root / "paths")
                found.append("/" + rel.as_posix())
        return sorted(found)

    def versions(self, path):
        check_path(path)
        return [StoredObject(**v) for v in self._versions(path)]
