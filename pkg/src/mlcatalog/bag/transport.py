"""URL access for bag retrieval and asset fetches, with transfer counters."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import urllib.parse
from collections import Counter
from pathlib import Path

from ..errors import CatalogError, IntegrityError, NotFoundError
from ..objectstore import split_version


class Transport:
    """Resolves ``<base_url>/store/...`` against a local object store and
    ``http(s)://`` / ``file://`` URLs directly.

    ``stats["reads"]`` counts every remote or object-store read; callers add
    finer-grained counters (``asset_fetches``, ``bag_reads``, ``exports``).
    """

    def __init__(self, store=None, base_url="local:", http_client=None):
        self.store = store
        self.base_url = base_url.rstrip("/")
        self.http = http_client
        self.stats = Counter()

    def reset(self):
        self.stats.clear()

    def _local_path(self, url):
        prefix = self.base_url + "/store"
        if self.store is not None and url.startswith(prefix + "/"):
            return urllib.parse.unquote(url[len(prefix):])
        return None

    def _client(self):
        if self.http is None:
            import httpx
            self.http = httpx.Client(timeout=60.0, follow_redirects=True)
        return self.http

    def read(self, url):
        self.stats["reads"] += 1
        path = self._local_path(url)
        if path is not None:
            obj_path, version = split_version(path)
            return self.store.get_object(obj_path, version)[0]
        if url.startswith("file://"):
            try:
                return Path(urllib.parse.unquote(url[7:])).read_bytes()
            except FileNotFoundError:
                raise NotFoundError(f"{url} not found", code="fetch_failed") from None
        if url.startswith(("http://", "https://")):
            r = self._client().get(url)
            if r.status_code == 404:
                raise NotFoundError(f"{url} not found", code="fetch_failed")
            if r.status_code >= 400:
                raise CatalogError(f"GET {url} failed with {r.status_code}", code="fetch_failed")
            return r.content
        raise CatalogError(f"no transport for URL {url!r}", code="unsupported_url")

    def fetch_to(self, url, dest, checksum=None, length=None):
        """Download ``url`` into ``dest``, verifying length and SHA-256."""
        dest = Path(dest)
        dest.parent.mkdir(parents=True, exist_ok=True)
        tmp = dest.with_name(dest.name + ".part")
        path = self._local_path(url)
        if path is not None:
            self.stats["reads"] += 1
            obj_path, version = split_version(path)
            self.store.copy_to(obj_path, tmp, version)
        else:
            tmp.write_bytes(self.read(url))
        size = tmp.stat().st_size
        if length is not None and length >= 0 and size != length:
            tmp.unlink()
            raise IntegrityError(f"{url}: got {size} bytes, expected {length}")
        if checksum is not None:
            h = hashlib.sha256()
            with open(tmp, "rb") as f:
                for chunk in iter(lambda: f.read(1 << 20), b""):
                    h.update(chunk)
            if h.hexdigest() != checksum:
                tmp.unlink()
                raise IntegrityError(f"{url}: checksum mismatch")
        os.replace(tmp, dest)

    def list(self, url):
        """Relative file paths under a namespace URL (ends with ``/``)."""
        path = self._local_path(url)
        if path is not None:
            base = path.rstrip("/")
            return [p[len(base) + 1:] for p in self.store.list_namespace(base)]
        if url.startswith("file://"):
            root = Path(urllib.parse.unquote(url[7:]))
            return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())
        if url.startswith(("http://", "https://")):
            return json.loads(self.read(url.rstrip("/") + "/"))
        raise CatalogError(f"no transport for URL {url!r}", code="unsupported_url")

    def download_tree(self, url, dest):
        """Copy every file under a namespace URL into directory ``dest``."""
        dest = Path(dest)
        base = url.rstrip("/") + "/"
        for rel in self.list(url):
            target = dest / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(self.read(base + urllib.parse.quote(rel)))
            self.stats["bag_reads"] += 1


def copy_tree(src, dest):
    shutil.copytree(src, dest, dirs_exist_ok=True)
