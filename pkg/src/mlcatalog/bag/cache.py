"""Materialization and two-stage, checksum-keyed cache resolution."""

from __future__ import annotations

import datetime
import json
import logging
import shutil
import tempfile
import urllib.parse
from dataclasses import dataclass
from pathlib import Path

from filelock import FileLock

from ..errors import IntegrityError
from ..objectstore import sha256_file
from .bagit import FETCH, MANIFEST, TAGMANIFEST, parse_fetch, parse_manifest, validate_bag
from .export import export_bag
from .localindex import MARKER, open_local_index
from .minid import register_minid, resolve_minid
from .transport import Transport

logger = logging.getLogger(__name__)


def _is_url(location):
    s = str(location)
    return "://" in s or s.startswith("local:")


def publish_bag(store, bag_dir, checksum, base_url):
    """Upload an unmaterialized bag into the object store; return its location URL."""
    bag = Path(bag_dir)
    for f in sorted(p for p in bag.rglob("*") if p.is_file()):
        rel = f.relative_to(bag).as_posix()
        store.put_object(f"/bags/{checksum}/{rel}", f.read_bytes(), content_type="text/plain")
    return f"{base_url.rstrip('/')}/store/bags/{checksum}/"


def _fetch_bag_files(location, dest, transport, expected_checksum):
    """Bring tag files and non-fetched payload into ``dest``."""
    loc = str(location)
    if not _is_url(loc):
        src = Path(loc)
        if src.resolve() != dest.resolve():
            for f in src.rglob("*"):
                rel = f.relative_to(src)
                if f.is_file() and rel.name not in (MARKER,) and not rel.name.startswith("index.sqlite"):
                    (dest / rel).parent.mkdir(parents=True, exist_ok=True)
                    shutil.copy2(f, dest / rel)
        return
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=dest.parent))
    try:
        transport.download_tree(loc, staging)
        if expected_checksum and (not (staging / TAGMANIFEST).is_file()
                                  or sha256_file(staging / TAGMANIFEST) != expected_checksum):
            raise IntegrityError(f"bag retrieved from {loc} does not match checksum {expected_checksum}")
        shutil.copytree(staging, dest, dirs_exist_ok=True)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def materialize_bag(bag_location, dest_dir, transport=None, expected_checksum=None):
    """Retrieve a bag and download every fetch entry, verifying as it goes.

    A completion marker is written only after full validation passes.
    Already-verified payload files are skipped, so a failed run can resume.
    """
    transport = transport or Transport()
    dest = Path(dest_dir)
    if (dest / MARKER).is_file():
        return dest
    dest.mkdir(parents=True, exist_ok=True)
    if not (dest / TAGMANIFEST).is_file():
        _fetch_bag_files(bag_location, dest, transport, expected_checksum)
    if expected_checksum and sha256_file(dest / TAGMANIFEST) != expected_checksum:
        raise IntegrityError(f"bag at {dest} does not match checksum {expected_checksum}")
    report = validate_bag(dest, full=False)
    if not report.ok:
        raise IntegrityError(f"tag files failed validation: {', '.join(report.failing_paths)}")

    manifest = {e.path: e.checksum for e in parse_manifest((dest / MANIFEST).read_text("utf-8"))}
    fetch = parse_fetch((dest / FETCH).read_text("utf-8")) if (dest / FETCH).exists() else []
    for entry in fetch:
        target = dest / entry.path
        want = manifest.get(entry.path)
        if want is None:
            raise IntegrityError(f"fetch entry {entry.path} is not in the payload manifest")
        if target.is_file() and sha256_file(target) == want:
            continue
        transport.fetch_to(entry.url, target, checksum=want, length=entry.length)
        transport.stats["asset_fetches"] += 1
    report = validate_bag(dest, full=True)
    if not report.ok:
        raise IntegrityError(f"materialized bag failed validation: {', '.join(report.failing_paths)}")
    marker = {"checksum": sha256_file(dest / TAGMANIFEST),
              "completed": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    (dest / MARKER).write_text(json.dumps(marker, indent=2))
    return dest


def verify_cached(bag_dir, checksum, full=False):
    """Spot-check a completion-marked copy; raise IntegrityError if stale."""
    bag = Path(bag_dir)
    if not (bag / TAGMANIFEST).is_file() or sha256_file(bag / TAGMANIFEST) != checksum:
        raise IntegrityError(f"cached bag {bag} does not match checksum {checksum}")
    report = validate_bag(bag, full=full)
    if not report.ok:
        raise IntegrityError(f"cached bag {bag} failed validation: {', '.join(report.failing_paths)}")
    if full:
        return
    manifest = parse_manifest((bag / MANIFEST).read_text("utf-8"))
    lengths = {e.path: e.length for e in parse_fetch((bag / FETCH).read_text("utf-8"))}
    for e in manifest:
        f = bag / e.path
        if not f.is_file():
            raise IntegrityError(f"cached bag {bag} is missing {e.path}")
        if e.path in lengths:
            if f.stat().st_size != lengths[e.path]:
                raise IntegrityError(f"cached bag {bag}: {e.path} has the wrong length")
        elif sha256_file(f) != e.checksum:
            raise IntegrityError(f"cached bag {bag}: {e.path} fails its checksum")


@dataclass
class MaterializedDataset:
    """A dataset version available locally in the cache."""

    dataset: str
    version: str
    minid: str
    checksum: str
    path: Path

    def index(self):
        return open_local_index(self.path)

    def tables(self):
        return self.index().tables()

    def table(self, name):
        return self.index().rows(name)

    def asset_path(self, table, rid, filename):
        return self.path / "data" / "assets" / table / rid / filename

    def validate(self, full=True):
        return validate_bag(self.path, full=full)


def prepare_bag(catalog, datasets, dataset, version, workdir, transport, title=None):
    """Stage two: export, publish and register a minid for a version lacking one."""
    tmp = Path(tempfile.mkdtemp(prefix=".export-", dir=workdir))
    try:
        descriptor = export_bag(catalog, datasets, dataset, version, tmp / "bag")
        transport.stats["exports"] += 1
        location = publish_bag(catalog.store, tmp / "bag", descriptor.bag_checksum, catalog.base_url)
        return register_minid(catalog, descriptor, location, title)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def resolve_dataset(catalog, datasets, dataset, version=None, cache_dir=None, transport=None,
                    verify="tags"):
    """Make a dataset version available under ``cache_dir/<bag checksum>``.

    With a registered minid the cache is consulted by checksum and, on a miss,
    the bag is retrieved through the minid location.  Without one the bag is
    exported and registered first.
    """
    transport = transport or Transport(catalog.store, catalog.base_url)
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    rec = datasets.version_record(dataset, version)
    if not rec.minid:
        safe = urllib.parse.quote(f"{dataset}@{rec.version}", safe="")
        with FileLock(str(cache / f".prepare-{safe}.lock")):
            rec = datasets.version_record(dataset, rec.version)
            if not rec.minid:
                prepare_bag(catalog, datasets, dataset, rec.version, cache, transport)
                rec = datasets.version_record(dataset, rec.version)
    minid = resolve_minid(catalog, rec.minid)
    return fetch_into_cache(minid, dataset, str(rec.version), cache, transport, verify)


def fetch_into_cache(minid, dataset, version, cache_dir, transport, verify="tags"):
    """Materialize a registered bag under ``cache_dir/<checksum>`` unless already there."""
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / minid.checksum
    handle = MaterializedDataset(dataset, version, minid.id, minid.checksum, target)
    if (target / MARKER).is_file():
        verify_cached(target, minid.checksum, full=(verify == "full"))
        return handle
    with FileLock(str(cache / f"{minid.checksum}.lock")):
        if (target / MARKER).is_file():
            verify_cached(target, minid.checksum, full=(verify == "full"))
            return handle
        last = None
        for location in minid.locations:
            try:
                materialize_bag(location, target, transport, expected_checksum=minid.checksum)
                return handle
            except IntegrityError:
                raise
            except Exception as e:  # try the next location
                logger.warning("could not materialize %s from %s: %s", minid.id, location, e)
                last = e
        raise last
