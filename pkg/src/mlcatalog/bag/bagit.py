"""BagIt 1.0 reading, writing and validation (SHA-256 manifests only)."""

from __future__ import annotations

import hashlib
import os
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidBagError
from ..objectstore import sha256_file

BAGIT_TXT = b"BagIt-Version: 1.0\nTag-File-Character-Encoding: UTF-8\n"
MANIFEST = "manifest-sha256.txt"
TAGMANIFEST = "tagmanifest-sha256.txt"
FETCH = "fetch.txt"
BAG_INFO = "bag-info.txt"
TAG_FILES = ("bagit.txt", BAG_INFO, FETCH, MANIFEST)


@dataclass(frozen=True)
class BagManifestEntry:
    checksum: str
    path: str


@dataclass(frozen=True)
class FetchEntry:
    url: str
    length: int
    path: str


def normalize_path(path):
    path = unicodedata.normalize("NFC", path.replace("\\", "/"))
    parts = path.split("/")
    if path.startswith("/") or any(p in ("", ".", "..") for p in parts):
        raise ValueError(f"unsafe payload path {path!r}")
    return path


def encode_path(path):
    return path.replace("%", "%25").replace("\r", "%0D").replace("\n", "%0A")


def decode_path(path):
    return path.replace("%0A", "\n").replace("%0D", "\r").replace("%25", "%")


def manifest_bytes(entries):
    lines = sorted((e.path, e.checksum) for e in entries)
    return "".join(f"{c}  {encode_path(p)}\n" for p, c in lines).encode("utf-8")


def fetch_bytes(entries):
    lines = sorted((e.path, e.url, e.length) for e in entries)
    return "".join(f"{u}\t{n}\t{encode_path(p)}\n" for p, u, n in lines).encode("utf-8")


def bag_info_bytes(info):
    return "".join(f"{k}: {info[k]}\n" for k in sorted(info)).encode("utf-8")


def parse_manifest(text):
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        checksum, sep, path = line.partition("  ")
        if not sep:
            checksum, _, path = line.partition(" ")
        entries.append(BagManifestEntry(checksum.strip().lower(), decode_path(path)))
    return entries


def parse_fetch(text):
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        url, length, path = line.split("\t") if "\t" in line else line.split(None, 2)
        entries.append(FetchEntry(url, int(length) if length != "-" else -1, decode_path(path)))
    return entries


def parse_bag_info(text):
    info = {}
    for line in text.splitlines():
        if ":" in line:
            k, _, v = line.partition(":")
            info[k.strip()] = v.strip()
    return info


def write_bag(dest, payload, fetch, info):
    """Write tag files into ``dest`` (payload files already in place).

    ``payload`` holds manifest entries for every payload file, fetched or not.
    Returns the SHA-256 of the tag manifest, i.e. the bag checksum.
    """
    dest = Path(dest)
    tags = {
        "bagit.txt": BAGIT_TXT,
        BAG_INFO: bag_info_bytes(info),
        FETCH: fetch_bytes(fetch),
        MANIFEST: manifest_bytes(payload),
    }
    for name, data in tags.items():
        (dest / name).write_bytes(data)
    tagmanifest = manifest_bytes(
        BagManifestEntry(hashlib.sha256(data).hexdigest(), name) for name, data in tags.items())
    (dest / TAGMANIFEST).write_bytes(tagmanifest)
    return hashlib.sha256(tagmanifest).hexdigest()


def bag_checksum(bag_dir):
    return sha256_file(Path(bag_dir) / TAGMANIFEST)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_bag`; ``failures`` maps path to reasons."""

    bag: str
    full: bool
    failures: dict = field(default_factory=dict)

    def fail(self, path, reason):
        self.failures.setdefault(path, []).append(reason)

    @property
    def ok(self):
        return not self.failures

    @property
    def failing_paths(self):
        return sorted(self.failures)

    def to_dict(self):
        return {"bag": self.bag, "full": self.full, "ok": self.ok,
                "failures": {p: self.failures[p] for p in self.failing_paths}}


def _read_text(path):
    return path.read_text(encoding="utf-8")


def validate_bag(bag_dir, full=False):
    """Check a bag.  Tag-level checks always; ``full`` also digests payload."""
    bag = Path(bag_dir)
    report = ValidationReport(str(bag), full)
    decl = bag / "bagit.txt"
    if not decl.is_file():
        raise InvalidBagError(f"{bag} has no bagit.txt declaration")
    info = parse_bag_info(_read_text(decl))
    if info.get("BagIt-Version") != "1.0":
        report.fail("bagit.txt", "unsupported or missing BagIt-Version")
    for name in (MANIFEST, TAGMANIFEST):
        if not (bag / name).is_file():
            report.fail(name, "missing")
    if (bag / TAGMANIFEST).is_file():
        for e in parse_manifest(_read_text(bag / TAGMANIFEST)):
            f = bag / e.path
            if not f.is_file():
                report.fail(e.path, "missing")
            elif sha256_file(f) != e.checksum:
                report.fail(e.path, "checksum mismatch")
    if not full or not (bag / MANIFEST).is_file():
        return report

    manifest = {e.path: e.checksum for e in parse_manifest(_read_text(bag / MANIFEST))}
    fetch = parse_fetch(_read_text(bag / FETCH)) if (bag / FETCH).is_file() else []
    lengths = {e.path: e.length for e in fetch}
    for e in fetch:
        if e.path not in manifest:
            report.fail(e.path, "fetch entry not in payload manifest")
    total = 0
    for path, checksum in sorted(manifest.items()):
        f = bag / path
        if not f.is_file():
            report.fail(path, "missing" + (" (not fetched)" if path in lengths else ""))
            continue
        size = f.stat().st_size
        total += size
        if path in lengths and lengths[path] >= 0 and lengths[path] != size:
            report.fail(path, f"length {size} != declared {lengths[path]}")
        elif sha256_file(f) != checksum:
            report.fail(path, "checksum mismatch")
    data = bag / "data"
    if data.is_dir():
        for dirpath, _, files in os.walk(data):
            for name in files:
                rel = (Path(dirpath) / name).relative_to(bag).as_posix()
                if unicodedata.normalize("NFC", rel) not in manifest:
                    report.fail(rel, "not in payload manifest")
    if (bag / BAG_INFO).is_file():
        oxum = parse_bag_info(_read_text(bag / BAG_INFO)).get("Payload-Oxum")
        if oxum and not report.failures:
            want = f"{total}.{len(manifest)}"
            if oxum != want:
                report.fail(BAG_INFO, f"Payload-Oxum {oxum} != {want}")
    return report
