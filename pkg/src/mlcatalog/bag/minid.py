"""Minimal persistent identifiers for exported bags, kept in the catalog."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..errors import ConflictError, NotFoundError
from ..rid import encode_base32


@dataclass(frozen=True)
class Minid:
    id: str
    locations: tuple = field(default=())
    checksum: str = ""
    length: int = 0
    title: str | None = None
    created: str | None = None
    dataset: str | None = None
    version: str | None = None

    @classmethod
    def from_row(cls, row):
        return cls(row["Identifier"], tuple(row["Locations"]), row["Checksum"], row["Length"],
                   row["Title"], row["RCT"], row["Dataset"], row["Version"])

    def to_dict(self):
        return {
            "id": self.id,
            "locations": list(self.locations),
            "checksum": self.checksum,
            "checksum_function": "sha256",
            "length": self.length,
            "title": self.title,
            "created": self.created,
            "dataset": self.dataset,
            "version": self.version,
        }


def _token(catalog, checksum, n):
    digest = hashlib.sha256(f"{catalog.rid_prefix}:{checksum}:{n}".encode()).digest()
    return encode_base32(int.from_bytes(digest[:8], "big"), 13)[-12:]


def register_minid(catalog, descriptor, location_url, title=None):
    """Register ``descriptor``'s bag and stamp the dataset version with it.

    Idempotent when the version already carries a minid for the same
    checksum; a different checksum is a conflict.
    """
    with catalog.transaction() as tx:
        rows = tx.query("Dataset_Version", {"Dataset": descriptor.dataset,
                                            "Version": descriptor.version})
        if not rows:
            raise NotFoundError(f"no version {descriptor.version} of {descriptor.dataset}",
                                code="unknown_version")
        vrow = rows[0]
        if vrow["Minid"]:
            existing = tx.query("Minid", {"Identifier": vrow["Minid"]})[0]
            if existing["Checksum"] != descriptor.bag_checksum:
                raise ConflictError(
                    f"{descriptor.dataset}@{descriptor.version} already has {vrow['Minid']} "
                    f"with a different checksum", code="minid_conflict")
            return Minid.from_row(existing)
        taken = {r["Identifier"] for r in tx.query("Minid")}
        n = len(taken)
        while True:
            ident = "minid:" + _token(catalog, descriptor.bag_checksum, n)
            if ident not in taken:
                break
            n += 1
        [rid] = tx.insert("Minid", [{
            "Identifier": ident,
            "Dataset": descriptor.dataset,
            "Version": descriptor.version,
            "Checksum": descriptor.bag_checksum,
            "Length": descriptor.length,
            "Title": title or f"Dataset {descriptor.dataset} version {descriptor.version}",
            "Locations": [location_url],
        }])
        tx.update("Dataset_Version", [(vrow["RID"], {"Minid": ident,
                                                     "Checksum": descriptor.bag_checksum})])
        _, row = tx.get(rid)
    return Minid.from_row(row)


def resolve_minid(catalog, ident):
    rows = catalog.query_entities("Minid", {"Identifier": ident})
    if not rows:
        raise NotFoundError(f"unknown identifier {ident}", code="id_not_found")
    return Minid.from_row(rows[0])
