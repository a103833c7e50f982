"""Deterministic export of one dataset version into a BagIt directory."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import NotFoundError, ValidationError
from ..objectstore import split_version
from ..rid import rid_sort_key
from .bagit import BagManifestEntry, FetchEntry, normalize_path, write_bag

_FOLLOW_KINDS = ("vocabulary", "asset")
SCHEMA_PATH = "data/schema.json"


@dataclass
class BagDescriptor:
    dataset: str
    version: str
    snapshot: int
    bag_checksum: str
    payload: list = field(default_factory=list)
    fetch: list = field(default_factory=list)
    path: str | None = None
    length: int = 0
    tables: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "version": self.version,
            "snapshot": self.snapshot,
            "bag_checksum": self.bag_checksum,
            "length": self.length,
            "path": self.path,
            "tables": self.tables,
            "fetch": len(self.fetch),
        }


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value), ensure_ascii=False, separators=(",", ":"))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def table_csv(tdef, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    cols = ["RID"] + tdef.column_names
    w.writerow(cols)
    for row in sorted(rows, key=lambda r: rid_sort_key(r["RID"])):
        w.writerow([format_cell(row.get(c)) for c in cols])
    return buf.getvalue().encode("utf-8")


def asset_url(base_url, stored_url):
    """Object-store URL for an asset row's ``URL`` column value."""
    return f"{base_url.rstrip('/')}/store{stored_url}"


def collect_records(catalog, datasets, rec):
    """Rows to export for version record ``rec``, keyed by table."""
    dataset, snapshot = rec.dataset, rec.snapshot
    schema = {t.name: t for t in catalog.tables(as_of=snapshot)}
    members = datasets.dataset_members(dataset, rec.version, flatten=True)
    dataset_rids = {dataset} | {m for m, t in members if t == "Dataset"}
    wanted = {}
    for rid, table in members:
        wanted.setdefault(table, set()).add(rid)
    wanted.setdefault("Dataset", set()).update(dataset_rids)

    out = {}

    def rows_for(table, rids):
        return [r for r in catalog.query_entities(table, as_of=snapshot) if r["RID"] in rids]

    for table, rids in wanted.items():
        out[table] = {r["RID"]: r for r in rows_for(table, rids)}
    for assoc in ("Dataset_Member", "Dataset_Dataset_Type"):
        out[assoc] = {r["RID"]: r for r in catalog.query_entities(assoc, as_of=snapshot)
                      if r["Dataset"] in dataset_rids}
    for fdef in catalog.query_entities("Feature_Definition", as_of=snapshot):
        target, ftable = fdef["Target_Table"], fdef["Table_Name"]
        targets = wanted.get(target)
        if targets:
            rows = catalog.query_entities(ftable, [(target, "in", targets)], as_of=snapshot)
            if rows:
                out[ftable] = {r["RID"]: r for r in rows}

    # follow references into domain, vocabulary and asset tables until closed
    pending = list(out)
    while pending:
        table = pending.pop()
        tdef = schema[table]
        for col in tdef.columns:
            if col.kind not in ("rid_ref", "term_ref", "asset_ref"):
                continue
            for row in list(out[table].values()):
                ref = row.get(col.name)
                if not ref:
                    continue
                target = col.target if col.target != "*" else catalog.table_of(ref)
                tt = schema.get(target)
                if tt is None or not (tt.schema_kind == "domain" or tt.kind in _FOLLOW_KINDS):
                    continue
                bucket = out.setdefault(target, {})
                if ref not in bucket:
                    _, referenced = catalog.get_entity(ref, as_of=snapshot)
                    bucket[ref] = referenced
                    if target not in pending:
                        pending.append(target)
    return {t: list(rows.values()) for t, rows in out.items() if rows}, schema


def export_bag(catalog, datasets, dataset, version, dest_dir, base_url=None):
    """Write the bag for ``(dataset, version)`` into empty ``dest_dir``."""
    rec = datasets.version_record(dataset, version)
    dest = Path(dest_dir)
    if dest.exists() and any(dest.iterdir()):
        raise ValidationError(f"bag destination {dest} is not empty", code="dest_not_empty")
    base_url = base_url or catalog.base_url
    records, schema = collect_records(catalog, datasets, rec)

    (dest / "data" / "records").mkdir(parents=True, exist_ok=True)
    payload, fetch, sizes, tables = [], [], 0, {}
    # column types travel with the records so local copies stay typed
    types = [schema[t].to_dict() for t in sorted(records)]
    data = (json.dumps(types, sort_keys=True, indent=1) + "\n").encode("utf-8")
    (dest / SCHEMA_PATH).write_bytes(data)
    payload.append(BagManifestEntry(hashlib.sha256(data).hexdigest(), SCHEMA_PATH))
    sizes += len(data)
    for table in sorted(records):
        rows = records[table]
        data = table_csv(schema[table], rows)
        path = f"data/records/{table}.csv"
        (dest / path).write_bytes(data)
        payload.append(BagManifestEntry(hashlib.sha256(data).hexdigest(), path))
        sizes += len(data)
        tables[table] = len(rows)
        if schema[table].kind == "asset":
            for row in rows:
                _check_asset(catalog, table, row)
                path = normalize_path(f"data/assets/{table}/{row['RID']}/{row['Filename']}")
                payload.append(BagManifestEntry(row["Checksum"], path))
                fetch.append(FetchEntry(asset_url(base_url, row["URL"]), row["Length"], path))
                sizes += row["Length"]
    info = {
        "Dataset-RID": dataset,
        "Dataset-Version": str(rec.version),
        "Payload-Oxum": f"{sizes}.{len(payload)}",
        "Snapshot-Id": str(rec.snapshot),
    }
    checksum = write_bag(dest, payload, fetch, info)
    length = sum(p.stat().st_size for p in dest.rglob("*") if p.is_file())
    return BagDescriptor(dataset, str(rec.version), rec.snapshot, checksum,
                         sorted(payload, key=lambda e: e.path), sorted(fetch, key=lambda e: e.path),
                         str(dest), length, tables)


def _check_asset(catalog, table, row):
    path, version = split_version(row["URL"])
    try:
        obj = catalog.store.head_object(path, version)
    except (NotFoundError, ValidationError):
        raise NotFoundError(f"asset {row['RID']} in {table}: {row['URL']} is unreachable",
                            code="unreachable_asset") from None
    if obj.checksum != row["Checksum"]:
        raise NotFoundError(f"asset {row['RID']} checksum disagrees with the object store",
                            code="unreachable_asset")
