"""Asset tables: file-backed rows whose standard columns the catalog manages."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import ColumnDef
from .errors import NotFoundError, ValidationError
from .mlschema import ASSET_COLUMNS, asset_def
from .objectstore import split_version

STANDARD = tuple(c.name for c in ASSET_COLUMNS)


@dataclass
class AssetTableDef:
    name: str
    columns: tuple = field(default=())
    schema_kind: str = "domain"

    def table_def(self):
        cols = tuple(ColumnDef.coerce(c) for c in self.columns)
        # restating a standard column exactly (e.g. from a dumped definition) is harmless
        cols = tuple(c for c in cols if c not in ASSET_COLUMNS)
        clash = [c.name for c in cols if c.name in STANDARD]
        if clash:
            raise ValidationError(f"asset table {self.name} may not redefine {', '.join(clash)}")
        return asset_def(self.name, cols, self.schema_kind)


def define_asset_table(catalog, adef):
    if isinstance(adef, str):
        adef = AssetTableDef(adef)
    catalog.define_table(adef.table_def())
    return adef.name


def object_path(table, filename):
    return f"/assets/{table}/{filename}"


def store_file(store, table, source, filename=None, content_type=None):
    """Put ``source`` (path or bytes) into the store; return asset column values."""
    if isinstance(source, (bytes, bytearray)):
        if not filename:
            raise ValidationError("filename is required when uploading bytes")
        data = bytes(source)
    else:
        source = Path(source)
        filename = filename or source.name
        data = source.read_bytes()
    md5 = hashlib.md5(data).hexdigest()
    obj = store.put_object(object_path(table, filename), data, content_type=content_type, md5=md5)
    return {
        "URL": obj.versioned_path,
        "Filename": filename,
        "Length": obj.length,
        "Checksum": obj.checksum,
        "MD5": md5,
    }


def upload_asset(catalog, table, source, filename=None, description=None, **extra):
    """Upload one file into asset table ``table``; return the new RID."""
    tdef = catalog.table(table)
    if tdef.kind != "asset":
        raise ValidationError(f"{table} is not an asset table", code="not_asset_table")
    row = store_file(catalog.store, table, source, filename)
    row["Description"] = description
    row.update(extra)
    return catalog.insert_entities(table, [row])[0]


def asset_row(catalog, rid, as_of=None):
    table, row = catalog.get_entity(rid, as_of=as_of)
    if catalog.table(table).kind != "asset":
        raise NotFoundError(f"{rid} is not an asset", code="not_asset")
    return table, row


def download_asset(catalog, rid, dest):
    """Copy the bytes of asset ``rid`` to ``dest`` (verified)."""
    _, row = asset_row(catalog, rid)
    path, version = split_version(row["URL"])
    catalog.store.copy_to(path, dest, version)
    return Path(dest)
