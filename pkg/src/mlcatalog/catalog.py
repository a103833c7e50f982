"""Snapshot-isolated, append-only entity store.

Every committed write transaction gets the next snapshot id.  Each record
keeps a chain of versions with ``[start, end)`` validity intervals, so a read
"as of S" sees exactly the versions whose interval contains ``S``.  Commits are
persisted as one JSON file per snapshot under ``<root>/log/``; reopening a
catalog replays the log.
"""

from __future__ import annotations

import contextlib
import datetime
import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .errors import (
    CatalogError,
    ConflictError,
    DanglingReferenceError,
    IntegrityError,
    NotFoundError,
    SchemaVersionError,
    ValidationError,
)
from .rid import make_rid, rid_sort_key, valid_prefix

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SYSTEM_COLUMNS = ("RID", "RCT", "RMT")
SCALAR_KINDS = ("text", "integer", "float", "boolean", "timestamp", "text_list")
REF_KINDS = ("term_ref", "rid_ref", "asset_ref")
TABLE_KINDS = ("table", "vocabulary", "asset", "association")

_IDENT = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_TYPE = re.compile(r"^(\w+)(?:\(([\w*]+)\))?$")


def utcnow():
    return datetime.datetime.now(datetime.timezone.utc)


@dataclass(frozen=True)
class ColumnDef:
    name: str
    kind: str
    target: str | None = None
    nullable: bool = True

    def __post_init__(self):
        if self.kind in SCALAR_KINDS:
            if self.target is not None:
                raise ValidationError(f"column {self.name}: {self.kind} takes no target")
        elif self.kind in REF_KINDS:
            if not self.target:
                raise ValidationError(f"column {self.name}: {self.kind} needs a target table")
        else:
            raise ValidationError(f"column {self.name}: unknown value kind {self.kind!r}")

    @property
    def type(self):
        return f"{self.kind}({self.target})" if self.target else self.kind

    @classmethod
    def parse(cls, spec):
        """Parse ``name:kind[(target)][?]``; a trailing ``!`` marks it required.

        >>> ColumnDef.parse("subject:rid_ref(Subject)!")
        ColumnDef(name='subject', kind='rid_ref', target='Subject', nullable=False)
        """
        name, sep, type_ = spec.partition(":")
        if not sep:
            raise ValidationError(f"bad column spec {spec!r}, expected name:type")
        nullable = not type_.endswith("!")
        m = _TYPE.match(type_.rstrip("!"))
        if not m:
            raise ValidationError(f"bad column type {type_!r}")
        return cls(name.strip(), m.group(1), m.group(2), nullable)

    def to_dict(self):
        return {"name": self.name, "type": self.type, "nullable": self.nullable}

    @classmethod
    def from_dict(cls, d):
        m = _TYPE.match(d.get("type") or "")
        if not m or "name" not in d:
            raise ValidationError(f"bad column definition {d!r}")
        return cls(d["name"], m.group(1), m.group(2), d.get("nullable", True))

    def from_text(self, text):
        """Parse a CSV cell or query-string value into this column's kind."""
        if text is None or text == "":
            return None
        try:
            if self.kind == "integer":
                return int(text)
            if self.kind == "float":
                return float(text)
            if self.kind == "text_list":
                return json.loads(text)
        except ValueError:
            raise ValidationError(f"{self.name}: {text!r} is not a valid {self.kind}") from None
        if self.kind == "boolean":
            if text.lower() not in ("true", "false"):
                raise ValidationError(f"{self.name}: {text!r} is not a boolean")
            return text.lower() == "true"
        return text

    @classmethod
    def coerce(cls, spec):
        """Accept a ``ColumnDef``, its dict form, or a ``name:type`` string."""
        if isinstance(spec, ColumnDef):
            return spec
        if isinstance(spec, dict):
            return cls.from_dict(spec)
        if isinstance(spec, str):
            return cls.parse(spec)
        raise ValidationError(f"bad column definition {spec!r}")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple = ()
    schema_kind: str = "domain"
    kind: str = "table"
    curie_prefix: str | None = None
    annotations: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))

    def column(self, name):
        for c in self.columns:
            if c.name == name:
                return c
        raise NotFoundError(f"table {self.name} has no column {name!r}", code="unknown_column")

    @property
    def column_names(self):
        return [c.name for c in self.columns]

    def to_dict(self):
        d = {
            "name": self.name,
            "schema": self.schema_kind,
            "kind": self.kind,
            "columns": [c.to_dict() for c in self.columns],
        }
        if self.curie_prefix:
            d["curie_prefix"] = self.curie_prefix
        if self.annotations:
            d["annotations"] = self.annotations
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"],
            columns=tuple(ColumnDef.from_dict(c) for c in d.get("columns", ())),
            schema_kind=d.get("schema", "domain"),
            kind=d.get("kind", "table"),
            curie_prefix=d.get("curie_prefix"),
            annotations=d.get("annotations", {}),
        )


class _Version:
    __slots__ = ("start", "end", "values", "rct", "rmt")

    def __init__(self, start, values, rct, rmt):
        self.start = start
        self.end = None
        self.values = values
        self.rct = rct
        self.rmt = rmt

    def visible(self, snapshot):
        return self.start <= snapshot and (self.end is None or snapshot < self.end)


def _match(row, predicates):
    for col, op, val in predicates:
        have = row.get(col)
        if op == "=":
            ok = have == val
        elif op == "!=":
            ok = have != val
        elif op == "in":
            ok = have in val
        elif have is None:
            ok = False
        elif op == "<":
            ok = have < val
        elif op == "<=":
            ok = have <= val
        elif op == ">":
            ok = have > val
        elif op == ">=":
            ok = have >= val
        else:
            raise ValidationError(f"unknown filter operator {op!r}")
        if not ok:
            return False
    return True


def _normalize_filter(filter):
    if not filter:
        return []
    if isinstance(filter, dict):
        return [(k, "=", v) for k, v in filter.items()]
    return [tuple(p) if len(p) == 3 else (p[0], "=", p[1]) for p in filter]


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Transaction:
    """A batch of writes committed atomically as one snapshot.

    Reads through the transaction see its own pending writes.
    """

    def __init__(self, catalog, snapshot, time):
        self.catalog = catalog
        self.snapshot = snapshot
        self.time = time
        self.ops = []
        self._undo = []

    def _record(self, op, undo):
        self.ops.append(op)
        self._undo.append(undo)

    def rollback(self):
        while self._undo:
            self._undo.pop()()
        self.ops.clear()

    # -- reads ---------------------------------------------------------
    def query(self, table, filter=None):
        return self.catalog._query(table, filter, self.snapshot)

    def get(self, rid):
        return self.catalog._get(rid, self.snapshot)

    def table(self, name):
        return self.catalog.table(name, as_of=self.snapshot)

    def tables(self):
        return self.catalog.tables(as_of=self.snapshot)

    # -- writes --------------------------------------------------------
    def define_table(self, tdef):
        cat = self.catalog
        schema = cat._schema_at(self.snapshot)
        if not _IDENT.match(tdef.name):
            raise ValidationError(f"invalid table name {tdef.name!r}")
        if tdef.name in schema:
            raise ConflictError(f"table {tdef.name} already exists", code="duplicate_table")
        if tdef.kind not in TABLE_KINDS or tdef.schema_kind not in ("domain", "ml"):
            raise ValidationError(f"invalid table kind for {tdef.name}")
        seen = set()
        for c in tdef.columns:
            if c.name in SYSTEM_COLUMNS:
                raise ValidationError(f"column name {c.name} is reserved", code="reserved_column")
            if not _IDENT.match(c.name):
                raise ValidationError(f"invalid column name {c.name!r}")
            if c.name in seen:
                raise ConflictError(f"duplicate column {c.name} in {tdef.name}", code="duplicate_column")
            seen.add(c.name)
            if c.kind in REF_KINDS and c.target != "*":
                target = tdef if c.target == tdef.name else schema.get(c.target)
                if target is None:
                    raise DanglingReferenceError(
                        f"column {tdef.name}.{c.name} references unknown table {c.target}")
                want = {"term_ref": "vocabulary", "asset_ref": "asset"}.get(c.kind)
                if want and target.kind != want:
                    raise ValidationError(f"{c.type} must reference a {want} table")
        undo = cat._apply_define(tdef, self.snapshot)
        self._record({"op": "define_table", "table": tdef.to_dict()}, undo)
        return tdef.name

    def insert(self, table, rows):
        cat = self.catalog
        tdef = cat.table(table, as_of=self.snapshot)
        prepared = [cat._check_values(tdef, row, self.snapshot, full=True) for row in rows]
        rids = []
        for values in prepared:
            rid = cat._next_rid()
            undo = cat._apply_insert(table, rid, values, self.snapshot, self.time)
            self._record({"op": "insert", "table": table, "rid": rid, "values": values}, undo)
            rids.append(rid)
        return rids

    def update(self, table, updates):
        cat = self.catalog
        tdef = cat.table(table, as_of=self.snapshot)
        prepared = []
        for rid, values in updates:
            current = cat._live(table, rid, self.snapshot)
            if current is None:
                if rid in cat._rid_table:
                    raise ValidationError(f"record {rid} is not live", code="stale_rid")
                raise NotFoundError(f"unknown RID {rid} in {table}", code="unknown_rid")
            merged = dict(current.values)
            merged.update(cat._check_values(tdef, values, self.snapshot, full=False))
            cat._check_values(tdef, merged, self.snapshot, full=True)
            prepared.append((rid, merged))
        for rid, merged in prepared:
            undo = cat._apply_update(table, rid, merged, self.snapshot, self.time)
            self._record({"op": "update", "table": table, "rid": rid, "values": merged}, undo)

    def delete(self, table, rids):
        cat = self.catalog
        cat.table(table, as_of=self.snapshot)
        doomed = set(rids)
        for rid in rids:
            if cat._live(table, rid, self.snapshot) is None:
                raise NotFoundError(f"no live record {rid} in {table}", code="unknown_rid")
        for rid in rids:
            referrer = cat._inbound(rid, table, self.snapshot, ignore=doomed)
            if referrer:
                raise DanglingReferenceError(
                    f"cannot delete {rid}: referenced by {referrer[0]}.{referrer[1]} ({referrer[2]})",
                    code="inbound_reference")
        for rid in rids:
            undo = cat._apply_delete(table, rid, self.snapshot)
            self._record({"op": "delete", "table": table, "rid": rid}, undo)


class Catalog:
    """Handle on an on-disk catalog.  Use :func:`init_catalog` to obtain one."""

    def __init__(self, root, clock=None, _allow_empty=False):
        self.root = Path(root)
        self.clock = clock or utcnow
        self._lock = threading.RLock()
        self._writer = FileLock(str(self.root / "writer.lock"))
        self._versions = {}
        self._rid_table = {}
        self._schema = []
        self._times = []
        self._current = -1
        self._rid_counter = 0
        self.write_count = 0
        meta = self._read_meta()
        self.rid_prefix = meta["rid_prefix"]
        self.base_url = meta.get("base_url", "local:")
        self._refresh()
        if self._current < 0 and not _allow_empty:
            raise IntegrityError(f"catalog at {self.root} has no bootstrap snapshot")
        self._store = None

    # -- persistence ---------------------------------------------------
    def _read_meta(self):
        path = self.root / "catalog.meta"
        try:
            meta = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise NotFoundError(f"no catalog at {self.root}", code="no_catalog") from None
        except (ValueError, UnicodeDecodeError) as e:
            raise IntegrityError(f"catalog.meta is corrupt: {e}") from None
        if meta.get("format_version") != FORMAT_VERSION:
            raise SchemaVersionError(
                f"catalog format {meta.get('format_version')} is not supported (want {FORMAT_VERSION})")
        return meta

    def _write_meta(self):
        meta = {
            "format_version": FORMAT_VERSION,
            "rid_prefix": self.rid_prefix,
            "base_url": self.base_url,
            "current_snapshot": self._current,
        }
        _atomic_write(self.root / "catalog.meta", json.dumps(meta, indent=2).encode())

    def _log_path(self, snapshot):
        return self.root / "log" / f"{snapshot:012d}.json"

    def _refresh(self):
        """Replay commits written since this handle last looked (other processes)."""
        while True:
            path = self._log_path(self._current + 1)
            if not path.exists():
                break
            try:
                record = json.loads(path.read_text(encoding="utf-8"))
            except (ValueError, UnicodeDecodeError) as e:
                raise IntegrityError(f"log record {path.name} is corrupt: {e}") from None
            body = {k: record.get(k) for k in ("snapshot", "time", "rid_counter", "ops")}
            digest = hashlib.sha256(_canonical(body).encode()).hexdigest()
            if record.get("digest") != digest or record.get("snapshot") != self._current + 1:
                raise IntegrityError(f"log record {path.name} failed verification")
            self._replay(record)

    def _replay(self, record):
        s, t = record["snapshot"], record["time"]
        for op in record["ops"]:
            kind = op["op"]
            if kind == "define_table":
                self._apply_define(TableDef.from_dict(op["table"]), s)
            elif kind == "insert":
                self._apply_insert(op["table"], op["rid"], op["values"], s, t)
            elif kind == "update":
                self._apply_update(op["table"], op["rid"], op["values"], s, t)
            elif kind == "delete":
                self._apply_delete(op["table"], op["rid"], s)
            else:
                raise IntegrityError(f"unknown log operation {kind!r}")
        self._times.append(t)
        self._rid_counter = record["rid_counter"]
        self._current = s

    def _commit(self, tx):
        body = {"snapshot": tx.snapshot, "time": tx.time, "rid_counter": self._rid_counter,
                "ops": tx.ops}
        body["digest"] = hashlib.sha256(_canonical(body).encode()).hexdigest()
        (self.root / "log").mkdir(exist_ok=True)
        _atomic_write(self._log_path(tx.snapshot), _canonical(body).encode())
        self._times.append(tx.time)
        self._current = tx.snapshot
        self.write_count += 1
        self._write_meta()

    # -- transactions --------------------------------------------------
    @contextlib.contextmanager
    def transaction(self):
        """Serialize a write batch; commits one snapshot iff any op was issued."""
        with self._lock, self._writer:
            self._refresh()
            counter = self._rid_counter
            time = self.clock().isoformat()
            tx = Transaction(self, self._current + 1, time)
            try:
                yield tx
                if tx.ops:
                    self._commit(tx)
            except BaseException:
                tx.rollback()
                self._rid_counter = counter
                raise

    def _bootstrap(self, build):
        with self._lock, self._writer:
            tx = Transaction(self, 0, self.clock().isoformat())
            try:
                build(tx)
                self._commit(tx)
            except BaseException:
                tx.rollback()
                raise

    # -- in-memory state mutation (shared by live commits and replay) ----
    def _apply_define(self, tdef, snapshot):
        if self._schema and self._schema[-1][0] == snapshot:
            self._schema[-1][1][tdef.name] = tdef

            def undo():
                del self._schema[-1][1][tdef.name]
        else:
            base = dict(self._schema[-1][1]) if self._schema else {}
            base[tdef.name] = tdef
            self._schema.append((snapshot, base))

            def undo():
                self._schema.pop()
        created = tdef.name not in self._versions
        self._versions.setdefault(tdef.name, {})
        if created:
            inner = undo

            def undo():
                inner()
                self._versions.pop(tdef.name, None)
        return undo

    def _apply_insert(self, table, rid, values, snapshot, time):
        self._versions[table][rid] = [_Version(snapshot, values, time, time)]
        self._rid_table[rid] = table

        def undo():
            del self._versions[table][rid]
            del self._rid_table[rid]
        return undo

    def _apply_update(self, table, rid, values, snapshot, time):
        chain = self._versions[table][rid]
        last = chain[-1]
        if last.start == snapshot:
            old = (last.values, last.rmt)
            last.values, last.rmt = values, time

            def undo():
                last.values, last.rmt = old
        else:
            last.end = snapshot
            chain.append(_Version(snapshot, values, last.rct, time))

            def undo():
                chain.pop()
                last.end = None
        return undo

    def _apply_delete(self, table, rid, snapshot):
        last = self._versions[table][rid][-1]
        last.end = snapshot

        def undo():
            last.end = None
        return undo

    def _next_rid(self):
        self._rid_counter += 1
        return make_rid(self.rid_prefix, self._rid_counter)

    # -- validation ----------------------------------------------------
    def _check_values(self, tdef, row, snapshot, full):
        if not isinstance(row, dict):
            raise ValidationError(f"row for {tdef.name} must be a mapping")
        out = {}
        for key in row:
            if key in SYSTEM_COLUMNS:
                raise ValidationError(f"system column {key} is catalog-managed", code="reserved_column")
            tdef.column(key)
        for col in tdef.columns:
            if col.name not in row:
                if full and not col.nullable:
                    raise ValidationError(
                        f"{tdef.name}.{col.name} is required", code="missing_column")
                if full:
                    out[col.name] = None
                continue
            out[col.name] = self._check_value(tdef, col, row[col.name], snapshot)
        return out

    def _check_value(self, tdef, col, value, snapshot):
        where = f"{tdef.name}.{col.name}"
        if value is None:
            if not col.nullable:
                raise ValidationError(f"{where} may not be null", code="missing_column")
            return None
        kind = col.kind
        if kind == "text":
            if not isinstance(value, str):
                raise ValidationError(f"{where} expects text, got {value!r}")
        elif kind == "integer":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{where} expects an integer, got {value!r}")
        elif kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{where} expects a number, got {value!r}")
            value = float(value)
        elif kind == "boolean":
            if not isinstance(value, bool):
                raise ValidationError(f"{where} expects a boolean, got {value!r}")
        elif kind == "timestamp":
            if isinstance(value, datetime.datetime):
                value = value.isoformat()
            try:
                datetime.datetime.fromisoformat(value)
            except (TypeError, ValueError):
                raise ValidationError(f"{where} expects an ISO timestamp, got {value!r}") from None
        elif kind == "text_list":
            if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
                raise ValidationError(f"{where} expects a list of text")
            value = list(value)
        else:
            target = col.target
            if not isinstance(value, str) or value not in self._rid_table:
                raise DanglingReferenceError(f"{where}: {value!r} is not a known RID")
            actual = self._rid_table[value]
            if target != "*" and actual != target:
                raise DanglingReferenceError(f"{where}: {value} is a {actual} record, not {target}")
            if self._live(actual, value, snapshot) is None:
                raise DanglingReferenceError(f"{where}: {value} is not live")
        return value

    def _inbound(self, rid, table, snapshot, ignore=()):
        schema = self._schema_at(snapshot)
        for tdef in schema.values():
            refs = [c.name for c in tdef.columns
                    if c.kind in REF_KINDS and c.target in (table, "*")]
            if not refs:
                continue
            for other, chain in self._versions[tdef.name].items():
                if other in ignore:
                    continue
                v = chain[-1]
                if not v.visible(snapshot):
                    continue
                for c in refs:
                    if v.values.get(c) == rid:
                        return tdef.name, c, other
        return None

    # -- reads ---------------------------------------------------------
    def _schema_at(self, snapshot):
        found = {}
        for s, tables in self._schema:
            if s > snapshot:
                break
            found = tables
        return found

    def _live(self, table, rid, snapshot):
        chain = self._versions.get(table, {}).get(rid)
        if not chain:
            return None
        for v in reversed(chain):
            if v.visible(snapshot):
                return v
            if v.start <= snapshot:
                return None
        return None

    def _row(self, tdef, rid, v):
        row = {"RID": rid, "RCT": v.rct, "RMT": v.rmt}
        for c in tdef.columns:
            row[c.name] = v.values.get(c.name)
        return row

    def _query(self, table, filter, snapshot):
        tdef = self.table(table, as_of=snapshot)
        preds = _normalize_filter(filter)
        for col, _, _ in preds:
            if col not in SYSTEM_COLUMNS:
                tdef.column(col)
        rows = []
        for rid, chain in self._versions[table].items():
            v = self._live(table, rid, snapshot)
            if v is None:
                continue
            row = self._row(tdef, rid, v)
            if _match(row, preds):
                rows.append(row)
        rows.sort(key=lambda r: rid_sort_key(r["RID"]))
        return rows

    def _get(self, rid, snapshot):
        table = self._rid_table.get(rid)
        if table is None:
            raise NotFoundError(f"unknown RID {rid}", code="unknown_rid")
        v = self._live(table, rid, snapshot)
        if v is None:
            raise NotFoundError(f"{rid} is not live at snapshot {snapshot}", code="unknown_rid")
        return table, self._row(self.table(table, as_of=snapshot), rid, v)

    def _resolve_as_of(self, as_of):
        if as_of is None:
            return self._current
        if isinstance(as_of, bool) or not isinstance(as_of, int) or as_of < 0:
            raise ValidationError(f"invalid snapshot {as_of!r}")
        if as_of > self._current:
            raise ValidationError(
                f"snapshot {as_of} is in the future (current {self._current})", code="future_snapshot")
        return as_of

    # -- public API ----------------------------------------------------
    def current_snapshot(self):
        with self._lock:
            self._refresh()
            return self._current

    def snapshot_time(self, snapshot):
        with self._lock:
            return self._times[self._resolve_as_of(snapshot)]

    def table(self, name, as_of=None):
        with self._lock:
            if as_of is None or as_of <= self._current:
                as_of = self._resolve_as_of(as_of)
            tdef = self._schema_at(as_of).get(name)
            if tdef is None:
                raise NotFoundError(f"unknown table {name!r}", code="unknown_table")
            return tdef

    def tables(self, as_of=None, schema_kind=None, kind=None):
        with self._lock:
            if as_of is None or as_of <= self._current:
                as_of = self._resolve_as_of(as_of)
            return [t for t in self._schema_at(as_of).values()
                    if (schema_kind is None or t.schema_kind == schema_kind)
                    and (kind is None or t.kind == kind)]

    def has_table(self, name, as_of=None):
        try:
            self.table(name, as_of)
            return True
        except NotFoundError:
            return False

    def define_table(self, tdef):
        with self.transaction() as tx:
            return tx.define_table(tdef)

    def insert_entities(self, table, rows):
        with self.transaction() as tx:
            return tx.insert(table, list(rows))

    def update_entities(self, table, updates):
        with self.transaction() as tx:
            tx.update(table, list(updates))
            snapshot = tx.snapshot if tx.ops else self._current
        return snapshot

    def delete_entities(self, table, rids):
        with self.transaction() as tx:
            tx.delete(table, list(rids))
            snapshot = tx.snapshot if tx.ops else self._current
        return snapshot

    def query_entities(self, table, filter=None, as_of=None):
        with self._lock:
            self._refresh()
            return self._query(table, filter, self._resolve_as_of(as_of))

    def get_entity(self, rid, as_of=None):
        """Return ``(table, row)`` for a RID live at ``as_of``."""
        with self._lock:
            self._refresh()
            return self._get(rid, self._resolve_as_of(as_of))

    def table_of(self, rid):
        """Table a RID was assigned in, whether or not it is still live."""
        with self._lock:
            self._refresh()
            try:
                return self._rid_table[rid]
            except KeyError:
                raise NotFoundError(f"unknown RID {rid}", code="unknown_rid") from None

    def all_rids(self):
        with self._lock:
            return list(self._rid_table)

    @property
    def store(self):
        """The object store co-located with this catalog."""
        if self._store is None:
            from .objectstore import ObjectStore
            self._store = ObjectStore(self.root / "store")
        return self._store


def _atomic_write(path, data):
    path = Path(path)
    tmp = path.with_name(f".tmp-{os.getpid()}-{threading.get_ident()}-{path.name}")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    try:
        fd = os.open(path.parent, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def init_catalog(root, rid_prefix="1", base_url="local:", clock=None):
    """Create a catalog at ``root``, or open it if one already exists there."""
    root = Path(root)
    if root.exists() and not root.is_dir():
        raise ValidationError(f"{root} is not a directory", code="not_a_directory")
    if (root / "catalog.meta").exists():
        return Catalog(root, clock=clock)
    if (root / "log").exists():
        raise IntegrityError(f"{root} has a log but no catalog.meta")
    if not valid_prefix(rid_prefix):
        raise ValidationError(f"invalid RID prefix {rid_prefix!r}")
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "log").mkdir()
    except OSError as e:
        raise CatalogError(f"cannot create catalog at {root}: {e}", code="io_error") from None
    meta = {"format_version": FORMAT_VERSION, "rid_prefix": rid_prefix,
            "base_url": base_url.rstrip("/"), "current_snapshot": -1}
    _atomic_write(root / "catalog.meta", json.dumps(meta, indent=2).encode())
    from . import mlschema

    cat = Catalog(root, clock=clock, _allow_empty=True)
    cat._bootstrap(mlschema.bootstrap)
    logger.info("initialized catalog at %s", root)
    return cat


def open_catalog(root, clock=None):
    return Catalog(root, clock=clock)
