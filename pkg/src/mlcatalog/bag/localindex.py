"""SQLite index over the exported tables of a materialized bag.

The index file lives at the bag root, outside ``data/`` and outside every
manifest, so it can be deleted and rebuilt without touching bag integrity.
"""

from __future__ import annotations

import csv
import json
import os
import sqlite3
from pathlib import Path

from ..catalog import TableDef
from ..errors import NotFoundError, ValidationError

INDEX_NAME = "index.sqlite"
MARKER = "materialized.json"


_AFFINITY = {"integer": "INTEGER", "float": "REAL", "boolean": "INTEGER"}


def _quote(name):
    return '"' + name.replace('"', '""') + '"'


def _bag_schema(bag):
    """Table definitions shipped in the bag, by name; empty for older bags."""
    path = bag / "data" / "schema.json"
    if not path.is_file():
        return {}
    return {d["name"]: TableDef.from_dict(d) for d in json.loads(path.read_text("utf-8"))}


def _typed(col, text):
    value = col.from_text(text)
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, list):
        return text
    return value


class LocalIndex:
    def __init__(self, path):
        self.path = Path(path)
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)

    def tables(self):
        cur = self._conn.execute("SELECT name FROM _tables ORDER BY name")
        return [r[0] for r in cur]

    def columns(self, table):
        self._require(table)
        cur = self._conn.execute(f"SELECT * FROM {_quote(table)} LIMIT 0")
        return [d[0] for d in cur.description]

    def _require(self, table):
        if not self._conn.execute("SELECT 1 FROM _tables WHERE name = ?", (table,)).fetchone():
            raise NotFoundError(f"table {table} was not exported in this bag", code="unknown_table")

    def rows(self, table):
        self._require(table)
        cur = self._conn.execute(f"SELECT * FROM {_quote(table)} ORDER BY rowid")
        cols = [d[0] for d in cur.description]
        return [dict(zip(cols, r)) for r in cur]

    def count(self, table):
        self._require(table)
        return self._conn.execute(f"SELECT count(*) FROM {_quote(table)}").fetchone()[0]

    def query(self, sql, params=()):
        cur = self._conn.execute(sql, params)
        cols = [d[0] for d in cur.description]
        return [dict(zip(cols, r)) for r in cur]

    def close(self):
        self._conn.close()


def build_local_index(bag_dir):
    """(Re)build the index for a completed materialization and open it."""
    bag = Path(bag_dir)
    if not (bag / MARKER).is_file():
        raise ValidationError(f"{bag} is not a completed materialization", code="incomplete_bag")
    target = bag / INDEX_NAME
    tmp = bag / (INDEX_NAME + ".tmp")
    if tmp.exists():
        tmp.unlink()
    schema = _bag_schema(bag)
    conn = sqlite3.connect(str(tmp))
    try:
        conn.execute("CREATE TABLE _tables (name TEXT PRIMARY KEY, rows INTEGER)")
        for f in sorted((bag / "data" / "records").glob("*.csv")):
            with open(f, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                tdef = schema.get(f.stem)
                known = {c.name: c for c in tdef.columns} if tdef else {}
                cols = ", ".join(
                    f"{_quote(c)} {_AFFINITY.get(known[c].kind, 'TEXT') if c in known else 'TEXT'}"
                    for c in header)
                conn.execute(f"CREATE TABLE {_quote(f.stem)} ({cols})")
                marks = ", ".join("?" * len(header))
                rows = [[_typed(known[c], v) if c in known else v for c, v in zip(header, r)]
                        for r in reader]
                conn.executemany(f"INSERT INTO {_quote(f.stem)} VALUES ({marks})", rows)
            conn.execute("INSERT INTO _tables VALUES (?, ?)", (f.stem, len(rows)))
        conn.commit()
    finally:
        conn.close()
    os.replace(tmp, target)
    return LocalIndex(target)


def open_local_index(bag_dir):
    path = Path(bag_dir) / INDEX_NAME
    if not path.exists():
        return build_local_index(bag_dir)
    return LocalIndex(path)


def dataset_table(index, table):
    return index.rows(table)
