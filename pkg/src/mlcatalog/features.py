"""Features: typed values attached to domain records by an execution."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .catalog import ColumnDef, TableDef
from .errors import ConflictError, NotFoundError, ValidationError

RESERVED = ("RID", "RCT", "RMT", "Execution", "Feature_Name")


@dataclass(frozen=True)
class Feature:
    target: str
    name: str
    table: str
    value_columns: tuple

    @property
    def columns(self):
        return [c.name for c in self.value_columns]

    def to_dict(self):
        return {"target_table": self.target, "feature_name": self.name, "table": self.table,
                "value_columns": [c.to_dict() for c in self.value_columns]}

    @classmethod
    def from_row(cls, row, feature_name):
        cols = tuple(ColumnDef.from_dict(d) for d in json.loads(row["Value_Columns"]))
        return cls(row["Target_Table"], feature_name, row["Table_Name"], cols)


def feature_table_name(target, name):
    return f"Execution_{target}_{name}"


def _value_column(spec):
    col = ColumnDef.coerce(spec)
    # values are optional individually; the row as a whole is what is asserted
    return ColumnDef(col.name, col.kind, col.target, True)


class Features:
    def __init__(self, catalog, vocab):
        self.catalog = catalog
        self.vocab = vocab

    def _definitions(self, as_of=None):
        out = []
        for row in self.catalog.query_entities("Feature_Definition", as_of=as_of):
            out.append(Feature.from_row(row, self.vocab.term_name(row["Feature_Name"], as_of)))
        return out

    def create_feature(self, target, name, value_columns, description=None):
        """Create the association table holding values of feature ``name`` on ``target``."""
        tdef = self.catalog.table(target)
        if tdef.schema_kind != "domain" or tdef.kind not in ("table", "asset"):
            raise ValidationError(f"{target} is not a domain table", code="unknown_target")
        cols = tuple(_value_column(c) for c in value_columns)
        if not cols:
            raise ValidationError("a feature needs at least one value column")
        names = [c.name for c in cols]
        if len(set(names)) != len(names) or set(names) & set(RESERVED + (target,)):
            raise ValidationError(f"feature value columns {names} clash or reuse reserved names")
        if any(f.target == target and f.name == name for f in self._definitions()):
            raise ConflictError(f"feature {name} on {target} already exists", code="duplicate_feature")
        term = self.vocab.add_term("Feature_Name", name, description=description, exist_ok=True)
        table = feature_table_name(target, name)
        feature = Feature(target, name, table, cols)
        with self.catalog.transaction() as tx:
            tx.define_table(TableDef(table, (
                ColumnDef("Execution", "rid_ref", "Execution", False),
                ColumnDef(target, "rid_ref", target, False),
                ColumnDef("Feature_Name", "term_ref", "Feature_Name", False),
            ) + cols, kind="association"))
            tx.insert("Feature_Definition", [{
                "Target_Table": target,
                "Feature_Name": term.rid,
                "Table_Name": table,
                "Value_Columns": json.dumps([c.to_dict() for c in cols]),
            }])
        return feature

    def feature(self, target, name, as_of=None):
        for f in self._definitions(as_of):
            if f.target == target and f.name == name:
                return f
        raise NotFoundError(f"no feature {name} on {target}", code="unknown_feature")

    def list_features(self, target=None, as_of=None):
        return [f for f in self._definitions(as_of) if target is None or f.target == target]

    def _coerce(self, col, value):
        if value is None or value == "":
            return None
        if col.kind == "term_ref":
            return self.vocab.term_rid(col.target, value)
        if not isinstance(value, str):
            return value
        return col.from_text(value)

    def add_feature_values(self, execution, feature, records):
        """Insert feature values from ``execution``; the batch is atomic."""
        if isinstance(feature, tuple):
            feature = self.feature(*feature)
        records = list(records)
        if not records:
            return []
        term = self.vocab.term_rid("Feature_Name", feature.name)
        rows = []
        for rec in records:
            extra = set(rec) - set(feature.columns) - {feature.target, "target"}
            if extra:
                raise ValidationError(f"unknown feature columns {sorted(extra)}")
            target = rec.get(feature.target, rec.get("target"))
            if not target:
                raise ValidationError(f"feature record lacks a {feature.target} value")
            row = {"Execution": execution, feature.target: target, "Feature_Name": term}
            for col in feature.value_columns:
                try:
                    row[col.name] = self._coerce(col, rec.get(col.name))
                except ValueError as e:
                    raise ValidationError(f"{col.name}: {e}") from None
            if all(row[c] is None for c in feature.columns):
                raise ValidationError("a feature record needs at least one value")
            rows.append(row)
        with self.catalog.transaction() as tx:
            # the Execution column's referential check rejects unknown or dead executions
            return tx.insert(feature.table, rows)

    def feature_values(self, target, name, filter=None, as_of=None):
        feature = self.feature(target, name, as_of)
        return self.catalog.query_entities(feature.table, filter, as_of=as_of)

    def ingest_file(self, execution, feature, path):
        """Load a ``values.csv`` whose header is the value columns plus the target column."""
        with open(Path(path), newline="", encoding="utf-8") as fh:
            return self.add_feature_values(execution, feature, list(csv.DictReader(fh)))
