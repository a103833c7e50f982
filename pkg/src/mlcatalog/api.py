"""One handle bundling every service that operates on a catalog."""

from __future__ import annotations

import os
from pathlib import Path

from . import bag
from .assets import AssetTableDef, define_asset_table
from .catalog import ColumnDef, TableDef, init_catalog, open_catalog
from .datasets import Datasets
from .errors import ValidationError
from .execution import Executions
from .features import Features
from .provenance import Lineage
from .vocabulary import Vocabularies


def default_cache_dir():
    return Path(os.environ.get("DERIVA_CACHE") or Path.home() / ".cache" / "deriva-ml")


class MLCatalog:
    """Facade over a catalog: ``ml.vocab``, ``ml.datasets`` and friends."""

    def __init__(self, catalog, cache_dir=None, transport=None):
        self.catalog = catalog
        self.cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
        self.transport = transport or bag.Transport(catalog.store, catalog.base_url)
        self.vocab = Vocabularies(catalog)
        self.datasets = Datasets(catalog, self.vocab)
        self.features = Features(catalog, self.vocab)
        self.executions = Executions(self)
        self.lineage = Lineage(catalog, self.vocab)

    @classmethod
    def create(cls, root, cache_dir=None, **kwargs):
        return cls(init_catalog(root, **kwargs), cache_dir=cache_dir)

    @classmethod
    def open(cls, root, cache_dir=None, clock=None):
        return cls(open_catalog(root, clock=clock), cache_dir=cache_dir)

    @property
    def store(self):
        return self.catalog.store

    # bags
    def export_bag(self, dataset, version, dest_dir):
        return bag.export_bag(self.catalog, self.datasets, dataset, version, dest_dir)

    def validate_bag(self, bag_dir, full=False):
        return bag.validate_bag(bag_dir, full=full)

    def publish_dataset(self, dataset, version=None, title=None):
        """Export, publish and register a minid unless the version has one."""
        rec = self.datasets.version_record(dataset, version)
        if rec.minid:
            return bag.resolve_minid(self.catalog, rec.minid)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        return bag.prepare_bag(self.catalog, self.datasets, dataset, rec.version,
                               self.cache_dir, self.transport, title)

    def register_minid(self, descriptor, location_url, title=None):
        return bag.register_minid(self.catalog, descriptor, location_url, title)

    def resolve_minid(self, ident):
        return bag.resolve_minid(self.catalog, ident)

    def materialize_bag(self, location, dest_dir, expected_checksum=None):
        return bag.materialize_bag(location, dest_dir, self.transport, expected_checksum)

    def resolve_dataset(self, dataset, version=None, cache_dir=None, verify="tags"):
        return bag.resolve_dataset(self.catalog, self.datasets, dataset, version,
                                   cache_dir or self.cache_dir, self.transport, verify)

    # schema
    def define_table(self, name, columns=(), kind="table", curie_prefix=None, schema_kind="domain"):
        """Define a plain, asset or vocabulary table and return its ``TableDef``.

        Columns may be ``ColumnDef`` objects, their dict form or ``name:type`` strings.
        """
        cols = tuple(ColumnDef.coerce(c) for c in columns)
        if kind == "vocabulary":
            if cols:
                raise ValidationError("vocabulary tables have a fixed column set")
            self.vocab.create_vocabulary(name, curie_prefix, schema_kind)
        elif kind == "asset":
            define_asset_table(self.catalog, AssetTableDef(name, cols, schema_kind))
        elif kind == "table":
            self.catalog.define_table(TableDef(name, cols, schema_kind=schema_kind))
        else:
            raise ValidationError(f"cannot define tables of kind {kind!r} directly")
        return self.catalog.table(name)
