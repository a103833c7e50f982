"""Lifecycle-aware catalog for reproducible machine learning data."""

from .api import MLCatalog
from .catalog import Catalog, ColumnDef, TableDef, init_catalog, open_catalog
from .errors import CatalogError

__version__ = "0.1.0"

__all__ = ["MLCatalog", "Catalog", "ColumnDef", "TableDef", "init_catalog", "open_catalog",
           "CatalogError"]
