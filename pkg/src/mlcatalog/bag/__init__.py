"""BagIt packaging, minids and the checksum-keyed dataset cache."""

from .bagit import BagManifestEntry, FetchEntry, ValidationReport, bag_checksum, validate_bag
from .cache import (MaterializedDataset, fetch_into_cache, materialize_bag, prepare_bag, publish_bag,
                    resolve_dataset, verify_cached)
from .export import BagDescriptor, export_bag
from .localindex import LocalIndex, build_local_index, dataset_table
from .minid import Minid, register_minid, resolve_minid
from .transport import Transport

__all__ = [
    "BagManifestEntry", "FetchEntry", "ValidationReport", "bag_checksum", "validate_bag",
    "MaterializedDataset", "fetch_into_cache", "materialize_bag", "prepare_bag", "publish_bag", "resolve_dataset",
    "verify_cached", "BagDescriptor", "export_bag", "LocalIndex", "build_local_index",
    "dataset_table", "Minid", "register_minid", "resolve_minid", "Transport",
]
