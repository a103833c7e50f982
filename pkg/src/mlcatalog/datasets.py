"""Nested, versioned datasets.

A membership change bumps the dataset and every dataset that (transitively)
contains it, all inside a single snapshot.  Each version record pins the
snapshot it was committed in, so historical membership is an as-of query.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

from .errors import ConflictError, CycleError, NotFoundError, ValidationError
from .rid import rid_sort_key

LEVELS = ("major", "minor", "patch")
_SEMVER = re.compile(r"^(\d+)\.(\d+)\.(\d+)$")


@dataclass(frozen=True, order=True)
class SemanticVersion:
    major: int = 0
    minor: int = 1
    patch: int = 0

    @classmethod
    def parse(cls, text):
        if isinstance(text, SemanticVersion):
            return text
        m = _SEMVER.match(str(text).strip())
        if not m:
            raise ValidationError(f"invalid version {text!r}, expected M.m.p")
        return cls(*map(int, m.groups()))

    def bump(self, level):
        if level == "major":
            return SemanticVersion(self.major + 1, 0, 0)
        if level == "minor":
            return SemanticVersion(self.major, self.minor + 1, 0)
        if level == "patch":
            return SemanticVersion(self.major, self.minor, self.patch + 1)
        raise ValidationError(f"unknown bump level {level!r}")

    def __str__(self):
        return f"{self.major}.{self.minor}.{self.patch}"


INITIAL_VERSION = SemanticVersion(0, 1, 0)


@dataclass(frozen=True)
class DatasetVersionRecord:
    rid: str
    dataset: str
    version: SemanticVersion
    snapshot: int
    execution: str | None = None
    minid: str | None = None
    bag_checksum: str | None = None
    description: str | None = None
    created: str | None = None

    @classmethod
    def from_row(cls, row):
        return cls(
            rid=row["RID"],
            dataset=row["Dataset"],
            version=SemanticVersion.parse(row["Version"]),
            snapshot=row["Snapshot"],
            execution=row["Execution"],
            minid=row["Minid"],
            bag_checksum=row["Checksum"],
            description=row["Description"],
            created=row["RCT"],
        )

    def to_dict(self):
        return {
            "RID": self.rid,
            "dataset": self.dataset,
            "version": str(self.version),
            "snapshot": self.snapshot,
            "execution": self.execution,
            "minid": self.minid,
            "bag_checksum": self.bag_checksum,
            "description": self.description,
        }


@dataclass
class DisjointReport:
    """Member RIDs found in more than one of the checked datasets."""

    overlaps: dict = field(default_factory=dict)

    @property
    def overlapping(self):
        return sorted(self.overlaps, key=rid_sort_key)

    def __bool__(self):
        return bool(self.overlaps)

    def __len__(self):
        return len(self.overlaps)


class Datasets:
    def __init__(self, catalog, vocab):
        self.catalog = catalog
        self.vocab = vocab

    # -- helpers running inside a transaction ----------------------------
    @staticmethod
    def _require(tx, dataset):
        if not tx.query("Dataset", {"RID": dataset}):
            raise NotFoundError(f"unknown dataset {dataset}", code="unknown_dataset")

    @staticmethod
    def _latest(tx, dataset):
        rows = tx.query("Dataset_Version", {"Dataset": dataset})
        if not rows:
            raise NotFoundError(f"dataset {dataset} has no versions", code="unknown_dataset")
        return max(SemanticVersion.parse(r["Version"]) for r in rows)

    @staticmethod
    def _edges(rows):
        children, parents = {}, {}
        for r in rows:
            if r["Member_Table"] == "Dataset":
                children.setdefault(r["Dataset"], []).append(r["Member"])
                parents.setdefault(r["Member"], []).append(r["Dataset"])
        return children, parents

    def _ancestors(self, tx, dataset):
        _, parents = self._edges(tx.query("Dataset_Member", {"Member_Table": "Dataset"}))
        seen, queue = set(), deque([dataset])
        while queue:
            for p in parents.get(queue.popleft(), ()):
                if p not in seen:
                    seen.add(p)
                    queue.append(p)
        return seen

    def _bump_all(self, tx, dataset, level, description, execution):
        """Bump ``dataset`` and each of its ancestors exactly once."""
        targets = [dataset] + sorted(self._ancestors(tx, dataset), key=rid_sort_key)
        new = {}
        for d in targets:
            new[d] = self._latest(tx, d).bump(level)
        note = description or f"{level} bump"
        rows = []
        for d in targets:
            desc = note if d == dataset else f"{note} (propagated from {dataset})"
            rows.append({"Dataset": d, "Version": str(new[d]), "Snapshot": tx.snapshot,
                         "Execution": execution, "Description": desc})
        tx.insert("Dataset_Version", rows)
        return new[dataset]

    def _path(self, tx, start, goal):
        """Containment path from ``start`` down to ``goal``, or None."""
        children, _ = self._edges(tx.query("Dataset_Member", {"Member_Table": "Dataset"}))
        prev, queue = {start: None}, deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                path = []
                while node is not None:
                    path.append(node)
                    node = prev[node]
                return path[::-1]
            for c in children.get(node, ()):
                if c not in prev:
                    prev[c] = node
                    queue.append(c)
        return None

    def _member_pairs(self, members):
        pairs = []
        for m in members:
            if isinstance(m, str):
                pairs.append((m, self.catalog.table_of(m)))
            else:
                rid, table = m
                pairs.append((rid, table or self.catalog.table_of(rid)))
        return pairs

    # -- operations --------------------------------------------------------
    def create_dataset(self, description, types=(), execution=None):
        if not description or not str(description).strip():
            raise ValidationError("dataset description must be non-empty")
        type_rids = [self.vocab.term_rid("Dataset_Type", t) for t in types]
        with self.catalog.transaction() as tx:
            [rid] = tx.insert("Dataset", [{"Description": description}])
            tx.insert("Dataset_Dataset_Type",
                      [{"Dataset": rid, "Dataset_Type": t} for t in dict.fromkeys(type_rids)])
            tx.insert("Dataset_Version", [{
                "Dataset": rid, "Version": str(INITIAL_VERSION), "Snapshot": tx.snapshot,
                "Execution": execution, "Description": "created"}])
        return rid, INITIAL_VERSION

    def list_datasets(self, as_of=None):
        return [r["RID"] for r in self.catalog.query_entities("Dataset", as_of=as_of)]

    def dataset_types(self, dataset, as_of=None):
        rows = self.catalog.query_entities("Dataset_Dataset_Type", {"Dataset": dataset}, as_of=as_of)
        return sorted(self.vocab.term_name(r["Dataset_Type"], as_of) for r in rows)

    def add_members(self, dataset, members, execution=None, description=None):
        pairs = self._member_pairs(members)
        with self.catalog.transaction() as tx:
            self._require(tx, dataset)
            present = {r["Member"] for r in tx.query("Dataset_Member", {"Dataset": dataset})}
            for rid, table in pairs:
                if rid in present:
                    raise ConflictError(f"{rid} is already a member of {dataset}",
                                        code="duplicate_member")
                actual, _ = tx.get(rid)
                if actual != table:
                    raise ValidationError(f"{rid} belongs to {actual}, not {table}")
                if table == "Dataset":
                    if rid == dataset:
                        raise CycleError(f"dataset {dataset} cannot contain itself: "
                                         f"{dataset} -> {dataset}")
                    path = self._path(tx, rid, dataset)
                    if path:
                        raise CycleError("adding {} to {} creates a cycle: {}".format(
                            rid, dataset, " -> ".join([dataset] + path)))
                tx.insert("Dataset_Member", [{"Dataset": dataset, "Member": rid, "Member_Table": table}])
                present.add(rid)
            if not pairs:
                return self._latest(tx, dataset)
            return self._bump_all(tx, dataset, "minor",
                                  description or f"added {len(pairs)} member(s)", execution)

    def remove_members(self, dataset, members, execution=None, description=None):
        rids = [m if isinstance(m, str) else m[0] for m in members]
        with self.catalog.transaction() as tx:
            self._require(tx, dataset)
            rows = {r["Member"]: r["RID"] for r in tx.query("Dataset_Member", {"Dataset": dataset})}
            missing = [r for r in rids if r not in rows]
            if missing:
                raise NotFoundError(f"{missing[0]} is not a member of {dataset}", code="not_a_member")
            if not rids:
                return self._latest(tx, dataset)
            tx.delete("Dataset_Member", [rows[r] for r in dict.fromkeys(rids)])
            return self._bump_all(tx, dataset, "major",
                                  description or f"removed {len(rids)} member(s)", execution)

    def increment_version(self, dataset, level, description=None, execution=None):
        if level not in LEVELS:
            raise ValidationError(f"level must be one of {LEVELS}, got {level!r}")
        with self.catalog.transaction() as tx:
            self._require(tx, dataset)
            return self._bump_all(tx, dataset, level, description, execution)

    def list_versions(self, dataset):
        rows = self.catalog.query_entities("Dataset_Version", {"Dataset": dataset})
        if not rows:
            raise NotFoundError(f"unknown dataset {dataset}", code="unknown_dataset")
        return sorted((DatasetVersionRecord.from_row(r) for r in rows), key=lambda v: v.version)

    def version_record(self, dataset, version=None):
        versions = self.list_versions(dataset)
        if version is None:
            return versions[-1]
        want = SemanticVersion.parse(version)
        for v in versions:
            if v.version == want:
                return v
        raise NotFoundError(f"dataset {dataset} has no version {want}", code="unknown_version")

    def version_by_rid(self, rid):
        _, row = self.catalog.get_entity(rid)
        return DatasetVersionRecord.from_row(row)

    def _members_at(self, dataset, snapshot):
        rows = self.catalog.query_entities("Dataset_Member", {"Dataset": dataset}, as_of=snapshot)
        return [(r["Member"], r["Member_Table"]) for r in rows]

    def dataset_members(self, dataset, version=None, flatten=False):
        """Members of ``dataset`` as of ``version`` (default latest).

        Nested datasets appear as their own RID; with ``flatten`` the whole
        containment closure is returned, nested dataset RIDs included.
        """
        snapshot = self.version_record(dataset, version).snapshot
        if not flatten:
            return sorted(self._members_at(dataset, snapshot), key=lambda m: rid_sort_key(m[0]))
        found, queue = {}, deque([dataset])
        while queue:
            for rid, table in self._members_at(queue.popleft(), snapshot):
                if rid not in found:
                    found[rid] = table
                    if table == "Dataset":
                        queue.append(rid)
        return sorted(found.items(), key=lambda m: rid_sort_key(m[0]))

    def dataset_children(self, dataset, as_of=None):
        rows = self.catalog.query_entities(
            "Dataset_Member", {"Dataset": dataset, "Member_Table": "Dataset"}, as_of=as_of)
        return sorted((r["Member"] for r in rows), key=rid_sort_key)

    def dataset_parents(self, dataset, as_of=None):
        rows = self.catalog.query_entities(
            "Dataset_Member", {"Member": dataset, "Member_Table": "Dataset"}, as_of=as_of)
        return sorted({r["Dataset"] for r in rows}, key=rid_sort_key)

    def check_disjoint(self, datasets, flatten=True):
        """Report member RIDs shared between any two of ``datasets``.

        Entries may be a dataset RID (latest version) or ``(rid, version)``.
        """
        seen = {}
        for entry in datasets:
            rid, version = (entry, None) if isinstance(entry, str) else entry
            for member, _ in self.dataset_members(rid, version, flatten=flatten):
                seen.setdefault(member, []).append(rid)
        return DisjointReport({m: ds for m, ds in seen.items() if len(set(ds)) > 1})
