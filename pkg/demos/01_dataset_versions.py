"""
Nested datasets and their version history
=========================================

Builds a small catalog, nests a train and a test split under one parent,
then shows that edits to a child bump the parent too and that every old
version still lists exactly the members it had.
"""

import argparse
import tempfile
from pathlib import Path

from mlcatalog.api import MLCatalog

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--root", help="where to create the catalog (default: a temp dir)")
args = parser.parse_args()
root = Path(args.root or tempfile.mkdtemp(prefix="mlcatalog-demo-"))

ml = MLCatalog.create(root / "catalog", cache_dir=root / "cache")
ml.define_table("Subject", ["Name:text", "Age:integer"])
subjects = ml.catalog.insert_entities("Subject", [{"Name": f"s{i}", "Age": 40 + i} for i in range(6)])

# two splits under one parent
train, _ = ml.datasets.create_dataset("train split", ["training"])
test, _ = ml.datasets.create_dataset("test split", ["testing"])
parent, _ = ml.datasets.create_dataset("complete dataset")
ml.datasets.add_members(train, subjects[:4])
ml.datasets.add_members(test, subjects[4:])
ml.datasets.add_members(parent, [train, test])

# a correction to the test split: removing a member is a major change
ml.datasets.remove_members(test, [subjects[5]], description="drop mislabeled subject")

for rid, label in ((parent, "parent"), (train, "train"), (test, "test")):
    print(f"{label} {rid}")
    for v in ml.datasets.list_versions(rid):
        members = ml.datasets.dataset_members(rid, v.version, flatten=True)
        print(f"  {v.version}  snapshot {v.snapshot:>3}  {len(members)} members  {v.description}")

# the train split was untouched: siblings of a changed dataset keep their version
print("leakage between splits:", ml.datasets.check_disjoint([train, test]).overlapping or "none")
print("catalog at", root / "catalog")
