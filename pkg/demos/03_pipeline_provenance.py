"""
A two-stage pipeline and its lineage
====================================

Execution E1 annotates images and writes crops; the crops are split into
train/validation/test datasets; execution E2 trains a model on them.  The
model's upstream lineage is printed as Graphviz dot.
"""

import argparse
import csv
import hashlib
import json
import tempfile
from pathlib import Path

from mlcatalog.api import MLCatalog
from mlcatalog.assets import upload_asset
from mlcatalog.execution import ExecutionConfig

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--root", help="where to create the catalog (default: a temp dir)")
parser.add_argument("--dot", help="write the lineage graph here instead of stdout")
args = parser.parse_args()
root = Path(args.root or tempfile.mkdtemp(prefix="mlcatalog-demo-"))

ml = MLCatalog.create(root / "catalog", cache_dir=root / "cache")
for table in ("Image", "Crop", "Model"):
    ml.define_table(table, kind="asset")
ml.define_table("Label", kind="vocabulary", curie_prefix="LBL")
ml.vocab.add_term("Label", "optic disc", synonyms=["OD"])
ml.features.create_feature("Image", "Annotation", ["Label:term_ref(Label)", "Confidence:float"])

images = [upload_asset(ml.catalog, "Image", f"image {i}".encode() * 50, f"img{i:02d}.png")
          for i in range(12)]
raw, _ = ml.datasets.create_dataset("raw images")
raw_version = ml.datasets.add_members(raw, images)


def workflow(name):
    # stand-in for the checksum of a real script under version control
    return ml.executions.register_workflow(name, f"https://example.org/pipeline.git#{name}.py",
                                           checksum=hashlib.sha256(name.encode()).hexdigest())


# stage one: annotate and crop
e1 = ml.executions.execution_begin(ExecutionConfig(
    workflow("crop"), [{"rid": raw, "version": str(raw_version)}]), root / "runs" / "e1")
with open(e1.feature_dir("Image", "Annotation") / "values.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["Image", "Label", "Confidence"])
    for rid in images:
        [src] = (e1.datasets[raw] / "data" / "assets" / "Image" / rid).iterdir()
        (e1.output_dir("Crop") / f"crop-{rid}.png").write_bytes(src.read_bytes()[:64])
        w.writerow([rid, "OD", 0.9])
ml.executions.execution_end(e1)
crops = sorted(a for a, t, _ in ml.executions.links(e1.execution, "output") if t == "Crop")

# rebuild datasets from the crops
split, _ = ml.datasets.create_dataset("crop splits", execution=e1.execution)
children = []
for name, part in (("training", crops[:8]), ("validation", crops[8:10]), ("testing", crops[10:])):
    rid, _ = ml.datasets.create_dataset(f"{name} crops", [name], execution=e1.execution)
    ml.datasets.add_members(rid, part)
    children.append(rid)
split_version = ml.datasets.add_members(split, children)
print("overlap between splits:", ml.datasets.check_disjoint(children).overlapping)

# stage two: train
e2 = ml.executions.execution_begin(ExecutionConfig(
    workflow("train"), [{"rid": split, "version": str(split_version)}],
    parameters={"epochs": 5, "lr": 0.001}), root / "runs" / "e2")
(e2.output_dir("Model") / "model.json").write_text(json.dumps({"epochs": e2.parameters["epochs"]}))
ml.executions.execution_end(e2)
[model] = [a for a, t, _ in ml.executions.links(e2.execution, "output") if t == "Model"]

graph = ml.lineage.lineage(model, "upstream")
kinds = {}
for node in graph.nodes:
    kinds[node.kind] = kinds.get(node.kind, 0) + 1
print(f"model {model}: {len(graph.nodes)} upstream nodes", kinds)
if args.dot:
    Path(args.dot).write_text(graph.to_dot())
else:
    print(graph.to_dot())
