"""Numbered acceptance criteria, one test each.

Every test carries ``@pytest.mark.acceptance(n, title)``; the conftest hook
prints one PASS/FAIL line per criterion at the end of the run.
"""

import contextlib
import csv
import hashlib
import io
import json
import random
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from mlcatalog.api import MLCatalog
from mlcatalog.assets import upload_asset
from mlcatalog.bag.bagit import parse_manifest, validate_bag
from mlcatalog.cli import main
from mlcatalog.dump import export_catalog
from mlcatalog.execution import ExecutionConfig
from mlcatalog.service import create_app

LEVELS = ("major", "minor", "patch")


def image_bytes(i, tag=""):
    return b"\x89PNG\r\n\x1a\n" + f"synthetic-image-{i:03d}{tag}".encode() * 8


def bump(version, level):
    major, minor, patch = version
    if level == "major":
        return (major + 1, 0, 0)
    if level == "minor":
        return (major, minor + 1, 0)
    return (major, minor, patch + 1)


def as_tuple(v):
    return (v.major, v.minor, v.patch)


def ancestors_oracle(node, parents):
    """Depth-first search up the ``parents`` map; excludes ``node`` itself."""
    found, stack = set(), [node]
    while stack:
        for p in parents.get(stack.pop(), ()):
            if p not in found:
                found.add(p)
                stack.append(p)
    return found


# -- 1 ---------------------------------------------------------------------------
@pytest.mark.acceptance(1, "semver propagation over 100 random DAGs")
def test_semver_propagation(tmp_path):
    rng = random.Random(20240601)
    start = time.perf_counter()
    checked = 0
    for trial in range(100):
        ml = MLCatalog.create(tmp_path / f"c{trial}", cache_dir=tmp_path / "cache")
        n = rng.randint(1, 20)
        nodes = [ml.datasets.create_dataset(f"d{i}")[0] for i in range(n)]
        parents = {}
        # edges only run from lower to higher index, so the graph stays acyclic
        for j in range(1, n):
            for i in rng.sample(range(j), rng.randint(0, min(3, j))):
                parents.setdefault(nodes[j], set()).add(nodes[i])
        children = {}
        for child, ps in parents.items():
            for p in ps:
                children.setdefault(p, []).append(child)
        for p, cs in children.items():
            ml.datasets.add_members(p, cs)

        for _ in range(3):
            target, level = rng.choice(nodes), rng.choice(LEVELS)
            before = {d: ml.datasets.list_versions(d) for d in nodes}
            snap = ml.catalog.current_snapshot()
            ml.datasets.increment_version(target, level)
            assert ml.catalog.current_snapshot() == snap + 1
            expected = ancestors_oracle(target, parents) | {target}
            for d in nodes:
                old = {v.rid for v in before[d]}
                new = [v for v in ml.datasets.list_versions(d) if v.rid not in old]
                if d not in expected:
                    assert new == [], (trial, d)
                    continue
                assert len(new) == 1, (trial, d)
                assert new[0].snapshot == snap + 1
                latest = max(as_tuple(v.version) for v in before[d])
                assert as_tuple(new[0].version) == bump(latest, level)
            checked += 1
    elapsed = time.perf_counter() - start
    print(f"criterion 1: {checked} bumps over 100 DAGs in {elapsed:.2f}s")
    assert elapsed < 10


# -- 2 ---------------------------------------------------------------------------
class MembershipOracle:
    """Keeps a full copy of every dataset's membership after each snapshot."""

    def __init__(self):
        self.members = {}
        self.versions = {}
        self.copies = {}

    def parents(self):
        out = {}
        for d, ms in self.members.items():
            for rid, table in ms:
                if table == "Dataset":
                    out.setdefault(rid, set()).add(d)
        return out

    def record(self, snapshot, changed=None, level=None):
        if changed is not None:
            for d in ancestors_oracle(changed, self.parents()) | {changed}:
                latest = max(v for v, _ in self.versions[d])
                self.versions[d].append((bump(latest, level), snapshot))
        self.copies[snapshot] = {d: set(ms) for d, ms in self.members.items()}

    def closure(self, d, snapshot):
        state, found, stack = self.copies[snapshot], set(), [d]
        while stack:
            for rid, table in state[stack.pop()]:
                if (rid, table) not in found:
                    found.add((rid, table))
                    if table == "Dataset":
                        stack.append(rid)
        return found


def run_workload(ml, rng, n_ops):
    oracle = MembershipOracle()
    ml.define_table("Subject", ["Name:text"])
    pool = ml.catalog.insert_entities("Subject", [{"Name": f"s{i}"} for i in range(12)])
    for _ in range(n_ops):
        datasets = list(oracle.members)
        ops = ["create"] if len(datasets) < 2 else ["create", "records", "nest", "remove", "bump"]
        op = rng.choice(ops) if len(datasets) < 6 else rng.choice(ops[1:])
        if op == "create":
            rid, _ = ml.datasets.create_dataset(f"ds{len(datasets)}")
            oracle.members[rid] = set()
            oracle.versions[rid] = [((0, 1, 0), ml.catalog.current_snapshot())]
            oracle.record(ml.catalog.current_snapshot())
            continue
        d = rng.choice(datasets)
        present = oracle.members[d]
        if op == "records":
            free = [r for r in pool if (r, "Subject") not in present]
            if not free:
                op = "bump"
            else:
                picked = rng.sample(free, rng.randint(1, min(4, len(free))))
                ml.datasets.add_members(d, picked)
                present |= {(r, "Subject") for r in picked}
                level = "minor"
        if op == "nest":
            blocked = ancestors_oracle(d, oracle.parents()) | {d}
            free = [c for c in datasets if c not in blocked and (c, "Dataset") not in present]
            if not free:
                op = "bump"
            else:
                child = rng.choice(free)
                ml.datasets.add_members(d, [child])
                present.add((child, "Dataset"))
                level = "minor"
        if op == "remove":
            if not present:
                op = "bump"
            else:
                gone = rng.sample(sorted(present), rng.randint(1, min(3, len(present))))
                ml.datasets.remove_members(d, [rid for rid, _ in gone])
                present -= set(gone)
                level = "major"
        if op == "bump":
            level = rng.choice(LEVELS)
            ml.datasets.increment_version(d, level)
        oracle.record(ml.catalog.current_snapshot(), d, level)
    return oracle


@pytest.mark.acceptance(2, "snapshot fidelity against a full-copy oracle")
def test_snapshot_fidelity(tmp_path):
    rng = random.Random(7)
    start = time.perf_counter()
    compared = 0
    for w in range(40):
        ml = MLCatalog.create(tmp_path / f"w{w}", cache_dir=tmp_path / "cache")
        oracle = run_workload(ml, rng, n_ops=18)
        assert ml.catalog.current_snapshot() <= 20
        for d, versions in oracle.versions.items():
            lib = [(as_tuple(v.version), v.snapshot) for v in ml.datasets.list_versions(d)]
            assert lib == sorted(versions)
            for version, snap in versions:
                label = "{}.{}.{}".format(*version)
                got = ml.datasets.dataset_members(d, label)
                assert sorted(got) == sorted(oracle.copies[snap][d])
                flat = ml.datasets.dataset_members(d, label, flatten=True)
                assert sorted(flat) == sorted(oracle.closure(d, snap))
                compared += 2
    elapsed = time.perf_counter() - start
    print(f"criterion 2: {compared} member listings matched the oracle in {elapsed:.2f}s")
    assert elapsed < 30


# -- 3 / 4 -------------------------------------------------------------------------
def build_bag_scenario(root, cache):
    """Same operations every call; uses the real clock."""
    ml = MLCatalog.create(root, cache_dir=cache)
    ml.define_table("Subject", ["Name:text"])
    ml.define_table("Image", ["Subject:rid_ref(Subject)"], kind="asset")
    subjects = ml.catalog.insert_entities("Subject", [{"Name": f"subject {i}"} for i in range(4)])
    images = [upload_asset(ml.catalog, "Image", image_bytes(i), f"img{i:02d}.png",
                           Subject=subjects[i % 4]) for i in range(8)]
    held_out, _ = ml.datasets.create_dataset("held out", ["testing"])
    ml.datasets.add_members(held_out, images[6:])
    whole, _ = ml.datasets.create_dataset("everything", ["training"])
    ml.datasets.add_members(whole, subjects + images[:6] + [held_out])
    version = ml.datasets.increment_version(whole, "patch")
    return ml, whole, str(version)


def bag_files(bag):
    return {p.relative_to(bag).as_posix(): p.read_bytes() for p in sorted(bag.rglob("*")) if p.is_file()}


@pytest.mark.acceptance(3, "bag determinism and single-byte corruption detection")
def test_bag_determinism(tmp_path):
    exported = []
    for replay in ("a", "b"):
        ml, whole, version = build_bag_scenario(tmp_path / replay, tmp_path / f"cache-{replay}")
        desc = ml.export_bag(whole, version, tmp_path / f"bag-{replay}")
        again = ml.export_bag(whole, version, tmp_path / f"bag-{replay}-again")
        assert again.bag_checksum == desc.bag_checksum
        exported.append((ml, desc, tmp_path / f"bag-{replay}"))
    (ml_a, desc_a, bag_a), (_, desc_b, bag_b) = exported
    assert desc_a.bag_checksum == desc_b.bag_checksum
    files_a, files_b = bag_files(bag_a), bag_files(bag_b)
    for name in ("manifest-sha256.txt", "tagmanifest-sha256.txt", "fetch.txt", "bag-info.txt"):
        assert files_a[name] == files_b[name], name
    assert files_a == files_b

    full = tmp_path / "materialized"
    ml_a.materialize_bag(bag_a, full, expected_checksum=desc_a.bag_checksum)
    assert validate_bag(full, full=True).ok
    rng = random.Random(3)
    payload = [e.path for e in parse_manifest((full / "manifest-sha256.txt").read_text("utf-8"))]
    assert any(p.startswith("data/assets/") for p in payload)
    assert any(p.startswith("data/records/") for p in payload)
    for path in payload:
        f = full / path
        original = f.read_bytes()
        data = bytearray(original)
        data[rng.randrange(len(data))] ^= 0x20
        f.write_bytes(bytes(data))
        try:
            report = validate_bag(full, full=True)
            assert report.failing_paths == [path]
        finally:
            f.write_bytes(original)
    assert validate_bag(full, full=True).ok
    print(f"criterion 3: checksum {desc_a.bag_checksum[:12]} matched; "
          f"{len(payload)} single-byte corruptions each named their path")


@pytest.mark.acceptance(4, "two-stage resolution with exact fetch counts")
def test_two_stage_resolution(tmp_path):
    ml, whole, version = build_bag_scenario(tmp_path / "cat", tmp_path / "cache")
    members = ml.datasets.dataset_members(whole, version, flatten=True)
    n_assets = sum(1 for _, table in members if table == "Image")
    assert n_assets == 8
    t = ml.transport
    assert ml.datasets.version_record(whole, version).minid is None

    t.reset()
    first = ml.resolve_dataset(whole, version, cache_dir=tmp_path / "cache1")
    assert (t.stats["exports"], t.stats["asset_fetches"]) == (1, n_assets)
    minid = ml.datasets.version_record(whole, version).minid
    assert minid and ml.resolve_minid(minid).checksum == first.checksum

    t.reset()
    second = ml.resolve_dataset(whole, version, cache_dir=tmp_path / "cache1")
    assert (t.stats["exports"], t.stats["asset_fetches"]) == (0, 0)
    assert second.path == first.path

    # a separate handle on the same catalog, as another process would have
    other = MLCatalog.open(tmp_path / "cat", cache_dir=tmp_path / "cache2")
    other.transport.reset()
    third = other.resolve_dataset(whole, version)
    assert (other.transport.stats["exports"], other.transport.stats["asset_fetches"]) == (0, n_assets)
    assert third.checksum == first.checksum and third.validate(full=True).ok
    print(f"criterion 4: fetches {n_assets}/0/{n_assets}, exports 1/0/0")


# -- 5 ---------------------------------------------------------------------------
def checksum_of(text):
    return hashlib.sha256(text.encode()).hexdigest()


@pytest.mark.acceptance(5, "two-stage pipeline provenance chain and leakage check")
def test_provenance_chain(tmp_path):
    start = time.perf_counter()
    ml = MLCatalog.create(tmp_path / "cat", cache_dir=tmp_path / "cache")
    ml.define_table("Image", kind="asset")
    ml.define_table("Crop", kind="asset")
    ml.define_table("Model", kind="asset")
    ml.define_table("Label", kind="vocabulary", curie_prefix="LBL")
    for name in ("optic disc", "cup", "background"):
        ml.vocab.add_term("Label", name)
    ml.features.create_feature("Image", "Annotation", ["Label:term_ref(Label)", "Confidence:float"])
    images = [upload_asset(ml.catalog, "Image", image_bytes(i), f"fundus{i:02d}.png")
              for i in range(30)]
    raw, _ = ml.datasets.create_dataset("raw fundus images")
    raw_version = str(ml.datasets.add_members(raw, images))

    w1 = ml.executions.register_workflow("annotate-and-crop", "https://example.org/pipe.git#crop.py",
                                         "Annotation", checksum=checksum_of("crop v1"))
    w2 = ml.executions.register_workflow("train-model", "https://example.org/pipe.git#train.py",
                                         "Training", checksum=checksum_of("train v1"))

    e1 = ml.executions.execution_begin(ExecutionConfig(
        w1, [{"rid": raw, "version": raw_version}], parameters={"crop": 64}), tmp_path / "e1")
    staged = e1.datasets[raw]
    values = e1.feature_dir("Image", "Annotation") / "values.csv"
    with open(values, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["Image", "Label", "Confidence"])
        w.writeheader()
        for i, rid in enumerate(images):
            [src] = (staged / "data" / "assets" / "Image" / rid).iterdir()
            w.writerow({"Image": rid, "Label": "optic disc" if i % 3 else "cup",
                        "Confidence": f"{0.5 + i / 100:.2f}"})
            (e1.output_dir("Crop") / f"crop_{rid}.png").write_bytes(src.read_bytes()[:40] + b"crop")
    rec1 = ml.executions.execution_end(e1)
    assert rec1.status == "completed"
    assert len(ml.features.feature_values("Image", "Annotation")) == 30
    crops = sorted(a for a, t, role in ml.executions.links(e1.execution, "output") if t == "Crop")
    assert len(crops) == 30

    # rebuild the datasets from E1's crops
    split, _ = ml.datasets.create_dataset("split", execution=e1.execution)
    parts = {}
    for name, rng_ in (("training", crops[:18]), ("validation", crops[18:24]), ("testing", crops[24:])):
        rid, _ = ml.datasets.create_dataset(f"{name} crops", [name], execution=e1.execution)
        ml.datasets.add_members(rid, rng_)
        parts[name] = rid
    split_version = str(ml.datasets.add_members(split, list(parts.values())))
    assert not ml.datasets.check_disjoint(list(parts.values()))
    leaky, _ = ml.datasets.create_dataset("leaky control")
    ml.datasets.add_members(leaky, [crops[0]])
    assert ml.datasets.check_disjoint([parts["testing"], leaky]).overlapping == []
    assert ml.datasets.check_disjoint([parts["training"], leaky]).overlapping == [crops[0]]

    e2 = ml.executions.execution_begin(ExecutionConfig(
        w2, [{"rid": split, "version": split_version}], parameters={"epochs": 3}), tmp_path / "e2")
    (e2.output_dir("Model") / "model.json").write_text(json.dumps({"weights": [0.1, 0.2]}))
    assert ml.executions.execution_end(e2).status == "completed"
    [model] = [a for a, t, _ in ml.executions.links(e2.execution, "output") if t == "Model"]

    graph = ml.lineage.lineage(model, "upstream")
    ids = set(graph.node_ids())
    split_rec = ml.datasets.version_record(split, split_version)
    assert {e2.execution, split_rec.rid, e1.execution, w1, w2} <= ids
    assert ml.datasets.version_record(raw, raw_version).rid in ids
    kinds = {n.rid: n.kind for n in graph.nodes}
    assert kinds[e1.execution] == kinds[e2.execution] == "execution"
    assert kinds[w1] == kinds[w2] == "workflow"
    elapsed = time.perf_counter() - start
    print(f"criterion 5: lineage of {model} holds {len(ids)} nodes; {elapsed:.2f}s")
    assert elapsed < 60


# -- 6 ---------------------------------------------------------------------------
@pytest.mark.acceptance(6, "scale smoke: 36 subsets, 142 executions")
def test_scale_smoke(tmp_path):
    start = time.perf_counter()
    rng = random.Random(142)
    ml = MLCatalog.create(tmp_path / "cat", cache_dir=tmp_path / "cache")
    ml.define_table("Subject", ["Name:text"])
    ml.define_table("Model", kind="asset")
    pool = ml.catalog.insert_entities("Subject", [{"Name": f"p{i}"} for i in range(120)])
    subsets = []
    for i in range(36):
        rid, _ = ml.datasets.create_dataset(f"subset {i}", ["training"])
        version = str(ml.datasets.add_members(rid, rng.sample(pool, 15)))
        subsets.append((rid, version))
    wf = ml.executions.register_workflow("train", "https://example.org/train.py",
                                         checksum=checksum_of("train"))
    expected = {}
    for k in range(142):
        rid, version = subsets[k % 36]
        handle = ml.executions.execution_begin(ExecutionConfig(
            wf, [{"rid": rid, "version": version}], parameters={"run": k, "seed": k * 7}),
            tmp_path / "runs" / str(k))
        members = sorted(p.name for p in (handle.datasets[rid] / "data").rglob("*.csv"))
        (handle.output_dir("Model") / "model.json").write_text(
            json.dumps({"run": k, "subset": rid, "inputs": members}))
        ml.executions.execution_end(handle)
        expected[handle.execution] = (k, ml.datasets.version_record(rid, version).rid)

    records = ml.executions.list_executions()
    assert len(records) == 142 == len(expected)
    outputs, checksums = [], set()
    for rec in records:
        k, version_rid = expected[rec.rid]
        assert rec.status == "completed" and rec.workflow == wf
        assert rec.parameters == {"run": k, "seed": k * 7}
        assert ml.executions.input_versions(rec.rid) == [version_rid]
        inputs = ml.executions.links(rec.rid, "input")
        assert [(a, t) for a, t, _ in inputs] == [(rec.config_asset, "Execution_Config")]
        [(model, table, _)] = ml.executions.links(rec.rid, "output")
        assert table == "Model"
        outputs.append(model)
        checksums.add(ml.catalog.get_entity(model)[1]["Checksum"])
    assert len(set(outputs)) == 142 and len(checksums) == 142
    elapsed = time.perf_counter() - start
    print(f"criterion 6: 36 subsets, 142 executions in {elapsed:.1f}s")
    assert elapsed < 300


# -- 7 ---------------------------------------------------------------------------
@pytest.mark.acceptance(7, "multi-rater Diagnosis feature: 13 x 10 = 130 rows")
def test_multi_rater_features(tmp_path):
    ml = MLCatalog.create(tmp_path / "cat", cache_dir=tmp_path / "cache")
    ml.define_table("Image", kind="asset")
    ml.define_table("Diagnosis_Grade", kind="vocabulary", curie_prefix="DG")
    grades = ["normal", "suspect", "glaucoma"]
    for g in grades:
        ml.vocab.add_term("Diagnosis_Grade", g)
    ml.features.create_feature("Image", "Diagnosis",
                               ["Grade:term_ref(Diagnosis_Grade)", "Comment:text"])
    images = [upload_asset(ml.catalog, "Image", image_bytes(i), f"eye{i}.png") for i in range(10)]
    wf = ml.executions.register_workflow("grade", "https://example.org/grading-form",
                                         checksum=checksum_of("form"))
    graded = {}
    raters = []
    for rater in range(13):
        h = ml.executions.execution_begin(ExecutionConfig(wf, parameters={"clinician": rater}),
                                          tmp_path / f"rater{rater}")
        records = []
        for i, img in enumerate(images):
            grade = grades[(rater + i) % 3]
            graded[(h.execution, img)] = grade
            records.append({"Image": img, "Grade": grade, "Comment": f"rater {rater}"})
        ml.features.add_feature_values(h.execution, ("Image", "Diagnosis"), records)
        ml.executions.execution_end(h)
        raters.append(h.execution)

    rows = ml.features.feature_values("Image", "Diagnosis")
    assert len(rows) == 130
    seen = set()
    for row in rows:
        assert ml.catalog.get_entity(row["Image"])[0] == "Image"
        assert ml.vocab.term_name(row["Feature_Name"]) == "Diagnosis"
        assert ml.catalog.get_entity(row["Feature_Name"])[0] == "Feature_Name"
        assert ml.catalog.get_entity(row["Execution"])[0] == "Execution"
        assert ml.catalog.get_entity(row["Grade"])[0] == "Diagnosis_Grade"
        assert ml.vocab.term_name(row["Grade"]) == graded[(row["Execution"], row["Image"])]
        seen.add((row["Execution"], row["Image"]))
    assert len(seen) == 130 and {e for e, _ in seen} == set(raters)
    print("criterion 7: 130 Diagnosis rows, each resolving target, name, execution and value")


# -- 8 ---------------------------------------------------------------------------
class LibraryDriver:
    def __init__(self, root, cache):
        self.ml = MLCatalog.create(root, cache_dir=cache)
        self.handles = {}

    def define_table(self, name, cols=(), kind="table", prefix=None):
        self.ml.define_table(name, cols, kind, curie_prefix=prefix)

    def vocab_add(self, vocab, term, synonyms=()):
        self.ml.vocab.add_term(vocab, term, synonyms=synonyms)

    def insert(self, table, rows):
        return self.ml.catalog.insert_entities(table, rows)

    def update(self, table, rows):
        self.ml.catalog.update_entities(table, [(r.pop("RID"), r) for r in rows])

    def delete(self, table, rids):
        self.ml.catalog.delete_entities(table, rids)

    def upload(self, table, path):
        return upload_asset(self.ml.catalog, table, path)

    def dataset_create(self, description, types=()):
        return self.ml.datasets.create_dataset(description, types)[0]

    def add_members(self, dataset, members):
        return str(self.ml.datasets.add_members(dataset, members))

    def remove_members(self, dataset, members):
        return str(self.ml.datasets.remove_members(dataset, members))

    def bump(self, dataset, level):
        return str(self.ml.datasets.increment_version(dataset, level))

    def workflow(self, name, url, checksum):
        return self.ml.executions.register_workflow(name, url, checksum=checksum)

    def feature_define(self, target, name, cols):
        self.ml.features.create_feature(target, name, cols)

    def exec_begin(self, config, root):
        handle = self.ml.executions.execution_begin(ExecutionConfig.from_dict(config), root)
        self.handles[handle.execution] = handle
        return handle.execution

    def feature_add(self, execution, target, name, records):
        self.ml.features.add_feature_values(execution, (target, name), records)

    def exec_end(self, execution):
        self.ml.executions.execution_end(self.handles[execution])

    def publish(self, dataset, version):
        self.ml.publish_dataset(dataset, version)

    def export(self):
        return export_catalog(self.ml.catalog)


class CliDriver:
    """Every operation is one in-process ``mlcatalog`` command line."""

    def __init__(self, root, cache):
        self.root, self.cache, self.roots = str(root), str(cache), {}
        assert main(["catalog", "init", self.root]) == 0

    def _run(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main(["--catalog", self.root, "--cache", self.cache, "--format", "json", *argv])
        assert code == 0, err.getvalue()
        text = out.getvalue().strip()
        return json.loads(text) if text else None

    def define_table(self, name, cols=(), kind="table", prefix=None):
        if kind == "vocabulary":
            self._run("vocab", "create", name, "--curie-prefix", prefix)
            return
        argv = ["schema", "define-table", name, "--kind", kind]
        for c in cols:
            argv += ["-c", c]
        self._run(*argv)

    def vocab_add(self, vocab, term, synonyms=()):
        argv = ["vocab", "add", vocab, term]
        for s in synonyms:
            argv += ["--synonym", s]
        self._run(*argv)

    def insert(self, table, rows):
        return [r["RID"] for r in self._run("entity", "insert", table, "--json", json.dumps(rows))]

    def update(self, table, rows):
        self._run("entity", "update", table, "--json", json.dumps(rows))

    def delete(self, table, rids):
        self._run("entity", "delete", table, *rids)

    def upload(self, table, path):
        [row] = self._run("asset", "upload", table, str(path))
        return row["RID"]

    def dataset_create(self, description, types=()):
        argv = ["dataset", "create", "--description", description]
        for t in types:
            argv += ["--type", t]
        return self._run(*argv)["RID"]

    def add_members(self, dataset, members):
        return self._run("dataset", "add-members", dataset, *members)

    def remove_members(self, dataset, members):
        return self._run("dataset", "remove-members", dataset, *members)

    def bump(self, dataset, level):
        return self._run("dataset", "bump", dataset, "--level", level)

    def workflow(self, name, url, checksum):
        return self._run("workflow", "register", name, url, "--checksum", checksum)["RID"]

    def feature_define(self, target, name, cols):
        argv = ["feature", "define", target, name]
        for c in cols:
            argv += ["-c", c]
        self._run(*argv)

    def exec_begin(self, config, root):
        cfg = Path(root).with_suffix(".json")
        cfg.write_text(json.dumps(config))
        handle = self._run("exec", "run", "--config", str(cfg), "--root", str(root))
        self.roots[handle["execution"]] = str(root)
        return handle["execution"]

    def feature_add(self, execution, target, name, records):
        self._run("feature", "add", target, name, "--execution", execution,
                  "--json", json.dumps(records))

    def exec_end(self, execution):
        self._run("exec", "finish", self.roots[execution])

    def publish(self, dataset, version):
        self._run("bag", "export", dataset, "--version", version, "--publish")

    def export(self):
        dest = Path(self.cache) / "export.json"
        self._run("catalog", "export", "-o", str(dest))
        return dest.read_bytes()


class HttpDriver:
    """Every operation is one or two requests against the service."""

    def __init__(self, root, cache):
        self.client = TestClient(create_app(MLCatalog.create(root, cache_dir=cache)))
        self.roots = {}

    def _call(self, method, path, **kw):
        r = self.client.request(method, path, **kw)
        assert r.status_code < 400, r.text
        return r.json()

    def define_table(self, name, cols=(), kind="table", prefix=None):
        if kind == "vocabulary":
            self._call("POST", "/vocab", json={"name": name, "curie_prefix": prefix})
            return
        self._call("POST", "/schema", json={"name": name, "columns": list(cols), "kind": kind})

    def vocab_add(self, vocab, term, synonyms=()):
        self._call("POST", f"/vocab/{vocab}", json={"name": term, "synonyms": list(synonyms)})

    def insert(self, table, rows):
        return [r["RID"] for r in self._call("POST", f"/entity/{table}", json=rows)]

    def update(self, table, rows):
        self._call("PUT", f"/entity/{table}", json=rows)

    def delete(self, table, rids):
        self._call("DELETE", f"/entity/{table}", params={"RID": rids})

    def upload(self, table, path):
        data = Path(path).read_bytes()
        md5 = hashlib.md5(data).hexdigest()
        obj = self._call("PUT", f"/store/assets/{table}/{Path(path).name}", content=data,
                         headers={"X-Checksum-MD5": md5})
        row = {"URL": f"{obj['path']}:{obj['version_id']}", "Filename": Path(path).name,
               "Length": obj["length"], "Checksum": obj["checksum"], "MD5": md5}
        return self.insert(table, [row])[0]

    def dataset_create(self, description, types=()):
        return self._call("POST", "/dataset", json={"description": description,
                                                    "types": list(types)})["RID"]

    def add_members(self, dataset, members):
        return self._call("POST", f"/dataset/{dataset}/members", json={"members": members})["version"]

    def remove_members(self, dataset, members):
        return self._call("DELETE", f"/dataset/{dataset}/members",
                          params={"member": members})["version"]

    def bump(self, dataset, level):
        return self._call("POST", f"/dataset/{dataset}/version", json={"level": level})["version"]

    def workflow(self, name, url, checksum):
        return self._call("POST", "/workflow", json={"name": name, "url": url,
                                                     "checksum": checksum})["RID"]

    def feature_define(self, target, name, cols):
        self._call("POST", "/feature", json={"target_table": target, "feature_name": name,
                                             "value_columns": list(cols)})

    def exec_begin(self, config, root):
        handle = self._call("POST", "/execution", json={"config": config, "exec_root": str(root)})
        self.roots[handle["execution"]] = handle["root"]
        return handle["execution"]

    def feature_add(self, execution, target, name, records):
        self._call("POST", f"/feature/{target}/{name}",
                   json={"execution": execution, "records": records})

    def exec_end(self, execution):
        self._call("POST", f"/execution/{execution}/finish", json={"root": self.roots[execution]})

    def publish(self, dataset, version):
        self._call("POST", "/id", json={"dataset": dataset, "version": version})

    def export(self):
        r = self.client.get("/export")
        assert r.status_code == 200
        return r.content


class Counted:
    """Counts the driver operations a session performs."""

    def __init__(self, driver):
        self.driver, self.ops = driver, 0

    def __getattr__(self, name):
        self.ops += 1
        return getattr(self.driver, name)


def scripted_session(driver, files, work):
    """The same session for every driver; returns the number of operations."""
    d = Counted(driver)
    d.define_table("Subject", ["Name:text", "Age:integer"])
    d.define_table("Image", ["Subject:rid_ref(Subject)", "Eye:text"], kind="asset")
    d.define_table("Diagnosis", kind="vocabulary", prefix="DX")
    d.vocab_add("Diagnosis", "normal")
    d.vocab_add("Diagnosis", "glaucoma", synonyms=["GL"])
    subjects = d.insert("Subject", [{"Name": "ana", "Age": 61}, {"Name": "bo", "Age": 47},
                                    {"Name": "cy", "Age": 70}])
    d.update("Subject", [{"RID": subjects[0], "Age": 62}])
    d.delete("Subject", [subjects[2]])
    img_a = d.upload("Image", files[0])
    img_b = d.upload("Image", files[1])
    d.update("Image", [{"RID": img_a, "Subject": subjects[0], "Eye": "left"},
                       {"RID": img_b, "Subject": subjects[1], "Eye": "right"}])
    whole = d.dataset_create("all images", ["training"])
    train = d.dataset_create("train split", ["training"])
    test = d.dataset_create("test split", ["testing"])
    d.add_members(train, [img_a, subjects[0]])
    d.add_members(test, [img_b])
    d.add_members(whole, [train, test])
    d.remove_members(train, [subjects[0]])
    d.bump(test, "patch")
    wf = d.workflow("grader", "https://example.org/grader.py", checksum_of("grader"))
    d.feature_define("Image", "Grade", ["Diagnosis:term_ref(Diagnosis)", "Score:float"])
    ex = d.exec_begin({"workflow": wf, "datasets": [{"rid": whole}],
                       "parameters": {"rater": 1}}, work / "exec")
    d.feature_add(ex, "Image", "Grade", [{"Image": img_a, "Diagnosis": "GL", "Score": 0.9},
                                         {"Image": img_b, "Diagnosis": "normal"}])
    d.exec_end(ex)
    version = d.bump(whole, "minor")
    d.publish(whole, version)
    d.add_members(test, [subjects[1]])
    d.bump(whole, "major")
    return d.ops


@pytest.mark.acceptance(8, "library, CLI and HTTP replays export identical catalogs")
def test_interface_equivalence(tmp_path, monkeypatch):
    monkeypatch.setenv("DERIVA_ML_CONFIG", str(tmp_path / "absent.toml"))
    monkeypatch.delenv("DERIVA_CATALOG", raising=False)
    monkeypatch.delenv("DERIVA_CACHE", raising=False)
    files = []
    for i, name in enumerate(("left.png", "right.png")):
        files.append(tmp_path / "files" / name)
        files[-1].parent.mkdir(exist_ok=True)
        files[-1].write_bytes(image_bytes(i))
    exports, counts = {}, {}
    for label, cls in (("library", LibraryDriver), ("cli", CliDriver), ("http", HttpDriver)):
        work = tmp_path / label
        work.mkdir()
        driver = cls(work / "catalog", work / "cache")
        counts[label] = scripted_session(driver, files, work)
        exports[label] = driver.export()
    assert min(counts.values()) >= 25
    assert exports["cli"] == exports["library"]
    assert exports["http"] == exports["library"]
    dump = json.loads(exports["library"])
    assert len(dump["tables"]["Execution_Image_Grade"]) == 2
    assert any(r["Minid"] for r in dump["tables"]["Dataset_Version"])
    print(f"criterion 8: {counts['library']} operations, {len(exports['library'])} export bytes "
          "identical across library, CLI and HTTP")
