import json
import subprocess
import sys
import textwrap

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mlcatalog.assets import define_asset_table, upload_asset
from mlcatalog.errors import (StagingError, StatusTransitionError, ValidationError)
from mlcatalog.execution import ExecutionConfig, ExecutionHandle
from mlcatalog.objectstore import sha256_file

SCRIPT = textwrap.dedent("""\
    import json, os, pathlib, sys
    params = json.load(open(os.environ["DERIVA_ML_PARAMETERS"]))
    root = pathlib.Path(os.environ["DERIVA_ML_EXEC_ROOT"])
    print("lr", params["lr"])
    print("warning", file=sys.stderr)
    (root / "outputs" / "Model" / "model.bin").write_bytes(b"weights" * params["size"])
    sys.exit(params.get("exit", 0))
""")


@pytest.fixture
def setup(ml, tmp_path):
    define_asset_table(ml.catalog, "Image")
    define_asset_table(ml.catalog, "Model")
    imgs = [upload_asset(ml.catalog, "Image", f"img{i}".encode(), f"{i}.png") for i in range(2)]
    d, _ = ml.datasets.create_dataset("images")
    ml.datasets.add_members(d, imgs)
    script = tmp_path / "train.py"
    script.write_text(SCRIPT)
    wf = ml.executions.register_workflow("train", "https://example.org/repo/train.py@abc",
                                         "training", file_path=script)
    return d, imgs, script, wf


def test_register_workflow(ml, tmp_path):
    f = tmp_path / "w.py"
    f.write_text("print(1)\n")
    a = ml.executions.register_workflow("w", "u", "python", file_path=f)
    assert ml.executions.register_workflow("w", "u", "python", file_path=f) == a
    f.write_text("print(2)\n")
    b = ml.executions.register_workflow("w", "u", "python", file_path=f)
    assert b != a
    rows = {r["RID"]: r for r in ml.catalog.query_entities("Workflow")}
    assert rows[a]["URL"] == rows[b]["URL"] and rows[a]["Checksum"] != rows[b]["Checksum"]
    assert rows[b]["Checksum"] == sha256_file(f)
    with pytest.raises(ValidationError):
        ml.executions.register_workflow("w", "u", file_path=tmp_path / "missing.py")
    with pytest.raises(ValidationError):
        ml.executions.register_workflow("w", "u")


def test_begin_stages_inputs(ml, setup, tmp_path):
    d, imgs, script, wf = setup
    assert ml.datasets.version_record(d).minid is None
    cfg = ExecutionConfig(wf, datasets=[{"rid": d, "version": "0.2.0", "materialize": True}],
                          parameters={"lr": 0.1, "size": 3})
    h = ml.executions.execution_begin(cfg, tmp_path / "run")
    rec = ml.executions.record(h.execution)
    assert rec.status == "running" and rec.started and rec.stopped is None
    assert ml.datasets.version_record(d).minid is not None
    assert (h.dataset_dir(d) / "bagit.txt").is_file()
    assert [p.name for p in (tmp_path / "run" / "inputs" / "datasets").iterdir()] == [d]
    links = ml.executions.links(h.execution)
    assert links == [(rec.config_asset, "Execution_Config", "input")]
    stored = ml.store.get_object("/assets/Execution_Config/configuration.json")[0]
    assert ExecutionConfig.from_json(stored.decode()).to_dict() == cfg.to_dict()
    assert h.output_dir("Model").is_dir() and not any(h.output_dir("Model").iterdir())
    assert ml.executions.input_versions(h.execution) == [ml.datasets.version_record(d, "0.2.0").rid]
    again = ExecutionHandle.load(tmp_path / "run")
    assert again.execution == h.execution and again.datasets == h.datasets


def test_begin_input_assets(ml, setup, tmp_path):
    d, imgs, _, wf = setup
    h = ml.executions.execution_begin(ExecutionConfig(wf, assets=[imgs[1]]), tmp_path / "r")
    assert (h.root / "inputs" / "assets" / "Image" / "1.png").read_bytes() == b"img1"
    assert (imgs[1], "Image", "input") in ml.executions.links(h.execution)


def test_staging_failure_is_recorded(ml, setup, tmp_path):
    d, imgs, _, wf = setup
    with pytest.raises(StagingError) as e:
        ml.executions.execution_begin(ExecutionConfig(wf, assets=["1-ZZZZ-ZZZZ"]), tmp_path / "r")
    rec = ml.executions.record(e.value.execution)
    assert rec.status == "failed" and "1-ZZZZ-ZZZZ" in rec.status_detail and rec.stopped
    with pytest.raises(StagingError) as e:
        ml.executions.execution_begin(ExecutionConfig("1-AAAA"), tmp_path / "r2")
    rec = ml.executions.record(e.value.execution)
    assert rec.status == "failed" and rec.workflow is None and "1-AAAA" in rec.status_detail
    with pytest.raises(StagingError):
        ml.executions.execution_begin(ExecutionConfig(wf, datasets=[{"rid": d, "version": "7.0.0"}]),
                                      tmp_path / "r3")


def test_run_and_end(ml, setup, tmp_path):
    d, imgs, script, wf = setup
    h = ml.executions.execution_begin(ExecutionConfig(wf, parameters={"lr": 0.5, "size": 2}),
                                      tmp_path / "run")
    assert ml.executions.run_script(h, script, {"size": 4}) == 0
    assert json.loads((h.root / "parameters.json").read_text()) == {"lr": 0.5, "size": 4}
    logs = h.output_dir("Execution_Log")
    assert (logs / "train.stdout.txt").read_text() == "lr 0.5\n"
    assert (logs / "train.stderr.txt").read_text() == "warning\n"
    rec = ml.executions.execution_end(h, "completed")
    assert rec.status == "completed" and rec.stopped and rec.duration > 0
    outputs = ml.executions.links(h.execution, "output")
    tables = sorted(t for _, t, _ in outputs)
    assert tables == ["Execution_Log", "Execution_Log", "Model"]
    [model] = [a for a, t, _ in outputs if t == "Model"]
    _, row = ml.catalog.get_entity(model)
    assert row["Filename"] == "model.bin" and row["Length"] == len(b"weights" * 4)
    data, _ = ml.store.get_object(*row["URL"].rsplit(":", 1))
    assert data == b"weights" * 4 and row["Checksum"] == sha256_file(h.output_dir("Model") / "model.bin")
    with pytest.raises(StatusTransitionError):
        ml.executions.execution_end(h, "completed")
    with pytest.raises(StatusTransitionError):
        ml.executions.update_status(h, "late")


def test_script_crash_and_checksum_mismatch(ml, setup, tmp_path):
    d, imgs, script, wf = setup
    h = ml.executions.execution_begin(ExecutionConfig(wf, parameters={"lr": 1, "size": 1, "exit": 3}),
                                      tmp_path / "run")
    edited = tmp_path / "train_edit.py"
    edited.write_text(SCRIPT + "# tweak\n")
    assert ml.executions.run_script(h, edited) == 3
    rec = ml.executions.record(h.execution)
    assert rec.status == "running"
    assert "differs from workflow checksum" in rec.status_detail
    assert ml.executions.execution_end(h, "failed", "exit 3").status_detail == "exit 3"


def test_empty_outputs_complete(ml, setup, tmp_path):
    _, _, _, wf = setup
    h = ml.executions.execution_begin(ExecutionConfig(wf), tmp_path / "run")
    before = len(ml.catalog.query_entities("Model"))
    assert ml.executions.execution_end(h).status == "completed"
    assert len(ml.catalog.query_entities("Model")) == before
    assert ml.executions.links(h.execution, "output") == []


def test_upload_failure_keeps_partial(ml, setup, tmp_path):
    _, _, _, wf = setup
    h = ml.executions.execution_begin(ExecutionConfig(wf), tmp_path / "run")
    (h.output_dir("Model") / "a.bin").write_bytes(b"a")
    (h.outputs_dir / "Unknown").mkdir()
    (h.outputs_dir / "Unknown" / "x").write_bytes(b"x")
    with pytest.raises(ValidationError):
        ml.executions.execution_end(h)
    rec = ml.executions.record(h.execution)
    assert rec.status == "failed" and "Unknown" in rec.status_detail
    assert [t for _, t, _ in ml.executions.links(h.execution, "output")] == ["Model"]


def test_feature_ingestion(ml, setup, tmp_path):
    d, imgs, _, wf = setup
    ml.vocab.create_vocabulary("Diagnosis_Label", "DX")
    ml.vocab.add_term("Diagnosis_Label", "normal", synonyms=["ok"])
    ml.features.create_feature("Image", "Diagnosis", ["Label:term_ref(Diagnosis_Label)"])
    h = ml.executions.execution_begin(ExecutionConfig(wf), tmp_path / "run")
    target = h.feature_dir("Image", "Diagnosis")
    assert target.is_dir()
    (target / "values.csv").write_text(f"Image,Label\n{imgs[0]},normal\n{imgs[1]},ok\n")
    ml.executions.execution_end(h)
    rows = ml.features.feature_values("Image", "Diagnosis")
    assert [(r["Image"], r["Execution"]) for r in rows] == [(imgs[0], h.execution),
                                                            (imgs[1], h.execution)]


def test_reuse_chain(ml, setup, tmp_path):
    _, _, _, wf = setup
    h1 = ml.executions.execution_begin(ExecutionConfig(wf), tmp_path / "e1")
    (h1.output_dir("Model") / "m.bin").write_bytes(b"m")
    ml.executions.execution_end(h1)
    [(asset, _, _)] = ml.executions.links(h1.execution, "output")
    h2 = ml.executions.execution_begin(ExecutionConfig(wf, assets=[asset]), tmp_path / "e2")
    assert (h2.root / "inputs" / "assets" / "Model" / "m.bin").read_bytes() == b"m"
    assert (asset, "Model", "input") in ml.executions.links(h2.execution)


def test_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        ExecutionConfig.from_json('{"workflow": "1-A", "parameters": {"a": 1, "a": 2}}')
    with pytest.raises(ValidationError):
        ExecutionConfig.from_json('{"workflow": "1-A", "extra": 1}')
    with pytest.raises(ValidationError):
        ExecutionConfig.from_json('{"workflow": "1-A", "parameters": {"a": [1]}}')
    with pytest.raises(ValidationError):
        ExecutionConfig.from_json('{"datasets": []}')
    cfg = ExecutionConfig.from_json('{"workflow": "1-A", "datasets": [{"rid": "1-B"}]}')
    assert ExecutionConfig.from_json(cfg.to_json()) == cfg


def test_orphan_reaped(ml, setup, tmp_path):
    _, _, _, wf = setup
    child = textwrap.dedent(f"""
        from mlcatalog.api import MLCatalog
        from mlcatalog.execution import ExecutionConfig
        ml = MLCatalog.open({str(ml.catalog.root)!r}, cache_dir={str(tmp_path / 'cache')!r})
        h = ml.executions.execution_begin(ExecutionConfig({wf!r}), {str(tmp_path / 'crash')!r})
        print(h.execution, flush=True)
        import os; os._exit(9)   # die without finishing
    """)
    out = subprocess.run([sys.executable, "-c", child], capture_output=True, text=True)
    assert out.returncode == 9, out.stderr
    rid = out.stdout.strip()
    assert ml.executions.record(rid).status == "running"
    live = ml.executions.execution_begin(ExecutionConfig(wf), tmp_path / "live")
    assert ml.executions.reap() == [rid]
    rec = ml.executions.record(rid)
    assert rec.status == "failed" and rec.status_detail == "orphaned"
    assert ml.executions.record(live.execution).status == "running"


OPS = st.lists(st.sampled_from(["update", "complete", "fail", "reap"]), max_size=6)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(ops=OPS)
def test_status_machine(ml, begin, ops):
    h = begin()
    seen = [ml.executions.record(h.execution).status]
    for op in ops:
        try:
            if op == "update":
                ml.executions.update_status(h, "tick")
            elif op == "complete":
                ml.executions.execution_end(h, "completed")
            elif op == "fail":
                ml.executions.execution_end(h, "failed")
            else:
                ml.executions.reap([h.execution], force=True)
        except StatusTransitionError:
            pass
        seen.append(ml.executions.record(h.execution).status)
    allowed = {("running", "running"), ("running", "completed"), ("running", "failed"),
               ("completed", "completed"), ("failed", "failed")}
    assert all(pair in allowed for pair in zip(seen, seen[1:]))
