"""Workflows and executions: stage inputs, run a script, capture outputs."""

from __future__ import annotations

import datetime
import json
import logging
import os
import shutil
import socket
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .assets import asset_row, download_asset, store_file
from .errors import (CatalogError, ConflictError, NotFoundError, StagingError,
                     StatusTransitionError, ValidationError)
from .objectstore import sha256_file

logger = logging.getLogger(__name__)

PARAMETERS_ENV = "DERIVA_ML_PARAMETERS"
EXEC_ROOT_ENV = "DERIVA_ML_EXEC_ROOT"
EXECUTION_ENV = "DERIVA_ML_EXECUTION"
HANDLE_FILE = "execution.json"
LOG_TABLE = "Execution_Log"
CONFIG_TABLE = "Execution_Config"

# created -> running -> {completed, failed}
TRANSITIONS = {"created": {"running"}, "running": {"completed", "failed"}}


@dataclass
class DatasetSpec:
    rid: str
    version: str | None = None
    materialize: bool = True

    def to_dict(self):
        return {"rid": self.rid, "version": self.version, "materialize": self.materialize}


def _reject_duplicates(pairs):
    keys = [k for k, _ in pairs]
    dupes = sorted({k for k in keys if keys.count(k) > 1})
    if dupes:
        raise ValidationError(f"duplicate keys in configuration: {', '.join(dupes)}",
                              code="invalid_config")
    return dict(pairs)


@dataclass
class ExecutionConfig:
    """Structured description of one run (serialized as JSON)."""

    workflow: object
    datasets: list = field(default_factory=list)
    assets: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        self.datasets = [d if isinstance(d, DatasetSpec) else
                         DatasetSpec(d["rid"], d.get("version"), d.get("materialize", True))
                         if isinstance(d, dict) else DatasetSpec(d) for d in self.datasets]
        if isinstance(self.workflow, dict):
            missing = {"name", "url"} - set(self.workflow)
            if missing:
                raise ValidationError(f"workflow object lacks {sorted(missing)}", code="invalid_config")
        elif not isinstance(self.workflow, str):
            raise ValidationError("workflow must be a RID or an object", code="invalid_config")
        for k, v in self.parameters.items():
            if not isinstance(v, (str, int, float, bool)) and v is not None:
                raise ValidationError(f"parameter {k} must be a scalar", code="invalid_config")
        rids = [d.rid for d in self.datasets]
        if len(set(rids)) != len(rids):
            raise ValidationError("a dataset may be listed once per configuration",
                                  code="invalid_config")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"workflow", "datasets", "assets", "parameters", "description"}
        if unknown:
            raise ValidationError(f"unknown configuration keys {sorted(unknown)}", code="invalid_config")
        if "workflow" not in d:
            raise ValidationError("configuration needs a workflow", code="invalid_config")
        return cls(d["workflow"], list(d.get("datasets", [])), list(d.get("assets", [])),
                   dict(d.get("parameters", {})), d.get("description", ""))

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as e:
            raise ValidationError(f"configuration is not valid JSON: {e}", code="invalid_config") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_dict(self):
        return {
            "workflow": self.workflow,
            "datasets": [d.to_dict() for d in self.datasets],
            "assets": list(self.assets),
            "parameters": dict(self.parameters),
            "description": self.description,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class ExecutionRecord:
    rid: str
    workflow: str | None
    status: str
    status_detail: str | None
    started: str | None
    stopped: str | None
    duration: float | None
    description: str | None
    config_asset: str | None
    parameters: dict

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ExecutionHandle:
    """Paths and parameters of a running execution; persisted in its root."""

    execution: str
    root: Path
    workflow: str
    config: ExecutionConfig
    datasets: dict = field(default_factory=dict)
    assets: dict = field(default_factory=dict)

    @property
    def parameters(self):
        return dict(self.config.parameters)

    @property
    def inputs_dir(self):
        return self.root / "inputs"

    @property
    def outputs_dir(self):
        return self.root / "outputs"

    @property
    def features_dir(self):
        return self.root / "features"

    def dataset_dir(self, rid):
        return self.inputs_dir / "datasets" / rid

    def output_dir(self, table):
        return self.outputs_dir / table

    def feature_dir(self, target, name):
        return self.features_dir / target / name

    def save(self):
        data = {"execution": self.execution, "workflow": self.workflow,
                "config": self.config.to_dict(),
                "datasets": {k: str(v) for k, v in self.datasets.items()},
                "assets": {k: str(v) for k, v in self.assets.items()}}
        (self.root / HANDLE_FILE).write_text(json.dumps(data, indent=2, sort_keys=True))

    @classmethod
    def load(cls, root):
        root = Path(root)
        path = root / HANDLE_FILE
        if not path.is_file():
            raise NotFoundError(f"{root} holds no execution", code="no_execution")
        data = json.loads(path.read_text())
        return cls(data["execution"], root, data["workflow"],
                   ExecutionConfig.from_dict(data["config"]),
                   {k: Path(v) for k, v in data["datasets"].items()},
                   {k: Path(v) for k, v in data["assets"].items()})


def script_mismatch(script, workflow_checksum):
    """Status detail noting that ``script`` is not the registered workflow code."""
    got = sha256_file(script)
    if got == workflow_checksum:
        return None
    return f"script checksum {got} differs from workflow checksum {workflow_checksum}"


def launch(handle, script_path, extra_params=None, interpreter=None):
    """Run ``script_path`` in the execution root with stdout/stderr captured as logs."""
    script = Path(script_path).resolve()
    if not script.is_file():
        raise NotFoundError(f"script {script} does not exist", code="no_script")
    params = dict(handle.config.parameters)
    params.update(extra_params or {})
    pfile = handle.root / "parameters.json"
    pfile.write_text(json.dumps(params, indent=2, sort_keys=True))
    env = dict(os.environ)
    env.update({PARAMETERS_ENV: str(pfile), EXEC_ROOT_ENV: str(handle.root),
                EXECUTION_ENV: handle.execution})
    if interpreter:
        cmd = list(interpreter) + [str(script)]
    elif script.suffix == ".py":
        cmd = [sys.executable, str(script)]
    else:
        cmd = [str(script)]
    logs = handle.output_dir(LOG_TABLE)
    logs.mkdir(parents=True, exist_ok=True)
    with open(logs / f"{script.stem}.stdout.txt", "wb") as out, \
            open(logs / f"{script.stem}.stderr.txt", "wb") as err:
        proc = subprocess.run(cmd, cwd=handle.root, env=env, stdout=out, stderr=err)
    return proc.returncode


def _process_tag():
    return f"{socket.gethostname()}:{os.getpid()}"


def _pid_alive(pid):
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class Executions:
    """Workflow registration and the execution lifecycle over an ``MLCatalog``."""

    def __init__(self, ml):
        self.ml = ml
        self.catalog = ml.catalog
        self.vocab = ml.vocab

    def _now(self):
        return self.catalog.clock().isoformat()

    # -- workflows ---------------------------------------------------------
    def register_workflow(self, name, url, workflow_type=None, file_path=None, checksum=None,
                          version=None, description=None):
        """Return the Workflow RID for ``(url, checksum)``, creating it if new."""
        if checksum is None:
            if file_path is None:
                raise ValidationError("a workflow needs a file or a checksum", code="no_checksum")
            try:
                checksum = sha256_file(file_path)
            except OSError as e:
                raise ValidationError(f"cannot read workflow file {file_path}: {e.strerror}",
                                      code="no_checksum") from None
        wtype = None
        if workflow_type:
            wtype = self.vocab.add_term("Workflow_Type", workflow_type, exist_ok=True).rid
        with self.catalog.transaction() as tx:
            existing = tx.query("Workflow", {"URL": url, "Checksum": checksum})
            if existing:
                return existing[0]["RID"]
            [rid] = tx.insert("Workflow", [{
                "Name": name, "URL": url, "Workflow_Type": wtype, "Version": version,
                "Checksum": checksum, "Description": description}])
        return rid

    def workflow(self, rid):
        table, row = self.catalog.get_entity(rid)
        if table != "Workflow":
            raise NotFoundError(f"{rid} is not a workflow", code="unknown_workflow")
        return row

    # -- records -------------------------------------------------------------
    def record(self, rid, as_of=None):
        table, row = self.catalog.get_entity(rid, as_of=as_of)
        if table != "Execution":
            raise NotFoundError(f"{rid} is not an execution", code="unknown_execution")
        return ExecutionRecord(
            rid, row["Workflow"], self.vocab.term_name(row["Status"], as_of), row["Status_Detail"],
            row["Started"], row["Stopped"], row["Duration"], row["Description"], row["Config"],
            json.loads(row["Parameters"] or "{}"))

    def list_executions(self, status=None):
        rows = self.catalog.query_entities("Execution")
        out = [self.record(r["RID"]) for r in rows]
        return [r for r in out if status is None or r.status == status]

    def _status(self, name):
        return self.vocab.term_rid("Execution_Status", name)

    def _transition(self, rid, new, detail=None, tx=None):
        rec = self.record(rid)
        if new not in TRANSITIONS.get(rec.status, ()):
            raise StatusTransitionError(f"execution {rid} cannot go from {rec.status} to {new}")
        values = {"Status": self._status(new)}
        if detail is not None:
            values["Status_Detail"] = detail
        if new in ("completed", "failed"):
            stopped = self._now()
            values["Stopped"] = stopped
            if rec.started:
                start = datetime.datetime.fromisoformat(rec.started)
                values["Duration"] = (datetime.datetime.fromisoformat(stopped) - start).total_seconds()
        if tx is not None:
            tx.update("Execution", [(rid, values)])
        else:
            self.catalog.update_entities("Execution", [(rid, values)])

    def links(self, execution, role=None):
        rows = self.catalog.query_entities("Execution_Asset", {"Execution": execution})
        out = [(r["Asset"], r["Asset_Table"], self.vocab.term_name(r["Asset_Role"])) for r in rows]
        return [link for link in out if role is None or link[2] == role]

    def input_versions(self, execution):
        rows = self.catalog.query_entities("Execution_Dataset", {"Execution": execution})
        return [r["Dataset_Version"] for r in rows]

    # -- lifecycle -------------------------------------------------------------
    def _resolve_workflow(self, spec):
        if isinstance(spec, str):
            self.workflow(spec)
            return spec
        return self.register_workflow(spec["name"], spec["url"], spec.get("workflow_type"),
                                      spec.get("file"), spec.get("checksum"), spec.get("version"),
                                      spec.get("description"))

    def execution_begin(self, config, exec_root):
        """Create a running execution and stage its inputs under ``exec_root``."""
        if not isinstance(config, ExecutionConfig):
            config = ExecutionConfig.from_dict(config)
        root = Path(exec_root).resolve()
        if (root / HANDLE_FILE).exists():
            raise ConflictError(f"{root} already holds an execution", code="exec_root_in_use")
        root.mkdir(parents=True, exist_ok=True)
        problem = None
        try:
            workflow = self._resolve_workflow(config.workflow)
        except CatalogError as e:
            workflow, problem = None, f"workflow {config.workflow}: {e.message}"

        doc = config.to_json().encode("utf-8")
        cfg_values = store_file(self.catalog.store, CONFIG_TABLE, doc, "configuration.json",
                                content_type="application/json")
        with self.catalog.transaction() as tx:
            [cfg] = tx.insert(CONFIG_TABLE, [dict(cfg_values, Description="execution configuration")])
            [rid] = tx.insert("Execution", [{
                "Workflow": workflow, "Status": self._status("running"),
                "Started": tx.time, "Description": config.description,
                "Config": cfg, "Parameters": json.dumps(config.parameters, sort_keys=True),
                "Process": _process_tag()}])
            tx.insert("Execution_Asset", [{"Execution": rid, "Asset": cfg, "Asset_Table": CONFIG_TABLE,
                                           "Asset_Role": self._role("input")}])
        handle = ExecutionHandle(rid, root, workflow, config)
        if problem is None:
            try:
                self._stage(handle)
            except CatalogError as e:
                problem = e.message
        if problem is not None:
            self._transition(rid, "failed", f"staging failed: {problem}")
            raise StagingError(f"execution {rid} failed while staging: {problem}", execution=rid)
        for tdef in self.catalog.tables(kind="asset"):
            if tdef.name != CONFIG_TABLE:
                handle.output_dir(tdef.name).mkdir(parents=True, exist_ok=True)
        for f in self.ml.features.list_features():
            handle.feature_dir(f.target, f.name).mkdir(parents=True, exist_ok=True)
        handle.save()
        return handle

    def _role(self, name):
        return self.vocab.term_rid("Asset_Role", name)

    def _stage(self, handle):
        config, root = handle.config, handle.root
        versions = []
        for spec in config.datasets:
            try:
                rec = self.ml.datasets.version_record(spec.rid, spec.version)
            except CatalogError:
                raise NotFoundError(f"dataset {spec.rid} version {spec.version or 'latest'} "
                                    f"does not exist") from None
            versions.append(rec.rid)
            if spec.materialize:
                resolved = self.ml.resolve_dataset(spec.rid, str(rec.version))
                dest = handle.dataset_dir(spec.rid)
                dest.parent.mkdir(parents=True, exist_ok=True)
                try:
                    dest.symlink_to(resolved.path, target_is_directory=True)
                except OSError:
                    shutil.copytree(resolved.path, dest)
                handle.datasets[spec.rid] = dest
        inputs = []
        for rid in config.assets:
            try:
                table, row = asset_row(self.catalog, rid)
            except CatalogError:
                raise NotFoundError(f"input asset {rid} does not exist") from None
            dest = root / "inputs" / "assets" / table / row["Filename"]
            download_asset(self.catalog, rid, dest)
            handle.assets[rid] = dest
            inputs.append((rid, table))
        if not versions and not inputs:
            return
        with self.catalog.transaction() as tx:
            if versions:
                tx.insert("Execution_Dataset", [{"Execution": handle.execution, "Dataset_Version": v}
                                                for v in dict.fromkeys(versions)])
            if inputs:
                role = self._role("input")
                tx.insert("Execution_Asset", [{"Execution": handle.execution, "Asset": rid,
                                               "Asset_Table": table, "Asset_Role": role}
                                              for rid, table in dict.fromkeys(inputs)])

    def update_status(self, handle, detail):
        rid = handle if isinstance(handle, str) else handle.execution
        rec = self.record(rid)
        if rec.status != "running":
            raise StatusTransitionError(f"execution {rid} is {rec.status}, not running")
        self.catalog.update_entities("Execution", [(rid, {"Status_Detail": detail})])

    def run_script(self, handle, script_path, extra_params=None, interpreter=None):
        """Run a script with the execution's parameters; return its exit status."""
        script = Path(script_path)
        if not script.is_file():
            raise NotFoundError(f"script {script} does not exist", code="no_script")
        if handle.workflow:
            want = self.workflow(handle.workflow)["Checksum"]
            mismatch = script_mismatch(script, want)
            if mismatch:
                self.update_status(handle, mismatch)
        return launch(handle, script, extra_params, interpreter)

    def _upload_outputs(self, handle):
        role = self._role("output")
        uploaded = []
        if not handle.outputs_dir.is_dir():
            return uploaded
        for tdir in sorted(p for p in handle.outputs_dir.iterdir() if p.is_dir()):
            table = tdir.name
            for f in sorted(p for p in tdir.rglob("*") if p.is_file()):
                if not self.catalog.has_table(table) or self.catalog.table(table).kind != "asset":
                    raise ValidationError(f"outputs/{table} is not an asset table", code="unknown_table")
                name = f.relative_to(tdir).as_posix()
                values = store_file(self.catalog.store, table, f, name)
                with self.catalog.transaction() as tx:
                    [rid] = tx.insert(table, [values])
                    tx.insert("Execution_Asset", [{"Execution": handle.execution, "Asset": rid,
                                                   "Asset_Table": table, "Asset_Role": role}])
                uploaded.append(rid)
        return uploaded

    def _ingest_features(self, handle):
        n = 0
        if not handle.features_dir.is_dir():
            return n
        for f in sorted(handle.features_dir.glob("*/*/values.csv")):
            target, name = f.parent.parent.name, f.parent.name
            feature = self.ml.features.feature(target, name)
            n += len(self.ml.features.ingest_file(handle.execution, feature, f))
        return n

    def execution_end(self, handle, status="completed", detail=None):
        """Upload outputs and feature values, then apply the final status."""
        if status not in ("completed", "failed"):
            raise ValidationError(f"final status must be completed or failed, not {status!r}")
        rid = handle.execution
        rec = self.record(rid)
        if rec.status != "running":
            raise StatusTransitionError(f"execution {rid} is {rec.status}, not running")
        try:
            self._upload_outputs(handle)
            self._ingest_features(handle)
        except (CatalogError, OSError) as e:
            message = e.message if isinstance(e, CatalogError) else str(e)
            self._transition(rid, "failed", f"capture failed: {message}")
            raise
        if detail is None:
            detail = rec.status_detail
        self._transition(rid, status, detail)
        return self.record(rid)

    def reap(self, executions=None, force=False):
        """Mark running executions whose process is gone as failed ("orphaned")."""
        host = socket.gethostname()
        reaped = []
        for rec in self.list_executions("running"):
            if executions is not None and rec.rid not in executions:
                continue
            _, row = self.catalog.get_entity(rec.rid)
            tag = row["Process"] or ""
            h, _, pid = tag.rpartition(":")
            alive = h == host and pid.isdigit() and _pid_alive(int(pid))
            if force or not alive:
                self._transition(rec.rid, "failed", "orphaned")
                reaped.append(rec.rid)
        return reaped
