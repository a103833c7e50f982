"""Uniform operations over a local catalog directory or a running service.

The CLI talks to a session, never to the catalog directly, so the same
command produces the same catalog state whether the catalog is a path on disk
or a service URL.  Every method returns plain JSON-able data.
"""

from __future__ import annotations

import hashlib
import json
import urllib.parse
from pathlib import Path

from .api import MLCatalog
from .assets import object_path, upload_asset
from .bag import Minid, Transport, fetch_into_cache
from .errors import (CatalogError, ChecksumMismatchError, ConflictError, DanglingReferenceError,
                     IntegrityError, NotFoundError, ServiceError, StagingError,
                     StatusTransitionError, ValidationError)
from .execution import ExecutionConfig, ExecutionHandle, launch, script_mismatch


def open_session(location, cache_dir=None, http_client=None):
    """A session for ``location``: an ``http(s)://`` service URL or a catalog path."""
    location = str(location)
    if location.startswith(("http://", "https://")):
        return RemoteSession(location, cache_dir, http_client)
    return LocalSession(MLCatalog.open(location, cache_dir=cache_dir))


def _handle_dict(h):
    return {"execution": h.execution, "root": str(h.root), "workflow": h.workflow,
            "parameters": h.parameters}


class LocalSession:
    def __init__(self, ml):
        self.ml = ml
        self.catalog = ml.catalog

    @property
    def cache_dir(self):
        return self.ml.cache_dir

    def snapshot(self):
        return self.catalog.current_snapshot()

    # schema and entities
    def define_table(self, name, columns=(), kind="table", curie_prefix=None):
        return self.ml.define_table(name, columns, kind, curie_prefix).to_dict()

    def tables(self):
        return [t.to_dict() for t in sorted(self.catalog.tables(), key=lambda t: t.name)]

    def table(self, name, snapshot=None):
        return self.catalog.table(name, as_of=snapshot).to_dict()

    def insert(self, table, rows):
        rids = self.catalog.insert_entities(table, rows)
        return [self.catalog.get_entity(r)[1] for r in rids]

    def update(self, table, rows):
        updates = [(r["RID"], {k: v for k, v in r.items() if k != "RID"}) for r in rows]
        self.catalog.update_entities(table, updates)
        return [self.catalog.get_entity(rid)[1] for rid, _ in updates]

    def delete(self, table, rids):
        self.catalog.delete_entities(table, rids)
        return {"deleted": list(rids)}

    def query(self, table, filters=None, snapshot=None):
        return self.catalog.query_entities(table, filters, as_of=snapshot)

    def upload_asset(self, table, path, description=None):
        rid = upload_asset(self.catalog, table, path, description=description)
        return self.catalog.get_entity(rid)[1]

    # vocabularies
    def vocab_create(self, name, curie_prefix):
        self.ml.vocab.create_vocabulary(name, curie_prefix)
        return self.catalog.table(name).to_dict()

    def vocab_add(self, name, term, synonyms=(), description=None, exist_ok=False):
        return self.ml.vocab.add_term(name, term, synonyms, description, exist_ok).to_dict()

    def vocab_find(self, name, text):
        return self.ml.vocab.lookup_term(name, text).to_dict()

    def vocab_list(self, name=None):
        if name is None:
            return self.ml.vocab.list_vocabularies()
        return [t.to_dict() for t in self.ml.vocab.list_terms(name)]

    # datasets
    def dataset_create(self, description, types=(), execution=None):
        rid, version = self.ml.datasets.create_dataset(description, types, execution)
        return {"RID": rid, "version": str(version)}

    def add_members(self, dataset, members, execution=None, description=None):
        return str(self.ml.datasets.add_members(dataset, members, execution, description))

    def remove_members(self, dataset, members, execution=None, description=None):
        return str(self.ml.datasets.remove_members(dataset, members, execution, description))

    def bump(self, dataset, level, description=None, execution=None):
        return str(self.ml.datasets.increment_version(dataset, level, description, execution))

    def versions(self, dataset):
        return [v.to_dict() for v in self.ml.datasets.list_versions(dataset)]

    def members(self, dataset, version=None, flatten=False):
        return [{"RID": m, "table": t}
                for m, t in self.ml.datasets.dataset_members(dataset, version, flatten=flatten)]

    def check_disjoint(self, datasets, flatten=True):
        report = self.ml.datasets.check_disjoint(datasets, flatten=flatten)
        return {m: report.overlaps[m] for m in report.overlapping}

    # bags and identifiers
    def publish(self, dataset, version=None, title=None):
        return self.ml.publish_dataset(dataset, version, title).to_dict()

    def resolve_minid(self, ident):
        return self.ml.resolve_minid(ident).to_dict()

    def transport(self):
        return self.ml.transport

    def export_bag(self, dataset, version, dest):
        return self.ml.export_bag(dataset, version, dest).to_dict()

    def download(self, dataset, version=None, cache_dir=None, verify="tags"):
        h = self.ml.resolve_dataset(dataset, version, cache_dir, verify)
        return {"dataset": h.dataset, "version": h.version, "minid": h.minid,
                "checksum": h.checksum, "path": str(h.path)}

    # workflows and executions
    def workflow_register(self, name, url, checksum=None, file_path=None, workflow_type=None,
                          version=None, description=None):
        rid = self.ml.executions.register_workflow(name, url, workflow_type, file_path, checksum,
                                                   version, description)
        return self.catalog.get_entity(rid)[1]

    def workflows(self):
        return self.catalog.query_entities("Workflow")

    def exec_begin(self, config, root):
        return _handle_dict(self.ml.executions.execution_begin(config, root))

    def exec_script(self, root, script, extra_params=None):
        return self.ml.executions.run_script(ExecutionHandle.load(root), script, extra_params)

    def exec_end(self, root, status="completed", detail=None):
        rec = self.ml.executions.execution_end(ExecutionHandle.load(root), status, detail)
        return rec.to_dict()

    def exec_show(self, rid):
        rec = self.ml.executions.record(rid).to_dict()
        rec["assets"] = [{"RID": a, "table": t, "role": r}
                         for a, t, r in self.ml.executions.links(rid)]
        rec["dataset_versions"] = self.ml.executions.input_versions(rid)
        return rec

    def reap(self, executions=None, force=False):
        return self.ml.executions.reap(executions, force)

    # features and lineage
    def feature_define(self, target, name, columns, description=None):
        return self.ml.features.create_feature(target, name, columns, description).to_dict()

    def feature_add(self, execution, target, name, records):
        return self.ml.features.add_feature_values(execution, (target, name), records)

    def feature_values(self, target, name, snapshot=None):
        return self.ml.features.feature_values(target, name, as_of=snapshot)

    def lineage(self, ref, direction="upstream", depth=None, fmt="json"):
        g = self.ml.lineage.lineage(ref, direction, depth)
        if fmt == "dot":
            return g.to_dot()
        if fmt == "jsonl":
            return g.to_jsonl()
        return g.to_dict()

    def export(self, snapshot=None):
        from .dump import export_catalog
        return export_catalog(self.catalog, snapshot)


# error classes by code, so a remote failure surfaces as the same exception type
_BY_STATUS = {400: ValidationError, 404: NotFoundError, 409: ConflictError}
_BY_CODE = {"checksum_mismatch": ChecksumMismatchError, "dangling_reference": DanglingReferenceError,
            "bad_transition": StatusTransitionError, "invalid_bag": IntegrityError,
            "integrity_error": IntegrityError}


class RemoteSession:
    """Session over the HTTP service; ``http_client`` defaults to ``httpx.Client``."""

    def __init__(self, url, cache_dir=None, http_client=None):
        from .api import default_cache_dir

        self.url = url.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
        if http_client is None:
            import httpx
            http_client = httpx.Client(base_url=self.url, timeout=120.0)
        self.http = http_client

    def _call(self, method, path, json_body=None, params=None, content=None, headers=None):
        import httpx
        try:
            r = self.http.request(method, self.url + path, json=json_body, params=params,
                                  content=content, headers=headers)
        except httpx.HTTPError as e:
            raise ServiceError(f"cannot reach {self.url}: {e}", code="service_unavailable") from None
        if r.status_code >= 400:
            try:
                err = r.json()
                code, message = err["code"], err["message"]
            except (ValueError, KeyError, TypeError):
                code, message = "http_error", f"HTTP {r.status_code}: {r.text[:200]}"
            if code == "staging_failed":
                raise StagingError(message, execution=err.get("execution"))
            cls = _BY_CODE.get(code) or _BY_STATUS.get(r.status_code)
            if cls is None:
                cls = ServiceError if r.status_code >= 500 else CatalogError
            raise cls(message, code=code)
        return r

    def _get(self, path, **params):
        params = {k: v for k, v in params.items() if v is not None}
        return self._call("GET", path, params=params or None).json()

    def _post(self, path, body):
        return self._call("POST", path, json_body=body).json()

    @staticmethod
    def _q(text):
        return urllib.parse.quote(str(text), safe="@:")

    def snapshot(self):
        return self._get("/")["snapshot"]

    # schema and entities
    def define_table(self, name, columns=(), kind="table", curie_prefix=None):
        cols = [c.to_dict() if hasattr(c, "to_dict") else c for c in columns]
        return self._post("/schema", {"name": name, "columns": cols, "kind": kind,
                                      "curie_prefix": curie_prefix})

    def tables(self):
        return self._get("/schema")

    def table(self, name, snapshot=None):
        ref = name if snapshot is None else f"{name}@{snapshot}"
        return self._get(f"/schema/{self._q(ref)}")

    def insert(self, table, rows):
        return self._post(f"/entity/{self._q(table)}", list(rows))

    def update(self, table, rows):
        return self._call("PUT", f"/entity/{self._q(table)}", json_body=list(rows)).json()

    def delete(self, table, rids):
        return self._call("DELETE", f"/entity/{self._q(table)}", params={"RID": list(rids)}).json()

    def query(self, table, filters=None, snapshot=None):
        ref = table if snapshot is None else f"{table}@{snapshot}"
        params = {k: (json.dumps(v) if isinstance(v, bool) else v)
                  for k, v in (filters or {}).items()}
        return self._get(f"/entity/{self._q(ref)}", **params)

    def upload_asset(self, table, path, description=None):
        path = Path(path)
        data = path.read_bytes()
        md5 = hashlib.md5(data).hexdigest()
        obj = self._call("PUT", "/store" + urllib.parse.quote(object_path(table, path.name)),
                         content=data, headers={"X-Checksum-MD5": md5,
                                                "X-Checksum-SHA256": hashlib.sha256(data).hexdigest()}
                         ).json()
        row = {"URL": f"{obj['path']}:{obj['version_id']}", "Filename": path.name,
               "Length": obj["length"], "Checksum": obj["checksum"], "MD5": md5,
               "Description": description}
        return self.insert(table, [row])[0]

    # vocabularies
    def vocab_create(self, name, curie_prefix):
        return self._post("/vocab", {"name": name, "curie_prefix": curie_prefix})

    def vocab_add(self, name, term, synonyms=(), description=None, exist_ok=False):
        return self._post(f"/vocab/{self._q(name)}", {"name": term, "synonyms": list(synonyms),
                                                      "description": description,
                                                      "exist_ok": exist_ok})

    def vocab_find(self, name, text):
        return self._get(f"/vocab/{self._q(name)}/term/{urllib.parse.quote(text, safe='')}")

    def vocab_list(self, name=None):
        if name is None:
            return self._get("/vocab")
        return self._get(f"/vocab/{self._q(name)}")

    # datasets
    def dataset_create(self, description, types=(), execution=None):
        return self._post("/dataset", {"description": description, "types": list(types),
                                       "execution": execution})

    def add_members(self, dataset, members, execution=None, description=None):
        return self._post(f"/dataset/{dataset}/members",
                          {"members": [m if isinstance(m, str) else list(m) for m in members],
                           "execution": execution, "description": description})["version"]

    def remove_members(self, dataset, members, execution=None, description=None):
        params = {"member": list(members)}
        if execution:
            params["execution"] = execution
        if description:
            params["description"] = description
        return self._call("DELETE", f"/dataset/{dataset}/members", params=params).json()["version"]

    def bump(self, dataset, level, description=None, execution=None):
        return self._post(f"/dataset/{dataset}/version", {"level": level, "description": description,
                                                          "execution": execution})["version"]

    def versions(self, dataset):
        return self._get(f"/dataset/{dataset}/versions")

    def members(self, dataset, version=None, flatten=False):
        path = f"/dataset/{dataset}/members" + ("" if version is None else f"@{version}")
        return self._get(path, flatten="true" if flatten else None)

    def check_disjoint(self, datasets, flatten=True):
        entries = [d if isinstance(d, str) else list(d) for d in datasets]
        return self._post("/dataset/check-disjoint", {"datasets": entries,
                                                      "flatten": flatten})["overlaps"]

    # bags and identifiers
    def publish(self, dataset, version=None, title=None):
        return self._post("/id", {"dataset": dataset, "version": version, "title": title})

    def resolve_minid(self, ident):
        return self._get(f"/id/{urllib.parse.quote(ident, safe=':')}")

    def transport(self):
        return Transport(base_url=self.url, http_client=self.http)

    def export_bag(self, dataset, version, dest):
        """Bags are built server side; publish and copy the bag's files to ``dest``."""
        dest = Path(dest)
        if dest.exists() and any(dest.iterdir()):
            raise ConflictError(f"{dest} is not empty", code="dest_not_empty")
        minid = self.publish(dataset, version)
        self.transport().download_tree(minid["locations"][0], dest)
        return {"dataset": dataset, "version": minid["version"], "bag_checksum": minid["checksum"],
                "length": minid["length"], "path": str(dest)}

    def download(self, dataset, version=None, cache_dir=None, verify="tags"):
        versions = self.versions(dataset)
        if version is None:
            rec = versions[-1]
        else:
            matches = [v for v in versions if v["version"] == version]
            if not matches:
                raise NotFoundError(f"dataset {dataset} has no version {version}",
                                    code="unknown_version")
            rec = matches[0]
        minid = rec["minid"] and self.resolve_minid(rec["minid"])
        if not minid:
            minid = self.publish(dataset, rec["version"])
        m = Minid(minid["id"], tuple(minid["locations"]), minid["checksum"], minid["length"],
                  minid["title"], minid["created"], minid["dataset"], minid["version"])
        h = fetch_into_cache(m, dataset, rec["version"], cache_dir or self.cache_dir,
                             self.transport(), verify)
        return {"dataset": h.dataset, "version": h.version, "minid": h.minid,
                "checksum": h.checksum, "path": str(h.path)}

    # workflows and executions
    def workflow_register(self, name, url, checksum=None, file_path=None, workflow_type=None,
                          version=None, description=None):
        if checksum is None:
            if file_path is None:
                raise ValidationError("a workflow needs a file or a checksum", code="no_checksum")
            checksum = hashlib.sha256(Path(file_path).read_bytes()).hexdigest()
        return self._post("/workflow", {"name": name, "url": url, "checksum": checksum,
                                        "workflow_type": workflow_type, "version": version,
                                        "description": description})

    def workflows(self):
        return self._get("/workflow")

    def exec_begin(self, config, root):
        cfg = config.to_dict() if isinstance(config, ExecutionConfig) else config
        return self._post("/execution", {"config": cfg, "exec_root": str(Path(root).resolve())})

    def exec_script(self, root, script, extra_params=None):
        handle = ExecutionHandle.load(root)
        if handle.workflow:
            [wf] = self.query("Workflow", {"RID": handle.workflow})
            mismatch = script_mismatch(script, wf["Checksum"])
            if mismatch:
                self.update("Execution", [{"RID": handle.execution, "Status_Detail": mismatch}])
        return launch(handle, script, extra_params)

    def exec_end(self, root, status="completed", detail=None):
        handle = ExecutionHandle.load(root)
        return self._post(f"/execution/{handle.execution}/finish",
                          {"status": status, "detail": detail, "root": str(Path(root).resolve())})

    def exec_show(self, rid):
        return self._get(f"/execution/{rid}")

    def reap(self, executions=None, force=False):
        return self._post("/execution/reap", {"executions": executions, "force": force})

    # features and lineage
    def feature_define(self, target, name, columns, description=None):
        cols = [c.to_dict() if hasattr(c, "to_dict") else c for c in columns]
        return self._post("/feature", {"target_table": target, "feature_name": name,
                                       "value_columns": cols, "description": description})

    def feature_add(self, execution, target, name, records):
        return self._post(f"/feature/{self._q(target)}/{self._q(name)}",
                          {"execution": execution, "records": list(records)})

    def feature_values(self, target, name, snapshot=None):
        ref = name if snapshot is None else f"{name}@{snapshot}"
        return self._get(f"/feature/{self._q(target)}/{self._q(ref)}")

    def lineage(self, ref, direction="upstream", depth=None, fmt="json"):
        r = self._call("GET", f"/lineage/{self._q(ref)}",
                       params={k: v for k, v in {"direction": direction, "depth": depth,
                                                 "format": fmt}.items() if v is not None})
        return r.json() if fmt == "json" else r.text

    def export(self, snapshot=None):
        params = {"snapshot": snapshot} if snapshot is not None else None
        return self._call("GET", "/export", params=params).content
