"""HTTP service over a catalog, its object store, minids and lineage.

Paths follow the catalog's own vocabulary: ``/schema``, ``/entity``,
``/dataset``, ``/id``, ``/store``, ``/execution`` and ``/lineage``.  A
``@<snapshot>`` suffix on a table (or ``@<version>`` on a dataset) pins reads
to a point in history.  Every write response carries the resulting snapshot id
in the ``Deriva-Snapshot`` header.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import tempfile
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from starlette.concurrency import run_in_threadpool

from .api import MLCatalog
from .bag.export import format_cell
from .dump import export_catalog
from .errors import CatalogError, NotFoundError, StagingError, ValidationError
from .execution import HANDLE_FILE, ExecutionConfig, ExecutionHandle
from .objectstore import split_version

logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = "Deriva-Snapshot"


def split_ref(ref):
    """``Image@5`` -> ``("Image", "5")``; no suffix -> ``(ref, None)``."""
    name, sep, at = ref.partition("@")
    return name, (at if sep else None)


def parse_snapshot(text):
    if text is None:
        return None
    if not text.isdigit():
        raise ValidationError(f"invalid snapshot {text!r}", code="bad_snapshot")
    return int(text)


def rows_csv(tdef, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["RID"] + tdef.column_names + ["RCT", "RMT"]
    w.writerow(cols)
    for r in rows:
        w.writerow([format_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _error_body(e):
    body = {"code": e.code, "message": e.message}
    if isinstance(e, StagingError) and e.execution:
        body["execution"] = e.execution
    return body


def create_app(ml, exec_dir=None):
    """Build the ASGI app for an :class:`MLCatalog` (or a catalog root path)."""
    if not isinstance(ml, MLCatalog):
        ml = MLCatalog.open(ml)
    cat = ml.catalog
    exec_dir = Path(exec_dir) if exec_dir else ml.cache_dir / "executions"
    app = FastAPI(title="ML catalog", version="1")
    app.state.ml = ml

    @app.exception_handler(CatalogError)
    async def _catalog_error(request, e):
        return JSONResponse(_error_body(e), status_code=e.status)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, e):
        return JSONResponse({"code": "bad_request", "message": str(e)}, status_code=400)

    @app.exception_handler(json.JSONDecodeError)
    async def _bad_json(request, e):
        return JSONResponse({"code": "bad_request", "message": f"invalid JSON: {e}"}, status_code=400)

    @app.exception_handler(Exception)
    async def _internal(request, e):
        logger.exception("unhandled error")
        return JSONResponse({"code": "internal_error", "message": str(e)}, status_code=500)

    async def body(request, default=None):
        raw = await request.body()
        if not raw:
            return default
        return json.loads(raw)

    def written(payload, status=200):
        resp = JSONResponse(payload, status_code=status)
        resp.headers[SNAPSHOT_HEADER] = str(cat.current_snapshot())
        return resp

    def need(payload, *keys):
        if not isinstance(payload, dict):
            raise ValidationError("request body must be a JSON object", code="bad_request")
        missing = [k for k in keys if k not in payload]
        if missing:
            raise ValidationError(f"request body lacks {', '.join(missing)}", code="bad_request")
        return payload

    # -- catalog -------------------------------------------------------------
    @app.get("/")
    def info():
        return {"snapshot": cat.current_snapshot(), "rid_prefix": cat.rid_prefix,
                "base_url": cat.base_url}

    @app.get("/export")
    def export(snapshot: int | None = None):
        return Response(export_catalog(cat, snapshot), media_type="application/json")

    # -- schema ----------------------------------------------------------------
    @app.get("/schema")
    def schema_list():
        return [t.to_dict() for t in sorted(cat.tables(), key=lambda t: t.name)]

    @app.post("/schema")
    async def schema_define(request: Request):
        p = need(await body(request), "name")
        tdef = await run_in_threadpool(ml.define_table, p["name"], p.get("columns", ()),
                                       p.get("kind", "table"), p.get("curie_prefix"),
                                       p.get("schema", "domain"))
        return written(tdef.to_dict(), 201)

    @app.get("/schema/{table_ref}")
    def schema_show(table_ref: str):
        name, at = split_ref(table_ref)
        return cat.table(name, as_of=parse_snapshot(at)).to_dict()

    # -- entities --------------------------------------------------------------
    @app.get("/entity/{table_ref}")
    def entity_get(table_ref: str, request: Request):
        name, at = split_ref(table_ref)
        snap = parse_snapshot(at)
        tdef = cat.table(name, as_of=snap)
        params = request.query_params
        filters = []
        for key, value in params.multi_items():
            if key in ("limit", "offset"):
                continue
            col = tdef.column(key) if key not in ("RID", "RCT", "RMT") else None
            filters.append((key, "=", col.from_text(value) if col else value))
        rows = cat.query_entities(name, filters, as_of=snap)
        offset = int(params.get("offset", 0))
        limit = params.get("limit")
        rows = rows[offset:offset + int(limit)] if limit is not None else rows[offset:]
        if "text/csv" in request.headers.get("accept", ""):
            return PlainTextResponse(rows_csv(tdef, rows), media_type="text/csv")
        return rows

    async def _rows_from(request, tdef):
        if "text/csv" in request.headers.get("content-type", ""):
            text = (await request.body()).decode("utf-8")
            out = []
            for rec in csv.DictReader(io.StringIO(text)):
                out.append({k: (v if k == "RID" else tdef.column(k).from_text(v))
                            for k, v in rec.items()})
            return out
        payload = await body(request, [])
        rows = payload if isinstance(payload, list) else [payload]
        if not all(isinstance(r, dict) for r in rows):
            raise ValidationError("rows must be JSON objects", code="bad_request")
        return rows

    @app.post("/entity/{table}")
    async def entity_post(table: str, request: Request):
        tdef = cat.table(table)
        rows = await _rows_from(request, tdef)
        rids = await run_in_threadpool(cat.insert_entities, table, rows)
        return written([cat.get_entity(r)[1] for r in rids], 201)

    @app.put("/entity/{table}")
    async def entity_put(table: str, request: Request):
        tdef = cat.table(table)
        rows = await _rows_from(request, tdef)
        updates = []
        for r in rows:
            if "RID" not in r:
                raise ValidationError("each updated row needs a RID", code="bad_request")
            updates.append((r["RID"], {k: v for k, v in r.items() if k != "RID"}))
        await run_in_threadpool(cat.update_entities, table, updates)
        return written([cat.get_entity(rid)[1] for rid, _ in updates])

    @app.delete("/entity/{table}")
    async def entity_delete(table: str, request: Request):
        rids = request.query_params.getlist("RID")
        if not rids:
            raise ValidationError("DELETE needs at least one RID parameter", code="bad_request")
        await run_in_threadpool(cat.delete_entities, table, rids)
        return written({"deleted": rids})

    # -- vocabularies and features (extensions) ---------------------------------
    @app.get("/vocab")
    def vocab_list():
        return ml.vocab.list_vocabularies()

    @app.post("/vocab")
    async def vocab_create(request: Request):
        p = need(await body(request), "name", "curie_prefix")
        await run_in_threadpool(ml.vocab.create_vocabulary, p["name"], p["curie_prefix"])
        return written(cat.table(p["name"]).to_dict(), 201)

    @app.get("/vocab/{name}")
    def vocab_terms(name: str):
        return [t.to_dict() for t in ml.vocab.list_terms(name)]

    @app.get("/vocab/{name}/term/{text}")
    def vocab_find(name: str, text: str):
        return ml.vocab.lookup_term(name, text).to_dict()

    @app.post("/vocab/{name}")
    async def vocab_add(name: str, request: Request):
        p = need(await body(request), "name")
        term = await run_in_threadpool(ml.vocab.add_term, name, p["name"], p.get("synonyms", ()),
                                       p.get("description"), bool(p.get("exist_ok", False)))
        return written(term.to_dict(), 201)

    @app.post("/workflow")
    async def workflow_register(request: Request):
        p = need(await body(request), "name", "url", "checksum")
        rid = await run_in_threadpool(ml.executions.register_workflow, p["name"], p["url"],
                                      p.get("workflow_type"), None, p["checksum"],
                                      p.get("version"), p.get("description"))
        return written(cat.get_entity(rid)[1], 201)

    @app.get("/workflow")
    def workflow_list():
        return cat.query_entities("Workflow")

    @app.post("/feature")
    async def feature_define(request: Request):
        p = need(await body(request), "target_table", "feature_name", "value_columns")
        f = await run_in_threadpool(ml.features.create_feature, p["target_table"],
                                    p["feature_name"], p["value_columns"], p.get("description"))
        return written(f.to_dict(), 201)

    @app.get("/feature/{target}")
    def feature_list(target: str):
        return [f.to_dict() for f in ml.features.list_features(target)]

    @app.post("/feature/{target}/{name}")
    async def feature_add(target: str, name: str, request: Request):
        p = need(await body(request), "execution", "records")
        feature = ml.features.feature(target, name)
        rids = await run_in_threadpool(ml.features.add_feature_values, p["execution"], feature,
                                       p["records"])
        return written(rids, 201)

    @app.get("/feature/{target}/{name_ref}")
    def feature_values(target: str, name_ref: str):
        name, at = split_ref(name_ref)
        return ml.features.feature_values(target, name, as_of=parse_snapshot(at))

    # -- datasets --------------------------------------------------------------
    @app.post("/dataset")
    async def dataset_create(request: Request):
        p = need(await body(request), "description")
        rid, version = await run_in_threadpool(ml.datasets.create_dataset, p["description"],
                                               p.get("types", ()), p.get("execution"))
        return written({"RID": rid, "version": str(version)}, 201)

    @app.post("/dataset/check-disjoint")
    async def dataset_disjoint(request: Request):
        p = need(await body(request), "datasets")
        entries = [d if isinstance(d, str) else tuple(d) for d in p["datasets"]]
        report = ml.datasets.check_disjoint(entries, flatten=p.get("flatten", True))
        return {"overlaps": {m: report.overlaps[m] for m in report.overlapping}}

    @app.get("/dataset/{rid}")
    def dataset_show(rid: str):
        latest = ml.datasets.version_record(rid)
        _, row = cat.get_entity(rid)
        return {"RID": rid, "description": row["Description"],
                "types": ml.datasets.dataset_types(rid), "version": str(latest.version)}

    @app.post("/dataset/{rid}/members")
    async def dataset_add(rid: str, request: Request):
        p = need(await body(request), "members")
        members = [m if isinstance(m, str) else tuple(m) for m in p["members"]]
        version = await run_in_threadpool(ml.datasets.add_members, rid, members,
                                          p.get("execution"), p.get("description"))
        return written({"version": str(version)})

    @app.delete("/dataset/{rid}/members")
    async def dataset_remove(rid: str, request: Request):
        members = request.query_params.getlist("member")
        version = await run_in_threadpool(ml.datasets.remove_members, rid, members,
                                          request.query_params.get("execution"),
                                          request.query_params.get("description"))
        return written({"version": str(version)})

    @app.post("/dataset/{rid}/version")
    async def dataset_bump(rid: str, request: Request):
        p = need(await body(request), "level")
        version = await run_in_threadpool(ml.datasets.increment_version, rid, p["level"],
                                          p.get("description"), p.get("execution"))
        return written({"version": str(version)})

    @app.get("/dataset/{rid}/versions")
    def dataset_versions(rid: str):
        return [v.to_dict() for v in ml.datasets.list_versions(rid)]

    @app.get("/dataset/{rid}/members")
    def _members_latest(rid: str, flatten: bool = False):
        return dataset_members(rid, None, flatten)

    @app.get("/dataset/{rid}/members@{version}")
    def _members_at(rid: str, version: str, flatten: bool = False):
        return dataset_members(rid, version, flatten)

    def dataset_members(rid, version, flatten):
        return [{"RID": m, "table": t}
                for m, t in ml.datasets.dataset_members(rid, version, flatten=flatten)]

    # -- identifiers -----------------------------------------------------------
    @app.get("/id/{ident}")
    def id_resolve(ident: str):
        return ml.resolve_minid(ident).to_dict()

    @app.post("/id")
    async def id_register(request: Request):
        p = need(await body(request), "dataset")
        minid = await run_in_threadpool(ml.publish_dataset, p["dataset"], p.get("version"),
                                        p.get("title"))
        return written(minid.to_dict(), 201)

    # -- object store ----------------------------------------------------------
    @app.put("/store/{path:path}")
    async def store_put(path: str, request: Request):
        spool = tempfile.SpooledTemporaryFile(max_size=8 << 20)
        async for chunk in request.stream():
            spool.write(chunk)
        spool.seek(0)
        obj = await run_in_threadpool(
            ml.store.put_object, "/" + path, spool,
            request.headers.get("x-checksum-sha256"),
            request.headers.get("content-type"), request.headers.get("x-checksum-md5"))
        resp = JSONResponse(obj.to_dict(), status_code=201)
        resp.headers["Location"] = f"/store{obj.versioned_path}"
        return resp

    def _head(path):
        obj_path, version = split_version("/" + path)
        return ml.store.head_object(obj_path, version)

    def _obj_headers(obj):
        return {"Content-Length": str(obj.length), "ETag": f'"{obj.checksum}"',
                "X-Version-Id": obj.version_id, "X-Checksum-SHA256": obj.checksum,
                "Content-Type": obj.content_type}

    @app.head("/store/{path:path}")
    def store_head(path: str):
        return Response(headers=_obj_headers(_head(path)))

    @app.get("/store/{path:path}")
    def store_get(path: str, versions: bool = False):
        if path == "" or path.endswith("/"):
            base = "/" + path.rstrip("/")
            found = ml.store.list_namespace(base or "/")
            strip = len(base) + 1 if base else 1
            if not found and base:
                raise NotFoundError(f"no namespace {base}", code="object_not_found")
            return [p[strip:] for p in found]
        if versions:
            return [v.to_dict() for v in ml.store.versions("/" + path)]
        obj_path, version = split_version("/" + path)
        data, obj = ml.store.get_object(obj_path, version)
        headers = _obj_headers(obj)
        headers.pop("Content-Length")
        return Response(data, media_type=obj.content_type, headers=headers)

    # -- executions ------------------------------------------------------------
    def find_handle(rid):
        if exec_dir.is_dir():
            for f in sorted(exec_dir.glob(f"*/{HANDLE_FILE}")):
                if json.loads(f.read_text())["execution"] == rid:
                    return ExecutionHandle.load(f.parent)
        raise NotFoundError(f"no staged execution {rid} on this service", code="unknown_execution")

    @app.post("/execution")
    async def execution_begin(request: Request):
        p = await body(request)
        if not isinstance(p, dict):
            raise ValidationError("request body must be a configuration object", code="bad_request")
        root = p.pop("exec_root", None) if "config" in p else None
        cfg = ExecutionConfig.from_dict(p["config"] if "config" in p else p)
        root = Path(root) if root else exec_dir / uuid.uuid4().hex
        try:
            handle = await run_in_threadpool(ml.executions.execution_begin, cfg, root)
        except StagingError as e:
            resp = JSONResponse(_error_body(e), status_code=e.status)
            resp.headers[SNAPSHOT_HEADER] = str(cat.current_snapshot())
            return resp
        return written(_handle_dict(handle), 201)

    def _handle_dict(h):
        return {"execution": h.execution, "root": str(h.root), "workflow": h.workflow,
                "parameters": h.parameters,
                "datasets": {k: str(v) for k, v in h.datasets.items()},
                "assets": {k: str(v) for k, v in h.assets.items()}}

    @app.post("/execution/{rid}/finish")
    async def execution_finish(rid: str, request: Request):
        p = need(await body(request, {}) or {})
        handle = ExecutionHandle.load(p["root"]) if p.get("root") else find_handle(rid)
        if handle.execution != rid:
            raise ValidationError(f"{handle.root} holds execution {handle.execution}, not {rid}",
                                  code="wrong_execution")
        rec = await run_in_threadpool(ml.executions.execution_end, handle,
                                      p.get("status", "completed"), p.get("detail"))
        return written(rec.to_dict())

    @app.post("/execution/reap")
    async def execution_reap(request: Request):
        p = need(await body(request, {}) or {})
        reaped = await run_in_threadpool(ml.executions.reap, p.get("executions"),
                                         bool(p.get("force", False)))
        return written(reaped)

    @app.get("/execution/{rid}")
    def execution_show(rid: str):
        rec = ml.executions.record(rid).to_dict()
        rec["assets"] = [{"RID": a, "table": t, "role": r} for a, t, r in ml.executions.links(rid)]
        rec["dataset_versions"] = ml.executions.input_versions(rid)
        return rec

    # -- lineage ---------------------------------------------------------------
    @app.get("/lineage/{ref}")
    def lineage(ref: str, direction: str = "upstream", depth: int | None = None,
                format: str = "json"):
        g = ml.lineage.lineage(ref, direction, depth)
        if format == "dot":
            return PlainTextResponse(g.to_dot(), media_type="text/vnd.graphviz")
        if format == "jsonl":
            return PlainTextResponse(g.to_jsonl(), media_type="application/x-ndjson")
        return g.to_dict()

    return app


def serve(root, host="127.0.0.1", port=8080, cache_dir=None, exec_dir=None):
    """Run the service until interrupted (uvicorn handles SIGINT/SIGTERM)."""
    import uvicorn

    ml = MLCatalog.open(root, cache_dir=cache_dir)
    app = create_app(ml, exec_dir)
    config = uvicorn.Config(app, host=host, port=port, log_level="info")
    server = uvicorn.Server(config)
    try:
        server.run()
    except OSError as e:
        raise CatalogError(f"cannot bind {host}:{port}: {e.strerror}", code="bind_failed") from None
