"""Command-line entry point: ``mlcatalog <group> <command> ...``.

The catalog is a local directory or a service URL, taken from ``--catalog``,
then ``DERIVA_CATALOG``, then the ``catalog`` key of ``~/.deriva-ml.toml``.
The cache directory and output format follow the same order (``--cache`` /
``DERIVA_CACHE`` / ``cache``; ``--format`` / ``format``).

Exit status: 0 success, 1 bad arguments or references, 2 integrity failures
(checksums, invalid bags), 3 I/O or service failures.  Errors are written to
stderr as ``code: message``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .errors import CatalogError

CONFIG_ENV = "DERIVA_ML_CONFIG"
CONFIG_KEYS = ("catalog", "cache", "format")

EXIT_OK, EXIT_USER, EXIT_INTEGRITY, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("mlcatalog.cli")


class UsageError(CatalogError):
    code = "usage"


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for integrity errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_config(path=None):
    """Read the key-value config file; missing file means no settings."""
    try:
        import tomllib as tomli
    except ModuleNotFoundError:  # Python < 3.11
        import tomli

    path = Path(path or os.environ.get(CONFIG_ENV, "~/.deriva-ml.toml")).expanduser()
    if not path.is_file():
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as e:
        raise UsageError(f"{path}: {e}", code="bad_config") from None
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        logger.warning("%s: ignoring unknown keys %s", path, ", ".join(unknown))
    return {k: data[k] for k in CONFIG_KEYS if k in data}


def settings(args):
    conf = load_config(args.config_file)
    env = {"catalog": os.environ.get("DERIVA_CATALOG"), "cache": os.environ.get("DERIVA_CACHE")}
    flags = {"catalog": args.catalog, "cache": args.cache, "format": args.format}
    out = {}
    for key in CONFIG_KEYS:
        for source in (flags, env, conf):
            if source.get(key):
                out[key] = source[key]
                break
    out.setdefault("format", "table")
    if out["format"] not in ("table", "json"):
        raise UsageError(f"unknown output format {out['format']!r}", code="bad_config")
    return out


# -- output -------------------------------------------------------------------

def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def render(data, fmt):
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True, default=str)
    if isinstance(data, str):
        return data.rstrip("\n")
    if isinstance(data, dict):
        width = max((len(k) for k in data), default=0)
        return "\n".join(f"{k.ljust(width)}  {_cell(v)}" for k, v in data.items())
    if isinstance(data, list) and data and all(isinstance(r, dict) for r in data):
        cols = []
        for r in data:
            cols += [c for c in r if c not in cols]
        table = [cols] + [[_cell(r.get(c)) for c in cols] for r in data]
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()
                         for row in table)
    if isinstance(data, list):
        return "\n".join(_cell(v) for v in data)
    return _cell(data)


# -- argument helpers ------------------------------------------------------------

def _load_rows(args):
    if args.json:
        rows = json.loads(args.json)
    elif args.file:
        path = Path(args.file)
        if path.suffix == ".csv":
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
        else:
            rows = json.loads(path.read_text())
    else:
        raise UsageError("give rows with --json or --file")
    rows = rows if isinstance(rows, list) else [rows]
    if not all(isinstance(r, dict) for r in rows):
        raise UsageError("rows must be JSON objects")
    return rows


def _typed_rows(session, table, rows):
    """CSV cells arrive as text; convert them using the table definition."""
    cols = {c["name"]: c for c in session.table(table)["columns"]}
    from .catalog import ColumnDef

    out = []
    for r in rows:
        typed = {}
        for k, v in r.items():
            if isinstance(v, str) and k in cols:
                v = ColumnDef.from_dict(cols[k]).from_text(v)
            typed[k] = v
        out.append(typed)
    return out


def _where(pairs):
    out = {}
    for p in pairs or ():
        key, sep, value = p.partition("=")
        if not sep:
            raise UsageError(f"--where expects col=value, not {p!r}")
        out[key] = value
    return out


def _params(pairs):
    out = {}
    for p in pairs or ():
        key, sep, value = p.partition("=")
        if not sep:
            raise UsageError(f"--param expects name=value, not {p!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _dataset_entries(refs):
    return [tuple(r.split("@", 1)) if "@" in r else r for r in refs]


def _latest_version(session, dataset):
    return session.versions(dataset)[-1]["version"]


# -- commands -------------------------------------------------------------------

def cmd_catalog_init(args, conf):
    from .api import MLCatalog

    path = args.path or conf.get("catalog")
    if not path:
        raise UsageError("catalog init needs a path")
    ml = MLCatalog.create(path, cache_dir=conf.get("cache"), rid_prefix=args.rid_prefix,
                          base_url=args.base_url)
    return {"catalog": str(Path(path).resolve()), "snapshot": ml.catalog.current_snapshot(),
            "base_url": ml.catalog.base_url}


def cmd_catalog_serve(args, conf):
    from .service import serve

    location = conf.get("catalog")
    if not location or location.startswith(("http://", "https://")):
        raise UsageError("catalog serve needs a local catalog directory")
    serve(location, args.host, args.port, cache_dir=conf.get("cache"))
    return None


def cmd_catalog_snapshot(args, s):
    return s.snapshot()


def cmd_catalog_export(args, s):
    data = s.export(args.snapshot)
    if args.output:
        Path(args.output).write_bytes(data)
        return None
    return json.loads(data)


def cmd_schema_define(args, s):
    return s.define_table(args.name, args.column or (), args.kind, args.curie_prefix)


def cmd_schema_show(args, s):
    if args.table:
        return s.table(args.table, args.snapshot)
    return [{"name": t["name"], "kind": t["kind"], "schema": t["schema"]}
            for t in s.tables()]


def cmd_entity_insert(args, s):
    return s.insert(args.table, _typed_rows(s, args.table, _load_rows(args)))


def cmd_entity_update(args, s):
    return s.update(args.table, _typed_rows(s, args.table, _load_rows(args)))


def cmd_entity_delete(args, s):
    return s.delete(args.table, args.rids)


def cmd_entity_query(args, s):
    where = _where(args.where)
    if where:
        tdef = s.table(args.table, args.snapshot)
        from .catalog import ColumnDef
        cols = {c["name"]: ColumnDef.from_dict(c) for c in tdef["columns"]}
        where = {k: (cols[k].from_text(v) if k in cols else v) for k, v in where.items()}
    return s.query(args.table, where or None, args.snapshot)


def cmd_asset_upload(args, s):
    return [s.upload_asset(args.table, f, args.description) for f in args.files]


def cmd_vocab_create(args, s):
    return s.vocab_create(args.name, args.curie_prefix)


def cmd_vocab_add(args, s):
    return s.vocab_add(args.vocabulary, args.term, args.synonym or (), args.description,
                       args.exist_ok)


def cmd_vocab_find(args, s):
    return s.vocab_find(args.vocabulary, args.text)


def cmd_vocab_list(args, s):
    return s.vocab_list(args.vocabulary)


def cmd_dataset_create(args, s):
    return s.dataset_create(args.description, args.type or (), args.execution)


def cmd_dataset_add(args, s):
    return s.add_members(args.dataset, args.members, args.execution, args.description)


def cmd_dataset_remove(args, s):
    return s.remove_members(args.dataset, args.members, args.execution, args.description)


def cmd_dataset_bump(args, s):
    return s.bump(args.dataset, args.level, args.description, args.execution)


def cmd_dataset_versions(args, s):
    return s.versions(args.dataset)


def cmd_dataset_members(args, s):
    return s.members(args.dataset, args.version, args.flatten)


def cmd_dataset_download(args, s):
    return s.download(args.dataset, args.version, args.cache_dir, "full" if args.full else "tags")


def cmd_dataset_disjoint(args, s):
    overlaps = s.check_disjoint(_dataset_entries(args.datasets), not args.no_flatten)
    return [{"member": m, "datasets": d} for m, d in overlaps.items()]


def cmd_bag_export(args, s):
    version = args.version or _latest_version(s, args.dataset)
    if args.publish:
        return s.publish(args.dataset, version, args.title)
    if not args.dest:
        raise UsageError("bag export needs --dest (or --publish)")
    return s.export_bag(args.dataset, version, args.dest)


def cmd_bag_validate(args, conf):
    from .bag import validate_bag

    report = validate_bag(args.path, full=args.full)
    if not report.ok:
        args.exit_status = EXIT_INTEGRITY
        for path in report.failing_paths:
            print(f"invalid_bag: {path}: {'; '.join(report.failures[path])}", file=sys.stderr)
    return report.to_dict()


def cmd_bag_materialize(args, s):
    from .bag import materialize_bag

    checksum = None
    location = args.source
    if not location.startswith(("http://", "https://", "file://", "local:")):
        minid = s.resolve_minid(location)
        location, checksum = minid["locations"][0], minid["checksum"]
    materialize_bag(location, args.dest, s.transport(), expected_checksum=checksum)
    return {"path": str(Path(args.dest).resolve()), "location": location}


def cmd_workflow_register(args, s):
    if not (args.checksum or args.file):
        raise UsageError("workflow register needs --checksum or --file")
    return s.workflow_register(args.name, args.url, args.checksum, args.file, args.type,
                               args.version, args.description)


def cmd_workflow_list(args, s):
    return s.workflows()


def cmd_exec_run(args, s):
    from .execution import ExecutionConfig

    config = ExecutionConfig.load(args.config)
    if args.param:
        merged = config.to_dict()
        merged["parameters"].update(_params(args.param))
        config = ExecutionConfig.from_dict(merged)
    if args.script and not Path(args.script).is_file():
        raise UsageError(f"script {args.script} does not exist", code="no_script")
    handle = s.exec_begin(config, args.root)
    root = handle["root"]
    if not args.script:
        return handle
    try:
        status = s.exec_script(root, args.script)
    except KeyboardInterrupt:
        s.exec_end(root, "failed", "interrupted")
        raise
    except (CatalogError, OSError) as e:
        s.exec_end(root, "failed", f"script could not run: {e}")
        raise
    if args.no_finish:
        return dict(handle, exit_status=status)
    if status == 0:
        return s.exec_end(root, "completed")
    args.exit_status = EXIT_USER
    print(f"script_failed: {args.script} exited with status {status}", file=sys.stderr)
    return s.exec_end(root, "failed", f"script exited with status {status}")


def cmd_exec_finish(args, s):
    return s.exec_end(args.root, "completed", args.detail)


def cmd_exec_fail(args, s):
    return s.exec_end(args.root, "failed", args.detail or "failed by operator")


def cmd_exec_reap(args, s):
    return s.reap(args.executions or None, args.force)


def cmd_exec_show(args, s):
    return s.exec_show(args.execution)


def cmd_feature_define(args, s):
    return s.feature_define(args.target, args.name, args.column, args.description)


def cmd_feature_add(args, s):
    return s.feature_add(args.execution, args.target, args.name, _load_rows(args))


def cmd_feature_values(args, s):
    return s.feature_values(args.target, args.name, args.snapshot)


def cmd_lineage(args, s):
    fmt = args.graph_format
    if fmt in ("dot", "jsonl"):
        return s.lineage(args.ref, args.direction, args.depth, fmt)
    graph = s.lineage(args.ref, args.direction, args.depth)
    if (fmt or args.format) == "json":
        return graph
    lines = [f"{n['kind']:<16} {n['rid']:<14} {n['label']}".rstrip() for n in graph["nodes"]]
    lines += [f"{e['src']} -> {e['dst']}  {e['relation']}" for e in graph["edges"]]
    return "\n".join(lines)


# commands that do not talk to a catalog get the settings instead of a session
_NO_SESSION = {cmd_catalog_init, cmd_catalog_serve, cmd_bag_validate}


def _global_options(parser, default=None, output_format=True):
    parser.add_argument("--catalog", default=default, help="catalog directory or service URL")
    parser.add_argument("--cache", default=default, help="dataset cache directory")
    if output_format:
        parser.add_argument("--format", default=default, choices=("table", "json"),
                            help="output format")
    parser.add_argument("--config-file", default=default,
                        help="settings file (default ~/.deriva-ml.toml)")
    parser.add_argument("-v", "--verbose", action="store_true", default=default or False)


def build_parser():
    p = ArgumentParser(prog="mlcatalog", description="Versioned catalog for ML datasets, executions and provenance.",
                       epilog="exit status: 0 ok, 1 usage or reference error, 2 integrity error, "
                              "3 I/O or service error")
    _global_options(p)
    # the same options are accepted after the command; SUPPRESS keeps unset ones from clobbering
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, argparse.SUPPRESS)
    common_graph = argparse.ArgumentParser(add_help=False)
    _global_options(common_graph, argparse.SUPPRESS, output_format=False)
    groups = p.add_subparsers(dest="group", metavar="<group>", required=True)

    def group(name, help):
        g = groups.add_parser(name, help=help)
        return g.add_subparsers(dest="command", metavar="<command>", required=True)

    def command(sub, name, func, help):
        c = sub.add_parser(name, help=help, parents=[common])
        c.set_defaults(func=func)
        return c

    def rows_input(c):
        c.add_argument("--json", help="rows as a JSON list of objects")
        c.add_argument("--file", help="rows from a .json or .csv file")

    g = group("catalog", "create, serve and inspect catalogs")
    c = command(g, "init", cmd_catalog_init, "create a new catalog directory")
    c.add_argument("path", nargs="?")
    c.add_argument("--rid-prefix", default="1")
    c.add_argument("--base-url", default="local:",
                   help="URL clients use to reach this catalog's store (e.g. the service URL)")
    c = command(g, "serve", cmd_catalog_serve, "run the HTTP service")
    c.add_argument("--host", default="127.0.0.1")
    c.add_argument("--port", type=int, default=8080)
    command(g, "snapshot", cmd_catalog_snapshot, "print the current snapshot id")
    c = command(g, "export", cmd_catalog_export, "canonical JSON dump of catalog content")
    c.add_argument("--snapshot", type=int)
    c.add_argument("--output", "-o")

    g = group("schema", "define and show tables")
    c = command(g, "define-table", cmd_schema_define, "define a table")
    c.add_argument("name")
    c.add_argument("--column", "-c", action="append", help="name:type, e.g. Age:integer")
    c.add_argument("--kind", choices=("table", "asset", "vocabulary"), default="table")
    c.add_argument("--curie-prefix")
    c = command(g, "show", cmd_schema_show, "list tables or show one")
    c.add_argument("table", nargs="?")
    c.add_argument("--snapshot", type=int)

    g = group("entity", "insert, update, delete and query rows")
    for name, func in (("insert", cmd_entity_insert), ("update", cmd_entity_update)):
        c = command(g, name, func, f"{name} rows")
        c.add_argument("table")
        rows_input(c)
    c = command(g, "delete", cmd_entity_delete, "delete rows by RID")
    c.add_argument("table")
    c.add_argument("rids", nargs="+")
    c = command(g, "query", cmd_entity_query, "list rows")
    c.add_argument("table")
    c.add_argument("--where", action="append", help="col=value equality filter")
    c.add_argument("--snapshot", type=int)

    g = group("asset", "upload files into asset tables")
    c = command(g, "upload", cmd_asset_upload, "upload files")
    c.add_argument("table")
    c.add_argument("files", nargs="+")
    c.add_argument("--description")

    g = group("vocab", "controlled vocabularies")
    c = command(g, "create", cmd_vocab_create, "create a vocabulary table")
    c.add_argument("name")
    c.add_argument("--curie-prefix", required=True)
    c = command(g, "add", cmd_vocab_add, "add a term")
    c.add_argument("vocabulary")
    c.add_argument("term")
    c.add_argument("--synonym", action="append")
    c.add_argument("--description")
    c.add_argument("--exist-ok", action="store_true")
    c = command(g, "find", cmd_vocab_find, "look a term up by name, synonym, CURIE or RID")
    c.add_argument("vocabulary")
    c.add_argument("text")
    c = command(g, "list", cmd_vocab_list, "list vocabularies, or the terms of one")
    c.add_argument("vocabulary", nargs="?")

    g = group("dataset", "datasets and their versions")
    c = command(g, "create", cmd_dataset_create, "create an empty dataset")
    c.add_argument("--description", required=True)
    c.add_argument("--type", action="append")
    c.add_argument("--execution")
    for name, func in (("add-members", cmd_dataset_add), ("remove-members", cmd_dataset_remove)):
        c = command(g, name, func, f"{name.split('-')[0]} members and bump the version")
        c.add_argument("dataset")
        c.add_argument("members", nargs="+")
        c.add_argument("--execution")
        c.add_argument("--description")
    c = command(g, "bump", cmd_dataset_bump, "increment the version")
    c.add_argument("dataset")
    c.add_argument("--level", choices=("major", "minor", "patch"), required=True)
    c.add_argument("--description")
    c.add_argument("--execution")
    c = command(g, "versions", cmd_dataset_versions, "version history")
    c.add_argument("dataset")
    c = command(g, "members", cmd_dataset_members, "members at a version")
    c.add_argument("dataset")
    c.add_argument("--version")
    c.add_argument("--flatten", action="store_true", help="include members of nested datasets")
    c = command(g, "download", cmd_dataset_download, "materialize a version into the cache")
    c.add_argument("dataset")
    c.add_argument("--version")
    c.add_argument("--cache-dir")
    c.add_argument("--full", action="store_true", help="fully re-verify a cached copy")
    c = command(g, "check-disjoint", cmd_dataset_disjoint, "report members shared by datasets")
    c.add_argument("datasets", nargs="+", help="RID or RID@version")
    c.add_argument("--no-flatten", action="store_true")

    g = group("bag", "export, validate and materialize bags")
    c = command(g, "export", cmd_bag_export, "write a dataset version as a bag")
    c.add_argument("dataset")
    c.add_argument("--version")
    c.add_argument("--dest")
    c.add_argument("--publish", action="store_true", help="publish to the store and register a minid")
    c.add_argument("--title")
    c = command(g, "validate", cmd_bag_validate, "validate a bag directory")
    c.add_argument("path")
    c.add_argument("--full", action="store_true", help="also digest payload files")
    c = command(g, "materialize", cmd_bag_materialize, "fetch a bag and its remote files")
    c.add_argument("source", help="minid or bag URL")
    c.add_argument("--dest", required=True)

    g = group("workflow", "workflows")
    c = command(g, "register", cmd_workflow_register, "register (or find) a workflow")
    c.add_argument("name")
    c.add_argument("url")
    c.add_argument("--checksum")
    c.add_argument("--file")
    c.add_argument("--type")
    c.add_argument("--version")
    c.add_argument("--description")
    command(g, "list", cmd_workflow_list, "list workflows")

    g = group("exec", "executions")
    c = command(g, "run", cmd_exec_run, "start an execution, optionally run a script and finish")
    c.add_argument("--config", required=True)
    c.add_argument("--root", required=True)
    c.add_argument("--script")
    c.add_argument("--param", action="append", help="name=value added to the parameters")
    c.add_argument("--no-finish", action="store_true", help="leave running after the script")
    for name, func, help in (("finish", cmd_exec_finish, "upload outputs and mark completed"),
                             ("fail", cmd_exec_fail, "upload outputs and mark failed")):
        c = command(g, name, func, help)
        c.add_argument("root")
        c.add_argument("--detail")
    c = command(g, "reap", cmd_exec_reap, "fail running executions whose process is gone")
    c.add_argument("executions", nargs="*")
    c.add_argument("--force", action="store_true")
    c = command(g, "show", cmd_exec_show, "show an execution")
    c.add_argument("execution")

    g = group("feature", "features")
    c = command(g, "define", cmd_feature_define, "define a feature on a table")
    c.add_argument("target")
    c.add_argument("name")
    c.add_argument("--column", "-c", action="append", required=True)
    c.add_argument("--description")
    c = command(g, "add", cmd_feature_add, "add feature values from an execution")
    c.add_argument("target")
    c.add_argument("name")
    c.add_argument("--execution", required=True)
    rows_input(c)
    c = command(g, "values", cmd_feature_values, "list feature values")
    c.add_argument("target")
    c.add_argument("name")
    c.add_argument("--snapshot", type=int)

    c = groups.add_parser("lineage", help="lineage of a record", parents=[common_graph])
    c.set_defaults(func=cmd_lineage, direction="upstream")
    c.add_argument("ref", help="RID, dataset RID or RID@version")
    d = c.add_mutually_exclusive_group()
    d.add_argument("--up", dest="direction", action="store_const", const="upstream")
    d.add_argument("--down", dest="direction", action="store_const", const="downstream")
    d.add_argument("--both", dest="direction", action="store_const", const="both")
    c.add_argument("--depth", type=int)
    c.add_argument("--format", dest="graph_format", choices=("table", "json", "dot", "jsonl"),
                   help="output format; dot and jsonl print the graph as-is")
    return p


def _exit_code(e):
    return getattr(e, "exit_code", EXIT_USER)


def run(argv=None, http_client=None):
    """Parse ``argv`` and run one command; return ``(exit status, output data)``."""
    args = build_parser().parse_args(argv)
    args.exit_status = EXIT_OK
    conf = settings(args)
    if args.func in _NO_SESSION:
        data = args.func(args, conf)
        return args.exit_status, data, conf
    if not conf.get("catalog"):
        raise UsageError("no catalog given (--catalog, DERIVA_CATALOG or the config file)",
                         code="no_catalog")
    from .session import open_session

    session = open_session(conf["catalog"], conf.get("cache"), http_client)
    data = args.func(args, session)
    if getattr(args, "graph_format", None) == "json":
        conf["format"] = "json"
    return args.exit_status, data, conf


def main(argv=None, http_client=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        status, data, conf = run(argv, http_client)
    except CatalogError as e:
        print(f"{e.code}: {e.message}", file=sys.stderr)
        execution = getattr(e, "execution", None)
        if execution:
            print(f"execution: {execution}", file=sys.stderr)
        return _exit_code(e)
    except json.JSONDecodeError as e:
        print(f"bad_json: {e}", file=sys.stderr)
        return EXIT_USER
    except OSError as e:
        print(f"io_error: {e}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted: stopped by user", file=sys.stderr)
        return 130
    if data is not None:
        print(render(data, conf["format"]))
    return status


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
