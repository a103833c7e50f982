"""Canonical JSON dump of a whole catalog, used to compare catalogs byte for byte."""

from __future__ import annotations

import json

# Columns whose values depend on the wall clock or the host process.
VOLATILE = {("Execution", "Process"), ("Execution", "Duration")}


def export_catalog(catalog, as_of=None, stable=True):
    """Return canonical JSON bytes for every table at ``as_of``.

    With ``stable`` the system timestamps, timestamp-kind columns and the
    :data:`VOLATILE` columns are left out so that two replays of the same
    operations compare equal.
    """
    tables = sorted(catalog.tables(as_of=as_of), key=lambda t: t.name)
    out = {"schema": [t.to_dict() for t in tables], "tables": {}}
    for tdef in tables:
        drop = set()
        if stable:
            drop = {"RCT", "RMT"} | {c.name for c in tdef.columns if c.kind == "timestamp"}
            drop |= {col for t, col in VOLATILE if t == tdef.name}
        rows = catalog.query_entities(tdef.name, as_of=as_of)
        out["tables"][tdef.name] = [{k: v for k, v in r.items() if k not in drop} for r in rows]
    return (json.dumps(out, sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")
