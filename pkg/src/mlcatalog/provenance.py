"""Lineage graph derived on demand from stored link rows.

Edges point from producer to consumer: ``src`` is upstream of ``dst``.

============  ==============  ==============  ===========================
relation      src             dst             stored link
============  ==============  ==============  ===========================
input_to      asset / version execution       Execution_Asset (input),
                                              Execution_Dataset
output_of     execution       asset           Execution_Asset (output)
generated_by  execution       version / value Dataset_Version.Execution,
                                              feature value Execution
uses_workflow workflow        execution       Execution.Workflow
member_of     member          version         Dataset_Member
============  ==============  ==============  ===========================
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

from .datasets import SemanticVersion
from .errors import NotFoundError, ValidationError
from .rid import rid_sort_key

KINDS = ("dataset_version", "execution", "workflow", "asset", "feature_value", "record")


@dataclass(frozen=True)
class LineageNode:
    kind: str
    rid: str
    label: str = ""

    def to_dict(self):
        return {"kind": self.kind, "rid": self.rid, "label": self.label}


@dataclass(frozen=True)
class LineageEdge:
    src: str
    dst: str
    relation: str

    def to_dict(self):
        return {"src": self.src, "dst": self.dst, "relation": self.relation}


@dataclass
class LineageGraph:
    root: str
    nodes: list
    edges: list

    def node_ids(self):
        return [n.rid for n in self.nodes]

    def to_dict(self):
        return {"root": self.root, "nodes": [n.to_dict() for n in self.nodes],
                "edges": [e.to_dict() for e in self.edges]}

    def to_jsonl(self):
        lines = [json.dumps(dict(n.to_dict(), type="node"), sort_keys=True) for n in self.nodes]
        lines += [json.dumps(dict(e.to_dict(), type="edge"), sort_keys=True) for e in self.edges]
        return "\n".join(lines) + "\n"

    def to_dot(self):
        shapes = {"execution": "box", "workflow": "hexagon", "dataset_version": "folder",
                  "asset": "note", "feature_value": "ellipse", "record": "plain"}
        out = ["digraph lineage {", "  rankdir=LR;"]
        for n in self.nodes:
            label = f"{n.kind}\\n{n.label or n.rid}"
            out.append(f'  "{n.rid}" [shape={shapes[n.kind]}, label="{label}"];')
        for e in self.edges:
            out.append(f'  "{e.src}" -> "{e.dst}" [label="{e.relation}"];')
        out.append("}")
        return "\n".join(out) + "\n"


class _Graph:
    def __init__(self):
        self.nodes = {}
        self.out = {}
        self.inc = {}
        self.edges = set()

    def node(self, kind, rid, label=""):
        if rid not in self.nodes:
            self.nodes[rid] = LineageNode(kind, rid, label)
            self.out[rid] = []
            self.inc[rid] = []
        return rid

    def edge(self, src, dst, relation):
        e = LineageEdge(src, dst, relation)
        if e not in self.edges:
            self.edges.add(e)
            self.out[src].append(e)
            self.inc[dst].append(e)


class Lineage:
    def __init__(self, catalog, vocab):
        self.catalog = catalog
        self.vocab = vocab

    def _kind(self, table):
        if table == "Dataset_Version":
            return "dataset_version"
        if table in ("Execution", "Workflow"):
            return table.lower()
        tdef = self.catalog.table(table)
        if tdef.kind == "asset":
            return "asset"
        if table in self._feature_tables():
            return "feature_value"
        return "record"

    def _feature_tables(self):
        return {r["Table_Name"] for r in self.catalog.query_entities("Feature_Definition")}

    def build(self):
        """The full graph at the current snapshot."""
        cat, g = self.catalog, _Graph()
        role = {r["RID"]: r["Name"] for r in cat.query_entities("Asset_Role")}
        versions = cat.query_entities("Dataset_Version")
        by_dataset = {}
        for v in versions:
            g.node("dataset_version", v["RID"], f"{v['Dataset']}@{v['Version']}")
            by_dataset.setdefault(v["Dataset"], []).append(v)
        for w in cat.query_entities("Workflow"):
            g.node("workflow", w["RID"], w["Name"])
        for e in cat.query_entities("Execution"):
            g.node("execution", e["RID"])
            if e["Workflow"]:
                g.edge(e["Workflow"], e["RID"], "uses_workflow")
        for v in versions:
            if v["Execution"]:
                g.edge(v["Execution"], v["RID"], "generated_by")

        def member_node(rid, table, snapshot):
            if table == "Dataset":
                # a nested dataset stands for its latest version at the parent's snapshot
                cands = [c for c in by_dataset.get(rid, []) if c["Snapshot"] <= snapshot]
                if not cands:
                    return None
                return max(cands, key=lambda c: SemanticVersion.parse(c["Version"]))["RID"]
            return g.node(self._kind(table), rid, table)

        for dataset, vs in by_dataset.items():
            for v in vs:
                rows = cat.query_entities("Dataset_Member", {"Dataset": dataset}, as_of=v["Snapshot"])
                for m in rows:
                    src = member_node(m["Member"], m["Member_Table"], v["Snapshot"])
                    if src is not None:
                        g.edge(src, v["RID"], "member_of")
        for link in cat.query_entities("Execution_Asset"):
            a = g.node("asset", link["Asset"], link["Asset_Table"])
            if role.get(link["Asset_Role"]) == "output":
                g.edge(link["Execution"], a, "output_of")
            else:
                g.edge(a, link["Execution"], "input_to")
        for link in cat.query_entities("Execution_Dataset"):
            g.edge(link["Dataset_Version"], link["Execution"], "input_to")
        for fdef in cat.query_entities("Feature_Definition"):
            for row in cat.query_entities(fdef["Table_Name"]):
                g.node("feature_value", row["RID"], fdef["Table_Name"])
                g.edge(row["Execution"], row["RID"], "generated_by")
        return g

    def resolve_ref(self, ref):
        """Accept a RID, or ``<dataset RID>@<version>`` for a dataset version."""
        if "@" in ref:
            dataset, _, version = ref.partition("@")
            rows = self.catalog.query_entities("Dataset_Version", {"Dataset": dataset})
            want = str(SemanticVersion.parse(version))
            for r in rows:
                if r["Version"] == want:
                    return r["RID"]
            raise NotFoundError(f"no version {version} of {dataset}", code="unknown_node")
        try:
            table = self.catalog.table_of(ref)
        except NotFoundError:
            raise NotFoundError(f"unknown lineage node {ref}", code="unknown_node") from None
        if table == "Dataset":
            rows = self.catalog.query_entities("Dataset_Version", {"Dataset": ref})
            return max(rows, key=lambda r: SemanticVersion.parse(r["Version"]))["RID"]
        return ref

    def lineage(self, ref, direction="upstream", max_depth=None):
        if direction not in ("upstream", "downstream", "both"):
            raise ValidationError(f"direction must be upstream, downstream or both, not {direction!r}")
        if max_depth is not None and max_depth < 1:
            raise ValidationError("max_depth must be at least 1")
        start = self.resolve_ref(ref)
        g = self.build()
        if start not in g.nodes:
            table, _ = self.catalog.get_entity(start)
            g.node(self._kind(table), start, table)
        depth = {start: 0}
        edges = set()
        dirs = ["upstream", "downstream"] if direction == "both" else [direction]
        for d in dirs:
            seen = {start: 0}
            queue = deque([start])
            while queue:
                cur = queue.popleft()
                if max_depth is not None and seen[cur] >= max_depth:
                    continue
                for e in (g.inc[cur] if d == "upstream" else g.out[cur]):
                    nxt = e.src if d == "upstream" else e.dst
                    edges.add(e)
                    if nxt not in seen:
                        seen[nxt] = seen[cur] + 1
                        queue.append(nxt)
            for n, k in seen.items():
                depth[n] = min(k, depth.get(n, k))
        order = sorted(depth, key=lambda n: (depth[n], rid_sort_key(n)))
        keep = set(order)
        edge_list = sorted((e for e in edges if e.src in keep and e.dst in keep),
                           key=lambda e: (rid_sort_key(e.src), rid_sort_key(e.dst), e.relation))
        return LineageGraph(start, [g.nodes[n] for n in order], edge_list)

    def executions_using(self, dataset, version=None):
        rows = self.catalog.query_entities("Dataset_Version", {"Dataset": dataset})
        if not rows:
            raise NotFoundError(f"unknown dataset {dataset}", code="unknown_dataset")
        if version is not None:
            want = str(SemanticVersion.parse(version))
            rows = [r for r in rows if r["Version"] == want]
            if not rows:
                raise NotFoundError(f"dataset {dataset} has no version {want}", code="unknown_version")
        rids = {r["RID"] for r in rows}
        found = {link["Execution"] for link in self.catalog.query_entities("Execution_Dataset")
                 if link["Dataset_Version"] in rids}
        return sorted(found, key=rid_sort_key)

    def origin_of(self, ref):
        """The execution that generated an asset, dataset version or feature value.

        Returns ``None`` for artifacts recorded without an execution.
        """
        rid = self.resolve_ref(ref)
        table, row = self.catalog.get_entity(rid)
        kind = self._kind(table)
        if kind == "dataset_version":
            return row["Execution"]
        if kind == "feature_value":
            return row["Execution"]
        if kind == "asset":
            outputs = self.vocab.term_rid("Asset_Role", "output")
            links = self.catalog.query_entities("Execution_Asset",
                                                {"Asset": rid, "Asset_Role": outputs})
            return links[0]["Execution"] if links else None
        raise ValidationError(f"{rid} is a {kind}; only assets, dataset versions and "
                              f"feature values have an origin", code="no_origin")
