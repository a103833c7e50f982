"""Tables and vocabularies every catalog starts with."""

from .catalog import ColumnDef as C
from .catalog import TableDef

ML_TABLES = (
    "Dataset",
    "Dataset_Version",
    "Dataset_Member",
    "Workflow",
    "Execution",
    "Execution_Asset",
    "Feature_Definition",
    "Minid",
)

BUILTIN_VOCABULARIES = {
    "Dataset_Type": ("DT", ["training", "validation", "testing"]),
    "Execution_Status": ("ES", ["created", "running", "completed", "failed"]),
    "Asset_Role": ("AR", ["input", "output"]),
    "Feature_Name": ("FN", []),
    "Workflow_Type": ("WT", []),
    "Annotation_Type": ("AT", []),
}

ASSET_COLUMNS = (
    C("URL", "text", nullable=False),
    C("Filename", "text", nullable=False),
    C("Length", "integer", nullable=False),
    C("Checksum", "text", nullable=False),
    C("MD5", "text"),
    C("Description", "text"),
)


def vocabulary_def(name, prefix, schema_kind="domain"):
    return TableDef(
        name,
        (
            C("Name", "text", nullable=False),
            C("Synonyms", "text_list"),
            C("Description", "text"),
            C("ID", "text", nullable=False),
            C("Deprecated", "boolean"),
        ),
        schema_kind=schema_kind,
        kind="vocabulary",
        curie_prefix=prefix,
    )


def asset_def(name, extra_columns=(), schema_kind="domain"):
    return TableDef(name, ASSET_COLUMNS + tuple(extra_columns),
                    schema_kind=schema_kind, kind="asset")


def bootstrap(tx):
    for name, (prefix, _) in BUILTIN_VOCABULARIES.items():
        tx.define_table(vocabulary_def(name, prefix, "ml"))
    for name in ("Execution_Config", "Execution_Log"):
        tx.define_table(asset_def(name, schema_kind="ml"))
    defs = [
        TableDef("Workflow", (
            C("Name", "text", nullable=False),
            C("URL", "text", nullable=False),
            C("Workflow_Type", "term_ref", "Workflow_Type"),
            C("Version", "text"),
            C("Checksum", "text", nullable=False),
            C("Description", "text"),
        )),
        TableDef("Execution", (
            C("Workflow", "rid_ref", "Workflow"),
            C("Status", "term_ref", "Execution_Status", nullable=False),
            C("Status_Detail", "text"),
            C("Started", "timestamp"),
            C("Stopped", "timestamp"),
            C("Duration", "float"),
            C("Description", "text"),
            C("Config", "asset_ref", "Execution_Config"),
            C("Parameters", "text"),
            C("Process", "text"),
        )),
        TableDef("Dataset", (C("Description", "text", nullable=False),)),
        TableDef("Dataset_Dataset_Type", (
            C("Dataset", "rid_ref", "Dataset", nullable=False),
            C("Dataset_Type", "term_ref", "Dataset_Type", nullable=False),
        ), kind="association"),
        TableDef("Dataset_Version", (
            C("Dataset", "rid_ref", "Dataset", nullable=False),
            C("Version", "text", nullable=False),
            C("Snapshot", "integer", nullable=False),
            C("Execution", "rid_ref", "Execution"),
            C("Minid", "text"),
            C("Checksum", "text"),
            C("Description", "text"),
        )),
        TableDef("Dataset_Member", (
            C("Dataset", "rid_ref", "Dataset", nullable=False),
            C("Member", "rid_ref", "*", nullable=False),
            C("Member_Table", "text", nullable=False),
        )),
        TableDef("Execution_Asset", (
            C("Execution", "rid_ref", "Execution", nullable=False),
            C("Asset", "rid_ref", "*", nullable=False),
            C("Asset_Table", "text", nullable=False),
            C("Asset_Role", "term_ref", "Asset_Role", nullable=False),
        )),
        TableDef("Execution_Dataset", (
            C("Execution", "rid_ref", "Execution", nullable=False),
            C("Dataset_Version", "rid_ref", "Dataset_Version", nullable=False),
        ), kind="association"),
        TableDef("Feature_Definition", (
            C("Target_Table", "text", nullable=False),
            C("Feature_Name", "term_ref", "Feature_Name", nullable=False),
            C("Table_Name", "text", nullable=False),
            C("Value_Columns", "text", nullable=False),
        )),
        TableDef("Minid", (
            C("Identifier", "text", nullable=False),
            C("Dataset", "rid_ref", "Dataset"),
            C("Version", "text"),
            C("Checksum", "text", nullable=False),
            C("Length", "integer", nullable=False),
            C("Title", "text"),
            C("Locations", "text_list", nullable=False),
        )),
    ]
    for d in defs:
        tx.define_table(TableDef(d.name, d.columns, schema_kind="ml", kind=d.kind))
    for name, (prefix, terms) in BUILTIN_VOCABULARIES.items():
        tx.insert(name, [
            {"Name": t, "Synonyms": [], "ID": f"{prefix}:{i}", "Deprecated": False}
            for i, t in enumerate(terms, 1)
        ])
