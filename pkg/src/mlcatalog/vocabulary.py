"""Controlled vocabularies: named term sets with synonyms and CURIEs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConflictError, NotFoundError, ValidationError
from .mlschema import vocabulary_def
from .rid import is_rid

_PREFIX = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class VocabularyTerm:
    rid: str
    vocabulary: str
    name: str
    synonyms: tuple = field(default=())
    description: str | None = None
    curie: str = ""
    deprecated: bool = False

    @classmethod
    def from_row(cls, vocabulary, row):
        return cls(
            rid=row["RID"],
            vocabulary=vocabulary,
            name=row["Name"],
            synonyms=tuple(row["Synonyms"] or ()),
            description=row["Description"],
            curie=row["ID"],
            deprecated=bool(row["Deprecated"]),
        )

    def to_dict(self):
        return {
            "RID": self.rid,
            "vocabulary": self.vocabulary,
            "name": self.name,
            "synonyms": list(self.synonyms),
            "description": self.description,
            "curie": self.curie,
            "deprecated": self.deprecated,
        }


class Vocabularies:
    def __init__(self, catalog):
        self.catalog = catalog

    def _vocab(self, name, tx=None):
        tdef = tx.table(name) if tx else self.catalog.table(name)
        if tdef.kind != "vocabulary":
            raise NotFoundError(f"{name} is not a vocabulary", code="unknown_vocabulary")
        return tdef

    def create_vocabulary(self, name, curie_prefix, schema_kind="domain"):
        if not isinstance(curie_prefix, str) or not _PREFIX.match(curie_prefix):
            raise ValidationError(f"invalid CURIE prefix {curie_prefix!r}")
        with self.catalog.transaction() as tx:
            for t in tx.tables():
                if t.name == name:
                    raise ConflictError(f"vocabulary {name} already exists", code="duplicate_table")
                if t.kind == "vocabulary" and t.curie_prefix == curie_prefix:
                    raise ConflictError(
                        f"CURIE prefix {curie_prefix} already used by {t.name}", code="duplicate_prefix")
            return tx.define_table(vocabulary_def(name, curie_prefix, schema_kind))

    def list_vocabularies(self):
        return [t.name for t in self.catalog.tables(kind="vocabulary")]

    def list_terms(self, vocabulary, as_of=None):
        self._vocab(vocabulary)
        return [VocabularyTerm.from_row(vocabulary, r)
                for r in self.catalog.query_entities(vocabulary, as_of=as_of)]

    def add_term(self, vocabulary, name, synonyms=(), description=None, exist_ok=False, curie=None):
        synonyms = list(synonyms or ())
        labels = [name] + synonyms
        if not name or len(set(labels)) != len(labels):
            raise ValidationError(f"term {name!r}: name and synonyms must be distinct and non-empty")
        with self.catalog.transaction() as tx:
            tdef = self._vocab(vocabulary, tx)
            rows = tx.query(vocabulary)
            for row in rows:
                if exist_ok and row["Name"] == name:
                    return VocabularyTerm.from_row(vocabulary, row)
                taken = {row["Name"], *(row["Synonyms"] or ())}
                clash = taken.intersection(labels)
                if clash:
                    raise ConflictError(
                        f"{sorted(clash)[0]!r} collides with term {row['Name']!r} in {vocabulary}",
                        code="term_collision")
            used = self._curies(tx)
            if curie is None:
                n = len(rows) + 1
                while f"{tdef.curie_prefix}:{n}" in used:
                    n += 1
                curie = f"{tdef.curie_prefix}:{n}"
            elif curie in used:
                raise ConflictError(f"CURIE {curie} already assigned", code="duplicate_curie")
            values = {"Name": name, "Synonyms": synonyms, "Description": description,
                      "ID": curie, "Deprecated": False}
            [rid] = tx.insert(vocabulary, [values])
        return VocabularyTerm(rid, vocabulary, name, tuple(synonyms), description, curie, False)

    def _curies(self, tx):
        used = set()
        for t in tx.tables():
            if t.kind == "vocabulary":
                used.update(r["ID"] for r in tx.query(t.name))
        return used

    def lookup_term(self, vocabulary, text, as_of=None):
        """Find the term whose name or any synonym equals ``text`` (case-sensitive)."""
        self._vocab(vocabulary)
        for row in self.catalog.query_entities(vocabulary, as_of=as_of):
            if row["Name"] == text or text in (row["Synonyms"] or ()):
                return VocabularyTerm.from_row(vocabulary, row)
        raise NotFoundError(f"no term {text!r} in {vocabulary}", code="term_not_found")

    def term_rid(self, vocabulary, ref):
        """Resolve a term given by RID, name or synonym to its RID."""
        if is_rid(ref):
            try:
                table, _ = self.catalog.get_entity(ref)
            except NotFoundError:
                table = None
            if table == vocabulary:
                return ref
        return self.lookup_term(vocabulary, ref).rid

    def term_name(self, rid, as_of=None):
        _, row = self.catalog.get_entity(rid, as_of=as_of)
        return row["Name"]

    def deprecate_term(self, vocabulary, text):
        term = self.lookup_term(vocabulary, text)
        self.catalog.update_entities(vocabulary, [(term.rid, {"Deprecated": True})])
        return self.lookup_term(vocabulary, text)
