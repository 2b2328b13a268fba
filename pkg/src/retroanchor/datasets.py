"""Reaction dataset handling.

Rows arrive as JSONL or CSV with columns id, reaction_smiles,
reaction_name, reaction_class, and split.  Reaction SMILES follow the
``reactants>reagents>product`` convention (``>>`` for no reagents),
with dots separating molecules on each side.  Atom maps form a partial
injection from product atoms onto reactant atoms; reagents are carried
but never labeled.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

from retroanchor.chem import Molecule, parse_smiles
from retroanchor.chem.mol import SmilesError
from retroanchor.utils import normalize_name, read_jsonl

REQUIRED_COLUMNS = ("id", "reaction_smiles", "reaction_name", "reaction_class", "split")


class DatasetError(ValueError):
    """File-level dataset fault: unreadable file or missing columns."""


@dataclass(frozen=True)
class ReactionRecord:
    """One reaction with its parsed molecules and passthrough metadata."""

    record_id: str
    reaction_smiles: str
    reactants: tuple[Molecule, ...]
    reagents: tuple[Molecule, ...]
    product: Molecule
    reaction_name: str
    reaction_class: str
    split: str
    extra: dict = field(default_factory=dict)

    @property
    def is_classified(self) -> bool:
        return bool(self.reaction_name)


@dataclass(frozen=True)
class OntologyEntry:
    id: str
    reaction_class: str


@dataclass(frozen=True)
class Ontology:
    """Unique reaction names of one split with their majority classes."""

    entries: tuple[OntologyEntry, ...]
    source_split: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def normalized_ids(self) -> set[str]:
        return {normalize_name(e.id) for e in self.entries}

    def contains(self, name: str) -> bool:
        return normalize_name(name) in self.normalized_ids()

    def class_of(self, name: str) -> str | None:
        key = normalize_name(name)
        for entry in self.entries:
            if normalize_name(entry.id) == key:
                return entry.reaction_class
        return None

    def to_json_obj(self) -> list[dict]:
        return [{"id": e.id, "class": e.reaction_class} for e in self.entries]

    @classmethod
    def from_json_obj(cls, data: list[dict], source_split: str = "") -> "Ontology":
        entries = tuple(OntologyEntry(id=row["id"], reaction_class=row["class"]) for row in data)
        return cls(entries=entries, source_split=source_split)


@dataclass(frozen=True)
class ExampleLibrary:
    """Retro-oriented example reactions serialized as product>>reactants."""

    reaction_name: str
    examples: tuple[str, ...]
    seed: int


def parse_reaction_smiles(text: str) -> tuple[list[Molecule], list[Molecule], Molecule]:
    """Split and parse a reaction SMILES into (reactants, reagents, product)."""
    segments = text.split(">")
    if len(segments) != 3:
        raise ValueError("reaction SMILES must have exactly two '>' separators")
    reactant_text, reagent_text, product_text = (s.strip() for s in segments)
    if not reactant_text:
        raise ValueError("reaction has no reactants")
    if not product_text:
        raise ValueError("reaction has no product")
    if "." in product_text:
        raise ValueError("product side must be a single molecule")

    reactants = [parse_smiles(part) for part in reactant_text.split(".")]
    reagents = [parse_smiles(part) for part in reagent_text.split(".")] if reagent_text else []
    product = parse_smiles(product_text)
    return reactants, reagents, product


def record_from_row(row: dict) -> ReactionRecord:
    """Build a record from one dataset row, validating the map injection."""
    missing = [c for c in REQUIRED_COLUMNS if c not in row]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    reactants, reagents, product = parse_reaction_smiles(str(row["reaction_smiles"]))

    product_maps = product.atom_maps()
    reactant_map_counts: dict[int, int] = {}
    for molecule in reactants:
        for atom in molecule.atoms:
            if atom.atom_map is not None:
                reactant_map_counts[atom.atom_map] = reactant_map_counts.get(atom.atom_map, 0) + 1
    duplicated = sorted(
        m for m in product_maps if reactant_map_counts.get(m, 0) > 1
    )
    if duplicated:
        raise ValueError(f"product atom maps appear on multiple reactant atoms: {duplicated}")

    extra = {k: v for k, v in row.items() if k not in REQUIRED_COLUMNS}
    return ReactionRecord(
        record_id=str(row["id"]),
        reaction_smiles=str(row["reaction_smiles"]),
        reactants=tuple(reactants),
        reagents=tuple(reagents),
        product=product,
        reaction_name=str(row["reaction_name"] or ""),
        reaction_class=str(row["reaction_class"] or ""),
        split=str(row["split"]),
        extra=extra,
    )


def ingest_dataset(path: Path | str, fmt: str | None = None) -> tuple[list[ReactionRecord], list[dict]]:
    """Read a dataset file into records plus a rejects report.

    Per-row faults (malformed SMILES, missing fields, duplicate-map
    injections) land in the rejects list as ``{"row", "id", "error"}``;
    file-level faults raise DatasetError.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    try:
        if fmt == "csv":
            with open(path, newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                if reader.fieldnames is None:
                    raise DatasetError(f"{path}: empty CSV file")
                missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
                if missing:
                    raise DatasetError(f"{path}: missing columns: {', '.join(missing)}")
                rows = list(reader)
        else:
            rows = read_jsonl(path)
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc

    records: list[ReactionRecord] = []
    rejects: list[dict] = []
    for number, row in enumerate(rows, start=1):
        try:
            records.append(record_from_row(row))
        except (ValueError, SmilesError) as exc:
            rejects.append({"row": number, "id": str(row.get("id", "")), "error": str(exc)})
    return records, rejects


def build_ontology(records: list[ReactionRecord], split: str) -> Ontology:
    """Unique reaction names in a split, each with its majority class.

    Class ties break to the lexicographically smallest class; entries
    are ordered lexicographically by name, so the result is a pure
    function of the record set.
    """
    split_records = [r for r in records if r.split == split and r.reaction_name]
    if not any(r.split == split for r in records):
        raise ValueError(f"no records in split {split!r}")

    class_counts: dict[str, dict[str, int]] = {}
    display_name: dict[str, str] = {}
    for record in split_records:
        key = normalize_name(record.reaction_name)
        display_name.setdefault(key, record.reaction_name)
        counts = class_counts.setdefault(key, {})
        counts[record.reaction_class] = counts.get(record.reaction_class, 0) + 1

    entries = []
    for key in sorted(class_counts):
        counts = class_counts[key]
        top = max(counts.values())
        majority = min(cls for cls, count in counts.items() if count == top)
        entries.append(OntologyEntry(id=display_name[key], reaction_class=majority))
    return Ontology(entries=tuple(entries), source_split=split)


def subsample_eval_set(
    records: list[ReactionRecord],
    cap: int,
    unclassified_label: str,
    seed: int,
) -> list[ReactionRecord]:
    """Balanced evaluation subsample.

    Takes up to ``cap`` records per reaction name, uniformly without
    replacement under the seed, then adds unclassified records (name
    empty or equal to ``unclassified_label``) so their share of the
    output matches their share of the input, rounding half up.  Output
    preserves input order; reruns with one seed are identical.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    rng = random.Random(seed)
    unclassified_key = normalize_name(unclassified_label) if unclassified_label else ""

    def is_unclassified(record: ReactionRecord) -> bool:
        if not record.reaction_name:
            return True
        return normalize_name(record.reaction_name) == unclassified_key

    named: dict[str, list[ReactionRecord]] = {}
    unclassified: list[ReactionRecord] = []
    for record in records:
        if is_unclassified(record):
            unclassified.append(record)
        else:
            named.setdefault(normalize_name(record.reaction_name), []).append(record)

    chosen_ids: set[str] = set()
    for key in sorted(named):
        group = sorted(named[key], key=lambda r: r.record_id)
        take = min(cap, len(group))
        for record in rng.sample(group, take):
            chosen_ids.add(record.record_id)

    total = len(records)
    named_chosen = len(chosen_ids)
    if unclassified:
        if total == len(unclassified):
            target = min(cap, len(unclassified))
        else:
            share = len(unclassified) / (total - len(unclassified))
            target = min(int(named_chosen * share + 0.5), len(unclassified))
        pool = sorted(unclassified, key=lambda r: r.record_id)
        for record in rng.sample(pool, target):
            chosen_ids.add(record.record_id)

    return [r for r in records if r.record_id in chosen_ids]


def sample_examples(
    records: list[ReactionRecord],
    reaction_name: str,
    exclude_id: str,
    k: int,
    seed: int,
) -> ExampleLibrary:
    """Up to k train-split reactions with the given name, excluding the
    query record, serialized retro style (product>>reactants) with atom
    maps intact."""
    key = normalize_name(reaction_name)
    pool = [
        r
        for r in records
        if r.split == "train"
        and r.record_id != exclude_id
        and normalize_name(r.reaction_name) == key
    ]
    pool.sort(key=lambda r: r.record_id)
    rng = random.Random(seed)
    chosen = rng.sample(pool, min(k, len(pool))) if k > 0 else []
    examples = tuple(retro_example_text(r) for r in chosen)
    return ExampleLibrary(reaction_name=reaction_name, examples=examples, seed=seed)


def retro_example_text(record: ReactionRecord) -> str:
    """``product>>reactants`` using the original SMILES spellings."""
    segments = record.reaction_smiles.split(">")
    return f"{segments[2].strip()}>>{segments[0].strip()}"
