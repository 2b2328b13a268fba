"""Canonical atom ordering by iterative invariant refinement.

The ranking starts from per-atom invariants (element, aromatic flag,
charge, isotope, implicit hydrogen count, degree), refines each atom by
the sorted multiset of its neighbors' ranks until the partition is
stable, and resolves residual ties by promoting one member of the
lowest tied class and refining again.  The promoted member is chosen by
atom map when one is present, else by input position; for the symmetric
ties this resolves, the choices are interchangeable, so the emitted
text does not depend on input atom order.

Before ranking, any six-ring of plain carbons and nitrogens whose bonds
strictly alternate single/double is rewritten to aromatic form, so the
two kekulized spellings of such a ring collapse to one canonical text.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from retroanchor.chem.mol import AROMATIC, DOUBLE, SINGLE, Bond, Molecule
from retroanchor.chem.smiles import write_smiles


def canonicalize(molecule: Molecule) -> Molecule:
    """Return the molecule with atoms reordered into canonical order.

    The result's atom order equals its SMILES emission order, so the
    i-th atom of the result is the i-th atom token of its canonical
    text, and ``source_text`` holds that text (atom maps included).
    """
    normalized = _normalize_alternating_rings(molecule)
    ranks = _canonical_ranks(normalized)
    order = _emission_order(normalized, ranks)
    remap = {old: new for new, old in enumerate(order)}
    atoms = tuple(normalized.atoms[i] for i in order)
    bonds = tuple(
        sorted(
            (replace(b, a=remap[b.a], b=remap[b.b]) for b in normalized.bonds),
            key=lambda b: b.key(),
        )
    )
    reordered = Molecule(atoms=atoms, bonds=bonds)
    return replace(reordered, source_text=write_smiles(reordered, include_maps=True))


def canonical_smiles(molecule: Molecule, include_maps: bool = False) -> str:
    """Canonical SMILES text; atom maps are dropped unless requested."""
    return write_smiles(canonicalize(molecule), include_maps=include_maps)


def annotate_sequential_maps(molecule: Molecule) -> Molecule:
    """Number heavy atoms 1..n in canonical output order.

    Existing atom maps are discarded first, so the numbering reflects
    only the canonical order.  Applying this twice equals applying it
    once.
    """
    from retroanchor.chem.mol import strip_atom_maps

    canonical = canonicalize(strip_atom_maps(molecule))
    atoms = []
    counter = 0
    for atom in canonical.atoms:
        if atom.is_heavy:
            counter += 1
            atoms.append(replace(atom, atom_map=counter))
        else:
            atoms.append(atom)
    annotated = Molecule(atoms=tuple(atoms), bonds=canonical.bonds)
    return replace(annotated, source_text=write_smiles(annotated, include_maps=True))


def _normalize_alternating_rings(molecule: Molecule) -> Molecule:
    rings = _qualifying_six_rings(molecule)
    if not rings:
        return molecule
    ring_atoms: set[int] = set()
    ring_bonds: set[tuple[int, int]] = set()
    for atom_path in rings:
        ring_atoms.update(atom_path)
        for k in range(6):
            a, b = atom_path[k], atom_path[(k + 1) % 6]
            ring_bonds.add((a, b) if a < b else (b, a))
    atoms = tuple(
        replace(atom, aromatic=True) if i in ring_atoms else atom
        for i, atom in enumerate(molecule.atoms)
    )
    bonds = tuple(
        replace(bond, kind=AROMATIC) if bond.key() in ring_bonds else bond
        for bond in molecule.bonds
    )
    return Molecule(atoms=atoms, bonds=bonds, source_text=molecule.source_text)


def _qualifying_six_rings(molecule: Molecule) -> list[tuple[int, ...]]:
    """Six-rings of non-aromatic C/N whose bonds alternate single/double."""

    def eligible(idx: int) -> bool:
        atom = molecule.atoms[idx]
        return atom.element in ("C", "N") and not atom.aromatic and not atom.is_element_list

    found: dict[frozenset[int], tuple[int, ...]] = {}

    def extend(path: list[int]) -> None:
        head = path[-1]
        if len(path) == 6:
            closing = molecule.bond_between(head, path[0])
            if closing is not None and _alternates(molecule, path):
                found.setdefault(frozenset(path), tuple(path))
            return
        for nbr, _ in molecule.neighbors(head):
            # Anchor enumeration at the smallest ring atom to visit each
            # ring a bounded number of times.
            if nbr > path[0] and nbr not in path and eligible(nbr):
                path.append(nbr)
                extend(path)
                path.pop()

    for start in range(len(molecule.atoms)):
        if eligible(start):
            extend([start])
    return list(found.values())


def _alternates(molecule: Molecule, path: Sequence[int]) -> bool:
    kinds = []
    for k in range(6):
        bond = molecule.bond_between(path[k], path[(k + 1) % 6])
        if bond is None or bond.kind not in (SINGLE, DOUBLE):
            return False
        kinds.append(bond.kind)
    return all(kinds[k] != kinds[(k + 1) % 6] for k in range(6))


def _dense_ranks(keys: list) -> list[int]:
    rank_of = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [rank_of[key] for key in keys]


def _refine(molecule: Molecule, ranks: list[int]) -> list[int]:
    while True:
        keys = [
            (
                ranks[i],
                tuple(sorted(ranks[j] for j, _ in molecule.neighbors(i))),
            )
            for i in range(len(ranks))
        ]
        refined = _dense_ranks(keys)
        if refined == ranks:
            return ranks
        ranks = refined


def _canonical_ranks(molecule: Molecule) -> list[int]:
    n = len(molecule.atoms)
    if n == 0:
        return []
    initial = [
        (
            atom.element,
            atom.element_options,
            atom.aromatic,
            atom.charge,
            atom.isotope or 0,
            atom.implicit_h,
            molecule.degree(i),
        )
        for i, atom in enumerate(molecule.atoms)
    ]
    ranks = _dense_ranks(initial)
    while True:
        ranks = _refine(molecule, ranks)
        if max(ranks) + 1 == n:
            return ranks
        class_sizes: dict[int, int] = {}
        for rank in ranks:
            class_sizes[rank] = class_sizes.get(rank, 0) + 1
        target = min(rank for rank, size in class_sizes.items() if size > 1)
        members = [i for i in range(n) if ranks[i] == target]
        chosen = min(members, key=lambda i: _promotion_key(molecule, i))
        ranks = _dense_ranks(
            [(ranks[i], 0 if i == chosen else 1) for i in range(n)]
        )


def _promotion_key(molecule: Molecule, idx: int) -> tuple[int, int]:
    atom_map = molecule.atoms[idx].atom_map
    return (0, atom_map) if atom_map is not None else (1, idx)


def _emission_order(molecule: Molecule, ranks: list[int]) -> list[int]:
    """Depth-first pre-order from the lowest-ranked atom of each component,
    visiting neighbors in rank order; components ordered the same way."""
    components = sorted(
        molecule.components(), key=lambda comp: min(ranks[i] for i in comp)
    )
    order: list[int] = []
    visited: set[int] = set()
    for component in components:
        root = min(component, key=lambda i: ranks[i])
        visited.add(root)
        order.append(root)
        stack = [(root, iter(sorted((n for n, _ in molecule.neighbors(root)), key=lambda j: ranks[j])))]
        while stack:
            _, nbr_iter = stack[-1]
            for nbr in nbr_iter:
                if nbr not in visited:
                    visited.add(nbr)
                    order.append(nbr)
                    stack.append(
                        (
                            nbr,
                            iter(
                                sorted(
                                    (n for n, _ in molecule.neighbors(nbr)),
                                    key=lambda j: ranks[j],
                                )
                            ),
                        )
                    )
                    break
            else:
                stack.pop()
    return order
