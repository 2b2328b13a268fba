"""Molecular graph model.

Molecules are immutable graphs of attributed atoms and bonds.  Atom
indices are positional (0-based, in SMILES reading order); atom maps
are the 1-based integer tags carried in ``[C:5]``-style SMILES atoms
and are the currency used to anchor disconnection sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"

BOND_KINDS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

# Aromatic bonds contribute 1.5 to each endpoint's bond-order sum, so a
# matched pair of them counts as three: one pair behaves like one single
# plus one double bond for hydrogen bookkeeping.
BOND_ORDER = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}

# Default valences for the organic subset.  Atoms written without
# brackets take the smallest valence that accommodates their bonds.
DEFAULT_VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ORGANIC_SUBSET = frozenset(DEFAULT_VALENCES)

# Elements that may carry the aromatic (lowercase) flag.
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As", "Te"})

# Aromatic symbols writable without brackets.
AROMATIC_ORGANIC = frozenset({"b", "c", "n", "o", "p", "s"})

ELEMENT_SYMBOLS = frozenset(
    """
    H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe
    Co Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In
    Sn Sb Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf
    Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am
    Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og
    """.split()
)

WILDCARD = "*"


class SmilesError(ValueError):
    """Raised for malformed SMILES text, with the offending position."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.reason = message
        self.position = position


def implicit_hydrogens(element: str, aromatic: bool, bond_order_sum: float) -> int:
    """Hydrogen count implied by default valence for a bare organic-subset atom.

    The smallest default valence that accommodates the bond-order sum
    applies; if every valence is exceeded the count is zero.  Aromatic
    atoms use only their lowest default valence, so an unsubstituted
    aromatic ring carbon (two aromatic bonds, sum 3.0) gets one hydrogen
    while an aromatic sulfur (sum 3.0 against valence 2) gets none.
    """
    valences = DEFAULT_VALENCES.get(element)
    if valences is None:
        return 0
    if aromatic:
        valences = valences[:1]
    for valence in valences:
        if valence + 1e-9 >= bond_order_sum:
            return int(valence - bond_order_sum + 1e-9)
    return 0


@dataclass(frozen=True)
class Atom:
    """One atom.  ``element`` is a periodic-table symbol, or ``*`` for the
    wildcard and element-list markers used by reaction templates."""

    element: str
    aromatic: bool = False
    charge: int = 0
    isotope: int | None = None
    implicit_h: int = 0
    atom_map: int | None = None
    chirality: str | None = None
    # Non-empty for [F,Cl,Br,I]-style atoms: the allowed element symbols.
    element_options: tuple[str, ...] = ()

    @property
    def is_wildcard(self) -> bool:
        return self.element == WILDCARD and not self.element_options

    @property
    def is_element_list(self) -> bool:
        return bool(self.element_options)

    @property
    def is_heavy(self) -> bool:
        return self.element != "H"


@dataclass(frozen=True)
class Bond:
    """An undirected bond between atom indices ``a`` and ``b``.

    ``stereo`` keeps the ``/`` or ``\\`` mark exactly as written for the
    stored ``a -> b`` direction; it is lexical only and never interpreted
    geometrically.
    """

    a: int
    b: int
    kind: str = SINGLE
    stereo: str | None = None

    def other(self, idx: int) -> int:
        return self.b if idx == self.a else self.a

    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class Molecule:
    """An immutable attributed graph plus the text it was read from."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_text: str = ""

    def __post_init__(self) -> None:
        n = len(self.atoms)
        adjacency: list[list[tuple[int, Bond]]] = [[] for _ in range(n)]
        lookup: dict[tuple[int, int], Bond] = {}
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond {bond.a}-{bond.b} references a missing atom")
            if bond.a == bond.b:
                raise ValueError(f"bond {bond.a}-{bond.b} joins an atom to itself")
            if bond.key() in lookup:
                raise ValueError(f"duplicate bond between atoms {bond.a} and {bond.b}")
            lookup[bond.key()] = bond
            adjacency[bond.a].append((bond.b, bond))
            adjacency[bond.b].append((bond.a, bond))
        object.__setattr__(self, "_adjacency", tuple(tuple(row) for row in adjacency))
        object.__setattr__(self, "_bond_lookup", lookup)

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, Bond], ...]:
        return self._adjacency[idx]  # type: ignore[attr-defined]

    def degree(self, idx: int) -> int:
        return len(self.neighbors(idx))

    def bond_between(self, a: int, b: int) -> Bond | None:
        key = (a, b) if a < b else (b, a)
        return self._bond_lookup.get(key)  # type: ignore[attr-defined]

    def bond_order_sum(self, idx: int) -> float:
        return sum(BOND_ORDER[bond.kind] for _, bond in self.neighbors(idx))

    def atom_map_index(self) -> dict[int, int]:
        """Mapping of atom-map value to atom index; first atom wins on duplicates."""
        index: dict[int, int] = {}
        for i, atom in enumerate(self.atoms):
            if atom.atom_map is not None and atom.atom_map not in index:
                index[atom.atom_map] = i
        return index

    def atom_maps(self) -> set[int]:
        return {a.atom_map for a in self.atoms if a.atom_map is not None}

    def heavy_atom_count(self) -> int:
        return sum(1 for a in self.atoms if a.is_heavy)

    def components(self) -> list[list[int]]:
        """Connected components, each listed in ascending index order."""
        seen = [False] * len(self.atoms)
        components: list[list[int]] = []
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            members = []
            while stack:
                current = stack.pop()
                members.append(current)
                for nbr, _ in self.neighbors(current):
                    if not seen[nbr]:
                        seen[nbr] = True
                        stack.append(nbr)
            components.append(sorted(members))
        return components

    def validate(self) -> list[str]:
        """Issues that make a molecule unfit as plain data (templates exempt)."""
        issues = []
        seen_maps: set[int] = set()
        for i, atom in enumerate(self.atoms):
            if atom.atom_map is not None:
                if atom.atom_map in seen_maps:
                    issues.append(f"duplicate atom map {atom.atom_map}")
                seen_maps.add(atom.atom_map)
            if atom.is_wildcard or atom.is_element_list:
                issues.append(f"template-only atom at index {i}")
        return issues


@dataclass(frozen=True)
class AtomMapSet:
    """A set of atom-map values naming a disconnection site."""

    maps: frozenset[int] = field(default_factory=frozenset)

    @classmethod
    def of(cls, values: Iterable[int]) -> "AtomMapSet":
        return cls(frozenset(int(v) for v in values))

    def sorted(self) -> list[int]:
        return sorted(self.maps)

    def __iter__(self) -> Iterator[int]:
        return iter(self.sorted())

    def __len__(self) -> int:
        return len(self.maps)

    def __bool__(self) -> bool:
        return bool(self.maps)

    def __contains__(self, value: int) -> bool:
        return value in self.maps


def resolve_map_set(molecule: Molecule, maps: AtomMapSet) -> tuple[list[int], set[int]]:
    """Resolve map values to atom indices.

    Returns the resolved indices in ascending map order together with
    the subset of map values that name no atom of the molecule.
    """
    index = molecule.atom_map_index()
    resolved: list[int] = []
    missing: set[int] = set()
    for value in maps.sorted():
        if value in index:
            resolved.append(index[value])
        else:
            missing.add(value)
    return resolved, missing


def position_tokens(molecule: Molecule, maps: AtomMapSet) -> str:
    """Render a map set as space-separated ``Elem:map`` tokens.

    Tokens come in ascending map order and keep the aromatic case of the
    source atom, e.g. ``"C:12 N:14"`` or ``"c:18"``.  Raises ValueError
    when any map value does not resolve.
    """
    resolved, missing = resolve_map_set(molecule, maps)
    if missing:
        raise ValueError(f"atom maps not present in molecule: {sorted(missing)}")
    tokens = []
    for idx, value in zip(resolved, maps.sorted()):
        atom = molecule.atoms[idx]
        symbol = atom.element.lower() if atom.aromatic else atom.element
        tokens.append(f"{symbol}:{value}")
    return " ".join(tokens)


def strip_atom_maps(molecule: Molecule) -> Molecule:
    """Copy of the molecule with every atom-map tag removed."""
    atoms = tuple(replace(a, atom_map=None) for a in molecule.atoms)
    return Molecule(atoms=atoms, bonds=molecule.bonds, source_text="")


def strip_stereo(molecule: Molecule) -> Molecule:
    """Copy of the molecule with chirality tags and bond stereo marks removed."""
    atoms = tuple(replace(a, chirality=None) for a in molecule.atoms)
    bonds = tuple(replace(b, stereo=None) for b in molecule.bonds)
    return Molecule(atoms=atoms, bonds=bonds, source_text="")
