"""SMILES reader and writer for the desk-scale dialect used here.

Supported: the organic subset, bracket atoms with isotopes, charges,
hydrogen counts, chirality tags and atom maps, aromatic lowercase
forms, ring closures (including %nn), branches, dots, explicit bond
symbols, directional single-bond marks, wildcard atoms, and bracket
element lists such as [F,Cl,Br,I].  Chirality and directional marks
are carried lexically; nothing geometric is derived from them.

Aromaticity is trusted as written.  There is no aromatic perception
and no kekulization beyond the alternating-ring rewrite performed by
the canonicalizer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from retroanchor.chem.mol import (
    AROMATIC,
    AROMATIC_ELEMENTS,
    AROMATIC_ORGANIC,
    BOND_ORDER,
    DOUBLE,
    ELEMENT_SYMBOLS,
    ORGANIC_SUBSET,
    SINGLE,
    TRIPLE,
    WILDCARD,
    Atom,
    Bond,
    Molecule,
    SmilesError,
    implicit_hydrogens,
)

_BRACKET_RE = re.compile(
    r"\[(?P<isotope>\d+)?"
    r"(?P<symbols>\*|[A-Za-z][a-z]?(?:,[A-Za-z][a-z]?)+|[A-Za-z][a-z]?)"
    r"(?P<chiral>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+\d{1,2}|-\d{1,2}|\++|-+)?"
    r"(?::(?P<map>\d+))?"
    r"\]"
)

# Bond symbol -> (kind, stereo mark).  Directional marks are single bonds.
_BOND_CHARS = {
    "-": (SINGLE, None),
    "=": (DOUBLE, None),
    "#": (TRIPLE, None),
    ":": (AROMATIC, None),
    "/": (SINGLE, "/"),
    "\\": (SINGLE, "\\"),
}

_FLIP_STEREO = {"/": "\\", "\\": "/"}

_BOND_SYMBOL = {SINGLE: "-", DOUBLE: "=", TRIPLE: "#", AROMATIC: ":"}


@dataclass
class _AtomDraft:
    element: str
    aromatic: bool = False
    charge: int = 0
    isotope: int | None = None
    hcount: int | None = None  # None means "compute from default valence"
    atom_map: int | None = None
    chirality: str | None = None
    element_options: tuple[str, ...] = ()


def _parse_charge(token: str | None, pos: int) -> int:
    if token is None:
        return 0
    sign = 1 if token[0] == "+" else -1
    digits = token.lstrip("+-")
    if digits:
        value = int(digits)
    else:
        value = len(token)
    if value > 15:
        raise SmilesError(f"charge magnitude {value} out of range", pos)
    return sign * value


def _parse_bracket(text: str, pos: int) -> tuple[_AtomDraft, int]:
    match = _BRACKET_RE.match(text, pos)
    if match is None:
        if "]" not in text[pos:]:
            raise SmilesError("unclosed bracket atom", pos)
        raise SmilesError("malformed bracket atom", pos)

    symbols = match["symbols"]
    draft = _AtomDraft(element=WILDCARD, hcount=0)
    if symbols == WILDCARD:
        pass
    elif "," in symbols:
        options = tuple(symbols.split(","))
        for option in options:
            if option not in ELEMENT_SYMBOLS:
                raise SmilesError(f"unknown element {option!r} in element list", pos)
        draft.element_options = options
    elif symbols[0].isupper():
        if symbols not in ELEMENT_SYMBOLS:
            raise SmilesError(f"unknown element {symbols!r}", pos)
        draft.element = symbols
    else:
        capitalized = symbols.capitalize()
        if capitalized not in ELEMENT_SYMBOLS:
            raise SmilesError(f"unknown element {symbols!r}", pos)
        if capitalized not in AROMATIC_ELEMENTS:
            raise SmilesError(f"element {capitalized!r} cannot be aromatic", pos)
        draft.element = capitalized
        draft.aromatic = True

    hcount_token = match["hcount"]
    if hcount_token is not None:
        if draft.element == WILDCARD:
            raise SmilesError("wildcard and element-list atoms take no hydrogen count", pos)
        if draft.element == "H":
            raise SmilesError("hydrogen atom with a hydrogen count", pos)
        draft.hcount = int(hcount_token[1:]) if len(hcount_token) > 1 else 1

    isotope_token = match["isotope"]
    if isotope_token is not None:
        isotope = int(isotope_token)
        if isotope == 0:
            raise SmilesError("isotope must be positive", pos)
        draft.isotope = isotope

    map_token = match["map"]
    if map_token is not None:
        atom_map = int(map_token)
        if atom_map == 0:
            raise SmilesError("atom map must be positive", pos)
        draft.atom_map = atom_map

    draft.chirality = match["chiral"]
    draft.charge = _parse_charge(match["charge"], pos)
    return draft, match.end()


def parse_smiles(text: str) -> Molecule:
    """Parse SMILES text into a molecular graph.

    Raises SmilesError, carrying the offending character position, for
    malformed input: unbalanced brackets or parentheses, unpaired ring
    closures, unknown elements, malformed charges or isotopes, bonds
    with no atom to attach to, and duplicate bonds between one pair.
    """
    stripped = text.strip()
    if not stripped:
        raise SmilesError("empty SMILES", 0)
    s = stripped

    atoms: list[_AtomDraft] = []
    bonds: list[list] = []  # [a, b, kind | None, stereo]
    bonded_pairs: set[tuple[int, int]] = set()
    branch_stack: list[tuple[int, int, int]] = []  # (prev, atom count, position)
    rings: dict[int, tuple[int, tuple | None, int]] = {}
    prev: int | None = None
    pending: tuple[str, str | None] | None = None
    pending_pos = 0

    def add_bond(a: int, b: int, kind: str | None, stereo: str | None, pos: int) -> None:
        if a == b:
            raise SmilesError("ring closure bonds an atom to itself", pos)
        key = (a, b) if a < b else (b, a)
        if key in bonded_pairs:
            raise SmilesError(f"duplicate bond between atoms {key[0]} and {key[1]}", pos)
        bonded_pairs.add(key)
        bonds.append([a, b, kind, stereo])

    def attach_atom(draft: _AtomDraft, pos: int) -> None:
        nonlocal prev, pending
        atoms.append(draft)
        idx = len(atoms) - 1
        if prev is not None:
            kind, stereo = pending if pending else (None, None)
            add_bond(prev, idx, kind, stereo, pos)
        elif pending:
            raise SmilesError("bond with no preceding atom", pending_pos)
        pending = None
        prev = idx

    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise SmilesError("branch with no preceding atom", i)
            if pending:
                raise SmilesError("bond symbol before branch opening", i)
            branch_stack.append((prev, len(atoms), i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unmatched ')'", i)
            if pending:
                raise SmilesError("dangling bond before ')'", i)
            saved_prev, atom_count, _ = branch_stack.pop()
            if len(atoms) == atom_count:
                raise SmilesError("empty branch", i)
            prev = saved_prev
            i += 1
        elif ch == ".":
            if pending:
                raise SmilesError("bond symbol adjacent to '.'", i)
            prev = None
            i += 1
        elif ch in _BOND_CHARS:
            if pending:
                raise SmilesError("two bond symbols in a row", i)
            pending = _BOND_CHARS[ch]
            pending_pos = i
            i += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesError("ring closure with no preceding atom", i)
            if ch == "%":
                if not s[i + 1 : i + 3].isdigit() or len(s[i + 1 : i + 3]) < 2:
                    raise SmilesError("'%' ring closure needs two digits", i)
                number = int(s[i + 1 : i + 3])
                width = 3
            else:
                number = int(ch)
                width = 1
            if number in rings:
                open_atom, open_spec, _ = rings.pop(number)
                kind, stereo = _combine_ring_specs(open_spec, pending, i)
                add_bond(open_atom, prev, kind, stereo, i)
            else:
                rings[number] = (prev, pending, i)
            pending = None
            i += width
        elif ch == "[":
            draft, end = _parse_bracket(s, i)
            attach_atom(draft, i)
            i = end
        else:
            two = s[i : i + 2]
            if two in ("Cl", "Br"):
                attach_atom(_AtomDraft(element=two), i)
                i += 2
            elif ch in "BCNOPSFI":
                attach_atom(_AtomDraft(element=ch), i)
                i += 1
            elif ch in "bcnops":
                attach_atom(_AtomDraft(element=ch.upper(), aromatic=True), i)
                i += 1
            elif ch == WILDCARD:
                attach_atom(_AtomDraft(element=WILDCARD, hcount=0), i)
                i += 1
            else:
                raise SmilesError(f"unexpected character {ch!r}", i)

    if pending:
        raise SmilesError("dangling bond at end of input", pending_pos)
    if branch_stack:
        raise SmilesError("unclosed branch", branch_stack[-1][2])
    if rings:
        number, (_, _, pos) = sorted(rings.items())[0]
        raise SmilesError(f"unpaired ring closure {number}", pos)

    return _finalize(atoms, bonds, s)


def _combine_ring_specs(
    open_spec: tuple | None, close_spec: tuple | None, pos: int
) -> tuple[str | None, str | None]:
    # Stereo marks at the closing digit read toward the opener, so they
    # flip to the stored opener -> closer direction.
    if close_spec is not None:
        close_kind, close_stereo = close_spec
        close_spec = (close_kind, _FLIP_STEREO[close_stereo] if close_stereo else None)
    if open_spec and close_spec:
        if open_spec[0] != close_spec[0]:
            raise SmilesError("conflicting bond symbols on ring closure", pos)
        return open_spec[0], open_spec[1] or close_spec[1]
    return open_spec or close_spec or (None, None)


def _finalize(atoms: list[_AtomDraft], bonds: list[list], source: str) -> Molecule:
    final_bonds = []
    for a, b, kind, stereo in bonds:
        if kind is None:
            both_aromatic = atoms[a].aromatic and atoms[b].aromatic
            kind = AROMATIC if both_aromatic else SINGLE
        final_bonds.append(Bond(a=a, b=b, kind=kind, stereo=stereo))

    order_sums = [0.0] * len(atoms)
    for bond in final_bonds:
        order_sums[bond.a] += BOND_ORDER[bond.kind]
        order_sums[bond.b] += BOND_ORDER[bond.kind]

    final_atoms = []
    for draft, order_sum in zip(atoms, order_sums):
        if draft.hcount is not None:
            hydrogens = draft.hcount
        else:
            hydrogens = implicit_hydrogens(draft.element, draft.aromatic, order_sum)
        final_atoms.append(
            Atom(
                element=draft.element,
                aromatic=draft.aromatic,
                charge=draft.charge,
                isotope=draft.isotope,
                implicit_h=hydrogens,
                atom_map=draft.atom_map,
                chirality=draft.chirality,
                element_options=draft.element_options,
            )
        )

    return Molecule(atoms=tuple(final_atoms), bonds=tuple(final_bonds), source_text=source)


def write_smiles(molecule: Molecule, include_maps: bool = True) -> str:
    """Serialize a molecule back to SMILES.

    The traversal is deterministic: depth-first from the lowest atom
    index of each component, visiting neighbors in ascending index
    order, components joined by dots in order of their lowest index.
    Parsing the output reconstructs an isomorphic molecule.
    """
    if not molecule.atoms:
        return ""

    visited = [False] * len(molecule.atoms)
    tree_children: dict[int, list[tuple[int, Bond]]] = {i: [] for i in range(len(molecule.atoms))}
    ring_bonds_at: dict[int, list[tuple[int, Bond]]] = {}  # opener -> [(closer, bond)]
    emit_order: list[int] = []
    roots: list[int] = []

    ring_pairs: set[tuple[int, int]] = set()
    for component in molecule.components():
        root = component[0]
        roots.append(root)
        visited[root] = True
        emit_order.append(root)
        stack = [(root, iter(sorted(n for n, _ in molecule.neighbors(root))))]
        parent = {root: -1}
        while stack:
            current, nbr_iter = stack[-1]
            advanced = False
            for nbr in nbr_iter:
                bond = molecule.bond_between(current, nbr)
                if not visited[nbr]:
                    visited[nbr] = True
                    emit_order.append(nbr)
                    parent[nbr] = current
                    tree_children[current].append((nbr, bond))
                    stack.append((nbr, iter(sorted(n for n, _ in molecule.neighbors(nbr)))))
                    advanced = True
                    break
                if nbr != parent[current] and bond.key() not in ring_pairs:
                    # Back edge: nbr was emitted earlier and opens the closure.
                    ring_pairs.add(bond.key())
                    ring_bonds_at.setdefault(nbr, []).append((current, bond))
            if not advanced:
                stack.pop()

    position = {atom: pos for pos, atom in enumerate(emit_order)}

    # Assign ring-closure digits in emission order, reusing freed digits.
    in_use: set[int] = set()
    closures_open: dict[int, list[tuple[int, Bond, int]]] = {}
    closures_close: dict[int, list[tuple[int, Bond, int]]] = {}
    for atom in emit_order:
        for closer, bond in sorted(
            ring_bonds_at.get(atom, []), key=lambda item: position[item[0]]
        ):
            digit = 1
            while digit in in_use:
                digit += 1
            if digit > 99:
                raise ValueError("more than 99 simultaneously open ring closures")
            in_use.add(digit)
            closures_open.setdefault(atom, []).append((closer, bond, digit))
            closures_close.setdefault(closer, []).append((atom, bond, digit))
        for opener, bond, digit in closures_close.get(atom, []):
            in_use.discard(digit)

    def bond_symbol(bond: Bond, source: int, target: int) -> str:
        a_arom = molecule.atoms[bond.a].aromatic
        b_arom = molecule.atoms[bond.b].aromatic
        default = AROMATIC if (a_arom and b_arom) else SINGLE
        if bond.kind == SINGLE and bond.stereo:
            mark = bond.stereo if (bond.a, bond.b) == (source, target) else _FLIP_STEREO[bond.stereo]
            return mark
        if bond.kind == default:
            return ""
        return _BOND_SYMBOL[bond.kind]

    def ring_digit_token(digit: int) -> str:
        return str(digit) if digit < 10 else f"%{digit:02d}"

    def atom_token(idx: int) -> str:
        atom = molecule.atoms[idx]
        map_value = atom.atom_map if include_maps else None
        order_sum = molecule.bond_order_sum(idx)

        bare_ok = (
            not atom.is_element_list
            and atom.charge == 0
            and atom.isotope is None
            and atom.chirality is None
            and map_value is None
        )
        if bare_ok and atom.is_wildcard:
            return WILDCARD
        if bare_ok and atom.element in ORGANIC_SUBSET:
            symbol = atom.element.lower() if atom.aromatic else atom.element
            if (not atom.aromatic or symbol in AROMATIC_ORGANIC) and (
                atom.implicit_h == implicit_hydrogens(atom.element, atom.aromatic, order_sum)
            ):
                return symbol

        if atom.is_element_list:
            symbol = ",".join(atom.element_options)
        elif atom.is_wildcard:
            symbol = WILDCARD
        else:
            symbol = atom.element.lower() if atom.aromatic else atom.element
        parts = ["["]
        if atom.isotope is not None:
            parts.append(str(atom.isotope))
        parts.append(symbol)
        if atom.chirality:
            parts.append(atom.chirality)
        if atom.implicit_h == 1:
            parts.append("H")
        elif atom.implicit_h > 1:
            parts.append(f"H{atom.implicit_h}")
        if atom.charge == 1:
            parts.append("+")
        elif atom.charge == -1:
            parts.append("-")
        elif atom.charge > 0:
            parts.append(f"+{atom.charge}")
        elif atom.charge < 0:
            parts.append(f"-{abs(atom.charge)}")
        if map_value is not None:
            parts.append(f":{map_value}")
        parts.append("]")
        return "".join(parts)

    def emit(idx: int) -> str:
        pieces = [atom_token(idx)]
        for opener, bond, digit in closures_close.get(idx, []):
            pieces.append(ring_digit_token(digit))
        for closer, bond, digit in closures_open.get(idx, []):
            pieces.append(bond_symbol(bond, idx, closer))
            pieces.append(ring_digit_token(digit))
        children = tree_children[idx]
        for child, bond in children[:-1]:
            pieces.append("(")
            pieces.append(bond_symbol(bond, idx, child))
            pieces.append(emit(child))
            pieces.append(")")
        if children:
            child, bond = children[-1]
            pieces.append(bond_symbol(bond, idx, child))
            pieces.append(emit(child))
        return "".join(pieces)

    return ".".join(emit(root) for root in roots)
