"""Symbolic letters.

A guard is a cube over an indexed atom list, stored as a pair of bitmasks
``(pos, neg)``: bit ``i`` of ``pos`` requires atom ``i`` to hold, bit ``i`` of
``neg`` requires it not to.  A concrete letter is turned into a valuation
bitmask once, after which guard tests are two integer ands.
"""
from __future__ import annotations

from typing import Sequence

from ..ltl import Atom, Formula, Const, Not, And, Or, Xor, Implies, Iff

TRUE_CUBE = (0, 0)


def atom_order(atoms) -> tuple[Atom, ...]:
    return tuple(sorted(set(atoms), key=lambda a: (str(a.tag), a.ap)))


def valuation(letter, atoms: Sequence[Atom]) -> int:
    v = 0
    for i, a in enumerate(atoms):
        if a.ap in letter[a.tag - 1]:
            v |= 1 << i
    return v


def holds(cube, v: int) -> bool:
    pos, neg = cube
    return (v & pos) == pos and not (v & neg)


def conjoin(c1, c2):
    """Intersection of two cubes, or None when contradictory."""
    pos, neg = c1[0] | c2[0], c1[1] | c2[1]
    return None if pos & neg else (pos, neg)


def split(guards: Sequence[tuple[int, int]], pos: int = 0, neg: int = 0):
    """Partition the letter space into cubes on which every guard is decided.

    Returns a list of ``(cube, enabled)`` where ``enabled`` lists the indices of
    the guards that hold everywhere on ``cube``; the cubes are pairwise disjoint
    and cover the sub-space ``(pos, neg)``.
    """
    out = []
    stack = [(pos, neg)]
    while stack:
        p, n = stack.pop()
        enabled, pending = [], 0
        for i, (gp, gn) in enumerate(guards):
            if gp & n or gn & p:
                continue
            rem = (gp & ~p) | (gn & ~n)
            if rem:
                pending = pending or rem
            else:
                enabled.append(i)
        if not pending:
            out.append(((p, n), enabled))
            continue
        bit = pending & -pending
        stack.append((p | bit, n))
        stack.append((p, n | bit))
    out.reverse()
    return out


def eval3(f: Formula, index: dict, pos: int, neg: int):
    """Kleene evaluation of a propositional formula under a partial valuation."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        bit = 1 << index[f]
        return True if pos & bit else False if neg & bit else None
    if isinstance(f, Not):
        v = eval3(f.arg, index, pos, neg)
        return None if v is None else not v
    a = eval3(f.left, index, pos, neg)
    b = eval3(f.right, index, pos, neg)
    if isinstance(f, And):
        if a is False or b is False:
            return False
        return None if a is None or b is None else True
    if isinstance(f, Or):
        if a is True or b is True:
            return True
        return None if a is None or b is None else False
    if a is None or b is None:
        return None
    if isinstance(f, Xor):
        return a != b
    if isinstance(f, Implies):
        return (not a) or b
    if isinstance(f, Iff):
        return a == b
    raise ValueError(f"not propositional: {f}")


def prop_cubes(f: Formula, atoms: Sequence[Atom], pos: int = 0, neg: int = 0):
    """Disjoint cubes covering the space ``(pos, neg)``, each with the value of ``f``."""
    index = {a: i for i, a in enumerate(atoms)}
    out = []
    stack = [(pos, neg)]
    while stack:
        p, n = stack.pop()
        v = eval3(f, index, p, n)
        if v is not None:
            out.append(((p, n), v))
            continue
        free = ~(p | n)
        bit = _first_undecided(f, index, p, n, free)
        stack.append((p | bit, n))
        stack.append((p, n | bit))
    out.reverse()
    return out


def _first_undecided(f, index, p, n, free):
    for a, i in sorted(index.items(), key=lambda kv: kv[1]):
        bit = 1 << i
        if free & bit and _mentions(f, a):
            return bit
    raise AssertionError("undecided formula without free atoms")


def _mentions(f, a) -> bool:
    if isinstance(f, Atom):
        return f == a
    if isinstance(f, Const):
        return False
    if isinstance(f, Not):
        return _mentions(f.arg, a)
    return _mentions(f.left, a) or _mentions(f.right, a)


def cube_to_str(cube, names: Sequence[str] | None = None, atoms: Sequence[Atom] | None = None) -> str:
    """HOA-style label: ``0&!1``; ``t`` for the true cube."""
    pos, neg = cube
    if not pos and not neg:
        return "t"
    parts = []
    i = 0
    while (pos | neg) >> i:
        bit = 1 << i
        name = str(i) if names is None else names[i]
        if pos & bit:
            parts.append(name)
        elif neg & bit:
            parts.append("!" + name)
        i += 1
    return "&".join(parts)


def cube_to_formula(cube, atoms: Sequence[Atom]) -> Formula:
    pos, neg = cube
    lits = []
    for i, a in enumerate(atoms):
        if pos >> i & 1:
            lits.append(a)
        elif neg >> i & 1:
            lits.append(Not(a))
    out = None
    for lit in lits:
        out = lit if out is None else And(out, lit)
    return Const(True) if out is None else out
