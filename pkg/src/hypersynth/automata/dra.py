"""Deterministic Rabin automata over tuples of label sets.

``ltl_to_dra`` first tries direct constructions for reachability, safety and
propositional-until bodies, and otherwise runs tableau NBA -> Safra trees ->
signature-based state merging.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ltl import (
    Formula, Atom, Until, Eventually, Globally, Not,
    atoms as formula_atoms, is_propositional, to_nnf, state_vars,
)
from .guards import atom_order, holds, prop_cubes, split, valuation
from .nba import AutomatonTooLarge, Nba, ltl_to_nba, NBA_STATE_CAP

DRA_STATE_CAP = 100_000
MINIMIZE_ATOM_LIMIT = 12


@dataclass(eq=False)
class Dra:
    """Total deterministic Rabin automaton with cube-labeled edges.

    ``edges[q]`` is a tuple of ``(pos, neg, dst)``; the cubes of one state are
    pairwise disjoint and cover the letter space.  ``pairs`` holds ``(L, K)``
    with the run accepting iff for some pair ``L`` is visited finitely often and
    ``K`` infinitely often.
    """

    atoms: tuple[Atom, ...]
    num_states: int
    init: int
    edges: tuple
    pairs: tuple
    arity: int
    _memo: dict = field(default_factory=dict, repr=False)

    def step_valuation(self, q: int, v: int) -> int:
        key = (q, v)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        for p, n, d in self.edges[q]:
            if (v & p) == p and not (v & n):
                self._memo[key] = d
                return d
        raise ValueError(f"DRA not total at state {q} for valuation {v:b}")

    def step(self, q: int, letter) -> int:
        return self.step_valuation(q, valuation(letter, self.atoms))

    def run(self, letters, q=None):
        q = self.init if q is None else q
        for x in letters:
            q = self.step(q, x)
        return q

    def accepting_set(self, visited) -> bool:
        vis = set(visited)
        return any(not (vis & L) and (vis & K) for L, K in self.pairs)

    def _closed_within(self, keep) -> set:
        keep = set(keep)
        while True:
            bad = {q for q in keep if any(d not in keep for _, _, d in self.edges[q])}
            if not bad:
                return keep
            keep -= bad

    def universal_states(self) -> frozenset:
        """States from which every word is accepted (closed inside some K minus L)."""
        out = set()
        for L, K in self.pairs:
            out |= self._closed_within(set(K) - set(L))
        return frozenset(out)

    def rejecting_states(self) -> frozenset:
        """States from which every word is rejected (closed and avoiding every K)."""
        avoid = set(range(self.num_states))
        for _, K in self.pairs:
            avoid -= set(K)
        return frozenset(self._closed_within(avoid))

    def check(self) -> list[str]:
        """Determinism/totality violations (empty when well formed)."""
        problems = []
        for q in range(self.num_states):
            cubes = [(p, n) for p, n, _ in self.edges[q]]
            for cube, enabled in split(cubes):
                if len(enabled) != 1:
                    problems.append(f"state {q}: {len(enabled)} edges enabled on cube {cube}")
        if not self.pairs:
            problems.append("no acceptance pairs")
        for L, K in self.pairs:
            if not (L | K) <= set(range(self.num_states)):
                problems.append("acceptance pair mentions unknown state")
        return problems


def dra_accepts_lasso(d: Dra, w) -> bool:
    """Whether the unique run of ``d`` on lasso ``w`` is accepting."""
    if w.arity != d.arity:
        raise ValueError(f"lasso arity {w.arity} does not match automaton arity {d.arity}")
    q = d.run(w.prefix)
    seen = {}
    trail = []
    i = 0
    while (i, q) not in seen:
        seen[(i, q)] = len(trail)
        trail.append(q)
        q = d.step(q, w.loop[i])
        i = (i + 1) % len(w.loop)
    return d.accepting_set(trail[seen[(i, q)]:])


# ---------------------------------------------------------------------------
# direct constructions


def _from_table(atoms, arity, rows, pairs) -> Dra:
    edges = tuple(tuple((c[0], c[1], d) for c, d in _merge_cubes(row)) for row in rows)
    return Dra(atoms, len(rows), 0, edges, tuple((frozenset(L), frozenset(K)) for L, K in pairs), arity)


def _reach_dra(goal, atoms, arity) -> Dra:
    row0 = [(c, 1 if v else 0) for c, v in prop_cubes(goal, atoms)]
    return _from_table(atoms, arity, [row0, [((0, 0), 1)]], [((), (1,))])


def _safety_dra(inv, atoms, arity) -> Dra:
    row0 = [(c, 0 if v else 1) for c, v in prop_cubes(inv, atoms)]
    return _from_table(atoms, arity, [row0, [((0, 0), 1)]], [((), (0,))])


def _until_dra(hold, goal, atoms, arity) -> Dra:
    row0 = []
    for c, v in prop_cubes(goal, atoms):
        if v:
            row0.append((c, 1))
        else:
            row0 += [(c2, 0 if v2 else 2) for c2, v2 in prop_cubes(hold, atoms, *c)]
    return _from_table(atoms, arity, [row0, [((0, 0), 1)], [((0, 0), 2)]], [((), (1,))])


def _shortcut(f: Formula, atoms, arity):
    for g in (f, to_nnf(f)):
        if isinstance(g, Eventually) and is_propositional(g.arg):
            return _reach_dra(g.arg, atoms, arity)
        if isinstance(g, Globally) and is_propositional(g.arg):
            return _safety_dra(g.arg, atoms, arity)
        if isinstance(g, Until) and is_propositional(g.left) and is_propositional(g.right):
            return _until_dra(g.left, g.right, atoms, arity)
        if is_propositional(g):
            # only the first letter matters
            row0 = [(c, 1 if v else 2) for c, v in prop_cubes(g, atoms)]
            return _from_table(atoms, arity, [row0, [((0, 0), 1)], [((0, 0), 2)]], [((), (1,))])
    return None


# ---------------------------------------------------------------------------
# Safra determinization


class _Node:
    __slots__ = ("name", "label", "mark", "children")

    def __init__(self, name, label, mark=False, children=None):
        self.name, self.label, self.mark = name, label, mark
        self.children = children or []


def _thaw(t):
    name, label, mark, kids = t
    return _Node(name, label, mark, [_thaw(k) for k in kids])


def _freeze(n):
    return (n.name, n.label, n.mark, tuple(_freeze(k) for k in n.children))


def _preorder(n):
    stack = [n]
    while stack:
        v = stack.pop()
        yield v
        stack.extend(reversed(v.children))


def _subtract(n, states):
    n.label = n.label - states
    for k in n.children:
        _subtract(k, states)


def _safra_step(tree, post, accepting):
    if tree is None:
        return None
    root = _thaw(tree)
    nodes = list(_preorder(root))
    used = {v.name for v in nodes}
    free = (i for i in range(1, 10 ** 9) if i not in used)
    for v in nodes:
        v.mark = False
    for v in nodes:
        fa = v.label & accepting
        if fa:
            v.children.append(_Node(next(free), fa))
    for v in _preorder(root):
        v.label = post(v.label)

    def hmerge(v):
        seen = frozenset()
        for k in v.children:
            if seen:
                _subtract(k, seen)
            seen = seen | k.label
            hmerge(k)

    hmerge(root)

    def prune(v):
        v.children = [k for k in v.children if k.label]
        for k in v.children:
            prune(k)

    if not root.label:
        return None
    prune(root)
    for v in _preorder(root):
        if v.children and frozenset().union(*(k.label for k in v.children)) == v.label:
            v.children = []
            v.mark = True
    return _freeze(root)


def _names(tree):
    if tree is None:
        return {}
    out = {}
    stack = [tree]
    while stack:
        name, _, mark, kids = stack.pop()
        out[name] = mark
        stack.extend(kids)
    return out


def determinize_to_dra(n: Nba, cap: int = DRA_STATE_CAP, arity: int | None = None) -> Dra:
    """Safra's construction; the result is total (the empty tree is a sink)."""
    arity = arity or max((a.tag for a in n.atoms), default=1)
    accepting = n.accepting
    init = (1, frozenset(n.initial), False, ()) if n.initial else None
    ids = {init: 0}
    order = [init]
    rows = []
    i = 0
    while i < len(order):
        tree = order[i]
        i += 1
        if tree is None:
            rows.append([((0, 0), i - 1)])
            continue
        live = tree[1]
        out_edges = [(s, p, q, d) for s in sorted(live) for (p, q, d) in n.edges[s]]
        row = []
        for cube, enabled in split([(p, q) for _, p, q, _ in out_edges]):
            succ = {}
            for e in enabled:
                s, _, _, d = out_edges[e]
                succ.setdefault(s, set()).add(d)
            post = lambda S, succ=succ: frozenset(d for s in S for d in succ.get(s, ()))
            new = _safra_step(tree, post, accepting)
            if new not in ids:
                ids[new] = len(order)
                order.append(new)
                if len(order) > cap:
                    raise AutomatonTooLarge(f"DRA exceeds {cap} states (formula too large for desk scale)")
            row.append((cube, ids[new]))
        rows.append(row)
    marks = [_names(t) for t in order]
    all_names = sorted({k for m in marks for k in m})
    pairs = []
    for name in all_names:
        K = frozenset(q for q, m in enumerate(marks) if m.get(name))
        if not K:
            continue
        L = frozenset(q for q, m in enumerate(marks) if name not in m)
        pairs.append((L, K))
    if not pairs:
        pairs = [(frozenset(), frozenset())]
    edges = tuple(tuple((c[0], c[1], d) for c, d in _merge_cubes(row)) for row in rows)
    return Dra(n.atoms, len(order), 0, edges, tuple(dict.fromkeys(pairs)), arity)


# ---------------------------------------------------------------------------
# post-processing


def _merge_cubes(row):
    """Merge cubes with equal targets that differ in exactly one literal."""
    row = list(dict.fromkeys(row))
    changed = True
    while changed:
        changed = False
        for i in range(len(row)):
            (p1, n1), d1 = row[i]
            for j in range(i + 1, len(row)):
                (p2, n2), d2 = row[j]
                if d1 != d2:
                    continue
                dp, dn = p1 ^ p2, n1 ^ n2
                if dp and dp == dn and not dp & (dp - 1) and (p1 | n1) == (p2 | n2):
                    row[i] = ((p1 & ~dp, n1 & ~dp), d1)
                    del row[j]
                    changed = True
                    break
                if (p1, n1) == (p2, n2):
                    del row[j]
                    changed = True
                    break
            if changed:
                break
    return row


def minimize(d: Dra) -> Dra:
    """Merge states with equal acceptance signature and equal successor blocks."""
    k = len(d.atoms)
    if k > MINIMIZE_ATOM_LIMIT:
        return _reachable(d)
    vals = np.arange(1 << k)
    table = np.zeros((d.num_states, 1 << k), dtype=np.int64)
    for q in range(d.num_states):
        for p, n, t in d.edges[q]:
            mask = ((vals & p) == p) & ((vals & n) == 0)
            table[q, mask] = t
    sig = np.array([[q in L for L, _ in d.pairs] + [q in K for _, K in d.pairs]
                    for q in range(d.num_states)], dtype=np.int64).reshape(d.num_states, -1)
    _, block = np.unique(sig, axis=0, return_inverse=True)
    block = block.reshape(-1)
    count = block.max() + 1
    while True:
        key = np.concatenate([block[:, None], block[table]], axis=1)
        _, new = np.unique(key, axis=0, return_inverse=True)
        new = new.reshape(-1)
        if new.max() + 1 == count:
            break
        block, count = new, new.max() + 1
    # renumber blocks in order of first reachable appearance from init
    rep = {}
    for q in range(d.num_states):
        rep.setdefault(int(block[q]), q)
    order = [int(block[d.init])]
    pos = {order[0]: 0}
    i = 0
    while i < len(order):
        b = order[i]
        i += 1
        for _, _, t in d.edges[rep[b]]:
            bt = int(block[t])
            if bt not in pos:
                pos[bt] = len(order)
                order.append(bt)
    edges = []
    for b in order:
        row = [((p, n), pos[int(block[t])]) for p, n, t in d.edges[rep[b]]]
        edges.append(tuple((c[0], c[1], t) for c, t in _merge_cubes(row)))
    pairs = []
    for L, K in d.pairs:
        L2 = frozenset(pos[int(block[q])] for q in L if int(block[q]) in pos)
        K2 = frozenset(pos[int(block[q])] for q in K if int(block[q]) in pos)
        if K2:
            pairs.append((L2, K2))
    pairs = _prune_pairs(pairs) or [(frozenset(), frozenset())]
    return Dra(d.atoms, len(order), 0, tuple(edges), tuple(pairs), d.arity)


def _prune_pairs(pairs):
    """Drop duplicate pairs and pairs subsumed by another (L' ⊆ L and K' ⊇ K)."""
    pairs = list(dict.fromkeys(pairs))
    out = []
    for i, (L, K) in enumerate(pairs):
        dominated = any(j != i and L2 <= L and K2 >= K and ((L2, K2) != (L, K) or j < i)
                        for j, (L2, K2) in enumerate(pairs))
        if not dominated:
            out.append((L, K))
    return out


def _reachable(d: Dra) -> Dra:
    order, pos = [d.init], {d.init: 0}
    i = 0
    while i < len(order):
        for _, _, t in d.edges[order[i]]:
            if t not in pos:
                pos[t] = len(order)
                order.append(t)
        i += 1
    edges = tuple(tuple((p, n, pos[t]) for p, n, t in d.edges[q]) for q in order)
    pairs = [(frozenset(pos[q] for q in L if q in pos), frozenset(pos[q] for q in K if q in pos))
             for L, K in d.pairs]
    pairs = _prune_pairs([(L, K) for L, K in pairs if K]) or [(frozenset(), frozenset())]
    return Dra(d.atoms, len(order), 0, edges, tuple(pairs), d.arity)


def ltl_to_dra(
    f: Formula,
    arity: int | None = None,
    nba_cap: int = NBA_STATE_CAP,
    dra_cap: int = DRA_STATE_CAP,
    shortcuts: bool = True,
) -> Dra:
    """Deterministic Rabin automaton for ``f`` (tags must be positional)."""
    tags = state_vars(f)
    if any(not isinstance(t, int) or t < 1 for t in tags):
        raise ValueError("formula still contains unresolved state-variable tags")
    need = max(tags, default=1)
    arity = need if arity is None else arity
    if arity < need:
        raise ValueError(f"formula mentions agent {need} but arity is {arity}")
    atoms = atom_order(formula_atoms(f))
    if shortcuts:
        d = _shortcut(f, atoms, arity)
        if d is not None:
            return _reachable(d)
    nba = ltl_to_nba(f, cap=nba_cap, atoms=atoms)
    d = determinize_to_dra(nba, cap=dra_cap, arity=arity)
    return minimize(d)
