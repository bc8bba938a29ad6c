"""LTL to nondeterministic Büchi automata by tableau expansion.

States of the intermediate automaton are sets of NNF obligations.  Expanding
an obligation set yields terms ``(cube, next obligations, deferred
eventualities)``; a transition is accepting for an eventuality ``u`` (an ``U``
or ``F`` subformula) unless the term postponed ``u``.  The resulting
transition-based generalized Büchi automaton is degeneralized with a
round-robin counter into a state-based one.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..ltl import (
    Formula, Const, Atom, Not, And, Or, Next, Until, Release, Eventually, Globally,
    atoms as formula_atoms, subformulas, to_nnf,
)
from .guards import atom_order, holds, valuation

NBA_STATE_CAP = 4096


class AutomatonTooLarge(RuntimeError):
    """The construction exceeded its configured state cap."""


@dataclass(frozen=True, eq=False)
class Nba:
    atoms: tuple[Atom, ...]
    num_states: int
    initial: frozenset
    edges: tuple  # per state: tuple of (pos, neg, dst)
    accepting: frozenset

    def post(self, states, v: int) -> frozenset:
        return frozenset(d for s in states for (p, n, d) in self.edges[s] if holds((p, n), v))

    def accepts_lasso(self, w) -> bool:
        """Emptiness of the product with the lasso (used only as a test aid)."""
        vals = [valuation(w.letter(i), self.atoms) for i in range(len(w))]
        nodes = [(s, 0) for s in self.initial]
        graph, seen = {}, set(nodes)
        stack = list(nodes)
        while stack:
            s, i = stack.pop()
            succ = [(d, w.succ(i)) for (p, n, d) in self.edges[s] if holds((p, n), vals[i])]
            graph[(s, i)] = succ
            for x in succ:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        return _has_accepting_cycle(graph, lambda x: x[0] in self.accepting)


def _has_accepting_cycle(graph, is_acc) -> bool:
    from ._scc import sccs

    for comp in sccs(graph):
        nontrivial = len(comp) > 1 or any(x in graph[x] for x in comp)
        if nontrivial and any(is_acc(x) for x in comp):
            return True
    return False


def _expand(obligations):
    """All consistent terms for a conjunction of NNF obligations."""
    out = []

    def go(todo, done, pos, neg, nxt, deferred):
        while todo:
            f = todo[-1]
            todo = todo[:-1]
            if f in done:
                continue
            done = done | {f}
            if isinstance(f, Const):
                if not f.value:
                    return
            elif isinstance(f, Atom):
                if f in neg:
                    return
                pos = pos | {f}
            elif isinstance(f, Not):
                if f.arg in pos:
                    return
                neg = neg | {f.arg}
            elif isinstance(f, And):
                todo = todo + (f.left, f.right)
            elif isinstance(f, Next):
                nxt = nxt | {f.arg}
            elif isinstance(f, Globally):
                todo = todo + (f.arg,)
                nxt = nxt | {f}
            elif isinstance(f, Or):
                go(todo + (f.left,), done, pos, neg, nxt, deferred)
                todo = todo + (f.right,)
            elif isinstance(f, Eventually):
                go(todo + (f.arg,), done, pos, neg, nxt, deferred)
                nxt, deferred = nxt | {f}, deferred | {f}
            elif isinstance(f, Until):
                go(todo + (f.right,), done, pos, neg, nxt, deferred)
                todo = todo + (f.left,)
                nxt, deferred = nxt | {f}, deferred | {f}
            elif isinstance(f, Release):
                go(todo + (f.left, f.right), done, pos, neg, nxt, deferred)
                todo = todo + (f.right,)
                nxt = nxt | {f}
            else:
                raise TypeError(f"formula not in NNF: {f}")
        out.append((frozenset(pos), frozenset(neg), frozenset(nxt), frozenset(deferred)))

    go(tuple(sorted(obligations, key=str)), frozenset(), frozenset(), frozenset(), frozenset(), frozenset())
    # drop subsumed duplicates
    return list(dict.fromkeys(out))


def ltl_to_nba(f: Formula, cap: int = NBA_STATE_CAP, atoms=None) -> Nba:
    """Büchi automaton accepting exactly the words satisfying ``f``."""
    f = to_nnf(f)
    atoms = atom_order(formula_atoms(f) if atoms is None else atoms)
    index = {a: i for i, a in enumerate(atoms)}
    eventualities = [g for g in subformulas(f) if isinstance(g, (Until, Eventually))]
    k = len(eventualities)

    # generalized automaton over obligation sets
    init = frozenset([f])
    ids = {init: 0}
    order = [init]
    gtrans = []
    i = 0
    while i < len(order):
        S = order[i]
        i += 1
        row = []
        for pos, neg, nxt, deferred in _expand(S):
            cube = (sum(1 << index[a] for a in pos), sum(1 << index[a] for a in neg))
            if nxt not in ids:
                ids[nxt] = len(order)
                order.append(nxt)
                if len(order) > cap:
                    raise AutomatonTooLarge(f"NBA exceeds {cap} states")
            acc = frozenset(j for j, u in enumerate(eventualities) if u not in deferred)
            row.append((cube, ids[nxt], acc))
        gtrans.append(row)

    # degeneralize: state (S, c) waits for acceptance set c; c == k marks acceptance
    if k == 0:
        edges = tuple(tuple(dict.fromkeys((c[0], c[1], d) for c, d, _ in row)) for row in gtrans)
        nba = Nba(atoms, len(order), frozenset([0]), edges, frozenset(range(len(order))))
        return _trim(nba)
    dids = {(0, 0): 0}
    dorder = [(0, 0)]
    dedges = []
    j = 0
    while j < len(dorder):
        s, c = dorder[j]
        j += 1
        row = []
        for cube, d, acc in gtrans[s]:
            c2 = 0 if c == k else c
            while c2 < k and c2 in acc:
                c2 += 1
            tgt = (d, c2)
            if tgt not in dids:
                dids[tgt] = len(dorder)
                dorder.append(tgt)
                if len(dorder) > cap:
                    raise AutomatonTooLarge(f"NBA exceeds {cap} states")
            row.append((cube[0], cube[1], dids[tgt]))
        dedges.append(tuple(dict.fromkeys(row)))
    accepting = frozenset(i for i, (_, c) in enumerate(dorder) if c == k)
    return _trim(Nba(atoms, len(dorder), frozenset([0]), tuple(dedges), accepting))


def _trim(nba: Nba) -> Nba:
    """Remove states from which no accepting cycle is reachable, and renumber."""
    from ._scc import sccs

    graph = {s: [d for (_, _, d) in nba.edges[s]] for s in range(nba.num_states)}
    good = set()
    for comp in sccs(graph):
        nontrivial = len(comp) > 1 or any(x in graph[x] for x in comp)
        if nontrivial and any(x in nba.accepting for x in comp):
            good |= set(comp)
    # backward closure
    rev = {s: [] for s in graph}
    for s, ds in graph.items():
        for d in ds:
            rev[d].append(s)
    stack = list(good)
    while stack:
        s = stack.pop()
        for p in rev[s]:
            if p not in good:
                good.add(p)
                stack.append(p)
    # keep reachable good states
    keep, stack = [], [s for s in sorted(nba.initial) if s in good]
    seen = set(stack)
    while stack:
        s = stack.pop()
        keep.append(s)
        for d in graph[s]:
            if d in good and d not in seen:
                seen.add(d)
                stack.append(d)
    keep.sort()
    if not keep:
        # empty language: a single non-accepting state without transitions
        return Nba(nba.atoms, 1, frozenset([0]), ((),), frozenset())
    new = {s: i for i, s in enumerate(keep)}
    edges = tuple(tuple((p, n, new[d]) for (p, n, d) in nba.edges[s] if d in new) for s in keep)
    return Nba(nba.atoms, len(keep), frozenset(new[s] for s in nba.initial if s in new), edges,
               frozenset(new[s] for s in nba.accepting if s in new))
