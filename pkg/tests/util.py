"""Random instance generators shared by the tests."""
from __future__ import annotations

import itertools
import random

import numpy as np

from hypersynth.ltl import (
    TRUE, And, Atom, Eventually, Globally, Implies, LassoWord, Next, Not, Or, Release, Until, Xor,
)
from hypersynth.mdp import Mdp, induce_mc


def rand_mdp(rng: random.Random, n: int, num_actions: int, aps="ab", max_succ=2, p_label=0.4) -> Mdp:
    trans = {}
    for s in range(n):
        for a in sorted(rng.sample(range(num_actions), rng.randint(1, num_actions))):
            succ = rng.sample(range(n), rng.randint(1, min(max_succ, n)))
            w = [rng.random() + 0.05 for _ in succ]
            tot = sum(w)
            trans[(s, a)] = {t: x / tot for t, x in zip(succ, w)}
    lab = {s: {x for x in aps if rng.random() < p_label} for s in range(n)}
    return Mdp.from_choices(n, [f"a{i}" for i in range(num_actions)], trans, lab, list(aps))


def rand_mc(rng: random.Random, n: int, aps="ab", max_succ=3) -> Mdp:
    return rand_mdp(rng, n, 1, aps, max_succ)


def rand_formula(rng: random.Random, depth: int, atoms) -> object:
    if depth == 0 or rng.random() < 0.25:
        return rng.choice(list(atoms) + [TRUE])
    k = rng.randrange(10)
    if k < 5:
        return rng.choice([Not, Next, Eventually, Globally, Not])(rand_formula(rng, depth - 1, atoms))
    op = rng.choice([And, Or, Until, Release, Implies, Xor])
    return op(rand_formula(rng, depth - 1, atoms), rand_formula(rng, depth - 1, atoms))


def rand_letter(rng: random.Random, aps_per_agent):
    return tuple(frozenset(a for a in aps if rng.random() < 0.5) for aps in aps_per_agent)


def rand_lasso(rng: random.Random, aps_per_agent, max_prefix=4, max_loop=3) -> LassoWord:
    prefix = tuple(rand_letter(rng, aps_per_agent) for _ in range(rng.randrange(max_prefix + 1)))
    loop = tuple(rand_letter(rng, aps_per_agent) for _ in range(1 + rng.randrange(max_loop)))
    return LassoWord(prefix, loop)


def all_policies(m: Mdp):
    for combo in itertools.product(*(m.enabled(s) for s in range(m.num_states))):
        yield dict(enumerate(combo))


def reach_by_iteration(mc: Mdp, target, steps=5000) -> np.ndarray:
    """Reachability in a chain by plain power iteration (dense)."""
    P = mc.matrix.toarray()
    x = np.where(target, 1.0, 0.0)
    for _ in range(steps):
        x = np.where(target, 1.0, P @ x)
    return x


def enum_reachability(m: Mdp, target):
    best_max = np.full(m.num_states, -1.0)
    best_min = np.full(m.num_states, 2.0)
    for pol in all_policies(m):
        x = reach_by_iteration(induce_mc(m, pol), target)
        best_max = np.maximum(best_max, x)
        best_min = np.minimum(best_min, x)
    return best_max, best_min


A1, B1, A2, B2 = Atom("a", 1), Atom("b", 1), Atom("a", 2), Atom("b", 2)


OBJECTIVE_BODIES = ["F (a@x1 & a@x2)", "(!a@x1) U a@x2", "G !a@x1 & F b@x2", "F a@x1 & G (a@x1 -> a@x2)"]


def rand_objective_spec(rng: random.Random, m: Mdp, shared: bool | None = None, body: str | None = None) -> str:
    """Two-agent optimization spec with shared or separate policy variables."""
    shared = rng.random() < 0.5 if shared is None else shared
    body = body or rng.choice(OBJECTIVE_BODIES)
    i1, i2 = rng.randrange(m.num_states), rng.randrange(m.num_states)
    d = rng.choice(["max", "min"])
    if shared:
        return f"exists (s1); forall x1 in {{{i1}}} (s1); forall x2 in {{{i2}}} (s1); P{d} [ {body} ]"
    return f"exists (s1 s2); forall x1 in {{{i1}}} (s1); forall x2 in {{{i2}}} (s2); P{d} [ {body} ]"


def rand_tuple(rng: random.Random, agent: Mdp, pvars: int, memory_bits: int = 0):
    from hypersynth.synthesis import PolicyTuple

    pols = tuple({s: rng.choice(agent.enabled(s)) for s in range(agent.num_states)} for _ in range(pvars))
    return PolicyTuple(pols, memory_bits)


def policy_reach(p, rows) -> set:
    """Product states reached from the initial state when playing choice ``rows[s]``."""
    seen, todo = {p.initial}, [p.initial]
    while todo:
        s = todo.pop()
        for t, _ in p.successors(int(rows[s])):
            if t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def holes_used(p, rows) -> dict:
    """(pvar, local state) -> actions played there on the reachable product states."""
    b = p.bindings
    out = {}
    for s in policy_reach(p, rows):
        acts = p.joint_action(int(rows[s]))
        for i in range(b.agent_count):
            out.setdefault((b.agent_pvar[i], int(p.local[s, i])), set()).add(acts[i])
    return out
