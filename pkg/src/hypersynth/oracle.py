"""Exhaustive enumeration of memoryless policy tuples for tiny instances.

The enumeration works on the agent model alone: it collects the agent states
reachable from the initial states, tries every assignment of actions to them
for every policy variable and evaluates each tuple with
:func:`evaluate_policy_tuple`, which never touches the synthesis product.
"""
from __future__ import annotations

import itertools

from .hyperspec import HyperFormula, expand_quantifiers
from .mdp import Mdp
from .product import unfold_memory
from .synthesis import PolicyTuple, evaluate_policy_tuple


def reachable_agent_states(m: Mdp, starts) -> list[int]:
    seen = set(starts)
    stack = list(starts)
    while stack:
        s = stack.pop()
        for c in m.choices(s):
            for t, _ in m.successors(c):
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
    return sorted(seen)


def count_tuples(m: Mdp, spec: HyperFormula, memory_bits: int = 0) -> int:
    _, per_var = _domains(m, spec, memory_bits)
    total = 1
    for states in per_var:
        for s in states:
            total *= len(unfold_memory(m, memory_bits).enabled(s))
    return total


def _domains(m, spec, memory_bits):
    agent = unfold_memory(m, memory_bits)
    size = 1 << memory_bits
    exp = expand_quantifiers(spec, m)
    starts = [set() for _ in spec.policy_vars]
    for leaf in exp.leaves:
        b = leaf.bindings
        for i, s in enumerate(b.initial):
            starts[b.agent_pvar[i]].add(s * size)
    return agent, [reachable_agent_states(agent, st) if st else [] for st in starts]


def enumerate_tuples(m: Mdp, spec: HyperFormula, memory_bits: int = 0, limit: int = 100_000):
    agent, per_var = _domains(m, spec, memory_bits)
    slots = [(k, s) for k, states in enumerate(per_var) for s in states]
    options = [agent.enabled(s) for _, s in slots]
    total = 1
    for o in options:
        total *= len(o)
    if total > limit:
        raise ValueError(f"{total} policy tuples exceed the enumeration limit {limit}")
    for combo in itertools.product(*options):
        pols = [{s: agent.enabled(s)[0] for s in range(agent.num_states)} for _ in spec.policy_vars]
        for (k, s), a in zip(slots, combo):
            pols[k][s] = a
        yield PolicyTuple(tuple(pols), memory_bits)


def brute_force(m: Mdp, spec: HyperFormula, memory_bits: int = 0, limit: int = 100_000):
    """``(best value, best tuple)`` for an objective, ``(True, tuple)`` for a
    satisfiable threshold specification, ``(None, None)`` when infeasible."""
    opt = spec.objective()
    best, best_t = None, None
    for t in enumerate_tuples(m, spec, memory_bits, limit):
        values, verdict = evaluate_policy_tuple(m, spec, t)
        if verdict is not True:
            continue
        if opt is None:
            return True, t
        v = float(next(iter(v for k, v in values.items() if _is_objective(spec, k))))
        if best is None or (v > best if opt.direction == "max" else v < best):
            best, best_t = v, t
    return best, best_t


def _is_objective(spec, key):
    _, k = key
    return spec.constraints()[k].kind != "threshold"
