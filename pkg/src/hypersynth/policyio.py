"""Text format for policy tuples.

One block per policy variable::

    policy s1
    x0y0 N
    x1y0 E
    policy s2
    ...

With memory, states are written ``name/m<n>`` and a third column gives the
memory value chosen together with the action (default 0).  An action ``*``
stands for a uniform choice among the enabled actions.
"""
from __future__ import annotations

from .hyperspec import HyperFormula
from .mdp import Mdp, ModelError
from .synthesis import PolicyTuple


def dump_policy_tuple(m: Mdp, spec: HyperFormula, t: PolicyTuple, states=None) -> str:
    """``states`` optionally limits the listed states of the unfolded model."""
    size = 1 << t.memory_bits
    out = [f"memory {t.memory_bits}"]
    for k, pvar in enumerate(spec.policy_vars):
        out.append(f"policy {pvar}")
        pol = t.policies[k]
        for s in sorted(pol) if states is None else sorted(states[k]):
            base, n = divmod(s, size)
            name = m.state_name(base) + (f"/m{n}" if t.memory_bits else "")
            a = pol[s]
            if isinstance(a, str):
                out.append(f"{name} {a}")
                continue
            act, upd = divmod(int(a), size)
            out.append(f"{name} {m.action_name(act)}" + (f" {upd}" if t.memory_bits else ""))
    return "\n".join(out) + "\n"


def parse_policy_tuple(text: str, m: Mdp, spec: HyperFormula) -> PolicyTuple:
    bits = 0
    names = {m.state_name(s): s for s in range(m.num_states)}
    acts = {m.action_name(a): a for a in range(len(m.actions))}
    blocks: dict[str, dict] = {}
    current = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        if tok[0] == "memory":
            bits = int(tok[1])
        elif tok[0] == "policy":
            if tok[1] not in spec.policy_vars:
                raise ModelError(f"line {lineno}: unknown policy variable {tok[1]!r}")
            current = blocks.setdefault(tok[1], {})
        elif current is None:
            raise ModelError(f"line {lineno}: entry outside a policy block")
        elif len(tok) in (2, 3):
            rows.append((lineno, current, tok))
        else:
            raise ModelError(f"line {lineno}: expected 'state action [memory]'")
    size = 1 << bits
    for lineno, pol, tok in rows:
        sname, _, mem = tok[0].partition("/m")
        if sname not in names:
            raise ModelError(f"line {lineno}: unknown state {sname!r}")
        s = names[sname] * size + (int(mem) if mem else 0)
        if tok[1] == "*":
            pol[s] = "*"
            continue
        if tok[1] not in acts:
            raise ModelError(f"line {lineno}: unknown action {tok[1]!r}")
        upd = int(tok[2]) if len(tok) == 3 else 0
        if not 0 <= upd < size:
            raise ModelError(f"line {lineno}: memory value {upd} out of range")
        pol[s] = acts[tok[1]] * size + upd
    pols = []
    for pvar in spec.policy_vars:
        pol = dict(blocks.get(pvar, {}))
        # states left open pick their first enabled action with memory 0
        for s in range(m.num_states * size):
            pol.setdefault(s, int(m.enabled(s // size)[0]) * size)
        pols.append(pol)
    return PolicyTuple(tuple(pols), bits)
