"""Export of single-objective, one-policy-per-agent products as ``.dpomdp`` files.

The exported problem has one agent per replica plus an automaton agent with a
single ``noop`` action.  Each agent observes its own state component.  Reward 1
is paid on transitions entering the accepting success set, which is made
absorbing, so the optimal total reward equals the optimal acceptance
probability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hyperspec import HyperFormula, SpecError, is_dec_fragment
from .mdp import Mdp
from .probcheck import accepting_success_set


@dataclass
class DecModel:
    agents: int
    discount: float
    states: list[str]
    start: int
    actions: list[list[str]]
    observations: list[list[str]]
    mdp: Mdp  # joint actions as tuples of per-agent action indices
    rewards: np.ndarray  # expected immediate reward per choice of ``mdp``


def _component_names(p):
    k = p.agent_count
    names = []
    for s in range(p.num_states):
        parts = [f"s{int(x)}" for x in p.local[s]] + [f"q{int(p.auto[s])}"]
        names.append("_".join(parts))
    return names


def dump_dpomdp(p, spec: HyperFormula | None = None) -> str:
    if spec is not None and not is_dec_fragment(spec):
        raise SpecError("specification is outside the exportable fragment "
                        "(needs one agent per policy variable, one probability operator, singleton initial sets)")
    if spec is not None and spec.constraints()[0].kind == "reward":
        raise SpecError("reward objectives are not exportable")
    acc, _ = accepting_success_set(p)
    k = p.agent_count
    agent = p.agent
    names = _component_names(p)
    act_names = [agent.action_name(a) for a in range(len(agent.actions))]
    # joint actions not enabled in a state lead to an absorbing dead state
    needs_dead = any(len(agent.enabled(s)) != len(agent.actions) for s in range(agent.num_states))
    states = names + (["dead"] if needs_dead else [])
    out = [
        "# decentralized reachability problem",
        f"agents: {k + 1}",
        "discount: 1.0",
        "values: reward",
        "states: " + " ".join(states),
        f"start: {names[p.initial]}",
        "actions:",
    ]
    out += [" ".join(act_names) for _ in range(k)] + ["noop"]
    out.append("observations:")
    for i in range(k):
        vals = sorted({int(x) for x in p.local[:, i]})
        out.append(" ".join(f"s{v}" for v in vals) + (" dead" if needs_dead else ""))
    qs = sorted({int(q) for q in p.auto})
    out.append(" ".join(f"q{q}" for q in qs) + (" dead" if needs_dead else ""))

    full = len(agent.actions)
    for s in range(p.num_states):
        src = names[s]
        if acc[s]:
            out.append(f"T: {' '.join('*' for _ in range(k))} * : {src} : {src} : 1")
            continue
        enabled = {}
        for c in p.choices(s):
            enabled[p.joint_action(c)] = c
        for code in range(full ** k):
            acts = _decode(code, full, k)
            jn = " ".join(act_names[a] for a in acts) + " noop"
            c = enabled.get(acts)
            if c is None:
                out.append(f"T: {jn} : {src} : dead : 1")
                continue
            for t, pr in p.successors(c, exact=True):
                out.append(f"T: {jn} : {src} : {names[t]} : {_num(pr)}")
                if acc[t]:
                    out.append(f"R: {jn} : {src} : {names[t]} : * : 1")
    if needs_dead:
        out.append(f"T: {' '.join('*' for _ in range(k))} * : dead : dead : 1")
    for s in range(p.num_states):
        obs = " ".join([f"s{int(x)}" for x in p.local[s]] + [f"q{int(p.auto[s])}"])
        out.append(f"O: * : {names[s]} : {obs} : 1")
    if needs_dead:
        out.append(f"O: * : dead : {' '.join(['dead'] * (k + 1))} : 1")
    return "\n".join(out) + "\n"


def _num(x) -> str:
    return str(x) if not isinstance(x, float) else repr(x)


def _decode(code, base, k):
    out = []
    for _ in range(k):
        code, a = divmod(code, base)
        out.append(a)
    return tuple(reversed(out))


def export_dpomdp(p, spec: HyperFormula, path) -> None:
    text = dump_dpomdp(p, spec)
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# reading (used for round-trip checks)


def parse_dpomdp(text: str) -> DecModel:
    from fractions import Fraction
    import itertools

    lines = [ln.split("#", 1)[0].rstrip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    header = {}
    i = 0
    actions, observations = [], []
    while i < len(lines):
        ln = lines[i]
        key = ln.split(":", 1)[0].strip()
        if key in ("T", "O", "R"):
            break
        val = ln.split(":", 1)[1].strip() if ":" in ln else ""
        if key in ("actions", "observations"):
            n = int(header["agents"])
            block = [lines[i + 1 + j].split() for j in range(n)]
            (actions if key == "actions" else observations).extend(block)
            i += n + 1
            continue
        header[key] = val
        i += 1
    n_agents = int(header["agents"])
    states = header["states"].split()
    sidx = {s: j for j, s in enumerate(states)}
    start = sidx[header["start"]]
    sizes = [len(a) for a in actions]
    aidx = [{a: j for j, a in enumerate(acts)} for acts in actions]

    def joint_codes(tokens):
        options = []
        for ag, tok in enumerate(tokens):
            options.append(range(sizes[ag]) if tok == "*" else [aidx[ag][tok]])
        return itertools.product(*options)

    trans, reward = {}, {}
    for ln in lines[i:]:
        parts = [x.strip() for x in ln.split(":")]
        kind = parts[0]
        if kind == "T":
            toks = parts[1].split()
            if len(toks) != n_agents:
                raise ValueError(f"bad joint action in {ln!r}")
            s, t = sidx[parts[2]], sidx[parts[3]]
            pr = Fraction(parts[4]) if "/" in parts[4] else float(parts[4])
            for acts in joint_codes(toks):
                row = trans.setdefault((s, acts), {})
                row[t] = pr  # later lines override earlier ones
        elif kind == "R":
            toks = parts[1].split()
            s, t = sidx[parts[2]], sidx[parts[3]]
            for acts in joint_codes(toks):
                reward[(s, acts, t)] = float(parts[5])
        elif kind == "O":
            continue
        else:
            raise ValueError(f"unexpected line {ln!r}")
    joint_list = sorted({a for (_, a) in trans})
    jidx = {a: j for j, a in enumerate(joint_list)}
    m = Mdp.from_choices(len(states), joint_list, {(s, jidx[a]): row for (s, a), row in trans.items()},
                         {}, [], None, states)
    rew = np.zeros(m.num_choices)
    for c in range(m.num_choices):
        s, a = int(m.choice_state[c]), joint_list[int(m.choice_action[c])]
        for t, pr in m.successors(c):
            rew[c] += pr * reward.get((s, a, t), 0.0)
    return DecModel(n_agents, float(header.get("discount", 1.0)), states, start, actions, observations, m, rew)


def read_dpomdp(path) -> DecModel:
    with open(path) as fh:
        return parse_dpomdp(fh.read())


def centralized_value(model: DecModel) -> float:
    """Optimal expected total reward when one controller sees everything."""
    from .probcheck import max_total_reward

    vals, _ = max_total_reward(model.mdp, model.rewards, eps=1e-13)
    return float(vals[model.start])
