"""Probabilistic hyperproperty specifications over policy and state variables.

Concrete syntax (declarations separated by ``;`` or newlines, ``#`` comments)::

    exists (s1 s2);
    forall x1 in {q0} (s1);
    forall x2 in {q5} (s2);
    Pmax [ F (T@x1 & T@x2) ]

The body is a Boolean combination (``&``, ``|``, ``!``, parentheses) of
probability constraints: ``P>=0.5 [ phi ]`` (also ``>``, ``<``, ``<=``),
``Pmax [ phi ]``, ``Pmin [ phi ]`` and ``Rmin{cost} [ F goal ]`` /
``Rmax{cost@x1} [ F goal ]`` (expected reward until the propositional goal).
Initial-set items are state indices, state names or labels of the model.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .ltl import (
    Formula, Eventually, LtlSyntaxError, is_propositional, parse_ltl, retag, state_vars, atoms,
)


class SpecError(ValueError):
    pass


_FLIP = {">=": "<", ">": "<=", "<": ">=", "<=": ">"}


@dataclass(frozen=True)
class AgentQuant:
    mode: str  # "forall" | "exists"
    var: str
    init: tuple  # raw items as written
    pvar: str


@dataclass(frozen=True)
class ProbConstraint:
    body: Formula
    kind: str  # "threshold" | "optimize" | "reward"
    op: str | None = None
    bound: float | None = None
    direction: str | None = None
    reward: str | None = None
    reward_var: object = None  # None = summed over all agents

    @property
    def goal(self) -> Formula | None:
        return self.body.arg if self.kind == "reward" else None

    def holds(self, value: float) -> bool:
        if self.kind != "threshold":
            raise ValueError("only threshold constraints have a verdict")
        return {
            ">=": value >= self.bound, ">": value > self.bound,
            "<=": value <= self.bound, "<": value < self.bound,
        }[self.op]

    def negated(self) -> "ProbConstraint":
        if self.kind != "threshold":
            raise SpecError("negation of an optimization objective is not meaningful")
        return ProbConstraint(self.body, "threshold", _FLIP[self.op], self.bound)

    def retagged(self, mapping) -> "ProbConstraint":
        return ProbConstraint(retag(self.body, mapping), self.kind, self.op, self.bound,
                              self.direction, self.reward, mapping.get(self.reward_var, self.reward_var))

    def __str__(self):
        if self.kind == "threshold":
            head = f"P{self.op}{self.bound:g}"
        elif self.kind == "optimize":
            head = f"P{self.direction}"
        else:
            tag = "" if self.reward_var is None else f"@{self.reward_var}"
            head = f"R{self.direction}{{{self.reward}{tag}}}"
        return f"{head} [ {self.body} ]"


@dataclass(frozen=True)
class CAnd:
    left: object
    right: object


@dataclass(frozen=True)
class COr:
    left: object
    right: object


@dataclass(frozen=True)
class CNot:
    arg: object


def constraints(node) -> list[ProbConstraint]:
    if isinstance(node, ProbConstraint):
        return [node]
    if isinstance(node, CNot):
        return constraints(node.arg)
    return constraints(node.left) + constraints(node.right)


def normalize(node, neg: bool = False):
    """Push negations into threshold constraints by flipping the comparison."""
    if isinstance(node, ProbConstraint):
        return node.negated() if neg else node
    if isinstance(node, CNot):
        return normalize(node.arg, not neg)
    kind = type(node)
    if neg:
        kind = COr if kind is CAnd else CAnd
    return kind(normalize(node.left, neg), normalize(node.right, neg))


def map_constraints(node, fn):
    if isinstance(node, ProbConstraint):
        return fn(node)
    if isinstance(node, CNot):
        return CNot(map_constraints(node.arg, fn))
    return type(node)(map_constraints(node.left, fn), map_constraints(node.right, fn))


@dataclass(frozen=True)
class HyperFormula:
    policy_vars: tuple[str, ...]
    quants: tuple[AgentQuant, ...]
    body: object

    @property
    def agent_count(self) -> int:
        return len(self.quants)

    def constraints(self) -> list[ProbConstraint]:
        return constraints(self.body)

    def objective(self) -> ProbConstraint | None:
        opts = [c for c in self.constraints() if c.kind != "threshold"]
        return opts[0] if opts else None

    def __str__(self):
        lines = [f"exists ({' '.join(self.policy_vars)});"]
        for q in self.quants:
            lines.append(f"{q.mode} {q.var} in {{{', '.join(map(str, q.init))}}} ({q.pvar});")
        lines.append(_body_str(self.body))
        return "\n".join(lines)


def _body_str(node) -> str:
    if isinstance(node, ProbConstraint):
        return str(node)
    if isinstance(node, CNot):
        return f"!({_body_str(node.arg)})"
    sym = "&" if isinstance(node, CAnd) else "|"
    return f"({_body_str(node.left)} {sym} {_body_str(node.right)})"


# ---------------------------------------------------------------------------
# parsing

_POLICY = re.compile(r"\s*exists\s*\(([^)]*)\)\s*;?")
_AGENT = re.compile(r"\s*(forall|exists)\s+([A-Za-z_]\w*)\s+in\s*\{([^}]*)\}\s*\(\s*([A-Za-z_]\w*)\s*\)\s*;?")
_HEAD = re.compile(
    r"\s*(?:P\s*(?P<op>>=|<=|>|<)\s*(?P<bound>[0-9.eE+-]+)"
    r"|P(?P<pdir>max|min)"
    r"|R(?P<rdir>max|min)\s*\{\s*(?P<rew>[A-Za-z_]\w*)(?:@(?P<rvar>\w+))?\s*\})\s*\["
)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def parse_spec(text: str, strict: bool = True) -> HyperFormula:
    """Parse a specification.

    With ``strict`` (default), references to undeclared policy or state
    variables are errors; otherwise they are left for :func:`check_well_formed`
    to report.
    """
    src = _strip_comments(text)
    m = _POLICY.match(src)
    if not m:
        raise SpecError("specification must start with 'exists (<policy vars>)'")
    pvars = tuple(re.split(r"[\s,]+", m.group(1).strip())) if m.group(1).strip() else ()
    if not pvars:
        raise SpecError("no policy variables declared")
    if len(set(pvars)) != len(pvars):
        raise SpecError("duplicate policy variable")
    pos = m.end()
    quants = []
    while True:
        m = _AGENT.match(src, pos)
        if not m:
            break
        items = tuple(_item(x) for x in re.split(r"[\s,]+", m.group(3).strip()) if x)
        q = AgentQuant(m.group(1), m.group(2), items, m.group(4))
        if strict and q.pvar not in pvars:
            raise SpecError(f"agent {q.var} bound to undeclared policy variable {q.pvar}")
        if q.var in {x.var for x in quants}:
            raise SpecError(f"duplicate state variable {q.var}")
        quants.append(q)
        pos = m.end()
    if not quants:
        raise SpecError("no agent quantifiers")
    body, end = _parse_body(src, pos)
    if src[end:].strip().strip(";").strip():
        raise SpecError(f"unexpected trailing text {src[end:].strip()[:20]!r}")
    h = HyperFormula(pvars, tuple(quants), body)
    if strict:
        declared = {q.var for q in quants}
        for c in h.constraints():
            for v in state_vars(c.body):
                if v not in declared:
                    raise SpecError(f"unbound state variable {v}")
            if c.reward_var is not None and c.reward_var not in declared:
                raise SpecError(f"unbound state variable {c.reward_var}")
    return h


def _item(tok: str):
    return int(tok) if tok.isdigit() else tok


def _parse_body(src: str, pos: int):
    def skip(p):
        while p < len(src) and src[p].isspace():
            p += 1
        return p

    def disj(p):
        left, p = conj(p)
        while True:
            p = skip(p)
            if src.startswith("||", p):
                right, p = conj(p + 2)
            elif src.startswith("|", p):
                right, p = conj(p + 1)
            else:
                return left, p
            left = COr(left, right)

    def conj(p):
        left, p = unary(p)
        while True:
            p = skip(p)
            if src.startswith("&&", p):
                right, p = unary(p + 2)
            elif src.startswith("&", p):
                right, p = unary(p + 1)
            else:
                return left, p
            left = CAnd(left, right)

    def unary(p):
        p = skip(p)
        if p < len(src) and src[p] in "!~":
            arg, p = unary(p + 1)
            return CNot(arg), p
        if src.startswith("(", p):
            node, p = disj(p + 1)
            p = skip(p)
            if not src.startswith(")", p):
                raise SpecError(f"expected ')' at offset {p}")
            return node, p + 1
        return atom(p)

    def atom(p):
        m = _HEAD.match(src, p)
        if not m:
            raise SpecError(f"expected a probability constraint at offset {p}: {src[p:p + 20].strip()!r}")
        close = _matching_bracket(src, m.end() - 1)
        text = src[m.end():close]
        try:
            f = parse_ltl(text)
        except LtlSyntaxError as e:
            raise SpecError(f"in formula {text.strip()!r}: {e}") from None
        if m.group("op"):
            c = float(m.group("bound"))
            if not 0 <= c <= 1:
                raise SpecError(f"threshold {c} outside [0, 1]")
            node = ProbConstraint(f, "threshold", m.group("op"), c)
        elif m.group("pdir"):
            node = ProbConstraint(f, "optimize", direction=m.group("pdir"))
        else:
            if not (isinstance(f, Eventually) and is_propositional(f.arg)):
                raise SpecError("reward objectives take the form R..{name} [ F <propositional goal> ]")
            node = ProbConstraint(f, "reward", direction=m.group("rdir"), reward=m.group("rew"),
                                  reward_var=m.group("rvar"))
        return node, close + 1

    node, end = disj(pos)
    return node, end


def _matching_bracket(src: str, open_pos: int) -> int:
    depth = 0
    for i in range(open_pos, len(src)):
        if src[i] == "[":
            depth += 1
        elif src[i] == "]":
            depth -= 1
            if depth == 0:
                return i
    raise SpecError("unbalanced '['")


def load_spec(path, strict: bool = True) -> HyperFormula:
    with open(path) as fh:
        return parse_spec(fh.read(), strict)


# ---------------------------------------------------------------------------
# well-formedness and elaboration


def resolve_initial(q: AgentQuant, m) -> tuple[frozenset, list[str]]:
    """States denoted by the initial-set items of ``q`` in model ``m``."""
    out, problems = set(), []
    names = {n: s for s, n in enumerate(m.state_names)} if m is not None and m.state_names else {}
    for item in q.init:
        if isinstance(item, int):
            if m is not None and not 0 <= item < m.num_states:
                problems.append(f"initial state {item} of {q.var} out of range")
            else:
                out.add(item)
        elif item in names:
            out.add(names[item])
        elif m is not None and item in m.ap:
            hit = {s for s, lab in enumerate(m.labels) if item in lab}
            if not hit:
                problems.append(f"label {item!r} in initial set of {q.var} marks no state")
            out |= hit
        else:
            problems.append(f"unknown state or label {item!r} in initial set of {q.var}")
    if not q.init:
        problems.append(f"empty initial set for {q.var}")
    return frozenset(out), problems


def check_well_formed(h: HyperFormula, m=None) -> list[str]:
    report = []
    bound_pvars = {q.pvar for q in h.quants}
    if len(h.policy_vars) > len(h.quants):
        report.append("more policy variables than agents")
    for pv in h.policy_vars:
        if pv not in bound_pvars:
            report.append(f"unbound policy variable {pv}")
    for q in h.quants:
        if q.pvar not in h.policy_vars:
            report.append(f"agent {q.var} bound to undeclared policy variable {q.pvar}")
    declared = {q.var for q in h.quants}
    seen = set()
    for c in h.constraints():
        for v in sorted(state_vars(c.body), key=str):
            if v not in declared and v not in seen:
                seen.add(v)
                report.append(f"unbound state variable {v}")
        if c.reward_var is not None and c.reward_var not in declared:
            report.append(f"unbound state variable {c.reward_var}")
        if m is not None:
            for a in sorted({a.ap for a in atoms(c.body)}):
                if a not in m.ap:
                    report.append(f"unknown atomic proposition {a}")
            if c.kind == "reward" and c.reward not in m.rewards:
                report.append(f"unknown reward structure {c.reward}")
    if len([c for c in h.constraints() if c.kind != "threshold"]) > 1:
        report.append("multiple optimization objectives")
    for q in h.quants:
        states, problems = resolve_initial(q, m)
        report += problems
        if not problems and not states:
            report.append(f"empty initial set for {q.var}")
    return report


@dataclass(frozen=True)
class Bindings:
    agent_count: int
    agent_pvar: tuple[int, ...]  # policy-variable index per agent (0-based)
    initial: tuple[int, ...]  # initial agent state per agent
    pvar_count: int = 0
    pvar_names: tuple[str, ...] = ()

    @property
    def pvar_agents(self) -> tuple[tuple[int, ...], ...]:
        n = self.pvar_count or max(self.agent_pvar) + 1
        return tuple(tuple(i for i, p in enumerate(self.agent_pvar) if p == k) for k in range(n))

    def with_initial(self, initial) -> "Bindings":
        return Bindings(self.agent_count, self.agent_pvar, tuple(initial), self.pvar_count, self.pvar_names)


@dataclass(frozen=True)
class Instance:
    bindings: Bindings
    body: object  # constraint tree with positional tags, normalized


@dataclass
class Expansion:
    """Leaves of the quantifier expansion plus the Boolean skeleton over them.

    ``tree`` is a leaf index or ``("and" | "or", [subtrees])``.
    """

    leaves: list[Instance]
    tree: object = field(default=0)

    def __len__(self):
        return len(self.leaves)

    def __iter__(self):
        return iter((leaf.bindings, leaf.body) for leaf in self.leaves)


def positional_body(h: HyperFormula):
    mapping = {q.var: i + 1 for i, q in enumerate(h.quants)}
    return normalize(map_constraints(h.body, lambda c: c.retagged(mapping)))


def expand_quantifiers(h: HyperFormula, m=None, initial_sets=None) -> Expansion:
    """Instantiate the agent quantifiers over their initial sets."""
    report = [r for r in check_well_formed(h, m) if "initial" not in r or m is not None]
    if report:
        raise SpecError("; ".join(report))
    if initial_sets is None:
        initial_sets = []
        for q in h.quants:
            states, problems = resolve_initial(q, m)
            if problems:
                raise SpecError("; ".join(problems))
            initial_sets.append(sorted(states))
    sizes = [len(s) for s in initial_sets]
    has_opt = h.objective() is not None
    total = 1
    for n in sizes:
        total *= n
    if has_opt and total != 1:
        raise SpecError("optimization objectives need singleton initial sets for every agent")
    pidx = {p: i for i, p in enumerate(h.policy_vars)}
    agent_pvar = tuple(pidx[q.pvar] for q in h.quants)
    body = positional_body(h)
    leaves = []
    for combo in itertools.product(*initial_sets):
        b = Bindings(len(h.quants), agent_pvar, tuple(combo), len(h.policy_vars), h.policy_vars)
        leaves.append(Instance(b, body))

    # Boolean skeleton: quantifier k ranges over initial_sets[k] (row-major leaf order)
    def build(k, offset, stride):
        if k == len(initial_sets):
            return offset
        sub = stride // len(initial_sets[k])
        kids = [build(k + 1, offset + j * sub, sub) for j in range(len(initial_sets[k]))]
        if len(kids) == 1:
            return kids[0]
        return ("and" if h.quants[k].mode == "forall" else "or", kids)

    return Expansion(leaves, build(0, 0, total))


def is_dec_fragment(h: HyperFormula, m=None) -> bool:
    agents_of = [sum(q.pvar == p for q in h.quants) for p in h.policy_vars]
    if len(h.policy_vars) != len(h.quants) or any(n != 1 for n in agents_of):
        return False
    if len(h.constraints()) != 1:
        return False
    for q in h.quants:
        if m is None:
            if len(q.init) != 1:
                return False
        else:
            states, problems = resolve_initial(q, m)
            if problems or len(states) != 1:
                return False
    return True


def combine(tree, verdicts):
    """Evaluate an expansion skeleton over per-leaf truth values (None = unknown)."""
    if isinstance(tree, int):
        return verdicts[tree]
    op, kids = tree
    vals = [combine(k, verdicts) for k in kids]
    return kleene(op, vals)


def kleene(op, vals):
    if op == "and":
        if any(v is False for v in vals):
            return False
        return None if any(v is None for v in vals) else True
    if any(v is True for v in vals):
        return True
    return None if any(v is None for v in vals) else False
