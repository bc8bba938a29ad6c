"""Finite MDPs and Markov chains with sparse transition rows.

An :class:`Mdp` keeps a global action alphabet and, per state, the sorted list
of enabled actions ("choices").  Transitions are stored as a CSR matrix with one
row per choice, so the choices of state ``s`` are the rows
``row_start[s]:row_start[s + 1]`` and are ordered by action id.  A Markov chain
is the special case with exactly one choice per state.

Probabilities are doubles by default.  When a model is built from
:class:`fractions.Fraction` probabilities the exact values are kept alongside the
float matrix and used by the exact validators and solvers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12


class ModelError(ValueError):
    """Raised for malformed models or model files."""


class Distribution:
    """A finite discrete distribution over state ids."""

    __slots__ = ("support",)

    def __init__(self, entries: Mapping[int, float] | Iterable[tuple[int, float]]):
        items = entries.items() if isinstance(entries, Mapping) else entries
        merged: dict[int, float] = {}
        for state, prob in items:
            merged[int(state)] = merged.get(int(state), 0) + prob
        self.support: tuple[tuple[int, float], ...] = tuple(sorted(merged.items()))

    @property
    def exact(self) -> bool:
        return all(isinstance(p, (Fraction, int)) for _, p in self.support)

    def total(self):
        return sum(p for _, p in self.support)

    def problems(self) -> list[str]:
        out = []
        for state, p in self.support:
            if not 0 < p <= 1:
                out.append(f"probability {p} of successor {state} outside (0, 1]")
        total = self.total()
        if self.exact:
            if total != 1:
                out.append(f"row-sum {total} != 1")
        elif abs(float(total) - 1.0) > ROW_SUM_TOL:
            out.append(f"row-sum {float(total)!r} != 1")
        return out

    def __iter__(self):
        return iter(self.support)

    def __len__(self):
        return len(self.support)

    def __repr__(self):
        return f"Distribution({dict(self.support)!r})"


class Mdp:
    """Immutable labeled MDP over states ``0..num_states-1``.

    ``labels[s]`` is a frozenset of atomic propositions, or, for product-shaped
    models, a tuple of such sets (one per agent).
    """

    def __init__(
        self,
        num_states: int,
        actions: Sequence,
        row_start: np.ndarray,
        choice_action: np.ndarray,
        matrix: sp.csr_matrix,
        labels: Sequence,
        ap: Sequence[str] = (),
        rewards: Mapping[str, np.ndarray] | None = None,
        state_names: Sequence[str] | None = None,
        exact_probs: tuple | None = None,
    ):
        self.num_states = int(num_states)
        self.actions = tuple(actions)
        self.row_start = np.asarray(row_start, dtype=np.int64)
        self.choice_action = np.asarray(choice_action, dtype=np.int64)
        self.matrix = matrix
        self.labels = tuple(labels)
        self.ap = tuple(ap)
        self.rewards = dict(rewards or {})
        self.state_names = tuple(state_names) if state_names is not None else None
        self.exact_probs = exact_probs

    # construction -------------------------------------------------------

    @classmethod
    def from_choices(
        cls,
        num_states: int,
        actions: Sequence,
        trans: Mapping[tuple[int, int], Distribution | Mapping[int, float]],
        labels: Mapping[int, Iterable[str]] | Sequence,
        ap: Sequence[str] | None = None,
        rewards: Mapping[str, Mapping[tuple[int, int], float]] | None = None,
        state_names: Sequence[str] | None = None,
    ) -> "Mdp":
        """Build from a ``(state, action-id) -> distribution`` mapping."""
        keys = sorted(trans)
        row_start = np.zeros(num_states + 1, dtype=np.int64)
        for s, _ in keys:
            if not 0 <= s < num_states:
                raise ModelError(f"transition from unknown state {s}")
            row_start[s + 1] += 1
        np.cumsum(row_start, out=row_start)
        choice_action = np.array([a for _, a in keys], dtype=np.int64)
        indptr = [0]
        succ, prob, exact = [], [], []
        is_exact = True
        for key in keys:
            dist = trans[key]
            if not isinstance(dist, Distribution):
                dist = Distribution(dist)
            for t, p in dist:
                succ.append(t)
                prob.append(float(p))
                exact.append(p)
                is_exact = is_exact and isinstance(p, (Fraction, int))
            indptr.append(len(succ))
        matrix = sp.csr_matrix(
            (np.array(prob, dtype=float), np.array(succ, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(keys), num_states),
        )
        if isinstance(labels, Mapping):
            lab = [frozenset(labels.get(s, ())) for s in range(num_states)]
        else:
            lab = [x if isinstance(x, tuple) else frozenset(x) for x in labels]
        if ap is None:
            ap = sorted({a for x in lab for a in (x if isinstance(x, frozenset) else frozenset().union(*x))})
        rew = {}
        for name, table in (rewards or {}).items():
            vec = np.zeros(len(keys))
            index = {k: i for i, k in enumerate(keys)}
            for k, r in table.items():
                if k not in index:
                    raise ModelError(f"reward on disabled pair {k}")
                vec[index[k]] = r
            rew[name] = vec
        return cls(num_states, actions, row_start, choice_action, matrix, lab, ap, rew, state_names,
                   tuple(exact) if is_exact and exact else None)

    # access ---------------------------------------------------------------

    @property
    def num_choices(self) -> int:
        return len(self.choice_action)

    @cached_property
    def choice_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_states), np.diff(self.row_start))

    def choices(self, s: int) -> range:
        return range(self.row_start[s], self.row_start[s + 1])

    def enabled(self, s: int) -> tuple[int, ...]:
        return tuple(int(a) for a in self.choice_action[self.row_start[s]:self.row_start[s + 1]])

    def choice_of(self, s: int, action: int) -> int:
        lo, hi = self.row_start[s], self.row_start[s + 1]
        pos = lo + int(np.searchsorted(self.choice_action[lo:hi], action))
        if pos >= hi or self.choice_action[pos] != action:
            raise KeyError((s, action))
        return pos

    def successors(self, choice: int, exact: bool = False) -> list[tuple[int, float]]:
        lo, hi = self.matrix.indptr[choice], self.matrix.indptr[choice + 1]
        if exact and self.exact_probs is not None:
            probs = self.exact_probs[lo:hi]
        else:
            probs = self.matrix.data[lo:hi].tolist()
        return list(zip(self.matrix.indices[lo:hi].tolist(), probs))

    def transition(self, s: int, action: int) -> Distribution:
        return Distribution(self.successors(self.choice_of(s, action)))

    def is_mc(self) -> bool:
        return bool(np.all(np.diff(self.row_start) == 1))

    def state_name(self, s: int) -> str:
        return self.state_names[s] if self.state_names else str(s)

    def action_name(self, a: int) -> str:
        name = self.actions[a]
        return name if isinstance(name, str) else "(" + ",".join(map(str, name)) + ")"

    def state_reward(self, name: str) -> np.ndarray:
        return self.rewards[name]

    def __repr__(self):
        return f"Mdp(states={self.num_states}, choices={self.num_choices}, actions={len(self.actions)})"


class MemorylessPolicy(dict):
    """Map ``state -> action id``."""


@dataclass(frozen=True)
class RewardStructure:
    """State-action rewards, one entry per choice of an Mdp."""

    name: str
    values: np.ndarray

    @classmethod
    def of(cls, m: Mdp, name: str) -> "RewardStructure":
        if name not in m.rewards:
            raise ModelError(f"unknown reward structure {name!r}")
        return cls(name, m.rewards[name])


class Hole(NamedTuple):
    """A decision point: policy variable index and local agent state."""

    pvar: int
    state: int


@dataclass(frozen=True)
class ActionRestriction:
    """Per-hole allowed action sets; holes absent from ``allowed`` are unrestricted."""

    allowed: Mapping[Hole, frozenset] = field(default_factory=dict)

    def get(self, hole: Hole, default=None):
        return self.allowed.get(hole, default)

    def restrict(self, hole: Hole, actions: Iterable[int]) -> "ActionRestriction":
        new = dict(self.allowed)
        new[hole] = frozenset(actions)
        return ActionRestriction(new)

    def intersect(self, other: "ActionRestriction") -> "ActionRestriction":
        new = dict(self.allowed)
        for h, acts in other.allowed.items():
            new[h] = new[h] & acts if h in new else acts
        return ActionRestriction(new)

    def size(self, hole: Hole, full: int) -> int:
        acts = self.allowed.get(hole)
        return full if acts is None else len(acts)

    def summary(self) -> str:
        parts = [f"{h.pvar}:{h.state}={''.join(str(a) for a in sorted(acts))}"
                 if all(a < 10 for a in acts) else
                 f"{h.pvar}:{h.state}={','.join(str(a) for a in sorted(acts))}"
                 for h, acts in sorted(self.allowed.items())]
        return "[" + " ".join(parts) + "]"


def validate_mdp(m: Mdp) -> list[str]:
    """Return a list of violated invariants (empty when ``m`` is valid)."""
    report = []
    counts = np.diff(m.row_start)
    for s in np.flatnonzero(counts == 0):
        report.append(f"dead state s{s}")
    for s in range(m.num_states):
        acts = m.choice_action[m.row_start[s]:m.row_start[s + 1]]
        if len(set(acts.tolist())) != len(acts):
            report.append(f"duplicate action at s{s}")
        for a in acts.tolist():
            if not 0 <= a < len(m.actions):
                report.append(f"unknown action {a} at s{s}")
    indptr, indices = m.matrix.indptr, m.matrix.indices
    for c in range(m.num_choices):
        s, a = int(m.choice_state[c]), int(m.choice_action[c])
        where = f"(s{s},a{a})"
        succ = indices[indptr[c]:indptr[c + 1]]
        if len(set(succ.tolist())) != len(succ):
            report.append(f"duplicate successor at {where}")
        if np.any((succ < 0) | (succ >= m.num_states)):
            report.append(f"successor out of range at {where}")
        if m.exact_probs is not None:
            probs = m.exact_probs[indptr[c]:indptr[c + 1]]
            if any(not 0 < p <= 1 for p in probs):
                report.append(f"probability outside (0,1] at {where}")
            if sum(probs) != 1:
                report.append(f"row-sum violation at {where}")
        else:
            probs = m.matrix.data[indptr[c]:indptr[c + 1]]
            if np.any((probs <= 0) | (probs > 1 + ROW_SUM_TOL)):
                report.append(f"probability outside (0,1] at {where}")
            if abs(probs.sum() - 1.0) > ROW_SUM_TOL:
                report.append(f"row-sum violation at {where}")
    known = set(m.ap)
    for s, lab in enumerate(m.labels):
        parts = lab if isinstance(lab, tuple) else (lab,)
        for part in parts:
            for a in part:
                if a not in known:
                    report.append(f"label {a!r} of s{s} not in AP")
    for name, vec in m.rewards.items():
        if len(vec) != m.num_choices or not np.all(np.isfinite(vec)) or np.any(vec < 0):
            report.append(f"invalid reward structure {name!r}")
    return report


def induce_mc(m: Mdp, policy: Mapping[int, int]) -> Mdp:
    """The Markov chain obtained by fixing the memoryless ``policy``."""
    rows = np.empty(m.num_states, dtype=np.int64)
    for s in range(m.num_states):
        if s not in policy:
            raise ModelError(f"policy undefined on state {s}")
        try:
            rows[s] = m.choice_of(s, int(policy[s]))
        except KeyError:
            raise ModelError(f"policy picks disabled action {policy[s]} at state {s}") from None
    return restrict_to_choices(m, rows)


def induce_randomized(m: Mdp, policy: Mapping[int, object]) -> Mdp:
    """Chain of a memoryless policy that may pick uniformly among several actions.

    ``policy[s]`` is an action id, a collection of action ids, or ``"*"`` for
    all enabled actions.  Deterministic policies give the same chain as
    :func:`induce_mc`.
    """
    if all(isinstance(policy.get(s), (int, np.integer)) for s in range(m.num_states)):
        return induce_mc(m, policy)
    exact = m.exact_probs is not None
    trans, rewards = {}, {name: {} for name in m.rewards}
    for s in range(m.num_states):
        if s not in policy:
            raise ModelError(f"policy undefined on state {s}")
        pick = policy[s]
        if isinstance(pick, str) and pick == "*":
            acts = [int(m.choice_action[c]) for c in m.choices(s)]
        elif isinstance(pick, (int, np.integer)):
            acts = [int(pick)]
        else:
            acts = sorted({int(a) for a in pick})
        try:
            rows = [m.choice_of(s, a) for a in acts]
        except KeyError:
            raise ModelError(f"policy picks a disabled action at state {s}") from None
        if not rows:
            raise ModelError(f"policy picks no action at state {s}")
        w = Fraction(1, len(rows)) if exact else 1.0 / len(rows)
        dist = {}
        for c in rows:
            for t, p in m.successors(c, exact=exact):
                dist[t] = dist.get(t, 0) + w * p
        trans[(s, acts[0])] = dist
        for name, vec in m.rewards.items():
            rewards[name][(s, acts[0])] = float(sum(vec[c] for c in rows)) / len(rows)
    out = Mdp.from_choices(m.num_states, m.actions, trans, m.labels, m.ap, rewards, m.state_names)
    return out


def restrict_to_choices(m: Mdp, rows: np.ndarray) -> Mdp:
    """MC form of ``m`` keeping exactly choice ``rows[s]`` in every state."""
    matrix = m.matrix[rows]
    exact = None
    if m.exact_probs is not None:
        exact = tuple(p for c in rows for p in m.exact_probs[m.matrix.indptr[c]:m.matrix.indptr[c + 1]])
    return Mdp(
        m.num_states, m.actions, np.arange(m.num_states + 1), m.choice_action[rows], matrix,
        m.labels, m.ap, {k: v[rows] for k, v in m.rewards.items()}, m.state_names, exact,
    )


# ---------------------------------------------------------------------------
# text format


def _parse_prob(tok: str):
    if "/" in tok:
        return Fraction(tok)
    value = float(tok)
    if not math.isfinite(value):
        raise ModelError(f"bad probability {tok!r}")
    return value


def parse_model(text: str) -> Mdp:
    """Parse the whitespace-delimited model format (see README)."""
    num_states = None
    actions: list[str] = []
    ap: list[str] = []
    trans: dict[tuple[int, int], dict[int, float]] = {}
    labels: dict[int, set[str]] = {}
    rewards: dict[str, dict[tuple[int, int], float]] = {}
    names: dict[int, str] = {}

    def state(tok, lineno):
        try:
            s = int(tok)
        except ValueError:
            raise ModelError(f"line {lineno}: bad state {tok!r}") from None
        if num_states is None or not 0 <= s < num_states:
            raise ModelError(f"line {lineno}: state {s} out of range")
        return s

    def action(tok, lineno):
        if tok in actions:
            return actions.index(tok)
        try:
            a = int(tok)
        except ValueError:
            raise ModelError(f"line {lineno}: unknown action {tok!r}") from None
        if not 0 <= a < len(actions):
            raise ModelError(f"line {lineno}: action {a} out of range")
        return a

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        head, args = line[0], line[1:]
        if head == "states":
            num_states = int(args[0])
        elif head == "actions":
            actions = list(args)
        elif head == "ap":
            ap = list(args)
        elif head == "label":
            s = state(args[0], lineno)
            for a in args[1:]:
                if a not in ap:
                    raise ModelError(f"line {lineno}: label {a!r} not declared in ap")
            labels.setdefault(s, set()).update(args[1:])
        elif head == "name":
            names[state(args[0], lineno)] = args[1]
        elif head == "reward":
            if len(args) == 3:
                name, args = "default", args
            elif len(args) == 4:
                name, args = args[0], args[1:]
            else:
                raise ModelError(f"line {lineno}: malformed reward line")
            key = (state(args[0], lineno), action(args[1], lineno))
            rewards.setdefault(name, {})[key] = float(args[2])
        elif len(line) == 4:
            s, a, t = state(line[0], lineno), action(line[1], lineno), state(line[2], lineno)
            row = trans.setdefault((s, a), {})
            row[t] = row.get(t, 0) + _parse_prob(line[3])
        else:
            raise ModelError(f"line {lineno}: cannot parse {raw.strip()!r}")
    if num_states is None:
        raise ModelError("missing 'states' header")
    for (s, a) in [k for r in rewards.values() for k in r]:
        if (s, a) not in trans:
            raise ModelError(f"reward on disabled pair ({s}, {a})")
    state_names = [names.get(s, str(s)) for s in range(num_states)] if names else None
    return Mdp.from_choices(num_states, actions, trans, labels, ap, rewards, state_names)


def dump_model(m: Mdp) -> str:
    """Serialize ``m`` in the text format; labels must be plain sets."""
    out = [f"states {m.num_states}", "actions " + " ".join(m.action_name(a) for a in range(len(m.actions)))]
    if m.ap:
        out.append("ap " + " ".join(m.ap))
    if m.state_names:
        out += [f"name {s} {n}" for s, n in enumerate(m.state_names)]
    for c in range(m.num_choices):
        s, a = int(m.choice_state[c]), int(m.choice_action[c])
        for t, p in m.successors(c, exact=True):
            out.append(f"{s} {m.action_name(a)} {t} {p if isinstance(p, Fraction) else repr(float(p))}")
    for s, lab in enumerate(m.labels):
        if lab:
            out.append(f"label {s} " + " ".join(sorted(lab)))
    for name, vec in sorted(m.rewards.items()):
        for c in np.flatnonzero(vec):
            s, a = int(m.choice_state[c]), int(m.choice_action[c])
            out.append(f"reward {name} {s} {m.action_name(a)} {float(vec[c])!r}")
    return "\n".join(out) + "\n"


def load_model(path) -> Mdp:
    with open(path) as fh:
        return parse_model(fh.read())
