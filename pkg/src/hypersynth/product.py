"""Self-composition, automaton-synchronized products and memory unfolding.

Product states are ``(s_1, ..., s_m, q)``.  The automaton component reads the
label tuple of the *source* agent states: a transition from ``(s, q)`` under a
joint action lands in ``(s', q')`` with ``q' = delta(q, L(s))``; the initial
state is ``(s_0, q_0)``.  The run of the automaton is therefore one letter
behind the agent states, and the automaton state of ``(s, q)`` summarizes the
letters of all strictly earlier positions.
"""
from __future__ import annotations

import itertools
import math
import os
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .automata.dra import Dra
from .hyperspec import Bindings
from .mdp import ActionRestriction, Mdp, ModelError

DEFAULT_STATE_BUDGET = 2_000_000


class StateBudgetExceeded(RuntimeError):
    def __init__(self, msg, partial: int = 0):
        super().__init__(msg)
        self.partial = partial


def state_budget() -> int:
    raw = os.environ.get("HYPERSYNTH_STATE_BUDGET")
    return int(raw) if raw else DEFAULT_STATE_BUDGET


class InfeasibleRestriction(ValueError):
    """A restriction left some reachable product state without any action."""


class JointActions:
    """Lexicographically ordered joint actions, encoded in mixed radix."""

    def __init__(self, base, count: int):
        self.base = tuple(base)
        self.count = count

    def __len__(self):
        return len(self.base) ** self.count

    def encode(self, acts) -> int:
        code = 0
        for a in acts:
            code = code * len(self.base) + a
        return code

    def decode(self, code: int) -> tuple:
        out = []
        for _ in range(self.count):
            code, a = divmod(code, len(self.base))
            out.append(a)
        return tuple(reversed(out))

    def __getitem__(self, code):
        return tuple(self.base[a] for a in self.decode(code))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


class ProductMdp(Mdp):
    """An Mdp over product states with links back to its components."""

    agent: Mdp
    dra: Dra | None
    bindings: Bindings
    local: np.ndarray  # (num_states, m) agent states
    auto: np.ndarray  # (num_states,) automaton state
    local_choice: np.ndarray  # (num_choices, m) agent choice ids
    base_choice: np.ndarray  # choice ids in the unrestricted product
    initial: int = 0

    @property
    def agent_count(self) -> int:
        return self.local.shape[1]

    @property
    def local_actions(self) -> np.ndarray:
        return self.agent.choice_action[self.local_choice]

    def state_tuple(self, s: int) -> tuple:
        return tuple(int(x) for x in self.local[s]) + (int(self.auto[s]),)

    def index_of(self, tup) -> int | None:
        return self._index.get(tuple(tup))

    def pair_masks(self):
        """Boolean ``(L, K)`` state masks per acceptance pair."""
        if self.dra is None:
            return []
        out = []
        for L, K in self.dra.pairs:
            out.append((np.isin(self.auto, sorted(L)), np.isin(self.auto, sorted(K))))
        return out

    def joint_action(self, choice: int) -> tuple[int, ...]:
        return tuple(int(a) for a in self.local_actions[choice])


def _agent_tables(m: Mdp, exact: bool):
    succ = [m.successors(c, exact=exact) for c in range(m.num_choices)]
    return succ


def self_compose(m: Mdp, count: int, budget: int | None = None) -> Mdp:
    """The ``count``-fold synchronous composition over all state tuples."""
    if count < 1:
        raise ValueError("agent count must be at least 1")
    budget = budget or state_budget()
    n = m.num_states ** count
    if count * math.log(max(m.num_states, 1)) > math.log(budget):
        raise StateBudgetExceeded(f"self-composition has {n} states, budget {budget}", 0)
    exact = m.exact_probs is not None
    succ = _agent_tables(m, exact)
    tuples = list(itertools.product(range(m.num_states), repeat=count))
    index = {t: i for i, t in enumerate(tuples)}
    joint = JointActions(m.actions, count)
    trans = {}
    for t in tuples:
        for combo in itertools.product(*(m.choices(s) for s in t)):
            dist = {}
            for outcome in itertools.product(*(succ[c] for c in combo)):
                p = math.prod(x[1] for x in outcome) if not exact else _fprod(x[1] for x in outcome)
                dist[index[tuple(x[0] for x in outcome)]] = p
            trans[(index[t], joint.encode(int(m.choice_action[c]) for c in combo))] = dist
    labels = [tuple(m.labels[s] for s in t) for t in tuples]
    names = [",".join(m.state_name(s) for s in t) for t in tuples]
    out = Mdp.from_choices(len(tuples), range(len(joint)), trans, labels, m.ap, None, names)
    out.actions = joint
    return out


def _fprod(xs):
    out = Fraction(1)
    for x in xs:
        out *= x
    return out


def sync_product(m: Mdp, d: Dra, b: Bindings, budget: int | None = None) -> ProductMdp:
    """Reachable fragment of the self-composition synchronized with ``d``."""
    k = b.agent_count
    if d.arity != k:
        raise ValueError(f"automaton arity {d.arity} does not match agent count {k}")
    if len(b.initial) != k:
        raise ValueError("bindings must fix one initial state per agent")
    for s in b.initial:
        if not 0 <= s < m.num_states:
            raise ModelError(f"initial state {s} out of range")
    budget = budget or state_budget()
    exact = m.exact_probs is not None
    succ = _agent_tables(m, exact)
    choices = [tuple(m.choices(s)) for s in range(m.num_states)]
    actions = m.choice_action.tolist()
    labels = m.labels
    joint = JointActions(m.actions, k)

    init = tuple(b.initial) + (d.init,)
    index = {init: 0}
    order = [init]
    step_memo = {}
    row_start = [0]
    choice_action, local_choice = [], []
    indptr, indices, data, exact_data = [0], [], [], []
    i = 0
    while i < len(order):
        state = order[i]
        i += 1
        locs, q = state[:-1], state[-1]
        key = (q, locs)
        q2 = step_memo.get(key)
        if q2 is None:
            q2 = step_memo[key] = d.step(q, tuple(labels[s] for s in locs))
        for combo in itertools.product(*(choices[s] for s in locs)):
            code = 0
            for c in combo:
                code = code * len(m.actions) + actions[c]
            choice_action.append(code)
            local_choice.append(combo)
            for outcome in itertools.product(*(succ[c] for c in combo)):
                tgt = tuple(x[0] for x in outcome) + (q2,)
                j = index.get(tgt)
                if j is None:
                    j = index[tgt] = len(order)
                    order.append(tgt)
                    if len(order) > budget:
                        raise StateBudgetExceeded(
                            f"product exceeds state budget {budget} (explored {i} of {len(order)} states)",
                            len(order))
                indices.append(j)
                if exact:
                    p = _fprod(x[1] for x in outcome)
                    exact_data.append(p)
                    data.append(float(p))
                else:
                    p = 1.0
                    for x in outcome:
                        p *= x[1]
                    data.append(p)
            indptr.append(len(indices))
        row_start.append(len(choice_action))

    n = len(order)
    matrix = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(choice_action), n),
    )
    arr = np.array(order, dtype=np.int64).reshape(n, k + 1)
    p = ProductMdp(
        n, (), np.array(row_start), np.array(choice_action, dtype=np.int64), matrix,
        [tuple(labels[s] for s in t[:-1]) for t in order], m.ap, None, None,
        tuple(exact_data) if exact else None,
    )
    p.actions = joint
    p.agent, p.dra, p.bindings = m, d, b
    p.local = arr[:, :k]
    p.auto = arr[:, k]
    p.local_choice = np.array(local_choice, dtype=np.int64).reshape(-1, k)
    p.base_choice = np.arange(len(choice_action))
    p.initial = 0
    p._index = index
    if m.rewards:
        p.rewards = {name: vec[p.local_choice].sum(axis=1) for name, vec in m.rewards.items()}
    return p


def restriction_mask(p: ProductMdp, r: ActionRestriction) -> np.ndarray:
    """Choices of ``p`` whose per-agent actions obey ``r``."""
    keep = np.ones(p.num_choices, dtype=bool)
    if not r.allowed:
        return keep
    cstate = p.choice_state
    acts = p.local_actions
    for hole, allowed in r.allowed.items():
        allowed = np.fromiter(sorted(allowed), dtype=np.int64)
        for i in p.bindings.pvar_agents[hole.pvar]:
            at_hole = p.local[cstate, i] == hole.state
            keep &= ~(at_hole & ~np.isin(acts[:, i], allowed))
    return keep


def apply_restriction(p: ProductMdp, r: ActionRestriction) -> ProductMdp:
    """View of ``p`` keeping only the joint actions permitted by ``r``."""
    keep = restriction_mask(p, r)
    return select_choices(p, keep)


def select_choices(p: ProductMdp, keep: np.ndarray) -> ProductMdp:
    counts = np.add.reduceat(keep.astype(np.int64), p.row_start[:-1]) if p.num_choices else np.zeros(0)
    dead = np.flatnonzero(counts == 0)
    if len(dead):
        raise InfeasibleRestriction(f"restriction removes every action of product state {int(dead[0])}")
    rows = np.flatnonzero(keep)
    q = ProductMdp.__new__(ProductMdp)
    q.__dict__.update(p.__dict__)
    q.__dict__.pop("choice_state", None)
    q.row_start = np.concatenate([[0], np.cumsum(counts)])
    q.choice_action = p.choice_action[rows]
    q.matrix = p.matrix[rows]
    q.local_choice = p.local_choice[rows]
    q.base_choice = p.base_choice[rows]
    if p.exact_probs is not None:
        q.exact_probs = tuple(x for c in rows for x in p.exact_probs[p.matrix.indptr[c]:p.matrix.indptr[c + 1]])
    q.rewards = {k: v[rows] for k, v in p.rewards.items()}
    return q


def unfold_memory(m: Mdp, bits: int) -> Mdp:
    """Agent model with ``2**bits`` memory values chosen along with each action.

    State ``(s, n)`` has id ``s * 2**bits + n``; action ``(a, n')`` has id
    ``a * 2**bits + n'`` and moves to ``(s', n')`` with probability ``P(s, a, s')``.
    """
    if bits < 0:
        raise ValueError("memory bits must be non-negative")
    if bits == 0:
        return m
    size = 1 << bits
    exact = m.exact_probs is not None
    trans = {}
    rewards = {name: {} for name in m.rewards}
    for s in range(m.num_states):
        for c in m.choices(s):
            a = int(m.choice_action[c])
            row = m.successors(c, exact=exact)
            for n in range(size):
                for n2 in range(size):
                    trans[(s * size + n, a * size + n2)] = {t * size + n2: p for t, p in row}
                    for name, vec in m.rewards.items():
                        rewards[name][(s * size + n, a * size + n2)] = float(vec[c])
    actions = [f"{m.action_name(a)}/m{n2}" for a in range(len(m.actions)) for n2 in range(size)]
    labels = [m.labels[s // size] for s in range(m.num_states * size)]
    names = [f"{m.state_name(s // size)}/m{s % size}" for s in range(m.num_states * size)]
    return Mdp.from_choices(m.num_states * size, actions, trans, labels, m.ap, rewards, names)


def memory_split(state: int, bits: int) -> tuple[int, int]:
    return divmod(state, 1 << bits)
