"""Explicit-state probabilistic model checking for MDPs and Markov chains.

Values are computed by value iteration on top of graph-based qualitative
precomputation and then polished by policy iteration with exact sparse solves,
so a returned policy always comes with the value it actually achieves.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .automata._scc import sccs
from .automata.dra import Dra
from .automata.guards import valuation
from .mdp import Mdp, MemorylessPolicy, RewardStructure

EPS = 1e-8
TIE_TOL = 1e-10
_MAX_ITERS = 1_000_000


@dataclass(frozen=True)
class Mec:
    states: frozenset
    choices: dict  # state -> tuple of retained choice ids

    def actions(self, m: Mdp) -> dict:
        return {s: tuple(int(m.choice_action[c]) for c in cs) for s, cs in self.choices.items()}


# ---------------------------------------------------------------------------
# graph helpers


def _coo(m: Mdp):
    coo = m.matrix.tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64)


def _any_per_choice(m: Mdp, rows, flags) -> np.ndarray:
    out = np.zeros(m.num_choices, dtype=bool)
    np.logical_or.at(out, rows, flags)
    return out


def _per_state_any(m: Mdp, choice_flags) -> np.ndarray:
    counts = np.add.reduceat(choice_flags.astype(np.int64), m.row_start[:-1])
    return counts > 0


def _per_state_all(m: Mdp, choice_flags, alive=None) -> np.ndarray:
    if alive is None:
        alive = np.ones(m.num_choices, dtype=bool)
    bad = np.add.reduceat((alive & ~choice_flags).astype(np.int64), m.row_start[:-1])
    return bad == 0


def mec_decomposition(m: Mdp, states=None) -> list[Mec]:
    """Maximal end components of ``m`` restricted to the state mask ``states``."""
    n = m.num_states
    alive_s = np.ones(n, dtype=bool) if states is None else np.asarray(states, dtype=bool).copy()
    rows, cols = _coo(m)
    cstate = m.choice_state
    alive_c = alive_s[cstate].copy()
    while True:
        # choices whose successors all lie in alive states
        leaves = ~alive_s[cols]
        alive_c &= ~_any_per_choice(m, rows, leaves)
        sel = alive_c[rows]
        adj = sp.csr_matrix((np.ones(int(sel.sum())), (cstate[rows[sel]], cols[sel])), shape=(n, n))
        _, comp = csgraph.connected_components(adj, directed=True, connection="strong")
        leaves = comp[cols] != comp[cstate[rows]]
        kill = _any_per_choice(m, rows, leaves) & alive_c
        alive_c &= ~kill
        has = _per_state_any(m, alive_c)
        new_s = alive_s & has
        if not kill.any() and np.array_equal(new_s, alive_s):
            break
        alive_s = new_s
        alive_c &= alive_s[cstate]
    groups = {}
    for s in np.flatnonzero(alive_s):
        groups.setdefault(int(comp[s]), []).append(int(s))
    out = []
    for members in sorted(groups.values()):
        ch = {s: tuple(int(c) for c in m.choices(s) if alive_c[c]) for s in members}
        out.append(Mec(frozenset(members), ch))
    return out


def _attractor_choices(m: Mdp, mec: Mec, goal) -> dict:
    """Memoryless in-MEC strategy reaching ``goal`` almost surely from every state."""
    strat = {}
    reached = {s for s in mec.states if s in goal}
    for s in sorted(reached):
        strat[s] = None
    frontier = True
    while frontier:
        frontier = False
        for s in sorted(mec.states - reached):
            for c in mec.choices[s]:
                lo, hi = m.matrix.indptr[c], m.matrix.indptr[c + 1]
                if any(int(t) in reached for t in m.matrix.indices[lo:hi]):
                    strat[s] = c
                    frontier = True
                    break
        reached |= {s for s, c in strat.items() if c is not None}
    # goal states move towards the rest of the strategy; any retained choice keeps us inside
    for s, c in list(strat.items()):
        if c is None:
            strat[s] = mec.choices[s][0]
    return strat


def success_set(m: Mdp, pairs):
    """States of accepting end components for Rabin ``pairs`` of state masks.

    Returns ``(mask, strategy)`` where ``strategy`` maps each state of an
    accepting MEC to a choice that stays in the MEC, avoids L and revisits K.
    """
    n = m.num_states
    acc = np.zeros(n, dtype=bool)
    strat = {}
    for L, K in pairs:
        for mec in mec_decomposition(m, ~L):
            goal = {s for s in mec.states if K[s]}
            if not goal:
                continue
            for s in mec.states:
                acc[s] = True
            for s, c in _attractor_choices(m, mec, goal).items():
                strat.setdefault(s, c)
    return acc, strat


def accepting_success_set(p):
    return success_set(p, p.pair_masks())


def streett_success_set(m: Mdp, pairs):
    """States of end components satisfying the Streett reading of ``pairs``.

    An end component is good when for every pair it meets L or avoids K.
    Returns ``(mask, strategy)``; the strategy heads for the L-states that the
    component must keep visiting.
    """
    n = m.num_states
    good = np.zeros(n, dtype=bool)
    strat = {}
    work = [np.ones(n, dtype=bool)]
    while work:
        allowed = work.pop()
        for mec in mec_decomposition(m, allowed):
            members = np.zeros(n, dtype=bool)
            members[list(mec.states)] = True
            bad = [K for L, K in pairs if not (L & members).any() and (K & members).any()]
            if not bad:
                good |= members
                need = {s for s in mec.states for L, K in pairs if L[s] and (K & members).any()}
                for s, c in _attractor_choices(m, mec, need or set(mec.states)).items():
                    strat.setdefault(s, c)
            else:
                sub = members.copy()
                for K in bad:
                    sub &= ~K
                if sub.any():
                    work.append(sub)
    return good, strat


# ---------------------------------------------------------------------------
# reachability


def _backward_reach(m: Mdp, target, choice_ok=None):
    """States that reach ``target`` with positive probability (some policy)."""
    rows, cols = _coo(m)
    cstate = m.choice_state
    reach = np.asarray(target, dtype=bool).copy()
    ok = np.ones(m.num_choices, dtype=bool) if choice_ok is None else choice_ok
    while True:
        hit = _any_per_choice(m, rows, reach[cols]) & ok
        new = reach | _per_state_any(m, hit)
        if np.array_equal(new, reach):
            return reach
        reach = new


def prob0_max(m: Mdp, target):
    return ~_backward_reach(m, target)


def prob1_max(m: Mdp, target):
    """States from which some policy reaches ``target`` almost surely."""
    rows, cols = _coo(m)
    target = np.asarray(target, dtype=bool)
    u = np.ones(m.num_states, dtype=bool)
    while True:
        stay = ~_any_per_choice(m, rows, ~u[cols])
        r = _backward_reach(m, target, stay)
        r &= u
        if np.array_equal(r, u):
            return u
        u = r


def prob0_min(m: Mdp, target):
    """States from which some policy avoids ``target`` forever."""
    rows, cols = _coo(m)
    forced = np.asarray(target, dtype=bool).copy()
    while True:
        hit = _any_per_choice(m, rows, forced[cols])
        new = forced | _per_state_all(m, hit)
        if np.array_equal(new, forced):
            return ~forced
        forced = new


def _state_opt(m: Mdp, vals, maximize):
    red = np.maximum if maximize else np.minimum
    return red.reduceat(vals, m.row_start[:-1])


def _value_iteration(m: Mdp, x, fixed, maximize, eps, rewards=None):
    free = ~fixed
    for _ in range(_MAX_ITERS):
        q = m.matrix @ x
        if rewards is not None:
            q = q + rewards
        new = np.where(free, _state_opt(m, q, maximize), x)
        if np.max(np.abs(new - x), initial=0.0) < eps:
            return new
        x = new
    return x


def _evaluate(m: Mdp, rows, target, zero, rewards=None):
    """Exact value of the memoryless policy choosing ``rows``.

    ``zero`` marks states forced to value 0 (probability mode) besides those
    that cannot reach the target in the induced chain.
    """
    n = m.num_states
    P = m.matrix[rows]
    target = np.asarray(target, dtype=bool)
    reach = target.copy()
    Pt = P.T.tocsr()
    frontier = np.flatnonzero(reach)
    while len(frontier):
        pred = np.unique(Pt[frontier].indices)
        pred = pred[~reach[pred]]
        reach[pred] = True
        frontier = pred
    x = np.zeros(n)
    if rewards is None:
        x[target] = 1.0
        maybe = reach & ~target & ~zero
        if maybe.any():
            idx = np.flatnonzero(maybe)
            A = sp.identity(len(idx), format="csr") - P[idx][:, idx]
            b = np.asarray(P[idx][:, target].sum(axis=1)).ravel()
            x[idx] = np.clip(_solve(A, b), 0.0, 1.0)
        return x, reach
    # reward mode: states that reach the goal almost surely get finite values
    sure = _mc_prob1(P, target)
    x[~sure] = np.inf
    idx = np.flatnonzero(sure & ~target)
    if len(idx):
        A = sp.identity(len(idx), format="csr") - P[idx][:, idx]
        x[idx] = _solve(A, rewards[rows][idx])
    return x, sure


def _mc_prob1(P, target):
    n = P.shape[0]
    Pt = P.T.tocsr()
    reach = np.asarray(target, dtype=bool).copy()
    frontier = np.flatnonzero(reach)
    while len(frontier):
        pred = np.unique(Pt[frontier].indices)
        pred = pred[~reach[pred]]
        reach[pred] = True
        frontier = pred
    # states that can reach a state outside ``reach`` are not almost sure
    bad = ~reach
    frontier = np.flatnonzero(bad)
    while len(frontier):
        pred = np.unique(Pt[frontier].indices)
        pred = pred[~bad[pred] & ~target[pred]]
        bad[pred] = True
        frontier = pred
    return ~bad


def _solve(A, b):
    if A.shape[0] == 0:
        return np.zeros(0)
    if A.shape[0] == 1:
        return np.array([b[0] / A[0, 0]])
    return np.asarray(spsolve(A.tocsc(), b)).ravel()


def _greedy_rows(m: Mdp, q, best, candidates, progress_target, tol=TIE_TOL):
    """Lowest near-optimal choice per state, preferring choices that make progress.

    Among choices within ``tol`` of ``best``, states are assigned in order of
    their distance to ``progress_target`` so the resulting chain cannot stall in
    a cycle of equally-valued states.
    """
    n = m.num_states
    cstate = m.choice_state
    with np.errstate(invalid="ignore"):
        good = (np.abs(q - best[cstate]) <= tol) & candidates
    rows = np.full(n, -1, dtype=np.int64)
    done = np.asarray(progress_target, dtype=bool).copy()
    mrows, mcols = _coo(m)
    while True:
        hit = _any_per_choice(m, mrows, done[mcols]) & good & ~done[cstate]
        if not hit.any():
            break
        idx = np.flatnonzero(hit)
        first = {}
        for c in idx.tolist():
            first.setdefault(int(cstate[c]), c)
        for s, c in first.items():
            rows[s] = c
            done[s] = True
    # the rest: lowest good choice, else lowest candidate, else lowest choice
    for s in np.flatnonzero(rows < 0).tolist():
        lo, hi = m.row_start[s], m.row_start[s + 1]
        cand = [c for c in range(lo, hi) if good[c]] or [c for c in range(lo, hi) if candidates[c]] or [lo]
        rows[s] = cand[0]
    return rows


def _policy(m: Mdp, rows) -> MemorylessPolicy:
    return MemorylessPolicy({s: int(m.choice_action[c]) for s, c in enumerate(rows.tolist())})


def reach_rows(m: Mdp, target, direction="max", eps=EPS):
    """Optimal reachability values and the chosen row (choice id) per state."""
    target = np.asarray(target, dtype=bool)
    n = m.num_states
    maximize = direction == "max"
    rows_, cols_ = _coo(m)
    cstate = m.choice_state
    if maximize:
        zero = prob0_max(m, target)
        one = prob1_max(m, target)
    else:
        zero = prob0_min(m, target)
        one = _prob1_min(m, target)
    x = np.zeros(n)
    x[one | target] = 1.0
    fixed = zero | one | target
    x = _value_iteration(m, x, fixed, maximize, eps)
    q = m.matrix @ x

    if maximize:
        best = _state_opt(m, q, True)
        best[target] = 1.0
        # in prob-1 states, prefer choices staying inside the prob-1 region
        stay_one = ~_any_per_choice(m, rows_, ~one[cols_])
        cand = np.where(one[cstate], stay_one, True)
        rows = _greedy_rows(m, q, np.where(one, 1.0, best), cand, target)
    else:
        best = _state_opt(m, q, False)
        # in prob-0 states, stay in the prob-0 region
        stay_zero = ~_any_per_choice(m, rows_, ~zero[cols_])
        cand = np.where(zero[cstate], stay_zero, True)
        rows = _greedy_rows(m, q, np.where(zero, 0.0, best), cand, np.zeros(n, dtype=bool))
        rows[zero] = _first_true(m, stay_zero)[zero]

    # policy iteration polish on exact values
    forced0 = zero if maximize else np.zeros(n, dtype=bool)
    for _ in range(10_000):
        val, _ = _evaluate(m, rows, target, forced0)
        q = m.matrix @ val
        cur = q[rows]
        better = (q > cur[cstate] + 1e-12) if maximize else (q < cur[cstate] - 1e-12)
        better &= ~target[cstate]
        if not maximize:
            better &= ~zero[cstate]
        if not better.any():
            break
        improve = _per_state_any(m, better)
        if maximize:
            bestq = _state_opt(m, np.where(better, q, -np.inf), True)
        else:
            bestq = _state_opt(m, np.where(better, q, np.inf), False)
        for s in np.flatnonzero(improve).tolist():
            lo, hi = m.row_start[s], m.row_start[s + 1]
            for c in range(lo, hi):
                if better[c] and abs(q[c] - bestq[s]) <= TIE_TOL:
                    rows[s] = c
                    break
    val, _ = _evaluate(m, rows, target, forced0)
    return val, rows


def _prob1_min(m: Mdp, target):
    """States where every policy reaches ``target`` almost surely."""
    rows, cols = _coo(m)
    target = np.asarray(target, dtype=bool)
    # some policy avoids the target with positive probability iff it can reach
    # (while avoiding the target) a state of the prob-0-min region
    avoid = prob0_min(m, target)
    bad = avoid.copy()
    while True:
        hit = _any_per_choice(m, rows, bad[cols])
        new = bad | (_per_state_any(m, hit) & ~target)
        if np.array_equal(new, bad):
            return ~bad
        bad = new


def _first_true(m: Mdp, flags):
    out = np.array(m.row_start[:-1], dtype=np.int64)
    for s in range(m.num_states):
        for c in range(m.row_start[s], m.row_start[s + 1]):
            if flags[c]:
                out[s] = c
                break
    return out


def optimal_reachability(m: Mdp, targets, direction="max", eps=EPS):
    """``(values, policy)`` for reaching the state mask/set ``targets``."""
    mask = _as_mask(m, targets)
    val, rows = reach_rows(m, mask, direction, eps)
    return val, _policy(m, rows)


def _as_mask(m: Mdp, targets):
    if isinstance(targets, np.ndarray) and targets.dtype == bool:
        return targets
    mask = np.zeros(m.num_states, dtype=bool)
    mask[list(targets)] = True
    return mask


# ---------------------------------------------------------------------------
# Rabin objectives on products


@dataclass
class RabinSolution:
    value: float
    values: np.ndarray
    rows: np.ndarray  # chosen choice id per state
    success: np.ndarray

    def policy(self, m: Mdp) -> MemorylessPolicy:
        return _policy(m, self.rows)


def rabin_solve(m: Mdp, pairs, direction="max", eps=EPS, initial=0) -> RabinSolution:
    if direction == "max":
        acc, strat = success_set(m, pairs)
        val, rows = reach_rows(m, acc, "max", eps)
        for s, c in strat.items():
            rows[s] = c
        return RabinSolution(float(val[initial]), val, rows, acc)
    good, strat = streett_success_set(m, pairs)
    val, rows = reach_rows(m, good, "max", eps)
    for s, c in strat.items():
        rows[s] = c
    val = 1.0 - val
    return RabinSolution(float(val[initial]), val, rows, good)


def rabin_optimal_policy(p, direction="max", eps=EPS):
    """Optimal acceptance probability at the initial product state and a policy."""
    sol = rabin_solve(p, p.pair_masks(), direction, eps, getattr(p, "initial", 0))
    return sol.value, sol.policy(p)


# ---------------------------------------------------------------------------
# Markov chain analysis (independent of the product construction)


def mc_satisfaction_probability(mc: Mdp, d: Dra, initial, agent_count: int | None = None,
                                exact: bool = False):
    """Probability that the chain's label traces are accepted by ``d``.

    ``initial`` is either a tuple of agent states (the chain is then composed
    with itself ``len(initial)`` times) or a single state of a chain whose
    labels are already tuples.  The chain x automaton graph is explored with
    the automaton reading the label of each *entered* state, bottom SCCs are
    classified against the Rabin pairs, and reaching accepting ones is solved
    as a linear system (exactly over rationals with ``exact``).
    """
    if not mc.is_mc():
        raise ValueError("expected a Markov chain (one choice per state)")
    if isinstance(initial, (int, np.integer)):
        init_locs = (int(initial),)
        joint = True
    else:
        init_locs = tuple(int(s) for s in initial)
        joint = False
    if agent_count is not None and not joint and agent_count != len(init_locs):
        raise ValueError("agent count does not match the initial tuple")
    use_exact = exact and mc.exact_probs is not None
    succ = [mc.successors(s, exact=use_exact) for s in range(mc.num_states)]
    atoms = d.atoms

    def letter(locs):
        if joint:
            return mc.labels[locs[0]]
        return tuple(mc.labels[s] for s in locs)

    vmemo = {}

    def step(q, locs):
        v = vmemo.get(locs)
        if v is None:
            v = vmemo[locs] = valuation(letter(locs), atoms)
        return d.step_valuation(q, v)

    start = (init_locs, step(d.init, init_locs))
    index = {start: 0}
    order = [start]
    edges = []
    i = 0
    while i < len(order):
        locs, q = order[i]
        i += 1
        out = {}
        for combo in _product(*(succ[s] for s in locs)):
            nxt = tuple(x[0] for x in combo)
            prob = Fraction(1) if use_exact else 1.0
            for x in combo:
                prob *= x[1]
            tgt = (nxt, step(q, nxt))
            j = index.get(tgt)
            if j is None:
                j = index[tgt] = len(order)
                order.append(tgt)
            out[j] = out.get(j, 0) + prob
        edges.append(out)

    graph = {v: list(edges[v]) for v in range(len(order))}
    comps = sccs(graph)
    comp_of = {}
    for k, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = k
    accepting = set()
    for k, comp in enumerate(comps):
        if any(comp_of[w] != k for v in comp for w in graph[v]):
            continue  # not bottom
        qs = {order[v][1] for v in comp}
        if any(not (qs & L) and (qs & K) for L, K in d.pairs):
            accepting |= set(comp)
    if not accepting:
        return Fraction(0) if use_exact else 0.0
    # states that can reach an accepting BSCC
    rev = {v: [] for v in graph}
    for v, ws in graph.items():
        for w in ws:
            rev[w].append(v)
    can = set(accepting)
    stack = list(accepting)
    while stack:
        v = stack.pop()
        for u in rev[v]:
            if u not in can:
                can.add(u)
                stack.append(u)
    if 0 in accepting:
        return Fraction(1) if use_exact else 1.0
    if 0 not in can:
        return Fraction(0) if use_exact else 0.0
    unknown = sorted(can - accepting)
    pos = {v: k for k, v in enumerate(unknown)}
    if use_exact:
        return _gauss_exact(unknown, pos, edges, accepting)[pos[0]]
    nn = len(unknown)
    r, c, vals = [], [], []
    b = np.zeros(nn)
    for v in unknown:
        r.append(pos[v])
        c.append(pos[v])
        vals.append(1.0)
        for w, pr in edges[v].items():
            if w in accepting:
                b[pos[v]] += pr
            elif w in pos:
                r.append(pos[v])
                c.append(pos[w])
                vals.append(-pr)
    A = sp.csr_matrix((vals, (r, c)), shape=(nn, nn))
    x = _solve(A, b)
    return float(min(1.0, max(0.0, x[pos[0]])))


def _product(*lists):
    if not lists:
        yield ()
        return
    head, *rest = lists
    for x in head:
        for tail in _product(*rest):
            yield (x,) + tail


def _gauss_exact(unknown, pos, edges, accepting):
    n = len(unknown)
    A = [dict() for _ in range(n)]
    b = [Fraction(0)] * n
    for v in unknown:
        i = pos[v]
        A[i][i] = A[i].get(i, 0) + Fraction(1)
        for w, pr in edges[v].items():
            if w in accepting:
                b[i] += pr
            elif w in pos:
                j = pos[w]
                A[i][j] = A[i].get(j, 0) - pr
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r].get(col, 0) != 0)
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        inv = 1 / A[col][col]
        A[col] = {k: v * inv for k, v in A[col].items()}
        b[col] *= inv
        for r in range(n):
            if r != col and A[r].get(col, 0) != 0:
                f = A[r][col]
                for k, v in A[col].items():
                    A[r][k] = A[r].get(k, 0) - f * v
                b[r] -= f * b[col]
    return b


# ---------------------------------------------------------------------------
# expected total reward


def expected_total_reward(m: Mdp, r, goal, direction="min", eps=1e-10):
    """Expected reward accumulated until ``goal`` is first reached.

    A policy that misses the goal with positive probability has value ``inf``.
    In min mode these are the states from which no policy reaches the goal
    almost surely; in max mode, those from which some policy can miss it.
    """
    rew = r.values if isinstance(r, RewardStructure) else np.asarray(r, dtype=float)
    goal = _as_mask(m, goal)
    vals, chosen = _reward_rows(m, rew, goal, direction, eps)
    return vals, _policy(m, chosen)


def _reward_rows(m: Mdp, rew, goal, direction, eps):
    rows_, cols_ = _coo(m)
    cstate = m.choice_state
    n = m.num_states
    if direction == "min":
        ok = prob1_max(m, goal)
        stay = ~_any_per_choice(m, rows_, ~ok[cols_])
        fixed = goal | ~ok
        rew_eff = np.where(stay, rew, np.inf)
        # value iteration from above, started at a proper policy: iterating from
        # below would settle on zero-reward cycles that never reach the goal
        zero_q = np.zeros(m.num_choices)
        proper = _greedy_rows(m, zero_q, np.zeros(n), stay & ok[cstate], goal)
        xv, _ = _evaluate(m, proper, goal, None, rew)
        xv[goal] = 0.0
        xv[~ok] = 0.0
        for _ in range(_MAX_ITERS):
            q = m.matrix @ np.where(ok, xv, 0.0) + rew_eff
            new = np.where(fixed, 0.0, _state_opt(m, q, False))
            if np.max(np.abs(new - xv)[ok], initial=0.0) < eps:
                xv = new
                break
            xv = new
        q = m.matrix @ np.where(ok, xv, 0.0) + rew_eff
        best = _state_opt(m, q, False)
        chosen = _greedy_rows(m, q, best, stay, goal)
        chosen[~ok] = np.array(m.row_start[:-1])[~ok]
        for _ in range(10_000):
            val, sure = _evaluate(m, chosen, goal, None, rew)
            val[goal] = 0.0
            q = m.matrix @ np.where(np.isfinite(val), val, 0.0) + rew_eff
            cur = q[chosen]
            better = (q < cur[cstate] - 1e-9) & ok[cstate] & ~goal[cstate] & stay
            if not better.any():
                break
            trial = chosen.copy()
            bestq = _state_opt(m, np.where(better, q, np.inf), False)
            for s in np.flatnonzero(_per_state_any(m, better)).tolist():
                for c in range(m.row_start[s], m.row_start[s + 1]):
                    if better[c] and abs(q[c] - bestq[s]) <= 1e-9:
                        trial[s] = c
                        break
            tv, tsure = _evaluate(m, trial, goal, None, rew)
            if not np.all(tsure[ok]):
                break  # the switch would create a zero-reward trap
            chosen = trial
        val, _ = _evaluate(m, chosen, goal, None, rew)
        val[goal] = 0.0
        val[~ok] = np.inf
        return val, chosen
    # max mode: a policy that misses the goal with positive probability has
    # value inf, so only states where every policy reaches it stay finite
    inf_states = ~_prob1_min(m, goal) & ~goal
    x = np.zeros(n)
    fixed = goal | inf_states
    for _ in range(_MAX_ITERS):
        q = m.matrix @ np.where(inf_states, 0.0, x) + rew
        new = np.where(fixed, 0.0, _state_opt(m, q, True))
        if np.max(np.abs(new - x), initial=0.0) < eps:
            x = new
            break
        x = new
    q = m.matrix @ x + rew
    best = _state_opt(m, q, True)
    chosen = _greedy_rows(m, q, best, np.ones(m.num_choices, dtype=bool), goal)
    if inf_states.any():
        # the min-reachability policy misses the goal with positive probability there
        _, miss = reach_rows(m, goal, "min")
        chosen[inf_states] = miss[inf_states]
    x[inf_states] = np.inf
    x[goal] = 0.0
    return x, chosen


def max_total_reward(m: Mdp, r, eps=1e-10):
    """Maximal expected total reward without a goal.

    States that can collect positive reward forever inside an end component
    get ``inf``; elsewhere reward-free end components end the accumulation.
    """
    rew = r.values if isinstance(r, RewardStructure) else np.asarray(r, dtype=float)
    n = m.num_states
    inf_states = np.zeros(n, dtype=bool)
    for mec in mec_decomposition(m):
        if any(rew[c] > 0 for cs in mec.choices.values() for c in cs):
            inf_states[list(mec.states)] = True
    if inf_states.any():
        inf_states = _backward_reach(m, inf_states, None)
    x = np.zeros(n)
    for _ in range(_MAX_ITERS):
        q = m.matrix @ np.where(inf_states, 0.0, x) + rew
        new = np.where(inf_states, 0.0, _state_opt(m, q, True))
        if np.max(np.abs(new - x), initial=0.0) < eps:
            x = new
            break
        x = new
    q = m.matrix @ x + rew
    chosen = _greedy_rows(m, q, _state_opt(m, q, True), np.ones(m.num_choices, dtype=bool),
                          np.zeros(n, dtype=bool))
    x[inf_states] = np.inf
    return x, _policy(m, chosen)
