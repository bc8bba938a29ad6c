"""Abstraction refinement over the synchronized product.

The product lets every agent see the whole state tuple, so its optimal policy
bounds what any tuple of local policies can achieve.  A node of the search is
an :class:`ActionRestriction`; its bound is the product optimum under the
restriction.  When the optimal product policy can be read as a tuple of local
policies it is exact for the node; otherwise the first conflicting hole is split
three ways and the children are searched depth first.
"""
from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .automata.dra import Dra, ltl_to_dra
from .hyperspec import (
    Bindings, CAnd, COr, HyperFormula, ProbConstraint, SpecError, combine, expand_quantifiers, kleene,
)
from .mdp import ActionRestriction, Hole, Mdp, MemorylessPolicy, induce_randomized
from .probcheck import (
    EPS, _evaluate, expected_total_reward, mc_satisfaction_probability, rabin_solve, _reward_rows,
    prob0_max, _prob1_min,
)
from .product import ProductMdp, apply_restriction, select_choices, sync_product, unfold_memory

VALUE_TOL = 1e-9

SAT, UNSAT, AMBIGUOUS = "SAT", "UNSAT", "AMBIGUOUS"


# ---------------------------------------------------------------------------
# policy tuples


@dataclass
class PolicyTuple:
    """One memoryless policy per policy variable over the (unfolded) agent model."""

    policies: tuple  # of dict local state -> action id
    memory_bits: int = 0

    def __getitem__(self, k):
        return self.policies[k]

    def __len__(self):
        return len(self.policies)

    def __eq__(self, other):
        return isinstance(other, PolicyTuple) and self.memory_bits == other.memory_bits and \
            tuple(map(dict, self.policies)) == tuple(map(dict, other.policies))


@dataclass
class Conflict:
    hole: Hole
    a: int
    b: int
    states: tuple  # witness product states (s, s')
    agents: tuple  # agent indices (i, j)
    kind: str  # "local-observability" | "policy-binding"


@dataclass
class ConsistencyReport:
    conflicts: list
    assignment: dict  # hole -> first action seen on the scanned states
    seen: dict  # hole -> sorted actions seen

    @property
    def consistent(self) -> bool:
        return not self.conflicts


def _reachable(p: Mdp, rows, start: int) -> np.ndarray:
    P = p.matrix[rows]
    seen = np.zeros(p.num_states, dtype=bool)
    seen[start] = True
    frontier = np.array([start])
    while len(frontier):
        nxt = np.unique(P[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def _rows_of(p: ProductMdp, policy) -> np.ndarray:
    if isinstance(policy, np.ndarray):
        return policy
    rows = np.empty(p.num_states, dtype=np.int64)
    for s in range(p.num_states):
        rows[s] = p.choice_of(s, int(policy[s]))
    return rows


def check_consistency(p: ProductMdp, policy, b: Bindings | None = None, ignore=None,
                      reachable_only: bool = True) -> ConsistencyReport:
    """Conflicts of a product policy with local observability and policy bindings.

    States are scanned in increasing id (agents in order) among the states the
    policy reaches from the initial state; ``ignore`` masks states whose choice
    cannot influence the value.  The first conflict of every hole is reported.
    """
    b = b or p.bindings
    rows = _rows_of(p, policy)
    mask = _reachable(p, rows, p.initial) if reachable_only else np.ones(p.num_states, dtype=bool)
    if ignore is not None:
        mask &= ~ignore
    states = np.flatnonzero(mask)
    k = b.agent_count
    n_local = p.agent.num_states
    acts = p.local_actions[rows[states]]  # (len(states), k)
    locs = p.local[states]
    pv = np.array(b.agent_pvar)
    keys = (pv[None, :] * n_local + locs).ravel()
    flat_acts = acts.ravel()
    report = ConsistencyReport([], {}, {})
    if len(keys) == 0:
        return report
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    first_act = flat_acts[first][inv]
    mism = np.flatnonzero(flat_acts != first_act)
    for key, f in zip(uniq.tolist(), first.tolist()):
        report.assignment[Hole(key // n_local, key % n_local)] = int(flat_acts[f])
    done = set()
    for pos in mism.tolist():
        key = int(keys[pos])
        if key in done:
            continue
        done.add(key)
        f = int(first[np.searchsorted(uniq, key)])
        s1, i = divmod(f, k)
        s2, j = divmod(pos, k)
        hole = Hole(key // n_local, key % n_local)
        report.conflicts.append(Conflict(
            hole, int(flat_acts[f]), int(flat_acts[pos]), (int(states[s1]), int(states[s2])), (i, j),
            "local-observability" if i == j else "policy-binding"))
    order = np.lexsort((flat_acts, keys))
    for key, a in zip(keys[order].tolist(), flat_acts[order].tolist()):
        lst = report.seen.setdefault(Hole(key // n_local, key % n_local), [])
        if not lst or lst[-1] != a:
            lst.append(a)
    report.conflicts.sort(key=lambda c: (min(c.states), c.hole))
    return report


def _default_action(agent: Mdp, r: ActionRestriction | None, hole: Hole) -> int:
    allowed = r.get(hole) if r is not None else None
    acts = sorted(allowed) if allowed else agent.enabled(hole.state)
    return int(acts[0])


def _complete(assign: dict, agent: Mdp, b: Bindings, r: ActionRestriction | None, bits: int) -> PolicyTuple:
    pols = []
    for k in range(len(b.pvar_agents)):
        pol = {}
        for s in range(agent.num_states):
            h = Hole(k, s)
            pol[s] = assign[h] if h in assign else _default_action(agent, r, h)
        pols.append(pol)
    return PolicyTuple(tuple(pols), bits)


def factorize(p: ProductMdp, policy, b: Bindings | None = None, r: ActionRestriction | None = None,
              ignore=None, memory_bits: int = 0, report: ConsistencyReport | None = None) -> PolicyTuple:
    """Read a consistent product policy as one local policy per policy variable."""
    b = b or p.bindings
    report = report or check_consistency(p, policy, b, ignore)
    if not report.consistent:
        raise ValueError("cannot factorize an inconsistent policy")
    return _complete(report.assignment, p.agent, b, r, memory_bits)


def lift_rows(t: PolicyTuple, p: ProductMdp, b: Bindings | None = None) -> np.ndarray:
    b = b or p.bindings
    cstate = p.choice_state
    keep = np.ones(p.num_choices, dtype=bool)
    acts = p.local_actions
    for i in range(b.agent_count):
        pol = t.policies[b.agent_pvar[i]]
        table = np.array([pol.get(s, -1) for s in range(p.agent.num_states)], dtype=np.int64)
        keep &= acts[:, i] == table[p.local[cstate, i]]
    rows = np.full(p.num_states, -1, dtype=np.int64)
    idx = np.flatnonzero(keep)
    rows[cstate[idx]] = idx
    return rows


def lift(t: PolicyTuple, b: Bindings, p: ProductMdp) -> MemorylessPolicy:
    """Product policy playing ``t`` componentwise."""
    rows = lift_rows(t, p, b)
    if np.any(rows < 0):
        s = int(np.flatnonzero(rows < 0)[0])
        raise ValueError(f"policy tuple does not define an enabled joint action at product state {s}")
    return MemorylessPolicy({s: int(p.choice_action[c]) for s, c in enumerate(rows.tolist())})


def resolve_randomly(p: ProductMdp, policy, report: ConsistencyReport, seed, b: Bindings | None = None,
                     r: ActionRestriction | None = None, memory_bits: int = 0) -> PolicyTuple:
    """Pick, per conflicting hole, one of the actions the policy uses there."""
    b = b or p.bindings
    rng = random.Random(str(seed))
    assign = dict(report.assignment)
    for c in sorted(report.conflicts, key=lambda c: c.hole):
        assign[c.hole] = rng.choice(report.seen[c.hole])
    return _complete(assign, p.agent, b, r, memory_bits)


def split(r: ActionRestriction, report: ConsistencyReport | Conflict, agent: Mdp) -> list[ActionRestriction]:
    """Children restricting the first conflicting hole to {a}, {b} and the rest."""
    c = report if isinstance(report, Conflict) else report.conflicts[0]
    allowed = r.get(c.hole)
    allowed = frozenset(agent.enabled(c.hole.state)) if allowed is None else allowed
    if c.a not in allowed or c.b not in allowed or c.a == c.b:
        raise ValueError(f"conflict actions {c.a}, {c.b} not both allowed at {c.hole}")
    kids = [r.restrict(c.hole, {c.a}), r.restrict(c.hole, {c.b})]
    rest = allowed - {c.a, c.b}
    if rest:
        kids.append(r.restrict(c.hole, rest))
    return kids


# ---------------------------------------------------------------------------
# problem setup


@dataclass
class Task:
    """One probability (or reward) query: a constraint instance on one product."""

    leaf: int
    constraint: ProbConstraint
    product: ProductMdp
    pairs: list = field(default_factory=list)
    goal: np.ndarray | None = None
    reward: np.ndarray | None = None


@dataclass
class Problem:
    spec: HyperFormula
    agent: Mdp  # memory-unfolded agent model
    base: Mdp
    memory_bits: int
    expansion: object
    leaf_trees: list  # per leaf: constraint tree with Task indices at the leaves
    tasks: list
    objective: int | None  # task index of the optimization objective
    direction: str | None


def _reward_vector(p: ProductMdp, c: ProbConstraint) -> np.ndarray:
    agent = p.agent
    if c.reward not in agent.rewards:
        raise SpecError(f"unknown reward structure {c.reward}")
    vec = agent.rewards[c.reward][p.local_choice]
    if c.reward_var is None:
        return vec.sum(axis=1)
    return vec[:, int(c.reward_var) - 1]


def _goal_mask(p: ProductMdp, f) -> np.ndarray:
    from .ltl import eval_prop

    out = np.zeros(p.num_states, dtype=bool)
    memo = {}
    for s in range(p.num_states):
        lab = p.labels[s]
        v = memo.get(lab)
        if v is None:
            v = memo[lab] = eval_prop(f, lambda a: a.ap in lab[a.tag - 1])
        out[s] = v
    return out


def build_problem(m: Mdp, spec: HyperFormula, memory_bits: int = 0, dra: Dra | None = None,
                  budget_states: int | None = None) -> Problem:
    expansion = expand_quantifiers(spec, m)
    agent = unfold_memory(m, memory_bits)
    size = 1 << memory_bits
    tasks, trees = [], []
    dra_cache, prod_cache = {}, {}
    objective = None
    for li, leaf in enumerate(expansion.leaves):
        b = leaf.bindings.with_initial(s * size for s in leaf.bindings.initial)

        def conv(node):
            nonlocal objective
            if isinstance(node, ProbConstraint):
                if node.kind == "reward":
                    from .ltl import Eventually
                    d = _get_dra(Eventually(node.goal), b.agent_count, None, dra_cache)
                else:
                    d = _get_dra(node.body, b.agent_count, dra, dra_cache)
                key = (b.initial, id(d))
                p = prod_cache.get(key)
                if p is None:
                    p = prod_cache[key] = sync_product(agent, d, b, budget_states)
                t = Task(li, node, p, p.pair_masks())
                if node.kind == "reward":
                    t.goal = _goal_mask(p, node.goal)
                    t.reward = _reward_vector(p, node)
                tasks.append(t)
                if node.kind != "threshold":
                    objective = len(tasks) - 1
                return len(tasks) - 1
            return (("and" if isinstance(node, CAnd) else "or"), [conv(node.left), conv(node.right)])

        trees.append(conv(leaf.body))
    if objective is not None and not _top_conjunct(trees[0], objective):
        raise SpecError("an optimization objective must be a top-level conjunct of the body")
    direction = tasks[objective].constraint.direction if objective is not None else None
    return Problem(spec, agent, m, memory_bits, expansion, trees, tasks, objective, direction)


def _top_conjunct(tree, idx) -> bool:
    if tree == idx:
        return True
    if isinstance(tree, tuple) and tree[0] == "and":
        return any(_top_conjunct(k, idx) for k in tree[1])
    return False


def _get_dra(f, arity, override, cache):
    if override is not None:
        if override.arity != arity:
            raise ValueError(f"supplied automaton has arity {override.arity}, expected {arity}")
        return override
    key = str(f)
    if key not in cache:
        cache[key] = ltl_to_dra(f, arity=arity)
    return cache[key]


# ---------------------------------------------------------------------------
# node analysis


@dataclass
class Solved:
    value: float
    rows: np.ndarray
    values: np.ndarray
    ignore: np.ndarray  # states whose choice cannot matter


def _solve_task(t: Task, pr: ProductMdp, direction: str, eps: float) -> Solved:
    """Optimal value on the restricted product ``pr``; rows index ``pr``'s choices."""
    if t.constraint.kind == "reward":
        rew = t.reward[pr.base_choice]
        vals, rows = _reward_rows(pr, rew, t.goal, direction, eps)
        ignore = t.goal.copy()
        return Solved(float(vals[pr.initial]), rows, vals, ignore)
    sol = rabin_solve(pr, t.pairs, direction, eps, pr.initial)
    if direction == "max":
        ignore = sol.values <= 0.0
    else:
        ignore = sol.values >= 1.0
    # a state whose optimal value is already forced is irrelevant only when
    # every policy agrees there; the extremal value 0 (max) / 1 (min) is such a
    # case, and so is an automaton state that accepts or rejects every word
    if pr.dra is not None:
        settled = sorted(pr.dra.universal_states() | pr.dra.rejecting_states())
        ignore = ignore | np.isin(pr.auto, settled)
    return Solved(sol.value, sol.rows, sol.values, ignore)


def _classify(c: ProbConstraint, vmax, vmin):
    if c.op in (">=", ">"):
        if vmax is not None and not c.holds(vmax):
            return UNSAT
        if vmin is not None and c.holds(vmin):
            return SAT
        return AMBIGUOUS
    if vmin is not None and not c.holds(vmin):
        return UNSAT
    if vmax is not None and c.holds(vmax):
        return SAT
    return AMBIGUOUS


def classify_constraint(p: ProductMdp, r: ActionRestriction, c: ProbConstraint, eps: float = EPS):
    """Three-valued verdict of a threshold constraint over all policies of ``p`` under ``r``.

    Returns ``(class, solutions)`` where ``solutions`` maps ``"max"``/``"min"``
    to the optimal restricted-product solutions that were computed.
    """
    if c.kind != "threshold":
        raise ValueError("classification applies to threshold constraints")
    pr = apply_restriction(p, r)
    t = Task(-1, c, p, p.pair_masks())
    return _classify_task(t, pr, eps)


def _classify_task(t: Task, pr: ProductMdp, eps: float):
    c = t.constraint
    sols = {}
    # trivially decided thresholds need no solve
    if (c.op == ">=" and c.bound <= 0) or (c.op == "<=" and c.bound >= 1):
        return SAT, sols
    if (c.op == ">" and c.bound >= 1) or (c.op == "<" and c.bound <= 0):
        return UNSAT, sols
    first = "max" if c.op in (">=", ">") else "min"
    sols[first] = _solve_task(t, pr, first, eps)
    v = sols[first].value
    cls = _classify(c, v if first == "max" else None, v if first == "min" else None)
    if cls == UNSAT:
        return UNSAT, sols
    other = "min" if first == "max" else "max"
    sols[other] = _solve_task(t, pr, other, eps)
    vmax = sols["max"].value
    vmin = sols["min"].value
    return _classify(c, vmax, vmin), sols


@dataclass
class NodeResult:
    verdict: object  # True / False / None
    bound: float | None
    solutions: dict  # task index -> {direction: Solved}
    restricted: dict  # task index -> restricted product
    classes: dict


def analyze(problem: Problem, r: ActionRestriction, eps: float) -> NodeResult:
    restricted, sols, classes = {}, {}, {}
    cache = {}
    for i, t in enumerate(problem.tasks):
        key = id(t.product)
        if key not in cache:
            cache[key] = apply_restriction(t.product, r)
        pr = restricted[i] = cache[key]
        if i == problem.objective:
            sols[i] = {problem.direction: _solve_task(t, pr, problem.direction, eps)}
            classes[i] = SAT
        else:
            classes[i], sols[i] = _classify_task(t, pr, eps)
    verdict = _tree_verdict(problem, {i: {SAT: True, UNSAT: False}.get(c) for i, c in classes.items()})
    bound = sols[problem.objective][problem.direction].value if problem.objective is not None else None
    return NodeResult(verdict, bound, sols, restricted, classes)


def _tree_verdict(problem: Problem, task_values: dict):
    def ev(tree):
        if isinstance(tree, int):
            return task_values[tree]
        return kleene(tree[0], [ev(k) for k in tree[1]])

    return combine(problem.expansion.tree, [ev(t) for t in problem.leaf_trees])


# ---------------------------------------------------------------------------
# evaluation of policy tuples


def _product_value(t: Task, rows: np.ndarray, direction: str = "max") -> float:
    p = t.product
    keep = np.zeros(p.num_choices, dtype=bool)
    keep[rows] = True
    mc = select_choices(p, keep)
    if t.constraint.kind == "reward":
        vals, _ = _reward_rows(mc, t.reward[mc.base_choice], t.goal, "min", 1e-12)
        return float(vals[mc.initial])
    return rabin_solve(mc, t.pairs, "max", EPS, mc.initial).value


def tuple_values(problem: Problem, tup: PolicyTuple) -> dict:
    """Value of every task under ``tup``, computed on the products."""
    out = {}
    memo = {}
    for i, t in enumerate(problem.tasks):
        rows = lift_rows(tup, t.product)
        if np.any(rows < 0):
            raise ValueError("policy tuple is not total on the product")
        key = (id(t.product), str(t.constraint.body), t.constraint.kind)
        if key not in memo:
            memo[key] = _product_value(t, rows)
        out[i] = memo[key]
    return out


def tuple_verdict(problem: Problem, values: dict):
    tv = {}
    for i, t in enumerate(problem.tasks):
        tv[i] = True if i == problem.objective else t.constraint.holds(values[i])
    return _tree_verdict(problem, tv)


def evaluate_policy_tuple(m: Mdp, spec: HyperFormula, t: PolicyTuple, dra: Dra | None = None):
    """Independent evaluation of a policy tuple.

    Each policy variable's induced chain is built on the (memory-unfolded)
    agent model; the agents' chains are composed and checked against the
    automaton of each constraint without going through the synthesis product.
    Returns ``(values, verdict)`` with ``values[(leaf, k)]`` for the ``k``-th
    constraint of leaf ``leaf``.  Policies may map a state to a collection of
    actions (or ``"*"``), meaning a uniform choice among them.
    """
    expansion = expand_quantifiers(spec, m)
    agent = unfold_memory(m, t.memory_bits)
    size = 1 << t.memory_bits
    n = agent.num_states
    # disjoint union of the per-variable induced chains
    union_rows = {}
    chains = [induce_randomized(agent, t.policies[k]) for k in range(len(t.policies))]
    union = _disjoint_union(chains)
    values, verdicts = {}, []
    dra_cache = {}
    for li, leaf in enumerate(expansion.leaves):
        b = leaf.bindings
        init = tuple(b.agent_pvar[i] * n + s * size for i, s in enumerate(b.initial))
        idx = [0]

        def ev(node):
            if isinstance(node, ProbConstraint):
                k = idx[0]
                idx[0] += 1
                if node.kind == "reward":
                    v = _reward_of_tuple(agent, chains, b, init, node, n)
                    values[(li, k)] = v
                    return True
                d = _get_dra(node.body, b.agent_count, dra, dra_cache)
                v = mc_satisfaction_probability(union, d, init)
                values[(li, k)] = v
                return True if node.kind == "optimize" else node.holds(v)
            return kleene("and" if isinstance(node, CAnd) else "or", [ev(node.left), ev(node.right)])

        verdicts.append(ev(leaf.body))
    return values, combine(expansion.tree, verdicts)


def _disjoint_union(chains):
    from .mdp import Mdp as _Mdp
    import scipy.sparse as sp

    n = chains[0].num_states
    k = len(chains)
    mats = sp.block_diag([c.matrix for c in chains], format="csr")
    labels = [lab for c in chains for lab in c.labels]
    actions = chains[0].actions
    choice_action = np.concatenate([c.choice_action for c in chains])
    exact = None
    if all(c.exact_probs is not None for c in chains):
        exact = tuple(x for c in chains for x in c.exact_probs)
    return _Mdp(n * k, actions, np.arange(n * k + 1), choice_action, mats, labels, chains[0].ap, None, None, exact)


def _reward_of_tuple(agent, chains, b, init, c: ProbConstraint, n):
    """Expected reward to the goal under a tuple via the explicit joint chain."""
    from .product import sync_product as _sp
    from .automata.dra import ltl_to_dra as _ld
    from .ltl import Eventually

    union = _disjoint_union(chains)
    rewards = np.concatenate([ch.rewards[c.reward] for ch in chains])
    union.rewards = {c.reward: rewards}
    d = _ld(Eventually(c.goal), arity=b.agent_count)
    bb = Bindings(b.agent_count, tuple(range(b.agent_count)), init, b.agent_count)
    p = _sp(union, d, bb)
    goal = _goal_mask(p, c.goal)
    vec = union.rewards[c.reward][p.local_choice]
    rew = vec.sum(axis=1) if c.reward_var is None else vec[:, int(c.reward_var) - 1]
    vals, _ = expected_total_reward(p, rew, goal, "min")
    return float(vals[0])


# ---------------------------------------------------------------------------
# the search


@dataclass
class SynthesisResult:
    status: str  # optimum-found | threshold-satisfied | infeasible | budget-exhausted
    best_value: float | None
    best_tuple: PolicyTuple | None
    stats: dict
    product_sizes: list
    upper_bound: float | None = None
    values: dict = field(default_factory=dict)
    history: list = field(default_factory=list)  # (wall time, incumbent)
    trace: list = field(default_factory=list)


def _better(direction, a, b, tol=VALUE_TOL):
    """Whether value ``a`` improves on incumbent ``b``."""
    if b is None:
        return True
    return a > b + tol if direction == "max" else a < b - tol


def synthesize(m: Mdp, spec: HyperFormula, memory_bits: int = 0, time_budget: float = 600.0,
               eps: float = EPS, seed: int = 0, workers: int = 1, dra: Dra | None = None,
               trace=None, problem: Problem | None = None) -> SynthesisResult:
    """Search for an optimal (or threshold-satisfying) tuple of memoryless policies.

    ``trace`` may be a callable receiving one line per processed node.
    """
    t0 = time.perf_counter()
    problem = problem or build_problem(m, spec, memory_bits, dra)
    agent = problem.agent
    direction = problem.direction
    lines = []

    def log(line):
        lines.append(line)
        if trace is not None:
            trace(line)

    incumbent, inc_tuple, inc_values = None, None, {}
    history = []
    stats = {"nodes": 0, "splits": 0, "pruned": 0, "time_to_best": None}
    root_bound = None
    stack = [("r", ActionRestriction())]
    status = None
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def offer(tup, vals, path):
        nonlocal incumbent, inc_tuple, inc_values
        if tuple_verdict(problem, vals) is not True:
            return False
        value = vals[problem.objective] if problem.objective is not None else None
        if problem.objective is None or _better(direction, value, incumbent):
            incumbent, inc_tuple, inc_values = value, tup, vals
            stats["time_to_best"] = time.perf_counter() - t0
            history.append((stats["time_to_best"], incumbent))
            log(f"  incumbent {_fmt(incumbent)} from {path}")
            return True
        return False

    try:
        while stack:
            if time.perf_counter() - t0 > time_budget:
                status = "budget-exhausted"
                break
            batch = [stack.pop()]
            if pool is not None:
                while stack and len(batch) < workers:
                    batch.append(stack.pop())
                results = list(pool.map(lambda node: analyze(problem, node[1], eps), batch))
            else:
                results = [analyze(problem, batch[0][1], eps)]
            # process in order; later batch members go back on the stack when a
            # decision for an earlier one ends the search
            for (path, r), res in zip(batch, results):
                stats["nodes"] += 1
                if root_bound is None:
                    root_bound = res.bound
                outcome = _process(problem, path, r, res, incumbent, seed, log, offer, stats)
                if outcome == "stop":
                    stack.clear()
                    break
                for kid in reversed(outcome):
                    stack.append(kid)
    finally:
        if pool is not None:
            pool.shutdown()

    if status is None:
        if inc_tuple is None:
            status = "infeasible"
        else:
            status = "optimum-found" if problem.objective is not None else "threshold-satisfied"
    log(f"done status={status} best={_fmt(incumbent)} nodes={stats['nodes']} splits={stats['splits']}")
    sizes = sorted({t.product.num_states for t in problem.tasks})
    stats["time"] = time.perf_counter() - t0
    return SynthesisResult(status, incumbent, inc_tuple, stats, sizes, root_bound, inc_values, history, lines)


def _fmt(v):
    return "none" if v is None else f"{v:.6f}"


def _process(problem: Problem, path, r, res: NodeResult, incumbent, seed, log, offer, stats):
    direction = problem.direction
    head = f"node {path} restr={r.summary()} bound={_fmt(res.bound)} class={_verdict_str(res.verdict)}"
    if res.verdict is False:
        stats["pruned"] += 1
        log(head + " action=prune-unsat")
        return []
    if problem.objective is not None and incumbent is not None and not _better(direction, res.bound, incumbent):
        stats["pruned"] += 1
        log(head + " action=prune-bound")
        return []

    # candidate policies: the objective's optimum, then witnesses of open constraints
    witnesses = []
    if problem.objective is not None:
        witnesses.append((problem.objective, direction))
    for i, t in enumerate(problem.tasks):
        if i == problem.objective or res.classes[i] == UNSAT:
            continue
        if res.classes[i] == AMBIGUOUS or problem.objective is None:
            want = "max" if t.constraint.op in (">=", ">") else "min"
            if want in res.solutions[i]:
                witnesses.append((i, want))

    reports = []
    for i, want in witnesses:
        t = problem.tasks[i]
        pr = res.restricted[i]
        sol = res.solutions[i][want]
        rep = check_consistency(pr, sol.rows, pr.bindings, sol.ignore)
        reports.append((i, want, pr, sol, rep))

    tried = set()
    if reports:
        i, want, pr, sol, rep = reports[0]
        if rep.consistent:
            tup = factorize(pr, sol.rows, pr.bindings, r, sol.ignore, problem.memory_bits, rep)
            how = "factorized"
        else:
            tup = resolve_randomly(pr, sol.rows, rep, f"{seed}:{path}", pr.bindings, r, problem.memory_bits)
            how = "resolved"
        vals = tuple_values(problem, tup)
        good = tuple_verdict(problem, vals) is True
        improved = offer(tup, vals, path)
        if problem.objective is None and good:
            log(head + f" action=accept-{how}")
            return "stop"
        if problem.objective is not None and good and how == "factorized" and \
                not _better(direction, res.bound, vals[problem.objective]):
            log(head + f" action=close-{how}")
            return []
        tried.add(how)
    elif res.verdict is True:
        # every policy of the node satisfies all constraints: any tuple will do
        tup = _complete({}, problem.agent, problem.tasks[0].product.bindings, r, problem.memory_bits)
        vals = tuple_values(problem, tup)
        if offer(tup, vals, path) or tuple_verdict(problem, vals) is True:
            log(head + " action=accept-any")
            return "stop" if problem.objective is None else []

    conflict = None
    for i, want, pr, sol, rep in reports:
        if rep.conflicts:
            conflict = rep.conflicts[0]
            break
    if conflict is None:
        conflict = _fallback_conflict(problem, r, reports, res)
    if conflict is None:
        log(head + " action=leaf")
        return []
    kids = split(r, conflict, problem.agent)
    stats["splits"] += 1
    h = conflict.hole
    log(head + f" action=split hole={h.pvar}:{h.state} a={conflict.a} b={conflict.b} kind={conflict.kind}")
    return [(f"{path}.{k}", kid) for k, kid in enumerate(kids)]


def _verdict_str(v):
    return {True: SAT, False: UNSAT, None: AMBIGUOUS}[v]


def _fallback_conflict(problem: Problem, r, reports, res):
    """A hole to split when no witness policy shows a conflict.

    Prefers holes on which two consistent witnesses disagree, then holes used
    by a witness that still allow several actions, then any open hole of the
    restricted products.
    """
    agent = problem.agent

    def allowed(h):
        a = r.get(h)
        return sorted(a) if a is not None else list(agent.enabled(h.state))

    assigns = [rep.assignment for *_, rep in reports]
    for x in range(len(assigns)):
        for y in range(x + 1, len(assigns)):
            for h in sorted(set(assigns[x]) & set(assigns[y])):
                if assigns[x][h] != assigns[y][h]:
                    return Conflict(h, assigns[x][h], assigns[y][h], (), (), "cross-constraint")
    for rep in assigns:
        for h in sorted(rep):
            acts = allowed(h)
            if len(acts) >= 2:
                a = rep[h]
                b = next(x for x in acts if x != a)
                return Conflict(h, min(a, b), max(a, b), (), (), "open-hole")
    # any open hole reachable in some restricted product
    for i, pr in sorted(res.restricted.items()):
        b = pr.bindings
        for k in range(b.agent_count):
            for s in np.unique(pr.local[:, k]).tolist():
                h = Hole(b.agent_pvar[k], s)
                acts = allowed(h)
                if len(acts) >= 2:
                    return Conflict(h, acts[0], acts[1], (), (), "open-hole")
    return None


def uniform_tuple(m: Mdp, spec: HyperFormula) -> PolicyTuple:
    """The tuple in which every agent picks uniformly among enabled actions."""
    return PolicyTuple(tuple({s: "*" for s in range(m.num_states)} for _ in spec.policy_vars))
