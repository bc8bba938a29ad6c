import itertools
import random

import numpy as np
import pytest

from hypersynth import synthesis
from hypersynth.automata import ltl_to_dra
from hypersynth.hyperspec import parse_spec
from hypersynth.ltl import parse_ltl
from hypersynth.mdp import ActionRestriction, Hole, Mdp, induce_mc
from hypersynth.oracle import brute_force, count_tuples
from hypersynth.probcheck import mc_satisfaction_probability, rabin_optimal_policy
from hypersynth.product import sync_product
from hypersynth.hyperspec import Bindings
from hypersynth.synthesis import (
    Conflict, PolicyTuple, build_problem, check_consistency, evaluate_policy_tuple, factorize, lift, lift_rows,
    resolve_randomly, split, synthesize, uniform_tuple,
)

from util import holes_used, policy_reach, rand_mdp, rand_objective_spec, rand_tuple


def small_instance(rng, limit=3000, **kw):
    while True:
        m = rand_mdp(rng, rng.randint(2, 5), rng.randint(1, 3))
        h = parse_spec(rand_objective_spec(rng, m, **kw))
        if count_tuples(m, h) <= limit:
            return m, h


@pytest.mark.parametrize("seed", range(20))
def test_optimum_matches_enumeration(seed):
    rng = random.Random(seed)
    m, h = small_instance(rng)
    res = synthesize(m, h, time_budget=60)
    best, _ = brute_force(m, h)
    assert res.status == "optimum-found"
    assert res.best_value == pytest.approx(best, abs=1e-6)
    vals, verdict = evaluate_policy_tuple(m, h, res.best_tuple)
    assert verdict is True
    assert list(vals.values())[0] == pytest.approx(res.best_value, abs=1e-6)


THRESHOLD_BODIES = ["F (a@x1 & a@x2)", "(!a@x1) U a@x2", "G !a@x1 & F b@x2", "F b@x1"]


@pytest.mark.parametrize("seed", range(25))
def test_threshold_verdict_matches_enumeration(seed):
    rng = random.Random(1000 + seed)
    while True:
        m = rand_mdp(rng, rng.randint(2, 4), rng.randint(1, 3))
        q1 = rng.choice(["forall", "exists"])
        init = sorted(set(rng.sample(range(m.num_states), rng.randint(1, min(2, m.num_states)))))
        c1, c2 = round(rng.random(), 2), round(rng.random(), 2)
        b1, b2 = rng.choice(THRESHOLD_BODIES), rng.choice(THRESHOLD_BODIES)
        op1, op2 = rng.choice([">=", ">", "<", "<="]), rng.choice([">=", ">", "<", "<="])
        conn, neg = rng.choice(["&", "|"]), rng.choice(["", "!"])
        h = parse_spec(f"exists (s1 s2); {q1} x1 in {{{', '.join(map(str, init))}}} (s1); forall x2 in {{0}} (s2); "
                       f"{neg}(P{op1}{c1} [ {b1} ]) {conn} P{op2}{c2} [ {b2} ]")
        if count_tuples(m, h) <= 2000:
            break
    res = synthesize(m, h, time_budget=60)
    want, _ = brute_force(m, h)
    assert (res.status == "threshold-satisfied") == (want is True)
    assert res.status in ("threshold-satisfied", "infeasible")
    if res.best_tuple is not None:
        assert evaluate_policy_tuple(m, h, res.best_tuple)[1] is True


@pytest.mark.parametrize("seed", range(20))
def test_reward_objective_matches_enumeration(seed):
    rng = random.Random(300 + seed)
    while True:
        m = rand_mdp(rng, rng.randint(2, 4), rng.randint(1, 3))
        m.rewards = {"cost": np.array([float(rng.randint(0, 2)) for _ in range(m.num_choices)])}
        body = rng.choice(["F (a@x1 & a@x2)", "F (a@x1 | b@x2)"])
        text = rand_objective_spec(rng, m, body=body).replace("Pmax", "Rmax{cost@x1}").replace("Pmin", "Rmin{cost}")
        h = parse_spec(text)
        if count_tuples(m, h) <= 2000:
            break
    res = synthesize(m, h, time_budget=60)
    best, _ = brute_force(m, h)
    assert res.status == "optimum-found"
    assert res.best_value == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize("text", ["F a@x", "G F a@x", "(!b@x) U a@x"])
def test_single_agent_is_plain_mdp_synthesis(text):
    rng = random.Random(8)
    for _ in range(10):
        m = rand_mdp(rng, rng.randint(2, 5), 2)
        h = parse_spec(f"exists (s); forall x in {{0}} (s); Pmax [ {text} ]")
        res = synthesize(m, h, time_budget=30)
        d = ltl_to_dra(parse_ltl(text.replace("@x", "@1")), arity=1)
        want, _ = rabin_optimal_policy(sync_product(m, d, Bindings(1, (0,), (0,))))
        assert res.best_value == pytest.approx(want, abs=1e-6)
        if text == "F a@x":
            # once the target is seen the automaton state no longer matters
            assert res.stats["splits"] == 0


def test_memory_never_hurts():
    rng = random.Random(21)
    for _ in range(6):
        m, h = small_instance(rng, limit=200)
        r0 = synthesize(m, h, 0, time_budget=30)
        r1 = synthesize(m, h, 1, time_budget=60)
        if r1.status != "optimum-found":
            continue
        if h.objective().direction == "max":
            assert r1.best_value >= r0.best_value - 1e-6
        else:
            assert r1.best_value <= r0.best_value + 1e-6


def test_infeasible_status():
    m = Mdp.from_choices(2, ["go"], {(0, 0): {1: 1.0}, (1, 0): {1: 1.0}}, {}, ["a"])
    h = parse_spec("exists (p); forall x in {0} (p); P>=0.5 [ F a@x ]")
    res = synthesize(m, h, time_budget=10)
    assert res.status == "infeasible" and res.best_tuple is None


def test_objective_must_be_top_conjunct():
    m = Mdp.from_choices(1, ["go"], {(0, 0): {0: 1.0}}, {0: {"a"}}, ["a"])
    h = parse_spec("exists (p); forall x in {0} (p); Pmax [ F a@x ] | P>=0.5 [ F a@x ]")
    with pytest.raises(Exception):
        build_problem(m, h)


# ---------------------------------------------------------------------------
# randomized tuples


def test_uniform_tuple_evaluation():
    # two agents each flip between staying and moving to the goal
    m = Mdp.from_choices(2, ["stay", "go"], {(0, 0): {0: 1.0}, (0, 1): {1: 1.0}, (1, 0): {1: 1.0}},
                         {1: {"a"}}, ["a"])
    h = parse_spec("exists (p q); forall x in {0} (p); forall y in {0} (q); Pmax [ X X (a@x & a@y) ]")
    vals, _ = evaluate_policy_tuple(m, h, uniform_tuple(m, h))
    # by step 2 each agent has moved with probability 3/4
    assert list(vals.values())[0] == pytest.approx(0.75 ** 2)
    mixed = PolicyTuple(({0: (0, 1), 1: 0}, {0: 1, 1: 0}))
    vals, _ = evaluate_policy_tuple(m, h, mixed)
    assert list(vals.values())[0] == pytest.approx(0.75)


# ---------------------------------------------------------------------------
# consistency, factorization and lifting


def random_product(rng, memory_bits=0):
    m, h = small_instance(rng, limit=10 ** 9)
    problem = build_problem(m, h, memory_bits)
    return problem, problem.tasks[0].product


@pytest.mark.parametrize("seed", range(40))
def test_lift_factorize_round_trip(seed):
    rng = random.Random(seed)
    problem, p = random_product(rng, memory_bits=seed % 2)
    t = rand_tuple(rng, problem.agent, len(problem.spec.policy_vars), problem.memory_bits)
    rows = lift_rows(t, p)
    assert np.all(rows >= 0)
    rep = check_consistency(p, rows)
    assert rep.consistent
    back = factorize(p, rows, memory_bits=problem.memory_bits)
    for (k, s), acts in holes_used(p, rows).items():
        assert acts == {back.policies[k][s]} == {t.policies[k][s]}
    assert np.array_equal(lift_rows(back, p)[sorted(policy_reach(p, rows))], rows[sorted(policy_reach(p, rows))])
    pol = lift(t, p.bindings, p)
    assert all(p.choice_of(s, pol[s]) == rows[s] for s in range(p.num_states))


@pytest.mark.parametrize("seed", range(40))
def test_inconsistency_witness(seed):
    rng = random.Random(500 + seed)
    problem, p = random_product(rng)
    rows = np.array([rng.choice(list(p.choices(s))) for s in range(p.num_states)])
    used = holes_used(p, rows)
    rep = check_consistency(p, rows)
    assert rep.consistent == all(len(a) == 1 for a in used.values())
    reach = policy_reach(p, rows)
    b = p.bindings
    flagged = set()
    for c in rep.conflicts:
        s1, s2 = c.states
        i, j = c.agents
        assert s1 in reach and s2 in reach and c.a != c.b
        assert p.local[s1, i] == p.local[s2, j] == c.hole.state
        assert b.agent_pvar[i] == b.agent_pvar[j] == c.hole.pvar
        assert p.joint_action(int(rows[s1]))[i] == c.a and p.joint_action(int(rows[s2]))[j] == c.b
        assert c.kind == ("local-observability" if i == j else "policy-binding")
        flagged.add((c.hole.pvar, c.hole.state))
    assert flagged == {h for h, a in used.items() if len(a) > 1}


def test_single_agent_conflicts_come_from_automaton_states():
    rng = random.Random(4)
    m = rand_mdp(rng, 4, 3)
    d = ltl_to_dra(parse_ltl("G F a@1"), arity=1)
    p = sync_product(m, d, Bindings(1, (0,), (0,)))
    for _ in range(50):
        rows = np.array([rng.choice(list(p.choices(s))) for s in range(p.num_states)])
        # different automaton states may pick different actions for the same agent state
        rep = check_consistency(p, rows)
        assert rep.consistent == all(len(a) == 1 for a in holes_used(p, rows).values())


def test_factorize_rejects_inconsistent():
    rng = random.Random(2)
    for _ in range(200):
        problem, p = random_product(rng)
        rows = np.array([rng.choice(list(p.choices(s))) for s in range(p.num_states)])
        if not check_consistency(p, rows).consistent:
            with pytest.raises(ValueError):
                factorize(p, rows)
            return
    pytest.fail("no inconsistent policy found")


def test_resolve_randomly():
    rng = random.Random(3)
    checked = 0
    while checked < 20:
        problem, p = random_product(rng)
        rows = np.array([rng.choice(list(p.choices(s))) for s in range(p.num_states)])
        rep = check_consistency(p, rows)
        t1 = resolve_randomly(p, rows, rep, "7:r")
        t2 = resolve_randomly(p, rows, rep, "7:r")
        assert t1 == t2
        for (k, s), acts in holes_used(p, rows).items():
            assert t1.policies[k][s] in acts
        if rep.consistent:
            assert t1 == factorize(p, rows)
        checked += 1


def test_resolved_value_below_bound():
    rng = random.Random(9)
    for _ in range(20):
        m, h = small_instance(rng)
        problem = build_problem(m, h)
        p = problem.tasks[0].product
        d = h.objective().direction
        bound, pol = rabin_optimal_policy(p, d)
        rows = np.array([p.choice_of(s, pol[s]) for s in range(p.num_states)])
        t = resolve_randomly(p, rows, check_consistency(p, rows), 0)
        v = list(evaluate_policy_tuple(m, h, t)[0].values())[0]
        assert (v <= bound + 1e-6) if d == "max" else (v >= bound - 1e-6)


# ---------------------------------------------------------------------------
# splitting


def test_split_children():
    agent = Mdp.from_choices(2, ["a", "b", "c"], {(0, 0): {1: 1.0}, (0, 1): {0: 1.0}, (0, 2): {1: 1.0},
                                                  (1, 0): {1: 1.0}}, {}, [])
    c = Conflict(Hole(0, 0), 0, 2, (0, 1), (0, 1), "policy-binding")
    kids = split(ActionRestriction(), c, agent)
    assert [k.get(Hole(0, 0)) for k in kids] == [frozenset({0}), frozenset({2}), frozenset({1})]
    kids = split(ActionRestriction().restrict(Hole(0, 0), {0, 2}), c, agent)
    assert len(kids) == 2
    with pytest.raises(ValueError):
        split(ActionRestriction().restrict(Hole(0, 0), {0, 1}), c, agent)


def test_split_sizes_sum_to_parent():
    rng = random.Random(12)
    for _ in range(30):
        m, h = small_instance(rng)
        recorded = run_recording_splits(m, h)
        for r, conflict, kids in recorded:
            allowed = r.get(conflict.hole) or frozenset(m.enabled(conflict.hole.state))
            assert sum(len(k.get(conflict.hole)) for k in kids) == len(allowed)


def run_recording_splits(m, h, memory_bits=0):
    recorded = []
    orig = synthesis.split

    def spy(r, report, agent):
        kids = orig(r, report, agent)
        recorded.append((r, report if isinstance(report, Conflict) else report.conflicts[0], kids))
        return kids

    synthesis.split = spy
    try:
        synthesize(m, h, memory_bits, time_budget=60)
    finally:
        synthesis.split = orig
    return recorded


def test_trace_determinism():
    rng = random.Random(77)
    m, h = small_instance(rng)
    a = synthesize(m, h, seed=3)
    b = synthesize(m, h, seed=3)
    assert a.trace == b.trace
