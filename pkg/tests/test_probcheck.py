import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypersynth.automata import ltl_to_dra
from hypersynth.hyperspec import Bindings
from hypersynth.ltl import parse_ltl
from hypersynth.mdp import Mdp, induce_mc
from hypersynth.probcheck import (
    expected_total_reward, mc_satisfaction_probability, mec_decomposition, optimal_reachability,
    max_total_reward, rabin_optimal_policy,
)
from hypersynth.product import sync_product

from util import all_policies, enum_reachability, rand_mc, rand_mdp, reach_by_iteration


def graph_reach(m, src, allowed_choices):
    seen, todo = {src}, [src]
    while todo:
        s = todo.pop()
        for c in allowed_choices.get(s, ()):
            for t, _ in m.successors(c):
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
    return seen


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_reachability_against_enumeration(seed):
    rng = random.Random(seed)
    m = rand_mdp(rng, rng.randint(2, 5), 3, max_succ=3)
    target = np.array([rng.random() < 0.3 for _ in range(m.num_states)])
    emax, emin = enum_reachability(m, target)
    vmax, pmax = optimal_reachability(m, target, "max")
    vmin, pmin = optimal_reachability(m, target, "min")
    assert np.allclose(vmax, emax, atol=1e-6)
    assert np.allclose(vmin, emin, atol=1e-6)
    # the returned policies attain the values
    assert np.allclose(reach_by_iteration(induce_mc(m, pmax), target), vmax, atol=1e-6)
    assert np.allclose(reach_by_iteration(induce_mc(m, pmin), target), vmin, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_mec_decomposition_invariants(seed):
    rng = random.Random(seed)
    m = rand_mdp(rng, rng.randint(1, 6), 2, max_succ=2)
    mecs = mec_decomposition(m)
    covered = set()
    for mec in mecs:
        assert not covered & mec.states
        covered |= mec.states
        assert set(mec.choices) == set(mec.states)
        for s, cs in mec.choices.items():
            assert cs
            for c in cs:
                # closed: retained choices stay inside
                assert {t for t, _ in m.successors(c)} <= mec.states
        for s in mec.states:
            # strongly connected under the retained choices
            assert graph_reach(m, s, mec.choices) == set(mec.states)
    # maximality: every closed choice between two states of a MEC is retained
    for mec in mecs:
        for s in mec.states:
            for c in m.choices(s):
                if {t for t, _ in m.successors(c)} <= mec.states:
                    assert c in mec.choices[s]
    # a state outside every MEC has no end component through it: check with single-state loops
    for s in set(range(m.num_states)) - covered:
        for c in m.choices(s):
            assert {t for t, _ in m.successors(c)} != {s}


def test_mec_simple_cases():
    m = Mdp.from_choices(3, ["a", "b"], {(0, 0): {0: 1.0}, (0, 1): {1: 1.0}, (1, 0): {0: 0.5, 2: 0.5},
                                         (2, 0): {2: 1.0}}, {}, [])
    mecs = sorted(mec_decomposition(m), key=lambda x: min(x.states))
    assert [set(x.states) for x in mecs] == [{0}, {2}]
    assert mecs[0].actions(m) == {0: (0,)}


def chain_formula_oracle(mc, text, init):
    """Single-agent F/G/U probabilities by reachability in the chain."""
    a = np.array(["a" in lab for lab in mc.labels])
    b = np.array(["b" in lab for lab in mc.labels])
    if text == "F a@1":
        return reach_by_iteration(mc, a)[init]
    if text == "G a@1":
        return 1.0 - reach_by_iteration(mc, ~a)[init]
    if text == "a@1 U b@1":
        sub = _cut(mc, ~a & ~b)
        return reach_by_iteration(sub, b)[init]
    raise ValueError(text)


def _cut(mc, dead):
    """Chain with the ``dead`` states made absorbing."""
    trans = {}
    for s in range(mc.num_states):
        row = dict(mc.successors(s)) if not dead[s] else {s: 1.0}
        trans[(s, 0)] = row
    return Mdp.from_choices(mc.num_states, ["t"], trans, dict(enumerate(mc.labels)), mc.ap)


@pytest.mark.parametrize("text", ["F a@1", "G a@1", "a@1 U b@1"])
def test_chain_probability_simple_formulas(text):
    rng = random.Random(len(text))
    d = ltl_to_dra(parse_ltl(text), arity=1)
    for _ in range(25):
        mc = rand_mc(rng, rng.randint(1, 6))
        init = rng.randrange(mc.num_states)
        got = mc_satisfaction_probability(mc, d, (init,))
        assert got == pytest.approx(chain_formula_oracle(mc, text, init), abs=1e-8)


def test_chain_probability_recurrence():
    # G F a holds exactly on runs ending in a bottom SCC that contains an a-state
    rng = random.Random(11)
    d = ltl_to_dra(parse_ltl("G F a@1"), arity=1)
    for _ in range(25):
        mc = rand_mc(rng, rng.randint(1, 6))
        P = mc.matrix.toarray() > 0
        reach = P | np.eye(mc.num_states, dtype=bool)
        for _ in range(mc.num_states):
            reach = reach | (reach.astype(int) @ reach.astype(int) > 0)
        bottom = [s for s in range(mc.num_states) if all(reach[t, s] for t in np.flatnonzero(reach[s]))]
        good = np.zeros(mc.num_states, dtype=bool)
        for s in bottom:
            scc = np.flatnonzero(reach[s])
            if any("a" in mc.labels[t] for t in scc):
                good[s] = True
        init = rng.randrange(mc.num_states)
        want = reach_by_iteration(mc, good)[init]
        assert mc_satisfaction_probability(mc, d, (init,)) == pytest.approx(want, abs=1e-8)


def test_chain_probability_exact():
    mc = Mdp.from_choices(3, ["t"], {(0, 0): {1: Fraction(1, 3), 2: Fraction(2, 3)}, (1, 0): {1: 1},
                                     (2, 0): {2: 1}}, {1: {"a"}}, ["a"])
    d = ltl_to_dra(parse_ltl("F a@1"), arity=1)
    assert mc_satisfaction_probability(mc, d, (0,), exact=True) == Fraction(1, 3)
    two = ltl_to_dra(parse_ltl("F (a@1 & a@2)"), arity=2)
    assert mc_satisfaction_probability(mc, two, (0, 0), exact=True) == Fraction(1, 9)


def test_chain_probability_rejects_mdp():
    rng = random.Random(0)
    m = rand_mdp(rng, 3, 2)
    while m.is_mc():
        m = rand_mdp(rng, 3, 2)
    with pytest.raises(ValueError):
        mc_satisfaction_probability(m, ltl_to_dra(parse_ltl("F a@1"), arity=1), (0,))


RABIN = ["F a@1", "G F a@1", "F G !b@1", "G F a@1 & G F b@1", "F G a@1 | G F b@1", "G (a@1 -> X b@1)"]


@pytest.mark.parametrize("text", RABIN)
def test_rabin_optimum_against_enumeration(text):
    rng = random.Random(hash(text) % 1000)
    d = ltl_to_dra(parse_ltl(text), arity=1)
    done = 0
    while done < 6:
        m = rand_mdp(rng, rng.randint(2, 4), 2)
        p = sync_product(m, d, Bindings(1, (0,), (0,)))
        if np.prod([len(p.enabled(s)) for s in range(p.num_states)]) > 400:
            continue
        done += 1
        vals = [mc_satisfaction_probability(induce_mc(p, pol), d, 0) for pol in all_policies(p)]
        vmax, pol_max = rabin_optimal_policy(p, "max")
        vmin, pol_min = rabin_optimal_policy(p, "min")
        assert vmax == pytest.approx(max(vals), abs=1e-6)
        assert vmin == pytest.approx(min(vals), abs=1e-6)
        assert mc_satisfaction_probability(induce_mc(p, pol_max), d, 0) == pytest.approx(vmax, abs=1e-6)
        assert mc_satisfaction_probability(induce_mc(p, pol_min), d, 0) == pytest.approx(vmin, abs=1e-6)


def _chain_reward(mc, rew, goal):
    """Expected reward until ``goal`` per state of a chain (inf unless reached surely)."""
    n = mc.num_states
    reach = reach_by_iteration(mc, goal)
    sure = (reach > 1 - 1e-9) | goal
    out = np.full(n, np.inf)
    idx = [s for s in range(n) if sure[s] and not goal[s]]
    out[goal] = 0.0
    if idx:
        P = mc.matrix.toarray()[np.ix_(idx, idx)]
        r = np.array([rew[s] for s in idx])
        out[idx] = np.linalg.solve(np.eye(len(idx)) - P, r)
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_min_reward_against_enumeration(seed):
    rng = random.Random(seed)
    m = rand_mdp(rng, rng.randint(2, 5), 2, max_succ=2)
    rew = np.array([rng.choice([0.0, 0.5, 1.0, 2.0]) for _ in range(m.num_choices)])
    goal = np.array([rng.random() < 0.35 for _ in range(m.num_states)])
    best = np.full(m.num_states, np.inf)
    for pol in all_policies(m):
        mc = induce_mc(m, pol)
        per_state = np.array([rew[m.choice_of(s, pol[s])] for s in range(m.num_states)])
        best = np.minimum(best, _chain_reward(mc, per_state, goal))
    vals, pol = expected_total_reward(m, rew, goal, "min")
    assert np.array_equal(np.isinf(vals), np.isinf(best))
    fin = np.isfinite(best)
    assert np.allclose(vals[fin], best[fin], atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_max_reward_against_enumeration(seed):
    rng = random.Random(seed)
    m = rand_mdp(rng, rng.randint(2, 5), 2, max_succ=2)
    rew = np.array([rng.choice([0.0, 0.5, 1.0, 2.0]) for _ in range(m.num_choices)])
    goal = np.array([rng.random() < 0.35 for _ in range(m.num_states)])
    best = np.zeros(m.num_states)
    for pol in all_policies(m):
        mc = induce_mc(m, pol)
        per_state = np.array([rew[m.choice_of(s, pol[s])] for s in range(m.num_states)])
        best = np.maximum(best, _chain_reward(mc, per_state, goal))
    vals, pol = expected_total_reward(m, rew, goal, "max")
    assert np.array_equal(np.isinf(vals), np.isinf(best))
    fin = np.isfinite(best)
    assert np.allclose(vals[fin], best[fin], atol=1e-6)
    # the returned policy attains the optimum
    mc = induce_mc(m, pol)
    per_state = np.array([rew[m.choice_of(s, pol[s])] for s in range(m.num_states)])
    got = _chain_reward(mc, per_state, goal)
    assert np.array_equal(np.isinf(got), np.isinf(best))
    assert np.allclose(got[fin], best[fin], atol=1e-6)


def test_max_total_reward():
    # 0 -go-> 1 (reward 1) and 1 loops; 0 -spin-> 2 which loops with reward 1
    m = Mdp.from_choices(3, ["go", "spin"], {(0, 0): {1: 1.0}, (0, 1): {2: 1.0}, (1, 0): {1: 1.0},
                                             (2, 0): {2: 1.0}}, {}, [])
    rew = np.zeros(m.num_choices)
    rew[m.choice_of(0, 0)] = 1.0
    vals, pol = max_total_reward(m, rew)
    assert vals.tolist() == [1.0, 0.0, 0.0]
    rew[m.choice_of(2, 0)] = 0.5
    vals, pol = max_total_reward(m, rew)
    assert vals.tolist() == [np.inf, 0.0, np.inf]
