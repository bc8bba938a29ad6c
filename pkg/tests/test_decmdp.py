import random
from collections import defaultdict

import numpy as np
import pytest

from hypersynth.benchgen import GridParams, gen_benchmark
from hypersynth.decmdp import centralized_value, dump_dpomdp, export_dpomdp, parse_dpomdp, read_dpomdp
from hypersynth.hyperspec import SpecError, parse_spec
from hypersynth.mdp import Mdp
from hypersynth.probcheck import rabin_optimal_policy
from hypersynth.synthesis import build_problem

from util import rand_mdp


def product_for(m, text):
    h = parse_spec(text)
    return build_problem(m, h).tasks[0].product, h


def row_sums(model):
    sums = defaultdict(float)
    for c in range(model.mdp.num_choices):
        sums[c] = sum(p for _, p in model.mdp.successors(c))
    return np.array(list(sums.values()))


def test_two_state_meet():
    m = Mdp.from_choices(2, ["stay", "go"], {(0, 0): {0: 1.0}, (0, 1): {0: 0.5, 1: 0.5}, (1, 0): {1: 1.0},
                                             (1, 1): {1: 1.0}}, {1: {"T"}}, ["T"])
    p, h = product_for(m, "exists (s1 s2); forall x1 in {0} (s1); forall x2 in {0} (s2); "
                          "Pmax [ F (T@x1 & T@x2) ]")
    text = dump_dpomdp(p, h)
    assert "agents: 3" in text and "dead" not in text
    model = parse_dpomdp(text)
    assert model.agents == 3
    assert model.actions == [["stay", "go"], ["stay", "go"], ["noop"]]
    assert model.states[model.start] == "s0_s0_q" + str(int(p.auto[p.initial]))
    assert np.allclose(row_sums(model), 1.0, atol=1e-12)
    assert centralized_value(model) == pytest.approx(1.0)


def test_dead_state_for_disabled_actions():
    m = Mdp.from_choices(2, ["a", "b"], {(0, 0): {1: 0.5, 0: 0.5}, (0, 1): {0: 1.0}, (1, 0): {1: 1.0}},
                         {1: {"T"}}, ["T"])
    p, h = product_for(m, "exists (s1 s2); forall x1 in {0} (s1); forall x2 in {0} (s2); "
                          "Pmax [ F (T@x1 & T@x2) ]")
    model = parse_dpomdp(dump_dpomdp(p, h))
    assert "dead" in model.states
    assert np.allclose(row_sums(model), 1.0, atol=1e-12)
    assert centralized_value(model) == pytest.approx(rabin_optimal_policy(p)[0], abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_random_round_trip(seed):
    rng = random.Random(seed)
    m = rand_mdp(rng, rng.randint(2, 4), rng.randint(1, 2))
    text = f"exists (s1 s2); forall x1 in {{0}} (s1); forall x2 in {{{m.num_states - 1}}} (s2); " \
           "Pmax [ (!b@x1) U (a@x1 & a@x2) ]"
    p, h = product_for(m, text)
    model = parse_dpomdp(dump_dpomdp(p, h))
    assert np.allclose(row_sums(model), 1.0, atol=1e-12)
    assert len(model.observations) == 3
    assert centralized_value(model) == pytest.approx(rabin_optimal_policy(p)[0], abs=1e-6)


def test_rejects_shared_policy_variable():
    g = GridParams("iso", 3, 3, ((0, 0), (2, 2)), (1, 1))
    m, text = gen_benchmark(g)
    h = parse_spec(text)
    p = build_problem(m, h).tasks[0].product
    with pytest.raises(SpecError):
        dump_dpomdp(p, h)


def test_rejects_reward_objective():
    g = GridParams("meetR", 2, 2, ((0, 0), (1, 1)), (1, 0))
    m, text = gen_benchmark(g)
    h = parse_spec(text)
    p = build_problem(m, h).tasks[0].product
    with pytest.raises(SpecError):
        dump_dpomdp(p, h)


def test_export_file(tmp_path):
    g = GridParams("meet", 2, 2, ((0, 0), (1, 1)), (1, 0), slip=0.1)
    m, text = gen_benchmark(g)
    h = parse_spec(text)
    p = build_problem(m, h).tasks[0].product
    out = tmp_path / "meet.dpomdp"
    export_dpomdp(p, h, out)
    model = read_dpomdp(out)
    assert len(model.states) >= p.num_states
    assert centralized_value(model) == pytest.approx(rabin_optimal_policy(p)[0], abs=1e-6)
