import random

import pytest

from hypersynth.hyperspec import parse_spec
from hypersynth.mdp import ModelError
from hypersynth.policyio import dump_policy_tuple, parse_policy_tuple
from hypersynth.product import unfold_memory
from hypersynth.synthesis import PolicyTuple

from util import rand_mdp, rand_tuple

SPEC = "exists (p q); forall x in {0} (p); forall y in {0} (q); Pmax [ F (a@x & a@y) ]"


@pytest.mark.parametrize("bits", [0, 1, 2])
def test_round_trip(bits):
    rng = random.Random(bits)
    h = parse_spec(SPEC)
    for _ in range(20):
        m = rand_mdp(rng, rng.randint(1, 5), 3)
        t = rand_tuple(rng, unfold_memory(m, bits), 2, bits)
        assert parse_policy_tuple(dump_policy_tuple(m, h, t), m, h) == t


def test_uniform_and_defaults():
    rng = random.Random(0)
    m = rand_mdp(rng, 3, 2)
    h = parse_spec(SPEC)
    t = parse_policy_tuple("policy p\n# comment\n1 *\n", m, h)
    assert t.policies[0][1] == "*"
    assert t.policies[1] == {s: m.enabled(s)[0] for s in range(3)}
    text = dump_policy_tuple(m, h, t)
    assert "1 *" in text.splitlines()


@pytest.mark.parametrize("text", [
    "policy z\n0 a0\n",
    "0 a0\n",
    "policy p\n9 a0\n",
    "policy p\n0 zz\n",
    "policy p\n0 a0 1\n",
    "policy p\n0\n",
])
def test_errors(text):
    rng = random.Random(0)
    m = rand_mdp(rng, 3, 2)
    m.state_names = None
    with pytest.raises(ModelError):
        parse_policy_tuple(text, m, parse_spec(SPEC))
