import random

import pytest
from hypothesis import given, settings, strategies as st

from hypersynth.ltl import (
    TRUE, And, Atom, Eventually, Globally, Iff, Implies, LassoWord, LtlSyntaxError, Next, Not, Or, Release,
    Until, Xor, atoms, eval_on_lasso, expand_derived, parse_ltl, retag, state_vars, subformulas, to_nnf, to_str,
)

from util import rand_formula, rand_lasso

T1, T2 = Atom("T", 1), Atom("T", 2)
APS = [Atom("a", 1), Atom("b", 1), Atom("a", 2), Atom("b", 2)]
LETTER_APS = ("ab", "ab")


def naive_eval(f, w: LassoWord, i: int = 0) -> bool:
    """Direct recursion: every future position is visited within len(w) steps."""
    horizon = len(w)

    def future(i):
        out = []
        for _ in range(horizon + 1):
            out.append(i)
            i = w.succ(i)
        return out

    if f == TRUE:
        return True
    if isinstance(f, Atom):
        return f.ap in w.letter(i)[f.tag - 1]
    if isinstance(f, Not):
        return not naive_eval(f.arg, w, i)
    if isinstance(f, Next):
        return naive_eval(f.arg, w, w.succ(i))
    if isinstance(f, Eventually):
        return any(naive_eval(f.arg, w, j) for j in future(i))
    if isinstance(f, Globally):
        return all(naive_eval(f.arg, w, j) for j in future(i))
    a = lambda j: naive_eval(f.left, w, j)
    b = lambda j: naive_eval(f.right, w, j)
    if isinstance(f, And):
        return a(i) and b(i)
    if isinstance(f, Or):
        return a(i) or b(i)
    if isinstance(f, Xor):
        return a(i) != b(i)
    if isinstance(f, Implies):
        return (not a(i)) or b(i)
    if isinstance(f, Iff):
        return a(i) == b(i)
    if isinstance(f, Until):
        for j in future(i):
            if b(j):
                return True
            if not a(j):
                return False
        return False
    if isinstance(f, Release):
        for j in future(i):
            if not b(j):
                return False
            if a(j):
                return True
        return True
    raise TypeError(f)


def test_parse_examples():
    assert parse_ltl("F (T@1 & T@2)") == Eventually(And(T1, T2))
    assert parse_ltl("(!T@1) U T@2") == Until(Not(T1), T2)
    g = parse_ltl("G (T@1 -> T@2)")
    assert g == Globally(Implies(T1, T2))
    assert expand_derived(g) == Globally(Not(And(T1, Not(T2))))


def test_precedence():
    a, b, c = (Atom(x, 1) for x in "abc")
    assert parse_ltl("a@1 | b@1 & c@1") == Or(a, And(b, c))
    assert parse_ltl("a@1 U b@1 & c@1") == And(Until(a, b), c)
    assert parse_ltl("!a@1 U b@1") == Until(Not(a), b)
    assert parse_ltl("a@1 ^ b@1 | c@1") == Xor(a, Or(b, c))
    assert parse_ltl("a@1 -> b@1 -> c@1") == Implies(a, Implies(b, c))


def test_named_tags_and_state_vars():
    f = parse_ltl("F (T@x1 & G S@x2)")
    assert state_vars(f) == {"x1", "x2"}
    g = retag(f, {"x1": 1, "x2": 2})
    assert state_vars(g) == {1, 2}
    assert atoms(g) == {Atom("T", 1), Atom("S", 2)}


@pytest.mark.parametrize("text", ["F (a@1 &", "a@1 U", "G )", "a@", "F a@1 b@1"])
def test_syntax_errors(text):
    with pytest.raises(LtlSyntaxError):
        parse_ltl(text)


def test_unknown_ap_rejected():
    with pytest.raises(LtlSyntaxError):
        parse_ltl("F c@1", aps=["a", "b"])


def test_nnf_dualities():
    a, b = Atom("a", 1), Atom("b", 1)
    assert to_nnf(Not(Eventually(a))) == Globally(Not(a))
    assert to_nnf(Not(Until(a, b))) == Release(Not(a), Not(b))


def test_lasso_examples():
    a, b = Atom("a", 1), Atom("b", 1)
    assert eval_on_lasso(Globally(a), LassoWord.of([], [{"a"}]))
    assert not eval_on_lasso(Eventually(b), LassoWord.of([{"a"}], [set()]))


def test_lasso_arity_mismatch():
    with pytest.raises(ValueError):
        eval_on_lasso(Atom("a", 2), LassoWord.of([], [{"a"}]))
    with pytest.raises(ValueError):
        LassoWord(((frozenset(),),), ())


def test_until_against_unrolling():
    rng = random.Random(2)
    f = Until(Atom("a", 1), Atom("b", 2))
    for _ in range(300):
        w = rand_lasso(rng, LETTER_APS)
        assert eval_on_lasso(f, w) == naive_eval(f, w)


def test_random_formulas_against_recursion():
    rng = random.Random(11)
    for _ in range(300):
        f = rand_formula(rng, 4, APS)
        for _ in range(5):
            w = rand_lasso(rng, LETTER_APS)
            assert eval_on_lasso(f, w) == naive_eval(f, w), (to_str(f), w)


formulas = st.integers(0, 10**6).map(lambda s: rand_formula(random.Random(s), 5, APS))
lassos = st.integers(0, 10**6).map(lambda s: rand_lasso(random.Random(s), LETTER_APS))


@settings(max_examples=200, deadline=None)
@given(formulas, lassos)
def test_nnf_preserves_semantics(f, w):
    assert eval_on_lasso(f, w) == eval_on_lasso(to_nnf(f), w)
    assert eval_on_lasso(f, w) == eval_on_lasso(expand_derived(f), w)


@settings(max_examples=200, deadline=None)
@given(formulas, formulas, lassos)
def test_pointwise_dualities(f, g, w):
    assert eval_on_lasso(Not(Next(f)), w) == eval_on_lasso(Next(Not(f)), w)
    assert eval_on_lasso(Not(Until(f, g)), w) == eval_on_lasso(Release(Not(f), Not(g)), w)


@settings(max_examples=200, deadline=None)
@given(formulas)
def test_print_parse_round_trip(f):
    assert parse_ltl(to_str(f)) == f


def test_subformulas_contains_root_and_leaves():
    f = parse_ltl("F (a@1 U (b@2 & X a@1))")
    subs = subformulas(f)
    assert f in subs and Atom("a", 1) in subs and Atom("b", 2) in subs
