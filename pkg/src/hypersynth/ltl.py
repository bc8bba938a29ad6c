"""LTL over atomic propositions tagged with agent indices.

Atoms are written ``ap@k`` (positional, 1-based) or ``ap@name`` (state
variable, resolved to a position by the hyper front-end).  A letter of a word is
a tuple of label sets, one per agent; ``ap@k`` holds iff ``ap`` is in the
``k``-th set.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence


class LtlSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int | None = None):
        super().__init__(msg if pos is None else f"{msg} at position {pos}")
        self.pos = pos


class Formula:
    __slots__ = ()

    def __str__(self):
        return to_str(self)

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Atom(Formula):
    ap: str
    tag: object = 1  # int position or state-variable name

    def holds(self, letter) -> bool:
        return self.ap in letter[self.tag - 1]


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    arg: Formula


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Xor(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Release(Formula):
    left: Formula
    right: Formula


TRUE = Const(True)
FALSE = Const(False)

UNARY = (Not, Next, Eventually, Globally)
BINARY = (And, Or, Xor, Implies, Iff, Until, Release)
TEMPORAL = (Next, Eventually, Globally, Until, Release)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, UNARY):
        return (f.arg,)
    if isinstance(f, BINARY):
        return (f.left, f.right)
    return ()


def rebuild(f: Formula, kids: Sequence[Formula]) -> Formula:
    if isinstance(f, UNARY):
        return type(f)(kids[0])
    if isinstance(f, BINARY):
        return type(f)(kids[0], kids[1])
    return f


def subformulas(f: Formula) -> list[Formula]:
    """Distinct subformulas, children before parents."""
    seen: dict[Formula, None] = {}

    def visit(g):
        if g in seen:
            return
        for k in children(g):
            visit(k)
        seen[g] = None

    visit(f)
    return list(seen)


def atoms(f: Formula) -> set[Atom]:
    return {g for g in subformulas(f) if isinstance(g, Atom)}


def state_vars(f: Formula) -> set:
    return {a.tag for a in atoms(f)}


def is_propositional(f: Formula) -> bool:
    return not any(isinstance(g, TEMPORAL) for g in subformulas(f))


def retag(f: Formula, mapping: dict) -> Formula:
    """Replace atom tags through ``mapping`` (tags missing from it are kept)."""
    if isinstance(f, Atom):
        return Atom(f.ap, mapping.get(f.tag, f.tag))
    kids = children(f)
    return rebuild(f, [retag(k, mapping) for k in kids]) if kids else f


def conj(fs: Iterable[Formula]) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else And(out, f)
    return TRUE if out is None else out


def disj(fs: Iterable[Formula]) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else Or(out, f)
    return FALSE if out is None else out


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<atom>[A-Za-z_][A-Za-z0-9_.']*@[A-Za-z0-9_]+)"
    r"|(?P<op><->|<=>|->|=>|&&|\|\||[()!~&|^])"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_]*))"
)

_BINOPS = {
    "&": And, "&&": And, "|": Or, "||": Or, "^": Xor, "xor": Xor,
    "->": Implies, "=>": Implies, "<->": Iff, "<=>": Iff, "U": Until, "R": Release,
}
# lower number binds weaker
_PREC = {Iff: 0, Implies: 0, Xor: 1, Or: 2, And: 3, Until: 4, Release: 4}
_RIGHT_ASSOC = {Implies, Until, Release}


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LtlSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}", pos)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, aps):
        self.toks = _tokenize(text)
        self.i = 0
        self.aps = aps

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def binop(self, tok):
        kind, val, _ = tok
        if kind == "op" or (kind == "word" and val in ("U", "R", "xor")):
            return _BINOPS.get(val)
        return None

    def parse(self):
        f = self.expr(0)
        kind, val, pos = self.peek()
        if kind != "eof":
            raise LtlSyntaxError(f"unexpected {val!r}", pos)
        return f

    def expr(self, min_prec):
        left = self.unary()
        while True:
            op = self.binop(self.peek())
            if op is None or _PREC[op] < min_prec:
                return left
            self.take()
            nxt = _PREC[op] if op in _RIGHT_ASSOC else _PREC[op] + 1
            left = op(left, self.expr(nxt))

    def unary(self):
        kind, val, pos = self.take()
        if kind == "op" and val in ("!", "~"):
            return Not(self.unary())
        if kind == "word" and val in ("X", "F", "G"):
            return {"X": Next, "F": Eventually, "G": Globally}[val](self.unary())
        if kind == "op" and val == "(":
            f = self.expr(0)
            k2, v2, p2 = self.take()
            if v2 != ")":
                raise LtlSyntaxError("expected ')'", p2)
            return f
        if kind == "word" and val in ("true", "false"):
            return Const(val == "true")
        if kind == "atom":
            ap, tag = val.rsplit("@", 1)
            if self.aps is not None and ap not in self.aps:
                raise LtlSyntaxError(f"unknown atomic proposition {ap!r}", pos)
            return Atom(ap, int(tag) if tag.isdigit() else tag)
        if kind == "eof":
            raise LtlSyntaxError("unexpected end of formula", pos)
        if kind == "word":
            raise LtlSyntaxError(f"untagged proposition {val!r} (write {val}@k)", pos)
        raise LtlSyntaxError(f"unexpected {val!r}", pos)


def parse_ltl(text: str, aps: Iterable[str] | None = None) -> Formula:
    """Parse ``text``; with ``aps`` given, unknown propositions are rejected."""
    return _Parser(text, None if aps is None else set(aps)).parse()


_SYM = {And: "&", Or: "|", Xor: "^", Implies: "->", Iff: "<->", Until: "U", Release: "R"}
_USYM = {Not: "!", Next: "X ", Eventually: "F ", Globally: "G "}


def to_str(f: Formula) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"{f.ap}@{f.tag}"
    if isinstance(f, UNARY):
        return _USYM[type(f)] + to_str(f.arg)
    return f"({to_str(f.left)} {_SYM[type(f)]} {to_str(f.right)})"


# ---------------------------------------------------------------------------
# normal forms


def expand_derived(f: Formula) -> Formula:
    """Rewrite ->, <->, xor into the core connectives (keeps F, G, R)."""
    kids = [expand_derived(k) for k in children(f)]
    if isinstance(f, Implies):
        return Not(And(kids[0], Not(kids[1])))
    if isinstance(f, Iff):
        a, b = kids
        return Or(And(a, b), And(Not(a), Not(b)))
    if isinstance(f, Xor):
        a, b = kids
        return Or(And(a, Not(b)), And(Not(a), b))
    return rebuild(f, kids) if kids else f


def to_nnf(f: Formula) -> Formula:
    """Negation normal form; F and G are kept, negated U becomes R."""
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Const):
        return Const(f.value != neg)
    if isinstance(f, Atom):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.arg, not neg)
    if isinstance(f, Next):
        return Next(_nnf(f.arg, neg))
    if isinstance(f, Eventually):
        return (Globally if neg else Eventually)(_nnf(f.arg, neg))
    if isinstance(f, Globally):
        return (Eventually if neg else Globally)(_nnf(f.arg, neg))
    if isinstance(f, And):
        return (Or if neg else And)(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Or):
        return (And if neg else Or)(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Until):
        return (Release if neg else Until)(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Release):
        return (Until if neg else Release)(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Implies):
        return _nnf(Or(Not(f.left), f.right), neg)
    if isinstance(f, Xor):
        a, b = f.left, f.right
        return _nnf(Or(And(a, Not(b)), And(Not(a), b)), neg)
    if isinstance(f, Iff):
        a, b = f.left, f.right
        return _nnf(Or(And(a, b), And(Not(a), Not(b))), neg)
    raise TypeError(f"not a formula: {f!r}")


def eval_prop(f: Formula, holds: Callable[[Atom], bool]) -> bool:
    """Evaluate a propositional formula under an atom valuation."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        return holds(f)
    if isinstance(f, Not):
        return not eval_prop(f.arg, holds)
    a = eval_prop(f.left, holds)
    if isinstance(f, And):
        return a and eval_prop(f.right, holds)
    if isinstance(f, Or):
        return a or eval_prop(f.right, holds)
    b = eval_prop(f.right, holds)
    if isinstance(f, Xor):
        return a != b
    if isinstance(f, Implies):
        return (not a) or b
    if isinstance(f, Iff):
        return a == b
    raise ValueError(f"temporal operator in propositional context: {to_str(f)}")


# ---------------------------------------------------------------------------
# lasso words


@dataclass(frozen=True)
class LassoWord:
    """The infinite word ``prefix loop loop loop ...``; letters are tuples of sets."""

    prefix: tuple
    loop: tuple

    def __post_init__(self):
        if not self.loop:
            raise ValueError("lasso loop must be non-empty")
        arities = {len(x) for x in self.prefix + self.loop}
        if len(arities) != 1:
            raise ValueError("lasso letters differ in arity")

    @classmethod
    def of(cls, prefix: Iterable, loop: Iterable) -> "LassoWord":
        norm = lambda x: tuple(frozenset(c) for c in (x if isinstance(x, tuple) else (x,)))
        return cls(tuple(norm(x) for x in prefix), tuple(norm(x) for x in loop))

    @property
    def arity(self) -> int:
        return len(self.loop[0])

    def __len__(self):
        return len(self.prefix) + len(self.loop)

    def letter(self, i: int):
        if i < len(self.prefix):
            return self.prefix[i]
        return self.loop[(i - len(self.prefix)) % len(self.loop)]

    def succ(self, i: int) -> int:
        return i + 1 if i + 1 < len(self) else len(self.prefix)


def eval_on_lasso(f: Formula, w: LassoWord) -> bool:
    """Truth of ``f`` at position 0 of ``w``.

    Values are computed for every subformula at every distinct position of the
    lasso; U/F are least and R/G greatest fixpoints along the successor map.
    """
    for tag in state_vars(f):
        if not isinstance(tag, int) or not 1 <= tag <= w.arity:
            raise ValueError(f"atom index {tag!r} outside letter arity {w.arity}")
    n = len(w)
    nxt = [w.succ(i) for i in range(n)]
    letters = [w.letter(i) for i in range(n)]
    val: dict[Formula, list[bool]] = {}

    def fix(step, init):
        cur = [init] * n
        while True:
            new = [step(i, cur) for i in range(n)]
            if new == cur:
                return cur
            cur = new

    for g in subformulas(f):
        if isinstance(g, Const):
            v = [g.value] * n
        elif isinstance(g, Atom):
            v = [g.holds(x) for x in letters]
        elif isinstance(g, Not):
            v = [not x for x in val[g.arg]]
        elif isinstance(g, Next):
            a = val[g.arg]
            v = [a[nxt[i]] for i in range(n)]
        elif isinstance(g, Eventually):
            a = val[g.arg]
            v = fix(lambda i, c: a[i] or c[nxt[i]], False)
        elif isinstance(g, Globally):
            a = val[g.arg]
            v = fix(lambda i, c: a[i] and c[nxt[i]], True)
        else:
            a, b = val[g.left], val[g.right]
            if isinstance(g, And):
                v = [x and y for x, y in zip(a, b)]
            elif isinstance(g, Or):
                v = [x or y for x, y in zip(a, b)]
            elif isinstance(g, Xor):
                v = [x != y for x, y in zip(a, b)]
            elif isinstance(g, Implies):
                v = [(not x) or y for x, y in zip(a, b)]
            elif isinstance(g, Iff):
                v = [x == y for x, y in zip(a, b)]
            elif isinstance(g, Until):
                v = fix(lambda i, c: b[i] or (a[i] and c[nxt[i]]), False)
            elif isinstance(g, Release):
                v = fix(lambda i, c: b[i] and (a[i] or c[nxt[i]]), True)
            else:
                raise TypeError(g)
        val[g] = v
    return val[f][0]
