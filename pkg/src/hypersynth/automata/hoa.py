"""Reading and writing deterministic Rabin automata in HOA v1 format.

Pair ``i`` is written as ``Fin(2i) & Inf(2i+1)`` with state-based marks.  The
reader accepts any Rabin-shaped acceptance condition, explicit edge labels,
state- or transition-based marks, and completes partial automata with a
rejecting sink.
"""
from __future__ import annotations

import re

from ..ltl import Atom, Const, Not, And, Or, Formula
from .dra import Dra
from .guards import cube_to_str, prop_cubes, split


class HoaError(ValueError):
    pass


def dump_hoa(d: Dra, name: str | None = None) -> str:
    lines = ["HOA: v1"]
    if name:
        lines.append(f'name: "{name}"')
    lines.append(f"States: {d.num_states}")
    lines.append(f"Start: {d.init}")
    aps = " ".join(f'"{a.ap}@{a.tag}"' for a in d.atoms)
    lines.append(f"AP: {len(d.atoms)}" + (" " + aps if aps else ""))
    lines.append(f"agents: {d.arity}")
    m = len(d.pairs)
    lines.append(f"acc-name: Rabin {m}")
    cond = " | ".join(f"(Fin({2 * i}) & Inf({2 * i + 1}))" for i in range(m))
    lines.append(f"Acceptance: {2 * m} {cond}")
    lines.append("properties: trans-labels explicit-labels state-acc deterministic complete")
    lines.append("--BODY--")
    for q in range(d.num_states):
        marks = []
        for i, (L, K) in enumerate(d.pairs):
            if q in L:
                marks.append(2 * i)
            if q in K:
                marks.append(2 * i + 1)
        lines.append(f"State: {q}" + (" {" + " ".join(map(str, marks)) + "}" if marks else ""))
        for p, n, t in d.edges[q]:
            lines.append(f"[{cube_to_str((p, n))}] {t}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"


def write_hoa(d: Dra, path, name: str | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dump_hoa(d, name))


# ---------------------------------------------------------------------------
# reading

_LABEL_TOKEN = re.compile(r"\s*(\d+|[!&|()]|t|f)")


def _parse_label(text: str, atoms) -> Formula:
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _LABEL_TOKEN.match(text, pos)
        if not m:
            raise HoaError(f"bad edge label {text!r}")
        toks.append(m.group(1))
        pos = m.end()
    toks.append(None)
    i = 0

    def peek():
        return toks[i]

    def take():
        nonlocal i
        i += 1
        return toks[i - 1]

    def disj():
        f = conj()
        while peek() == "|":
            take()
            f = Or(f, conj())
        return f

    def conj():
        f = unary()
        while peek() == "&":
            take()
            f = And(f, unary())
        return f

    def unary():
        tok = take()
        if tok == "!":
            return Not(unary())
        if tok == "(":
            f = disj()
            if take() != ")":
                raise HoaError(f"unbalanced parentheses in label {text!r}")
            return f
        if tok in ("t", "f"):
            return Const(tok == "t")
        if tok is not None and tok.isdigit():
            k = int(tok)
            if k >= len(atoms):
                raise HoaError(f"label mentions AP {k} but only {len(atoms)} declared")
            return atoms[k]
        raise HoaError(f"bad edge label {text!r}")

    f = disj()
    if peek() is not None:
        raise HoaError(f"trailing input in label {text!r}")
    return f


_PAIR = re.compile(r"^\(?\s*(Fin|Inf)\((\d+)\)\s*&\s*(Fin|Inf)\((\d+)\)\s*\)?$")


def _parse_rabin(cond: str):
    """Acceptance expression -> list of (fin set id or None, inf set id)."""
    cond = cond.strip()
    if cond == "f":
        return []
    pairs = []
    for part in _split_top(cond):
        part = part.strip()
        m = _PAIR.match(part)
        if m:
            (k1, a), (k2, b) = (m.group(1), int(m.group(2))), (m.group(3), int(m.group(4)))
            if {k1, k2} != {"Fin", "Inf"}:
                raise HoaError(f"non-Rabin acceptance term {part!r}")
            pairs.append((a, b) if k1 == "Fin" else (b, a))
            continue
        m = re.match(r"^\(?\s*Inf\((\d+)\)\s*\)?$", part)
        if m:
            pairs.append((None, int(m.group(1))))
            continue
        raise HoaError(f"non-Rabin acceptance term {part!r}")
    return pairs


def _split_top(s: str):
    depth, cur, out = 0, "", []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "|" and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return out


def _atom_from_name(name: str) -> Atom:
    m = re.match(r"^(.*)@(\d+)$", name)
    if m:
        return Atom(m.group(1), int(m.group(2)))
    return Atom(name, 1)


def parse_hoa(text: str) -> Dra:
    if "--BODY--" not in text:
        raise HoaError("missing --BODY--")
    head, body = text.split("--BODY--", 1)
    body = body.split("--END--", 1)[0]
    header = {}
    atoms = ()
    for line in head.splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, val = line.split(":", 1)
        val = val.strip()
        if key == "AP":
            parts = val.split(None, 1)
            names = re.findall(r'"((?:[^"\\]|\\.)*)"', parts[1] if len(parts) > 1 else "")
            if len(names) != int(parts[0]):
                raise HoaError("AP count does not match the listed names")
            atoms = tuple(_atom_from_name(x) for x in names)
        elif key == "Start":
            if "Start" in header:
                raise HoaError("multiple initial states are not deterministic")
            if "&" in val:
                raise HoaError("conjunctive initial states are not supported")
        header.setdefault(key, val)
    if header.get("HOA") != "v1":
        raise HoaError("expected 'HOA: v1'")
    if "Acceptance" not in header:
        raise HoaError("missing Acceptance header")
    acc_name = header.get("acc-name", "Rabin").split()
    if acc_name and acc_name[0] != "Rabin":
        raise HoaError(f"unsupported acceptance {acc_name[0]!r} (only Rabin)")
    arity = int(header["agents"]) if "agents" in header else None
    acc = header["Acceptance"].split(None, 1)
    rabin = _parse_rabin(acc[1] if len(acc) > 1 else "")
    n_states = int(header["States"]) if "States" in header else None
    start = int(header.get("Start", 0))

    state_marks, trans = {}, {}
    cur = None
    for line in body.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("State:"):
            m = re.match(r"State:\s*(\[[^\]]*\])?\s*(\d+)\s*(\"[^\"]*\")?\s*(\{[^}]*\})?", line)
            if not m:
                raise HoaError(f"bad state line {line!r}")
            if m.group(1):
                raise HoaError("state labels are not supported")
            cur = int(m.group(2))
            state_marks[cur] = _marks(m.group(4))
            trans.setdefault(cur, [])
            continue
        if cur is None:
            raise HoaError(f"edge before any State: line: {line!r}")
        m = re.match(r"(\[[^\]]*\])?\s*([\d&\s]+?)\s*(\{[^}]*\})?$", line)
        if not m:
            raise HoaError(f"bad edge line {line!r}")
        if not m.group(1):
            raise HoaError("implicit edge labels are not supported")
        dst = m.group(2).strip()
        if "&" in dst or " " in dst:
            raise HoaError("alternating edges are not supported")
        f = _parse_label(m.group(1)[1:-1], atoms)
        trans[cur].append((f, int(dst), _marks(m.group(3))))
    if n_states is None:
        n_states = max(list(trans) + [t for es in trans.values() for _, t, _ in es] + [start]) + 1
    for q in range(n_states):
        trans.setdefault(q, [])
        state_marks.setdefault(q, frozenset())

    # transition-based marks are moved onto copies of the target state
    if any(mk for es in trans.values() for _, _, mk in es):
        states = {(start, state_marks[start]): 0}
        order = [(start, state_marks[start])]
        edges_out = []
        i = 0
        while i < len(order):
            q, _ = order[i]
            i += 1
            row = []
            for f, t, mk in trans[q]:
                key = (t, state_marks[t] | mk)
                if key not in states:
                    states[key] = len(order)
                    order.append(key)
                row.append((f, states[key]))
            edges_out.append(row)
        marks = [mk for _, mk in order]
        rows = edges_out
        init = 0
    else:
        marks = [state_marks[q] for q in range(n_states)]
        rows = [[(f, t) for f, t, _ in trans[q]] for q in range(n_states)]
        init = start
    return _build(atoms, rows, marks, rabin, init, arity)


def _marks(text):
    if not text:
        return frozenset()
    return frozenset(int(x) for x in text.strip("{}").split())


def _build(atoms, rows, marks, rabin, init, arity=None) -> Dra:
    n = len(rows)
    sink = None
    edges = []
    for q, row in enumerate(rows):
        cubes = []
        for f, t in row:
            cubes += [(c, t) for c, v in prop_cubes(f, atoms) if v]
        out = []
        for cube, enabled in split([c for c, _ in cubes]):
            targets = {cubes[e][1] for e in enabled}
            if len(targets) > 1:
                raise HoaError(f"state {q} is nondeterministic")
            if not targets:
                if sink is None:
                    sink = n
                targets = {sink}
            out.append((cube[0], cube[1], targets.pop()))
        edges.append(tuple(out))
    if sink is not None:
        edges.append(((0, 0, sink),))
        marks = list(marks) + [frozenset()]
    total = len(edges)
    pairs = []
    for fin, inf in rabin:
        L = frozenset(q for q in range(total) if fin is not None and fin in marks[q])
        K = frozenset(q for q in range(total) if inf in marks[q])
        pairs.append((L, K))
    if not pairs:
        pairs = [(frozenset(), frozenset())]
    need = max((a.tag for a in atoms), default=1)
    if arity is None:
        arity = need
    elif arity < need:
        raise HoaError(f"AP index {need} exceeds the declared agent count {arity}")
    return Dra(tuple(atoms), total, init, tuple(edges), tuple(pairs), arity)


def read_hoa(path) -> Dra:
    with open(path) as fh:
        return parse_hoa(fh.read())
