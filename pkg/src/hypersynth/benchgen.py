"""Grid-world benchmark family: agent MDPs and matching specifications.

Cells are ``(x, y)`` with ``y = 0`` the bottom row.  Each free cell offers the
four moves ``N E S W``.  A move succeeds with probability ``1 - slip - trap``,
slips to the right of the intended heading (N->E, E->S, S->W, W->N) with
probability ``slip``, and falls into the absorbing ``trap`` state (label ``S``)
with probability ``trap``.  Moves blocked by the border or an obstacle leave
the agent in place.

Some kinds enrich the agent state:

* ``robust``: the state remembers whether the last move slipped (label ``sl``);
* ``opac``: the state echoes the last chosen action (labels ``aN`` .. ``aW``);
* ``race-k``: the target is absorbing, so ``T`` means "has arrived".
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

from .hyperspec import check_well_formed, parse_spec
from .mdp import Mdp, dump_model, validate_mdp

MOVES = ("N", "E", "S", "W")
_DELTA = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
_RIGHT = {"N": "E", "E": "S", "S": "W", "W": "N"}
KINDS = ("meet", "meetR", "race", "opac", "iso", "robust", "noninter")


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class GridParams:
    kind: str
    width: int
    height: int
    starts: tuple  # one cell per agent start (race-k: k cells)
    target: tuple
    obstacles: frozenset = frozenset()
    slip: float = 0.1
    trap: float | tuple = 0.0  # one value, or one per move
    regions: tuple | None = None  # per-column region ids for opacity
    name: str = ""

    @property
    def base_kind(self) -> str:
        return "race" if self.kind.startswith("race") else self.kind

    @property
    def race_agents(self) -> int:
        if self.base_kind != "race":
            return 0
        tail = self.kind.split("-", 1)[1] if "-" in self.kind else ""
        return int(tail) if tail else len(self.starts)

    def trap_of(self, move: str) -> float:
        if isinstance(self.trap, (int, float)):
            return float(self.trap)
        return float(self.trap[MOVES.index(move)])

    def region(self, cell) -> int:
        if self.regions is None:
            return 0 if cell[0] < (self.width + 1) // 2 else 1
        return int(self.regions[cell[0]])

    def free(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and cell not in self.obstacles


def check_params(g: GridParams) -> list[str]:
    out = []
    if g.base_kind not in KINDS:
        out.append(f"unknown benchmark kind {g.kind!r}")
    if g.width < 1 or g.height < 1:
        out.append("grid must have positive dimensions")
    if not 0 <= g.slip < 1:
        out.append("slip probability must lie in [0, 1)")
    traps = [g.trap_of(a) for a in MOVES]
    if any(not 0 <= t < 1 for t in traps):
        out.append("trap probability must lie in [0, 1)")
    if any(g.slip + t >= 1 for t in traps):
        out.append("slip + trap must be below 1")
    for c in tuple(g.starts) + (tuple(g.target),):
        if not g.free(tuple(c)):
            out.append(f"cell {tuple(c)} is not a free cell")
    need = {"race": g.race_agents, "noninter": 2, "robust": 1}.get(g.base_kind, 2)
    if g.base_kind == "race" and need < 2:
        out.append("race needs at least two agents")
    if len(g.starts) != need:
        out.append(f"{g.kind} needs {need} start cells, got {len(g.starts)}")
    return out


def _step(g: GridParams, cell, move):
    dx, dy = _DELTA[move]
    nxt = (cell[0] + dx, cell[1] + dy)
    return nxt if g.free(nxt) else cell


def _outcomes(g: GridParams, cell, move):
    """``(cell or None for trap, slipped, probability)`` triples."""
    trap = g.trap_of(move)
    out = {}
    for c, slipped, p in ((_step(g, cell, move), False, 1.0 - g.slip - trap),
                          (_step(g, cell, _RIGHT[move]), True, g.slip),
                          (None, False, trap)):
        if p > 0:
            # a slip that lands where the intended move would have is no slip
            if c is not None and slipped and c == _step(g, cell, move):
                slipped = False
            key = (c, slipped)
            out[key] = out.get(key, 0.0) + p
    return [(c, s, p) for (c, s), p in out.items()]


def gen_mdp(g: GridParams) -> Mdp:
    problems = check_params(g)
    if problems:
        raise BenchError("; ".join(problems))
    kind = g.base_kind
    target = tuple(g.target)
    cells = [(x, y) for y in range(g.height) for x in range(g.width) if g.free((x, y))]

    # state = (cell, extra); extra is the slip flag (robust), the last action
    # (opac) or None
    if kind == "robust":
        extras = (False, True)
    elif kind == "opac":
        extras = (None,) + MOVES
    else:
        extras = (None,)

    def succ_extra(move, slipped):
        if kind == "robust":
            return slipped
        if kind == "opac":
            return move
        return None

    init_extra = False if kind == "robust" else None
    absorbing_target = kind == "race"
    # reachable fragment from the start cells (every cell when no extras)
    if extras == (None,):
        order = [(c, None) for c in cells]
    else:
        order, seen = [], set()
        todo = [(tuple(c), init_extra) for c in g.starts]
        while todo:
            st = todo.pop()
            if st in seen:
                continue
            seen.add(st)
            order.append(st)
            if absorbing_target and st[0] == target:
                continue
            for move in MOVES:
                for c, slipped, _ in _outcomes(g, st[0], move):
                    if c is not None:
                        todo.append((c, succ_extra(move, slipped)))
        order.sort(key=lambda st: (cells.index(st[0]), extras.index(st[1])))
    index = {st: i for i, st in enumerate(order)}
    trap = len(order)
    n = trap + 1

    trans, cost = {}, {}
    for st, i in index.items():
        cell = st[0]
        for a, move in enumerate(MOVES):
            if absorbing_target and cell == target:
                trans[(i, a)] = {i: 1.0}
                continue
            row = {}
            for c, slipped, p in _outcomes(g, cell, move):
                j = trap if c is None else index[(c, succ_extra(move, slipped))]
                row[j] = row.get(j, 0.0) + p
            trans[(i, a)] = row
            cost[(i, a)] = 1.0
    for a in range(len(MOVES)):
        trans[(trap, a)] = {trap: 1.0}

    labels, names = [], []
    for cell, extra in order:
        lab = {f"r{g.region(cell)}"} if kind == "opac" else set()
        if cell == target:
            lab |= {"T", "goal"}
        if kind == "robust" and extra:
            lab.add("sl")
        if kind == "opac" and extra is not None:
            lab.add(f"a{extra}")
        labels.append(frozenset(lab))
        suffix = "" if extra is None else (f"_a{extra}" if kind == "opac" else ("_sl" if extra else ""))
        names.append(f"x{cell[0]}y{cell[1]}{suffix}")
    labels.append(frozenset({"S"}))
    names.append("trap")
    ap = ["T", "goal", "S"]
    if kind == "robust":
        ap.append("sl")
    if kind == "opac":
        ap += [f"a{mv}" for mv in MOVES] + sorted({f"r{g.region(c)}" for c in cells})
    rewards = {"cost": cost} if kind == "meetR" else None
    m = Mdp.from_choices(n, MOVES, trans, labels, ap, rewards, names)
    problems = validate_mdp(m)
    if problems:
        raise BenchError("generated model is invalid: " + "; ".join(problems[:3]))
    return m


def start_name(g: GridParams, i: int) -> str:
    x, y = g.starts[i]
    return f"x{x}y{y}"


def gen_spec(g: GridParams) -> str:
    kind = g.base_kind
    s = [start_name(g, i) for i in range(len(g.starts))]
    if kind in ("meet", "meetR"):
        head = f"exists (s1 s2);\nforall x1 in {{{s[0]}}} (s1);\nforall x2 in {{{s[1]}}} (s2);\n"
        if kind == "meet":
            return head + "Pmax [ F (T@x1 & T@x2) ]\n"
        return head + "Rmin{cost@x1} [ F (T@x1 & T@x2) ]\n"
    if kind == "race":
        k = g.race_agents
        pv = " ".join(f"s{i}" for i in range(1, k + 1))
        lines = [f"exists ({pv});"] + [f"forall x{i} in {{{s[i - 1]}}} (s{i});" for i in range(1, k + 1)]
        # agent k arrives first, then k-1, ..., agent 1 last
        parts = [f"F T@x{i}" for i in range(1, k + 1)]
        parts += [f"G (T@x{i} -> T@x{i + 1})" for i in range(1, k)]
        return "\n".join(lines) + "\nPmax [ " + " & ".join(parts) + " ]\n"
    if kind == "opac":
        regions = sorted({g.region(c) for c in _cells(g)})
        same_act = " & ".join(f"(a{mv}@x1 <-> a{mv}@x2)" for mv in MOVES)
        same_reg = " & ".join(f"(r{r}@x1 <-> r{r}@x2)" for r in regions)
        return (f"exists (s1 s2);\nforall x1 in {{{s[0]}}} (s1);\nforall x2 in {{{s[1]}}} (s2);\n"
                f"Pmax [ !G ({same_act}) & G ({same_reg}) & F T@x1 & F T@x2 ]\n")
    if kind == "iso":
        return (f"exists (s1);\nforall x1 in {{{s[0]}}} (s1);\nforall x2 in {{{s[1]}}} (s1);\n"
                "Pmax [ ((!T@x1 & !T@x2) U (T@x1 & T@x2)) | "
                "((!S@x1 & !S@x2 & !T@x1 & !T@x2) U (S@x1 & S@x2)) ]\n")
    if kind == "robust":
        return (f"exists (s1);\nforall x1 in {{{s[0]}}} (s1);\nforall x2 in {{{s[0]}}} (s1);\n"
                "Pmax [ (F T@x1 & F T@x2) & "
                "((F sl@x1 ^ F sl@x2) -> ((!T@x1 & !T@x2) U (T@x1 & T@x2))) ]\n")
    if kind == "noninter":
        return (f"exists (a b c);\nforall x1 in {{{s[0]}}} (a);\nforall x2 in {{{s[0]}}} (a);\n"
                f"forall x3 in {{{s[1]}}} (b);\nforall x4 in {{{s[1]}}} (c);\n"
                "Pmax [ ((!goal@x1) U goal@x3) ^ ((!goal@x2) U goal@x4) ]\n")
    raise BenchError(f"unknown benchmark kind {g.kind!r}")


def _cells(g: GridParams):
    return [(x, y) for y in range(g.height) for x in range(g.width) if g.free((x, y))]


def gen_benchmark(g: GridParams) -> tuple[Mdp, str]:
    m = gen_mdp(g)
    text = gen_spec(g)
    problems = check_well_formed(parse_spec(text), m)
    if problems:
        raise BenchError("generated specification is ill-formed: " + "; ".join(problems))
    return m, text


def render(g: GridParams) -> str:
    """ASCII picture of the layout, top row first."""
    rows = []
    for y in reversed(range(g.height)):
        row = ""
        for x in range(g.width):
            c = (x, y)
            if c in g.obstacles:
                ch = "#"
            elif c == tuple(g.target):
                ch = "T"
            elif c in [tuple(s) for s in g.starts]:
                ch = str([tuple(s) for s in g.starts].index(c) + 1)
            else:
                ch = "."
            row += ch
        rows.append(row)
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# calibrated instances


def _data_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "data")


def _from_json(d: dict) -> GridParams:
    trap = d.get("trap", 0.0)
    return GridParams(
        kind=d["kind"], width=d["width"], height=d["height"],
        starts=tuple(tuple(c) for c in d["starts"]), target=tuple(d["target"]),
        obstacles=frozenset(tuple(c) for c in d.get("obstacles", ())),
        slip=d.get("slip", 0.1), trap=tuple(trap) if isinstance(trap, list) else trap,
        regions=tuple(d["regions"]) if d.get("regions") is not None else None,
        name=d.get("name", ""),
    )


def to_json(g: GridParams) -> dict:
    d = asdict(g)
    d["obstacles"] = sorted(list(c) for c in g.obstacles)
    d["starts"] = [list(c) for c in g.starts]
    d["target"] = list(g.target)
    return d


def calibrated_names() -> list[str]:
    return sorted(f[:-5] for f in os.listdir(_data_dir()) if f.endswith(".json"))


def calibration(name: str) -> dict:
    """Metadata of a shipped instance: parameters, calibration notes, targets."""
    path = os.path.join(_data_dir(), f"{name}.json")
    if not os.path.exists(path):
        raise BenchError(f"no calibrated instance {name!r} (have {', '.join(calibrated_names())})")
    with open(path) as fh:
        return json.load(fh)


def calibrated(name: str) -> GridParams:
    return _from_json(calibration(name)["params"])


def write_benchmark(g: GridParams, outdir, meta: dict | None = None) -> dict:
    """Write ``<name>.mdp``, ``<name>.spec`` and ``<name>.meta.json`` to ``outdir``."""
    m, text = gen_benchmark(g)
    name = g.name or f"{g.kind}-{g.width}x{g.height}"
    os.makedirs(outdir, exist_ok=True)
    paths = {ext: os.path.join(outdir, f"{name}.{ext}") for ext in ("mdp", "spec", "meta.json")}
    with open(paths["mdp"], "w") as fh:
        fh.write(dump_model(m))
    with open(paths["spec"], "w") as fh:
        fh.write(text)
    info = {"params": to_json(g), "states": m.num_states, "layout": render(g).splitlines()}
    info.update(meta or {})
    with open(paths["meta.json"], "w") as fh:
        json.dump(info, fh, indent=2)
        fh.write("\n")
    return paths


def with_kind(g: GridParams, kind: str, **changes) -> GridParams:
    return replace(g, kind=kind, **changes)
