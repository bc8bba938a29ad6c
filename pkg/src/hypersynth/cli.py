"""Command-line interface: ``hypersynth synth|check|export-decmdp|gen|oracle``.

Exit codes: 0 success, 1 input errors, 2 infeasible (or a checked tuple
violates the hyperproperty), 3 budget exhausted with an incumbent, 4 budget
exhausted without one.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

from .automata.hoa import HoaError, read_hoa
from .hyperspec import SpecError, check_well_formed, load_spec
from .mdp import ModelError, load_model
from .product import StateBudgetExceeded

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INCUMBENT, EXIT_EXHAUSTED = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


def _load(args):
    try:
        m = load_model(args.model)
        spec = load_spec(args.spec)
    except (OSError, ModelError, SpecError) as e:
        raise InputError(str(e)) from None
    problems = check_well_formed(spec, m)
    if problems:
        raise InputError("; ".join(problems))
    dra = None
    if getattr(args, "hoa", None):
        try:
            dra = read_hoa(args.hoa)
        except (OSError, HoaError) as e:
            raise InputError(str(e)) from None
    return m, spec, dra


def _fmt(v):
    return "none" if v is None else f"{v:.6f}"


def _policy_table(m, spec, t, bits) -> list[str]:
    from .product import unfold_memory

    agent = unfold_memory(m, bits)
    out = []
    for k, pvar in enumerate(spec.policy_vars):
        out.append(f"policy {pvar}:")
        pol = t.policies[k]
        for s in sorted(pol):
            a = pol[s]
            out.append(f"  {agent.state_name(s):>14}  {agent.action_name(a) if not isinstance(a, str) else a}")
    return out


def cmd_synth(args) -> int:
    from .policyio import dump_policy_tuple
    from .synthesis import build_problem, synthesize

    m, spec, dra = _load(args)
    try:
        problem = build_problem(m, spec, args.mem, dra)
    except StateBudgetExceeded as e:
        print(f"product construction aborted: {e}")
        return EXIT_EXHAUSTED
    trace = open(args.trace, "w") if args.trace else None
    try:
        res = synthesize(m, spec, args.mem, args.budget, args.eps, args.seed, args.workers, dra,
                         trace=(lambda line: trace.write(line + "\n")) if trace else None, problem=problem)
    finally:
        if trace:
            trace.close()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value"])
            for t, v in res.history:
                w.writerow([f"{t:.6f}", repr(float(v)) if v is not None else ""])
    size = sum(res.product_sizes)
    lines = [
        f"status        {res.status}",
        f"value         {_fmt(res.best_value)}",
        f"upper bound   {_fmt(res.upper_bound)}",
        f"|D|           {size}",
        f"nodes         {res.stats['nodes']}",
        f"splits        {res.stats['splits']}",
    ]
    print("\n".join(lines))
    tb = res.stats.get("time_to_best")
    print(f"time          {res.stats['time']:.2f}s")
    print(f"time to best  {'-' if tb is None else f'{tb:.2f}s'}")
    if res.best_tuple is not None:
        print("\n".join(_policy_table(m, spec, res.best_tuple, args.mem)))
        if args.policy_out:
            with open(args.policy_out, "w") as fh:
                fh.write(dump_policy_tuple(m, spec, res.best_tuple))
    if args.report:
        # no wall-clock fields, so identical runs give identical reports
        report = {
            "status": res.status,
            "value": res.best_value,
            "upper_bound": res.upper_bound,
            "product_states": res.product_sizes,
            "nodes": res.stats["nodes"],
            "splits": res.stats["splits"],
            "memory_bits": args.mem,
            "seed": args.seed,
        }
        if res.best_tuple is not None:
            report["policy"] = dump_policy_tuple(m, spec, res.best_tuple).splitlines()
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return {
        "optimum-found": EXIT_OK,
        "threshold-satisfied": EXIT_OK,
        "infeasible": EXIT_INFEASIBLE,
    }.get(res.status, EXIT_INCUMBENT if res.best_tuple is not None else EXIT_EXHAUSTED)


def cmd_check(args) -> int:
    from .policyio import parse_policy_tuple
    from .synthesis import evaluate_policy_tuple, uniform_tuple

    m, spec, dra = _load(args)
    if args.random:
        t = uniform_tuple(m, spec)
    elif args.policy:
        try:
            with open(args.policy) as fh:
                t = parse_policy_tuple(fh.read(), m, spec)
        except (OSError, ModelError, ValueError) as e:
            raise InputError(str(e)) from None
    else:
        raise InputError("check needs a policy file or --random")
    values, verdict = evaluate_policy_tuple(m, spec, t, dra)
    cons = spec.constraints()
    for (leaf, k), v in sorted(values.items()):
        print(f"leaf {leaf}  {cons[k]}  value {_fmt(v)}")
    print(f"verdict {verdict}")
    return EXIT_OK if verdict is True else EXIT_INFEASIBLE


def cmd_export(args) -> int:
    from .decmdp import export_dpomdp
    from .synthesis import build_problem

    m, spec, dra = _load(args)
    try:
        problem = build_problem(m, spec, 0, dra)
        export_dpomdp(problem.tasks[0].product, spec, args.out)
    except SpecError as e:
        raise InputError(str(e)) from None
    except StateBudgetExceeded as e:
        print(f"product construction aborted: {e}")
        return EXIT_EXHAUSTED
    print(f"wrote {args.out} ({problem.tasks[0].product.num_states} product states)")
    return EXIT_OK


def _cell(tok: str):
    try:
        x, y = tok.split(",")
        return int(x), int(y)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {tok!r}") from None


def cmd_gen(args) -> int:
    from .benchgen import BenchError, GridParams, calibrated, calibrated_names, calibration, write_benchmark

    try:
        if args.kind in calibrated_names():
            g = calibrated(args.kind)
            meta = {k: v for k, v in calibration(args.kind).items() if k != "params"}
        else:
            if args.width is None or args.height is None or not args.start or args.target is None:
                raise InputError("gen needs --width, --height, --start and --target "
                                 f"(or one of the calibrated instances: {', '.join(calibrated_names())})")
            trap = args.trap if len(args.trap) > 1 else args.trap[0]
            g = GridParams(args.kind, args.width, args.height, tuple(args.start), args.target,
                           frozenset(args.obstacle or ()), args.slip, tuple(trap) if isinstance(trap, list) else trap,
                           None, args.name or "")
            meta = {}
        paths = write_benchmark(g, args.out, meta)
    except BenchError as e:
        raise InputError(str(e)) from None
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import brute_force, count_tuples
    from .policyio import dump_policy_tuple

    m, spec, _ = _load(args)
    total = count_tuples(m, spec, args.mem)
    if total > args.limit:
        print(f"{total} policy tuples exceed the enumeration limit {args.limit}")
        return EXIT_EXHAUSTED
    best, t = brute_force(m, spec, args.mem, args.limit)
    print(f"tuples        {total}")
    if best is None:
        print("status        infeasible")
        return EXIT_INFEASIBLE
    print(f"status        {'threshold-satisfied' if best is True else 'optimum-found'}")
    if best is not True:
        print(f"value         {_fmt(best)}")
    print(dump_policy_tuple(m, spec, t), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypersynth", description="Policy synthesis for probabilistic hyperproperties")
    sub = ap.add_subparsers(dest="command", required=True)

    def model_spec(p):
        p.add_argument("model", help="agent model file")
        p.add_argument("spec", help="specification file")
        p.add_argument("--hoa", help="use this automaton (HOA) instead of translating the formula")

    p = sub.add_parser("synth", help="abstraction-refinement synthesis")
    model_spec(p)
    p.add_argument("--mem", type=int, default=0, choices=(0, 1, 2), help="memory bits per agent")
    p.add_argument("--budget", type=float, default=600.0, help="time budget in seconds")
    p.add_argument("--eps", type=float, default=1e-8, help="value iteration precision")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace", help="write the node trace to this file")
    p.add_argument("--csv", help="write (time, incumbent) pairs to this file")
    p.add_argument("--report", help="write a JSON report to this file")
    p.add_argument("--policy-out", help="write the best policy tuple to this file")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("check", help="evaluate a policy tuple")
    model_spec(p)
    p.add_argument("policy", nargs="?", help="policy tuple file")
    p.add_argument("--random", action="store_true", help="evaluate the uniformly random tuple")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("export-decmdp", help="write the product as a .dpomdp problem")
    model_spec(p)
    p.add_argument("out")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("gen", help="generate a grid-world benchmark")
    p.add_argument("kind", help="meet, meetR, race-k, opac, iso, robust, noninter, or a calibrated instance name")
    p.add_argument("--out", default=".")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--start", type=_cell, action="append", help="x,y (repeat per agent)")
    p.add_argument("--target", type=_cell)
    p.add_argument("--obstacle", type=_cell, action="append")
    p.add_argument("--slip", type=float, default=0.1)
    p.add_argument("--trap", type=float, nargs="+", default=[0.0], help="one value or one per move N E S W")
    p.add_argument("--name")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("oracle", help="brute-force enumeration of memoryless tuples")
    model_spec(p)
    p.add_argument("--mem", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--limit", type=int, default=100_000)
    p.set_defaults(fn=cmd_oracle)
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "budget", 1) <= 0:
        print("error: --budget must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.fn(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
