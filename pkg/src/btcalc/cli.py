"""Command line front end: ``btcalc SUBCOMMAND FILE ...``.

Exit codes: 0 success or proven, 1 analysis negative, 2 usage, input or
parse error.  Machine output is canonical JSON (sorted keys) unless a DOT or
CSV format is requested.  ``FILE`` may be ``builtin:NAME`` to load one of the
bundled corpus files.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from typing import Sequence, TextIO

from . import report
from .cbf import CbfError, SafetyInfeasible, integrate
from .convergence import (
    ConvergenceError,
    ProbabilisticChain,
    check_theorem,
    monte_carlo_chain,
    pk_checks,
    probabilistic_bounds,
)
from .decision import (
    DsTooLarge,
    compile_to_ds,
    cyclomatic,
    essential_complexity,
    module_decomposition,
)
from .dot import decomposition_to_dot, ds_to_dot, tree_to_dot
from .dsl import Document, DocumentError, TreeDecl, parse, serialize
from .regions import analyze, verify_partition
from .state import ModelError, Value, WorldModel
from .synthesis import SynthesisError, backchain
from .tree import NotRunning, Termination, TreeError, simulate

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "BTCALC_SEED"
BUILTIN_PREFIX = "builtin:"
CBF_TOLERANCE = 1e-6


class UsageError(Exception):
    """Bad input detected after argument parsing; maps to exit code 2."""


def builtin_names() -> list[str]:
    files = resources.files("btcalc.data").iterdir()
    return sorted(f.name[:-3] for f in files if f.name.endswith(".bt"))


def read_source(path: str) -> tuple[bytes, str]:
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        if name not in builtin_names():
            raise UsageError(f"unknown builtin {name!r} (available: {', '.join(builtin_names())})")
        return resources.files("btcalc.data").joinpath(name + ".bt").read_bytes(), path
    try:
        with open(path, "rb") as fh:
            return fh.read(), path
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def load(path: str, err: TextIO) -> Document:
    data, name = read_source(path)
    result = parse(data, name)
    for d in result.diagnostics:
        print(d.render(name), file=err)
    if not result.ok:
        raise UsageError(f"{name}: {len(result.diagnostics)} diagnostic(s)")
    return result.document


def parse_assignment(model: WorldModel, text: str) -> dict[str, Value]:
    """``a=true, mode=x, !b, c``; unmentioned variables take their first value."""
    out: dict[str, Value] = {v.name: v.values[0] for v in model.variables}
    for item in filter(None, (p.strip() for p in text.replace(",", " ").split())):
        if "=" in item:
            name, raw = (s.strip() for s in item.split("=", 1))
        elif item.startswith("!"):
            name, raw = item[1:], "false"
        else:
            name, raw = item, "true"
        try:
            var = model.variable(name)
        except ModelError as exc:
            raise UsageError(str(exc)) from None
        if var.is_bool:
            if raw not in ("true", "false"):
                raise UsageError(f"{name} is boolean; got {raw!r}")
            out[name] = raw == "true"
        elif raw in var.values:
            out[name] = raw
        else:
            raise UsageError(f"{raw!r} is not a value of {name}")
    return out


def _seed(arg: int | None) -> int:
    if arg is not None:
        return arg
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _hash(doc: Document) -> str | None:
    return doc.source_hash


# ---------------------------------------------------------------------------
# subcommands; each returns an exit code


def cmd_parse(args, out, err) -> int:
    doc = load(args.file, err)
    payload = {
        "ok": True,
        "model": None if doc.model is None else doc.model.name,
        "variables": 0 if doc.model is None else len(doc.model.variables),
        **{kind: doc.names(kind) for kind in ("actions", "trees", "goals", "checks", "cbfs")},
    }
    out.write(report.dumps(report.envelope("parse", payload, _hash(doc))))
    return EXIT_OK


def cmd_regions(args, out, err) -> int:
    doc = load(args.file, err)
    tree = doc.tree(args.tree)
    rmap = analyze(tree)
    rep = verify_partition(rmap)
    payload = report.regions_to_dict(rmap, rep, states=args.states)
    if args.json:
        out.write(report.dumps(report.envelope("regions", payload, _hash(doc))))
    else:
        out.write(f"{'id':>4}  {'kind':<9} {'|S|':>7} {'|F|':>7} {'|R|':>7} {'|I|':>7} {'|Omega|':>7}  name\n")
        for r in payload["nodes"]:
            out.write(
                f"{r['id']:>4}  {r['kind']:<9} {r['S']:>7} {r['F']:>7} {r['R']:>7} "
                f"{r['I']:>7} {r['omega']:>7}  {r['name']}\n"
            )
        out.write(f"partition: {'ok' if rep.ok else 'VIOLATED'} ({len(rep.violations)} violation(s))\n")
    return EXIT_OK if rep.ok else EXIT_NEGATIVE


def cmd_check(args, out, err) -> int:
    doc = load(args.file, err)
    cert = check_theorem(doc.problem(args.check))
    payload = {"check": args.check, **report.certificate_to_dict(cert)}
    out.write(report.dumps(report.envelope("certificate", payload, _hash(doc))))
    return EXIT_OK if cert.proven else EXIT_NEGATIVE


def cmd_simulate(args, out, err) -> int:
    doc = load(args.file, err)
    tree = doc.tree(args.tree)
    x0 = tree.model.pack(parse_assignment(tree.model, args.start))
    if args.max_steps < 1:
        raise UsageError("--max-steps must be at least 1")
    trace = simulate(tree.model, tree, x0, args.max_steps)
    payload = report.trace_to_dict(tree, trace, with_explain=args.explain)
    out.write(report.dumps(report.envelope("trace", payload, _hash(doc))))
    return EXIT_OK if trace.reason is Termination.SUCCESS else EXIT_NEGATIVE


def cmd_synth(args, out, err) -> int:
    doc = load(args.file, err)
    goals = doc.goal_list(args.goals)
    name = args.name or args.goals
    try:
        tree = backchain(doc.world_model, goals, max_depth=args.depth, name=name)
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=err)
        return EXIT_NEGATIVE
    emitted = Document(model=doc.model, actions=doc.actions, trees=(TreeDecl(name, tree.root),))
    out.write(serialize(emitted))
    return EXIT_OK


def cmd_ds(args, out, err) -> int:
    doc = load(args.file, err)
    tree = doc.tree(args.tree)
    ds = compile_to_ds(tree)
    label = tree.display_name
    if args.dot:
        if args.complexity:
            out.write(decomposition_to_dot(module_decomposition(ds), f"{tree.name} decomposition", label))
        else:
            out.write(ds_to_dot(ds, tree.name, label))
        return EXIT_OK
    payload = {
        "tree": tree.name,
        "nodes": [{"index": k, "leaf": node, "name": label(node)} for k, node in enumerate(ds.nodes)],
        "edges": [{"from": u, "label": lbl, "to": v} for u, lbl, v in ds.edges],
        "source": ds.source,
        "cyclomatic": cyclomatic(ds),
    }
    if args.complexity:
        ess = essential_complexity(ds)
        payload["essential_complexity"] = ess
        payload["bt_equivalent"] = ess == 1
    out.write(report.dumps(report.envelope("decision-structure", payload, _hash(doc))))
    return EXIT_OK


def cmd_dot(args, out, err) -> int:
    doc = load(args.file, err)
    tree = doc.tree(args.tree)
    bad = [i for i in args.collapse if not 0 <= i < len(tree)]
    if bad:
        raise UsageError(f"node ids out of range: {bad}")
    out.write(tree_to_dot(tree, args.collapse))
    return EXIT_OK


def cmd_cbf(args, out, err) -> int:
    doc = load(args.file, err)
    decl = doc.cbf(args.scenario)
    problem = decl.problem()
    x0 = tuple(args.x0) if args.x0 else decl.x0
    if x0 is None:
        raise UsageError(f"scenario {decl.name!r} declares no x0; pass --x0")
    try:
        trace = integrate(problem, x0, args.T, args.dt)
        status, code = "completed", None
    except SafetyInfeasible as exc:
        trace = exc.trace
        status, code = f"infeasible at x={list(exc.state)}: {exc}", EXIT_NEGATIVE
    if args.csv and trace is not None:
        if args.csv == "-":
            trace.write_csv(out)
        else:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                trace.write_csv(fh)
    min_h = [] if trace is None or len(trace) == 0 else [float(v) for v in trace.min_h()]
    safe = bool(min_h) and min_h[0] >= -CBF_TOLERANCE
    if code is None:
        code = EXIT_OK if safe else EXIT_NEGATIVE
    if args.csv != "-":
        payload = {
            "scenario": decl.name,
            "status": status,
            "T": args.T,
            "dt": args.dt,
            "samples": 0 if trace is None else len(trace),
            "min_h": min_h,
            "tolerance": CBF_TOLERANCE,
            "barrier_1_maintained": safe,
            "final_state": None if trace is None or len(trace) == 0 else [float(v) for v in trace.x[-1]],
            "final_prefix": None if trace is None or len(trace) == 0 else int(trace.prefix[-1]),
        }
        out.write(report.dumps(report.envelope("cbf-run", payload, _hash(doc))))
    return code


def cmd_montecarlo(args, out, err) -> int:
    seed = _seed(args.seed)
    try:
        bounds = probabilistic_bounds(args.n, args.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.trials < 2:
        raise UsageError("--trials must be at least 2")
    result = monte_carlo_chain(ProbabilisticChain.uniform(args.n, args.p, seed), args.trials, args.mode, args.k_max)
    checks = pk_checks(result, bounds)
    payload = report.montecarlo_to_dict(result, bounds, seed)
    for row, c in zip(payload["p_k"], checks):
        row["sigma"] = c.sigma
        row["ok"] = c.ok
    ok = result.bound_holds and all(c.ok for c in checks)
    payload["ok"] = ok
    out.write(report.dumps(report.envelope("montecarlo", payload)))
    return EXIT_OK if ok else EXIT_NEGATIVE


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 2 with a message on stderr
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="btcalc", description="Behavior tree region, convergence and safety analyses.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_file(name: str, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("file", help="DSL file, or builtin:NAME")
        return sp

    sp = with_file("parse", "validate a document")
    sp.set_defaults(func=cmd_parse)

    sp = with_file("regions", "status, influence and operating regions of a tree")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--states", action="store_true", help="list operating-region state indices")
    sp.set_defaults(func=cmd_regions)

    sp = with_file("check", "convergence certificate for a declared check")
    sp.add_argument("--check", required=True)
    sp.set_defaults(func=cmd_check)

    sp = with_file("simulate", "closed-loop rollout from one state")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--from", dest="start", required=True, help="e.g. 'a=true, mode=x, !b'")
    sp.add_argument("--max-steps", type=int, default=100)
    sp.add_argument("--explain", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = with_file("synth", "backchain a goal list into a tree (prints DSL)")
    sp.add_argument("--goals", required=True)
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--name", default=None, help="name of the emitted tree")
    sp.set_defaults(func=cmd_synth)

    sp = with_file("ds", "decision structure compiled from a tree")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--complexity", action="store_true")
    sp.add_argument("--dot", action="store_true", help="DOT of the structure (of the decomposition with --complexity)")
    sp.set_defaults(func=cmd_ds)

    sp = with_file("dot", "DOT rendering of a tree")
    sp.add_argument("--tree", required=True)
    sp.add_argument("--collapse", type=int, nargs="*", default=[], metavar="ID")
    sp.set_defaults(func=cmd_dot)

    sp = with_file("cbf", "run a prioritized CBF scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--T", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--csv", default=None, metavar="OUT", help="trace CSV path, or - for stdout")
    sp.add_argument("--x0", type=float, nargs="+", default=None)
    sp.set_defaults(func=cmd_cbf)

    sp = sub.add_parser("montecarlo", help="probabilistic convergence bound by simulation")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, else 0")
    sp.add_argument("--mode", choices=("uniform", "worst"), default="uniform")
    sp.add_argument("--k-max", type=int, default=20)
    sp.set_defaults(func=cmd_montecarlo)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out, err)
    except UsageError as exc:
        print(f"btcalc: error: {exc}", file=err)
        return EXIT_USAGE
    except (DocumentError, ModelError, TreeError, ConvergenceError, CbfError, DsTooLarge, NotRunning) as exc:
        print(f"btcalc: error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
