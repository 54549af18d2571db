"""Command-line interface: ``poaps compile | plan | run | experiment voting``."""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal

from . import analysis, corpus
from .executor import BatchSummary, dumps_trace, run, trace_header
from .experiment import REFERENCE, compare_with_baselines, fixed_k_majority, run_dynamic, voting_model
from .ham import compile_all, render
from .model import BeliefCollapse, ModelError, assemble, elicit_goal
from .planner import Planner, PlannerConfig, SegmentRunaway, ValueTable
from .primitives import RegistryError, load_manifest, standard_registry
from .reader import ParseError, ProgramSet, format_value, parse, read_datum, validate
from .world import SimConfig, SimulatedWorld, WorldError, sample_ground_truth, task_generator

DEFAULT_SEED = 20140727


class UsageError(Exception):
    pass


def _plain(v):
    if isinstance(v, Decimal):
        return float(v)
    if isinstance(v, tuple):
        return tuple(_plain(x) for x in v)
    return v


def parse_args_datum(text: str) -> tuple:
    return _plain(read_datum("(" + text + ")"))


def load_program(spec: str, entry: str | None) -> tuple[ProgramSet, str, str]:
    """``spec`` is a file path or the name of a bundled program."""
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
        ps = parse(text)
        default = list(ps.defs)[0] if ps.defs else None
    elif spec in corpus.PROGRAMS:
        ps = corpus.load(spec)
        default = ps.entry
    else:
        raise UsageError(f"no such program file or bundled program: {spec}")
    entry = entry or default
    if entry not in ps.defs:
        raise UsageError(f"entry {entry!r} is not defined")
    return ps, entry, spec


def _registry(args):
    return standard_registry(load_manifest(args.manifest) if args.manifest else None)


def _goal(args, registry):
    cheapest = min((p.min_cost() for p in registry if p.min_cost() > 0), default=0.0)
    if args.goal_rocks:
        return elicit_goal("rocks-sampled", args.goal_accuracy or 1.0, args.budget_cents, min_cost=cheapest)
    if args.goal_tier:
        return elicit_goal("quality-tier", args.goal_accuracy or 0.9, args.budget_cents,
                           tier=args.goal_tier, min_cost=cheapest)
    if args.goal_accuracy is not None:
        return elicit_goal("answer-accuracy", args.goal_accuracy, args.budget_cents, min_cost=cheapest)
    return None


def _cfg(args) -> PlannerConfig:
    return PlannerConfig(simulations=args.simulations, particle_count=args.particles,
                         histogram_k=args.hist_k, psi_samples=args.psi_samples, seed=args.seed)


def _model(args):
    ps, entry, _ = load_program(args.program, args.entry)
    registry = _registry(args)
    diags = validate(ps, registry)
    if diags:
        raise UsageError("\n".join(str(d) for d in diags))
    return assemble(ps, entry, registry, _goal(args, registry))


def cmd_compile(args, out) -> int:
    ps, entry, _ = load_program(args.program, args.entry)
    registry = _registry(args)
    diags = validate(ps, registry)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return 1
    schemas = analysis.build_schema(ps, entry, registry)
    hams = compile_all(ps, registry, sorted(schemas))
    text = "".join(render(hams[n]) for n in sorted(hams)) + analysis.report(schemas)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    out.write(text)
    return 0


def cmd_plan(args, out) -> int:
    model = _model(args)
    cfg = _cfg(args)
    vals = parse_args_datum(args.args)
    b0 = model.initial_belief(vals, cfg.particle_count, random.Random(cfg.seed))
    planner = Planner(model, cfg, ValueTable.load(args.table) if args.table else None)
    planner.plan(b0)
    planner.table.save(args.out)
    first = planner.to_choice(b0, random.Random(cfg.seed)).belief
    qs = planner.q_values(first, random.Random(cfg.seed))
    out.write(f"table entries: {len(planner.table)}\n")
    for a, q in qs:
        out.write(f"Q(action {a}) = {q:.6f}\n")
    return 0


def cmd_run(args, out) -> int:
    model = _model(args)
    cfg = _cfg(args)
    vals = parse_args_datum(args.args)
    rng = random.Random(args.seed)
    truth = sample_ground_truth(model, vals, random.Random(f"{args.seed}:truth"))
    world = SimulatedWorld(truth, model.registry)
    planner = Planner(model, cfg, ValueTable.load(args.table) if args.table else None)
    res = run(model, vals, world, cfg, rng, planner)
    if args.trace:
        goal = model.goal.describe() if model.goal else None
        header = trace_header(cfg, args.program, model.entry, vals, args.seed, goal)
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(dumps_trace(header, res))
    out.write(f"return: {format_value(res.return_value) if res.return_value is not None else '-'}\n")
    out.write(f"cost: {res.total_cents:g} cents\n")
    out.write(f"goal achieved: {str(res.goal_achieved).lower()}\n")
    if res.budget_exhausted:
        out.write("budget exhausted\n")
    return 0


def _voting_chunk(job):
    epsilon, budget, sim, cfg, seed, lo, hi, n = job
    model = voting_model(epsilon, budget, sim)
    tasks = task_generator("voting", n, random.Random(seed), model.registry)[lo:hi]
    s = run_dynamic(model, tasks, cfg, f"{seed}:{lo}")
    return s.correct, s.cents, [e.goal_achieved for e in s.episodes]


def cmd_experiment(args, out) -> int:
    if args.kind != "voting":
        raise UsageError(f"unknown experiment {args.kind!r}")
    cfg = _cfg(args)
    epsilon = args.goal_accuracy if args.goal_accuracy is not None else 0.9
    sim = SimConfig(gamma=args.gamma, seed=args.seed)
    model = voting_model(epsilon, args.budget_cents, sim)
    tasks = task_generator("voting", args.n, random.Random(args.seed), model.registry)
    if args.threads > 1 and args.n > 1:
        step = -(-args.n // args.threads)
        jobs = [(epsilon, args.budget_cents, sim, cfg, args.seed, lo, min(lo + step, args.n), args.n)
                for lo in range(0, args.n, step)]
        with ProcessPoolExecutor(args.threads) as pool:
            parts = list(pool.map(_voting_chunk, jobs))
        correct = [c for p in parts for c in p[0]]
        cents = [c for p in parts for c in p[1]]
        goals = [g for p in parts for g in p[2]]
        n = len(correct)
        dyn = BatchSummary(n, sum(correct) / n, sum(cents) / n, sum(goals) / n, correct, cents)
    else:
        dyn = run_dynamic(model, tasks, cfg, args.seed)
    summary = {"experiment": "voting", "n": args.n, "epsilon": epsilon, "budget_cents": args.budget_cents,
               "seed": args.seed, "threads": args.threads,
               "reproducible": args.threads <= 1 or "per thread count",
               "accuracy": dyn.accuracy, "mean_cents": dyn.mean_cents, "goal_rate": dyn.goal_rate,
               "reference": REFERENCE}
    out.write(f"tasks: {args.n}\n")
    out.write(f"accuracy: {dyn.accuracy:.4f}   (live crowd reference {REFERENCE['accuracy']:.4f})\n")
    out.write(f"mean cost: {dyn.mean_cents:.2f} cents   (live crowd reference {REFERENCE['mean_cents']:.2f})\n")
    if args.n and args.baselines:
        ks = [int(k) for k in args.baselines.split(",")]
        bases = {k: fixed_k_majority(tasks, k, model.registry, args.seed) for k in ks}
        rows = []
        for d in compare_with_baselines(dyn, bases, args.seed):
            out.write(f"fixed k={d.k}: accuracy {d.accuracy:.4f}, cost {d.mean_cents:.2f}; "
                      f"dynamic {'holds' if d.verdict else 'loses'} ({d.reason})\n")
            rows.append({"k": d.k, "accuracy": d.accuracy, "mean_cents": d.mean_cents,
                         "dominated": d.verdict, "reason": d.reason})
        summary["baselines"] = rows
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poaps", description="Compile, plan and run adaptive programs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, program=True):
        if program:
            sp.add_argument("--program", required=True, help="program file or bundled program name")
            sp.add_argument("--entry", help="entry definition (default: bundled entry or first define)")
        sp.add_argument("--manifest", help="primitive parameter manifest")

    def planning(sp):
        sp.add_argument("--args", default="", help="Normal arguments as S-expressions")
        sp.add_argument("--goal-accuracy", type=float)
        sp.add_argument("--goal-tier", choices=["Satisfactory", "Excellent", "Almost-Perfect"])
        sp.add_argument("--goal-rocks", action="store_true", help="goal: every rock sampled")
        sp.add_argument("--budget-cents", type=float, default=20.0)
        sp.add_argument("--simulations", type=int, default=1000)
        sp.add_argument("--particles", type=int, default=1000)
        sp.add_argument("--hist-k", type=int, default=10)
        sp.add_argument("--psi-samples", type=int, default=16)
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--threads", type=int, default=1)

    c = sub.add_parser("compile", help="validate, compile and report state spaces")
    common(c)
    c.add_argument("--out")
    pl = sub.add_parser("plan", help="run C-RTDP from the initial belief and save the value table")
    common(pl)
    planning(pl)
    pl.add_argument("--table", help="warm-start value table")
    pl.add_argument("--out", required=True)
    r = sub.add_parser("run", help="execute one episode against a simulated world")
    common(r)
    planning(r)
    r.add_argument("--table", help="warm-start value table")
    r.add_argument("--trace", help="write a JSON-lines trace here")
    e = sub.add_parser("experiment", help="simulated batch experiment")
    e.add_argument("kind", choices=["voting"])
    common(e, program=False)
    planning(e)
    e.add_argument("--n", type=int, default=1000)
    e.add_argument("--gamma", type=float, default=1.0)
    e.add_argument("--baselines", default="1,3,5", help="comma-separated fixed vote counts ('' for none)")
    e.add_argument("--out", help="write the JSON summary here")
    e.set_defaults(simulations=200)
    return p


COMMANDS = {"compile": cmd_compile, "plan": cmd_plan, "run": cmd_run, "experiment": cmd_experiment}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args, out)
    except (ParseError, UsageError, RegistryError, analysis.SpaceConflict, analysis.ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BeliefCollapse, SegmentRunaway, ModelError, WorldError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
