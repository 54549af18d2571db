"""Run programs for real: Normal execution in lockstep with a planned-over belief."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from decimal import Decimal

from .model import Belief, GenerativeModel, NormalOps, marginals
from .planner import Planner, PlannerConfig, ValueTable
from .primitives import is_observed
from .reader import format_value, read_datum

TRACE_VERSION = 1


class Divergence(RuntimeError):
    def __init__(self, step: int, what: str, expected, got):
        self.step, self.what = step, what
        super().__init__(f"step {step}: {what} differs (trace {expected!r}, replay {got!r})")


class LockstepError(RuntimeError):
    pass


def parse_value(text: str):
    """Inverse of ``format_value`` for trace files (decimals come back as floats)."""
    def conv(v):
        if isinstance(v, Decimal):
            return float(v)
        if isinstance(v, tuple):
            return tuple(conv(x) for x in v)
        return v

    return conv(read_datum(text))


@dataclass(frozen=True)
class TraceRecord:
    step: int
    state: str
    kind: str
    action: int
    label: str
    observations: tuple
    result: str | None
    cents: float
    belief: tuple = ()

    def to_json(self) -> dict:
        return {
            "type": "step", "step": self.step, "state": self.state, "kind": self.kind,
            "action": self.action, "label": self.label,
            "obs": [format_value(o) for o in self.observations],
            "result": self.result, "cents": self.cents,
            "belief": [[name, [[format_value(v), w] for v, w in top]] for name, top in self.belief],
        }

    @classmethod
    def from_json(cls, d: dict) -> "TraceRecord":
        return cls(d["step"], d["state"], d["kind"], d["action"], d["label"],
                   tuple(parse_value(o) for o in d["obs"]), d["result"], d["cents"],
                   tuple((name, tuple((parse_value(v), w) for v, w in top)) for name, top in d["belief"]))


@dataclass
class EpisodeResult:
    return_value: object
    total_cents: float
    goal_achieved: bool
    budget_exhausted: bool = False
    trace: list = field(default_factory=list)
    belief: Belief | None = None

    def summary(self) -> dict:
        return {"type": "result", "return": format_value(self.return_value) if self.return_value is not None else None,
                "total_cents": self.total_cents, "goal_achieved": self.goal_achieved,
                "budget_exhausted": self.budget_exhausted, "steps": len(self.trace)}


def belief_summary(model: GenerativeModel, b: Belief) -> tuple:
    """Top two values (with weights) of each hidden argument of the entry activation."""
    hidden = [v.variable for v in model.schemas[model.entry].args
              if not (v.observable or is_observed(v.space))]
    if not hidden:
        return ()
    marg = marginals(model, b)
    out = []
    for name in hidden:
        hist = marg[(0, "v", name)]
        top = sorted(hist.items(), key=lambda kv: (-kv[1], repr(kv[0])))[:2]
        out.append((name, tuple((v, round(w, 6)) for v, w in top)))
    return tuple(out)


def _summary(planner: Planner, model: GenerativeModel, b: Belief) -> tuple:
    k = ("summary", b.ident())
    out = planner.memo.get(k)
    if out is None:
        out = planner.memo[k] = belief_summary(model, b)
    return out


def _label(model: GenerativeModel, machine: tuple, control: tuple, action: int) -> tuple[str, str, str]:
    name, nid, _ = machine[-1]
    s = model.hams[name].states[nid]
    state = f"{name}:{nid}"
    if s.kind == "Choice":
        if s.dynamic:
            return state, s.kind, f"choose e{s.eid} item {action}"
        return state, s.kind, f"choose e{s.eid} branch {action}"
    if s.kind == "Action":
        return state, s.kind, s.target
    if s.kind == "Call":
        return state, s.kind, ("loop " if s.tail else "call ") + s.target
    return state, s.kind, s.kind.lower()


def run(model: GenerativeModel, args: tuple, world, cfg: PlannerConfig, rng: random.Random | None = None,
        planner: Planner | None = None, belief: Belief | None = None, check=None,
        max_steps: int = 1_000_000) -> EpisodeResult:
    """Execute one episode.

    At every choice the planner is re-run from the current belief and its
    greedy action is taken.  Primitives are executed by ``world``; the real
    observations condition the belief.  ``check(record)`` sees every trace
    record as it is produced (used by :func:`replay`).
    """
    rng = rng if rng is not None else random.Random(cfg.seed)
    plan_rng = random.Random(rng.random())
    world_rng = random.Random(rng.random())
    planner = planner if planner is not None else Planner(model, cfg)
    b = belief if belief is not None else model.initial_belief(args, cfg.particle_count, random.Random(cfg.seed))
    layout = model.layouts[model.entry]
    machine = model.start_machine()
    control = ((layout.fresh_env(tuple(args)), layout.empty_slots),)
    ops = NormalOps(world, world_rng)
    trace: list[TraceRecord] = []
    total = 0.0
    exhausted = False
    for step in range(max_steps):
        if model.is_terminal(machine):
            state, kind, label = _label(model, machine, control, 0)
            rec = TraceRecord(step, state, kind, 0, label, (), None, 0.0, _summary(planner, model, b))
            if check is not None:
                check(rec)
            trace.append(rec)
            break
        if model.is_choice(machine):
            if model.truncated(b) or not model.allowed_actions(b):
                exhausted = True
                break
            planner.plan(b, cfg.simulations, plan_rng)
            a = planner.select_action(b, plan_rng)
            if a not in model.available_actions(machine, control):
                raise LockstepError(f"planner chose {a}, which is not a branch of this choose")
        else:
            a = 0
        state, kind, label = _label(model, machine, control, a)
        s = model.node(machine)
        ((_, machine, control, obs, cents),) = model.transitions(machine, control, a, ops)
        b, _ = planner.condition(b, a, obs)
        if b.machine != machine:
            raise LockstepError(f"belief at {b.machine[-1][:2]} but execution at {machine[-1][:2]}")
        result = None
        if s.kind == "Action" and s.target not in ("var", "const", "bind"):
            name, _, routes = machine[-1]
            lay = model.layouts[name]
            result = format_value(control[-1][1][lay.slot_index[s.eid]])
        total += cents
        rec = TraceRecord(step, state, kind, a, label, obs, result, cents, _summary(planner, model, b))
        if check is not None:
            check(rec)
        trace.append(rec)
    ret = model.return_value(machine, control) if model.is_terminal(machine) else None
    achieved = model.is_terminal(machine) and (model.goal is None or model.terminal_cost(b) == 0.0)
    return EpisodeResult(ret, total, bool(achieved), exhausted, trace, b)


# -- trace files -----------------------------------------------------------------------


def trace_header(cfg: PlannerConfig, program: str, entry: str, args: tuple, seed: int,
                 goal: str | None = None) -> dict:
    return {"type": "header", "version": TRACE_VERSION, "program": program, "entry": entry,
            "args": [format_value(a) for a in args], "seed": seed, "goal": goal,
            "config": cfg.describe(), "threads": 1}


def dumps_trace(header: dict, result: EpisodeResult) -> str:
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_json(), sort_keys=True) for r in result.trace]
    lines.append(json.dumps(result.summary(), sort_keys=True))
    return "\n".join(lines) + "\n"


def loads_trace(text: str) -> tuple[dict, list[TraceRecord], dict]:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not rows or rows[0].get("type") != "header":
        raise ValueError("trace file lacks a header line")
    if rows[0].get("version") != TRACE_VERSION:
        raise ValueError(f"unsupported trace version {rows[0].get('version')}")
    steps = [TraceRecord.from_json(r) for r in rows[1:] if r["type"] == "step"]
    footer = next((r for r in rows if r["type"] == "result"), {})
    return rows[0], steps, footer


class RecordedWorld:
    """Plays back the primitive results stored in a trace."""

    def __init__(self, model: GenerativeModel, records: list[TraceRecord]):
        self.model = model
        # trivial primitives are computed in place and never reach the world
        delegated = {p.name for p in model.registry if p.user_fn is None}
        self.results = [r for r in records if r.kind == "Action" and r.label in delegated]
        self.i = 0

    def execute_primitive(self, name: str, args: tuple, rng):
        if self.i >= len(self.results):
            raise Divergence(-1, "primitive count", len(self.results), self.i + 1)
        rec = self.results[self.i]
        self.i += 1
        r = parse_value(rec.result)
        prim = self.model.registry.lookup(name)
        # stock observation functions are the identity on the result
        return r, (r if prim.emits else None)


def replay(model: GenerativeModel, args: tuple, records: list[TraceRecord], cfg: PlannerConfig,
           rng: random.Random | None = None, table: ValueTable | None = None) -> EpisodeResult:
    """Re-run an episode against its recorded results; raises :class:`Divergence` on any mismatch."""
    it = iter(records)

    def check(rec: TraceRecord) -> None:
        exp = next(it, None)
        if exp is None:
            raise Divergence(rec.step, "length", len(records), rec.step + 1)
        for f in ("state", "kind", "action", "label", "observations", "result", "cents"):
            if getattr(exp, f) != getattr(rec, f):
                raise Divergence(rec.step, f, getattr(exp, f), getattr(rec, f))

    planner = Planner(model, cfg, ValueTable(table.values) if table is not None else None)
    res = run(model, args, RecordedWorld(model, records), cfg, rng, planner, check=check)
    if next(it, None) is not None:
        raise Divergence(len(res.trace), "length", len(records), len(res.trace))
    return res


# -- batches ---------------------------------------------------------------------------


@dataclass
class BatchSummary:
    n: int
    accuracy: float
    mean_cents: float
    goal_rate: float
    correct: list = field(default_factory=list)
    cents: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"n": self.n, "accuracy": self.accuracy, "mean_cents": self.mean_cents,
                "goal_rate": self.goal_rate}


def batch_experiment(model: GenerativeModel, tasks, cfg: PlannerConfig, make_world, seed: int,
                     keep_traces: bool = False) -> BatchSummary:
    """Run one episode per task with a shared planner; accuracy compares returns with task answers."""
    planner = Planner(model, cfg)
    correct, cents, goals, episodes = [], [], [], []
    for i, task in enumerate(tasks):
        res = run(model, task.args, make_world(task), cfg, random.Random(f"{seed}:{i}"), planner)
        correct.append(res.return_value == task.answer and res.return_value is not None)
        cents.append(res.total_cents)
        goals.append(res.goal_achieved)
        if not keep_traces:
            res.trace = []
        res.belief = None
        episodes.append(res)
    n = len(tasks)
    if n == 0:
        return BatchSummary(0, math.nan, math.nan, math.nan)
    return BatchSummary(n, sum(correct) / n, math.fsum(cents) / n, sum(goals) / n, correct, cents, episodes)
