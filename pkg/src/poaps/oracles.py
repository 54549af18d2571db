"""Brute-force reference solvers for small instances.

``exact_belief_vi`` solves the choice-belief semi-MDP of a compiled model with
exact (never resampled) beliefs.  ``exact_history_mdp`` ignores the compiled
model altogether: it interprets the program text directly and does dynamic
programming over action/observation histories, replaying world trajectories
from scratch.  The two must agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from . import analysis
from .model import Belief, GenerativeModel, GoalSpec
from .primitives import Registry, cost as prim_cost, is_observed
from .reader import Expr, ProgramSet, is_dynamic_choose

TIE_TOL = 1e-9


class OracleCapExceeded(RuntimeError):
    pass


class CycleError(RuntimeError):
    pass


# -- exact belief-space solver -------------------------------------------------------


def exact_segments(model: GenerativeModel, b: Belief, a: int, max_steps: int = 10_000):
    """All ``(prob, cents, belief)`` outcomes of the segment after ``a``, without resampling."""
    out = []
    todo = [(1.0, 0.0, b, a, 0)]
    while todo:
        p, c, cur, act, n = todo.pop()
        if n > max_steps:
            raise CycleError("segment does not reach a choice")
        for q, cents, child in model.belief_step(cur, act).values():
            if model.segment_end(child):
                out.append((p * q, c + cents, child))
            else:
                todo.append((p * q, c + cents, child, 0, n + 1))
    return out


@dataclass
class BeliefSolution:
    value: float
    policy: dict = field(default_factory=dict)   # ident -> (belief, chosen action, optimal actions, q values)
    start: Belief | None = None

    def reachable(self, model: GenerativeModel) -> list[Belief]:
        """Choice beliefs visited with positive probability under the optimal policy."""
        seen, out = set(), []
        todo = [self.start]
        while todo:
            b = todo.pop()
            if b.ident() in seen:
                continue
            seen.add(b.ident())
            if model.segment_end(b) and b is not self.start:
                if b.ident() not in self.policy:
                    continue
                out.append(b)
                a = self.policy[b.ident()][1]
            elif b is self.start and b.ident() in self.policy:
                out.append(b)
                a = self.policy[b.ident()][1]
            else:
                a = 0
            todo.extend(child for p, c, child in exact_segments(model, b, a) if p > 0)
        return out


def _leaf_value(model: GenerativeModel, b: Belief) -> float | None:
    if model.is_terminal(b.machine) or model.truncated(b):
        return model.terminal_cost(b)
    if model.is_choice(b.machine) and not model.allowed_actions(b):
        return model.dead_end_cents
    return None


def exact_belief_vi(model: GenerativeModel, b0: Belief, cap: int = 200_000) -> BeliefSolution:
    """Optimal expected cost from ``b0`` by exhaustive recursion over exact beliefs."""
    sol = BeliefSolution(0.0, start=b0)
    memo: dict = {}
    active: set = set()

    def q(b: Belief, a: int) -> float:
        return math.fsum(p * (c + v(child)) for p, c, child in exact_segments(model, b, a))

    def v(b: Belief) -> float:
        leaf = _leaf_value(model, b)
        if leaf is not None:
            return leaf
        k = b.ident()
        if k in memo:
            return memo[k]
        if k in active:
            raise CycleError("belief recurs without cost; no finite horizon")
        if len(memo) >= cap:
            raise OracleCapExceeded(f"more than {cap} beliefs")
        active.add(k)
        if model.is_choice(b.machine):
            acts = model.allowed_actions(b)
            qs = {a: q(b, a) for a in acts}
            best = min(qs.values())
            opt = [a for a in acts if qs[a] <= best + TIE_TOL]
            sol.policy[k] = (b, opt[0], opt, qs)
        else:
            best = q(b, 0)
        active.discard(k)
        memo[k] = best
        return best

    sol.value = v(b0)
    return sol


def evaluate_policy(model: GenerativeModel, b0: Belief, choose, cap: int = 200_000) -> float:
    """Exact expected cost of following ``choose(belief) -> action`` at every choice."""
    memo: dict = {}

    def v(b: Belief) -> float:
        leaf = _leaf_value(model, b)
        if leaf is not None:
            return leaf
        k = b.ident()
        if k not in memo:
            if len(memo) >= cap:
                raise OracleCapExceeded(f"more than {cap} beliefs")
            a = choose(b) if model.is_choice(b.machine) else 0
            memo[k] = math.fsum(p * (c + v(child)) for p, c, child in exact_segments(model, b, a))
        return memo[k]

    return v(b0)


# -- direct interpreter --------------------------------------------------------------


class _Tail(NamedTuple):
    args: tuple


class Interpreter:
    """Generator-based evaluator of poaps values straight from the syntax tree.

    ``run(args)`` yields requests and expects answers:
    ``("sample", [(value, p), ...])`` -> the drawn value;
    ``("choose", n, branch_min_costs or None)`` -> the branch index;
    ``("cost", cents)`` and ``("obs", o)`` -> nothing.
    The generator's return value is the program result; ``root_env`` holds the
    latest bindings of the entry activation.
    """

    def __init__(self, ps: ProgramSet, entry: str, registry: Registry):
        self.ps, self.entry, self.registry = ps, entry, registry
        self.spaces = analysis.infer_arg_spaces(ps, registry)
        self.min_table = analysis.min_costs(ps, registry)
        self.root_env: dict = {}
        self._costs: dict[int, tuple] = {}

    def run(self, args: tuple):
        return (yield from self._call(self.entry, tuple(args), root=True))

    def _call(self, name: str, args: tuple, root: bool = False):
        d = self.ps.defs[name]
        first = True
        while True:
            env = {}
            for v, a in zip(self.spaces[name], args):
                hidden = not (v.observable or is_observed(v.space))
                if (root and first and hidden) or (not is_observed(v.space) and not v.space.contains(a)):
                    sup = v.space.support()
                    a = yield ("sample", [(x, 1.0 / len(sup)) for x in sup])
                env[v.variable] = a
            if root:
                self.root_env = env
            first = False
            r = yield from self._ev(d.body, env, name, True)
            if isinstance(r, _Tail):
                args = r.args
                continue
            return r

    def _ev(self, e: Expr, env: dict, fname: str, tail: bool):
        if e.kind == "symbol":
            return env[e.value]
        if e.kind != "list" or e.quoted:
            return e.literal()
        head = e.head
        if head == "let":
            inner = dict(env)
            for b in e.items[1].items:
                inner[b.items[0].value] = yield from self._ev(b.items[1], inner, fname, False)
            return (yield from self._ev(e.items[2], inner, fname, tail))
        if head == "if":
            t = yield from self._ev(e.items[1], env, fname, False)
            k = 0 if t is not False else 1
            yield ("obs", f"branch-{k}")
            return (yield from self._ev(e.items[2 + k], env, fname, tail))
        if head == "choose":
            if is_dynamic_choose(e):
                lst = yield from self._ev(e.items[1], env, fname, False)
                i = yield ("choose", len(lst), None)
                return lst[i]
            branches = e.items[1:]
            costs = self._costs.get(e.eid)
            if costs is None:
                costs = self._costs[e.eid] = tuple(
                    analysis.expr_min_cost(b, self.ps, self.registry, self.min_table) for b in branches)
            i = yield ("choose", len(branches), costs)
            return (yield from self._ev(branches[i], env, fname, tail))
        args = []
        for a in e.items[1:]:
            args.append((yield from self._ev(a, env, fname, False)))
        args = tuple(args)
        if head in self.ps.defs:
            if tail and head == fname:
                return _Tail(args)
            return (yield from self._call(head, args))
        prim = self.registry.lookup(head)
        yield ("cost", prim_cost(prim, args))
        r = yield ("sample", [(v, p) for v, p in prim.transition(args) if p > 0])
        if prim.emits:
            w = yield ("sample", [(v, p) for v, p in prim.observation_dist(r) if p > 0])
            yield ("obs", w)
        return r


class _Leaf(NamedTuple):
    prob: float
    inputs: tuple
    obs: tuple
    cost: float
    done: bool
    info: object    # choose request, or (root_env, result) when done


def exact_history_mdp(ps: ProgramSet, entry: str, registry: Registry, args: tuple,
                      goal: GoalSpec, cap: int = 2_000_000) -> float:
    """Optimal expected cost by dynamic programming over full histories.

    Each history node holds the world trajectories consistent with it; every
    trajectory is stored as the list of answers fed to the interpreter and is
    replayed from the beginning whenever it is extended.
    """
    interp = Interpreter(ps, entry, registry)
    budget = [cap]

    def resume(inputs: tuple):
        gen = interp.run(args)
        total = 0.0
        try:
            req = next(gen)
            for x in inputs:
                while req[0] in ("cost", "obs"):
                    if req[0] == "cost":
                        total += req[1]
                    req = gen.send(None)
                req = gen.send(x)
        except StopIteration as stop:
            # the last answer finished the program
            return None, stop.value, total
        return gen, req, total

    def explore(inputs: tuple, prob: float, obs: tuple, out: list) -> None:
        budget[0] -= 1
        if budget[0] < 0:
            raise OracleCapExceeded(f"more than {cap} trajectory extensions")
        gen, req, total = resume(inputs)
        if gen is None:
            out.append(_Leaf(prob, inputs, obs, total, True, (dict(interp.root_env), req)))
            return
        try:
            while True:
                if req[0] == "cost":
                    total += req[1]
                    req = gen.send(None)
                elif req[0] == "obs":
                    obs = obs + (req[1],)
                    req = gen.send(None)
                elif req[0] == "sample":
                    for v, p in req[1]:
                        explore(inputs + (v,), prob * p, obs, out)
                    return
                else:
                    out.append(_Leaf(prob, inputs, obs, total, False, req))
                    return
        except StopIteration as stop:
            out.append(_Leaf(prob, inputs, obs, total, True, (dict(interp.root_env), stop.value)))

    def replay_env(leaf: _Leaf) -> dict:
        # root bindings are captured at termination; nothing to do for choice leaves
        return leaf.info[0]

    def group(leaves: list[_Leaf]) -> list[tuple[float, list[_Leaf]]]:
        groups: dict = {}
        for lf in leaves:
            groups.setdefault(lf.obs, []).append(lf)
        out = []
        for key in sorted(groups, key=repr):
            g = groups[key]
            mass = math.fsum(lf.prob for lf in g)
            out.append((mass, [lf._replace(prob=lf.prob / mass) for lf in g]))
        return out

    def value(node: list[_Leaf]) -> float:
        spent = math.fsum(lf.prob * lf.cost for lf in node)
        if node[0].done:
            if not all(lf.done for lf in node):
                raise RuntimeError("history mixes finished and unfinished worlds")
            worlds = [(lf.prob, replay_env(lf), lf.info[1]) for lf in node]
            return 0.0 if goal.satisfied(worlds) else goal.fail_penalty
        if spent > goal.horizon + 1e-9:
            return goal.fail_penalty
        _, n, costs = node[0].info
        if n == 0:
            return goal.fail_penalty
        acts = list(range(n))
        if costs is not None:
            ok = [a for a in acts if spent + costs[a] <= goal.horizon + 1e-9]
            acts = ok or [a for a in acts if costs[a] == min(costs)]
        best = math.inf
        for a in acts:
            leaves: list[_Leaf] = []
            for lf in node:
                explore(lf.inputs + (a,), lf.prob, (), leaves)
            total = 0.0
            for mass, g in group(leaves):
                step = math.fsum(lf.prob * lf.cost for lf in g) - spent
                total += mass * (step + value(g))
            best = min(best, total)
        return best

    leaves: list[_Leaf] = []
    explore((), 1.0, (), leaves)
    return math.fsum(mass * (math.fsum(lf.prob * lf.cost for lf in g) + value(g))
                     for mass, g in group(leaves))
