"""Joint (machine, control) POMDP assembled from compiled HAMs.

A machine state is a tuple of activation records ``(definition, node, routes)``
from root to top; ``routes`` records which branch each ``if``/``choose`` of the
activation took.  A control state is the parallel tuple of ``(env, slots)``
records holding poaps values.  The same stepping code runs in two modes: poaps
mode enumerates the model's outcome distribution, Normal mode asks a world
adapter for the one real outcome.
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from itertools import product
from typing import Callable, NamedTuple

from . import analysis
from .ham import Ham, compile_all
from .primitives import Registry, cost as prim_cost, is_observed
from .reader import ProgramSet, is_dynamic_choose

WEIGHT_TOL = 1e-9
UNSET = None


class ModelError(Exception):
    pass


class ActionNotAvailable(ModelError):
    pass


class BeliefCollapse(ModelError):
    """No particle is consistent with an observation."""


# -- goals --------------------------------------------------------------------

TIERS = {"Satisfactory": 0.6, "Excellent": 0.8, "Almost-Perfect": 0.9}


@dataclass(frozen=True)
class GoalSpec:
    """Goal predicate over terminal beliefs plus a cost horizon.

    ``success(root_env, ret)`` judges one world; the predicate holds when the
    belief mass of successful worlds is at least ``epsilon``.
    """

    kind: str
    epsilon: float
    horizon: float
    fail_penalty: float
    success: Callable[[dict, object], bool]
    params: tuple = ()

    def satisfied(self, worlds) -> bool:
        """``worlds`` is an iterable of ``(weight, root_env, ret)``."""
        mass = sum(w for w, env, ret in worlds if self.success(env, ret))
        return mass >= self.epsilon - 1e-12

    def describe(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in self.params)
        return f"{self.kind} epsilon={self.epsilon} horizon={self.horizon} penalty={self.fail_penalty} {extra}".strip()


def elicit_goal(kind: str, epsilon: float, budget: float, *, tier: str | None = None,
                answer_args=("a0", "a1"), rocks_arg="rocks", remaining: int = 0,
                fail_penalty: float | None = None, min_cost: float = 0.0) -> GoalSpec:
    """Map a stated target and budget to a :class:`GoalSpec`.

    kinds: ``answer-accuracy`` (returned boolean equals ``quality(a0) >= quality(a1)``),
    ``quality-tier`` (returned text quality at least the tier threshold),
    ``rocks-sampled`` (at most ``remaining`` rocks left unsampled).
    """
    if not (0.5 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0.5, 1], got {epsilon}")
    if budget <= 0 or budget < min_cost:
        raise ValueError(f"budget {budget} cannot pay for the cheapest primitive ({min_cost})")
    penalty = 10.0 * budget if fail_penalty is None else float(fail_penalty)
    if kind == "answer-accuracy":
        a0, a1 = answer_args

        def success(env, ret):
            return ret is (env[a0] >= env[a1])

        return GoalSpec(kind, epsilon, float(budget), penalty, success, (("answers", f"{a0},{a1}"),))
    if kind == "quality-tier":
        if tier not in TIERS:
            raise ValueError(f"unknown quality tier {tier!r}")
        q_star = TIERS[tier]

        def success(env, ret):
            return isinstance(ret, float) and ret >= q_star

        return GoalSpec(kind, epsilon, float(budget), penalty, success, (("tier", tier), ("q*", q_star)))
    if kind == "rocks-sampled":

        def success(env, ret):
            return len(env[rocks_arg]) <= remaining

        return GoalSpec(kind, epsilon, float(budget), penalty, success, (("remaining", remaining),))
    raise ValueError(f"unknown goal kind {kind!r}")


# -- layouts ----------------------------------------------------------------------


@dataclass
class Layout:
    """Storage plan of one definition's activation record."""

    name: str
    params: tuple
    var_index: dict
    slot_index: dict
    route_index: dict
    resolve: dict
    arg_spaces: tuple
    body_eid: int

    @property
    def empty_slots(self) -> tuple:
        return (UNSET,) * len(self.slot_index)

    @property
    def empty_routes(self) -> tuple:
        return (-1,) * len(self.route_index)

    def fresh_env(self, args: tuple) -> tuple:
        return tuple(args) + (UNSET,) * (len(self.var_index) - len(self.params))


def build_layout(d, ps: ProgramSet, schema: analysis.ControlSchema) -> Layout:
    var_index = {p: i for i, p in enumerate(d.params)}
    slot_index: dict[int, int] = {}
    route_index: dict[int, int] = {}
    resolve: dict[int, tuple] = {}

    def visit(e):
        if e.kind == "symbol":
            resolve[e.eid] = ("var", var_index[e.value])
            return
        if e.kind != "list" or e.quoted:
            resolve[e.eid] = ("const", e.literal())
            return
        head = e.head
        if head == "let":
            for b in e.items[1].items:
                visit(b.items[1])
                name = b.items[0].value
                var_index.setdefault(name, len(var_index))
                resolve[b.eid] = ("var", var_index[name])
            visit(e.items[2])
            resolve[e.eid] = ("alias", e.items[2].eid)
            return
        for a in e.items[1:]:
            visit(a)
        if head == "choose":
            route_index[e.eid] = len(route_index)
            if is_dynamic_choose(e):
                resolve[e.eid] = ("dyn", route_index[e.eid], e.items[1].eid)
            else:
                resolve[e.eid] = ("route", route_index[e.eid], tuple(a.eid for a in e.items[1:]))
        elif head == "if":
            route_index[e.eid] = len(route_index)
            resolve[e.eid] = ("route", route_index[e.eid], (e.items[2].eid, e.items[3].eid))
        else:
            slot_index[e.eid] = len(slot_index)
            resolve[e.eid] = ("slot", slot_index[e.eid])

    visit(d.body)
    return Layout(d.name, tuple(d.params), var_index, slot_index, route_index, resolve,
                  tuple(v.space for v in schema.args), d.body.eid)


def value_of(layout: Layout, routes: tuple, cframe: tuple, eid: int):
    while True:
        r = layout.resolve[eid]
        kind = r[0]
        if kind == "var":
            return cframe[0][r[1]]
        if kind == "slot":
            return cframe[1][r[1]]
        if kind == "const":
            return r[1]
        if kind == "alias":
            eid = r[1]
        elif kind == "route":
            b = routes[r[1]]
            if b < 0:
                return UNSET
            eid = r[2][b]
        else:  # dyn
            b = routes[r[1]]
            if b < 0:
                return UNSET
            return value_of(layout, routes, cframe, r[2])[b]


def _replace(t: tuple, i: int, v) -> tuple:
    return t[:i] + (v,) + t[i + 1:]


def truthy(v) -> bool:
    return v is not False


# -- value semantics ---------------------------------------------------------------


class PoapsOps:
    """Poaps-value semantics: every stochastic choice is enumerated."""

    normal = False

    def apply(self, prim, args: tuple):
        c = prim_cost(prim, args)
        out = []
        for r, p in prim.transition(args):
            if p <= 0.0:
                continue
            if prim.emits:
                for w, q in prim.observation_dist(r):
                    if p * q > 0.0:
                        out.append((p * q, r, (w,), c))
            else:
                out.append((p, r, (), c))
        return out

    def bind(self, space, value):
        if is_observed(space) or space.contains(value):
            return [(1.0, value)]
        support = space.support()
        return [(1.0 / len(support), v) for v in support]


class NormalOps:
    """Normal-value semantics backed by a world adapter (one outcome per step)."""

    normal = True

    def __init__(self, world, rng: random.Random):
        self.world, self.rng = world, rng

    def apply(self, prim, args: tuple):
        if prim.user_fn is not None:
            r = prim.user_fn(*args)
            obs = (r,) if prim.emits else ()
        else:
            r, w = self.world.execute_primitive(prim.name, args, self.rng)
            obs = (w,) if prim.emits else ()
        return [(1.0, r, obs, prim_cost(prim, args))]

    def bind(self, space, value):
        return [(1.0, value)]


POAPS = PoapsOps()


# -- joint states and beliefs -------------------------------------------------------


class JointState(NamedTuple):
    machine: tuple
    control: tuple


class Belief:
    """Weighted particles over control states sharing one machine state.

    Particles are de-duplicated: ``particles`` maps each distinct control state
    to its weight.  Instances are treated as immutable.
    """

    __slots__ = ("machine", "particles", "spent", "_ident", "_key")

    def __init__(self, machine: tuple, particles: dict, spent: float = 0.0):
        self.machine = machine
        self.particles = particles
        self.spent = spent
        self._ident = None
        self._key = None

    def total(self) -> float:
        return math.fsum(self.particles.values())

    def ident(self) -> bytes:
        """Content digest: machine, spent cents and particles with weights rounded at 1e-12.

        Independent of particle order and stable across processes.
        """
        if self._ident is None:
            h = hashlib.blake2b(digest_size=16)
            h.update(repr((self.machine, round(self.spent, 9))).encode())
            for line in sorted(repr((c, round(w, 12))) for c, w in self.particles.items()):
                h.update(line.encode())
                h.update(b"\n")
            self._ident = h.digest()
        return self._ident

    def digest(self) -> int:
        """Integer form of :meth:`ident` (seeds deterministic resampling)."""
        return int.from_bytes(self.ident()[:8], "big")

    def __len__(self) -> int:
        return len(self.particles)

    def __repr__(self) -> str:
        return f"Belief(machine={self.machine[-1][:2]}, particles={len(self.particles)}, spent={self.spent})"


# -- the model ----------------------------------------------------------------------


class GenerativeModel:
    """Compiled program ready for simulation, belief tracking and planning."""

    def __init__(self, ps: ProgramSet, entry: str, registry: Registry, goal: GoalSpec | None = None,
                 hams: dict | None = None, schemas: dict | None = None):
        self.ps, self.entry, self.registry, self.goal = ps, entry, registry, goal
        self.schemas = schemas or analysis.build_schema(ps, entry, registry)
        names = sorted(self.schemas)
        self.hams: dict[str, Ham] = hams or compile_all(ps, registry, names)
        missing = [n for n in self.schemas if n not in self.hams]
        if missing:
            raise ModelError(f"missing HAM for {', '.join(missing)}")
        self.layouts = {n: build_layout(ps.defs[n], ps, self.schemas[n]) for n in names}
        self.min_cost_table = analysis.min_costs(ps, registry)
        self.branch_costs: dict[tuple, tuple] = {}
        for n in names:
            d = ps.defs[n]
            for s in self.hams[n].states.values():
                if s.kind == "Choice" and not s.dynamic:
                    self.branch_costs[(n, s.id)] = tuple(
                        analysis.expr_min_cost(d.expr(b), ps, registry, self.min_cost_table)
                        for b in s.branches)
        self.dead_end_cents = goal.fail_penalty if goal else 1e6

    # machine-level queries

    def node(self, machine: tuple):
        name, nid, _ = machine[-1]
        return self.hams[name].states[nid]

    def is_terminal(self, machine: tuple) -> bool:
        return len(machine) == 1 and self.node(machine).kind == "Stop"

    def is_choice(self, machine: tuple) -> bool:
        return self.node(machine).kind == "Choice"

    def available_actions(self, machine: tuple, control: tuple | None = None) -> list[int]:
        s = self.node(machine)
        if s.kind == "Stop" and len(machine) == 1:
            return []
        if s.kind != "Choice":
            return [0]
        if not s.dynamic:
            return list(range(len(s.branches)))
        if control is None:
            raise ModelError("dynamic choice needs a control state to count its branches")
        name, _, routes = machine[-1]
        lst = value_of(self.layouts[name], routes, control[-1], s.args[0])
        if not isinstance(lst, tuple):
            raise ModelError(f"choose over non-list value {lst!r}")
        return list(range(len(lst)))

    def allowed_actions(self, belief: Belief) -> list[int]:
        """Available actions filtered by the cost horizon."""
        control = next(iter(belief.particles))
        acts = self.available_actions(belief.machine, control)
        if self.goal is None or not acts:
            return acts
        s = self.node(belief.machine)
        if s.kind != "Choice" or s.dynamic:
            return acts
        costs = self.branch_costs[(belief.machine[-1][0], s.id)]
        ok = [a for a in acts if belief.spent + costs[a] <= self.goal.horizon + 1e-9]
        if ok:
            return ok
        cheapest = min(costs[a] for a in acts)
        return [a for a in acts if costs[a] == cheapest]

    def truncated(self, belief: Belief) -> bool:
        return (self.goal is not None and self.is_choice(belief.machine)
                and belief.spent > self.goal.horizon + 1e-9)

    def segment_end(self, belief: Belief) -> bool:
        return self.is_terminal(belief.machine) or self.is_choice(belief.machine)

    # values

    def return_value(self, machine: tuple, control: tuple):
        name, _, routes = machine[0]
        return value_of(self.layouts[name], routes, control[0], self.layouts[name].body_eid)

    def root_env(self, control: tuple) -> dict:
        layout = self.layouts[self.entry]
        env = control[0][0]
        return {p: env[i] for p, i in layout.var_index.items()}

    def terminal_cost(self, belief: Belief) -> float:
        if self.goal is None:
            return 0.0
        if not self.is_terminal(belief.machine):
            return self.goal.fail_penalty
        worlds = ((w, self.root_env(c), self.return_value(belief.machine, c))
                  for c, w in belief.particles.items())
        return 0.0 if self.goal.satisfied(worlds) else self.goal.fail_penalty

    def choice_dead_end(self, belief: Belief) -> bool:
        return self.is_choice(belief.machine) and not self.allowed_actions(belief)

    # initial states

    def start_machine(self) -> tuple:
        layout = self.layouts[self.entry]
        ham = self.hams[self.entry]
        return ((self.entry, ham.start, layout.empty_routes),)

    def initial_worlds(self, args: tuple):
        """Exact prior over control states as ``[(prob, control)]``, or None if not enumerable."""
        layout = self.layouts[self.entry]
        if len(args) != len(layout.params):
            raise ModelError(f"{self.entry} takes {len(layout.params)} arguments, got {len(args)}")
        choices = []
        for v, a in zip(self.schemas[self.entry].args, args):
            if v.observable or is_observed(v.space):
                choices.append(((1.0, a),))
            else:
                sup = v.space.support()
                if sup is None:
                    return None
                choices.append(tuple((1.0 / len(sup), x) for x in sup))
        out = []
        for combo in product(*choices):
            p = math.prod(c[0] for c in combo)
            env = layout.fresh_env(tuple(c[1] for c in combo))
            out.append((p, ((env, layout.empty_slots),)))
        return out

    def sample_control(self, args: tuple, rng: random.Random) -> tuple:
        layout = self.layouts[self.entry]
        if len(args) != len(layout.params):
            raise ModelError(f"{self.entry} takes {len(layout.params)} arguments, got {len(args)}")
        vals = []
        for v, a in zip(self.schemas[self.entry].args, args):
            if v.observable or is_observed(v.space):
                vals.append(a)
            else:
                vals.append(rng.choice(v.space.support()))
        return ((layout.fresh_env(tuple(vals)), layout.empty_slots),)

    def initial(self, args: tuple, rng: random.Random) -> JointState:
        return JointState(self.start_machine(), self.sample_control(args, rng))

    def initial_belief(self, args: tuple, particle_count: int, rng: random.Random,
                       exact: bool | None = None) -> Belief:
        """Observable arguments pinned to their Normal values, hidden ones uniform.

        With ``exact`` (default: when the hidden prior has at most
        ``particle_count`` points) the prior is enumerated instead of sampled.
        """
        worlds = None
        if exact is not False:
            worlds = self.initial_worlds(args)
            if worlds is not None and exact is None and len(worlds) > particle_count:
                worlds = None
        particles: dict = {}
        if worlds is not None:
            for p, c in worlds:
                particles[c] = particles.get(c, 0.0) + p
        else:
            w = 1.0 / particle_count
            for _ in range(particle_count):
                c = self.sample_control(args, rng)
                particles[c] = particles.get(c, 0.0) + w
        return Belief(self.start_machine(), _normalize(particles), 0.0)

    # stepping

    def transitions(self, machine: tuple, control: tuple, action: int, ops=POAPS):
        """All outcomes ``(prob, machine', control', observations, cents)`` of one step."""
        s = self.node(machine)
        name, nid, routes = machine[-1]
        layout = self.layouts[name]
        ham = self.hams[name]
        kind = s.kind
        if kind == "Choice":
            acts = self.available_actions(machine, control)
            if action not in acts:
                raise ActionNotAvailable(f"action {action} not in {acts} at {name}:{nid}")
            routes = _replace(routes, layout.route_index[s.eid], action)
            if s.dynamic:
                return self._leave(s, machine[:-1], (name, nid, routes), control, (), 0.0, 1.0, ops)
            return [(1.0, machine[:-1] + ((name, s.successors[action], routes),), control, (), 0.0)]
        if action != 0:
            raise ActionNotAvailable(f"only the default action exists at {name}:{nid} ({kind})")
        if kind == "Start" or kind == "Obs":
            return [(1.0, machine[:-1] + ((name, s.successors[0], routes),), control, (), 0.0)]
        frame = control[-1]
        if kind == "Action":
            t = s.target
            if t in ("var", "const"):
                return self._leave(s, machine[:-1], (name, nid, routes), control, (), 0.0, 1.0, ops)
            if t == "bind":
                v = value_of(layout, routes, frame, s.args[0])
                env = _replace(frame[0], layout.var_index[s.name], v)
                ctl = control[:-1] + ((env, frame[1]),)
                return self._leave(s, machine[:-1], (name, nid, routes), ctl, (), 0.0, 1.0, ops)
            prim = self.registry.lookup(t)
            args = tuple(value_of(layout, routes, frame, a) for a in s.args)
            out = []
            si = layout.slot_index[s.eid]
            for p, r, obs, c in ops.apply(prim, args):
                ctl = control[:-1] + ((frame[0], _replace(frame[1], si, r)),)
                out.extend(self._leave(s, machine[:-1], (name, nid, routes), ctl, obs, c, p, ops))
            return out
        if kind == "Call":
            args = tuple(value_of(layout, routes, frame, a) for a in s.args)
            callee = self.layouts[s.target]
            binds = [ops.bind(sp, v) for sp, v in zip(callee.arg_spaces, args)]
            out = []
            for combo in product(*binds):
                p = math.prod(b[0] for b in combo)
                env = callee.fresh_env(tuple(b[1] for b in combo))
                if s.tail:
                    m = machine[:-1] + ((name, s.successors[0], layout.empty_routes),)
                    ctl = control[:-1] + ((env, layout.empty_slots),)
                else:
                    m = machine + ((s.target, self.hams[s.target].start, callee.empty_routes),)
                    ctl = control + ((env, callee.empty_slots),)
                out.append((p, m, ctl, (), 0.0))
            return out
        if kind == "Stop":
            if len(machine) == 1:
                raise ActionNotAvailable("program has terminated")
            v = value_of(layout, routes, frame, layout.body_eid)
            cname, cnid, croutes = machine[-2]
            caller = self.layouts[cname]
            call = self.hams[cname].states[cnid]
            cframe = control[-2]
            ctl = control[:-2] + ((cframe[0], _replace(cframe[1], caller.slot_index[call.eid], v)),)
            return self._leave(call, machine[:-2], (cname, cnid, croutes), ctl, (), 0.0, 1.0, ops)
        raise ModelError(f"unknown state kind {kind}")

    def _leave(self, s, below: tuple, top: tuple, control: tuple, obs: tuple, cents: float,
               p: float, ops):
        """Move past state ``s``; the end of an ``if`` test routes on the test value."""
        name, _, routes = top
        if s.cond is None:
            return [(p, below + ((name, s.successors[0], routes),), control, obs, cents)]
        layout = self.layouts[name]
        v = value_of(layout, routes, control[-1], self._test_eid(name, s.cond))
        k = 0 if truthy(v) else 1
        routes = _replace(routes, layout.route_index[s.cond], k)
        return [(p, below + ((name, s.successors[k], routes),), control,
                 obs + (f"branch-{k}",), cents)]

    def _test_eid(self, name: str, if_eid: int) -> int:
        return self.ps.defs[name].expr(if_eid).items[1].eid

    def step(self, state: JointState, action: int, rng: random.Random):
        """Sample one step of a single world: ``(state', observations, cents)``."""
        outs = self.transitions(state.machine, state.control, action)
        u = rng.random()
        acc = 0.0
        for p, m, c, obs, cents in outs:
            acc += p
            if u < acc:
                return JointState(m, c), obs, cents
        p, m, c, obs, cents = outs[-1]
        return JointState(m, c), obs, cents

    # beliefs

    def belief_step(self, belief: Belief, action: int, max_support: int | None = None) -> dict:
        """Advance every particle one step; group outcomes by observation.

        Returns ``{observations: (probability, expected cents, Belief)}``; each
        child belief is normalized and shares a single machine state.
        """
        s = self.node(belief.machine)
        if s.kind in ("Start", "Obs") or (s.kind == "Action" and s.target in ("var", "const")
                                          and s.cond is None):
            outs = self.transitions(belief.machine, next(iter(belief.particles)), action)
            m = outs[0][1]
            return {(): (1.0, 0.0, Belief(m, belief.particles, belief.spent))}
        groups: dict = {}
        for c, w in belief.particles.items():
            for p, m, c2, obs, cents in self.transitions(belief.machine, c, action):
                pw = w * p
                if pw <= 0.0:
                    continue
                g = groups.get(obs)
                if g is None:
                    g = groups[obs] = [0.0, 0.0, m, {}]
                elif g[2] != m:
                    raise ModelError(f"worlds split machine state without an observation at {m[-1][:2]}")
                g[0] += pw
                g[1] += pw * cents
                g[3][c2] = g[3].get(c2, 0.0) + pw
        out = {}
        for obs, (mass, cmass, m, parts) in groups.items():
            child = Belief(m, _normalize(parts), belief.spent + cmass / mass)
            if max_support is not None and len(child.particles) > max_support:
                child = resample(child, max_support)
            out[obs] = (mass, cmass / mass, child)
        return out

    def condition(self, belief: Belief, action: int, observations: tuple,
                  max_support: int | None = None) -> tuple[Belief, float]:
        """Belief after ``action`` given the real ``observations``; returns (belief, cents)."""
        outs = self.belief_step(belief, action, max_support)
        if observations not in outs:
            raise BeliefCollapse(f"observation {observations!r} has zero probability "
                                 f"(expected one of {list(outs)})")
        _, cents, child = outs[observations]
        return child, cents


def _normalize(particles: dict) -> dict:
    total = math.fsum(particles.values())
    if total <= 0.0:
        raise BeliefCollapse("all particle weights are zero")
    return {c: w / total for c, w in particles.items()}


def resample(belief: Belief, n: int) -> Belief:
    """Systematic resampling to ``n`` draws, seeded by the belief's content."""
    rng = random.Random(belief.digest())
    items = list(belief.particles.items())
    u0 = rng.random() / n
    counts: dict = {}
    j = 0
    cw = items[0][1]
    for i in range(n):
        u = u0 + i / n
        while u > cw and j < len(items) - 1:
            j += 1
            cw += items[j][1]
        c = items[j][0]
        counts[c] = counts.get(c, 0) + 1
    return Belief(belief.machine, {c: k / n for c, k in counts.items()}, belief.spent)


def assemble(ps: ProgramSet, entry: str, registry: Registry, goal: GoalSpec | None = None,
             hams: dict | None = None, schemas: dict | None = None) -> GenerativeModel:
    return GenerativeModel(ps, entry, registry, goal, hams, schemas)


# -- belief summaries ------------------------------------------------------------------


def marginals(model: GenerativeModel, belief: Belief) -> dict:
    """Per-slot marginal distributions keyed by ``(depth, 'v'|'s', name-or-eid)``."""
    out: dict = {}
    names = [f[0] for f in belief.machine]
    layouts = [model.layouts[n] for n in names]
    var_names = [{i: v for v, i in lay.var_index.items()} for lay in layouts]
    slot_eids = [{i: e for e, i in lay.slot_index.items()} for lay in layouts]
    for c, w in belief.particles.items():
        for depth, (env, slots) in enumerate(c):
            for i, v in enumerate(env):
                key = (depth, "v", var_names[depth][i])
                h = out.setdefault(key, {})
                h[v] = h.get(v, 0.0) + w
            for i, v in enumerate(slots):
                key = (depth, "s", slot_eids[depth][i])
                h = out.setdefault(key, {})
                h[v] = h.get(v, 0.0) + w
    return out


def belief_key(model: GenerativeModel, belief: Belief, k: int = 10) -> bytes:
    """Discretized belief: machine state, spent cents and marginals rounded to 1/k."""
    if belief._key is not None and belief._key[0] == k:
        return belief._key[1]
    parts = [repr(belief.machine), f"{belief.spent:.6f}"]
    for key, hist in sorted(marginals(model, belief).items(), key=lambda kv: repr(kv[0])):
        cells = sorted((repr(v), round(w * k)) for v, w in hist.items())
        parts.append(repr(key) + ":" + ",".join(f"{v}={n}" for v, n in cells if n))
    out = "|".join(parts).encode()
    belief._key = (k, out)
    return out
