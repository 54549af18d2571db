"""Static analysis: the control-state space of a program.

Argument spaces come from the domains of the primitives that consume each
argument (propagated through user-function calls by parameter position); every
evaluable subexpression gets a slot whose space is the range of whatever
produces it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .primitives import OBSERVED, is_observed
from .reader import Expr, ProgramDef, ProgramSet, is_dynamic_choose


class SpaceConflict(Exception):
    def __init__(self, definition: str, variable: str, first, second):
        self.definition, self.variable = definition, variable
        self.sites = (first, second)
        super().__init__(
            f"{definition}: argument {variable!r} used with {first[0].describe()} at {first[1]} "
            f"and {second[0].describe()} at {second[1]}"
        )


class ResolutionError(Exception):
    pass


@dataclass(frozen=True)
class VarSpace:
    variable: str
    space: object
    observable: bool


@dataclass
class ControlSchema:
    name: str
    args: list[VarSpace]
    expr_slots: dict[int, object]
    callees: set[str] = field(default_factory=set)

    def arg(self, name: str) -> VarSpace:
        for v in self.args:
            if v.variable == name:
                return v
        raise KeyError(name)


# -- traversal helpers --------------------------------------------------------


def applications(expr: Expr):
    """Yield every non-special-form application (head, args, expr) under ``expr``."""
    if expr.kind != "list" or expr.quoted or not expr.items:
        return
    head = expr.head
    if head == "let":
        for b in expr.items[1].items:
            yield from applications(b.items[1])
        yield from applications(expr.items[2])
        return
    if head not in ("choose", "if"):
        yield head, expr.items[1:], expr
    for item in expr.items[1:]:
        yield from applications(item)


def subexpressions(expr: Expr):
    """Pre-order evaluable subexpressions: call heads and let binding syntax are skipped,
    but each ``(name value)`` binding pair stands for the slot of ``name``."""
    yield expr
    if expr.kind != "list" or expr.quoted or not expr.items:
        return
    if expr.head == "let":
        for b in expr.items[1].items:
            yield b
            yield from subexpressions(b.items[1])
        yield from subexpressions(expr.items[2])
        return
    for item in expr.items[1:]:
        yield from subexpressions(item)


def callees(d: ProgramDef, ps: ProgramSet) -> set[str]:
    return {h for h, _, _ in applications(d.body) if h in ps.defs}


# -- argument spaces -----------------------------------------------------------


def infer_arg_spaces(ps: ProgramSet, registry, initial: dict | None = None) -> dict[str, list[VarSpace]]:
    """Fixpoint over parameter spaces; raises :class:`SpaceConflict`."""
    spaces = {
        name: {p: OBSERVED for p in d.params} for name, d in ps.defs.items()
    }
    observ = {name: {p: True for p in d.params} for name, d in ps.defs.items()}
    if initial:
        for name, vs in initial.items():
            for v in vs:
                spaces[name][v.variable] = v.space
                observ[name][v.variable] = v.observable
    changed = True
    while changed:
        changed = False
        for name, d in ps.defs.items():
            uses: dict[str, list] = {p: [] for p in d.params}
            for head, args, app in applications(d.body):
                for i, a in enumerate(args):
                    if a.kind != "symbol" or a.value not in uses:
                        continue
                    site = f"{head} arg {i} (bytes {app.span[0]}..{app.span[1]})"
                    if head in ps.defs:
                        callee = ps.defs[head]
                        if i >= len(callee.params):
                            continue
                        cp = callee.params[i]
                        uses[a.value].append((spaces[head][cp], observ[head][cp], site))
                    elif head in registry:
                        prim = registry.lookup(head)
                        if i < prim.arity:
                            uses[a.value].append((prim.domain[i], prim.observable[i], site))
            for p, us in uses.items():
                concrete = [u for u in us if not is_observed(u[0])]
                space, obs = OBSERVED, True
                if concrete:
                    first = concrete[0]
                    for other in concrete[1:]:
                        if other[0] != first[0]:
                            raise SpaceConflict(name, p, (first[0], first[2]), (other[0], other[2]))
                    space = first[0]
                    obs = all(u[1] for u in concrete)
                if space != spaces[name][p] or obs != observ[name][p]:
                    spaces[name][p], observ[name][p] = space, obs
                    changed = True
    return {
        name: [VarSpace(p, spaces[name][p], observ[name][p]) for p in d.params]
        for name, d in ps.defs.items()
    }


# -- subexpression slots -----------------------------------------------------------


def _return_spaces(ps: ProgramSet, registry, args: dict) -> dict[str, object]:
    ret = {name: OBSERVED for name in ps.defs}
    for _ in range(len(ps.defs) + 1):
        changed = False
        for name, d in ps.defs.items():
            env = {v.variable: v.space for v in args[name]}
            s = _expr_space(d.body, env, ps, registry, ret, {})
            if s != ret[name]:
                ret[name], changed = s, True
        if not changed:
            break
    return ret


def _expr_space(e: Expr, env: dict, ps, registry, ret: dict, out: dict):
    if e.kind == "symbol":
        s = env.get(e.value, OBSERVED)
    elif e.kind != "list" or e.quoted:
        s = OBSERVED
    elif e.head == "let":
        inner = dict(env)
        for b in e.items[1].items:
            bs = _expr_space(b.items[1], inner, ps, registry, ret, out)
            inner[b.items[0].value] = bs
            out[b.eid] = bs
        s = _expr_space(e.items[2], inner, ps, registry, ret, out)
    elif e.head in ("choose", "if"):
        branch_exprs = e.items[1:]
        spaces = [_expr_space(a, env, ps, registry, ret, out) for a in branch_exprs]
        if is_dynamic_choose(e):
            s = OBSERVED
        else:
            branches = spaces[1:] if e.head == "if" else spaces
            s = next((x for x in branches if not is_observed(x)), OBSERVED)
    else:
        for a in e.items[1:]:
            _expr_space(a, env, ps, registry, ret, out)
        if e.head in ps.defs:
            s = ret[e.head]
        else:
            s = registry.lookup(e.head).range
    out[e.eid] = s
    return s


def enumerate_subexpressions(d: ProgramDef, arg_spaces: list[VarSpace], ps: ProgramSet,
                             registry, ret_spaces: dict | None = None) -> list[tuple[int, object]]:
    if ret_spaces is None:
        ret_spaces = _return_spaces(ps, registry, infer_arg_spaces(ps, registry))
    out: dict[int, object] = {}
    _expr_space(d.body, {v.variable: v.space for v in arg_spaces}, ps, registry, ret_spaces, out)
    return [(e.eid, out[e.eid]) for e in subexpressions(d.body)]


def build_schema(ps: ProgramSet, entry: str, registry) -> dict[str, ControlSchema]:
    """Schemas for ``entry`` and every definition it reaches."""
    if entry not in ps.defs:
        raise ResolutionError(f"no definition named {entry!r}")
    seen, todo = set(), [entry]
    while todo:
        name = todo.pop()
        if name in seen:
            continue
        seen.add(name)
        for head, _, app in applications(ps.defs[name].body):
            if head in ps.defs:
                todo.append(head)
            elif head not in registry:
                raise ResolutionError(f"{name}: call to undefined {head!r}")
    args = infer_arg_spaces(ps, registry)
    ret = _return_spaces(ps, registry, args)
    schemas: dict[str, ControlSchema] = {}
    todo = [entry]
    while todo:
        name = todo.pop()
        if name in schemas:
            continue
        d = ps.defs[name]
        slots = dict(enumerate_subexpressions(d, args[name], ps, registry, ret))
        cs = callees(d, ps)
        schemas[name] = ControlSchema(name, args[name], slots, cs)
        todo.extend(sorted(cs))
    return schemas


# -- static cost bounds -------------------------------------------------------------


def min_costs(ps: ProgramSet, registry, max_rounds: int = 200) -> dict[str, float]:
    """Least cost of evaluating each definition's body to a value (shortest path, cents)."""
    # start from "never terminates" and relax downwards; definitions with no
    # terminating path stay at infinity
    table = {name: math.inf for name in ps.defs}
    for _ in range(max_rounds):
        new = {name: expr_min_cost(d.body, ps, registry, table) for name, d in ps.defs.items()}
        if new == table:
            break
        table = new
    return table


def expr_min_cost(e: Expr, ps: ProgramSet, registry, table: dict) -> float:
    if e.kind != "list" or e.quoted:
        return 0.0
    head = e.head
    if head == "let":
        total = sum(expr_min_cost(b.items[1], ps, registry, table) for b in e.items[1].items)
        return total + expr_min_cost(e.items[2], ps, registry, table)
    if head == "choose":
        if is_dynamic_choose(e):
            return expr_min_cost(e.items[1], ps, registry, table)
        return min(expr_min_cost(a, ps, registry, table) for a in e.items[1:])
    if head == "if":
        t, a, b = e.items[1:]
        return expr_min_cost(t, ps, registry, table) + min(
            expr_min_cost(a, ps, registry, table), expr_min_cost(b, ps, registry, table)
        )
    args = sum(expr_min_cost(a, ps, registry, table) for a in e.items[1:])
    if head in ps.defs:
        return args + table[head]
    return args + registry.lookup(head).min_cost()


# -- report ------------------------------------------------------------------------


def report(schemas: dict[str, ControlSchema]) -> str:
    lines = []
    for name in sorted(schemas):
        s = schemas[name]
        lines.append(f"definition {name}")
        for v in s.args:
            vis = "observable" if v.observable or is_observed(v.space) else "hidden"
            lines.append(f"  arg {v.variable}: {v.space.describe()} ({vis})")
        lines.append(f"  slots: {len(s.expr_slots)}")
        lines.append(f"  callees: {', '.join(sorted(s.callees)) or '-'}")
    return "\n".join(lines) + "\n"
