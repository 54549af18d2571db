"""Compile definitions into hierarchical abstract machines.

Each definition becomes a :class:`Ham` whose states mark the program counter:
Start, Stop, Action (symbol, constant, primitive or let binding), Call (user
function), Choice (a ``choose`` form) and Obs (branch announcement after an
``if``).  The node that finishes an ``if`` test carries ``cond`` and routes to
one of two Obs states.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .reader import Expr, ProgramDef, ProgramSet, format_value, is_dynamic_choose

KINDS = ("Start", "Stop", "Action", "Call", "Choice", "Obs")


@dataclass
class HamState:
    id: int
    kind: str
    eid: int | None = None
    target: str | None = None
    args: tuple = ()
    branches: tuple = ()
    successors: list = field(default_factory=list)
    tail: bool = False
    dynamic: bool = False
    cond: int | None = None
    branch: int | None = None
    name: str | None = None
    literal: object = None


@dataclass
class Ham:
    name: str
    states: dict[int, HamState]
    start: int
    stops: list[int]
    body_eid: int

    def __getitem__(self, i: int) -> HamState:
        return self.states[i]

    def census(self) -> Counter:
        return Counter(s.kind for s in self.states.values())

    def check(self) -> None:
        preds = Counter(t for s in self.states.values() for t in s.successors)
        assert preds[self.start] == 0, "Start has predecessors"
        for s in self.states.values():
            if s.kind == "Stop":
                assert not s.successors, "Stop has successors"
            else:
                assert s.successors, f"state {s.id} has no successors"
            if s.kind == "Choice" and not s.dynamic:
                assert len(s.successors) >= 2 or len(s.branches) == 1
            if s.cond is not None:
                assert len(s.successors) == 2
        seen, todo = set(), [self.start]
        while todo:
            i = todo.pop()
            if i in seen:
                continue
            seen.add(i)
            todo.extend(self.states[i].successors)
        assert seen == set(self.states), "unreachable states"


class _Builder:
    def __init__(self, d: ProgramDef, ps: ProgramSet, registry):
        self.d, self.ps, self.registry = d, ps, registry
        self.states: dict[int, HamState] = {}

    def new(self, kind: str, **kw) -> HamState:
        s = HamState(len(self.states), kind, **kw)
        self.states[s.id] = s
        return s

    @staticmethod
    def link(exits: list[HamState], target: HamState) -> None:
        for s in exits:
            s.successors.append(target.id)

    def frag(self, e: Expr) -> tuple[HamState, list[HamState]]:
        """Compile ``e``; returns its entry state and the states that exit it."""
        if e.kind == "symbol":
            s = self.new("Action", eid=e.eid, target="var", name=e.value)
            return s, [s]
        if e.kind != "list" or e.quoted:
            s = self.new("Action", eid=e.eid, target="const", literal=e.literal())
            return s, [s]
        head = e.head
        if head == "choose":
            if is_dynamic_choose(e):
                entry, exits = self.frag(e.items[1])
                c = self.new("Choice", eid=e.eid, dynamic=True, args=(e.items[1].eid,))
                self.link(exits, c)
                return entry, [c]
            c = self.new("Choice", eid=e.eid, branches=tuple(a.eid for a in e.items[1:]))
            exits = []
            for a in e.items[1:]:
                entry, ex = self.frag(a)
                c.successors.append(entry.id)
                exits.extend(ex)
            return c, exits
        if head == "if":
            test, then, other = e.items[1:]
            entry, test_exits = self.frag(test)
            exits = []
            obs_states = []
            for k, branch in enumerate((then, other)):
                o = self.new("Obs", eid=e.eid, branch=k, branches=(then.eid, other.eid))
                b_entry, b_exits = self.frag(branch)
                o.successors.append(b_entry.id)
                obs_states.append(o)
                exits.extend(b_exits)
            for s in test_exits:
                s.cond = e.eid
                s.successors.extend(o.id for o in obs_states)
            return entry, exits
        if head == "let":
            entry = None
            exits: list[HamState] = []
            for b in e.items[1].items:
                v_entry, v_exits = self.frag(b.items[1])
                bind = self.new("Action", eid=b.eid, target="bind", name=b.items[0].value,
                                args=(b.items[1].eid,))
                self.link(v_exits, bind)
                if entry is None:
                    entry = v_entry
                else:
                    self.link(exits, v_entry)
                exits = [bind]
            b_entry, b_exits = self.frag(e.items[2])
            if entry is None:
                return b_entry, b_exits
            self.link(exits, b_entry)
            return entry, b_exits
        # application: arguments left to right, then the call itself
        args = e.items[1:]
        entry = None
        exits = []
        for a in args:
            a_entry, a_exits = self.frag(a)
            if entry is None:
                entry = a_entry
            else:
                self.link(exits, a_entry)
            exits = a_exits
        if head in self.ps.defs:
            s = self.new("Call", eid=e.eid, target=head, args=tuple(a.eid for a in args))
        else:
            s = self.new("Action", eid=e.eid, target=head, args=tuple(a.eid for a in args))
        self.link(exits, s)
        return (entry or s), [s]


def compile_program(d: ProgramDef, ps: ProgramSet, registry, tail_calls: bool = True) -> Ham:
    b = _Builder(d, ps, registry)
    start = b.new("Start")
    entry, exits = b.frag(d.body)
    start.successors.append(entry.id)
    stop = b.new("Stop")
    b.link(exits, stop)
    ham = Ham(d.name, b.states, start.id, [stop.id], d.body.eid)
    if tail_calls:
        ham = optimize_tail_calls(ham)
    ham.check()
    return ham


def optimize_tail_calls(ham: Ham) -> Ham:
    """Turn self-calls whose only continuation is Stop into loops back to the body entry."""
    loop_to = ham.states[ham.start].successors[0]
    stops = set(ham.stops)
    for s in ham.states.values():
        if s.kind == "Call" and s.target == ham.name and s.successors and set(s.successors) <= stops:
            s.tail = True
            s.successors = [loop_to]
    preds = {t for st in ham.states.values() for t in st.successors}
    for i in [i for i in ham.stops if i not in preds]:
        del ham.states[i]
    ham.stops = [i for i in ham.stops if i in preds]
    return ham


def compile_all(ps: ProgramSet, registry, names=None, tail_calls: bool = True) -> dict[str, Ham]:
    names = names if names is not None else list(ps.defs)
    return {n: compile_program(ps.defs[n], ps, registry, tail_calls) for n in names}


def render(ham: Ham) -> str:
    lines = [f"ham {ham.name} start={ham.start} stop={','.join(map(str, ham.stops))}"]
    for i in sorted(ham.states):
        s = ham.states[i]
        parts = [str(s.id), s.kind]
        if s.kind == "Action":
            if s.target == "var":
                parts.append(f"e{s.eid} {s.name}")
            elif s.target == "const":
                parts.append(f"e{s.eid} {format_value(s.literal)}")
            elif s.target == "bind":
                parts.append(f"e{s.eid} let {s.name} <- e{s.args[0]}")
            else:
                parts.append(f"e{s.eid} ({s.target} {' '.join('e%d' % a for a in s.args)})")
        elif s.kind == "Call":
            parts.append(f"e{s.eid} ({s.target} {' '.join('e%d' % a for a in s.args)})")
            if s.tail:
                parts.append("tail-loop")
        elif s.kind == "Choice":
            if s.dynamic:
                parts.append(f"e{s.eid} dynamic over e{s.args[0]}")
            else:
                parts.append(f"e{s.eid} branches={len(s.branches)}")
        elif s.kind == "Obs":
            parts.append(f"e{s.eid} branch-{s.branch}")
        if s.cond is not None:
            parts.append(f"route(e{s.cond})")
        parts.append("->")
        parts.append(" ".join(map(str, s.successors)) or "-")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
