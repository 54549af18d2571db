"""C-RTDP: real-time dynamic programming over choice beliefs.

Backups happen only where the program has a ``choose``.  Between choices the
belief is pushed through the deterministic-control segment with exact
observation conditioning; a segment's observation sequences are enumerated
when there are few of them and sampled otherwise.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple

from .model import Belief, BeliefCollapse, GenerativeModel, belief_key

TABLE_MAGIC = "poaps-value-table"
TABLE_VERSION = 1


class SegmentRunaway(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    simulations: int = 1000
    particle_count: int = 1000
    histogram_k: int = 10
    psi_samples: int = 16
    psi_exact_limit: int = 64
    seed: int = 0
    max_segment_steps: int = 10_000
    max_trial_choices: int = 10_000

    def __post_init__(self):
        if self.simulations < 0:
            raise ValueError("simulations must be non-negative")
        for name in ("particle_count", "histogram_k", "psi_samples", "psi_exact_limit",
                     "max_segment_steps", "max_trial_choices"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def describe(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Outcome(NamedTuple):
    psi: tuple
    prob: float
    cost: float
    belief: Belief


class ValueTable:
    """Map from belief keys to cost-to-go estimates; unseen keys read as 0."""

    def __init__(self, values: dict | None = None):
        self.values: dict[bytes, float] = dict(values or {})

    def get(self, key: bytes) -> float:
        return self.values.get(key, 0.0)

    def update(self, key: bytes, value: float) -> None:
        if value < 0:
            raise ValueError("values must be non-negative")
        self.values[key] = value

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, key: bytes) -> bool:
        return key in self.values

    def __eq__(self, other) -> bool:
        return isinstance(other, ValueTable) and self.values == other.values

    def dumps(self) -> str:
        """Text format: a header line, then ``<value repr> <key as hex>`` per entry, sorted."""
        lines = [f"{TABLE_MAGIC} {TABLE_VERSION} {len(self.values)}"]
        for k in sorted(self.values):
            lines.append(f"{self.values[k]!r} {k.hex()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ValueTable":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty value table file")
        head = lines[0].split()
        if len(head) != 3 or head[0] != TABLE_MAGIC:
            raise ValueError("not a value table file")
        if int(head[1]) != TABLE_VERSION:
            raise ValueError(f"unsupported value table version {head[1]}")
        values = {}
        for line in lines[1:]:
            v, k = line.split(" ")
            values[bytes.fromhex(k)] = float(v)
        if len(values) != int(head[2]):
            raise ValueError("value table entry count mismatch")
        return cls(values)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ValueTable":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


class Planner:
    """Planner state for one model: value table plus belief-expansion caches."""

    def __init__(self, model: GenerativeModel, cfg: PlannerConfig, table: ValueTable | None = None):
        self.model, self.cfg = model, cfg
        self.table = table if table is not None else ValueTable()
        self._steps: dict = {}
        self._segments: dict = {}
        self._leaves: dict = {}
        self._keys: dict = {}
        self.memo: dict = {}    # free-form per-belief cache for callers

    # beliefs

    def key(self, b: Belief) -> bytes:
        k = self._keys.get(b.ident())
        if k is None:
            k = self._keys[b.ident()] = belief_key(self.model, b, self.cfg.histogram_k)
        return k

    def step(self, b: Belief, a: int) -> dict:
        k = (b.ident(), a)
        out = self._steps.get(k)
        if out is None:
            out = self._steps[k] = self.model.belief_step(b, a, self.cfg.particle_count)
        return out

    def condition(self, b: Belief, a: int, observations: tuple) -> tuple[Belief, float]:
        """Belief after ``a`` given real ``observations``; returns (belief, expected cents)."""
        outs = self.step(b, a)
        if observations not in outs:
            raise BeliefCollapse(f"observation {observations!r} has zero probability "
                                 f"(expected one of {list(outs)})")
        _, cents, child = outs[observations]
        return child, cents

    def status(self, b: Belief) -> tuple:
        """Cached classification: ``("leaf", cost)``, ``("choice", actions)`` or ``("pass", None)``.

        Terminal, budget-truncated and dead-end beliefs are leaves.
        """
        k = b.ident()
        st = self._leaves.get(k)
        if st is None:
            m = self.model
            if m.is_terminal(b.machine) or m.truncated(b):
                st = ("leaf", m.terminal_cost(b))
            elif m.is_choice(b.machine):
                acts = m.allowed_actions(b)
                st = ("choice", tuple(acts)) if acts else ("leaf", m.dead_end_cents)
            else:
                st = ("pass", None)
            self._leaves[k] = st
        return st

    def is_decision(self, b: Belief) -> bool:
        """True at a choice belief that still needs an action chosen."""
        return self.status(b)[0] == "choice"

    def value(self, b: Belief) -> float:
        kind, info = self.status(b)
        if kind == "leaf":
            return info
        return self.table.get(self.key(b))

    # segments

    def expand(self, b: Belief, a: int) -> list[Outcome] | None:
        """Every observation sequence of the segment after ``a``, or None past the limit."""
        k = (b.ident(), a)
        if k in self._segments:
            return self._segments[k]
        limit = self.cfg.psi_exact_limit
        done: list[Outcome] = []
        frontier = [((), 1.0, 0.0, b, a, 0)]
        while frontier:
            psi, p, c, cur, act, n = frontier.pop()
            if n >= self.cfg.max_segment_steps:
                raise SegmentRunaway(f"segment exceeded {self.cfg.max_segment_steps} steps")
            for obs, (q, cents, child) in self.step(cur, act).items():
                item = (psi + obs, p * q, c + cents, child, 0, n + 1)
                if self.model.segment_end(child):
                    done.append(Outcome(*item[:4]))
                else:
                    frontier.append(item)
            if len(done) + len(frontier) > limit:
                self._segments[k] = None
                return None
        done.sort(key=lambda o: repr(o.psi))
        self._segments[k] = done
        return done

    def advance(self, b: Belief, a: int, rng: random.Random) -> Outcome:
        """Sample one observation sequence of the segment after ``a``."""
        psi, p, c, act = (), 1.0, 0.0, a
        for _ in range(self.cfg.max_segment_steps):
            outs = self.step(b, act)
            u = rng.random()
            acc = 0.0
            items = list(outs.items())
            for obs, (q, cents, child) in items:
                acc += q
                if u < acc:
                    break
            psi, p, c, b = psi + obs, p * q, c + cents, child
            if self.model.segment_end(b):
                return Outcome(psi, p, c, b)
            act = 0
        raise SegmentRunaway(f"segment exceeded {self.cfg.max_segment_steps} steps")

    def q_value(self, b: Belief, a: int, rng: random.Random) -> float:
        outs = self.expand(b, a)
        if outs is not None:
            return math.fsum(o.prob * (o.cost + self.value(o.belief)) for o in outs)
        total = 0.0
        for _ in range(self.cfg.psi_samples):
            o = self.advance(b, a, rng)
            total += o.cost + self.value(o.belief)
        return total / self.cfg.psi_samples

    def next_belief(self, b: Belief, a: int, rng: random.Random) -> Outcome:
        outs = self.expand(b, a)
        if outs is None:
            return self.advance(b, a, rng)
        u = rng.random()
        acc = 0.0
        for o in outs:
            acc += o.prob
            if u < acc:
                return o
        return outs[-1]

    # trials

    def backup(self, b: Belief, rng: random.Random) -> int:
        """Bellman backup at a choice belief; returns the greedy action."""
        acts = self.status(b)[1]
        qs = [self.q_value(b, a, rng) for a in acts]
        i = min(range(len(qs)), key=lambda j: (qs[j], j))
        self.table.update(self.key(b), qs[i])
        return acts[i]

    def simulate_once(self, b0: Belief, rng: random.Random) -> None:
        b = b0
        for _ in range(self.cfg.max_trial_choices):
            kind = self.status(b)[0]
            if kind == "leaf":
                return
            a = self.backup(b, rng) if kind == "choice" else 0
            b = self.next_belief(b, a, rng).belief

    def plan(self, b0: Belief, simulations: int | None = None, rng: random.Random | None = None) -> ValueTable:
        rng = rng if rng is not None else random.Random(self.cfg.seed)
        n = self.cfg.simulations if simulations is None else simulations
        for _ in range(n):
            self.simulate_once(b0, rng)
        return self.table

    def q_values(self, b: Belief, rng: random.Random) -> list[tuple[int, float]]:
        kind, acts = self.status(b)
        return [(a, self.q_value(b, a, rng)) for a in acts] if kind == "choice" else []

    def select_action(self, b: Belief, rng: random.Random) -> int:
        qs = self.q_values(b, rng)
        if not qs:
            raise ValueError("no action is available at this belief")
        return min(qs, key=lambda aq: (aq[1], aq[0]))[0]

    def to_choice(self, b: Belief, rng: random.Random) -> Outcome:
        """Run default actions from a non-choice belief (e.g. Start) to the first segment end."""
        if self.model.segment_end(b):
            return Outcome((), 1.0, 0.0, b)
        return self.next_belief(b, 0, rng)


# functional wrappers


def plan(model: GenerativeModel, b0: Belief, cfg: PlannerConfig, table: ValueTable | None = None) -> ValueTable:
    return Planner(model, cfg, table).plan(b0)


def select_action(model: GenerativeModel, b: Belief, table: ValueTable, cfg: PlannerConfig,
                  rng: random.Random) -> int:
    return Planner(model, cfg, table).select_action(b, rng)
