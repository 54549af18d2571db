"""Simulated crowd for desk-scale experiments.

Hidden quantities (question difficulty, answer and text quality) live in a
:class:`GroundTruth` keyed by the Normal values that stand for them.  Crowd
primitives draw their results from the same models the planner uses, so the
world agrees with the primitive registry by construction.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .primitives import Registry, RegistryError, draw, standard_registry

# trivial text primitives whose result stands for the text in this argument
PASS_THROUGH = {"get-relevant-text": 0, "replace-text": 2}


class WorldError(RuntimeError):
    pass


@dataclass
class GroundTruth:
    """Hidden value behind each Normal value, fixed for an episode (c-imp adds entries)."""

    hidden: dict = field(default_factory=dict)

    def __getitem__(self, normal):
        try:
            return self.hidden[normal]
        except KeyError:
            raise WorldError(f"no ground truth for {normal!r}") from None

    def __setitem__(self, normal, value) -> None:
        self.hidden[normal] = value

    def __contains__(self, normal) -> bool:
        return normal in self.hidden

    def copy(self) -> "GroundTruth":
        return GroundTruth(dict(self.hidden))


@dataclass(frozen=True)
class SimConfig:
    gamma: float = 1.0
    delta: float = 0.3
    nu: float = 10.0
    bins: int = 10
    seed: int = 0

    def registry(self) -> Registry:
        return standard_registry({
            "crowd-vote": {"gamma": self.gamma, "bins": self.bins},
            "c-imp": {"delta": self.delta, "nu": self.nu, "bins": self.bins},
            "c-find": {"bins": self.bins},
        })


class SimulatedWorld:
    """World adapter: ``execute_primitive(name, args, rng) -> (result, observation or None)``."""

    def __init__(self, truth: GroundTruth, registry: Registry):
        self.truth, self.registry = truth, registry
        self.revisions = 0

    def execute_primitive(self, name: str, args: tuple, rng: random.Random):
        if name not in self.registry:
            raise RegistryError(f"unknown primitive {name!r}")
        prim = self.registry.lookup(name)
        if prim.user_fn is not None:
            result = prim.user_fn(*args)
            if name in PASS_THROUGH and args[PASS_THROUGH[name]] in self.truth:
                self.truth[result] = self.truth[args[PASS_THROUGH[name]]]
            return result, (result if prim.emits else None)
        hidden = tuple(self.truth[a] for a in args)
        prim.check_domain(hidden)
        r = draw(prim.transition(hidden), rng)
        w = draw(prim.observation_dist(r), rng) if prim.emits else None
        if name == "c-imp":
            self.revisions += 1
            text = f"{args[0]} [rev {self.revisions}]"
            self.truth[text] = r
            return text, w
        return r, w


@dataclass(frozen=True)
class Task:
    args: tuple
    truth: GroundTruth
    answer: object


def task_generator(kind: str, n: int, rng: random.Random, registry: Registry | None = None) -> list[Task]:
    """``n`` tasks with hidden values drawn uniformly from the primitive grids."""
    registry = registry or standard_registry()
    tasks = []
    if kind == "voting":
        grid = registry.lookup("crowd-vote").domain[0].support()
        for i in range(n):
            q, a0, a1 = f"question-{i}", f"answer-{i}-0", f"answer-{i}-1"
            d, q0, q1 = rng.choice(grid), rng.choice(grid), rng.choice(grid)
            truth = GroundTruth({q: d, a0: q0, a1: q1})
            tasks.append(Task((q, a0, a1, 0, 0), truth, q0 >= q1))
    elif kind == "improvement":
        grid = registry.lookup("c-imp").domain[0].support()
        for i in range(n):
            text = f"text-{i}"
            q = rng.choice(grid)
            tasks.append(Task((text,), GroundTruth({text: q}), q))
    else:
        raise ValueError(f"unknown task kind {kind!r}")
    return tasks


def sample_ground_truth(model, args: tuple, rng: random.Random) -> GroundTruth:
    """Hidden value for each hidden entry argument, drawn uniformly from its space."""
    truth = GroundTruth()
    for v, a in zip(model.schemas[model.entry].args, args):
        sup = v.space.support()
        if not v.observable and sup is not None:
            truth[a] = rng.choice(sup)
    return truth
