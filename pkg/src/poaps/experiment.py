"""Simulated labeling experiment and fixed-k majority-vote baselines."""
from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from . import corpus
from .executor import BatchSummary, batch_experiment
from .model import GenerativeModel, assemble, elicit_goal
from .planner import PlannerConfig
from .world import SimConfig, SimulatedWorld, task_generator

# headline numbers reported for the live-crowd deployment
REFERENCE = {"accuracy": 0.8773, "mean_cents": 4.33}


def voting_model(epsilon: float, budget: float, sim: SimConfig = SimConfig()) -> GenerativeModel:
    registry = sim.registry()
    ps = corpus.load("vote")
    goal = elicit_goal("answer-accuracy", epsilon, budget,
                       min_cost=registry.lookup("crowd-vote").min_cost())
    return assemble(ps, ps.entry, registry, goal)


def run_dynamic(model: GenerativeModel, tasks, cfg: PlannerConfig, seed: int) -> BatchSummary:
    registry = model.registry
    return batch_experiment(model, tasks, cfg, lambda t: SimulatedWorld(t.truth.copy(), registry), seed)


def fixed_k_majority(tasks, k: int, registry, seed: int) -> BatchSummary:
    """Ask exactly ``k`` votes per task and answer ``c0 > c1`` (ties favour the second answer)."""
    prim = registry.lookup("crowd-vote")
    correct, cents = [], []
    for i, task in enumerate(tasks):
        world = SimulatedWorld(task.truth.copy(), registry)
        rng = random.Random(f"{seed}:{i}:fixed-{k}")
        c0 = c1 = 0
        for _ in range(k):
            vote, _ = world.execute_primitive("crowd-vote", task.args[:3], rng)
            if vote:
                c0 += 1
            else:
                c1 += 1
        correct.append((c0 > c1) == task.answer)
        cents.append(k * prim.min_cost())
    n = len(tasks)
    return BatchSummary(n, sum(correct) / n, sum(cents) / n, float("nan"), correct, cents)


@dataclass(frozen=True)
class PairedDiff:
    mean: float
    lo: float
    hi: float


def paired_bootstrap(a, b, rng: np.random.Generator, resamples: int = 2000, level: float = 0.95) -> PairedDiff:
    """Percentile interval of mean(a - b) over task resamples."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    idx = rng.integers(0, len(d), size=(resamples, len(d)))
    means = d[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return PairedDiff(float(d.mean()), float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail)))


@dataclass(frozen=True)
class Dominance:
    k: int
    accuracy: float
    mean_cents: float
    acc_diff: PairedDiff
    cost_diff: PairedDiff
    verdict: bool
    reason: str


def compare_with_baselines(dynamic: BatchSummary, baselines: dict, seed: int) -> list[Dominance]:
    """Dynamic must match the accuracy of every baseline that is no more expensive,
    or be significantly cheaper with statistically indistinguishable accuracy."""
    rng = np.random.default_rng(seed)
    out = []
    for k in sorted(baselines):
        base = baselines[k]
        acc = paired_bootstrap(dynamic.correct, base.correct, rng)
        cost = paired_bootstrap(dynamic.cents, base.cents, rng)
        if base.mean_cents > dynamic.mean_cents:
            ok, why = True, "baseline costs more"
        elif acc.mean >= 0.0:
            ok, why = True, "accuracy at least as high"
        elif cost.hi < 0.0 and acc.lo <= 0.0 <= acc.hi:
            ok, why = True, "significantly cheaper at indistinguishable accuracy"
        else:
            ok, why = False, "less accurate at no higher cost"
        out.append(Dominance(k, base.accuracy, base.mean_cents, acc, cost, ok, why))
    return out


def voting_experiment(n: int, epsilon: float, budget: float, seed: int, cfg: PlannerConfig,
                      sim: SimConfig = SimConfig(), baselines=(1, 3, 5)) -> dict:
    model = voting_model(epsilon, budget, sim)
    tasks = task_generator("voting", n, random.Random(seed), model.registry)
    dyn = run_dynamic(model, tasks, cfg, seed)
    report = {"n": n, "epsilon": epsilon, "budget_cents": budget, "seed": seed,
              "accuracy": dyn.accuracy, "mean_cents": dyn.mean_cents, "goal_rate": dyn.goal_rate,
              "reference": dict(REFERENCE)}
    if n and baselines:
        bases = {k: fixed_k_majority(tasks, k, model.registry, seed) for k in baselines}
        report["baselines"] = [
            {"k": d.k, "accuracy": d.accuracy, "mean_cents": d.mean_cents,
             "accuracy_diff": [d.acc_diff.mean, d.acc_diff.lo, d.acc_diff.hi],
             "cost_diff": [d.cost_diff.mean, d.cost_diff.lo, d.cost_diff.hi],
             "dominated": d.verdict, "reason": d.reason}
            for d in compare_with_baselines(dyn, bases, seed)]
    report["_dynamic"] = dyn
    return report
