import random
from collections import Counter

import pytest
from scipy.stats import chisquare

from poaps.primitives import RegistryError, standard_registry, worker_accuracy
from poaps.world import GroundTruth, SimConfig, SimulatedWorld, WorldError, task_generator


def _votes(d, n, bins=10, seed=0):
    reg = standard_registry({"crowd-vote": {"bins": bins}})
    grid = reg.lookup("crowd-vote").domain[0].centers
    hi, lo = grid[-1], grid[0]
    world = SimulatedWorld(GroundTruth({"q": d, "a0": hi, "a1": lo}), reg)
    rng = random.Random(seed)
    return sum(world.execute_primitive("crowd-vote", ("q", "a0", "a1"), rng)[0] for _ in range(n))


def _chi2(samples, dist):
    """Goodness of fit; outcomes expected fewer than 5 times are pooled."""
    n = len(samples)
    counts = Counter(samples)
    obs, exp, pool_o, pool_e = [], [], 0, 0.0
    for v, p in dist:
        if n * p < 5:
            pool_o += counts.get(v, 0)
            pool_e += n * p
        else:
            obs.append(counts.get(v, 0))
            exp.append(n * p)
    if pool_e > 0:
        obs.append(pool_o)
        exp.append(pool_e)
    scale = n / sum(exp)
    return chisquare(obs, [e * scale for e in exp]).pvalue


def test_easy_question_always_right():
    # the grid has no zero point; a(0) = 1 is checked on the formula and
    # the world at the easiest point of a fine grid, where a = 0.9975
    assert worker_accuracy(0.0, 1.0) == 1.0
    n, a = 100_000, worker_accuracy(0.005, 1.0)
    assert abs(_votes(0.005, n, bins=100) / n - a) <= 3 * (a * (1 - a) / n) ** 0.5


def test_hard_question_is_a_coin_flip():
    assert abs(_votes(0.995, 100_000, bins=100) / 100_000 - 0.5) <= 0.01


@pytest.mark.parametrize("d", [0.05, 0.45, 0.95])
def test_crowd_vote_matches_model(registry, d):
    world = SimulatedWorld(GroundTruth({"q": d, "a0": 0.25, "a1": 0.75}), registry)
    rng = random.Random(f"crowd-vote:{d}")
    prim = registry.lookup("crowd-vote")
    samples = []
    for _ in range(100_000):
        r, w = world.execute_primitive("crowd-vote", ("q", "a0", "a1"), rng)
        assert w == r
        samples.append(r)
    assert _chi2(samples, prim.transition((d, 0.25, 0.75))) > 0.01


@pytest.mark.parametrize("q", [0.05, 0.55, 0.95])
def test_c_imp_matches_model(registry, q):
    world = SimulatedWorld(GroundTruth({"t": q}), registry)
    rng = random.Random(f"c-imp:{q}")
    samples = []
    for _ in range(100_000):
        text, w = world.execute_primitive("c-imp", ("t",), rng)
        assert w is None
        samples.append(world.truth[text])
    assert _chi2(samples, registry.lookup("c-imp").transition((q,))) > 0.01


@pytest.mark.parametrize("q", [0.15, 0.85])
def test_c_find_matches_model(registry, q):
    world = SimulatedWorld(GroundTruth({"t": q}), registry)
    rng = random.Random(f"c-find:{q}")
    samples = []
    for _ in range(100_000):
        r, w = world.execute_primitive("c-find", ("t",), rng)
        assert w == r
        samples.append(r)
    assert _chi2(samples, registry.lookup("c-find").transition((q,))) > 0.01


def test_trivial_primitives_are_exact(registry):
    world = SimulatedWorld(GroundTruth(), registry)
    rng = random.Random(0)
    assert world.execute_primitive("+", (2, 3), rng) == (5, 5)
    assert world.execute_primitive("move-east", ((0, 0),), rng) == ((1, 0), (1, 0))
    assert world.execute_primitive("sample", ((1, 0),), rng) == ((1, 0), (1, 0))


def test_text_results_carry_quality(registry):
    world = SimulatedWorld(GroundTruth({"abcdefgh": 0.35}), registry)
    rng = random.Random(0)
    part, w = world.execute_primitive("get-relevant-text", ("abcdefgh", 1), rng)
    assert part == "cd" and w is None and world.truth["cd"] == 0.35


def test_c_imp_marks_revisions(registry):
    world = SimulatedWorld(GroundTruth({"a cat": 0.45}), registry)
    rng = random.Random(0)
    first, _ = world.execute_primitive("c-imp", ("a cat",), rng)
    second, _ = world.execute_primitive("c-imp", (first,), rng)
    assert first == "a cat [rev 1]" and second == "a cat [rev 1] [rev 2]"
    assert "a cat" in world.truth and first in world.truth and second in world.truth


def test_improvement_rises_over_rounds(registry):
    grid = registry.lookup("c-imp").domain[0].centers
    rng = random.Random(4)
    means = [0.0] * 6
    trials = 10_000
    for i in range(trials):
        world = SimulatedWorld(GroundTruth({"t": rng.choice(grid)}), registry)
        text = "t"
        means[0] += world.truth[text]
        for k in range(1, 6):
            text, _ = world.execute_primitive("c-imp", (text,), rng)
            means[k] += world.truth[text]
    means = [m / trials for m in means]
    assert all(b > a for a, b in zip(means, means[1:])), means


def test_world_errors(registry):
    world = SimulatedWorld(GroundTruth(), registry)
    with pytest.raises(RegistryError):
        world.execute_primitive("no-such", (), random.Random(0))
    with pytest.raises(WorldError):
        world.execute_primitive("c-imp", ("unknown text",), random.Random(0))


def test_sim_config_registry():
    reg = SimConfig(gamma=2.0, bins=4).registry()
    prim = reg.lookup("crowd-vote")
    assert prim.params["gamma"] == 2.0 and prim.domain[0].bins == 4
    assert reg.lookup("c-imp").domain[0].bins == 4


# -- tasks ----------------------------------------------------------------------


def test_tasks_are_seeded():
    a = task_generator("voting", 50, random.Random(7))
    b = task_generator("voting", 50, random.Random(7))
    assert [(t.args, t.truth, t.answer) for t in a] == [(t.args, t.truth, t.answer) for t in b]
    assert len(task_generator("voting", 1, random.Random(0))) == 1
    assert len(task_generator("improvement", 1, random.Random(0))) == 1


def test_voting_task_shape(registry):
    tasks = task_generator("voting", 1000, random.Random(11), registry)
    assert len(tasks) == 1000
    for t in tasks:
        q, a0, a1, c0, c1 = t.args
        assert (c0, c1) == (0, 0)
        assert t.answer == (t.truth[a0] >= t.truth[a1])
    # independent grid count: ordered pairs with q0 >= q1
    grid = registry.lookup("crowd-vote").domain[0].centers
    p = sum(a >= b for a in grid for b in grid) / len(grid) ** 2
    freq = sum(t.answer for t in tasks) / len(tasks)
    assert abs(freq - p) <= 3 * (p * (1 - p) / len(tasks)) ** 0.5


def test_unknown_task_kind():
    with pytest.raises(ValueError):
        task_generator("ner", 1, random.Random(0))
