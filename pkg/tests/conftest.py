import random

import pytest

from poaps import corpus
from poaps.model import assemble, elicit_goal
from poaps.primitives import standard_registry

VOTE_ARGS = ("question", "answer-a", "answer-b", 0, 0)
ROCK_ARGS = ((0, 0), ((0, 0), (1, 0)), (1, 0))


@pytest.fixture(scope="session")
def registry():
    return standard_registry()


@pytest.fixture(scope="session")
def desk_registry():
    # two-point grids {0.25, 0.75} for difficulty and answer quality
    return standard_registry({"crowd-vote": {"bins": 2}})


def voting(registry, epsilon=0.9, budget=5.0):
    ps = corpus.load("vote")
    goal = elicit_goal("answer-accuracy", epsilon, budget, min_cost=1.0)
    return assemble(ps, ps.entry, registry, goal)


def rocksample(registry, budget=5.0):
    ps = corpus.load("rocksample")
    goal = elicit_goal("rocks-sampled", 1.0, budget, min_cost=1.0)
    return assemble(ps, ps.entry, registry, goal)


@pytest.fixture(scope="session")
def desk_vote(desk_registry):
    return voting(desk_registry)


@pytest.fixture(scope="session")
def desk_rocks(registry):
    return rocksample(registry)


def initial(model, args, n=1000, seed=0):
    return model.initial_belief(args, n, random.Random(seed))
