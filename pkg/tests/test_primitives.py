import math
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poaps.primitives import (
    BOOL,
    DomainError,
    Primitive,
    Registry,
    RegistryError,
    UnitGrid,
    c_find_dist,
    cost,
    domain_support,
    enumerate_dist,
    load_params,
    observation_prob,
    parse_manifest,
    sample_transition,
    standard_registry,
    transition_prob,
    user_apply,
)


def _beta_masses_by_quadrature(a, b, bins, steps=4000):
    """Composite Simpson integration of the Beta density over each bin."""
    log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)

    def pdf(x):
        if x <= 0.0 or x >= 1.0:
            return 0.0
        return math.exp(log_norm + (a - 1) * math.log(x) + (b - 1) * math.log(1 - x))

    out = []
    # the top bin absorbs the remainder, which keeps a singular density at 1 out of the rule
    for i in range(bins - 1):
        lo, hi = i / bins, (i + 1) / bins
        h = (hi - lo) / steps
        s = pdf(lo) + pdf(hi)
        s += sum((4 if k % 2 else 2) * pdf(lo + k * h) for k in range(1, steps))
        out.append(s * h / 3)
    return out + [1.0 - math.fsum(out)]


def test_stock_costs(registry):
    assert registry.lookup("c-imp").min_cost() == 5.0
    assert registry.lookup("crowd-vote").min_cost() == 1.0
    assert registry.lookup("+").min_cost() == 0.0
    assert cost(registry.lookup("c-find"), (0.55,)) == 2.0


def test_crowd_vote_shape(registry):
    p = registry.lookup("crowd-vote")
    assert p.observable == (False, False, False)
    assert p.range == p.observations == BOOL
    for r in (True, False):
        for w in (True, False):
            assert observation_prob(p, r, w) == (1.0 if r == w else 0.0)


def test_duplicate_registration(registry):
    reg = Registry()
    p = registry.lookup("crowd-vote")
    reg.register(p)
    with pytest.raises(RegistryError, match="already registered"):
        reg.register(p)


def test_unnormalized_row_rejected(registry):
    p = registry.lookup("c-imp")
    bad = replace(p, name="bad-imp", transition=lambda d: [(d[0], 0.9)])
    with pytest.raises(RegistryError, match="sums to 0.9"):
        Registry().register(bad)


def test_observability_length_checked(registry):
    p = replace(registry.lookup("c-imp"), name="odd", observable=(False, True))
    with pytest.raises(RegistryError, match="observability"):
        Registry().register(p)


@pytest.mark.parametrize("name", ["crowd-vote", "c-imp", "c-find"])
def test_rows_sum_to_one(registry, name):
    p = registry.lookup(name)
    for d in domain_support(p):
        assert math.fsum(pr for _, pr in p.transition(d)) == pytest.approx(1.0, abs=1e-9)
    for r in (p.range.support() if p.emits else ()):
        assert math.fsum(pr for _, pr in p.observation_dist(r)) == pytest.approx(1.0, abs=1e-9)


def test_crowd_vote_sampled_accuracy(registry):
    p = registry.lookup("crowd-vote")
    rng = random.Random(11)
    n = 100_000
    hits = sum(sample_transition(p, (0.05, 0.75, 0.25), rng)[0] for _ in range(n))
    assert hits / n == pytest.approx(0.975, abs=0.01)
    assert transition_prob(p, (0.05, 0.75, 0.25), True) == pytest.approx(0.975)
    # ties favour the first answer
    assert transition_prob(p, (0.05, 0.45, 0.45), True) == pytest.approx(0.975)


def test_vote_observation_is_the_range_state(registry):
    p = registry.lookup("crowd-vote")
    rng = random.Random(3)
    for _ in range(500):
        d = tuple(rng.choice(UnitGrid(10).centers) for _ in range(3))
        r, w = sample_transition(p, d, rng)
        assert r == w


def test_c_imp_rows_match_beta_quadrature(registry):
    p = registry.lookup("c-imp")
    for q in (0.05, 0.45, 0.85, 0.95):
        mu = min(0.95, q + 0.3 * (1 - q))
        expected = _beta_masses_by_quadrature(mu * 10, (1 - mu) * 10, 10)
        got = [pr for _, pr in p.transition((q,))]
        assert got == pytest.approx(expected, abs=1e-6)


def test_c_imp_sampled_mean(registry):
    p = registry.lookup("c-imp")
    rng = random.Random(5)
    n = 100_000
    mean = math.fsum(sample_transition(p, (0.45,), rng)[0] for _ in range(n)) / n
    assert mean == pytest.approx(0.615, abs=0.02)
    assert sample_transition(p, (0.45,), rng)[1] is None


def test_c_find_is_uniform_by_symmetry():
    for q in (0.05, 0.5, 0.95):
        assert c_find_dist(q, 4) == pytest.approx([0.25] * 4)


def test_trivial_user_functions(registry):
    assert user_apply(registry.lookup("+"), (2, 3)) == 5
    assert user_apply(registry.lookup(">"), (1, 0)) is True
    assert user_apply(registry.lookup("move-east"), ((0, 0),)) == (1, 0)
    assert user_apply(registry.lookup("move-east"), ((1, 0),)) == (1, 0)
    assert user_apply(registry.lookup("remove"), ((1, 0), ((0, 0), (1, 0)))) == ((0, 0),)


def test_crowd_primitive_needs_world(registry):
    with pytest.raises(RegistryError, match="world"):
        user_apply(registry.lookup("c-imp"), ("a cat",))


def test_domain_checks(registry):
    p = registry.lookup("crowd-vote")
    with pytest.raises(DomainError):
        transition_prob(p, (0.5, 0.75, 0.25), True)
    with pytest.raises(DomainError):
        sample_transition(p, (0.05, 0.75), random.Random(0))


@settings(max_examples=200, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_trivial_hidden_equals_visible(a, b):
    reg = standard_registry()
    for name in ("+", ">", "="):
        p = reg.lookup(name)
        dist = enumerate_dist(p.transition((a, b)))
        assert dist == {p.user_fn(a, b): 1.0}
        r, w = sample_transition(p, (a, b), random.Random(0))
        assert r == w == p.user_fn(a, b)


def test_manifest_overrides():
    text = "[primitive crowd-vote]\ngamma = 2\nbins = 4\n\n[primitive c-imp]\ncost_cents = 7\n"
    reg = standard_registry(parse_manifest(text))
    assert reg.lookup("crowd-vote").domain[0] == UnitGrid(4)
    assert reg.lookup("c-imp").min_cost() == 7.0
    assert transition_prob(reg.lookup("crowd-vote"), (0.375, 0.625, 0.125), True) == pytest.approx(
        0.5 * (1 + 0.625 ** 2))


@pytest.mark.parametrize("text, fragment", [
    ("[primitive crowd-vote]\nspeed = 2\n", "unknown key"),
    ("[primitive teleport]\ncost_cents = 1\n", "unknown primitive"),
    ("[crowd-vote]\ngamma = 1\n", "section"),
    ("[primitive c-imp]\ndelta = 1.5\n", "outside"),
    ("[primitive c-imp]\ndelta = lots\n", "not a number"),
])
def test_manifest_errors(text, fragment):
    with pytest.raises(RegistryError, match=fragment):
        parse_manifest(text)


def test_defaults_untouched_by_overrides():
    load_params({"crowd-vote": {"gamma": 3}})
    assert standard_registry().lookup("crowd-vote").params["gamma"] == 1.0


def test_state_dependent_cost_is_admitted():
    grid = UnitGrid(2)
    p = Primitive("pricey", (grid,), grid, None, (False,), lambda d: 1.0 + d[0],
                  lambda d: [(d[0], 1.0)])
    Registry().register(p)
    assert cost(p, (0.75,)) == 1.75
    assert p.min_cost() == 1.25
