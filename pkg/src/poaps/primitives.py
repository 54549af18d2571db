"""Primitive definitions: a callable user function paired with a hidden-state model.

Each :class:`Primitive` carries the model half (domain/range/observation spaces,
transition and observation distributions, observability flags, cost) and the
function half (the Normal-value user function, or delegation to a world adapter
for crowd primitives).
"""
from __future__ import annotations

import configparser
import math
import numbers
import random
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable

from scipy.stats import beta as beta_dist

NORMALIZATION_TOL = 1e-9


class RegistryError(Exception):
    pass


class DomainError(ValueError):
    pass


# -- spaces -----------------------------------------------------------------


@dataclass(frozen=True)
class Enumerated:
    values: tuple

    def __post_init__(self):
        if len(set(self.values)) != len(self.values):
            raise ValueError("Enumerated values must be distinct")

    def contains(self, v) -> bool:
        return any(v == x and type(v) is type(x) for x in self.values)

    def support(self) -> tuple:
        return self.values

    def describe(self) -> str:
        return "Enumerated(" + ", ".join(map(str, self.values)) + ")"


@dataclass(frozen=True)
class UnitGrid:
    bins: int

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("UnitGrid needs at least 2 bins")

    @property
    def centers(self) -> tuple[float, ...]:
        return tuple((i + 0.5) / self.bins for i in range(self.bins))

    def index(self, v) -> int:
        if not isinstance(v, float):
            raise DomainError(f"{v!r} is not a grid value")
        i = int(v * self.bins)
        if not (0 <= i < self.bins) or abs(v - (i + 0.5) / self.bins) > 1e-12:
            raise DomainError(f"{v!r} is not a center of {self.describe()}")
        return i

    def contains(self, v) -> bool:
        try:
            self.index(v)
        except DomainError:
            return False
        return True

    def support(self) -> tuple:
        return self.centers

    def describe(self) -> str:
        return f"UnitGrid({self.bins})"


@dataclass(frozen=True)
class Product:
    factors: tuple

    def contains(self, v) -> bool:
        return (
            isinstance(v, tuple)
            and len(v) == len(self.factors)
            and all(f.contains(x) for f, x in zip(self.factors, v))
        )

    def support(self) -> tuple | None:
        parts = [f.support() for f in self.factors]
        if any(p is None for p in parts):
            return None
        return tuple(product(*parts))

    def describe(self) -> str:
        return "Product(" + ", ".join(f.describe() for f in self.factors) + ")"


@dataclass(frozen=True)
class Observed:
    """Mirror of the Normal value; carries no distribution."""

    def contains(self, v) -> bool:
        return True

    def support(self) -> None:
        return None

    def describe(self) -> str:
        return "Observed"


OBSERVED = Observed()
BOOL = Enumerated((True, False))


def is_observed(space) -> bool:
    return isinstance(space, Observed)


# -- primitives -------------------------------------------------------------

Dist = list  # list of (value, probability)


@dataclass(eq=False)
class Primitive:
    """One registered primitive.

    ``transition(d)`` returns the distribution over range states for a domain
    tuple ``d``.  ``obs_fn(r)`` returns the observation distribution; when
    ``observations`` is set and ``obs_fn`` is None the observation is the
    identity of ``r``.  ``user_fn`` computes the Normal result; when None the
    primitive is delegated to a world adapter.
    """

    name: str
    domain: tuple
    range: object
    observations: object | None
    observable: tuple
    cost_cents: float | Callable[[tuple], float]
    transition: Callable[[tuple], Dist]
    obs_fn: Callable[[object], Dist] | None = None
    user_fn: Callable[..., object] | None = None
    trivial: bool = False
    params: dict = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return len(self.domain)

    @property
    def emits(self) -> bool:
        return self.observations is not None

    def check_domain(self, d: tuple) -> None:
        if len(d) != self.arity:
            raise DomainError(f"{self.name} takes {self.arity} arguments, got {len(d)}")
        for i, (space, v) in enumerate(zip(self.domain, d)):
            if not space.contains(v):
                raise DomainError(f"{self.name}: argument {i} = {v!r} outside {space.describe()}")

    def observation_dist(self, r) -> Dist:
        if self.observations is None:
            return [(None, 1.0)]
        if self.obs_fn is None:
            return [(r, 1.0)]
        return self.obs_fn(r)

    def min_cost(self) -> float:
        if not callable(self.cost_cents):
            return float(self.cost_cents)
        states = domain_support(self)
        if states is None:
            return 0.0
        return min(self.cost_cents(d) for d in states)


def domain_support(p: Primitive) -> list[tuple] | None:
    parts = [s.support() for s in p.domain]
    if any(x is None for x in parts):
        return None
    return list(product(*parts))


def transition_prob(p: Primitive, d: tuple, r) -> float:
    p.check_domain(d)
    if p.range.support() is not None and not p.range.contains(r):
        raise DomainError(f"{p.name}: {r!r} outside range {p.range.describe()}")
    return sum(pr for v, pr in p.transition(d) if v == r and type(v) is type(r))


def observation_prob(p: Primitive, r, w) -> float:
    if p.observations is None:
        raise DomainError(f"{p.name} has no observations")
    if p.observations.support() is not None and not p.observations.contains(w):
        raise DomainError(f"{p.name}: {w!r} outside observation space")
    return sum(pr for v, pr in p.observation_dist(r) if v == w and type(v) is type(w))


def cost(p: Primitive, d: tuple) -> float:
    c = p.cost_cents(d) if callable(p.cost_cents) else p.cost_cents
    return float(c)


def draw(dist: Dist, rng: random.Random):
    u = rng.random()
    acc = 0.0
    for v, pr in dist:
        acc += pr
        if u < acc:
            return v
    return dist[-1][0]


def sample_transition(p: Primitive, d: tuple, rng: random.Random):
    """Draw ``(r, observation)``; the observation is None when the primitive emits none."""
    p.check_domain(d)
    r = draw(p.transition(d), rng)
    w = draw(p.observation_dist(r), rng) if p.emits else None
    return r, w


def user_apply(p: Primitive, args: tuple, world=None, rng: random.Random | None = None):
    """Normal-value application; crowd primitives are routed through ``world``."""
    if len(args) != p.arity:
        raise DomainError(f"{p.name} takes {p.arity} arguments, got {len(args)}")
    if p.user_fn is not None:
        return p.user_fn(*args)
    if world is None:
        raise RegistryError(f"{p.name} needs a world adapter")
    result, _ = world.execute_primitive(p.name, tuple(args), rng)
    return result


class Registry:
    def __init__(self):
        self._prims: dict[str, Primitive] = {}

    def register(self, p: Primitive) -> None:
        if p.name in self._prims:
            raise RegistryError(f"primitive {p.name!r} already registered")
        if len(p.observable) != len(p.domain):
            raise RegistryError(f"{p.name}: observability vector length != arity")
        _check_normalized(p)
        self._prims[p.name] = p

    def lookup(self, name: str) -> Primitive:
        try:
            return self._prims[name]
        except KeyError:
            raise RegistryError(f"unknown primitive {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._prims

    def __iter__(self):
        return iter(self._prims.values())

    def arity(self, name: str) -> int:
        return self.lookup(name).arity

    def names(self) -> list[str]:
        return sorted(self._prims)


def _check_normalized(p: Primitive) -> None:
    states = domain_support(p)
    if states is not None:
        for d in states:
            total = sum(pr for _, pr in p.transition(d))
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise RegistryError(f"{p.name}: T row at {d} sums to {total}")
    if p.emits and p.obs_fn is not None:
        rs = p.range.support()
        for r in rs or ():
            total = sum(pr for _, pr in p.obs_fn(r))
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise RegistryError(f"{p.name}: O row at {r!r} sums to {total}")


# -- stock models -------------------------------------------------------------

DEFAULTS = {
    "crowd-vote": {"cost_cents": 1, "gamma": 1.0, "bins": 10},
    "c-imp": {"cost_cents": 5, "delta": 0.3, "nu": 10.0, "bins": 10},
    "c-find": {"cost_cents": 2, "bins": 10, "intervals": 4},
    "move-north": {"cost_cents": 1, "size": 2},
    "move-south": {"cost_cents": 1, "size": 2},
    "move-east": {"cost_cents": 1, "size": 2},
    "move-west": {"cost_cents": 1, "size": 2},
    "sample": {"cost_cents": 2},
}

_RANGES = {
    "cost_cents": (0.0, math.inf),
    "gamma": (1e-9, math.inf),
    "delta": (0.0, 1.0),
    "nu": (1e-9, math.inf),
    "bins": (2, 1000),
    "intervals": (1, 64),
    "size": (1, 1000),
}
_INT_KEYS = {"bins", "intervals", "size"}


def worker_accuracy(difficulty: float, gamma: float) -> float:
    return 0.5 * (1.0 + (1.0 - difficulty) ** gamma)


def improvement_mean(q: float, delta: float) -> float:
    return min(0.95, q + delta * (1.0 - q))


def beta_masses(mean: float, nu: float, bins: int) -> list[float]:
    a, b = mean * nu, (1.0 - mean) * nu
    edges = [i / bins for i in range(bins + 1)]
    cdf = beta_dist.cdf(edges, a, b)
    masses = [float(cdf[i + 1] - cdf[i]) for i in range(bins)]
    total = sum(masses)
    return [m / total for m in masses]


def crowd_vote(params: dict) -> Primitive:
    grid = UnitGrid(int(params["bins"]))
    gamma = float(params["gamma"])

    def T(d):
        diff, q0, q1 = d
        truth = q0 >= q1
        a = worker_accuracy(diff, gamma)
        return [(truth, a), (not truth, 1.0 - a)]

    return Primitive(
        name="crowd-vote",
        domain=(grid, grid, grid),
        range=BOOL,
        observations=BOOL,
        observable=(False, False, False),
        cost_cents=float(params["cost_cents"]),
        transition=T,
        params=dict(params),
    )


def c_imp(params: dict) -> Primitive:
    grid = UnitGrid(int(params["bins"]))
    delta, nu = float(params["delta"]), float(params["nu"])
    rows = {q: list(zip(grid.centers, beta_masses(improvement_mean(q, delta), nu, grid.bins)))
            for q in grid.centers}

    return Primitive(
        name="c-imp",
        domain=(grid,),
        range=grid,
        observations=None,
        observable=(False,),
        cost_cents=float(params["cost_cents"]),
        transition=lambda d: rows[d[0]],
        params=dict(params),
    )


def c_find_dist(q: float, n: int) -> list[float]:
    """Interval-index distribution: need bits are Bernoulli(1-q), pick uniformly among needy ones."""
    probs = [0.0] * n
    need = 1.0 - q
    for bits in product((0, 1), repeat=n):
        k = sum(bits)
        pb = math.prod(need if b else 1.0 - need for b in bits)
        for i in range(n):
            if k == 0:
                probs[i] += pb / n
            elif bits[i]:
                probs[i] += pb / k
    return probs


def c_find(params: dict) -> Primitive:
    grid = UnitGrid(int(params["bins"]))
    n = int(params["intervals"])
    idx = Enumerated(tuple(range(n)))
    rows = {q: list(zip(range(n), c_find_dist(q, n))) for q in grid.centers}
    return Primitive(
        name="c-find",
        domain=(grid,),
        range=idx,
        observations=idx,
        observable=(False,),
        cost_cents=float(params["cost_cents"]),
        transition=lambda d: rows[d[0]],
        params=dict(params),
    )


def _trivial(name, arity, fn, cost_cents=0.0, emits=True, poaps=None, params=None) -> Primitive:
    poaps = poaps or fn
    return Primitive(
        name=name,
        domain=(OBSERVED,) * arity,
        range=OBSERVED,
        observations=OBSERVED if emits else None,
        observable=(True,) * arity,
        cost_cents=cost_cents,
        transition=lambda d: [(poaps(*d), 1.0)],
        user_fn=fn,
        trivial=True,
        params=dict(params or {}),
    )


def _chunks(text: str, n: int) -> list[tuple[int, int]]:
    size = len(text)
    return [(size * i // n, size * (i + 1) // n) for i in range(n)]


def _num(v):
    if isinstance(v, bool) or not isinstance(v, numbers.Number):
        raise DomainError(f"{v!r} is not a number")
    return v


def _merge(x, lst):
    lst = tuple(lst)
    return lst if x in lst else tuple(sorted(lst + (x,)))


def _remove(x, lst):
    return tuple(v for v in lst if v != x)


def _mover(dx: int, dy: int, size: int):
    def move(pos):
        x, y = pos
        return (min(size - 1, max(0, x + dx)), min(size - 1, max(0, y + dy)))

    return move


def standard_registry(overrides: dict | None = None) -> Registry:
    """Registry holding every primitive used by the bundled programs."""
    params = load_params(overrides or {})
    n_int = int(params["c-find"]["intervals"])
    reg = Registry()
    reg.register(crowd_vote(params["crowd-vote"]))
    reg.register(c_imp(params["c-imp"]))
    reg.register(c_find(params["c-find"]))
    reg.register(_trivial("+", 2, lambda a, b: _num(a) + _num(b)))
    reg.register(_trivial(">", 2, lambda a, b: _num(a) > _num(b)))
    reg.register(_trivial("=", 2, lambda a, b: a == b))

    def relevant(text, i):
        lo, hi = _chunks(text, n_int)[i]
        return text[lo:hi]

    def replace(text, i, new):
        lo, hi = _chunks(text, n_int)[i]
        return text[:lo] + new + text[hi:]

    # text-valued results carry the quality of the text they stand for
    reg.register(_trivial("get-relevant-text", 2, relevant, emits=False, poaps=lambda t, i: t))
    reg.register(_trivial("replace-text", 3, replace, emits=False, poaps=lambda t, i, new: new))
    reg.register(_trivial("merge", 2, _merge))
    reg.register(_trivial("remove", 2, _remove))
    for name, (dx, dy) in {"move-north": (0, 1), "move-south": (0, -1),
                           "move-east": (1, 0), "move-west": (-1, 0)}.items():
        p = params[name]
        reg.register(_trivial(name, 1, _mover(dx, dy, int(p["size"])),
                              cost_cents=float(p["cost_cents"]), params=p))
    reg.register(_trivial("sample", 1, lambda pos: pos,
                          cost_cents=float(params["sample"]["cost_cents"]), params=params["sample"]))
    return reg


def load_params(overrides: dict) -> dict:
    """Merge per-primitive overrides into the defaults, checking names and ranges."""
    out = {name: dict(vals) for name, vals in DEFAULTS.items()}
    for name, vals in overrides.items():
        if name not in out:
            raise RegistryError(f"manifest names unknown primitive {name!r}")
        for key, value in vals.items():
            if key not in out[name]:
                raise RegistryError(f"unknown key {key!r} for primitive {name!r}")
            lo, hi = _RANGES[key]
            value = int(value) if key in _INT_KEYS else float(value)
            if not (lo <= value <= hi):
                raise RegistryError(f"{name}.{key} = {value} outside [{lo}, {hi}]")
            out[name][key] = value
    return out


def parse_manifest(text: str) -> dict:
    """Parse ``[primitive <name>]`` sections of ``key = value`` entries."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise RegistryError(f"bad manifest: {exc}") from None
    out = {}
    for section in cp.sections():
        kind, _, name = section.partition(" ")
        if kind != "primitive" or not name.strip():
            raise RegistryError(f"bad manifest section [{section}]")
        name = name.strip()
        vals = {}
        for key, raw in cp.items(section):
            try:
                vals[key] = float(raw)
            except ValueError:
                raise RegistryError(f"{name}.{key}: {raw!r} is not a number") from None
        out[name] = vals
    load_params(out)
    return out


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def enumerate_dist(dist: Iterable) -> dict:
    out: dict = {}
    for v, p in dist:
        out[v] = out.get(v, 0.0) + p
    return out
