"""Distributions of the uncertain parameters and the expectation operator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .poly import Kind, Polynomial, PolyError, Var, parse_var


class InsufficientMomentOrder(PolyError):
    pass


@dataclass(frozen=True)
class Uniform:
    l: float
    u: float

    def __post_init__(self):
        if not self.l < self.u:
            raise ValueError(f"uniform needs l < u, got [{self.l}, {self.u}]")

    def raw_moment(self, k: int) -> float:
        l, u = self.l, self.u
        return (u ** (k + 1) - l ** (k + 1)) / ((u - l) * (k + 1))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.l, self.u, size)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.where((z >= self.l) & (z <= self.u), 1.0 / (self.u - self.l), 0.0)

    def cdf(self, z):
        return np.clip((np.asarray(z, dtype=float) - self.l) / (self.u - self.l), 0.0, 1.0)

    @property
    def support(self):
        return (self.l, self.u)

    def to_json(self):
        return {"kind": "uniform", "l": self.l, "u": self.u}


@dataclass(frozen=True)
class Gaussian:
    mu: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"gaussian variance must be positive, got {self.var}")

    def raw_moment(self, k: int) -> float:
        # m_k = mu m_{k-1} + (k-1) var m_{k-2}
        prev, cur = 0.0, 1.0
        for j in range(1, k + 1):
            prev, cur = cur, self.mu * cur + (j - 1) * self.var * prev
        return cur

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu, math.sqrt(self.var), size)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.exp(-(z - self.mu) ** 2 / (2 * self.var)) / math.sqrt(2 * math.pi * self.var)

    @property
    def support(self):
        return (-math.inf, math.inf)

    def to_json(self):
        return {"kind": "gaussian", "mu": self.mu, "var": self.var}


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"beta parameters must be positive, got ({self.a}, {self.b})")

    def raw_moment(self, k: int) -> float:
        y = 1.0
        for j in range(1, k + 1):
            y *= (self.a + j - 1) / (self.a + self.b + j - 1)
        return y

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        norm = math.lgamma(self.a + self.b) - math.lgamma(self.a) - math.lgamma(self.b)
        inside = (z > 0) & (z < 1)
        zc = np.where(inside, z, 0.5)
        val = np.exp(norm + (self.a - 1) * np.log(zc) + (self.b - 1) * np.log1p(-zc))
        return np.where(inside, val, 0.0)

    @property
    def support(self):
        return (0.0, 1.0)

    def to_json(self):
        return {"kind": "beta", "a": self.a, "b": self.b}


DistributionSpec = Union[Uniform, Gaussian, Beta]


def raw_moment(d: DistributionSpec, k: int) -> float:
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    return d.raw_moment(k)


def sample(d: DistributionSpec, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


def from_json(spec: Mapping) -> DistributionSpec:
    kind = str(spec.get("kind", "")).lower()
    try:
        if kind == "uniform":
            return Uniform(float(spec["l"]), float(spec["u"]))
        if kind in ("gaussian", "normal"):
            return Gaussian(float(spec["mu"]), float(spec["var"]))
        if kind == "beta":
            return Beta(float(spec["a"]), float(spec["b"]))
    except KeyError as exc:
        raise ValueError(f"{kind} distribution is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown distribution kind {spec.get('kind')!r}")


class MomentTable:
    """Raw moments E[w^k], k = 0..order, for each (independent) uncertain variable."""

    def __init__(self, dists: Mapping[Var, DistributionSpec], order: int):
        self.dists = dict(dists)
        self.order = int(order)
        self.moments = {v: np.array([d.raw_moment(k) for k in range(self.order + 1)])
                        for v, d in self.dists.items()}

    @classmethod
    def for_polynomial(cls, dists: Mapping[Var, DistributionSpec], p: Polynomial,
                       power: int = 1) -> MomentTable:
        """Table deep enough to take E[p^power]: power * deg_w per variable."""
        order = max((power * p.degree_in(v) for v in dists), default=0)
        return cls(dists, order)

    def __getitem__(self, v: Var) -> np.ndarray:
        return self.moments[v]

    def moment(self, v: Var, k: int) -> float:
        if v not in self.moments:
            raise InsufficientMomentOrder(f"no distribution declared for {v.name}")
        if k > self.order:
            raise InsufficientMomentOrder(
                f"moment of order {k} of {v.name} requested, table holds up to {self.order}")
        return float(self.moments[v][k])


def expectation(p: Polynomial, moments: MomentTable) -> Polynomial:
    """Replace each w-monomial by the product of its per-variable raw moments."""
    out: dict = {}
    for m, c in p.items():
        rest = []
        factor = 1.0
        for v, e in m:
            if v.kind is Kind.UNCERTAIN:
                factor *= moments.moment(v, e)
            else:
                rest.append((v, e))
        key = tuple(rest)
        out[key] = out.get(key, 0.0) + c * factor
    universe = (v for v in p.variables if v.kind is not Kind.UNCERTAIN)
    return Polynomial(out, universe, p.scope)


def parse_declarations(items) -> dict[Var, DistributionSpec]:
    """Scenario fragment ``[{"name": "w1", "dist": {...}}, ...]`` to a mapping."""
    out = {}
    for item in items:
        v = parse_var(item["name"])
        if v.kind is not Kind.UNCERTAIN:
            raise ValueError(f"{item['name']!r} is not an uncertain variable name (w<i>)")
        out[v] = from_json(item["dist"])
    return out

