"""Critical-headway laws, impatience policies and the model description.

All times are in seconds and all rates per second.  Transforms accept
scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import ClassVar, Union

import numpy as np
from scipy.special import gammainccinv, gammaln

from .errors import ValidationError

GL_NODES = 128


class Behavior(str, Enum):
    """Driver behaviour: constant headway, resampled per attempt, or drawn once per driver."""

    B1 = "b1"
    B2 = "b2"
    B3 = "b3"


@lru_cache(maxsize=None)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _gamma_rule(shape, rate, panels, tilt, eps):
    """Composite Gauss-Legendre rule for E[g(T)], T ~ Gamma(shape, rate).

    The range is cut at the upper ``eps`` quantile of the law tilted by
    ``e^{tilt*T}``, so that integrands growing like ``e^{tilt*t}`` keep a
    relative tail below ``eps``.  The substitution t = Q u^m with
    m = ceil(shape)/shape turns the density into a polynomial times an
    exponential in u, removing the singularity at 0 when shape < 1.
    """
    if tilt >= rate:
        raise ValueError("tilt must be below the rate")
    upper = gammainccinv(shape, eps) / (rate - tilt)
    m = math.ceil(shape) / shape
    x, w = _legendre(GL_NODES)
    edges = np.linspace(0.0, 1.0, panels + 1)
    width = np.diff(edges)
    u = (edges[:-1, None] + width[:, None] * x[None, :]).ravel()
    wu = (width[:, None] * w[None, :]).ravel()
    t = upper * u**m
    log_jac = math.log(upper * m) + (m - 1.0) * np.log(u)
    log_pdf = shape * math.log(rate) + (shape - 1.0) * np.log(t) - rate * t - gammaln(shape)
    return t, wu * np.exp(log_pdf + log_jac)


@dataclass(frozen=True)
class Deterministic:
    t: float

    is_discrete: ClassVar[bool] = True

    def lst(self, s):
        return np.exp(-np.asarray(s) * self.t)

    def lst_complement(self, s):
        """1 - lst(s) without cancellation."""
        return -np.expm1(-np.asarray(s) * self.t)

    def discounted_mean(self, s):
        """E[T e^{-sT}], i.e. minus the derivative of the transform."""
        return self.t * np.exp(-np.asarray(s) * self.t)

    def mgf(self, theta):
        with np.errstate(over="ignore"):
            return float(np.exp(theta * self.t))

    def mgf_minus_one(self, theta):
        with np.errstate(over="ignore"):
            return float(np.expm1(theta * self.t))

    def mean(self):
        return float(self.t)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.t)
        return np.full(size, float(self.t))

    def quadrature(self, panels=1, tilt=0.0, eps=1e-16):
        return np.array([float(self.t)]), np.array([1.0])


@dataclass(frozen=True)
class DiscreteMixture:
    """Finitely many atoms ``(t_i, p_i)``."""

    atoms: tuple

    is_discrete: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(t), float(p)) for t, p in self.atoms))

    @property
    def values(self):
        return np.array([t for t, _ in self.atoms])

    @property
    def probs(self):
        return np.array([p for _, p in self.atoms])

    def _average(self, fn, s):
        s = np.asarray(s)
        return fn(np.multiply.outer(s, self.values)) @ self.probs

    def lst(self, s):
        return self._average(lambda st: np.exp(-st), s)

    def lst_complement(self, s):
        return self._average(lambda st: -np.expm1(-st), s)

    def discounted_mean(self, s):
        s = np.asarray(s)
        return np.exp(-np.multiply.outer(s, self.values)) @ (self.probs * self.values)

    def mgf(self, theta):
        with np.errstate(over="ignore"):
            return float(np.exp(theta * self.values) @ self.probs)

    def mgf_minus_one(self, theta):
        with np.errstate(over="ignore"):
            return float(np.expm1(theta * self.values) @ self.probs)

    def mean(self):
        return float(self.values @ self.probs)

    def sample(self, rng, size=None):
        return rng.choice(self.values, size=size, p=self.probs)

    def quadrature(self, panels=1, tilt=0.0, eps=1e-16):
        return self.values, self.probs


@dataclass(frozen=True)
class Exponential:
    rate: float

    is_discrete: ClassVar[bool] = False

    def lst(self, s):
        return self.rate / (self.rate + np.asarray(s))

    def lst_complement(self, s):
        s = np.asarray(s)
        return s / (self.rate + s)

    def discounted_mean(self, s):
        return self.rate / (self.rate + np.asarray(s)) ** 2

    def mgf(self, theta):
        if theta >= self.rate:
            return math.inf
        return self.rate / (self.rate - theta)

    def mgf_minus_one(self, theta):
        if theta >= self.rate:
            return math.inf
        return theta / (self.rate - theta)

    def mean(self):
        return 1.0 / self.rate

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def quadrature(self, panels=1, tilt=0.0, eps=1e-16):
        return _gamma_rule(1.0, self.rate, panels, tilt, eps)


@dataclass(frozen=True)
class Gamma:
    shape: float
    rate: float

    is_discrete: ClassVar[bool] = False

    def lst(self, s):
        return (1.0 + np.asarray(s) / self.rate) ** (-self.shape)

    def lst_complement(self, s):
        return -np.expm1(-self.shape * np.log1p(np.asarray(s) / self.rate))

    def discounted_mean(self, s):
        return self.shape / self.rate * (1.0 + np.asarray(s) / self.rate) ** (-self.shape - 1.0)

    def mgf(self, theta):
        if theta >= self.rate:
            return math.inf
        return (1.0 - theta / self.rate) ** (-self.shape)

    def mgf_minus_one(self, theta):
        if theta >= self.rate:
            return math.inf
        return math.expm1(-self.shape * math.log1p(-theta / self.rate))

    def mean(self):
        return self.shape / self.rate

    def sample(self, rng, size=None):
        # numpy's Marsaglia-Tsang rejection sampler
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def quadrature(self, panels=1, tilt=0.0, eps=1e-16):
        return _gamma_rule(self.shape, self.rate, panels, tilt, eps)


HeadwayDistribution = Union[Deterministic, DiscreteMixture, Exponential, Gamma]


@dataclass(frozen=True)
class NoImpatience:
    frozen_from: ClassVar[int] = 1

    def coeffs(self, j):
        j = np.asarray(j)
        return np.ones(j.shape), np.zeros(j.shape)

    def headway(self, t1, j):
        if np.ndim(j) == 0:
            return t1
        return np.full(np.shape(j), t1, dtype=float)


@dataclass(frozen=True)
class AffineDecay:
    """T_{j+1} = alpha (T_j - delta) + delta, i.e. h_j(t) = a_j t + b_j."""

    alpha: float
    delta: float

    frozen_from: ClassVar[None] = None

    def coeffs(self, j):
        """Return ``(a_j, b_j)`` with a_j = alpha^(j-1) and b_j = delta (1 - alpha^(j-1))."""
        k = np.asarray(j, dtype=float) - 1.0
        log_a = k * math.log(self.alpha)
        return np.exp(log_a), -self.delta * np.expm1(log_a)

    def headway(self, t1, j):
        a, b = self.coeffs(j)
        return a * t1 + b


@dataclass(frozen=True)
class ExplicitSequence:
    """Fixed headways for the listed attempts, then ``terminal`` forever (B1 only)."""

    values: tuple
    terminal: float

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def frozen_from(self):
        return len(self.values) + 1

    def headway(self, t1, j):
        j = np.asarray(j)
        table = np.append(np.asarray(self.values, dtype=float), self.terminal)
        return table[np.minimum(j, len(self.values) + 1) - 1]


ImpatiencePolicy = Union[NoImpatience, AffineDecay, ExplicitSequence]


def attempt_headway(policy, t1, j):
    """Critical headway used at attempt ``j`` by a driver whose first headway is ``t1``."""
    return policy.headway(t1, j)


def attempt_affine_coeffs(policy, j):
    return policy.coeffs(j)


@dataclass(frozen=True)
class ModelSpec:
    behavior: Behavior
    dist: HeadwayDistribution
    policy: ImpatiencePolicy = field(default_factory=NoImpatience)
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "behavior", Behavior(self.behavior))

    def with_q(self, q):
        return replace(self, q=float(q))


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")


def _validate_dist(dist):
    if isinstance(dist, Deterministic):
        _positive("t", dist.t)
    elif isinstance(dist, DiscreteMixture):
        if not dist.atoms:
            raise ValidationError("mixture needs at least one atom")
        for t, p in dist.atoms:
            _positive("atom value", t)
            _positive("atom probability", p)
        total = math.fsum(p for _, p in dist.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {total:g}, not 1")
    elif isinstance(dist, Exponential):
        _positive("rate", dist.rate)
    elif isinstance(dist, Gamma):
        _positive("shape", dist.shape)
        _positive("rate", dist.rate)
    else:
        raise ValidationError(f"unknown headway distribution {dist!r}")


def _validate_policy(policy):
    if isinstance(policy, NoImpatience):
        return
    if isinstance(policy, AffineDecay):
        if not (0.0 < policy.alpha < 1.0):
            raise ValidationError(f"alpha out of (0,1): {policy.alpha!r}")
        if not (math.isfinite(policy.delta) and policy.delta >= 0.0):
            raise ValidationError(f"delta must be >= 0, got {policy.delta!r}")
    elif isinstance(policy, ExplicitSequence):
        _positive("terminal", policy.terminal)
        seq = list(policy.values) + [policy.terminal]
        for prev, nxt in zip(seq, seq[1:]):
            if nxt > prev:
                raise ValidationError(f"explicit headway sequence increases ({prev:g} -> {nxt:g})")
    else:
        raise ValidationError(f"unknown impatience policy {policy!r}")


def validate(obj):
    """Raise ValidationError naming the first violated invariant; return None if valid."""
    if isinstance(obj, ModelSpec):
        _validate_dist(obj.dist)
        _validate_policy(obj.policy)
        if not (math.isfinite(obj.q) and obj.q >= 0.0):
            raise ValidationError(f"q must be finite and >= 0, got {obj.q!r}")
        if obj.behavior is Behavior.B1 and not isinstance(obj.dist, Deterministic):
            raise ValidationError("behavior b1 requires a deterministic headway")
        if isinstance(obj.policy, ExplicitSequence) and obj.behavior is not Behavior.B1:
            raise ValidationError("explicit headway sequences are only defined for behavior b1")
    elif isinstance(obj, (NoImpatience, AffineDecay, ExplicitSequence)):
        _validate_policy(obj)
    else:
        _validate_dist(obj)
