"""Service-time transforms and M/G/1 metrics of the minor-road queue.

The service time Y is the time from the instant a driver reaches the head
of the queue until the driver crosses.  With ``m_j(u) = E[exp(-u T_j)]`` the
transform is the attempt series

    sum_k (q/(s+q))^k m_{k+1}(s+q) prod_{j<=k} (1 - m_j(s+q)),

where T_j is the headway used at attempt j.  B1 and B2 share one engine
(B1 is B2 with a point mass); B3 conditions on the first headway and
averages the B1 series over the atoms or quadrature nodes of T_1.

The series engines carry a leading batch axis so that all quadrature
nodes of a B3 model are summed in one pass.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import InfiniteMomentError, InstabilityError, TruncationError, ValidationError
from .headway import (
    AffineDecay,
    Behavior,
    Deterministic,
    ExplicitSequence,
    ModelSpec,
    NoImpatience,
    validate,
)

_MAX_PANELS = 256
_FD_STEP = 0.05
_FD_LEVELS = 4
_FD_QUAD_RTOL = 1e-9
_CHUNK_ELEMENTS = 1 << 18
# a frozen (geometric) tail predicted to need more terms than this is summed in closed form
_CLOSE_AFTER = 1024
# below the smallest normal double a major-road rate changes no moment or
# transform value at double precision, and subnormal arithmetic loses bits
_Q_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class SeriesResult:
    """A truncated-series value together with a bound on the discarded tail."""

    value: object
    bound: object
    terms: int


class _Points:
    """A batch of point-mass headways; transforms gain a leading batch axis."""

    is_discrete = True

    def __init__(self, t):
        self.t = np.asarray(t, dtype=float)

    def _col(self, x):
        return self.t.reshape((-1,) + (1,) * (np.ndim(x) - 1))

    def lst(self, x):
        return np.exp(-np.asarray(x) * self._col(x))

    def lst_complement(self, x):
        return -np.expm1(-np.asarray(x) * self._col(x))

    def discounted_mean(self, x):
        t = self._col(x)
        return t * np.exp(-np.asarray(x) * t)

    def mean(self):
        return self.t


class _Attempts:
    """Per-attempt transforms of T_j for one headway law (or a batch of points) under a policy.

    Arrays returned by ``transform``/``complement`` have shape (B, S, J) and
    those from ``at_q`` shape (B, J), with B = 1 for a single law.
    """

    def __init__(self, dist, policy, q):
        self.dist = dist
        self.policy = policy
        self.q = q
        self.batch = len(dist.t) if isinstance(dist, _Points) else 1
        self.explicit = isinstance(policy, ExplicitSequence)
        if isinstance(policy, AffineDecay):
            pinned = isinstance(dist, Deterministic) and dist.t == policy.delta
            self.frozen_from = 1 if pinned else None
        else:
            self.frozen_from = policy.frozen_from

    def _explicit_headways(self, j):
        return self.policy.headway(None, j)

    def transform(self, u, j):
        if self.explicit:
            return np.exp(-u * self._explicit_headways(j))
        a, b = self.policy.coeffs(j)
        return np.exp(-u * b) * self.dist.lst(u * a)

    def complement(self, u, j):
        """1 - m_j(u) computed without cancellation."""
        if self.explicit:
            return -np.expm1(-u * self._explicit_headways(j))
        a, b = self.policy.coeffs(j)
        return -np.expm1(-u * b) + np.exp(-u * b) * self.dist.lst_complement(u * a)

    def at_q(self, j):
        """Return (p_j, 1 - p_j, E[T_j e^{-q T_j}]) on the real axis."""
        q = self.q
        if self.explicit:
            t = self._explicit_headways(j)[None, :]
            p = np.exp(-q * t)
            return p, -np.expm1(-q * t), t * p
        a, b = self.policy.coeffs(j)
        x = (q * a)[None, :]
        b = b[None, :]
        eb = np.exp(-q * b)
        lq = self.dist.lst(x)
        p = eb * lq
        omp = -np.expm1(-q * b) + eb * self.dist.lst_complement(x)
        e = eb * (a[None, :] * self.dist.discounted_mean(x) + b * lq)
        return tuple(np.broadcast_to(v, (self.batch, len(j))) for v in (p, omp, e))

    def limit_rejection(self):
        """lim_j (1 - p_j), the eventual per-attempt rejection probability."""
        if isinstance(self.policy, AffineDecay):
            return np.full(self.batch, -math.expm1(-self.q * self.policy.delta))
        _, omp, _ = self.at_q(np.array([self.frozen_from]))
        return np.array(omp[:, 0])

    def headway_scale(self):
        """A time scale no smaller than any attempt headway (or the headway's tail scale)."""
        if self.explicit:
            return np.full(self.batch, max(self.policy.values + (self.policy.terminal,)))
        dist = self.dist
        if isinstance(dist, _Points):
            scale = dist.t
        elif isinstance(dist, Deterministic):
            scale = np.array([dist.t])
        elif dist.is_discrete:
            scale = np.array([dist.values.max()])
        else:
            scale = np.array([1.0 / dist.rate])
        if isinstance(self.policy, AffineDecay):
            scale = np.maximum(scale, self.policy.delta)
        return scale

    def first_mean(self):
        if self.explicit:
            return np.full(self.batch, self._explicit_headways(np.array([1]))[0])
        return np.broadcast_to(self.dist.mean(), (self.batch,)).astype(float)


def _terms_needed(weight, ratio, tol):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        need = np.log(tol / weight) / np.log(ratio)
    need = np.where(ratio <= 0.0, 1.0, need)
    need = np.where(ratio >= 1.0, np.inf, need)
    return np.where(weight < tol, 0.0, need)


def _first_true(mask):
    """Index of the first True along axis 1, or the row length when there is none."""
    return np.where(mask.any(axis=1), np.argmax(mask, axis=1), mask.shape[1])


def _lst_series(att, s, tol, max_terms):
    """Transform series at points ``s`` of shape (B or 1, S); value has shape (B, S)."""
    s = np.asarray(s)
    s = s.astype(float if np.isrealobj(s) else complex)
    q = att.q
    batch = max(att.batch, s.shape[0])
    s = np.broadcast_to(s, (batch, s.shape[1]))
    if q == 0.0:
        value = att.transform(s[:, :, None], np.array([1]))[:, :, 0]
        return SeriesResult(np.broadcast_to(value, s.shape).copy(), np.zeros(batch), 1)
    u = s + q
    r = q / u
    total = np.zeros(s.shape, dtype=s.dtype)
    w = np.ones(s.shape, dtype=s.dtype)
    pi = np.ones(batch)
    bound = np.zeros(batch)
    done = np.zeros(batch, dtype=bool)
    k = 0
    chunk = 16
    cap = max(16, _CHUNK_ELEMENTS // s.size)
    while True:
        if att.frozen_from is not None and k + 1 >= att.frozen_from:
            j1 = np.array([k + 1])
            mf = att.transform(u[:, :, None], j1)[:, :, 0]
            ratio = r * att.complement(u[:, :, None], j1)[:, :, 0]
            omp_f = att.at_q(j1)[1][:, 0]
            worst = np.maximum(omp_f, np.abs(ratio).max(axis=1))
            weight = np.maximum(pi, np.abs(w).max(axis=1))
            close = ~done & (_terms_needed(weight, worst, tol) > min(_CLOSE_AFTER, max_terms - k))
            if close.any():
                # all remaining attempts are identical: geometric remainder
                with np.errstate(all="ignore"):
                    rem = w * mf / (1.0 - ratio)
                total[close] += rem[close]
                bound[close] = 0.0
                done |= close
            if done.all():
                return SeriesResult(total, bound, k)
        if k >= max_terms:
            raise TruncationError(
                f"transform series not converged after {k} terms", partial=total, bound=pi
            )
        n = min(chunk, max_terms - k)
        j = np.arange(k + 1, k + n + 1)
        with np.errstate(over="ignore", invalid="ignore"):
            m = att.transform(u[:, :, None], j)
            f = r[:, :, None] * att.complement(u[:, :, None], j)
            _, omp, _ = att.at_q(j)
            cf = np.cumprod(f, axis=2)
            w_before = np.concatenate([w[:, :, None], w[:, :, None] * cf[:, :, :-1]], axis=2)
            cpi = pi[:, None] * np.cumprod(omp, axis=1)
            pi_before = np.concatenate([pi[:, None], cpi[:, :-1]], axis=1)
            terms = w_before * m
            small = np.maximum(pi_before, np.abs(w_before).max(axis=1)) < tol
        first = _first_true(small)
        keep = (np.arange(n)[None, :] < first[:, None]) & ~done[:, None]
        total += np.where(keep[:, None, :], terms, 0.0).sum(axis=2)
        newly = ~done & (first < n)
        rows = np.nonzero(newly)[0]
        bound[rows] = pi_before[rows, first[rows]]
        done |= newly
        k += n
        if done.all():
            return SeriesResult(total, bound, k)
        w = w * cf[:, :, -1]
        pi = cpi[:, -1]
        chunk = min(2 * chunk, cap)


def _mean_series(att, tol, max_terms):
    """E[Y] = sum_k w_k [E[T_{k+1} e^{-qT_{k+1}}] + p_{k+1}(k/q - S_k)], per batch member.

    w_k is the probability of k rejections and S_k accumulates
    E[T_i e^{-qT_i}]/(1 - p_i); each rejected gap has conditional mean
    1/q minus that ratio.  The code carries q S_k and w_k/q so that a
    tiny q never forms k/q on its own.
    """
    q = att.q
    batch = att.batch
    if q == 0.0:
        return SeriesResult(att.first_mean(), np.zeros(batch), 1)
    total = np.zeros(batch)
    w = np.ones(batch)
    acc = np.zeros(batch)
    bound = np.zeros(batch)
    done = np.zeros(batch, dtype=bool)
    limit = att.limit_rejection()
    k = 0
    chunk = 16
    while True:
        if att.frozen_from is not None and k + 1 >= att.frozen_from:
            p_f, omp_f, _ = (v[:, 0] for v in att.at_q(np.array([k + 1])))
            close = ~done & (_terms_needed(w, omp_f, tol) > min(_CLOSE_AFTER, max_terms - k))
            if close.any():
                with np.errstate(over="ignore"):
                    wq = w / q
                rem = wq * (k - acc + omp_f / p_f)
                total[close] += rem[close]
                done |= close
            if done.all():
                return SeriesResult(total, bound, k)
        if k >= max_terms:
            raise TruncationError(
                f"mean series not converged after {k} terms", partial=total, bound=w
            )
        n = min(chunk, max_terms - k)
        j = np.arange(k + 1, k + n + 1)
        p, omp, e = att.at_q(j)
        c = (q * e) / omp
        acc_after = acc[:, None] + np.cumsum(c, axis=1)
        acc_before = np.concatenate([acc[:, None], acc_after[:, :-1]], axis=1)
        kk = np.arange(k, k + n, dtype=float)[None, :]
        cpi = w[:, None] * np.cumprod(omp, axis=1)
        w_before = np.concatenate([w[:, None], cpi[:, :-1]], axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            wq = np.where(kk > 0, w_before / q, 0.0)
        terms = w_before * e + wq * p * (kk - acc_before)
        small = w_before < tol
        first = _first_true(small)
        keep = (np.arange(n)[None, :] < first[:, None]) & ~done[:, None]
        total += np.where(keep, terms, 0.0).sum(axis=1)
        rows = np.nonzero(~done & (first < n))[0]
        if rows.size:
            i = first[rows]
            last = np.where(i > 0, omp[rows, np.maximum(i - 1, 0)], limit[rows])
            ratio = np.maximum(last, limit[rows])
            spent = kk[0, i] - acc_before[rows, i]
            with np.errstate(over="ignore"):
                wq_i = w_before[rows, i] / q
            bound[rows] = wq_i * (spent + ratio / (1.0 - ratio))
            done[rows] = True
        k += n
        if done.all():
            return SeriesResult(total, bound, k)
        w = cpi[:, -1]
        acc = acc_after[:, -1]
        chunk = min(2 * chunk, max(16, _CHUNK_ELEMENTS // batch))


def _fd_derivative(fn, scale, order):
    """(-1)^order times the order-th derivative at 0, per batch member.

    Central differences at steps scale/2^i combined by Richardson
    extrapolation.  ``fn`` maps real points of shape (B, P) to values of
    the same shape; ``scale`` has shape (B,).
    """
    h = scale[:, None] / 2.0 ** np.arange(_FD_LEVELS)[None, :]
    pts = np.concatenate([-h, np.zeros((len(scale), 1)), h], axis=1)
    vals = np.real(fn(pts))
    minus, mid, plus = vals[:, :_FD_LEVELS], vals[:, _FD_LEVELS : _FD_LEVELS + 1], vals[:, _FD_LEVELS + 1 :]
    if order == 1:
        table = (minus - plus) / (2.0 * h)
    else:
        table = (plus - 2.0 * mid + minus) / h**2
    for level in range(1, _FD_LEVELS):
        table = table[:, 1:] + (table[:, 1:] - table[:, :-1]) / (4.0**level - 1.0)
    return table[:, 0]


def _fd_moment(fn, mean, scale_floor, order):
    """Finite-difference moment, halving the step for members whose evaluation fails."""
    scale = _FD_STEP / np.maximum(mean, scale_floor)
    out = np.full(len(scale), np.nan)
    todo = np.ones(len(scale), dtype=bool)
    for _ in range(12):
        idx = np.nonzero(todo)[0]
        try:
            with np.errstate(all="ignore"):
                vals = _fd_derivative(lambda pts: fn(pts, idx), scale[idx], order)
        except TruncationError:
            vals = np.full(len(idx), np.nan)
        ok = np.isfinite(vals)
        out[idx[ok]] = vals[ok]
        todo[idx[ok]] = False
        if not todo.any():
            return out
        scale[todo] /= 2.0
    raise TruncationError("finite-difference moment did not stabilise")


def _b1_closed_lst(t, s, q):
    """B1 transform without impatience for headways t (shape (B,)) at s (shape (B or 1, S))."""
    u = s + q
    e = np.exp(-u * t[:, None])
    if q == 0.0:
        return e
    return u * e / (s + q * e)


@dataclass(frozen=True)
class ServiceCharacterization:
    """Evaluator for the service-time law of one model."""

    spec: ModelSpec
    truncation_tolerance: float = 1e-12
    max_terms: int = 100_000
    quadrature_rtol: float = 1e-12

    def __post_init__(self):
        validate(self.spec)
        if not self.truncation_tolerance > 0:
            raise ValidationError("truncation_tolerance must be > 0")
        if self.max_terms < 1:
            raise ValidationError("max_terms must be >= 1")

    @property
    def q(self):
        q = self.spec.q
        return 0.0 if q < _Q_FLOOR else q

    @property
    def impatient(self):
        return not isinstance(self.spec.policy, NoImpatience)

    def _attempts(self, nodes=None):
        dist = self.spec.dist if nodes is None else _Points(nodes)
        return _Attempts(dist, self.spec.policy, self.q)

    def _method(self, method):
        if method == "auto":
            return "series" if self.impatient else "closed"
        if method == "closed" and self.impatient:
            raise ValueError("closed forms exist only without impatience")
        if method not in ("closed", "series"):
            raise ValueError(f"unknown method {method!r}")
        return method

    def _expect(self, node_fn, tilt=0.0, rtol=None):
        """Average node_fn(nodes) -> (values (N, ...), bounds (N,)) over the law of T_1."""
        dist = self.spec.dist
        if dist.is_discrete:
            nodes, weights = dist.quadrature()
            vals, bounds = node_fn(nodes)
            return np.tensordot(weights, vals, axes=1), float(weights @ bounds)
        prev = None
        panels = 1
        while panels <= _MAX_PANELS:
            nodes, weights = dist.quadrature(panels, tilt)
            vals, bounds = node_fn(nodes)
            cur = np.tensordot(weights, vals, axes=1)
            if prev is not None:
                diff = np.abs(cur - prev)
                if np.all(diff <= (rtol or self.quadrature_rtol) * np.maximum(np.abs(cur), 1e-15)):
                    return cur, float(weights @ bounds) + float(np.max(diff))
            prev = cur
            panels *= 2
        raise TruncationError("quadrature over the first headway did not converge", partial=prev)

    def _series_args(self):
        return self.truncation_tolerance, self.max_terms

    # transforms -----------------------------------------------------------

    def lst_estimate(self, s, method="auto"):
        """Y~(s) for Re(s) >= 0 (vectorised over s), with a tail bound."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        method = self._method(method)
        if s.size == 0:
            return SeriesResult(s.copy(), 0.0, 0)
        spec = self.spec
        q = self.q
        if spec.behavior is not Behavior.B3:
            if method == "series":
                res = _lst_series(self._attempts(), s[None, :], *self._series_args())
                return SeriesResult(res.value[0], float(res.bound[0]), res.terms)
            if q == 0.0:
                return SeriesResult(spec.dist.lst(s), 0.0, 0)
            u = s + q
            lu = spec.dist.lst(u)
            return SeriesResult(u * lu / (s + q * lu), 0.0, 0)
        if method == "closed":
            node_fn = lambda t: (_b1_closed_lst(t, s[None, :], q), np.zeros(len(t)))
        else:

            def node_fn(t):
                res = _lst_series(self._attempts(t), s[None, :], *self._series_args())
                return res.value, res.bound

        value, bound = self._expect(node_fn)
        return SeriesResult(value, bound, 0)

    def lst(self, s, method="auto"):
        value = self.lst_estimate(s, method).value
        return value[0] if np.ndim(s) == 0 else value

    # moments --------------------------------------------------------------

    def _b3_diverges(self, order):
        return not self.impatient and math.isinf(self.spec.dist.mgf(order * self.q))

    def mean_estimate(self, method="auto"):
        method = self._method(method)
        spec = self.spec
        q = self.q
        if spec.behavior is Behavior.B3 and self._b3_diverges(1):
            return SeriesResult(math.inf, 0.0, 0)
        if method == "closed":
            dist = spec.dist
            if q == 0.0:
                value = dist.mean()
            elif isinstance(dist, Deterministic):
                value = math.expm1(q * dist.t) / q
            elif spec.behavior is Behavior.B2:
                value = float(dist.lst_complement(q)) / (q * float(dist.lst(q)))
            else:
                value = dist.mgf_minus_one(q) / q
            return SeriesResult(value, 0.0, 0)
        if spec.behavior is not Behavior.B3:
            res = _mean_series(self._attempts(), *self._series_args())
            return SeriesResult(float(res.value[0]), float(res.bound[0]), res.terms)

        def node_fn(t):
            res = _mean_series(self._attempts(t), *self._series_args())
            return res.value, res.bound

        with np.errstate(over="raise", invalid="raise", divide="raise"):
            try:
                value, bound = self._expect(node_fn, 0.0 if self.impatient else q)
            except FloatingPointError as exc:
                raise TruncationError("mean series overflows at the quadrature nodes") from exc
        return SeriesResult(float(value), bound, 0)

    def mean(self, method="auto"):
        if method == "auto":
            return self._mean
        return self.mean_estimate(method).value

    @cached_property
    def _mean(self):
        return self.mean_estimate("auto").value

    def moment(self, order):
        """E[Y^order] for order 1 or 2, by differentiating the transform at 0.

        Returns +inf when the moment diverges (B3 without impatience whose
        headway MGF is infinite at order*q).
        """
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.spec.behavior is not Behavior.B3:
            att = self._attempts()
            fn = lambda pts, idx: self.lst_estimate(pts[0]).value[None, :]
            return float(_fd_moment(fn, np.array([self.mean()]), att.headway_scale(), order)[0])
        if self._b3_diverges(order):
            return math.inf
        if not self.impatient:
            return self._b3_closed_moment(order)

        def node_fn(t):
            att = self._attempts(t)
            mean = _mean_series(att, *self._series_args()).value
            if self.impatient:
                fn = lambda pts, idx: _lst_series(
                    self._attempts(t[idx]), pts, *self._series_args()
                ).value
            else:
                fn = lambda pts, idx: _b1_closed_lst(t[idx], pts, self.q)
            return _fd_moment(fn, mean, att.headway_scale(), order), np.zeros(len(t))

        # finite differences carry ~1e-10 relative noise, so the quadrature cannot do better
        rtol = max(self.quadrature_rtol, _FD_QUAD_RTOL)
        with np.errstate(over="ignore", invalid="ignore"):
            return float(self._expect(node_fn, 0.0, rtol)[0])

    def _b3_closed_moment(self, order):
        """Average of the B1 moments over T_1; E[Y^2 | t] = 2 e^{qt}(e^{qt} - 1 - qt)/q^2."""
        q = self.q
        tilt = order * q
        nodes, weights = self.spec.dist.quadrature(1, tilt)

        def node_fn(t):
            if q == 0.0:
                return t**order, np.zeros(len(t))
            x = q * t
            em1 = np.expm1(x)
            if order == 1:
                return em1 / q, np.zeros(len(t))
            small = x < 1e-3
            excess = np.where(small, x * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0))), em1 - x)
            return 2.0 * np.exp(x) * excess / q**2, np.zeros(len(t))

        with np.errstate(over="ignore"):
            return float(self._expect(node_fn, tilt)[0])

    # capacity -------------------------------------------------------------

    def capacity(self):
        mean = self.mean()
        return 0.0 if math.isinf(mean) else 1.0 / mean

    def utilization(self, lam):
        if lam == 0:
            return 0.0
        cap = self.capacity()
        return math.inf if cap == 0.0 else lam / cap

    def is_stable(self, lam):
        """Return ``(stable, rho)``; stability means rho = lam E[Y] < 1."""
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        rho = self.utilization(lam)
        return rho < 1.0, rho


@dataclass(frozen=True)
class QueueMetrics:
    rho: float
    mean_queue_length: float
    mean_waiting: float
    mean_sojourn: float
    lam: float
    mean_service: float
    service_second_moment: float


def _require_stable(sc, lam):
    stable, rho = sc.is_stable(lam)
    if not stable:
        raise InstabilityError(
            f"unstable: rho = {rho:.6g} >= 1 (capacity {sc.capacity():.6g} veh/s)",
            rho=rho,
            capacity=sc.capacity(),
        )
    return rho


def queue_pgf(sc, lam, z):
    """Generating function of the number of cars left behind at departures."""
    rho = _require_stable(sc, lam)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.ones(z.shape, dtype=complex)
    away = np.abs(1.0 - z) >= 1e-8
    if away.any():
        zz = z[away]
        y = sc.lst(lam * (1.0 - zz))
        out[away] = (1.0 - rho) * (1.0 - zz) * y / (y - zz)
    return out


def queue_length_pmf(sc, lam, n_max):
    """P(X = n), n = 0..n_max, by discrete Fourier inversion of the PGF on the unit circle."""
    _require_stable(sc, lam)
    size = 1 << max(0, math.ceil(math.log2(4 * (n_max + 1))))
    z = np.exp(2j * np.pi * np.arange(size) / size)
    coeffs = np.fft.fft(queue_pgf(sc, lam, z)).real / size
    pmf = coeffs[: n_max + 1]
    if pmf.min() < -1e-9:
        raise ArithmeticError(f"inverted probability {pmf.min():.3g} is negative beyond round-off")
    pmf = np.clip(pmf, 0.0, None)
    tail = 1.0 - pmf.sum()
    if tail > 1e-6:
        warnings.warn(f"queue-length pmf truncated at n={n_max} loses mass {tail:.3g}", RuntimeWarning)
    return pmf


def waiting_metrics(sc, lam):
    rho = _require_stable(sc, lam)
    mean = sc.mean()
    if lam == 0:
        return QueueMetrics(0.0, 0.0, 0.0, mean, 0.0, mean, sc.moment(2))
    second = sc.moment(2)
    if math.isinf(second):
        raise InfiniteMomentError(
            "service time has infinite second moment: mean waiting time and queue length are unbounded"
        )
    wait = lam * second / (2.0 * (1.0 - rho))
    sojourn = wait + mean
    return QueueMetrics(rho, lam * sojourn, wait, sojourn, lam, mean, second)


def waiting_lst(sc, lam, s):
    """W~(s) = s (1 - rho) / (lam Y~(s) + s - lam)."""
    rho = _require_stable(sc, lam)
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    out = np.ones(s.shape, dtype=complex)
    nz = s != 0
    y = sc.lst(s[nz])
    out[nz] = s[nz] * (1.0 - rho) / (lam * y + s[nz] - lam)
    return out


def sojourn_lst(sc, lam, s):
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    return waiting_lst(sc, lam, s) * sc.lst(s)


@dataclass
class SweepTable:
    """Capacities (per second) on a grid of major-road rates; NaN marks failed cells."""

    q: np.ndarray
    labels: list
    values: np.ndarray
    errors: dict = field(default_factory=dict)

    def column(self, label):
        return self.values[:, self.labels.index(label)]


def capacity_sweep(specs: Mapping[str, ModelSpec], q_grid: Sequence[float], **options):
    q_grid = np.asarray(q_grid, dtype=float)
    if q_grid.ndim != 1 or not np.all(np.isfinite(q_grid)) or np.any(q_grid < 0):
        raise ValidationError("q grid must be a finite, nonnegative sequence")
    order = np.argsort(q_grid, kind="stable")
    q_grid = q_grid[order]
    labels = list(specs)
    values = np.full((len(q_grid), len(labels)), np.nan)
    errors = {}
    for col, label in enumerate(labels):
        for row, q in enumerate(q_grid):
            try:
                sc = ServiceCharacterization(specs[label].with_q(q), **options)
                values[row, col] = sc.capacity()
            except (TruncationError, ArithmeticError) as exc:
                errors[(row, label)] = str(exc)
    return SweepTable(q_grid, labels, values, errors)
