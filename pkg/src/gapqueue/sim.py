"""Discrete-event Monte Carlo of the two-stream intersection.

Major-road cars pass as a Poisson(q) stream, minor-road cars arrive as a
Poisson(lambda) stream and queue FIFO.  The head-of-queue driver on
attempt j compares T_j with the time left until the next major passing;
if it fits the driver leaves exactly T_j after the comparison started,
otherwise the driver waits for the passing and tries again with j+1.  The next driver's
first attempt starts at the departure instant against what is left of
the current gap.

Two kernels are compiled with numba: a saturated one that produces back to
back service times, and a full one driven by minor-road arrivals.
Observations are grouped into batches; the kernels return per-batch sums
and the confidence intervals are batch-means t intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy import stats

from .errors import ValidationError
from .headway import (
    AffineDecay,
    Behavior,
    Deterministic,
    DiscreteMixture,
    ExplicitSequence,
    Exponential,
    Gamma,
    ModelSpec,
    validate,
)

QUEUE_GUARD = 1_000_000

_DET, _MIX, _EXP, _GAMMA = 0, 1, 2, 3
_NONE, _AFFINE, _SEQ = 0, 1, 2


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float

    @property
    def low(self):
        return self.mean - self.half_width

    @property
    def high(self):
        return self.mean + self.half_width

    def covers(self, value):
        return self.low <= value <= self.high


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    Give ``horizon`` (seconds) for the full queue, or ``n_services`` for the
    saturated mode in which the queue never empties.
    """

    spec: ModelSpec
    lam: float = 0.0
    horizon: Optional[float] = None
    n_services: Optional[int] = None
    warmup_fraction: float = 0.1
    n_batches: int = 32
    seed: int = 0

    def __post_init__(self):
        validate(self.spec)
        if (self.horizon is None) == (self.n_services is None):
            raise ValidationError("give exactly one of horizon and n_services")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError("horizon must be > 0")
        if self.n_services is not None and self.n_services < self.n_batches:
            raise ValidationError("n_services must be at least n_batches")
        if self.n_batches < 2:
            raise ValidationError("n_batches must be >= 2")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValidationError("warmup_fraction must lie in [0, 1)")
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ValidationError("lambda must be finite and >= 0")

    @property
    def saturated(self):
        return self.n_services is not None


@dataclass(frozen=True)
class SimResult:
    mean_service: Estimate
    rho_hat: Estimate
    mean_queue_length: Estimate
    mean_waiting: Estimate
    mean_sojourn: Estimate
    lambda_hat: float
    n_arrivals: int
    n_departures: int
    final_queue_length: int
    unstable: bool


@dataclass(frozen=True)
class ServiceEstimate:
    mean: Estimate
    n_services: int
    converged: bool
    half_sample_mean: float


# kernels ----------------------------------------------------------------


@numba.njit(cache=True)
def _draw(rng, kind, par, mix_vals, mix_cum):
    if kind == _DET:
        return par[0]
    if kind == _MIX:
        u = rng.random()
        i = np.searchsorted(mix_cum, u, side="right")
        if i >= len(mix_vals):
            i = len(mix_vals) - 1
        return mix_vals[i]
    if kind == _EXP:
        return rng.exponential(1.0 / par[0])
    return rng.gamma(par[0], 1.0 / par[1])


@numba.njit(cache=True)
def _apply(pkind, alpha, delta, seq, t1, j, scale):
    """T_j from t1; ``scale`` is alpha^(j-1), kept by the caller."""
    if pkind == _NONE:
        return t1
    if pkind == _AFFINE:
        return scale * (t1 - delta) + delta
    n = len(seq) - 1
    if j <= n:
        return seq[j - 1]
    return seq[n]


@numba.njit(cache=True)
def _attempt_headway(rng, behavior, kind, par, mix_vals, mix_cum, pkind, alpha, delta, seq, t1, j, scale):
    if behavior == 2:
        t1 = _draw(rng, kind, par, mix_vals, mix_cum)
    return _apply(pkind, alpha, delta, seq, t1, j, scale)


@numba.njit(cache=True)
def _saturated(rng, n, n_batches, q, behavior, kind, par, mix_vals, mix_cum, pkind, alpha, delta, seq):
    sums = np.zeros(n_batches)
    sq = np.zeros(n_batches)
    counts = np.zeros(n_batches)
    per = n // n_batches
    t = 0.0
    nxt = np.inf if q == 0.0 else rng.exponential(1.0 / q)
    for i in range(n):
        # measure each service from 0 so that Y carries no absolute-time rounding
        nxt -= t
        t = 0.0
        t1 = 0.0
        if behavior != 2:
            t1 = _draw(rng, kind, par, mix_vals, mix_cum)
        j = 1
        scale = 1.0
        while True:
            tj = _attempt_headway(rng, behavior, kind, par, mix_vals, mix_cum, pkind, alpha, delta, seq, t1, j, scale)
            if nxt - t >= tj:
                t += tj
                break
            t = nxt
            nxt = t + rng.exponential(1.0 / q)
            j += 1
            scale *= alpha
        y = t
        b = min(i // per, n_batches - 1)
        sums[b] += y
        sq[b] += y * y
        counts[b] += 1.0
    return sums, sq, counts


@numba.njit(cache=True)
def _area(acc, busy, t0, t1, x, warm, width, n_batches):
    """Add the integral of the level x over [t0, t1] to the time batches."""
    if t1 <= warm:
        return
    if t0 < warm:
        t0 = warm
    while t0 < t1:
        b = int((t0 - warm) / width)
        if b >= n_batches:
            return
        end = min(t1, warm + (b + 1) * width)
        acc[b] += x * (end - t0)
        if x > 0:
            busy[b] += end - t0
        t0 = end


@numba.njit(cache=True)
def _full(rng, lam, horizon, warm, n_batches, guard, q, behavior, kind, par, mix_vals, mix_cum, pkind, alpha, delta, seq):
    # rows: service sum, service count, wait sum, wait count, sojourn sum, sojourn count, area, busy
    out = np.zeros((8, n_batches))
    width = (horizon - warm) / n_batches
    cap = guard + 2
    buf = np.empty(cap)
    head = 0
    size = 0
    t = 0.0
    nxt = np.inf if q == 0.0 else rng.exponential(1.0 / q)
    na = np.inf if lam == 0.0 else rng.exponential(1.0 / lam)
    n_arr = 0
    n_dep = 0
    unstable = False
    svc_start = 0.0
    from_departure = False
    t1 = 0.0
    j = 1
    scale = 1.0
    while True:
        if size == 0:
            if na > horizon:
                _area(out[6], out[7], t, horizon, 0.0, warm, width, n_batches)
                break
            _area(out[6], out[7], t, na, 0.0, warm, width, n_batches)
            t = na
            buf[(head + size) % cap] = na
            size += 1
            n_arr += 1
            na += rng.exponential(1.0 / lam)
            while nxt <= t:
                nxt += rng.exponential(1.0 / q)
            svc_start = t
            from_departure = False
            if t >= warm:
                b = min(int((t - warm) / width), n_batches - 1)
                out[3, b] += 1.0
            t1 = _draw(rng, kind, par, mix_vals, mix_cum) if behavior != 2 else 0.0
            j = 1
            scale = 1.0
        tj = _attempt_headway(rng, behavior, kind, par, mix_vals, mix_cum, pkind, alpha, delta, seq, t1, j, scale)
        success = nxt - t >= tj
        end = t + tj if success else nxt
        while na <= end and na <= horizon:
            _area(out[6], out[7], t, na, float(size), warm, width, n_batches)
            t = na
            buf[(head + size) % cap] = na
            size += 1
            n_arr += 1
            na += rng.exponential(1.0 / lam)
            if size > guard:
                unstable = True
                break
        if unstable:
            break
        if end > horizon:
            _area(out[6], out[7], t, horizon, float(size), warm, width, n_batches)
            break
        _area(out[6], out[7], t, end, float(size), warm, width, n_batches)
        t = end
        if not success:
            nxt = t + rng.exponential(1.0 / q)
            j += 1
            scale *= alpha
            continue
        arrived = buf[head]
        head = (head + 1) % cap
        size -= 1
        n_dep += 1
        if t >= warm:
            b = min(int((t - warm) / width), n_batches - 1)
            out[4, b] += t - arrived
            out[5, b] += 1.0
            if from_departure:
                out[0, b] += t - svc_start
                out[1, b] += 1.0
        if size > 0:
            svc_start = t
            from_departure = True
            if t >= warm:
                b = min(int((t - warm) / width), n_batches - 1)
                out[2, b] += t - buf[head]
                out[3, b] += 1.0
            t1 = _draw(rng, kind, par, mix_vals, mix_cum) if behavior != 2 else 0.0
            j = 1
            scale = 1.0
    return out, n_arr, n_dep, size, unstable, t


# python side -------------------------------------------------------------


def _encode(spec):
    """Flatten a spec into the scalar and array arguments of the kernels."""
    dist = spec.dist
    mix_vals = np.zeros(1)
    mix_cum = np.ones(1)
    if isinstance(dist, Deterministic):
        kind, par = _DET, np.array([dist.t])
    elif isinstance(dist, DiscreteMixture):
        kind, par = _MIX, np.zeros(1)
        mix_vals = dist.values
        mix_cum = np.cumsum(dist.probs)
    elif isinstance(dist, Exponential):
        kind, par = _EXP, np.array([dist.rate])
    elif isinstance(dist, Gamma):
        kind, par = _GAMMA, np.array([dist.shape, dist.rate])
    else:
        raise ValidationError(f"unsupported headway {dist!r}")
    policy = spec.policy
    alpha, delta, seq = 1.0, 0.0, np.zeros(1)
    if isinstance(policy, AffineDecay):
        pkind, alpha, delta = _AFFINE, policy.alpha, policy.delta
    elif isinstance(policy, ExplicitSequence):
        pkind = _SEQ
        seq = np.append(np.asarray(policy.values, dtype=float), policy.terminal)
    else:
        pkind = _NONE
    behavior = {Behavior.B1: 1, Behavior.B2: 2, Behavior.B3: 3}[spec.behavior]
    return behavior, kind, par, mix_vals, mix_cum, pkind, float(alpha), float(delta), seq


def _t_interval(values, level=0.95):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(values) < 2:
        return Estimate(float(values.mean()) if len(values) else math.nan, math.inf)
    h = stats.t.ppf(0.5 + level / 2.0, len(values) - 1) * values.std(ddof=1) / math.sqrt(len(values))
    return Estimate(float(values.mean()), float(h))


def _ratio_estimate(sums, counts):
    """Pooled mean with the batch-means half-width of per-batch ratios."""
    total = counts.sum()
    if total == 0:
        return Estimate(math.nan, math.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        per = np.where(counts > 0, sums / counts, np.nan)
    return Estimate(float(sums.sum() / total), _t_interval(per).half_width)


def _nan_estimate():
    return Estimate(math.nan, math.nan)


def _drifting(levels):
    """Heuristic growth test on per-batch mean queue lengths."""
    half = len(levels) // 2
    first, second = levels[:half], levels[half:]
    if second.mean() <= first.mean():
        return False
    spread = math.sqrt(first.var(ddof=1) / len(first) + second.var(ddof=1) / len(second))
    rising = np.mean(np.diff(levels) > 0) > 0.75
    return bool(rising and second.mean() - first.mean() > 4.0 * spread)


def _saturated_run(spec, n, n_batches, rng):
    args = _encode(spec)
    return _saturated(rng, int(n), int(n_batches), float(spec.q), *args)


def simulate(config: SimConfig) -> SimResult:
    rng = np.random.default_rng(config.seed)
    spec = config.spec
    if config.saturated:
        sums, _, counts = _saturated_run(spec, config.n_services, config.n_batches, rng)
        nan = _nan_estimate()
        return SimResult(
            mean_service=_ratio_estimate(sums, counts),
            rho_hat=nan,
            mean_queue_length=nan,
            mean_waiting=nan,
            mean_sojourn=nan,
            lambda_hat=math.nan,
            n_arrivals=0,
            n_departures=int(counts.sum()),
            final_queue_length=0,
            unstable=False,
        )
    warm = config.warmup_fraction * config.horizon
    out, n_arr, n_dep, final, guard_hit, t_end = _full(
        rng, float(config.lam), float(config.horizon), warm, int(config.n_batches), QUEUE_GUARD,
        float(spec.q), *_encode(spec),
    )
    width = (config.horizon - warm) / config.n_batches
    observed = max(t_end, config.horizon) if not guard_hit else t_end
    levels = out[6] / width
    unstable = guard_hit or _drifting(levels)
    return SimResult(
        mean_service=_ratio_estimate(out[0], out[1]),
        rho_hat=_t_interval(out[7] / width),
        mean_queue_length=_t_interval(levels),
        mean_waiting=_ratio_estimate(out[2], out[3]),
        mean_sojourn=_ratio_estimate(out[4], out[5]),
        lambda_hat=n_arr / observed,
        n_arrivals=int(n_arr),
        n_departures=int(n_dep),
        final_queue_length=int(final),
        unstable=bool(unstable),
    )


def estimate_service_time(spec: ModelSpec, n_services: int, seed=0, n_batches=32) -> ServiceEstimate:
    """Saturated-queue estimate of E[Y].

    ``converged`` is False when the mean over the first half of the
    services differs from the full mean by more than 5%, the symptom of an
    infinite mean.
    """
    validate(spec)
    if n_services < n_batches:
        raise ValidationError("n_services must be at least n_batches")
    rng = np.random.default_rng(seed)
    sums, _, counts = _saturated_run(spec, n_services, n_batches, rng)
    est = _ratio_estimate(sums, counts)
    half = n_batches // 2
    half_mean = float(sums[:half].sum() / counts[:half].sum())
    converged = abs(half_mean - est.mean) <= 0.05 * abs(est.mean)
    return ServiceEstimate(est, int(counts.sum()), bool(converged), half_mean)


def service_samples(spec: ModelSpec, n_services: int, seed=0) -> np.ndarray:
    """Raw saturated-mode service times (one batch per sample); for testing and plotting."""
    validate(spec)
    rng = np.random.default_rng(seed)
    sums, _, _ = _saturated_run(spec, n_services, n_services, rng)
    return sums
