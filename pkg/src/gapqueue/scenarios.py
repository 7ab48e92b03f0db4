"""The four numerical examples, plus crossover and capacity-maximum finders.

Grids are given in veh/h at this interface; everything is converted to
per-second rates before it reaches the analytic engine.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .analytic import ServiceCharacterization, SweepTable, capacity_sweep
from .errors import NoSignChangeError, ValidationError
from .headway import AffineDecay, Deterministic, DiscreteMixture, Exponential, Gamma, ModelSpec
from .units import per_hour, per_second

DEFAULT_GRID_VEH_H = np.arange(0.0, 1200.0 + 2.5, 5.0)
# the impatience example needs heavier major flows before the rise in
# capacity with alpha = 0.8, delta = 1 shows (its minimum is near 2000 veh/h)
EX2_GRID_VEH_H = np.arange(0.0, 5000.0 + 2.5, 5.0)

EX1_MIX = DiscreteMixture(((6.22, 0.9), (14.0, 0.1)))
T_A = DiscreteMixture(((4.0, 0.9), (34.0, 0.1)))
T_B = DiscreteMixture(((6.0, 0.5), (10.0, 0.5)))
EX2_POLICIES = {"a": AffineDecay(0.9, 4.0), "b": AffineDecay(0.8, 1.0)}
EX4_DISTS = {
    "hl_14_6.22": EX1_MIX,
    "hl_28_4.67": DiscreteMixture(((28.0, 0.1), (4.67, 0.9))),
    "hl_42_3.11": DiscreteMixture(((42.0, 0.1), (3.11, 0.9))),
    "exp_7": Exponential(1.0 / 7.0),
    "gamma_0.5": Gamma(0.5, 1.0 / 14.0),
}


@dataclass(frozen=True)
class Scenario:
    id: int
    variant: Optional[str]
    specs: dict
    q_grid: np.ndarray  # per second

    @property
    def name(self):
        return f"{self.id}{self.variant or ''}"


def _variant(example_id, variant, allowed):
    if not allowed:
        if variant not in (None, ""):
            raise ValidationError(f"example {example_id} has no variants")
        return None
    v = (variant or "").lower()
    if v not in allowed:
        raise ValidationError(f"example {example_id} needs a variant in {sorted(allowed)}, got {variant!r}")
    return v


def scenario(example_id, variant=None, q_grid_veh_h=None) -> Scenario:
    """Build the model set of one example.

    q defaults to 0..1200 veh/h in steps of 5, and to 0..5000 veh/h for
    example 2.
    """
    example_id = int(example_id)
    if q_grid_veh_h is None:
        grid = EX2_GRID_VEH_H if example_id == 2 else DEFAULT_GRID_VEH_H
    else:
        grid = np.asarray(q_grid_veh_h, dtype=float)
    grid = per_second(grid)
    if example_id == 1:
        _variant(1, variant, ())
        specs = {
            "b1_det_7": ModelSpec("b1", Deterministic(7.0)),
            "b2_mix_6.22_14": ModelSpec("b2", EX1_MIX),
            "b3_mix_6.22_14": ModelSpec("b3", EX1_MIX),
        }
        return Scenario(1, None, specs, grid)
    if example_id == 2:
        v = _variant(2, variant, EX2_POLICIES)
        pol = EX2_POLICIES[v]
        specs = {
            "b1_det_7": ModelSpec("b1", Deterministic(7.0), pol),
            "b2_mix_6.22_14": ModelSpec("b2", EX1_MIX, pol),
            "b3_mix_6.22_14": ModelSpec("b3", EX1_MIX, pol),
        }
        return Scenario(2, v, specs, grid)
    if example_id == 3:
        # panel a resamples (b2), panel b keeps one headway per driver (b3)
        v = _variant(3, variant, ("a", "b"))
        beh = "b2" if v == "a" else "b3"
        specs = {f"{beh}_TA": ModelSpec(beh, T_A), f"{beh}_TB": ModelSpec(beh, T_B)}
        return Scenario(3, v, specs, grid)
    if example_id == 4:
        _variant(4, variant, ())
        specs = {label: ModelSpec("b2", dist) for label, dist in EX4_DISTS.items()}
        return Scenario(4, None, specs, grid)
    raise ValidationError(f"unknown example {example_id!r}")


def run_example(example_id, variant=None, q_grid_veh_h=None, **options) -> SweepTable:
    sc = scenario(example_id, variant, q_grid_veh_h)
    return capacity_sweep(sc.specs, sc.q_grid, **options)


def _cell(value):
    if math.isnan(value):
        return "NA"
    if value == 0.0:
        return "0"
    return f"{per_hour(value):.6g}"


def table_to_csv(table: SweepTable, out=None):
    """CSV in veh/h; returns the text when ``out`` is None, else writes to the file object."""
    buf = io.StringIO() if out is None else out
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q_veh_per_h"] + list(table.labels))
    for q, row in zip(table.q, table.values):
        writer.writerow([f"{per_hour(q):.6g}"] + [_cell(v) for v in row])
    return buf.getvalue() if out is None else None


def _capacity(spec, q, **options):
    return ServiceCharacterization(spec.with_q(q), **options).capacity()


def find_crossover(spec_a, spec_b, q_bracket, tol=1e-9, **options):
    """Major-road rate (per second) where the two capacities are equal."""
    lo, hi = map(float, q_bracket)
    diff = lambda q: _capacity(spec_a, q, **options) - _capacity(spec_b, q, **options)
    f_lo, f_hi = diff(lo), diff(hi)
    if f_lo == 0.0 and f_hi != 0.0:
        return lo
    if f_hi == 0.0 and f_lo != 0.0:
        return hi
    if not (f_lo * f_hi < 0.0):
        raise NoSignChangeError(
            f"capacity difference does not change sign on [{lo:g}, {hi:g}] ({f_lo:.3g}, {f_hi:.3g})"
        )
    root = optimize.bisect(diff, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(diff(root)) >= tol:
        raise ArithmeticError(f"bisection stalled with capacity gap {diff(root):.3g}")
    return root


@dataclass(frozen=True)
class ArgmaxResult:
    q: float  # per second
    capacity: float  # per second
    boundary: Optional[str]  # 'lower' or 'upper' when the maximum sits on a bracket end
    unimodal: bool

    @property
    def q_veh_per_h(self):
        return per_hour(self.q)

    @property
    def capacity_veh_per_h(self):
        return per_hour(self.capacity)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo, hi, width):
    """Golden-section search for a maximum of f on [lo, hi]."""
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > width:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    x = 0.5 * (lo + hi)
    return x, f(x)


def find_capacity_argmax(spec, q_bracket, width_veh_h=0.1, scan_points=61, **options):
    """Maximise capacity over q (per second); a coarse scan seeds a golden-section search.

    ``unimodal`` is False when the scan shows more than one local maximum,
    in which case the result is the best of the scanned peaks refined locally.
    """
    lo, hi = map(float, q_bracket)
    if not hi > lo:
        raise ValidationError("bracket must satisfy lo < hi")
    f = lambda q: _capacity(spec, q, **options)
    grid = np.linspace(lo, hi, scan_points)
    vals = np.array([f(q) for q in grid])
    i = int(np.argmax(vals))
    inner = vals[1:-1]
    peaks = np.sum((inner > vals[:-2]) & (inner > vals[2:]))
    unimodal = peaks + (vals[0] > vals[1]) + (vals[-1] > vals[-2]) <= 1
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, scan_points - 1)]
    width = per_second(width_veh_h)
    x, fx = _golden_max(f, a, b, width)
    boundary = None
    if i == 0 and x - lo <= width and vals[0] >= fx:
        x, fx, boundary = lo, vals[0], "lower"
    elif i == scan_points - 1 and hi - x <= width and vals[-1] >= fx:
        x, fx, boundary = hi, vals[-1], "upper"
    return ArgmaxResult(float(x), float(fx), boundary, bool(unimodal))
