"""Command-line front end.

    gapqueue capacity --behavior b1,b2 --headway mix:6.22:0.9,14:0.1 --grid 0:1200:5
    gapqueue delay --behavior b1 --headway det:7 --q 0 --lam 360
    gapqueue simulate --behavior b2 --headway exp:0.142857 --q 360 --n-services 1000000
    gapqueue scenario 3 --variant b --crossover 36:180

Rates given on the command line (q, lambda, grids) are in veh/h, times in
seconds.  ``--config FILE`` reads the same fields from JSON; flags given
explicitly override the file.

Exit status: 0 success, 2 configuration error, 3 metrics requested for an
unstable or infinite-moment case, 4 numeric non-convergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import scenarios
from .analytic import ServiceCharacterization, capacity_sweep, waiting_metrics
from .errors import InfiniteMomentError, InstabilityError, NoSignChangeError, TruncationError, ValidationError
from .headway import (
    AffineDecay,
    Deterministic,
    DiscreteMixture,
    ExplicitSequence,
    Exponential,
    Gamma,
    ModelSpec,
    NoImpatience,
)
from .sim import SimConfig, simulate
from .units import per_hour, per_second

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValidationError):
    """A flag or config-file field could not be interpreted."""


def _floats(text, field_name, count=None):
    parts = [p for p in text.split(":")] if count else [text]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{field_name}: cannot read numbers from {text!r}") from None
    if count and len(vals) != count:
        raise ConfigError(f"{field_name}: expected {count} values in {text!r}")
    return vals


def parse_headway(text, field_name="headway"):
    kind, _, body = text.strip().partition(":")
    kind = kind.lower()
    if kind == "det":
        return Deterministic(*_floats(body, field_name, 1))
    if kind == "exp":
        return Exponential(*_floats(body, field_name, 1))
    if kind == "gamma":
        return Gamma(*_floats(body, field_name, 2))
    if kind == "mix":
        atoms = [tuple(_floats(atom, field_name, 2)) for atom in body.split(",") if atom]
        if not atoms:
            raise ConfigError(f"{field_name}: mixture needs atoms t:p")
        return DiscreteMixture(tuple(atoms))
    raise ConfigError(f"{field_name}: unknown headway kind {kind!r} (det, mix, exp, gamma)")


def format_headway(dist):
    if isinstance(dist, Deterministic):
        return f"det:{dist.t!r}"
    if isinstance(dist, Exponential):
        return f"exp:{dist.rate!r}"
    if isinstance(dist, Gamma):
        return f"gamma:{dist.shape!r}:{dist.rate!r}"
    return "mix:" + ",".join(f"{t!r}:{p!r}" for t, p in dist.atoms)


def parse_impatience(text, field_name="impatience"):
    if text is None or text.strip().lower() in ("", "none"):
        return NoImpatience()
    kind, _, body = text.strip().partition(":")
    kind = kind.lower()
    if kind == "aff":
        return AffineDecay(*_floats(body, field_name, 2))
    if kind == "seq":
        listed, sep, terminal = body.partition(";")
        if not sep:
            raise ConfigError(f"{field_name}: sequence needs ';<terminal>'")
        values = [_floats(v, field_name)[0] for v in listed.split(",") if v]
        return ExplicitSequence(tuple(values), _floats(terminal, field_name)[0])
    raise ConfigError(f"{field_name}: unknown impatience kind {kind!r} (none, aff, seq)")


def format_impatience(policy):
    if isinstance(policy, AffineDecay):
        return f"aff:{policy.alpha!r}:{policy.delta!r}"
    if isinstance(policy, ExplicitSequence):
        return "seq:" + ",".join(repr(v) for v in policy.values) + f";{policy.terminal!r}"
    return "none"


def parse_grid(text, field_name="grid"):
    """``start:stop:step`` in veh/h, stop included."""
    start, stop, step = _floats(text, field_name, 3)
    if step <= 0 or stop < start:
        raise ConfigError(f"{field_name}: need step > 0 and stop >= start in {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _bracket(text, field_name):
    lo, hi = _floats(text, field_name, 2)
    return per_second(lo), per_second(hi)


@dataclass(frozen=True)
class RunConfig:
    command: str
    behaviors: tuple = ("b1",)
    headway: Optional[str] = None
    impatience: Optional[str] = None
    q: Optional[float] = None  # veh/h
    grid: Optional[str] = None
    lam: Optional[float] = None  # veh/h
    horizon: Optional[float] = None
    n_services: Optional[int] = None
    seed: int = 0
    out: Optional[str] = None
    example: Optional[int] = None
    variant: Optional[str] = None
    crossover: Optional[str] = None
    argmax: Optional[str] = None

    def render(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def parse(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_mapping(data)

    @classmethod
    def from_mapping(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        data = dict(data)
        if "command" not in data:
            raise ConfigError("config field 'command' is required")
        if isinstance(data.get("behaviors"), str):
            data["behaviors"] = tuple(b.strip() for b in data["behaviors"].split(",") if b.strip())
        elif data.get("behaviors") is not None:
            data["behaviors"] = tuple(data["behaviors"])
        for key, typ in (("q", float), ("lam", float), ("horizon", float), ("n_services", int),
                         ("seed", int), ("example", int)):
            if data.get(key) is not None:
                try:
                    data[key] = typ(data[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"field {key}: expected a number, got {data[key]!r}") from None
        return cls(**data)

    def specs(self):
        if self.headway is None:
            raise ConfigError("field headway: required for this command")
        dist = parse_headway(self.headway)
        policy = parse_impatience(self.impatience)
        out = {}
        for b in self.behaviors:
            if b.lower() not in ("b1", "b2", "b3"):
                raise ConfigError(f"field behaviors: unknown behavior {b!r}")
            out[b.lower()] = ModelSpec(b.lower(), dist, policy)
        return out

    def q_grid(self):
        if self.grid is not None:
            return parse_grid(self.grid)
        if self.q is not None:
            return np.array([self.q])
        raise ConfigError("give --q or --grid")


# commands -------------------------------------------------------------------


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_capacity(cfg: RunConfig):
    table = capacity_sweep(cfg.specs(), per_second(cfg.q_grid()))
    _emit(scenarios.table_to_csv(table), cfg.out)
    return EXIT_NUMERIC if table.errors else EXIT_OK


def _single_spec(cfg):
    specs = cfg.specs()
    if len(specs) != 1:
        raise ConfigError("field behaviors: this command takes exactly one behavior")
    q = 0.0 if cfg.q is None else cfg.q
    return next(iter(specs.values())).with_q(per_second(q))


def cmd_delay(cfg: RunConfig):
    spec = _single_spec(cfg)
    lam = per_second(cfg.lam or 0.0)
    sc = ServiceCharacterization(spec)
    m = waiting_metrics(sc, lam)
    rows = [
        ("rho", m.rho, ""),
        ("capacity", per_hour(sc.capacity()), "veh/h"),
        ("mean_service", m.mean_service, "s"),
        ("mean_queue_length", m.mean_queue_length, "veh"),
        ("mean_waiting", m.mean_waiting, "s"),
        ("mean_sojourn", m.mean_sojourn, "s"),
    ]
    _emit("".join(f"{k},{v:.6g},{u}\n" for k, v, u in rows), cfg.out)
    return EXIT_OK


def _fmt(est):
    return f"{est.mean:.6g},{est.half_width:.3g}"


def cmd_simulate(cfg: RunConfig):
    spec = _single_spec(cfg)
    if cfg.n_services is None and cfg.horizon is None:
        raise ConfigError("give --horizon (full queue) or --n-services (saturated)")
    sim_cfg = SimConfig(
        spec,
        lam=per_second(cfg.lam or 0.0),
        horizon=cfg.horizon,
        n_services=cfg.n_services,
        seed=cfg.seed,
    )
    r = simulate(sim_cfg)
    lines = ["metric,mean,half_width_95\n", f"mean_service,{_fmt(r.mean_service)}\n"]
    if not sim_cfg.saturated:
        lines += [
            f"rho,{_fmt(r.rho_hat)}\n",
            f"mean_queue_length,{_fmt(r.mean_queue_length)}\n",
            f"mean_waiting,{_fmt(r.mean_waiting)}\n",
            f"mean_sojourn,{_fmt(r.mean_sojourn)}\n",
            f"lambda_hat_veh_per_h,{per_hour(r.lambda_hat):.6g},\n",
            f"arrivals,{r.n_arrivals},\n",
            f"final_queue_length,{r.final_queue_length},\n",
        ]
    lines += [f"departures,{r.n_departures},\n", f"unstable,{int(r.unstable)},\n"]
    _emit("".join(lines), cfg.out)
    return EXIT_UNSTABLE if r.unstable else EXIT_OK


def cmd_scenario(cfg: RunConfig):
    if cfg.example is None:
        raise ConfigError("field example: required")
    grid = parse_grid(cfg.grid) if cfg.grid else None
    sc = scenarios.scenario(cfg.example, cfg.variant, grid)
    if cfg.crossover:
        if len(sc.specs) != 2:
            raise ConfigError("crossover needs an example with exactly two models (3a or 3b)")
        a, b = sc.specs.values()
        q = scenarios.find_crossover(a, b, _bracket(cfg.crossover, "crossover"))
        _emit(f"crossover_q_veh_per_h,{per_hour(q):.6g}\n", cfg.out)
        return EXIT_OK
    if cfg.argmax:
        bracket = _bracket(cfg.argmax, "argmax")
        lines = ["label,argmax_q_veh_per_h,capacity_veh_per_h,boundary,unimodal\n"]
        for label, spec in sc.specs.items():
            r = scenarios.find_capacity_argmax(spec, bracket)
            lines.append(
                f"{label},{r.q_veh_per_h:.6g},{r.capacity_veh_per_h:.6g},{r.boundary or ''},{int(r.unimodal)}\n"
            )
        _emit("".join(lines), cfg.out)
        return EXIT_OK
    table = capacity_sweep(sc.specs, sc.q_grid)
    _emit(scenarios.table_to_csv(table), cfg.out)
    return EXIT_NUMERIC if table.errors else EXIT_OK


COMMANDS = {
    "capacity": cmd_capacity,
    "delay": cmd_delay,
    "simulate": cmd_simulate,
    "scenario": cmd_scenario,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="gapqueue", description="Gap-acceptance capacity and delay analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        p.add_argument("--config", help="JSON file with any of the fields below")
        p.add_argument("--out", help="write CSV here instead of standard output")
        p.add_argument("--grid", help="start:stop:step in veh/h")
        if model:
            p.add_argument("--behavior", dest="behaviors", help="b1, b2, b3 (comma separated)")
            p.add_argument("--headway", help="det:t | mix:t:p,... | exp:rate | gamma:shape:rate")
            p.add_argument("--impatience", help="none | aff:alpha:delta | seq:t1,t2,...;terminal")
            p.add_argument("--q", type=float, help="major-road flow, veh/h")

    common(sub.add_parser("capacity", help="capacity per behavior and q"))
    p = sub.add_parser("delay", help="M/G/1 queue metrics")
    common(p)
    p.add_argument("--lam", type=float, help="minor-road arrival rate, veh/h")
    p = sub.add_parser("simulate", help="Monte Carlo run")
    common(p)
    p.add_argument("--lam", type=float, help="minor-road arrival rate, veh/h")
    p.add_argument("--horizon", type=float, help="simulated seconds (full queue)")
    p.add_argument("--n-services", dest="n_services", type=int, help="saturated mode")
    p.add_argument("--seed", type=int)
    p = sub.add_parser("scenario", help="reproduce an example as CSV")
    common(p, model=False)
    p.add_argument("example", nargs="?", type=int)
    p.add_argument("--variant")
    p.add_argument("--crossover", help="lo:hi veh/h bracket; print the capacity crossover")
    p.add_argument("--argmax", help="lo:hi veh/h bracket; print each model's capacity maximum")
    return parser


def config_from_args(argv):
    args = vars(build_parser().parse_args(argv))
    data = {}
    path = args.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                base = RunConfig.parse(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        data = dataclasses.asdict(base)
    data["command"] = args.pop("command")
    data.update({k: v for k, v in args.items() if v is not None})
    return RunConfig.from_mapping(data)


def main(argv=None):
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except (InstabilityError, InfiniteMomentError) as exc:
        msg = str(exc)
        if isinstance(exc, InstabilityError) and exc.capacity is not None:
            msg += f"; capacity = {per_hour(exc.capacity):.6g} veh/h"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (TruncationError, NoSignChangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
