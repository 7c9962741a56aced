"""Experiment specs, sweeps, result files and the command-line front end.

An experiment spec is a JSON object::

    {
      "name": "throughput-vs-K",
      "sweep": {"variable": "K", "values": [10, 20, 40]},
      "system": {"N": 50, "K": 20, "T": 100, "rho0_db": 40, "P0": 1.0},
      "fading": {"mode": "scenario", "radius": 100, "seed": 1},
      "designs": ["upper", "lower", "random_pilot"],
      "trials": 500,
      "seed": 0,
      "output": "results/vs_k",
      "alpha": {"lo": 0.05, "hi": 0.5, "stride": 5},
      "solver": {"draws": 50, "t_points": 20},
      "uniform": {"K": "optimal", "method": "monte_carlo"}
    }

``alpha`` (grid bounds), ``solver``, ``uniform`` and ``output`` are optional.
Swept and fixed values override each other in that order: the swept value
wins.  When ``alpha`` is the swept variable the training fraction is fixed
per row instead of searched.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import FadingProfile, PowerSplit, SystemConfig, db_to_linear, sample_scenario
from .errors import DimensionError, DomainError, NumericError, SpecError
from .optimizer import (
    alpha_grid,
    bound_pipelines,
    lower_bound_pipeline,
    optimal_k_uniform,
    load_root,
    optimize_uniform,
    random_pilot_pipeline,
)
from .pilots import KINDS, PilotDesignSpec, build_pilot

SWEEP_VARIABLES = ("K", "rho0_db", "N", "alpha")
DESIGNS = ("upper", "lower", "uniform_exact", "random_pilot")
CSV_HEADER = ("swept", "design", "rate", "ci", "alpha_opt", "active_users")
WORKERS_ENV = "MIMOTRAIN_WORKERS"
DESK = {"N": 50, "T": 100, "trials": 500}
FULL_SCALE = {"N": 100, "T": 200}


@dataclass
class ExperimentSpec:
    name: str
    variable: str
    values: list
    system: dict
    fading: dict
    designs: list
    trials: int = DESK["trials"]
    seed: int = 0
    output: str | None = None
    alpha: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    uniform: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = []
        if not isinstance(self.name, str) or not self.name:
            bad.append("name")
        if self.variable not in SWEEP_VARIABLES:
            bad.append("sweep.variable")
        vals = self.values if isinstance(self.values, list) else []
        if not vals or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            bad.append("sweep.values")
        elif any(b <= a for a, b in zip(vals, vals[1:])):
            bad.append("sweep.values")
        for key in ("N", "T"):
            if self.variable != key and not _positive_int(self.system.get(key)):
                bad.append(f"system.{key}")
        if self.variable != "K" and not _positive_int(self.system.get("K")):
            if "uniform_exact" not in self.designs or len(self.designs) > 1:
                bad.append("system.K")
        if self.variable != "rho0_db" and not isinstance(self.system.get("rho0_db"), (int, float)):
            bad.append("system.rho0_db")
        mode = self.fading.get("mode") if isinstance(self.fading, dict) else None
        if mode not in ("scenario", "uniform"):
            bad.append("fading.mode")
        elif mode == "uniform" and not (isinstance(self.fading.get("d", 1.0), (int, float)) and self.fading.get("d", 1.0) > 0):
            bad.append("fading.d")
        if not isinstance(self.designs, list) or not self.designs or any(d not in DESIGNS for d in self.designs):
            bad.append("designs")
        elif "uniform_exact" in self.designs and mode != "uniform":
            bad.append("designs")
        if not _positive_int(self.trials):
            bad.append("trials")
        if not isinstance(self.seed, int) or self.seed < 0:
            bad.append("seed")
        if bad:
            raise SpecError(f"invalid experiment spec: {', '.join(bad)}", fields=bad)

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise SpecError("experiment spec must be a JSON object", fields=["<root>"])
        known = {"name", "sweep", "system", "fading", "designs", "trials", "seed", "output", "alpha", "solver", "uniform"}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise SpecError(f"unknown spec fields: {', '.join(unknown)}", fields=unknown)
        sweep = obj.get("sweep") or {}
        if not isinstance(sweep, dict):
            raise SpecError("sweep must be an object", fields=["sweep"])
        return cls(
            name=obj.get("name"),
            variable=sweep.get("variable"),
            values=sweep.get("values"),
            system=dict(obj.get("system") or {}),
            fading=dict(obj.get("fading") or {}),
            designs=obj.get("designs"),
            trials=obj.get("trials", DESK["trials"]),
            seed=obj.get("seed", 0),
            output=obj.get("output"),
            alpha=dict(obj.get("alpha") or {}),
            solver=dict(obj.get("solver") or {}),
            uniform=dict(obj.get("uniform") or {}),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"{path}: not valid JSON ({exc})", fields=["<file>"]) from exc
        return cls.from_dict(obj)

    def to_dict(self):
        out = asdict(self)
        out["sweep"] = {"variable": out.pop("variable"), "values": out.pop("values")}
        return out


def _positive_int(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 1 and int(v) == v


@dataclass
class DesignResult:
    rate: float | None
    ci: float | None
    alpha_opt: float | None
    active_users: int | None
    error: str | None = None


@dataclass
class SweepRow:
    swept: float
    results: dict

    def to_dict(self):
        return {"swept": self.swept, "results": {k: asdict(v) for k, v in self.results.items()}}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["swept"], {k: DesignResult(**v) for k, v in obj["results"].items()})


def _row_setup(spec, value):
    system = dict(spec.system)
    system[spec.variable] = value
    T = int(system["T"])
    if spec.variable == "alpha":
        alphas = [float(value)]
    else:
        alphas = alpha_grid(T, spec.alpha.get("lo"), spec.alpha.get("hi"), spec.alpha.get("stride", 1))
    K = int(system.get("K") or 1)
    config = SystemConfig.from_db(int(system["N"]), K, T, alphas[0], float(system["rho0_db"]), float(system.get("P0", 1.0)))
    if spec.fading["mode"] == "scenario":
        # one drop per master seed; the first K draws are shared across K values
        seed = spec.fading.get("seed", spec.seed)
        fading = sample_scenario(K, float(spec.fading.get("radius", 100.0)), seed=seed)
    else:
        fading = FadingProfile.uniform(K, float(spec.fading.get("d", 1.0)))
    return config, fading, alphas


def _result(point):
    r = point.rate
    return DesignResult(r.rate, r.ci, point.alpha, point.n_active)


def run_row(spec, value):
    """Evaluate every requested design at one swept value."""
    results = {}
    try:
        config, fading, alphas = _row_setup(spec, value)
    except (DomainError, DimensionError, SpecError) as exc:
        return SweepRow(value, {d: DesignResult(None, None, None, None, str(exc)) for d in spec.designs})
    designs = set(spec.designs)
    kw = dict(trials=spec.trials, seed=spec.seed, alphas=alphas)
    solver = dict(spec.solver)
    bounds = None
    for design in spec.designs:
        try:
            if design in ("upper", "lower") and "upper" in designs:
                if bounds is None:
                    bounds = bound_pipelines(config, fading, solver=solver, **kw)
                point = bounds[0] if design == "upper" else bounds[1]
            elif design == "lower":
                point = lower_bound_pipeline(config, fading, solver=solver, **kw)
            elif design == "random_pilot":
                point = random_pilot_pipeline(config, fading, **kw)
            else:
                fixed = spec.uniform.get("K", "optimal")
                point = optimize_uniform(
                    config,
                    fading.d[0],
                    method=spec.uniform.get("method", "monte_carlo"),
                    K=None if fixed == "optimal" else config.K,
                    **kw,
                )
            results[design] = _result(point)
        except (NumericError, DomainError, DimensionError, np.linalg.LinAlgError) as exc:
            results[design] = DesignResult(None, None, None, None, f"{type(exc).__name__}: {exc}")
    return SweepRow(value, results)


def _run_row_args(args):
    return run_row(*args)


def worker_count():
    try:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)
    except ValueError:
        return 1


def run_experiment(spec, workers=None, write=True):
    """Run the sweep; rows come back in spec order whatever the worker count."""
    workers = worker_count() if workers is None else max(int(workers), 1)
    jobs = [(spec, v) for v in spec.values]
    if workers == 1 or len(jobs) == 1:
        rows = [run_row(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row_args, jobs))
    if write and spec.output:
        emit_csv(rows, f"{spec.output}.csv", spec.designs)
        emit_json(rows, f"{spec.output}.json", spec)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def csv_text(rows, designs=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        for design in designs or row.results:
            r = row.results[design]
            writer.writerow([_fmt(row.swept), design, _fmt(r.rate), _fmt(r.ci), _fmt(r.alpha_opt), _fmt(r.active_users)])
    return buf.getvalue()


def emit_csv(rows, path, designs=None):
    if not rows:
        raise DomainError("no rows to write")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(rows, designs))


def emit_json(rows, path, spec=None):
    if not rows:
        raise DomainError("no rows to write")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    obj = {"spec": spec.to_dict() if spec is not None else None, "rows": [r.to_dict() for r in rows]}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _num(text, kind=float):
    return None if text == "" else kind(text)


def parse_csv(path):
    """Rows back from :func:`emit_csv` (errors are not stored in CSV)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise SpecError(f"unexpected CSV header {header}", fields=["header"])
        rows = {}
        for swept, design, rate, ci, alpha_opt, active in reader:
            key = float(swept)
            rows.setdefault(key, {})[design] = DesignResult(_num(rate), _num(ci), _num(alpha_opt), _num(active, int))
    return [SweepRow(k, v) for k, v in rows.items()]


def parse_json(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return [SweepRow.from_dict(r) for r in obj["rows"]]


# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    p.add_argument("--out", default=None, help="output path (prefix for sweeps)")


def _build_parser():
    parser = _Parser(prog="mimotrain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("sweep", help="run an experiment spec JSON file")
    p.add_argument("spec")
    p.add_argument("--paper-scale", action="store_true", help="use N=100, T=200 unless swept")
    p.add_argument("--workers", type=int, default=None)
    _common(p)

    p = sub.add_parser("optimal-k", help="optimal user count per training fraction (co-located users)")
    p.add_argument("--T", type=int, default=DESK["T"])
    p.add_argument("--alpha", type=float, action="append", help="training fraction (repeatable)")
    p.add_argument("--stride", type=int, default=None, help="grid stride when --alpha is absent")
    p.add_argument("--rho0-db", type=float, default=0.0)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--paper-scale", action="store_true")
    _common(p)

    p = sub.add_parser("pilot", help="emit a pilot matrix as JSON")
    p.add_argument("--kind", choices=KINDS, default="orthogonal")
    p.add_argument("--N", type=int, default=DESK["N"])
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--T", type=int, default=DESK["T"])
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--rho0-db", type=float, default=20.0)
    p.add_argument("--gamma", type=float, default=1.0, help="common training fraction")
    p.add_argument("--fading", choices=("uniform", "scenario"), default="uniform")
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=100.0)
    p.add_argument("--paper-scale", action="store_true")
    _common(p)

    p = sub.add_parser("asymptotic-check", help="Monte Carlo vs large-system throughput")
    p.add_argument("--N", type=int, default=DESK["N"])
    p.add_argument("--T", type=int, default=DESK["T"])
    p.add_argument("--beta", type=float, default=1.0, help="K/N")
    p.add_argument("--rho0-db", type=float, default=-18.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--paper-scale", action="store_true")
    _common(p)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--only", default=None, help="comma-separated criterion numbers")
    _common(p)
    return parser


def _cmd_sweep(args):
    spec = ExperimentSpec.load(args.spec)
    if args.paper_scale:
        for key, value in FULL_SCALE.items():
            if spec.variable != key:
                spec.system[key] = value
    if args.trials is not None:
        spec.trials = args.trials
    if args.seed:
        spec.seed = args.seed
    if args.out is not None:
        spec.output = args.out
    rows = run_experiment(spec, workers=args.workers)
    sys.stdout.write(csv_text(rows, spec.designs))
    failed = [d for r in rows for d, res in r.results.items() if res.error]
    for r in rows:
        for d, res in r.results.items():
            if res.error:
                print(f"swept={r.swept} design={d}: {res.error}", file=sys.stderr)
    return 2 if failed else 0


def _cmd_optimal_k(args):
    T = FULL_SCALE["T"] if args.paper_scale else args.T
    alphas = args.alpha or alpha_grid(T, stride=args.stride or max(T // 10, 1))
    rho0 = float(db_to_linear(args.rho0_db))
    lines = ["alpha,x_star,K_opt"]
    for a in alphas:
        SystemConfig(N=1, K=1, T=T, alpha=a)  # validates alpha*T
        lines.append(f"{_fmt(a)},{_fmt(load_root(a))},{optimal_k_uniform(a, T, rho0, args.d)}")
    text = "\n".join(lines) + "\n"
    _write_or_print(text, args.out)
    return 0


def _write_or_print(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_pilot(args):
    N, T = (FULL_SCALE["N"], FULL_SCALE["T"]) if args.paper_scale else (args.N, args.T)
    config = SystemConfig.from_db(N, args.K, T, args.alpha, args.rho0_db)
    if args.fading == "scenario":
        fading = sample_scenario(args.K, args.radius, seed=args.seed)
    else:
        fading = FadingProfile.uniform(args.K, args.d)
    power = PowerSplit.from_gamma(np.full(args.K, args.gamma), config.alpha)
    pilot = build_pilot(PilotDesignSpec(args.kind, config, fading, power), seed=args.seed)
    _write_or_print(json.dumps(pilot.to_json()) + "\n", args.out)
    return 0


def _cmd_asymptotic(args):
    from .power import EffectiveGains, tau
    from .throughput import asymptotic_throughput, mc_throughput

    N, T = (FULL_SCALE["N"], FULL_SCALE["T"]) if args.paper_scale else (args.N, args.T)
    K = int(round(args.beta * N))
    trials = args.trials or DESK["trials"]
    alphas = args.alpha or alpha_grid(T, 0.1, 0.9, stride=T // 10)
    lines = ["alpha,K,tau,mc_rate,mc_ci,asymptotic_rate,relative_gap"]
    for a in alphas:
        config = SystemConfig.from_db(N, K, T, a, args.rho0_db)
        d = np.ones(K)
        gp = (1.0 - a * args.gamma) / (1.0 - a)
        t = tau(config, d, args.gamma, gp)
        asym = asymptotic_throughput(config, d, args.gamma, gp)
        n = min(K, config.n_pilot)
        mc = mc_throughput(config, EffectiveGains(np.full(n, t), 1.0), trials=trials, seed=args.seed)
        gap = abs(asym.rate - mc.rate) / mc.rate if mc.rate > 0 else 0.0
        lines.append(",".join([_fmt(a), str(K), _fmt(t), _fmt(mc.rate), _fmt(mc.ci), _fmt(asym.rate), _fmt(gap)]))
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_selftest(args):
    from .acceptance import run_all

    only = None if args.only is None else [int(x) for x in args.only.split(",") if x.strip()]
    results = run_all(only=only, seed=args.seed, report=print)
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "sweep": _cmd_sweep,
    "optimal-k": _cmd_optimal_k,
    "pilot": _cmd_pilot,
    "asymptotic-check": _cmd_asymptotic,
    "selftest": _cmd_selftest,
}


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (SpecError, DomainError, DimensionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(cli_main())
