"""Design search over the training fraction, the user count and the active set."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import PowerSplit, SystemConfig
from .errors import DomainError, NumericError
from .pilots import PilotDesignSpec, pilot_random
from .power import (
    EffectiveGains,
    effective_gains,
    gamma_uniform_opt,
    solve_power_kgt,
    solve_power_kleq,
    tau,
)
from .throughput import ThroughputReport, asymptotic_rate, evaluate_design, mc_throughput

ROOT_TOL = 1e-10


@dataclass
class DesignPoint:
    alpha: float
    K_total: int
    active_set: np.ndarray
    power: PowerSplit
    pilot_kind: str
    rate: ThroughputReport

    def __post_init__(self):
        self.active_set = np.asarray(self.active_set, dtype=int)

    @property
    def n_active(self):
        return int(self.active_set.size)

    def to_json(self):
        return {
            "alpha": self.alpha,
            "K_total": self.K_total,
            "active_set": self.active_set.tolist(),
            "power": self.power.to_dict(),
            "pilot_kind": self.pilot_kind,
            "rate": self.rate.to_json(),
        }


def alpha_grid(T, lo=None, hi=None, stride=1):
    """Training fractions ``j/T`` (whole pilot and data symbols) within ``[lo, hi]``."""
    js = [j for j in range(1, int(T)) if (lo is None or j / T >= lo - 1e-12) and (hi is None or j / T <= hi + 1e-12)]
    js = js[:: max(int(stride), 1)]
    if not js:
        raise DomainError(f"no training fraction j/{T} inside [{lo}, {hi}]")
    return [j / T for j in js]


def select_users(fading, alpha, T, K):
    """Indices of the ``min(K, alpha*T)`` strongest users (0-based; ties keep
    the lower index since the profile is stably sorted)."""
    n = min(int(K), int(round(alpha * T)), fading.K)
    return np.arange(n)


def load_equation(x, alpha):
    """Stationarity condition in ``x = rho0 d^2 K`` for the effective SNR when
    there are at least as many users as pilot symbols."""
    s = math.sqrt(alpha - alpha * alpha)
    p, q = x + alpha, x + 1.0 - alpha
    return -x * x - x * s * (math.sqrt(p / q) + math.sqrt(q / p)) + 2.0 * math.sqrt((alpha - alpha * alpha) * p * q) + 2.0 * (alpha - alpha * alpha)


def load_root(alpha):
    """Positive root ``x*`` of :func:`load_equation` (depends on alpha only)."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = 1e-9, 10.0 + 2.0 * (alpha - alpha * alpha)
    if load_equation(lo, alpha) <= 0:
        raise NumericError("load equation is not positive near zero")
    for _ in range(200):
        if load_equation(hi, alpha) < 0:
            break
        hi *= 2.0
    else:
        raise NumericError("could not bracket the root of the load equation")
    x = brentq(load_equation, lo, hi, args=(alpha,), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(load_equation(x, alpha)) >= ROOT_TOL:
        raise NumericError(f"load equation residual {load_equation(x, alpha):.3g} at the root")
    return x


def uniform_tau(alpha, T, rho0, d, K):
    """Effective SNR with the optimal training fraction for ``K`` co-located users."""
    cfg = SystemConfig(N=1, K=int(K), T=T, alpha=alpha, P0=1.0, N0=1.0 / rho0)
    g = gamma_uniform_opt(cfg, np.full(1, d))
    gp = (1.0 - alpha * g) / (1.0 - alpha)
    return tau(cfg, np.full(1, d), g, gp, int(K))


def optimal_k_uniform(alpha, T, rho0, d):
    """Best user count for co-located users: ``max(x*/(rho0 d^2), alpha*T)``,
    rounded to whichever neighbouring integer gives the larger effective SNR."""
    L = int(round(alpha * T))
    x = load_root(alpha)
    k = x / (rho0 * d * d)
    if k <= L:
        return L
    lo, hi = max(math.floor(k), L), max(math.ceil(k), L)
    if lo == hi:
        return lo
    return lo if uniform_tau(alpha, T, rho0, d, lo) >= uniform_tau(alpha, T, rho0, d, hi) else hi


def _better(a, b):
    """Order grid results by rate, then smaller alpha, then smaller K."""
    if b is None:
        return True
    ka = (a.rate.rate, -a.alpha, -a.K_total)
    kb = (b.rate.rate, -b.alpha, -b.K_total)
    return ka > kb


def _alphas(config, alphas):
    return alpha_grid(config.T) if alphas is None else list(alphas)


def _lower_point(cfg, fading, trials, seed, solver):
    active = select_users(fading, cfg.alpha, cfg.T, cfg.K)
    sub = cfg.replace(K=active.size)
    sol = solve_power_kleq(sub, fading.head(active.size), **solver)
    report = mc_throughput(sub, effective_gains(sub, fading.head(active.size), sol.power), trials=trials, seed=seed)
    power = sol.power.embed(active, cfg.K)
    kind = "orthogonal" if cfg.K <= cfg.n_pilot else "lower_bound"
    return DesignPoint(cfg.alpha, cfg.K, np.flatnonzero(power.active), power, kind, report)


def _upper_point(cfg, fading, trials, seed, solver, lower):
    if cfg.K <= cfg.n_pilot:
        return DesignPoint(cfg.alpha, cfg.K, lower.active_set, lower.power, "orthogonal", lower.rate)
    sol = solve_power_kgt(cfg, fading, starts=[lower.power], **solver)
    report = mc_throughput(cfg, effective_gains(cfg, fading, sol.power), trials=trials, seed=seed)
    return DesignPoint(cfg.alpha, cfg.K, np.flatnonzero(sol.power.active), sol.power, "upper_bound", report)


def bound_pipelines(config, fading, trials=500, seed=0, alphas=None, solver=None):
    """Best upper- and lower-bound designs over the training-fraction grid.

    Both bounds share the Monte Carlo seed, so their difference is estimated
    with common random numbers.  Returns ``(upper, lower)``.
    """
    solver = dict(solver or {})
    upper = lower = None
    for a in _alphas(config, alphas):
        cfg = config.replace(alpha=a)
        lo = _lower_point(cfg, fading, trials, seed, solver)
        up = _upper_point(cfg, fading, trials, seed, solver, lo)
        if _better(lo, lower):
            lower = lo
        if _better(up, upper):
            upper = up
    return upper, lower


def upper_bound_pipeline(config, fading, trials=500, seed=0, alphas=None, solver=None):
    """Upper bound on the optimal throughput, maximised over the training fraction."""
    return bound_pipelines(config, fading, trials, seed, alphas, solver)[0]


def lower_bound_pipeline(config, fading, trials=500, seed=0, alphas=None, solver=None):
    """Achievable design: orthogonal pilots for the ``alpha*T`` strongest users,
    optimised powers, maximised over the training fraction."""
    solver = dict(solver or {})
    best = None
    for a in _alphas(config, alphas):
        point = _lower_point(config.replace(alpha=a), fading, trials, seed, solver)
        if _better(point, best):
            best = point
    return best


def random_pilot_pipeline(config, fading, trials=500, seed=0, alphas=None):
    """Baseline: Gaussian pilots scaled to each user's budget, unit powers for
    every user, maximised over the training fraction."""
    best = None
    power = PowerSplit.uniform(config.K, 1.0, 1.0)
    for a in _alphas(config, alphas):
        cfg = config.replace(alpha=a)
        pilot = pilot_random(PilotDesignSpec("random", cfg, fading, power), seed=seed)
        report = evaluate_design(cfg, fading, pilot, power, trials=trials, seed=seed)
        point = DesignPoint(a, cfg.K, np.arange(cfg.K), power, "random", report)
        if _better(point, best):
            best = point
    return best


def optimize_uniform(config, d, trials=500, seed=0, alphas=None, method="monte_carlo", K=None):
    """Exact design for co-located users: for each training fraction pick the
    optimal user count (or use ``K`` when given) and power split, then keep
    the best fraction."""
    d = float(np.atleast_1d(d)[0])
    if method not in ("monte_carlo", "asymptotic"):
        raise DomainError(f"unknown evaluation method {method!r}")
    best = None
    fixed_K = K
    for a in _alphas(config, alphas):
        K = optimal_k_uniform(a, config.T, config.rho0, d) if fixed_K is None else int(fixed_K)
        cfg = config.replace(alpha=a, K=K)
        dd = np.full(K, d)
        g = gamma_uniform_opt(cfg, dd)
        gp = (1.0 - a * g) / (1.0 - a)
        snr = tau(cfg, dd, g, gp, K)
        if method == "asymptotic":
            rate = asymptotic_rate(a, cfg.N, K / cfg.N, K / cfg.T, snr)
            report = ThroughputReport(max(rate, 0.0), "asymptotic", 0, None, {"tau": snr})
        else:
            n = min(K, cfg.n_pilot)
            report = mc_throughput(cfg, EffectiveGains(np.full(n, snr), 1.0), trials=trials, seed=seed)
        point = DesignPoint(a, K, np.arange(min(K, cfg.n_pilot)), PowerSplit.uniform(K, g, gp), "uniform", report)
        if _better(point, best):
            best = point
    return best
