"""End-to-end acceptance checks.

Each ``criterion_N(seed)`` returns a :class:`CriterionResult`; :func:`run_all`
runs a selection and reports one PASS/FAIL line per check.  All randomness is
derived from the master seed, so a given seed always yields the same verdicts.
"""

import functools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .channel import FadingProfile, PowerSplit, SystemConfig, mmse_error_matrix, mmse_estimate, sample_scenario
from .majorization import majorizes, min_majorizing_vector, schur_horn
from .optimizer import (
    alpha_grid,
    bound_pipelines,
    load_equation,
    load_root,
    optimal_k_uniform,
    optimize_uniform,
    random_pilot_pipeline,
    uniform_tau,
)
from .pilots import (
    PilotDesignSpec,
    pilot_lower_bound,
    pilot_orthogonal,
    pilot_uniform,
    pilot_upper_bound,
    upper_bound_target,
)
from .power import EffectiveGains, gamma_highsnr, gamma_uniform_opt, solve_power_kleq, tau
from .throughput import asymptotic_throughput, mc_throughput, mp_density, mp_integral, mp_support

# desk-scale bound grid shared by criteria 6, 7 and 11
GRID_N, GRID_T = 50, 100
GRID_K = (10, 40, 80)
GRID_RHO_DB = (20, 30, 40, 50)
GRID_DROPS = 3
GRID_TRIALS = 2000
GRID_ALPHAS = (0.05, 0.1, 0.2, 0.3)
SOLVER = {"draws": 50, "t_points": 20}

# active-user sweep (criterion 11)
ACTIVE_K = (10, 20, 40, 60, 80)
ACTIVE_RHO_DB = (40, 60, 80)
ACTIVE_ALPHAS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)
ACTIVE_TRIALS = 500


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag)]))


def _unitary(n, rng):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))[None, :]


# --- 1: minimal majorizing vector -------------------------------------------------


def _spread(x, rng, keep_zeros):
    """Move random fractions of mass from smaller to larger nonzero entries;
    each move keeps the result majorizing its input."""
    x = x.copy()
    for _ in range(rng.integers(0, 4)):
        nz = np.argsort(x, kind="stable")[keep_zeros:]
        if nz.size < 2:
            break
        a, b = np.sort(rng.choice(nz.size, 2, replace=False))
        i, j = nz[a], nz[b]
        delta = x[i] * rng.uniform(0.0, 0.999)
        x[i] -= delta
        x[j] += delta
    return x


def _competitors(y, m, rng, count=4):
    """Random vectors with ``m`` zeros built to majorize ``y``, plus random
    same-sum vectors that happen to."""
    out = []
    ys = np.sort(y)
    for _ in range(count):
        x = ys.copy()
        for i in range(m):
            j = rng.integers(m, y.size)
            x[j] += x[i]
            x[i] = 0.0
        out.append(_spread(x, rng, m))
        w = rng.dirichlet(np.full(y.size - m, 0.3)) * y.sum()
        out.append(np.concatenate([np.zeros(m), w]))
    return out


def criterion_1(seed=0):
    rng = _rng(seed, 1)
    tol = 1e-9
    failures, compared = [], 0
    for trial in range(1000):
        n = int(rng.integers(1, 7))
        y = rng.exponential(size=n) * 10.0 ** rng.uniform(-3, 3)
        if n > 1 and rng.random() < 0.2:
            y[rng.integers(n)] = 0.0
        for m in range(n):
            x = min_majorizing_vector(y, m)
            total = abs(x.sum() - y.sum()) <= 1e-12 * max(1.0, y.sum())
            if not (majorizes(x, y, tol) and total):
                failures.append((trial, m, "x* does not majorize y or changes the sum"))
                continue
            if np.all(y > 0) and np.count_nonzero(x == 0) != m:
                failures.append((trial, m, "wrong zero count"))
            for c in _competitors(y, m, rng):
                if np.count_nonzero(c == 0) != m or not majorizes(c, y, tol):
                    continue
                compared += 1
                if not majorizes(c, x, tol):
                    failures.append((trial, m, "competitor not majorizing x*"))
    ok = not failures and compared > 1000
    return ok, f"{compared} competitors checked, {len(failures)} failures" + (f", first {failures[0]}" if failures else "")


# --- 2: Schur-Horn synthesis -----------------------------------------------------


def criterion_2(seed=0):
    rng = _rng(seed, 2)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 9))
        eigs = rng.standard_normal(n) * 10.0 ** rng.uniform(-2, 2)
        Q = _unitary(n, rng)
        diag = np.real(np.diag((Q * eigs) @ Q.conj().T))
        H = schur_horn(eigs, diag)
        scale = max(float(np.max(np.abs(eigs))), 1e-300)
        herm = np.max(np.abs(H - H.conj().T)) / scale
        spec = np.max(np.abs(np.sort(np.linalg.eigvalsh(H)) - np.sort(eigs))) / scale
        dg = np.max(np.abs(np.real(np.diag(H)) - diag)) / scale
        worst = max(worst, herm, spec, dg)
    return worst <= 1e-8, f"worst relative error {worst:.2e} over 500 pairs"


# --- 3: pilot Gram conditions ----------------------------------------------------


def _random_setup(rng, more_users):
    T = int(rng.integers(10, 41))
    L = int(rng.integers(1, T // 2 + 1))
    K = int(rng.integers(L + 1, 2 * L + 4)) if more_users else int(rng.integers(1, L + 1))
    cfg = SystemConfig(N=4, K=K, T=T, alpha=L / T, P0=1.0, N0=10.0 ** rng.uniform(-2, 1))
    d = np.sort(10.0 ** rng.uniform(-1.5, 0.5, K))[::-1]
    power = PowerSplit.from_gamma(rng.uniform(0.05, 1.0, K) / cfg.alpha, cfg.alpha)
    return cfg, FadingProfile(d), power


def _rel(err, ref):
    return float(err) / max(float(ref), 1e-300)


def criterion_3(seed=0):
    rng = _rng(seed, 3)
    worst = {"orthogonal": 0.0, "uniform": 0.0, "lower_bound": 0.0, "upper_bound": 0.0}
    for _ in range(100):
        cfg, fad, power = _random_setup(rng, more_users=False)
        spec = PilotDesignSpec("orthogonal", cfg, fad, power)
        Xp = pilot_orthogonal(spec, seed=int(rng.integers(2**31))).Xp
        RX = np.diag(spec.training_energy)
        worst["orthogonal"] = max(worst["orthogonal"], _rel(np.max(np.abs(Xp @ Xp.conj().T - RX)), np.max(RX)))

    for _ in range(100):
        more = bool(rng.random() < 0.5)
        cfg, _, _ = _random_setup(rng, more_users=more)
        g = rng.uniform(0.05, 1.0) / cfg.alpha
        power = PowerSplit.from_gamma(np.full(cfg.K, g), cfg.alpha)
        Xp = pilot_uniform(PilotDesignSpec("uniform", cfg, FadingProfile.uniform(cfg.K, rng.uniform(0.1, 2)), power)).Xp
        e_row = cfg.alpha * g * cfg.P0 * cfg.T
        if cfg.K <= cfg.n_pilot:
            err = _rel(np.max(np.abs(Xp @ Xp.conj().T - e_row * np.eye(cfg.K))), e_row)
        else:
            e_col = g * cfg.P0 * cfg.K
            err = max(
                _rel(np.max(np.abs(Xp.conj().T @ Xp - e_col * np.eye(cfg.n_pilot))), e_col),
                _rel(np.max(np.abs(np.sum(np.abs(Xp) ** 2, axis=1) - e_row)), e_row),
            )
        worst["uniform"] = max(worst["uniform"], err)

    for _ in range(100):
        cfg, fad, power = _random_setup(rng, more_users=True)
        spec = PilotDesignSpec("lower_bound", cfg, fad, power)
        Xp = pilot_lower_bound(spec, seed=int(rng.integers(2**31))).Xp
        L = cfg.n_pilot
        energy = spec.training_energy[:L]
        err = max(
            _rel(np.max(np.abs(Xp[L:])) if cfg.K > L else 0.0, np.max(energy)),
            _rel(np.max(np.abs(Xp[:L] @ Xp[:L].conj().T - np.diag(energy))), np.max(energy)),
        )
        worst["lower_bound"] = max(worst["lower_bound"], err)

    for _ in range(100):
        cfg, fad, power = _random_setup(rng, more_users=True)
        spec = PilotDesignSpec("upper_bound", cfg, fad, power)
        Xt = pilot_upper_bound(spec).whitened
        d = fad.d
        rxd = power.gamma_prime * cfg.P0
        target = upper_bound_target(cfg, d, power)
        G = Xt @ Xt.conj().T
        diag = np.real(np.diag(G)) * d**2 * rxd
        B = (np.sqrt(rxd) * d)[:, None] * G * (np.sqrt(rxd) * d)[None, :]
        eig = np.sort(np.linalg.eigvalsh(0.5 * (B + B.conj().T)))
        want = np.sort(min_majorizing_vector(target, cfg.K - cfg.n_pilot))
        ref = np.max(target)
        err = max(_rel(np.max(np.abs(diag - target)), ref), _rel(np.max(np.abs(eig - want)), ref))
        worst["upper_bound"] = max(worst["upper_bound"], err)

    ok = all(v <= 1e-8 for v in worst.values())
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


# --- 4: closed-form training power -----------------------------------------------


def criterion_4(seed=0):
    rng = _rng(seed, 4)
    worst_excess = -np.inf
    for _ in range(500):
        T = int(rng.integers(10, 201))
        alpha = float(rng.choice(alpha_grid(T)))
        K = int(rng.integers(1, 3 * T + 1))
        cfg = SystemConfig(N=1, K=K, T=T, alpha=alpha, P0=1.0, N0=10.0 ** (-rng.uniform(-10, 40) / 10.0))
        d = np.full(K, 10.0 ** rng.uniform(-1, 0.3))
        g = gamma_uniform_opt(cfg, d)
        best = tau(cfg, d, g, (1.0 - alpha * g) / (1.0 - alpha))
        grid = np.arange(0.0, 1.0 / alpha + 1e-12, 1e-3)
        vals = tau(cfg, d, grid, (1.0 - alpha * grid) / (1.0 - alpha))
        resolution = float(np.max(np.abs(np.diff(vals))))
        worst_excess = max(worst_excess, (float(np.max(vals)) - best) - resolution)
    ok_grid = worst_excess <= 0.0

    cfg = SystemConfig(N=8, K=4, T=20, alpha=0.2, P0=1.0, N0=1e-6)
    closed = gamma_highsnr(cfg, 4).gamma
    solved = solve_power_kleq(cfg, FadingProfile.uniform(4)).power.gamma
    rel = float(np.max(np.abs(solved - closed) / closed))
    ok_high = rel <= 0.01
    detail = f"grid excess over resolution {worst_excess:.2e} (<= 0); high-SNR gamma relative gap {rel:.2e} (<= 1e-2)"
    return ok_grid and ok_high, detail


# --- 5: optimal user count -------------------------------------------------------


def criterion_5(seed=0):
    rng = _rng(seed, 5)
    mismatches = []
    worst_f = 0.0
    trial = 0
    while trial < 50:
        T = int(rng.integers(10, 101))
        alpha = float(rng.choice(alpha_grid(T)))
        rho0 = 10.0 ** (rng.uniform(-10, 30) / 10.0)
        d = 10.0 ** rng.uniform(-1.5, 0.5)
        L = round(alpha * T)
        if load_root(alpha) / (rho0 * d * d) > 3 * T:
            continue  # optimum lies beyond the brute-force range
        trial += 1
        worst_f = max(worst_f, abs(load_equation(load_root(alpha), alpha)))
        k_opt = optimal_k_uniform(alpha, T, rho0, d)
        ks = np.arange(L, 3 * T + 1)
        taus = np.array([uniform_tau(alpha, T, rho0, d, k) for k in ks])
        k_brute = int(ks[np.argmax(taus)])
        if k_opt != k_brute and not math.isclose(uniform_tau(alpha, T, rho0, d, k_opt), taus.max(), rel_tol=1e-12):
            mismatches.append((trial, k_opt, k_brute))
    high = []
    for alpha in (0.2, 0.5, 0.8):
        k = optimal_k_uniform(alpha, 100, 1e6, 1.0)
        high.append(abs(k - round(alpha * 100)))
    ok = not mismatches and worst_f < 1e-10 and max(high) <= 1
    detail = f"{50 - len(mismatches)}/50 brute-force matches, max |f(x*)| {worst_f:.1e}, high-SNR |K - alpha T| {high}"
    return ok, detail


# --- 6, 7: bound grid ------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _bound_grid(seed):
    """Upper, lower and random-pilot designs on every grid cell."""
    rows = []
    alphas = list(GRID_ALPHAS)
    for drop in range(GRID_DROPS):
        for K in GRID_K:
            fading = sample_scenario(K, seed=[int(seed), 6, drop])
            for rho in GRID_RHO_DB:
                cfg = SystemConfig.from_db(GRID_N, K, GRID_T, alphas[0], rho)
                upper, lower = bound_pipelines(cfg, fading, GRID_TRIALS, seed, alphas, SOLVER)
                rand = random_pilot_pipeline(cfg, fading, GRID_TRIALS, seed, alphas)
                rows.append({"drop": drop, "K": K, "rho": rho, "upper": upper, "lower": lower, "random": rand})
    return rows


def criterion_6(seed=0):
    rows = _bound_grid(seed)
    violations, gaps = [], []
    for r in rows:
        u, lo = r["upper"].rate, r["lower"].rate
        if lo.rate - u.rate > math.hypot(u.ci, lo.ci):
            violations.append((r["drop"], r["K"], r["rho"]))
        if r["rho"] == 50:
            gaps.append((u.rate - lo.rate) / u.rate)
    ok = not violations and max(gaps) < 0.05
    return ok, f"{len(rows)} cells, sandwich violations {violations or 0}, max relative gap at 50 dB {max(gaps):.2%}"


def criterion_7(seed=0):
    rows = [r for r in _bound_grid(seed) if r["rho"] >= 40]
    losses = []
    for r in rows:
        lo, ra = r["lower"].rate, r["random"].rate
        if lo.rate - ra.rate <= math.hypot(lo.ci, ra.ci):
            losses.append((r["drop"], r["K"], r["rho"]))
    margin = min(r["lower"].rate.rate / r["random"].rate.rate for r in rows)
    return not losses, f"{len(rows)} cells at >= 40 dB, not beaten: {losses or 0}, min lower/random ratio {margin:.3f}"


# --- 8: asymptotic agreement -----------------------------------------------------


def criterion_8(seed=0):
    worst = 0.0
    N, T = 100, 200
    for j in range(1, 10):
        alpha = j / 10
        cfg = SystemConfig.from_db(N, N, T, alpha, -18.0)
        d = np.ones(N)
        asym = asymptotic_throughput(cfg, d, 1.0, 1.0)
        t = asym.provenance["tau"]
        n = min(cfg.K, cfg.n_pilot)
        mc = mc_throughput(cfg, EffectiveGains(np.full(n, t), 1.0), trials=5000, seed=seed)
        worst = max(worst, abs(asym.rate - mc.rate) / mc.rate)
    return worst <= 0.02, f"worst relative difference {worst:.3%} over 9 training fractions"


# --- 9: MMSE error covariance ----------------------------------------------------


def criterion_9(seed=0):
    rng = _rng(seed, 9)
    N, K, T, alpha, samples = 8, 4, 20, 0.2, 10_000
    cfg = SystemConfig(N=N, K=K, T=T, alpha=alpha)
    d = np.array([1.0, 1.0, 1.0, 0.05])
    power = PowerSplit.from_gamma(np.full(K, 2.5), alpha)  # training energy 10 per user
    Xp = pilot_orthogonal(PilotDesignSpec("orthogonal", cfg, FadingProfile(d), power), seed=seed).Xp
    L = cfg.n_pilot
    H = (rng.standard_normal((samples * N, K)) + 1j * rng.standard_normal((samples * N, K))) / math.sqrt(2.0)
    W = (rng.standard_normal((samples * N, L)) + 1j * rng.standard_normal((samples * N, L))) * math.sqrt(cfg.N0 / 2.0)
    Yp = H @ (d[:, None] * Xp) + W
    E = (H - mmse_estimate(Yp, Xp, d, cfg.N0)).reshape(samples, N * K)
    C = E.conj().T @ E / samples
    ref = np.kron(np.eye(N), mmse_error_matrix(Xp, d, cfg.N0))
    err = np.linalg.norm(C - ref) / np.linalg.norm(ref)
    return err < 0.05, f"Frobenius relative error {err:.2%} over {samples} samples"


# --- 10: Marchenko-Pastur law ----------------------------------------------------


def criterion_10(seed=0):
    mass = mp_integral(np.ones_like, 1.0, 0.25, 0.5)
    rng = _rng(seed, 10)
    N = 400
    G = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2.0)
    eig = np.linalg.eigvalsh(G @ G.conj().T / N)
    sup = mp_support(1.0, 0.25, 0.5)

    def cdf(x):
        x = np.atleast_1d(x)
        out = np.empty(x.size)
        for i, v in enumerate(x):
            hi = min(max(v, sup.a), sup.b)
            out[i] = 0.0 if hi <= sup.a else integrate.quad(lambda t: mp_density(t, 1.0, 0.25, 0.5), max(sup.a, 1e-12), hi, limit=200)[0]
        return out

    ks = stats.kstest(np.clip(eig, 1e-12, None), cdf).statistic
    ok = abs(mass - 1.0) <= 1e-6 and ks < 0.05
    return ok, f"density mass {mass:.9f}, KS distance {ks:.4f} (N={N})"


# --- 11: monotonicity ------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _active_sweep(seed):
    from .optimizer import lower_bound_pipeline

    counts = {}
    for rho in ACTIVE_RHO_DB:
        for K in ACTIVE_K:
            fading = sample_scenario(K, seed=[int(seed), 11])
            cfg = SystemConfig.from_db(GRID_N, K, GRID_T, ACTIVE_ALPHAS[0], rho)
            point = lower_bound_pipeline(cfg, fading, ACTIVE_TRIALS, seed, ACTIVE_ALPHAS, SOLVER)
            counts[(rho, K)] = point.n_active
    return counts


def criterion_11(seed=0):
    counts = _active_sweep(seed)
    in_k = all(
        counts[(rho, a)] <= counts[(rho, b)] for rho in ACTIVE_RHO_DB for a, b in zip(ACTIVE_K, ACTIVE_K[1:])
    )
    in_rho = all(
        counts[(a, K)] <= counts[(b, K)] for K in ACTIVE_K for a, b in zip(ACTIVE_RHO_DB, ACTIVE_RHO_DB[1:])
    )
    rates = []
    for N in (25, 50, 100, 150):
        cfg = SystemConfig.from_db(N, 10, GRID_T, 0.1, 10.0)
        rates.append(optimize_uniform(cfg, 1.0, trials=500, seed=seed, alphas=alpha_grid(GRID_T, 0.05, 0.5, 5)).rate.rate)
    in_n = all(a <= b for a, b in zip(rates, rates[1:]))
    table = "; ".join(
        f"{rho} dB: " + ",".join(str(counts[(rho, K)]) for K in ACTIVE_K) for rho in ACTIVE_RHO_DB
    )
    detail = f"active counts for K={list(ACTIVE_K)} [{table}]; rates vs N {[round(r, 3) for r in rates]}"
    return in_k and in_rho and in_n, detail


CRITERIA = {
    1: ("minimal majorizing vector", criterion_1),
    2: ("Schur-Horn synthesis", criterion_2),
    3: ("pilot Gram conditions", criterion_3),
    4: ("closed-form training power", criterion_4),
    5: ("optimal user count", criterion_5),
    6: ("bound sandwich and tightness", criterion_6),
    7: ("optimized vs random pilots", criterion_7),
    8: ("asymptotic agreement", criterion_8),
    9: ("MMSE error covariance", criterion_9),
    10: ("Marchenko-Pastur law", criterion_10),
    11: ("monotonicity", criterion_11),
}


def run_criterion(number, seed=0):
    name, fn = CRITERIA[number]
    start = time.perf_counter()
    passed, detail = fn(seed)
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


def run_all(only=None, seed=0, report=print):
    """Run the selected criteria (all by default); returns the results."""
    numbers = sorted(CRITERIA) if not only else sorted(set(int(n) for n in only))
    results = []
    for n in numbers:
        if n not in CRITERIA:
            raise KeyError(f"no criterion {n}")
        res = run_criterion(n, seed)
        if report is not None:
            report(res.line())
        results.append(res)
    return results
