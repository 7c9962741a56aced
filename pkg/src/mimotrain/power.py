"""Training/data power allocation.

``gamma`` scales the training power (``alpha * gamma * P0 * T`` energy per
user), ``gamma_prime`` the data power; a user's budget is
``alpha * gamma + (1 - alpha) * gamma_prime = 1``.  The numerical solvers
maximise a fixed-batch Monte Carlo estimate of the log-det throughput: for a
scalar ``t`` bounding the equivalent noise power the inner problem is convex
and is solved by spectral projected gradient; ``t`` itself is searched on a
log grid, and the best grid points are polished by bounded quasi-Newton
ascent on the exact throughput.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channel import PowerSplit
from .errors import ConvergenceError, DimensionError, DomainError
from .majorization import flat_block_end, min_majorizing_vector
from .throughput import GramBatch

KKT_TOL = 1e-6
STOP_TOL = 1e-7
GRID_TOL = 1e-5  # grid points only rank t; the final point is solved to STOP_TOL
GRID_ITER = 100  # per grid point and per candidate polish
MAX_ITER = 10_000
T_GRID = 40
POLISH_STARTS = 3
TIE_TOL = 1e-6  # relative gap below which sorted gains count as tied


@dataclass
class EffectiveGains:
    lambdas: np.ndarray
    sigma_v2: float

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if np.any(self.lambdas < 0) or not np.all(np.isfinite(self.lambdas)):
            raise DomainError("effective eigenvalues must be finite and nonnegative")
        if not self.sigma_v2 > 0:
            raise DomainError(f"sigma_v2 must be positive, got {self.sigma_v2}")

    @property
    def snr(self):
        return self.lambdas / self.sigma_v2


@dataclass(frozen=True)
class Tau:
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise DomainError(f"effective SNR must be finite and nonnegative, got {self.value}")

    def __float__(self):
        return self.value


def _d(config, d):
    d = np.asarray(d, dtype=float)
    if d.ndim != 1 or d.size != config.K:
        raise DimensionError(f"expected {config.K} large-scale gains, got shape {d.shape}")
    return d


def user_gains(config, d, gamma, gamma_prime):
    """Per-user ``alpha g g' rho0 P0 d^4 T / (1 + alpha g rho0 d^2 T)``."""
    a = config.alpha * gamma * config.rho0 * d**2 * config.T
    return gamma_prime * config.P0 * d**2 * a / (1.0 + a)


def noise_power(config, d, gamma, gamma_prime):
    """``sum g'_k d_k^2 P0 / (1 + alpha g_k rho0 d_k^2 T) + N0``."""
    a = config.alpha * gamma * config.rho0 * d**2 * config.T
    return float(np.sum(gamma_prime * d**2 * config.P0 / (1.0 + a)) + config.N0)


def effective_gains(config, fading, power):
    """Eigenvalues of the effective channel and the equivalent noise power.

    With more users than pilot symbols the per-user gains are replaced by the
    minimal vector with ``K - alpha*T`` zeros that majorizes them.
    """
    d = _d(config, fading.d)
    lam = user_gains(config, d, power.gamma, power.gamma_prime)
    lam = np.where(power.active, lam, 0.0)
    if config.K > config.n_pilot:
        lam = min_majorizing_vector(lam, config.K - config.n_pilot)
    return EffectiveGains(np.sort(lam)[::-1], noise_power(config, d, power.gamma, power.gamma_prime))


def _majorize_pullback(y, m):
    """Minimal majorizing vector plus a map taking gradients back to ``y``."""
    n = y.size
    order = np.argsort(y, kind="stable")
    x = min_majorizing_vector(y, m)
    k = flat_block_end(y[order], m)

    ys = y[order]
    # tied tail entries: sorting is not differentiable there, so use the mean
    # of the one-sided gradients (an element of the Clarke subdifferential)
    tail = ys[k:]
    breaks = np.flatnonzero(np.diff(tail) > TIE_TOL * np.maximum(tail[1:], 1e-300)) + 1
    groups = [g + k for g in np.split(np.arange(tail.size), breaks) if g.size > 1]

    def pullback(gx):
        gs = np.empty(n)
        gs[:k] = np.sum(gx[m:k]) / (k - m) if k > m else 0.0
        gs[k:] = gx[k:]
        for g in groups:
            gs[g] = gs[g].mean()
        out = np.empty(n)
        out[order] = gs
        return out

    pullback.ties = [(order[g], g) for g in groups]
    return x, pullback


class _PowerProblem:
    """Fixed-batch throughput as a smooth function of per-user noise shares.

    The working variable is ``v = (1 - alpha g) / (1 + a g)`` with
    ``a = alpha rho0 d^2 T``: a decreasing bijection of ``g`` in [0, 1/alpha]
    onto [0, 1] that turns the noise-power bound into the linear constraint
    ``sum c_k v_k <= t - N0`` while each effective gain
    ``b v (1 - v) / (a v + alpha)`` stays concave.
    """

    def __init__(self, config, d, draws, seed):
        self.config = config
        self.d = np.asarray(d, dtype=float)
        self.K = self.d.size
        self.zeros = max(self.K - config.n_pilot, 0)
        self.M = self.K - self.zeros
        alpha = config.alpha
        self.live = self.d > 0
        self.a = alpha * config.rho0 * self.d**2 * config.T
        self.b = alpha * config.rho0 * config.P0 * self.d**4 * config.T / (1.0 - alpha)
        self.c = self.d**2 * config.P0 / (1.0 - alpha)
        self.batch = GramBatch(config.N, self.M, draws, seed)
        with np.errstate(divide="ignore", invalid="ignore"):
            peak = (np.sqrt(alpha**2 + self.a * alpha) - alpha) / self.a
        self.peak = np.where(self.a > 0, peak, 0.5)
        self.scale = np.where(self.b > 0, np.sqrt(np.max(self.b) / np.where(self.b > 0, self.b, 1.0)), 1.0)

    def gamma(self, v):
        return (1.0 - v) / (self.a * v + self.config.alpha)

    def to_v(self, g):
        return (1.0 - self.config.alpha * g) / (1.0 + self.a * g)

    def lam(self, v):
        return self.b * v * (1.0 - v) / (self.a * v + self.config.alpha)

    def dlam(self, v):
        alpha = self.config.alpha
        return self.b * (alpha - 2.0 * alpha * v - self.a * v**2) / (self.a * v + alpha) ** 2

    def sigma2(self, v):
        return float(self.c @ v + self.config.N0)

    def spectrum(self, v):
        lam = np.clip(self.lam(v), 0.0, None)
        if self.zeros:
            x, pull = _majorize_pullback(lam, self.zeros)
            return x[self.zeros :], pull
        return lam, None

    def value(self, v, t):
        s, _ = self.spectrum(v)
        return (1.0 - self.config.alpha) * self.batch.value(s / t)

    def value_and_grad(self, v, t):
        s, pull = self.spectrum(v)
        f, gs = self.batch.value_and_grad(s / t)
        gs = gs / t
        if pull is not None:
            full = np.zeros(self.K)
            full[self.zeros :] = gs
            gs = pull(full)
        scale = 1.0 - self.config.alpha
        return scale * f, scale * gs * self.dlam(v)

    def rate(self, v):
        return self.value(v, self.sigma2(v))

    def rate_and_grad(self, v):
        """Throughput with the noise power tied to ``v``, and its gradient."""
        sig = self.sigma2(v)
        s, pull = self.spectrum(v)
        f, gs = self.batch.value_and_grad(s / sig)
        if pull is not None:
            full = np.zeros(self.K)
            full[self.zeros :] = gs
            gl = pull(full)
        else:
            gl = gs
        scale = 1.0 - self.config.alpha
        grad = gl * self.dlam(v) / sig - float(gs @ s) / sig**2 * self.c
        return scale * f, scale * grad

    def _spg(self, fun, budget, v0, max_iter, tol):
        """Spectral projected gradient with nonmonotone Armijo backtracking.

        Steps are taken in ``u = v / s`` with ``s_k = sqrt(b_max / b_k)``, which
        evens out the curvature across users whose gains differ by orders of
        magnitude; convergence is judged by the natural residual in ``v``.
        """
        s = self.scale
        ub, cu = 1.0 / s, self.c * s

        def resid(v, gv):
            return float(np.max(np.abs(_project(v + gv, 1.0, self.c, budget) - v)))

        u = _project(np.asarray(v0, dtype=float) / s, ub, cu, budget)
        f, gv = fun(s * u)
        g = s * gv
        step = 1.0 / max(np.max(np.abs(g)), 1e-300)
        history = [f]
        best = (f, s * u)
        res = resid(s * u, gv)
        for _ in range(max_iter):
            if f >= best[0]:
                best = (f, s * u)
            if res < tol:
                break
            direction = _project(u + step * g, ub, cu, budget) - u
            slope = float(g @ direction)
            ref = max(history[-10:])
            # near the optimum f only moves at round-off level; the gradient
            # still carries the information, so allow that much slack
            slack = 1e-12 * max(1.0, abs(ref))
            lam = 1.0
            while True:
                cand = u + lam * direction
                fc, gvc = fun(s * cand)
                if fc >= ref + 1e-4 * lam * slope - slack or lam < 1e-12:
                    break
                lam *= 0.5
            gc = s * gvc
            du, dg = cand - u, gc - g
            sy = -float(du @ dg)
            step = float(du @ du) / sy if sy > 1e-300 else 1e3 * step
            step = min(max(step, 1e-12), 1e12)
            u, f, g, gv = cand, fc, gc, gvc
            history.append(f)
            res = resid(s * u, gv)
        if f >= best[0]:
            best = (f, s * u)
        return s * u, f, res

    def solve_inner(self, t, v0, max_iter=MAX_ITER, tol=STOP_TOL):
        """Maximise the throughput with noise power replaced by the bound ``t``
        over ``sigma_v2 <= t`` (a concave program when K <= alpha*T)."""
        return self._spg(lambda v: self.value_and_grad(v, t), t - self.config.N0, v0, max_iter, tol)

    def grad_gamma(self, v):
        """Throughput and its gradient in ``gamma`` (the problem's own scale)."""
        f, gv = self.rate_and_grad(v)
        g = self.gamma(v)
        return f, gv * -(self.config.alpha + self.a) / (1.0 + self.a * g) ** 2

    def residual(self, v):
        """Projected-gradient residual of the exact throughput in ``gamma``.

        At a tied pair of gains any convex mix of the two one-sided gradients
        is a valid subgradient, so the pair is scored with its best mix.
        """
        hi = 1.0 / self.config.alpha
        g = np.clip(self.gamma(v), 0.0, hi)
        v = self.to_v(g)
        sig = self.sigma2(v)
        s, pull = self.spectrum(v)
        _, gs = self.batch.value_and_grad(s / sig)
        full = gs
        if pull is not None:
            full = np.zeros(self.K)
            full[self.zeros :] = gs
            gl = pull(full)
        else:
            gl = gs
        scale = (1.0 - self.config.alpha) * -(self.config.alpha + self.a) / (1.0 + self.a * g) ** 2
        A = scale * self.dlam(v) / sig
        B = -scale * float(gs @ s) / sig**2 * self.c
        r = np.abs(np.clip(g + A * gl + B, 0.0, hi) - g)
        w = np.linspace(0.0, 1.0, 1001)
        for users, slots in getattr(pull, "ties", []):
            if users.size != 2:
                continue
            (i, j), (p, q) = users, full[slots]
            ri = np.abs(np.clip(g[i] + A[i] * (w * p + (1 - w) * q) + B[i], 0.0, hi) - g[i])
            rj = np.abs(np.clip(g[j] + A[j] * ((1 - w) * p + w * q) + B[j], 0.0, hi) - g[j])
            r[i] = r[j] = np.min(np.maximum(ri, rj))
        return float(np.max(r))

    def polish(self, v0, max_iter=MAX_ITER, tol=STOP_TOL):
        """Local ascent on the exact throughput over the box, in ``gamma``.

        Strong users crowd into a sliver of ``v`` near zero, so the ascent uses
        ``gamma`` coordinates, where their gains saturate smoothly.
        """
        hi = 1.0 / self.config.alpha
        g = np.clip(self.gamma(np.clip(v0, 0.0, 1.0)), 0.0, hi)
        if max_iter > 0:

            def neg(x):
                f, gg = self.grad_gamma(self.to_v(x))
                return -f, -gg

            opts = {"maxiter": int(max_iter), "ftol": 0.0, "gtol": tol, "maxcor": 20}
            g = minimize(neg, g, jac=True, method="L-BFGS-B", bounds=[(0.0, hi)] * self.K, options=opts).x
        v = self.to_v(g)
        return v, self.rate(v), self.residual(v)


def _project(z, ub, c, budget):
    """Euclidean projection onto ``0 <= v <= ub`` intersected with ``c.v <= budget``."""
    v = np.clip(z, 0.0, ub)
    if budget is None or c @ v <= budget:
        return v
    pos = c > 0
    if budget <= 0:
        return np.where(pos, 0.0, v)
    ub = np.broadcast_to(ub, z.shape)
    zp, cp, up = z[pos], c[pos], ub[pos]
    # v(theta) = clip(z - theta c, 0, ub) makes c.v piecewise linear and decreasing
    bp = np.concatenate(([0.0], (zp - up) / cp, zp / cp))
    bp = np.unique(bp[bp >= 0])
    S = np.clip(zp[None, :] - bp[:, None] * cp[None, :], 0.0, up[None, :]) @ cp
    j = int(np.argmax(S <= budget))
    s0, s1 = S[j - 1], S[j]
    theta = bp[j - 1] + (s0 - budget) / (s0 - s1) * (bp[j] - bp[j - 1])
    v[pos] = np.clip(zp - theta * cp, 0.0, up)
    return v


@dataclass
class PowerSolution:
    power: PowerSplit
    objective: float
    t: float
    kkt_residual: float


def _solve(config, d, draws, seed, t_points, starts, max_iter):
    prob = _PowerProblem(config, d, draws, seed)
    if not np.any(prob.live):
        return prob, np.ones(prob.K), 0.0, config.N0, 0.0
    t_hi = float(np.sum(prob.c) + config.N0)
    grid = np.geomspace(config.N0, t_hi, t_points)
    t_peak = prob.sigma2(prob.peak)

    found = []
    v_prev = prob.peak
    for t in grid[::-1]:
        if t >= t_peak and prob.zeros == 0:
            # every gain sits at its maximum and the bound is slack
            v = prob.peak.copy()
        else:
            v = prob.solve_inner(t, v_prev, min(max_iter, GRID_ITER), GRID_TOL)[0]
        found.append((prob.rate(v), -t, v))
        v_prev = v
    found.sort(key=lambda item: item[:2], reverse=True)
    candidates = [(r, v) for r, _, v in found[:POLISH_STARTS]]
    candidates += [(prob.rate(v), v) for v in starts]
    # short ascent from every candidate, then a full one from the winner
    best = None
    for rate, v in candidates:
        vp = prob.polish(v, min(max_iter, GRID_ITER), GRID_TOL)[0]
        rp = prob.rate(vp)
        if rp < rate:
            vp, rp = v, rate
        if best is None or rp > best[1]:
            best = (vp, rp)
    v, rate = best
    vp, _, res = prob.polish(v, max_iter)
    rp = prob.rate(vp)
    if rp >= rate - 1e-12 * max(1.0, abs(rate)):  # ties up to round-off go to the converged point
        v, rate = vp, rp
    else:
        res = prob.residual(v)
    return prob, v, rate, prob.sigma2(v), res


def _finish(config, prob, v, rate, t, res):
    g = np.clip(prob.gamma(np.clip(v, 0.0, 1.0)), 0.0, 1.0 / config.alpha)
    gp = (1.0 - config.alpha * g) / (1.0 - config.alpha)
    inactive = (gp <= 1e-6) | ~prob.live
    g = np.where(inactive, 0.0, g)
    gp = np.where(inactive, 0.0, gp)
    power = PowerSplit(g, gp, ~inactive)
    if res > KKT_TOL:
        raise ConvergenceError(f"KKT residual {res:.3g} above {KKT_TOL}", best=power, residual=res)
    return PowerSolution(power, rate, t, res)


def solve_power_kleq(config, fading, draws=200, seed=0, t_points=T_GRID, max_iter=MAX_ITER):
    """Optimal training fractions when every user gets an orthogonal pilot (K <= alpha*T)."""
    if config.K > config.n_pilot:
        raise DomainError(f"needs K <= alpha*T (K={config.K}, alpha*T={config.n_pilot})")
    d = _d(config, fading.d)
    prob, v, rate, t, res = _solve(config, d, draws, seed, t_points, [], max_iter)
    return _finish(config, prob, v, rate, t, res)


def solve_power_kgt(config, fading, draws=200, seed=0, t_points=T_GRID, max_iter=MAX_ITER, starts=()):
    """Optimal training fractions for K > alpha*T under the majorization-linked
    effective gains.

    The problem is not concave in general, so besides the best grid points the
    final ascent also starts from the design that trains only the ``alpha*T``
    strongest users and from any ``starts`` (PowerSplit objects; inactive users
    are mapped to all-training, zero-data power).
    """
    if config.K <= config.n_pilot:
        raise DomainError(f"needs K > alpha*T (K={config.K}, alpha*T={config.n_pilot})")
    d = _d(config, fading.d)
    L = config.n_pilot
    a = config.alpha * config.rho0 * d**2 * config.T
    with np.errstate(divide="ignore", invalid="ignore"):
        peak = np.where(a > 0, (np.sqrt(config.alpha**2 + a * config.alpha) - config.alpha) / a, 0.5)
    strongest = np.where(np.arange(d.size) < L, peak, 0.0)
    vs = [strongest]
    for p in starts:
        v = (1.0 - config.alpha * p.gamma) / (1.0 + a * p.gamma)
        vs.append(np.where(p.active, v, 0.0))
    prob, v, rate, t, res = _solve(config, d, draws, seed, t_points, vs, max_iter)
    return _finish(config, prob, v, rate, t, res)


def gamma_highsnr(config, K_active):
    """High-SNR optimum: uniform ``gamma = 1/(alpha (1 + sqrt((1-alpha) T / K_a)))``
    over the ``K_a = min(K, alpha*T)`` active users, zero elsewhere."""
    K_a = min(int(K_active), config.K, config.n_pilot)
    if K_a < 1:
        raise DomainError("need at least one active user")
    alpha = config.alpha
    g = 1.0 / (alpha * (1.0 + math.sqrt((1.0 - alpha) * config.T / K_a)))
    gp = (1.0 - alpha * g) / (1.0 - alpha)
    gamma = np.zeros(config.K)
    gamma_p = np.zeros(config.K)
    gamma[:K_a] = g
    gamma_p[:K_a] = gp
    return PowerSplit(gamma, gamma_p)


def _uniform_d(config, d):
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not np.allclose(d, d[0], rtol=1e-12, atol=0):
        raise DomainError("closed-form uniform solution needs equal large-scale gains")
    return float(d[0])


def gamma_uniform_opt(config, d):
    """Training fraction maximising the effective SNR for co-located users."""
    d = _uniform_d(config, d)
    alpha, K, T = config.alpha, config.K, config.T
    x = config.rho0 * d**2
    if K <= alpha * T:
        mu = x * (K - (1.0 - alpha) * T) / (1.0 - alpha + x * K)
    else:
        mu = x * (2.0 * alpha - 1.0) * K / (alpha * (1.0 - alpha + x * K))
    if 1.0 - mu < 0:
        raise DomainError(f"1 - mu = {1.0 - mu} is negative")
    g = 1.0 / (alpha * (1.0 + math.sqrt(1.0 - mu)))
    return min(max(g, 0.0), 1.0 / alpha)


def tau(config, d, gamma, gamma_prime, K=None):
    """Effective per-stream SNR of the uniform design (elementwise over
    array-valued ``gamma``, ``gamma_prime``)."""
    d = _uniform_d(config, d)
    K = config.K if K is None else int(K)
    alpha, T = config.alpha, config.T
    x = config.rho0 * d**2
    g, gp = np.asarray(gamma, dtype=float), np.asarray(gamma_prime, dtype=float)
    if K <= alpha * T:
        val = alpha * g * gp * x**2 * T / (x * (gp * K + alpha * g * T) + 1.0)
    else:
        q = g * gp * x**2 * K
        val = q / (q * (K - alpha * T) + x * K * (g + gp) + 1.0)
    if val.ndim:
        return np.maximum(val, 0.0)
    return Tau(max(float(val), 0.0)).value
