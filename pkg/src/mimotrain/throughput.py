"""Throughput evaluation: Monte Carlo log-det averages and the large-system
Marchenko-Pastur approximation.

Rates are in bits per channel use (log base 2) and already include the
``1 - alpha`` data-fraction factor.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import noise_power_from_whitened, whitened_pilot
from .errors import DomainError

LOG2E = 1.0 / math.log(2.0)
CHUNK = 256  # trials per RNG stream; fixed so results never depend on batching
QUADRATURE_NODES = 256


@dataclass
class ThroughputReport:
    rate: float
    method: str
    trials: int = 0
    ci: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("monte_carlo", "asymptotic"):
            raise DomainError(f"unknown evaluation method {self.method!r}")
        if (self.ci is None) == (self.method == "monte_carlo"):
            raise DomainError("ci must be given for Monte Carlo reports and only for them")
        if not (np.isfinite(self.rate) and self.rate >= 0):
            raise DomainError(f"rate must be finite and nonnegative, got {self.rate}")

    def to_json(self):
        return {"rate": self.rate, "method": self.method, "trials": self.trials, "ci": self.ci}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["rate"], obj["method"], obj.get("trials", 0), obj.get("ci"))


def gaussian_columns(N, M, trials, seed):
    """Yield ``(start, G)`` chunks of i.i.d. CN(0,1) N x M matrices.

    Chunk ``c`` always comes from the stream seeded by ``(seed, c)`` so any
    consumer sees the same draws for the same ``(seed, trials)``.
    """
    for c, start in enumerate(range(0, trials, CHUNK)):
        n = min(CHUNK, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), c]))
        G = (rng.standard_normal((n, N, M)) + 1j * rng.standard_normal((n, N, M))) / math.sqrt(2.0)
        yield start, G


def _logdet_bits(W, s):
    """log2 det(I + S^1/2 W S^1/2) for a stack of Hermitian PSD ``W``."""
    r = np.sqrt(s)
    A = r[None, :, None] * W * r[None, None, :]
    idx = np.arange(s.size)
    A[:, idx, idx] += 1.0
    L = np.linalg.cholesky(A)
    return 2.0 * LOG2E * np.sum(np.log(np.real(L[:, idx, idx])), axis=1)


class GramBatch:
    """Fixed batch of ``G^H G`` (G: N x M Gaussian) for common-random-number
    evaluation of ``E log2 det(I + G diag(s) G^H)`` and its gradient in ``s``.

    The batch holds every cyclic column shift of ``ceil(draws / M)`` base
    draws, so the estimate is unchanged by cyclically relabelling ``s``.  In
    particular equal inputs get exactly equal gradients, as they do under
    the expectation.
    """

    def __init__(self, N, M, draws=200, seed=0):
        self.N, self.M = int(N), int(M)
        base = -(-int(draws) // self.M)
        self.draws = base * self.M
        W0 = np.empty((base, self.M, self.M), dtype=complex)
        for start, G in gaussian_columns(self.N, self.M, base, seed):
            W0[start : start + G.shape[0]] = np.einsum("bnm,bnk->bmk", G.conj(), G)
        self.W = np.concatenate([np.roll(W0, (r, r), axis=(1, 2)) for r in range(self.M)])

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if s.size != self.M:
            raise DomainError(f"expected {self.M} eigenvalues, got {s.size}")
        if not np.any(s > 0):
            return 0.0
        return float(np.mean(_logdet_bits(self.W, s)))

    def value_and_grad(self, s):
        s = np.asarray(s, dtype=float)
        if not np.any(s > 0):
            grad = LOG2E * np.real(np.mean(np.diagonal(self.W, axis1=1, axis2=2), axis=0))
            return 0.0, grad
        r = np.sqrt(s)
        V = r[None, :, None] * self.W
        A = V * r[None, None, :]
        idx = np.arange(s.size)
        A[:, idx, idx] += 1.0
        L = np.linalg.cholesky(A)
        value = 2.0 * LOG2E * np.sum(np.log(np.real(L[:, idx, idx])), axis=1)
        # d/ds_k log det(I + W S) = W_kk - [(S^1/2 W)^H A^-1 (S^1/2 W)]_kk
        Y = np.linalg.solve(A, V)
        quad = np.real(np.sum(V.conj() * Y, axis=1))
        diagW = np.real(np.diagonal(self.W, axis1=1, axis2=2))
        grad = LOG2E * np.mean(diagW - quad, axis=0)
        return float(np.mean(value)), grad


def mc_throughput(config, gains, n_active=None, trials=500, seed=0):
    """Monte Carlo rate ``(1 - alpha) E log2 det(I + G diag(lambda) G^H / sigma_v2)``.

    ``G`` is N x ``n_active`` (default ``min(K, alpha*T)``).  The 95% half-width
    is ``1.96 * std / sqrt(trials)``.
    """
    if trials < 1:
        raise DomainError("trials must be at least 1")
    n_max = min(config.K, config.n_pilot)
    lam = np.sort(np.asarray(gains.lambdas, dtype=float))[::-1]
    if n_active is None:
        n_active = min(n_max, lam.size)
    if n_active > n_max:
        raise DomainError(f"n_active={n_active} exceeds min(K, alpha*T)={n_max}")
    s = np.zeros(n_active)
    take = min(n_active, lam.size)
    s[:take] = lam[:take] / gains.sigma_v2
    s = np.clip(s, 0.0, None)
    keep = s > 0
    scale = 1.0 - config.alpha
    if not np.any(keep):
        return ThroughputReport(0.0, "monte_carlo", trials, 0.0)
    values = np.empty(trials)
    for start, G in gaussian_columns(config.N, n_active, trials, seed):
        Gk = G[:, :, keep]
        W = np.einsum("bnm,bnk->bmk", Gk.conj(), Gk)
        values[start : start + G.shape[0]] = _logdet_bits(W, s[keep])
    values *= scale
    rate = float(np.mean(values))
    ci = float(1.96 * np.std(values, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ThroughputReport(max(rate, 0.0), "monte_carlo", trials, ci)


@dataclass(frozen=True)
class MPSupport:
    a: float
    b: float
    regime: str


def mp_support(beta, omega, alpha):
    """Spectral edges; the ratio becomes ``alpha*beta/omega`` once training is
    shorter than the user count (``omega > alpha``)."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    if omega <= alpha:
        ratio, regime = beta, "omega_le_alpha"
    else:
        ratio, regime = alpha * beta / omega, "omega_gt_alpha"
    root = math.sqrt(ratio)
    return MPSupport((1.0 - root) ** 2, (1.0 + root) ** 2, regime)


def mp_density(lam, beta, omega, alpha):
    """``sqrt((lam - a)+ (b - lam)+) / (2 pi lam)`` on the support, 0 elsewhere.

    This is the nonzero-eigenvalue part of the spectrum of ``G G^H / N``; its
    mass is ``min(1, ratio)`` (1 at ratio 1).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("density is defined for lambda > 0")
    sup = mp_support(beta, omega, alpha)
    inside = np.clip(lam - sup.a, 0, None) * np.clip(sup.b - lam, 0, None)
    out = np.sqrt(inside) / (2.0 * math.pi * lam)
    return out if out.ndim else float(out)


def _sin2_nodes(a, b, n):
    """Gauss-Legendre nodes and weights after ``lam = a + (b - a) sin^2 theta``,
    with the density's square-root factor folded into the weights."""
    x, w = np.polynomial.legendre.leggauss(n)
    theta = 0.25 * math.pi * (x + 1.0)
    wt = 0.25 * math.pi * w
    s2 = np.sin(theta) ** 2
    c2 = np.cos(theta) ** 2
    lam = a + (b - a) * s2
    # f(lam) dlam = (b-a)^2 sin^2 cos^2 / (pi lam) dtheta
    weight = wt * (b - a) ** 2 * s2 * c2 / (math.pi * lam)
    return lam, weight


def mp_integral(func, beta, omega, alpha, nodes=QUADRATURE_NODES):
    """``int func(lam) f(lam) dlam`` over the support."""
    sup = mp_support(beta, omega, alpha)
    lam, weight = _sin2_nodes(sup.a, sup.b, nodes)
    return float(np.sum(weight * func(lam)))


def asymptotic_rate(alpha, N, beta, omega, tau, nodes=QUADRATURE_NODES):
    """``(1 - alpha) N int log2(1 + tau N lam) f(lam) dlam``."""
    if tau <= 0:
        return 0.0
    integral = mp_integral(lambda lam: np.log2(1.0 + tau * N * lam), beta, omega, alpha, nodes)
    return (1.0 - alpha) * N * integral


def asymptotic_throughput(config, d, gamma, gamma_prime, K=None, nodes=QUADRATURE_NODES):
    """Large-system rate for co-located users with ``beta = K/N``, ``omega = K/T``."""
    from .power import tau as effective_snr

    K = config.K if K is None else int(K)
    t = effective_snr(config, d, gamma, gamma_prime, K)
    rate = asymptotic_rate(config.alpha, config.N, K / config.N, K / config.T, t, nodes)
    return ThroughputReport(max(rate, 0.0), "asymptotic", 0, None, {"tau": t})


def design_gains(config, fading, pilot, power):
    """Effective eigenvalues and noise power of an arbitrary pilot.

    Returns the eigenvalues of ``Xt^H D R_Xd D Xt`` (descending, length
    ``min(K, alpha*T)``) and ``sigma_v2 = tr((I - Xt Xt^H) D^2 R_Xd) + N0``.
    """
    from .power import EffectiveGains

    d = fading.d
    Xt = pilot.whitened if pilot.whitened is not None else whitened_pilot(pilot.Xp, d, config.N0)
    rxd = power.gamma_prime * config.P0
    Q = Xt.conj().T @ ((d**2 * rxd)[:, None] * Xt)
    lam = np.linalg.eigvalsh(0.5 * (Q + Q.conj().T))[::-1]
    lam = np.clip(lam[: min(config.K, config.n_pilot)], 0.0, None)
    noise = noise_power_from_whitened(Xt, d, power, config.P0, config.N0)
    return EffectiveGains(lam, noise.sigma_v2)


def evaluate_design(config, fading, pilot, power, trials=500, seed=0):
    """Monte Carlo rate of a concrete (pilot, power) design."""
    gains = design_gains(config, fading, pilot, power)
    report = mc_throughput(config, gains, trials=trials, seed=seed)
    report.provenance = {"pilot": pilot.kind, "sigma_v2": gains.sigma_v2}
    return report
