"""System model of a training-based multiuser MIMO uplink.

An N-antenna base station serves K single-antenna users over blocks of T
symbols.  The first ``alpha*T`` symbols carry pilots ``Xp`` (K x alpha*T); the
remainder carry data.  Large-scale gains ``d`` (sorted descending) are known at
the receiver, the small-scale matrix ``H`` (N x K, i.i.d. CN(0,1)) is estimated
by linear MMSE from ``Yp = H diag(d) Xp + Wp``.

Gram-type matrices ``Xp^H D^2 Xp + N0 I`` are inverted and square-rooted through
their eigendecomposition; ``N0 > 0`` keeps them well conditioned.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

_INTEGER_TOL = 1e-9


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions, time split and powers of one system instance.

    ``alpha*T`` must be an integer number of pilot symbols; ``rho0 = P0/N0``
    is derived on access.
    """

    N: int
    K: int
    T: int
    alpha: float
    P0: float = 1.0
    N0: float = 1.0

    def __post_init__(self):
        for name in ("N", "K", "T"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        pilots = self.alpha * self.T
        if abs(pilots - round(pilots)) > _INTEGER_TOL * max(1.0, pilots) or round(pilots) < 1:
            raise DomainError(f"alpha*T = {pilots} is not a positive integer")
        if round(pilots) >= self.T:
            raise DomainError("alpha*T must leave at least one data symbol")
        if not (self.P0 > 0 and self.N0 > 0):
            raise DomainError("P0 and N0 must be positive")

    @classmethod
    def from_db(cls, N, K, T, alpha, rho0_db, P0=1.0):
        """Build a config from an SNR in dB, keeping ``P0`` and scaling ``N0``."""
        return cls(N=N, K=K, T=T, alpha=alpha, P0=P0, N0=P0 / float(db_to_linear(rho0_db)))

    @property
    def rho0(self):
        return self.P0 / self.N0

    @property
    def n_pilot(self):
        """Training length ``alpha*T`` in symbols."""
        return int(round(self.alpha * self.T))

    @property
    def n_data(self):
        return self.T - self.n_pilot

    def replace(self, **changes):
        values = {f: getattr(self, f) for f in ("N", "K", "T", "alpha", "P0", "N0")}
        values.update(changes)
        return SystemConfig(**values)


@dataclass(frozen=True)
class FadingProfile:
    """Large-scale gains sorted descending, with optional user radii in metres."""

    d: np.ndarray
    positions: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if d.size == 0:
            raise DimensionError("fading profile needs at least one user")
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise DomainError("large-scale gains must be finite and nonnegative")
        if np.any(np.diff(d) > 0):
            raise DomainError("large-scale gains must be sorted in descending order")
        object.__setattr__(self, "d", d)
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float).reshape(-1)
            if pos.shape != d.shape:
                raise DimensionError("positions must match d in length")
            object.__setattr__(self, "positions", pos)

    @classmethod
    def uniform(cls, K, d=1.0):
        return cls(np.full(int(K), float(d)))

    @classmethod
    def from_gains(cls, gains, positions=None):
        """Sort arbitrary gains descending (stable), carrying positions along."""
        gains = np.asarray(gains, dtype=float)
        order = np.argsort(-gains, kind="stable")
        pos = None if positions is None else np.asarray(positions, dtype=float)[order]
        return cls(gains[order], pos)

    @property
    def K(self):
        return self.d.size

    def head(self, k):
        """Profile restricted to the ``k`` strongest users."""
        pos = None if self.positions is None else self.positions[:k]
        return FadingProfile(self.d[:k], pos)

    def is_uniform(self, rtol=1e-12):
        return bool(np.allclose(self.d, self.d[0], rtol=rtol, atol=0.0))


@dataclass
class PowerSplit:
    """Per-user power coefficients for the training (``gamma``) and data
    (``gamma_prime``) phases.

    Inactive users carry zeros in both phases.
    """

    gamma: np.ndarray
    gamma_prime: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        self.gamma_prime = np.asarray(self.gamma_prime, dtype=float).reshape(-1)
        if self.gamma.shape != self.gamma_prime.shape:
            raise DimensionError("gamma and gamma_prime must have equal length")
        if np.any(self.gamma < 0) or np.any(self.gamma_prime < 0):
            raise DomainError("power coefficients must be nonnegative")
        if self.active is None:
            self.active = (self.gamma > 0) | (self.gamma_prime > 0)
        self.active = np.asarray(self.active, dtype=bool).reshape(-1)
        if self.active.shape != self.gamma.shape:
            raise DimensionError("active flags must match gamma in length")
        if np.any(self.gamma[~self.active] != 0) or np.any(self.gamma_prime[~self.active] != 0):
            raise DomainError("inactive users must have zero power in both phases")

    @classmethod
    def from_gamma(cls, gamma, alpha, active=None):
        """Spend the full energy budget: ``gamma' = (1 - alpha*gamma)/(1 - alpha)``."""
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        if active is None:
            active = np.ones(gamma.size, dtype=bool)
        active = np.asarray(active, dtype=bool)
        gamma = np.where(active, np.clip(gamma, 0.0, 1.0 / alpha), 0.0)
        gamma_prime = np.where(active, np.maximum((1.0 - alpha * gamma) / (1.0 - alpha), 0.0), 0.0)
        return cls(gamma, gamma_prime, active)

    @classmethod
    def uniform(cls, K, gamma, gamma_prime):
        return cls(np.full(K, float(gamma)), np.full(K, float(gamma_prime)))

    @property
    def K(self):
        return self.gamma.size

    @property
    def n_active(self):
        return int(np.count_nonzero(self.active))

    def check_budget(self, alpha, tol=1e-9):
        """Raise unless ``alpha*gamma + (1-alpha)*gamma' <= 1`` for every user."""
        spent = alpha * self.gamma + (1.0 - alpha) * self.gamma_prime
        if np.any(spent > 1.0 + tol):
            worst = int(np.argmax(spent))
            raise DomainError(f"user {worst} exceeds its energy budget ({spent[worst]:.12g} > 1)")

    def embed(self, index, K):
        """Place this split at positions ``index`` of a length-``K`` split."""
        g = np.zeros(K)
        gp = np.zeros(K)
        act = np.zeros(K, dtype=bool)
        g[index] = self.gamma
        gp[index] = self.gamma_prime
        act[index] = self.active
        return PowerSplit(g, gp, act)

    def to_dict(self):
        return {
            "gamma": self.gamma.tolist(),
            "gamma_prime": self.gamma_prime.tolist(),
            "active": self.active.tolist(),
        }


@dataclass
class PilotMatrix:
    """Training matrix ``Xp`` (K x alpha*T).

    ``whitened`` optionally holds the whitened pilot directly.  Upper-bound
    designs may only exist in whitened form (``Xp`` is then ``None``).
    """

    Xp: np.ndarray | None
    whitened: np.ndarray | None = None
    kind: str = "custom"

    def __post_init__(self):
        if self.Xp is None and self.whitened is None:
            raise DimensionError("pilot needs Xp or its whitened form")
        if self.Xp is not None:
            self.Xp = np.asarray(self.Xp, dtype=complex)
            if self.Xp.ndim != 2:
                raise DimensionError("Xp must be a matrix")

    @property
    def shape(self):
        return (self.Xp if self.Xp is not None else self.whitened).shape

    @property
    def row_powers(self):
        """Per-symbol training power of each user, ``||x_k||^2 / (alpha T)``."""
        if self.Xp is None:
            return None
        return np.sum(np.abs(self.Xp) ** 2, axis=1) / self.Xp.shape[1]

    @property
    def gram(self):
        return self.Xp @ self.Xp.conj().T

    def to_json(self):
        """Row-major dump with interleaved real/imaginary parts."""
        out = {"kind": self.kind, "shape": list(self.shape)}
        if self.Xp is not None:
            out["data"] = _interleave(self.Xp)
        if self.whitened is not None:
            out["whitened"] = _interleave(self.whitened)
        return out

    @classmethod
    def from_json(cls, obj):
        shape = tuple(obj["shape"])
        Xp = _deinterleave(obj["data"], shape) if "data" in obj else None
        wt = _deinterleave(obj["whitened"], shape) if "whitened" in obj else None
        return cls(Xp, wt, obj.get("kind", "custom"))


def _interleave(a):
    a = np.asarray(a, dtype=complex).reshape(-1)
    return np.column_stack([a.real, a.imag]).reshape(-1).tolist()


def _deinterleave(values, shape):
    arr = np.asarray(values, dtype=float).reshape(-1, 2)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


@dataclass(frozen=True)
class NoiseModel:
    """Equivalent data-phase noise power (noise plus estimation error leakage)."""

    sigma_v2: float


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_scenario(K, radius_m=100.0, seed=None, path_loss_exponent=4.0):
    """Drop ``K`` users uniformly over a disk and return their sorted gains.

    Radii follow ``radius * sqrt(u)`` with ``u`` uniform on (0, 1]; the
    amplitude gain is ``r**(-exponent/2)`` (``r**-2`` for exponent 4).
    """
    if int(K) != K or K < 1:
        raise DomainError(f"K must be a positive integer, got {K!r}")
    if not radius_m > 0:
        raise DomainError("radius must be positive")
    rng = _rng(seed)
    u = 1.0 - rng.random(int(K))
    r = radius_m * np.sqrt(u)
    return FadingProfile.from_gains(r ** (-path_loss_exponent / 2.0), positions=r)


def sample_small_scale(N, K, seed=None):
    """N x K matrix of i.i.d. standard circular complex Gaussians."""
    rng = _rng(seed)
    return (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))) / math.sqrt(2.0)


def _as_gains(D, K=None):
    d = np.asarray(D)
    if d.ndim == 2:
        if d.shape[0] != d.shape[1]:
            raise DimensionError("D must be square")
        d = np.diag(d)
    d = np.asarray(d, dtype=float).reshape(-1)
    if K is not None and d.size != K:
        raise DimensionError(f"D has {d.size} users but the pilot has {K} rows")
    return d


def _received_gram(Xp, d, N0):
    """Eigendecomposition of ``Xp^H D^2 Xp + N0 I``."""
    if not N0 > 0:
        raise DomainError("N0 must be positive")
    DX = d[:, None] * Xp
    C = DX.conj().T @ DX
    C = 0.5 * (C + C.conj().T) + N0 * np.eye(Xp.shape[1])
    w, V = np.linalg.eigh(C)
    return w, V


def _check_pilot(Xp, D):
    Xp = np.asarray(Xp, dtype=complex)
    if Xp.ndim != 2:
        raise DimensionError("Xp must be a K x alpha*T matrix")
    return Xp, _as_gains(D, Xp.shape[0])


def mmse_estimate(Yp, Xp, D, N0):
    """Linear MMSE estimate ``Yp (Xp^H D^2 Xp + N0 I)^{-1} Xp^H D``."""
    Xp, d = _check_pilot(Xp, D)
    Yp = np.asarray(Yp, dtype=complex)
    if Yp.ndim != 2 or Yp.shape[1] != Xp.shape[1]:
        raise DimensionError(f"Yp shape {Yp.shape} does not match pilot length {Xp.shape[1]}")
    w, V = _received_gram(Xp, d, N0)
    Cinv = (V / w) @ V.conj().T
    return Yp @ Cinv @ (Xp.conj().T * d[None, :])


def mmse_error_matrix(Xp, D, N0):
    """K x K error covariance ``I - D Xp (Xp^H D^2 Xp + N0 I)^{-1} Xp^H D``."""
    Xp, d = _check_pilot(Xp, D)
    w, V = _received_gram(Xp, d, N0)
    DX = d[:, None] * Xp
    M = np.eye(Xp.shape[0]) - DX @ ((V / w) @ V.conj().T) @ DX.conj().T
    return 0.5 * (M + M.conj().T)


def whitened_pilot(Xp, D, N0):
    """``D Xp (Xp^H D^2 Xp + N0 I)^{-1/2}`` with the PSD square root."""
    Xp, d = _check_pilot(Xp, D)
    w, V = _received_gram(Xp, d, N0)
    inv_sqrt = (V / np.sqrt(w)) @ V.conj().T
    return (d[:, None] * Xp) @ inv_sqrt


def equivalent_noise_power(error_matrix, D, power, P0, N0):
    """``tr(M D^2 R_Xd) + N0`` with ``R_Xd = diag(gamma' P0)``."""
    M = np.asarray(error_matrix)
    K = M.shape[0]
    if M.shape != (K, K):
        raise DimensionError("error matrix must be square")
    d = _as_gains(D, K)
    if power.K != K:
        raise DimensionError("power split does not match the number of users")
    leak = np.real(np.diag(M)) * d**2 * power.gamma_prime * P0
    return NoiseModel(float(np.sum(leak) + N0))


def noise_power_from_whitened(whitened, D, power, P0, N0):
    """Equivalent noise power computed from a whitened pilot."""
    Xt = np.asarray(whitened)
    M = np.eye(Xt.shape[0]) - Xt @ Xt.conj().T
    return equivalent_noise_power(M, D, power, P0, N0)


def noise_power_closed_form(config, d, power):
    """Equivalent noise power under row-orthogonal (or bound-optimal) pilots:
    ``sum_k gamma'_k d_k^2 P0 / (1 + alpha gamma_k rho0 d_k^2 T) + N0``."""
    d = np.asarray(d, dtype=float)
    snr_train = config.alpha * power.gamma * config.rho0 * d**2 * config.T
    leak = power.gamma_prime * d**2 * config.P0 / (1.0 + snr_train)
    return float(np.sum(leak) + config.N0)
