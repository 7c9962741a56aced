"""Pilot (training) matrix constructions.

Every builder takes a :class:`PilotDesignSpec` and returns a
:class:`~mimotrain.channel.PilotMatrix` of shape K x alpha*T.  Users with zero
training power or zero large-scale gain always get an all-zero pilot row.
"""

from dataclasses import dataclass

import numpy as np

from .channel import FadingProfile, PilotMatrix, PowerSplit, SystemConfig, _rng
from .errors import DimensionError, DomainError
from .majorization import min_majorizing_vector, schur_horn

KINDS = ("orthogonal", "upper_bound", "lower_bound", "uniform", "random")


@dataclass
class PilotDesignSpec:
    kind: str
    config: SystemConfig
    fading: FadingProfile
    power: PowerSplit

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown pilot kind {self.kind!r}; expected one of {KINDS}")
        K = self.config.K
        if self.fading.K != K or self.power.K != K:
            raise DimensionError(
                f"config has K={K} but fading has {self.fading.K} and power has {self.power.K} users"
            )

    @property
    def training_energy(self):
        """Diagonal of ``R_X``: ``alpha * gamma_k * P0 * T`` per user."""
        c = self.config
        return c.alpha * self.power.gamma * c.P0 * c.T


def _orthonormal_rows(n_rows, n_cols, seed):
    """``n_rows`` x ``n_cols`` matrix with orthonormal rows (QR of a Gaussian)."""
    rng = _rng(seed)
    Z = rng.standard_normal((n_cols, n_rows)) + 1j * rng.standard_normal((n_cols, n_rows))
    Q, R = np.linalg.qr(Z)
    # fix the phase ambiguity so the output is a deterministic function of the draw
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))[None, :]
    return Q.conj().T


def _build(spec, energy, seed, kind):
    K, L = spec.config.K, spec.config.n_pilot
    energy = np.where(spec.fading.d > 0, energy, 0.0)
    live = np.flatnonzero(energy > 0)
    if live.size > L:
        raise DimensionError(f"{live.size} orthogonal rows do not fit in {L} pilot symbols")
    Xp = np.zeros((K, L), dtype=complex)
    if live.size:
        Xp[live] = np.sqrt(energy[live])[:, None] * _orthonormal_rows(live.size, L, seed)
    return PilotMatrix(Xp, kind=kind)


def pilot_orthogonal(spec, seed=0):
    """Row-orthogonal pilot with ``Xp Xp^H = R_X`` (needs K <= alpha*T)."""
    if spec.config.K > spec.config.n_pilot:
        raise DomainError(f"orthogonal pilots need K <= alpha*T (K={spec.config.K}, alpha*T={spec.config.n_pilot})")
    return _build(spec, spec.training_energy, seed, "orthogonal")


def pilot_lower_bound(spec, seed=0):
    """Orthogonal pilots for the ``alpha*T`` strongest users, zero rows for the rest."""
    energy = spec.training_energy.copy()
    L = spec.config.n_pilot
    energy[L:] = 0.0
    pilot = _build(spec, energy, seed, "lower_bound")
    return pilot


def upper_bound_target(config, d, power):
    """Diagonal of ``R_Xd D^4 R_X (N0 I + D^2 R_X)^{-1}`` (one entry per user)."""
    d = np.asarray(d, dtype=float)
    rx = config.alpha * power.gamma * config.P0 * config.T
    return power.gamma_prime * config.P0 * d**4 * rx / (config.N0 + d**2 * rx)


def pilot_upper_bound(spec):
    """Pilot meeting both optimality conditions of the relaxed upper-bound problem.

    The matrix ``B = R_Xd^{1/2} D Xt Xt^H D R_Xd^{1/2}`` is synthesised with the
    target diagonal and the minimal majorizing spectrum (``K - alpha*T`` zeros),
    then unwound to ``Xt Xt^H`` and to a pilot by inverting the whitening map
    singular value by singular value.

    When some eigenvalue of ``Xt Xt^H`` reaches 1 no finite pilot produces it;
    the result then carries only the whitened matrix (``Xp is None``).
    """
    c = spec.config
    if c.K <= c.n_pilot:
        raise DomainError(f"upper-bound construction is for K > alpha*T (K={c.K}, alpha*T={c.n_pilot})")
    d = spec.fading.d
    target = upper_bound_target(c, d, spec.power)
    live = np.flatnonzero(target > 0)
    K, L = c.K, c.n_pilot
    whitened = np.zeros((K, L), dtype=complex)
    Xp = np.zeros((K, L), dtype=complex)
    if live.size == 0:
        return PilotMatrix(Xp, whitened, kind="upper_bound")

    zeros = max(live.size - L, 0)
    spectrum = min_majorizing_vector(target[live], zeros)
    B = schur_horn(spectrum, target[live])
    scale = 1.0 / (d[live] * np.sqrt(spec.power.gamma_prime[live] * c.P0))
    P = scale[:, None] * B * scale[None, :]
    P = 0.5 * (P + P.T)
    w, U = np.linalg.eigh(P)
    top = np.argsort(w)[::-1][: min(L, live.size)]
    w = np.clip(w[top], 0.0, None)
    U = U[:, top]
    whitened[np.ix_(live, np.arange(w.size))] = U * np.sqrt(w)[None, :]
    if np.any(w >= 1.0 - 1e-12):
        return PilotMatrix(None, whitened, kind="upper_bound")
    sv = np.sqrt(c.N0 * w / (1.0 - w))
    Xp[np.ix_(live, np.arange(w.size))] = (U * sv[None, :]) / d[live][:, None]
    return PilotMatrix(Xp, whitened, kind="upper_bound")


def _dft(n):
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def pilot_uniform(spec):
    """Optimal pilot for co-located users with a common training power.

    K <= alpha*T: scaled orthonormal DFT rows.  K > alpha*T: ``alpha*T`` columns
    of the K-point unitary DFT, scaled so columns have energy ``gamma P0 K``
    and rows ``alpha gamma P0 T``.
    """
    c = spec.config
    if not spec.fading.is_uniform() or not np.allclose(spec.power.gamma, spec.power.gamma[0], rtol=1e-12, atol=0):
        raise DomainError("uniform pilot needs equal large-scale gains and equal training powers")
    g = float(spec.power.gamma[0])
    K, L = c.K, c.n_pilot
    if K <= L:
        Xp = np.sqrt(c.alpha * g * c.P0 * c.T) * _dft(L)[:K]
    else:
        Xp = np.sqrt(g * c.P0 * K) * _dft(K)[:, :L]
    if spec.fading.d[0] == 0:
        Xp = np.zeros_like(Xp)
    return PilotMatrix(Xp, kind="uniform")


def pilot_random(spec, seed=None):
    """Gaussian pilot with every row rescaled to its exact training energy."""
    c = spec.config
    rng = _rng(seed)
    energy = np.where(spec.fading.d > 0, spec.training_energy, 0.0)
    K, L = c.K, c.n_pilot
    Xp = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) / np.sqrt(2.0)
    norms = np.linalg.norm(Xp, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        Xp[bad] = (rng.standard_normal((bad.sum(), L)) + 1j * rng.standard_normal((bad.sum(), L))) / np.sqrt(2.0)
        norms = np.linalg.norm(Xp, axis=1)
    Xp = Xp * (np.sqrt(energy) / norms)[:, None]
    return PilotMatrix(Xp, kind="random")


def build_pilot(spec, seed=0):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "orthogonal":
        return pilot_orthogonal(spec, seed)
    if spec.kind == "upper_bound":
        return pilot_upper_bound(spec)
    if spec.kind == "lower_bound":
        return pilot_lower_bound(spec, seed)
    if spec.kind == "uniform":
        return pilot_uniform(spec)
    return pilot_random(spec, seed)
