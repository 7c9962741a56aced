"""Pilot, power and user-count design for training-based multi-user MIMO uplinks."""

from .channel import FadingProfile, PilotMatrix, PowerSplit, SystemConfig, sample_scenario
from .errors import ConvergenceError, DimensionError, DomainError, NumericError, SpecError
from .majorization import majorizes, min_majorizing_vector, schur_horn
from .optimizer import (
    DesignPoint,
    lower_bound_pipeline,
    optimal_k_uniform,
    optimize_uniform,
    select_users,
    upper_bound_pipeline,
)
from .pilots import PilotDesignSpec, build_pilot
from .power import EffectiveGains, effective_gains, gamma_highsnr, gamma_uniform_opt, solve_power_kgt, solve_power_kleq, tau
from .throughput import ThroughputReport, asymptotic_throughput, evaluate_design, mc_throughput, mp_density

__version__ = "0.1.0"
