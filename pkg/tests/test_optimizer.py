import numpy as np
import pytest

from mimotrain import DomainError, FadingProfile, SystemConfig, select_users
from mimotrain.optimizer import (
    alpha_grid,
    bound_pipelines,
    load_equation,
    load_root,
    lower_bound_pipeline,
    optimal_k_uniform,
    optimize_uniform,
    random_pilot_pipeline,
    uniform_tau,
)

from . import oracles


def test_select_users():
    f = FadingProfile(np.array([3.0, 2.0, 1.0, 0.5]))
    np.testing.assert_array_equal(select_users(f, 0.2, 10, 4), [0, 1])
    np.testing.assert_array_equal(select_users(f, 0.5, 10, 3), [0, 1, 2])


def test_alpha_grid():
    assert alpha_grid(10) == pytest.approx([j / 10 for j in range(1, 10)])
    assert alpha_grid(100, 0.05, 0.5, 5)[:3] == pytest.approx([0.05, 0.1, 0.15])
    with pytest.raises(DomainError):
        alpha_grid(10, 0.95, 0.99)


def test_load_equation_half():
    # at alpha = 1/2 the condition collapses to 1 - x^2, so x* = 1
    for x in (0.1, 0.3, 2.0):
        assert load_equation(x, 0.5) == pytest.approx(1 - x * x)
    assert load_root(0.5) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        load_root(1.0)


@pytest.mark.parametrize("rho0, want", [(1.0, 100), (0.005, 200)])
def test_optimal_k_examples(rho0, want):
    # frozen from oracles.best_k_by_sweep(0.5, 200, rho0, ...)
    assert optimal_k_uniform(0.5, 200, rho0, 1.0) == want


def test_optimal_k_matches_sweep_oracle():
    rng = np.random.default_rng(7)
    for _ in range(4):
        T = int(rng.integers(10, 40))
        alpha = int(rng.integers(1, T)) / T
        x = 10 ** rng.uniform(-1.5, 0.5)
        k = optimal_k_uniform(alpha, T, x, 1.0)
        assert k == oracles.best_k_by_sweep(alpha, T, x, 3 * T + 5) or np.isclose(
            uniform_tau(alpha, T, x, 1.0, k), uniform_tau(alpha, T, x, 1.0, oracles.best_k_by_sweep(alpha, T, x, 3 * T + 5)), rtol=1e-9
        )


def test_optimal_k_high_snr_is_alpha_t():
    for alpha in (0.2, 0.5, 0.8):
        assert abs(optimal_k_uniform(alpha, 100, 1e6, 1.0) - round(alpha * 100)) <= 1


def _scenario():
    cfg = SystemConfig.from_db(8, 6, 20, 0.1, 30)
    fad = FadingProfile(np.array([1.0, 0.8, 0.5, 0.4, 0.2, 0.1]))
    return cfg, fad


def test_bounds_sandwich_and_agree_when_few_users():
    cfg, fad = _scenario()
    alphas = [0.1, 0.2, 0.3, 0.4]
    upper, lower = bound_pipelines(cfg, fad, trials=300, seed=1, alphas=alphas, solver={"draws": 50, "t_points": 10})
    assert upper.rate.rate >= lower.rate.rate - np.hypot(upper.rate.ci, lower.rate.ci)
    lo = lower_bound_pipeline(cfg, fad, trials=300, seed=1, alphas=alphas, solver={"draws": 50, "t_points": 10})
    assert lo.rate.rate == pytest.approx(lower.rate.rate)
    # K <= alpha*T: both bounds are the same orthogonal design
    up, low = bound_pipelines(cfg, fad, trials=300, seed=1, alphas=[0.3], solver={"draws": 50, "t_points": 10})
    assert up.rate.rate == low.rate.rate and up.pilot_kind == "orthogonal"
    assert lower.n_active <= min(cfg.K, round(lower.alpha * cfg.T))


def test_random_pilot_baseline():
    cfg, fad = _scenario()
    point = random_pilot_pipeline(cfg, fad, trials=100, seed=0, alphas=[0.1, 0.2])
    assert point.pilot_kind == "random" and point.n_active == cfg.K
    assert point.rate.rate > 0


def test_optimize_uniform_methods():
    cfg = SystemConfig.from_db(50, 10, 100, 0.1, 10)
    alphas = alpha_grid(100, 0.05, 0.5, 5)
    mc = optimize_uniform(cfg, 1.0, trials=300, alphas=alphas)
    asym = optimize_uniform(cfg, 1.0, alphas=alphas, method="asymptotic")
    assert asym.rate.ci is None and mc.rate.ci > 0
    assert abs(asym.rate.rate - mc.rate.rate) / mc.rate.rate < 0.05
    assert mc.K_total == optimal_k_uniform(mc.alpha, 100, cfg.rho0, 1.0)
    with pytest.raises(DomainError):
        optimize_uniform(cfg, 1.0, method="exact")
