import numpy as np
import pytest

from mimotrain import ConvergenceError, DomainError, FadingProfile, PowerSplit, SystemConfig
from mimotrain.power import (
    effective_gains,
    gamma_highsnr,
    gamma_uniform_opt,
    noise_power,
    solve_power_kgt,
    solve_power_kleq,
    tau,
    user_gains,
)

from . import oracles


def test_user_gain_example():
    # alpha gamma rho0 d^2 T = 1 gives lambda = rho0 / 2 = 1/2 at P0 = N0 = 1
    cfg = SystemConfig(N=4, K=1, T=10, alpha=0.1)
    one = np.ones(1)
    assert user_gains(cfg, one, one, one)[0] == pytest.approx(0.5)
    assert noise_power(cfg, one, one, one) == pytest.approx(1.5)


def test_effective_gains_orthogonal_and_majorized():
    cfg = SystemConfig(N=4, K=2, T=10, alpha=0.2)
    p = PowerSplit.from_gamma(np.array([2.0, 1.0]), 0.2)
    g = effective_gains(cfg, FadingProfile(np.array([1.0, 0.5])), p)
    want = user_gains(cfg, np.array([1.0, 0.5]), p.gamma, p.gamma_prime)
    np.testing.assert_allclose(g.lambdas, np.sort(want)[::-1])
    # four equal users on two pilot symbols: two slots of twice the gain
    cfg = SystemConfig(N=4, K=4, T=10, alpha=0.2)
    p = PowerSplit.uniform(4, 1.0, 1.0)
    g = effective_gains(cfg, FadingProfile.uniform(4), p)
    lam = user_gains(cfg, np.ones(1), np.ones(1), np.ones(1))[0]
    np.testing.assert_allclose(g.lambdas, [2 * lam, 2 * lam, 0, 0], atol=1e-12)


def test_gamma_highsnr_examples():
    cfg = SystemConfig(N=8, K=2, T=20, alpha=0.2, N0=1e-6)
    np.testing.assert_allclose(gamma_highsnr(cfg, 2).gamma, 1.306019, rtol=1e-6)
    half = SystemConfig(N=8, K=10, T=20, alpha=0.5, N0=1e-6)
    np.testing.assert_allclose(gamma_highsnr(half, 10).gamma, 1.0)
    many = SystemConfig(N=8, K=150, T=200, alpha=0.5, N0=1e-6)
    p = gamma_highsnr(many, 150)
    assert p.active.sum() == 100 and np.all(p.gamma[100:] == 0)
    with pytest.raises(DomainError):
        gamma_highsnr(cfg, 0)


def test_gamma_uniform_opt_examples():
    # mu = 0 whenever K = (1 - alpha) T and the orthogonal branch applies
    cfg = SystemConfig(N=4, K=8, T=20, alpha=0.6, N0=0.3)
    assert gamma_uniform_opt(cfg, np.ones(8)) == pytest.approx(1 / 1.2)
    cfg = SystemConfig(N=4, K=12, T=20, alpha=0.5, N0=0.3)
    assert gamma_uniform_opt(cfg, np.ones(12)) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        gamma_uniform_opt(cfg, np.linspace(1, 2, 12))


def test_gamma_uniform_opt_is_grid_maximum():
    rng = np.random.default_rng(0)
    for _ in range(30):
        T = int(rng.integers(10, 60))
        alpha = int(rng.integers(1, T)) / T
        K = int(rng.integers(1, 2 * T))
        cfg = SystemConfig(N=1, K=K, T=T, alpha=alpha, N0=10 ** rng.uniform(-3, 1))
        d = np.full(K, rng.uniform(0.2, 2))
        g = gamma_uniform_opt(cfg, d)
        best = tau(cfg, d, g, (1 - alpha * g) / (1 - alpha))
        grid = np.linspace(0, 1 / alpha, 4001)
        vals = tau(cfg, d, grid, (1 - alpha * grid) / (1 - alpha))
        assert best >= vals.max() - np.max(np.abs(np.diff(vals)))


def test_tau_matches_oracle_and_is_continuous():
    # frozen: oracles.tau_direct(0.5, 100, 1, 1, 1, 1) = 25/26
    cfg = SystemConfig(N=1, K=1, T=100, alpha=0.5)
    assert tau(cfg, [1.0], 1.0, 1.0) == pytest.approx(25 / 26)
    assert tau(cfg, [1.0], 1.0, 0.0) == 0.0
    rng = np.random.default_rng(1)
    for _ in range(50):
        T, alpha = 40, int(rng.integers(1, 40)) / 40
        K = int(rng.integers(1, 80))
        rho0, d, g = 10 ** rng.uniform(-1, 3), rng.uniform(0.1, 2), rng.uniform(0, 1 / alpha)
        gp = (1 - alpha * g) / (1 - alpha)
        cfg = SystemConfig(N=1, K=K, T=T, alpha=alpha, N0=1 / rho0)
        assert tau(cfg, [d], g, gp) == pytest.approx(oracles.tau_direct(alpha, T, K, rho0 * d * d, g, gp), rel=1e-12)
    # both closed forms agree at K = alpha T
    assert oracles.tau_direct(0.2, 50, 10, 3.0, 1.5, 0.9) == pytest.approx(oracles.tau_direct(0.2, 50, 10 + 1e-9, 3.0, 1.5, 0.9))


def test_single_user_solver_matches_oracle():
    cfg = SystemConfig(N=8, K=1, T=100, alpha=0.2, N0=0.01)
    sol = solve_power_kleq(cfg, FadingProfile(np.array([0.7])))
    want = oracles.single_user_gamma(0.2, 100, 100, 0.7)  # 0.5064 on a 1e-4 grid
    assert sol.power.gamma[0] == pytest.approx(want, abs=2e-4)
    assert sol.kkt_residual <= 1e-6


def test_uniform_users_get_equal_power():
    cfg = SystemConfig(N=8, K=3, T=20, alpha=0.2, N0=0.1)
    g = solve_power_kleq(cfg, FadingProfile.uniform(3)).power.gamma
    assert np.ptp(g) <= 1e-6


def test_kleq_high_snr_matches_closed_form():
    cfg = SystemConfig(N=8, K=4, T=20, alpha=0.2, N0=1e-6)
    g = solve_power_kleq(cfg, FadingProfile.uniform(4)).power.gamma
    np.testing.assert_allclose(g, gamma_highsnr(cfg, 4).gamma, rtol=1e-2)


def test_kgt_uniform_high_snr_keeps_every_user():
    # the majorized gains reward spreading data power over all K users, so the
    # relaxed optimum is the closed form with K users, above the alpha*T design
    cfg = SystemConfig(N=8, K=8, T=20, alpha=0.2, N0=1e-6)
    sol = solve_power_kgt(cfg, FadingProfile.uniform(8))
    want = 1 / (0.2 * (1 + np.sqrt(0.8 * 20 / 8)))
    np.testing.assert_allclose(sol.power.gamma, want, rtol=1e-2)
    from mimotrain.power import _PowerProblem

    prob = _PowerProblem(cfg, np.ones(8), 200, 0)
    pres = gamma_highsnr(cfg, 8)
    v = np.where(pres.active, prob.to_v(pres.gamma), 0.0)
    assert sol.objective > prob.rate(v)


def test_kleq_domain():
    with pytest.raises(DomainError):
        solve_power_kleq(SystemConfig(N=4, K=5, T=10, alpha=0.2), FadingProfile.uniform(5))
    with pytest.raises(DomainError):
        solve_power_kgt(SystemConfig(N=4, K=2, T=10, alpha=0.2), FadingProfile.uniform(2))


def test_kgt_disconnected_users_switched_off():
    cfg = SystemConfig(N=8, K=3, T=20, alpha=0.1, N0=0.1)
    p = solve_power_kgt(cfg, FadingProfile(np.array([1.0, 0.0, 0.0]))).power
    np.testing.assert_array_equal(p.active, [True, False, False])
    p.check_budget(cfg.alpha)


def test_kgt_beats_random_feasible_designs():
    cfg = SystemConfig(N=8, K=6, T=20, alpha=0.2, N0=0.1)
    fad = FadingProfile(np.array([1.0, 0.8, 0.6, 0.5, 0.3, 0.1]))
    sol = solve_power_kgt(cfg, fad)
    from mimotrain.throughput import GramBatch

    batch = GramBatch(cfg.N, cfg.n_pilot, 200, 0)

    def rate(p):
        g = effective_gains(cfg, fad, p)
        return (1 - cfg.alpha) * batch.value(g.snr[: cfg.n_pilot])

    best = rate(sol.power)
    rng = np.random.default_rng(4)
    for _ in range(200):
        p = PowerSplit.from_gamma(rng.uniform(0, 1 / cfg.alpha, cfg.K), cfg.alpha)
        assert rate(p) <= best + 1e-9


def test_convergence_error_carries_best_point():
    cfg = SystemConfig(N=8, K=6, T=20, alpha=0.2, N0=0.1)
    fad = FadingProfile(np.array([1.0, 0.8, 0.6, 0.5, 0.3, 0.1]))
    with pytest.raises(ConvergenceError) as err:
        solve_power_kgt(cfg, fad, max_iter=1, t_points=2)
    assert err.value.best is not None
