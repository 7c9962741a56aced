import math

import numpy as np
import pytest
from scipy.special import expi

from mimotrain import DomainError, FadingProfile, PowerSplit, SystemConfig
from mimotrain.channel import PilotMatrix
from mimotrain.pilots import PilotDesignSpec, pilot_orthogonal
from mimotrain.power import EffectiveGains, effective_gains
from mimotrain.throughput import (
    GramBatch,
    ThroughputReport,
    asymptotic_throughput,
    design_gains,
    evaluate_design,
    mc_throughput,
    mp_density,
    mp_integral,
    mp_support,
)

from . import oracles

CFG = SystemConfig(N=4, K=2, T=10, alpha=0.2)


def test_mc_zero_gains_give_zero():
    r = mc_throughput(CFG, EffectiveGains(np.zeros(2), 1.0), trials=50)
    assert r.rate == 0.0 and r.ci == 0.0


def test_mc_huge_noise_gives_nearly_zero():
    r = mc_throughput(CFG, EffectiveGains(np.ones(2), 1e18), trials=50)
    assert r.rate < 1e-9


def test_mc_single_stream_closed_form():
    # E log2(1 + s |g|^2) for one antenna; |g|^2 ~ Exp(1)
    cfg = SystemConfig(N=1, K=1, T=10, alpha=0.1)
    r = mc_throughput(cfg, EffectiveGains(np.array([2.0]), 1.0), trials=20000, seed=3)
    exact = 0.9 * math.exp(0.5) * -expi(-0.5) / math.log(2)
    assert abs(r.rate - exact) < 3 * r.ci


def test_mc_deterministic_and_validated():
    g = EffectiveGains(np.array([1.0, 0.5]), 0.2)
    a, b = mc_throughput(CFG, g, trials=300, seed=9), mc_throughput(CFG, g, trials=300, seed=9)
    assert a.rate == b.rate
    with pytest.raises(DomainError):
        mc_throughput(CFG, g, trials=0)
    with pytest.raises(DomainError):
        mc_throughput(CFG, g, n_active=3)


def test_report_json_and_ci_rules():
    r = ThroughputReport(1.5, "monte_carlo", 10, 0.1)
    assert ThroughputReport.from_json(r.to_json()) == r
    with pytest.raises(DomainError):
        ThroughputReport(1.0, "monte_carlo", 10, None)
    with pytest.raises(DomainError):
        ThroughputReport(1.0, "asymptotic", 0, 0.1)
    with pytest.raises(DomainError):
        ThroughputReport(float("nan"), "asymptotic")


def test_gram_batch_gradient():
    batch = GramBatch(4, 3, draws=50, seed=1)
    s = np.array([0.5, 1.2, 0.1])
    _, grad = batch.value_and_grad(s)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (batch.value(s + e) - batch.value(s - e)) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-5)


def test_mp_density_examples():
    # frozen from oracles.mp_density(1, 1)
    assert mp_density(1.0, 1.0, 0.25, 0.5) == pytest.approx(0.27566444771)
    assert mp_density(1.0, 1.0, 0.25, 0.5) == pytest.approx(oracles.mp_density(1.0, 1.0))
    sup = mp_support(0.25, 0.1, 0.5)
    assert (sup.a, sup.b) == pytest.approx((0.25, 2.25))
    assert mp_density(3.0, 0.25, 0.1, 0.5) == 0.0
    assert mp_support(1.0, 0.8, 0.5).regime == "omega_gt_alpha"
    with pytest.raises(DomainError):
        mp_density(0.0, 1.0, 0.25, 0.5)


@pytest.mark.parametrize("beta, omega, alpha, mass", [(1.0, 0.25, 0.5, 1.0), (0.5, 0.2, 0.5, 0.5), (2.0, 0.2, 0.5, 1.0), (1.0, 0.8, 0.5, 0.625)])
def test_mp_mass(beta, omega, alpha, mass):
    assert mp_integral(np.ones_like, beta, omega, alpha) == pytest.approx(mass, abs=1e-9)


def test_asymptotic_examples():
    cfg = SystemConfig(N=50, K=10, T=100, alpha=0.2)
    assert asymptotic_throughput(cfg, np.ones(10), 1.0, 0.0).rate == 0.0
    small = asymptotic_throughput(cfg, np.ones(10), 1.0, 1.0)
    big = asymptotic_throughput(cfg.replace(N=100, K=20), np.ones(20), 1.0, 1.0)
    assert big.rate > small.rate > 0
    assert small.provenance["tau"] > 0 and small.ci is None


def test_zero_pilot_design():
    power = PowerSplit.uniform(2, 1.0, 1.0)
    pilot = PilotMatrix(np.zeros((2, 2)), kind="random")
    gains = design_gains(CFG, FadingProfile.uniform(2), pilot, power)
    assert np.all(gains.lambdas == 0)
    assert gains.sigma_v2 == pytest.approx(2.0 + CFG.N0)
    assert evaluate_design(CFG, FadingProfile.uniform(2), pilot, power, trials=20).rate == 0.0


def test_orthogonal_design_matches_closed_form_gains():
    cfg = SystemConfig(N=4, K=2, T=20, alpha=0.2, N0=0.3)
    fad = FadingProfile(np.array([1.0, 0.4]))
    power = PowerSplit.from_gamma(np.array([1.5, 2.0]), cfg.alpha)
    pilot = pilot_orthogonal(PilotDesignSpec("orthogonal", cfg, fad, power), seed=1)
    a = design_gains(cfg, fad, pilot, power)
    b = effective_gains(cfg, fad, power)
    np.testing.assert_allclose(a.lambdas, b.lambdas, rtol=1e-10)
    assert a.sigma_v2 == pytest.approx(b.sigma_v2)
    r1 = evaluate_design(cfg, fad, pilot, power, trials=200, seed=2)
    r2 = mc_throughput(cfg, b, trials=200, seed=2)
    assert r1.rate == pytest.approx(r2.rate, rel=1e-10)
