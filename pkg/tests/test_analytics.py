"""Integral loss-rate representation, decay-constant audits, asymptote fits."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from levyloss import (ConfigError, ExpNegative, ExpPositive, InsufficientDataError,
                      IntegralLossInputs, LevyModel, PeriodicBarrier, SimConfig,
                      StationaryHistogram, TwoSidedExp, constant_barrier_reference,
                      estimate_loss_rates, fit_asymptote, integral_loss_rate,
                      jump_loss_kernel, mm1_sawtooth_prefactor, run_replicas,
                      stationary_histogram)
from levyloss.analytics import _kernel_nu_integral

MM1 = LevyModel.mm1(1.0, 2.0)
SAW = PeriodicBarrier.sawtooth(1.0)


# ---- piecewise kernel ---------------------------------------------------------

def test_kernel_zero_jump():
    assert jump_loss_kernel(2.0, 0.0, 0.5, 4.0) == 0.0


def test_kernel_branch_continuity():
    rng = np.random.default_rng(71)
    for _ in range(200):
        kcap = rng.uniform(1.0, 6.0)
        z = rng.uniform(0.0, kcap * 0.5)
        x = rng.uniform(z, kcap)
        eps = 1e-9
        y_top = kcap - x
        mid = jump_loss_kernel(x, y_top - eps, z, kcap)
        top = jump_loss_kernel(x, y_top + eps, z, kcap)
        assert abs(top - mid) < 1e-6 * max(1.0, abs(mid))
        y_bot = -(x - z)
        mid = jump_loss_kernel(x, y_bot + eps, z, kcap)
        bot = jump_loss_kernel(x, y_bot - eps, z, kcap)
        assert abs(bot - mid) < 1e-6 * max(1.0, abs(mid))


@pytest.mark.parametrize("model", [
    LevyModel(drift=-1.0, intensity=1.0, jumps=ExpPositive(2.0)),
    LevyModel(drift=0.5, intensity=0.7, jumps=ExpNegative(1.4)),
    LevyModel(drift=-0.5, intensity=2.0, jumps=TwoSidedExp(0.4, 2.2, 1.6)),
])
def test_kernel_jump_integral_matches_quadrature(model):
    rng = np.random.default_rng(5)
    law = model.jumps
    for _ in range(5):
        kcap = rng.uniform(2.0, 5.0)
        z = rng.uniform(0.0, 1.0)
        x = rng.uniform(z, kcap)
        closed = _kernel_nu_integral(model, x, z, kcap)
        f = lambda y: jump_loss_kernel(x, y, z, kcap) * float(law.density(y))
        num = sum(quad(f, lo, hi, limit=400)[0]
                  for lo, hi in [(-np.inf, -(x - z)), (-(x - z), kcap - x),
                                 (kcap - x, np.inf)])
        assert closed == pytest.approx(model.intensity * num, rel=1e-7, abs=1e-10)


# ---- integral representation --------------------------------------------------

def _point_histogram(v_edges, a_edges, iv):
    nv = len(v_edges) - 1
    na = len(a_edges) - 1 if a_edges[-1] > a_edges[0] else 1
    joint = np.zeros((nv + 1, na))
    joint[iv, 0] = 1.0
    vm = joint.sum(axis=1)
    return StationaryHistogram(joint=joint, v_marginal=vm,
                               v_edges=v_edges, a_edges=a_edges)


def test_integral_rate_flat_barrier_reduction():
    # lam = 0, flat barrier: value reduces to E X_1 * mean/K + sigma^2/(2K)
    m = LevyModel(drift=-1.0, sigma=1.0)
    flat = PeriodicBarrier.flat()
    kcap = 2.0
    v_edges = np.linspace(0.0, kcap, 41)
    hist = _point_histogram(v_edges, np.array([0.0, 0.0]), iv=10)
    x_mid = 0.5 * (v_edges[10] + v_edges[11])
    got = integral_loss_rate(IntegralLossInputs(model=m, barrier=flat,
                                                buffer=kcap, histogram=hist))
    expected = m.mean_x1() * x_mid / kcap + m.sigma ** 2 / (2 * kcap)
    assert got == pytest.approx(expected, rel=1e-14)


def test_integral_rate_exact_for_flat_barrier_mm1():
    # with a constant barrier the level/flux decorrelation is exact, so the
    # formula must agree with Monte Carlo up to sampling noise
    flat = PeriodicBarrier.flat()
    cfg = SimConfig(buffer=3.0, horizon=50100.0, burn_in=100.0, seed=53,
                    replicas=8, workers=4)
    acc = run_replicas(MM1, flat, cfg)
    rep = estimate_loss_rates(MM1, flat, cfg, accumulators=acc)
    val = integral_loss_rate(IntegralLossInputs(
        model=MM1, barrier=flat, buffer=3.0, histogram=stationary_histogram(acc)))
    assert val == pytest.approx(rep.loss_rate, rel=0.10)


def test_integral_rate_undershoots_for_moving_barrier():
    # the moving-barrier correlation the formula ignores is positive, so the
    # formula falls well short of the Monte Carlo rate (see decisions ledger)
    cfg = SimConfig(buffer=4.0, horizon=25100.0, burn_in=100.0, seed=11,
                    replicas=8, workers=4)
    acc = run_replicas(MM1, SAW, cfg)
    rep = estimate_loss_rates(MM1, SAW, cfg, accumulators=acc)
    val = integral_loss_rate(IntegralLossInputs(
        model=MM1, barrier=SAW, buffer=4.0, histogram=stationary_histogram(acc)))
    assert val < rep.loss_rate - 3.0 * rep.loss_ci


def test_integral_rate_bin_refinement_stable():
    base = SimConfig(buffer=4.0, horizon=25100.0, burn_in=100.0, seed=61,
                     replicas=4, workers=4, v_bins=200, a_bins=40)
    fine = SimConfig(buffer=4.0, horizon=25100.0, burn_in=100.0, seed=61,
                     replicas=4, workers=4, v_bins=400, a_bins=80)
    vals = []
    for cfg in (base, fine):
        acc = run_replicas(MM1, SAW, cfg)
        vals.append(integral_loss_rate(IntegralLossInputs(
            model=MM1, barrier=SAW, buffer=4.0,
            histogram=stationary_histogram(acc))))
    # same paths, doubled resolution: the evaluation itself is converged
    assert vals[1] == pytest.approx(vals[0], abs=0.02 * abs(vals[0]) + 2e-4)


def test_integral_rate_rejects_small_buffer():
    hist = _point_histogram(np.linspace(0, 2, 11), np.array([0.0, 0.0]), 5)
    with pytest.raises(ConfigError):
        IntegralLossInputs(model=MM1, barrier=SAW, buffer=0.5, histogram=hist)


# ---- decay-constant audit ------------------------------------------------------

def test_prefactor_product_form_value():
    audit = mm1_sawtooth_prefactor(1.0, 2.0, 1.0)
    assert audit.gamma == 1.0
    assert audit.product_form == pytest.approx((math.e - 1.0) / 4.0, rel=1e-12)


def test_prefactor_routes_agree_at_unit_gamma():
    audit = mm1_sawtooth_prefactor(1.0, 2.0, 1.0)
    assert abs(audit.assembled_form - audit.product_form) < 1e-9


def test_prefactor_routes_differ_by_gamma():
    lam, mu, a = 1.0, 3.0, 0.25
    audit = mm1_sawtooth_prefactor(lam, mu, a)
    g = mu - lam
    c_gamma = (math.exp(g * a) - 1.0) / (g * a)
    assert audit.assembled_form == pytest.approx(c_gamma * g * lam / mu ** 2, abs=1e-9)
    assert audit.product_form == pytest.approx(g * audit.assembled_form, rel=1e-12)


def test_prefactor_assembled_within_flat_sandwich():
    # the assembled route equals C_gamma times the flat-barrier constant
    # gamma*lam/mu^2, so it sits strictly inside (D0, D0 e^{gamma a})
    rng = np.random.default_rng(13)
    for _ in range(10):
        mu = rng.uniform(1.5, 4.0)
        lam = rng.uniform(0.3, mu - 0.5)
        a = rng.uniform(0.1, 2.0)
        g = mu - lam
        audit = mm1_sawtooth_prefactor(lam, mu, a)
        d0 = g * lam / mu ** 2
        assert d0 < audit.assembled_form < d0 * math.exp(g * a)


def test_prefactor_parameter_errors():
    with pytest.raises(ConfigError):
        mm1_sawtooth_prefactor(2.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        mm1_sawtooth_prefactor(1.0, 2.0, 0.0)


# ---- asymptote fitting -----------------------------------------------------------

def test_fit_recovers_exact_exponential():
    ks = [3.0, 4.0, 5.0, 6.0, 7.0]
    table = [(k, 2.0 * math.exp(-k), 0.01 * math.exp(-k)) for k in ks]
    rep = fit_asymptote(table, gamma=1.0)
    assert rep.d_fixed == pytest.approx(2.0, rel=1e-12)
    assert rep.slope_free == pytest.approx(-1.0, abs=1e-12)
    assert rep.d_free == pytest.approx(2.0, rel=1e-10)
    assert max(abs(r) for r in rep.log_residuals) < 1e-12


def test_fit_requires_enough_levels():
    table = [(3.0, 0.1, 0.001), (4.0, 0.05, 0.001)]
    with pytest.raises(InsufficientDataError):
        fit_asymptote(table, gamma=1.0)


def test_fit_rejects_wide_intervals():
    ks = [3.0, 4.0, 5.0, 6.0]
    table = [(k, math.exp(-k), 0.5 * math.exp(-k)) for k in ks]
    with pytest.raises(InsufficientDataError):
        fit_asymptote(table, gamma=1.0)


def test_constant_barrier_reference_runs():
    cfg = SimConfig(buffer=3.0, horizon=10100.0, burn_in=100.0, seed=81,
                    replicas=4, workers=4)
    ref = constant_barrier_reference(MM1, 3.0, cfg)
    assert ref.loss_rate > 0.0
    flat = PeriodicBarrier.flat()
    assert flat.mean_level() == 0.0
    assert flat.exp_moment(1.0) == 1.0
