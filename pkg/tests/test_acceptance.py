"""Acceptance suite: one test per criterion, at the stated tolerances.

Heavy runs are shared through session fixtures.  Each test prints a
PASS/FAIL line with the measured numbers before asserting, so a -s run
doubles as the acceptance report.

Three criteria fail by design of the source material, not of this
implementation: the asymptotic intercept (criterion 2, intercept half),
the integral-representation cross-check (criterion 4) and the
barrier-work identity (criterion 7, work half) all rely on the barrier
level being uncorrelated with the lower-regulator flux, which is false
for moving barriers.  The simulator itself is validated independently by
the zero-mean martingale oracle (criterion 5) and the exact deterministic
cycle.  See the project notes for the full derivation and measurements.
"""
import dataclasses
import math

import numpy as np
import pytest

from levyloss import (IntegralLossInputs, LevyModel, PeriodicBarrier, SimConfig,
                      TwoSidedExp, balance_check, barrier_work_check,
                      estimate_loss_rates, fit_asymptote, integral_loss_rate,
                      martingale_zero_mean, mm1_sawtooth_prefactor, run_replicas,
                      stationary_histogram, zigzag_barrier)
from levyloss.estimation import empirical_phase_law_ks

SEED = 20260809
WORKERS = 4

MM1 = LevyModel.mm1(1.0, 2.0)
SAW = PeriodicBarrier.sawtooth(1.0)
FLAT = PeriodicBarrier.flat()
GAMMA = 1.0
D_CLAIMED = (math.e - 1.0) / 4.0

TWO_SIDED = LevyModel(drift=-0.5, sigma=0.5, intensity=2.0,
                      jumps=TwoSidedExp(0.5, 2.0, 2.0))


def _line(tag, ok, detail):
    print(f"criterion {tag}: {'PASS' if ok else 'FAIL'} ({detail})")


def _sweep(model, barrier, ks, eff_per_k, seed, replicas=16):
    out = {}
    for k in ks:
        cfg = SimConfig(buffer=float(k), horizon=eff_per_k / replicas + 100.0,
                        burn_in=100.0, seed=seed + int(10 * k),
                        replicas=replicas, workers=WORKERS)
        acc = run_replicas(model, barrier, cfg)
        rep = estimate_loss_rates(model, barrier, cfg, accumulators=acc)
        out[float(k)] = (rep, acc)
    return out


@pytest.fixture(scope="session")
def mm1_sweep():
    # criterion 2 budget: >= 2e6 simulated time units per buffer level
    return _sweep(MM1, SAW, (3.0, 4.0, 5.0, 6.0, 7.0), 2.0e6, SEED)


@pytest.fixture(scope="session")
def flat_refs():
    return _sweep(MM1, FLAT, (2.0, 3.0, 4.0, 5.0, 6.0, 7.0), 2.0e6, SEED + 1)


@pytest.fixture(scope="session")
def mm1_default_run():
    cfg = SimConfig(buffer=4.0, horizon=25100.0, burn_in=100.0, seed=SEED + 2,
                    replicas=8, workers=WORKERS)
    acc = run_replicas(MM1, SAW, cfg)
    rep = estimate_loss_rates(MM1, SAW, cfg, accumulators=acc)
    return cfg, acc, rep


def test_criterion_1_lundberg_roots():
    worst = 0.0
    for lam, mu in ((1.0, 2.0), (2.0, 3.0), (1.0, 3.0)):
        g = LevyModel.mm1(lam, mu).lundberg_root()
        worst = max(worst, abs(g - (mu - lam)))
    _line(1, worst <= 1e-10, f"max |gamma - (mu - lam)| = {worst:.2e}")
    assert worst <= 1e-10


def test_criterion_2_decay_reproduction(mm1_sweep):
    table = [(k, rep.loss_rate, rep.loss_ci) for k, (rep, _) in mm1_sweep.items()]
    fit = fit_asymptote(table, GAMMA)
    slope_ok = abs(fit.slope_free - (-GAMMA)) <= 0.05 * GAMMA
    d_ok = abs(fit.d_fixed - D_CLAIMED) <= 0.15 * D_CLAIMED
    _line("2 (slope)", slope_ok, f"free slope {fit.slope_free:.4f} vs -1 +- 5%")
    _line("2 (intercept)", d_ok,
          f"D_hat {fit.d_fixed:.4f} vs claimed {D_CLAIMED:.4f} +- 15%")
    assert slope_ok, f"free-fit slope {fit.slope_free} outside -1 +- 5%"
    assert d_ok, (
        f"fixed-slope intercept {fit.d_fixed:.4f} is outside 15% of the claimed "
        f"{D_CLAIMED:.4f}; the claimed constant drops the barrier-level/feed-flux "
        f"correlation (measured E int e^(gA) dL_c / (C_g l_A) ~ 1.27), see notes")


def test_criterion_3_sandwich_bounds(mm1_sweep, flat_refs):
    ok_all = True
    details = []
    for k, (rep, _) in mm1_sweep.items():
        lo = flat_refs[k][0]
        hi = flat_refs[k - 1.0][0]
        ok_lo = lo.loss_rate <= rep.loss_rate + (lo.loss_ci + rep.loss_ci)
        ok_hi = rep.loss_rate <= hi.loss_rate + (hi.loss_ci + rep.loss_ci)
        ok_all &= ok_lo and ok_hi
        details.append(f"K={k:g}: {lo.loss_rate:.3e} <= {rep.loss_rate:.3e} "
                       f"<= {hi.loss_rate:.3e}")
    _line(3, ok_all, "; ".join(details))
    assert ok_all


def test_criterion_4_integral_formula_cross_validation(mm1_sweep):
    rep, acc = mm1_sweep[4.0]
    val = integral_loss_rate(IntegralLossInputs(
        model=MM1, barrier=SAW, buffer=4.0, histogram=stationary_histogram(acc)))
    rel_mm1 = abs(val - rep.loss_rate) / rep.loss_rate

    cfg = SimConfig(buffer=4.0, horizon=20100.0, burn_in=100.0, seed=SEED + 3,
                    replicas=8, workers=WORKERS, scheme="grid", step=1e-3)
    acc2 = run_replicas(TWO_SIDED, SAW, cfg)
    rep2 = estimate_loss_rates(TWO_SIDED, SAW, cfg, accumulators=acc2)
    val2 = integral_loss_rate(IntegralLossInputs(
        model=TWO_SIDED, barrier=SAW, buffer=4.0,
        histogram=stationary_histogram(acc2)))
    rel_two = abs(val2 - rep2.loss_rate) / rep2.loss_rate

    ok = rel_mm1 <= 0.10 and rel_two <= 0.10
    _line(4, ok, f"M/M/1: formula {val:.4g} vs MC {rep.loss_rate:.4g} "
                 f"({rel_mm1:.0%}); two-sided grid: {val2:.4g} vs "
                 f"{rep2.loss_rate:.4g} ({rel_two:.0%})")
    assert ok, (
        f"integral representation misses Monte Carlo by {rel_mm1:.0%} (M/M/1) and "
        f"{rel_two:.0%} (two-sided + diffusion); it inherits the uncorrelated-work "
        f"substitution that fails for moving barriers (flat-barrier control agrees "
        f"within 10%), see notes")


def test_criterion_5_zero_mean_martingale_and_mutation():
    cfg = SimConfig(buffer=4.0, horizon=101.0, burn_in=100.0, seed=SEED + 4)
    results = []
    for alpha in (0.5 * GAMMA, GAMMA):
        mt = martingale_zero_mean(MM1, SAW, cfg, alpha, 10_000)
        results.append(mt)
        _line(f"5 (alpha={alpha:g})", mt.passed,
              f"mean {mt.mean:.4g}, SE {mt.se:.4g}, n {mt.n}")
    broken = dataclasses.replace(cfg, mutation="reversed_clamp")
    mut = martingale_zero_mean(MM1, SAW, broken, GAMMA, 10_000)
    _line("5 (mutation)", not mut.passed,
          f"corrupted build mean {mut.mean:.4g}, SE {mut.se:.4g}")
    assert all(mt.passed for mt in results)
    assert not mut.passed


def test_criterion_6_invariant_barrier_law():
    rng = np.random.default_rng(SEED + 5)
    worst = 0.0
    for barrier in (SAW, zigzag_barrier()):
        for frac in (0.0, 0.37, 0.81):
            ks = empirical_phase_law_ks(barrier, frac * barrier.period, 100_000, rng)
            worst = max(worst, ks)
    _line(6, worst < 0.015, f"max KS over barriers/offsets = {worst:.4f}")
    assert worst < 0.015


def test_criterion_7_identity_suite(mm1_default_run):
    cfg, acc, rep = mm1_default_run
    bal = balance_check(rep, MM1)
    work = barrier_work_check(acc, SAW, rep)
    _line("7 (balance)", bal.passed, f"resid {bal.value:.4g}, 3SE {bal.tolerance:.4g}")
    _line("7 (work identity)", work.passed,
          f"resid {work.value:.4g}, 3SE {work.tolerance:.4g}")

    det = LevyModel(drift=-1.0)
    dcfg = SimConfig(buffer=2.0, horizon=105.0, burn_in=5.0, seed=3, v0=2.0,
                     replicas=2)
    dacc = run_replicas(det, SAW, dcfg)
    drep = estimate_loss_rates(det, SAW, dcfg, accumulators=dacc)
    dbal = balance_check(drep, det)
    dwork = barrier_work_check(dacc, SAW, drep)
    _line("7 (balance, deterministic)", abs(dbal.value) <= 1e-12,
          f"resid {dbal.value:.2e}")
    _line("7 (work, deterministic)", abs(dwork.value) <= 1e-12,
          f"resid {dwork.value:.4g}")

    assert bal.passed
    assert abs(dbal.value) <= 1e-12
    assert work.passed and abs(dwork.value) <= 1e-12, (
        f"work identity residual is {work.value:.4g} (3SE {work.tolerance:.3g}) on "
        f"the default run and exactly {dwork.value:.4g} on the deterministic cycle "
        f"(the cycle rides the barrier only over [a/2, a]); the identity assumes "
        f"barrier level and feed flux are uncorrelated, see notes")


def test_criterion_8_path_properties(mm1_sweep):
    ok = True
    for k, (_, acc) in mm1_sweep.items():
        ok &= acc.min_gap >= -1e-9
        ok &= acc.max_over <= 1e-9
        ok &= acc.balance_residual_max <= 1e-9
        ok &= acc.loss_cont == 0.0
    _line("8 (containment/balance)", ok, "all sweep paths")
    assert ok

    cfg_e = SimConfig(buffer=3.0, horizon=100100.0, burn_in=100.0, seed=SEED + 6,
                      replicas=4, workers=WORKERS)
    exact = run_replicas(MM1, SAW, cfg_e)
    l_exact = exact.loss_total / exact.eff_time
    gaps = []
    with pytest.warns(UserWarning):
        for h in (0.2, 0.1, 0.05):
            cfg_g = dataclasses.replace(cfg_e, scheme="grid", step=h)
            g = run_replicas(MM1, SAW, cfg_g)
            gaps.append(abs(g.loss_total / g.eff_time - l_exact))
    halving = gaps[2] < gaps[1] < gaps[0] and 2.0 < gaps[0] / gaps[2] < 16.0
    _line("8 (grid -> event)", halving,
          f"gaps at h=0.2/0.1/0.05: {gaps[0]:.2e}, {gaps[1]:.2e}, {gaps[2]:.2e}")
    assert halving


def test_criterion_9_prefactor_audit(flat_refs):
    audit = mm1_sawtooth_prefactor(1.0, 2.0, 1.0)
    agree = abs(audit.assembled_form - audit.product_form) <= 1e-9
    _line("9 (routes at gamma=1)", agree,
          f"product {audit.product_form:.12f} vs assembled {audit.assembled_form:.12f}")
    assert agree

    lam, mu, a = 1.0, 3.0, 0.25
    model = LevyModel.mm1(lam, mu)
    g = model.lundberg_root()
    audit2 = mm1_sawtooth_prefactor(lam, mu, a)
    saw2 = PeriodicBarrier.sawtooth(a)
    ks = (2.0, 2.5, 3.0, 3.5, 4.0)
    flat2 = _sweep(model, FLAT, ks, 1.0e6, SEED + 7, replicas=8)
    moving = _sweep(model, saw2, ks, 1.0e6, SEED + 8, replicas=8)
    fit0 = fit_asymptote([(k, r.loss_rate, r.loss_ci) for k, (r, _) in flat2.items()], g)
    fitm = fit_asymptote([(k, r.loss_rate, r.loss_ci) for k, (r, _) in moving.items()], g)
    d0 = fit0.d_fixed
    spread = math.exp(max(abs(r) for r in fit0.log_residuals))
    lo, hi = d0 / spread, d0 * math.exp(g * a) * spread
    assembled_in = lo <= audit2.assembled_form <= hi
    product_in = lo <= audit2.product_form <= hi
    supports = ("assembled" if abs(fitm.d_fixed - audit2.assembled_form)
                <= abs(fitm.d_fixed - audit2.product_form) else "product")
    _line("9 (sandwich)", assembled_in,
          f"assembled {audit2.assembled_form:.4f} in [{lo:.4f}, {hi:.4f}]; "
          f"product {audit2.product_form:.4f} "
          f"{'inside' if product_in else 'outside'}; moving-barrier D_hat "
          f"{fitm.d_fixed:.4f}; regression supports the {supports} route")
    assert assembled_in
    assert supports == "assembled"
