"""Steady-state estimators and identity checks.

Point estimates of the loss rate (upper regulator per unit time) and the
feed rate (lower regulator), batch-means confidence intervals, the joint
stationary histogram, and the run-level validation statistics: flow
balance, the barrier work integral, and the zero-mean martingale test.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barrier import PeriodicBarrier
from .errors import ConfigError, EmptyHistogramError
from .model import LevyModel
from .reflection import PathAccumulators, SimConfig, martingale_statistic, run_replicas

__all__ = [
    "LossRateReport", "StationaryHistogram", "CheckResult", "MartingaleTest",
    "estimate_loss_rates", "stationary_histogram", "balance_check",
    "barrier_work_check", "martingale_zero_mean",
]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class LossRateReport:
    """Loss and feed rates with batch-means confidence half-widths."""

    loss_rate: float
    loss_ci: float
    loss_cont: float
    loss_jump: float
    feed_rate: float
    feed_ci: float
    feed_cont: float
    feed_jump: float
    eff_time: float
    replicas: int
    seed: int
    buffer: float
    ci_wide: bool


@dataclass(frozen=True)
class CheckResult:
    """One validation statistic: value, allowance, verdict."""

    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class MartingaleTest:
    alpha: float
    mean: float
    se: float
    n: int
    passed: bool


def _batch_ci(n: int, total: float, sumsq: float) -> float:
    if n < 2:
        return math.inf
    mean = total / n
    var = max(sumsq / n - mean * mean, 0.0) * n / (n - 1)
    return _Z95 * math.sqrt(var / n)


def estimate_loss_rates(model: LevyModel, barrier: PeriodicBarrier, cfg: SimConfig,
                        replicas: Optional[int] = None,
                        accumulators: Optional[PathAccumulators] = None) -> LossRateReport:
    """Ergodic loss/feed rate estimates over [burn_in, horizon] x replicas.

    Batch means use the per-replica batch count pooled across replicas with
    normal quantiles.  Pass precomputed accumulators to report on an
    existing run.
    """
    if model.mean_x1() >= 0.0:
        raise ConfigError("E X_1 >= 0: stationary estimation needs negative mean input")
    acc = accumulators if accumulators is not None else run_replicas(
        model, barrier, cfg, replicas)
    eff = acc.eff_time
    loss = acc.loss_total / eff
    feed = acc.feed_total / eff
    loss_ci = _batch_ci(acc.batch_n, acc.batch_loss_sum, acc.batch_loss_sumsq)
    feed_ci = _batch_ci(acc.batch_n, acc.batch_feed_sum, acc.batch_feed_sumsq)
    wide = loss > 0.0 and loss_ci > 0.25 * loss
    if wide:
        warnings.warn(f"loss-rate CI half-width {loss_ci:.3g} exceeds 25% of the "
                      f"estimate {loss:.3g}; lengthen the run", stacklevel=2)
    return LossRateReport(
        loss_rate=loss, loss_ci=loss_ci,
        loss_cont=acc.loss_cont / eff, loss_jump=acc.loss_jump / eff,
        feed_rate=feed, feed_ci=feed_ci,
        feed_cont=acc.feed_cont / eff, feed_jump=acc.feed_jump / eff,
        eff_time=eff, replicas=acc.replicas, seed=cfg.seed, buffer=cfg.buffer,
        ci_wide=wide)


@dataclass(frozen=True)
class StationaryHistogram:
    """Joint (level, barrier) occupation probabilities.

    Row layout matches the accumulators: v_bins regular rows over [0, K]
    plus a contact row (index v_bins) for time spent exactly on the
    barrier; columns are barrier-level bins over [0, amplitude].
    """

    joint: np.ndarray
    v_marginal: np.ndarray
    v_edges: np.ndarray
    a_edges: np.ndarray

    @property
    def n_v(self) -> int:
        return len(self.v_edges) - 1

    @property
    def n_a(self) -> int:
        return self.joint.shape[1]

    def v_mids(self) -> np.ndarray:
        return 0.5 * (self.v_edges[:-1] + self.v_edges[1:])

    def a_mids(self) -> np.ndarray:
        if self.a_edges[-1] == self.a_edges[0]:
            return np.zeros(1)
        return 0.5 * (self.a_edges[:-1] + self.a_edges[1:])

    def a_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def marginal_from_joint(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def conditional_given_a(self, j: int):
        """(x locations, weights) of V given the barrier level in bin j.

        The contact-row mass sits exactly at the bin's level midpoint.
        """
        col = self.joint[:, j]
        tot = col.sum()
        if tot <= 0.0:
            raise EmptyHistogramError(f"no occupation mass in barrier bin {j}")
        xs = np.append(self.v_mids(), self.a_mids()[j])
        return xs, col / tot

    def mean_v(self) -> float:
        """Empirical stationary mean of V; contact mass at barrier-bin midpoints."""
        reg = float(self.joint[:-1, :].sum(axis=1) @ self.v_mids())
        contact = float(self.joint[-1, :] @ self.a_mids())
        return reg + contact

    def tail_probability(self, x: float) -> float:
        """P(V > x) from the marginal, counting contact mass at barrier midpoints."""
        mids = self.v_mids()
        p = float(self.joint[:-1, :].sum(axis=1)[mids > x].sum())
        amids = self.a_mids()
        p += float(self.joint[-1, :][amids > x].sum())
        return p


def stationary_histogram(acc: PathAccumulators) -> StationaryHistogram:
    """Normalize occupation time into probabilities."""
    total = acc.joint_time.sum()
    if total <= 0.0:
        raise EmptyHistogramError("no occupation time accumulated")
    return StationaryHistogram(
        joint=acc.joint_time / total,
        v_marginal=acc.v_time / acc.v_time.sum(),
        v_edges=acc.v_edges,
        a_edges=acc.a_edges)


def balance_check(report: LossRateReport, model: LevyModel) -> CheckResult:
    """Flow conservation: feed rate - loss rate + E X_1 = 0 in steady state."""
    resid = report.feed_rate - report.loss_rate + model.mean_x1()
    se = math.hypot(report.feed_ci / _Z95, report.loss_ci / _Z95)
    tol = 3.0 * se
    return CheckResult("balance", resid, tol, abs(resid) <= tol,
                       detail=f"feed {report.feed_rate:.6g} loss {report.loss_rate:.6g}")


def barrier_work_check(acc: PathAccumulators, barrier: PeriodicBarrier,
                       report: LossRateReport) -> CheckResult:
    """Work identity: time-average of int A dL^A against E A_0 * feed rate.

    The claimed identity assumes barrier level and feed flux are
    uncorrelated; the standard error comes from the replica spread of the
    per-replica residuals.
    """
    ea0 = barrier.mean_level()
    per_rep = acc.eff_time / acc.rep_n
    resid = (acc.rep_work_sum - ea0 * acc.rep_feed_sum) / acc.eff_time
    n = acc.rep_n
    if n >= 2:
        s_w = acc.rep_work_sum
        s_f = acc.rep_feed_sum
        ss = (acc.rep_work_sumsq - 2.0 * ea0 * acc.rep_work_feed_cross
              + ea0 * ea0 * acc.rep_feed_sumsq)
        mean_r = (s_w - ea0 * s_f) / n
        var_r = max(ss / n - mean_r * mean_r, 0.0) * n / (n - 1)
        se = math.sqrt(var_r / n) / per_rep
    else:
        se = math.inf
    tol = 3.0 * se
    return CheckResult("barrier_work", resid, tol, abs(resid) <= tol,
                       detail=f"E A0 = {ea0:.6g}, work avg = "
                              f"{acc.barrier_feed_integral / acc.eff_time:.6g}")


def martingale_zero_mean(model: LevyModel, barrier: PeriodicBarrier, cfg: SimConfig,
                         alpha: float, replicas: int) -> MartingaleTest:
    """Sample mean of M_1 over stationary-start replicas; passes if |mean| <= 3 SE.

    Each replica burns in for cfg.burn_in (or the default) and evaluates
    the statistic over the following unit window.
    """
    burn = cfg.resolved_burn_in(model, barrier)
    window_cfg = SimConfig(
        buffer=cfg.buffer, horizon=burn + 1.0, burn_in=burn, scheme=cfg.scheme,
        step=cfg.step, seed=cfg.seed, replicas=1, workers=cfg.workers,
        v_bins=cfg.v_bins, a_bins=cfg.a_bins, batches=1, v0=cfg.v0,
        mutation=cfg.mutation)
    vals = np.empty(replicas)
    for i in range(replicas):
        vals[i] = martingale_statistic(model, barrier, window_cfg, alpha,
                                       replica_index=i).value
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicas))
    return MartingaleTest(alpha=alpha, mean=mean, se=se, n=replicas,
                          passed=abs(mean) <= 3.0 * se)


def histogram_vs_barrier_law(hist: StationaryHistogram,
                             barrier: PeriodicBarrier) -> float:
    """KS distance between the empirical barrier-level marginal and its exact law."""
    masses = hist.a_marginal()
    meas = barrier.invariant_density()
    emp = np.cumsum(masses)
    exact = np.array([meas.cdf(e) for e in hist.a_edges[1:]])
    return float(np.abs(emp - exact).max())


def empirical_phase_law_ks(barrier: PeriodicBarrier, t: float, n: int,
                           rng: np.random.Generator) -> float:
    """KS distance of the sampled level phi(t + U) against the invariant law."""
    u = rng.random(n) * barrier.period
    vals = np.sort([barrier.value(t + ui) for ui in u])
    meas = barrier.invariant_density()
    cdf = np.array([meas.cdf(v) for v in vals])
    grid = np.arange(1, n + 1) / n
    lo = np.abs(cdf - grid).max()
    hi = np.abs(cdf - (grid - 1.0 / n)).max()
    return float(max(lo, hi))
