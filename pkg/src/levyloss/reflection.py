"""Doubly reflected paths V_t = X_t + L^A_t - L^K_t with full regulator accounting.

The lower regulator ("feed") keeps V above the periodic barrier, the upper
regulator ("loss") caps it at the buffer level.  Each replica owns a
counter-based random stream keyed by (seed, replica index), so runs are
reproducible for any worker count.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as _k
from .barrier import PeriodicBarrier
from .errors import ConfigError, SimulationError
from .model import LevyModel

__all__ = ["SimConfig", "PathAccumulators", "MartingaleSample",
           "simulate", "run_replicas", "martingale_statistic"]

WORKERS_ENV = "LEVYLOSS_WORKERS"


@dataclass(frozen=True)
class SimConfig:
    """Run settings for path generation.

    Attributes:
        buffer: upper reflection level K (must exceed the barrier amplitude).
        horizon: simulated time per replica, including burn-in.
        burn_in: discarded initial stretch; None picks
            max(50/|E X_1|, 20 periods).
        scheme: "event" (exact, needs sigma == 0) or "grid".
        step: grid time step h.
        seed: base seed for the per-replica Philox streams.
        replicas: independent paths to average.
        workers: thread count; None reads LEVYLOSS_WORKERS, default 1.
        v_bins / a_bins: occupation histogram resolution.
        batches: batch-means count per replica.
        v0: initial level; None starts at the buffer.
        mutation: None, or "reversed_clamp" for the deliberately broken build.
    """

    buffer: float
    horizon: float
    burn_in: Optional[float] = None
    scheme: str = "event"
    step: float = 1e-3
    seed: int = 0
    replicas: int = 1
    workers: Optional[int] = None
    v_bins: int = 200
    a_bins: int = 40
    batches: int = 32
    v0: Optional[float] = None
    mutation: Optional[str] = None

    def resolved_burn_in(self, model: LevyModel, barrier: PeriodicBarrier) -> float:
        if self.burn_in is not None:
            return float(self.burn_in)
        mean = model.mean_x1()
        drain = 50.0 / abs(mean) if mean != 0.0 else 50.0
        return max(drain, 20.0 * barrier.period)

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        env = os.environ.get(WORKERS_ENV)
        return max(1, int(env)) if env else 1

    def validate(self, model: LevyModel, barrier: PeriodicBarrier) -> None:
        if self.buffer <= barrier.amplitude:
            raise ConfigError(
                f"buffer {self.buffer} must exceed barrier amplitude {barrier.amplitude}")
        if self.scheme not in ("event", "grid"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "event" and model.sigma > 0.0:
            raise ConfigError("event scheme requires sigma == 0; use scheme='grid'")
        if self.scheme == "grid" and not self.step > 0.0:
            raise ConfigError("grid scheme needs step > 0")
        burn = self.resolved_burn_in(model, barrier)
        if not self.horizon > burn:
            raise ConfigError(f"horizon {self.horizon} must exceed burn-in {burn}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.v_bins < 2 or self.a_bins < 1 or self.batches < 1:
            raise ConfigError("bin and batch counts must be positive")
        if self.mutation not in (None, "reversed_clamp"):
            raise ConfigError(f"unknown mutation {self.mutation!r}")
        if self.scheme == "grid":
            rec = 1e-2 * min(1.0 / model.intensity if model.intensity > 0 else math.inf,
                             barrier.period)
            if self.step > rec:
                warnings.warn(
                    f"grid step {self.step} above recommended {rec:.3g}", stacklevel=2)


@dataclass
class PathAccumulators:
    """Window totals, occupation histogram and full-path balance data.

    Merging replicas adds totals and histograms, pools batch statistics and
    keeps worst-case containment witnesses; merge order is fixed by replica
    index so results do not depend on scheduling.
    """

    scheme: str
    eff_time: float
    feed_cont: float
    feed_jump: float
    loss_cont: float
    loss_jump: float
    feed_sq_jump: float
    loss_sq_jump: float
    barrier_feed_integral: float
    loss_events: float
    joint_time: np.ndarray        # (v_bins + 1, a_bins); last row = contact set
    v_time: np.ndarray            # (v_bins + 1,)
    v_edges: np.ndarray
    a_edges: np.ndarray
    batch_len: float
    batch_n: int
    batch_feed_sum: float
    batch_feed_sumsq: float
    batch_loss_sum: float
    batch_loss_sumsq: float
    # per-replica cross moments of (barrier integral, feed total) for spread-based checks
    rep_n: int
    rep_feed_sum: float
    rep_feed_sumsq: float
    rep_work_sum: float
    rep_work_sumsq: float
    rep_work_feed_cross: float
    # full-path balance and containment
    path_time: float
    v_start: float
    v_end: float
    phase_end: float
    feed_full: float
    loss_full: float
    x_total: float
    balance_residual_max: float
    min_gap: float
    max_over: float
    replicas: int = 1

    @property
    def feed_total(self) -> float:
        return self.feed_cont + self.feed_jump

    @property
    def loss_total(self) -> float:
        return self.loss_cont + self.loss_jump

    def merge(self, other: "PathAccumulators") -> "PathAccumulators":
        if self.scheme != other.scheme:
            raise ValueError("cannot merge accumulators from different schemes")
        if not (np.array_equal(self.v_edges, other.v_edges)
                and np.array_equal(self.a_edges, other.a_edges)):
            raise ValueError("cannot merge accumulators with different histogram edges")
        return PathAccumulators(
            scheme=self.scheme,
            eff_time=self.eff_time + other.eff_time,
            feed_cont=self.feed_cont + other.feed_cont,
            feed_jump=self.feed_jump + other.feed_jump,
            loss_cont=self.loss_cont + other.loss_cont,
            loss_jump=self.loss_jump + other.loss_jump,
            feed_sq_jump=self.feed_sq_jump + other.feed_sq_jump,
            loss_sq_jump=self.loss_sq_jump + other.loss_sq_jump,
            barrier_feed_integral=self.barrier_feed_integral + other.barrier_feed_integral,
            loss_events=self.loss_events + other.loss_events,
            joint_time=self.joint_time + other.joint_time,
            v_time=self.v_time + other.v_time,
            v_edges=self.v_edges,
            a_edges=self.a_edges,
            batch_len=self.batch_len,
            batch_n=self.batch_n + other.batch_n,
            batch_feed_sum=self.batch_feed_sum + other.batch_feed_sum,
            batch_feed_sumsq=self.batch_feed_sumsq + other.batch_feed_sumsq,
            batch_loss_sum=self.batch_loss_sum + other.batch_loss_sum,
            batch_loss_sumsq=self.batch_loss_sumsq + other.batch_loss_sumsq,
            rep_n=self.rep_n + other.rep_n,
            rep_feed_sum=self.rep_feed_sum + other.rep_feed_sum,
            rep_feed_sumsq=self.rep_feed_sumsq + other.rep_feed_sumsq,
            rep_work_sum=self.rep_work_sum + other.rep_work_sum,
            rep_work_sumsq=self.rep_work_sumsq + other.rep_work_sumsq,
            rep_work_feed_cross=self.rep_work_feed_cross + other.rep_work_feed_cross,
            path_time=self.path_time + other.path_time,
            v_start=math.nan if self.replicas + other.replicas > 1 else self.v_start,
            v_end=math.nan if self.replicas + other.replicas > 1 else self.v_end,
            phase_end=math.nan if self.replicas + other.replicas > 1 else self.phase_end,
            feed_full=self.feed_full + other.feed_full,
            loss_full=self.loss_full + other.loss_full,
            x_total=self.x_total + other.x_total,
            balance_residual_max=max(self.balance_residual_max, other.balance_residual_max),
            min_gap=min(self.min_gap, other.min_gap),
            max_over=max(self.max_over, other.max_over),
            replicas=self.replicas + other.replicas,
        )


@dataclass(frozen=True)
class MartingaleSample:
    """One replica's zero-mean statistic M_t at the window end."""

    alpha: float
    value: float
    terms: dict


def _replica_rng(seed: int, index: int) -> np.random.Generator:
    key = (int(seed) & (2 ** 64 - 1)) * 2 ** 64 + index
    return np.random.Generator(np.random.Philox(key=key))


def _jump_stream(rng, model: LevyModel, horizon: float):
    if model.intensity == 0.0:
        return np.empty(0), np.empty(0)
    lam = model.intensity
    n0 = int(lam * horizon + 6.0 * math.sqrt(lam * horizon) + 64.0)
    gaps = rng.exponential(1.0 / lam, n0)
    total = gaps.sum()
    chunks = [gaps]
    while total <= horizon:
        more = rng.exponential(1.0 / lam, max(64, n0 // 4))
        chunks.append(more)
        total += more.sum()
    epochs = np.cumsum(np.concatenate(chunks))
    m = int(np.searchsorted(epochs, horizon, side="left"))
    sizes = model.sample_jumps(rng, m)
    return epochs[:m].copy(), sizes


def _alloc(cfg: SimConfig, barrier: PeriodicBarrier):
    nv, na = cfg.v_bins, cfg.a_bins if barrier.amplitude > 0.0 else 1
    acc = np.zeros(_k.NACC)
    acc[_k.MIN_GAP] = np.inf
    acc[_k.MAX_OVER] = -np.inf
    hist = np.zeros((nv + 1, na))
    vhist = np.zeros(nv + 1)
    feed_batch = np.zeros(cfg.batches)
    loss_batch = np.zeros(cfg.batches)
    mart = np.zeros(_k.NMART)
    return nv, na, acc, hist, vhist, feed_batch, loss_batch, mart


def _wrap(cfg, barrier, nv, na, acc, hist, vhist, feed_batch, loss_batch,
          eff_nominal) -> PathAccumulators:
    batch_len = eff_nominal / cfg.batches
    feed_rates = feed_batch / batch_len
    loss_rates = loss_batch / batch_len
    v_edges = np.linspace(0.0, cfg.buffer, nv + 1)
    a_edges = (np.linspace(0.0, barrier.amplitude, na + 1)
               if barrier.amplitude > 0.0 else np.array([0.0, 0.0]))
    balance = (acc[_k.V_END] - acc[_k.V_START]) - (
        acc[_k.X_TOTAL] + acc[_k.FEED_FULL] - acc[_k.LOSS_FULL])
    scale = max(1.0, abs(acc[_k.X_TOTAL]) + acc[_k.FEED_FULL] + acc[_k.LOSS_FULL])
    eff = acc[_k.EFF_TIME]
    feed_w = acc[_k.FEED_CONT] + acc[_k.FEED_JUMP]
    work_w = acc[_k.FEED_A_INT]
    return PathAccumulators(
        scheme=cfg.scheme,
        eff_time=eff,
        feed_cont=acc[_k.FEED_CONT],
        feed_jump=acc[_k.FEED_JUMP],
        loss_cont=acc[_k.LOSS_CONT],
        loss_jump=acc[_k.LOSS_JUMP],
        feed_sq_jump=acc[_k.FEED_SQ],
        loss_sq_jump=acc[_k.LOSS_SQ],
        barrier_feed_integral=acc[_k.FEED_A_INT],
        loss_events=acc[_k.LOSS_EVENTS],
        joint_time=hist,
        v_time=vhist,
        v_edges=v_edges,
        a_edges=a_edges,
        batch_len=batch_len,
        batch_n=cfg.batches,
        batch_feed_sum=float(feed_rates.sum()),
        batch_feed_sumsq=float((feed_rates ** 2).sum()),
        batch_loss_sum=float(loss_rates.sum()),
        batch_loss_sumsq=float((loss_rates ** 2).sum()),
        rep_n=1,
        rep_feed_sum=feed_w,
        rep_feed_sumsq=feed_w * feed_w,
        rep_work_sum=work_w,
        rep_work_sumsq=work_w * work_w,
        rep_work_feed_cross=work_w * feed_w,
        path_time=cfg.horizon,
        v_start=acc[_k.V_START],
        v_end=acc[_k.V_END],
        phase_end=acc[_k.PHASE_END],
        feed_full=acc[_k.FEED_FULL],
        loss_full=acc[_k.LOSS_FULL],
        x_total=acc[_k.X_TOTAL],
        balance_residual_max=abs(balance) / scale,
        min_gap=acc[_k.MIN_GAP],
        max_over=acc[_k.MAX_OVER],
        replicas=1,
    )


_GRID_CHUNK_STEPS = 1 << 21


def _simulate_one(model, barrier, cfg, replica_index, alpha=math.nan):
    rng = _replica_rng(cfg.seed, replica_index)
    u0 = barrier.sample_phase(rng)
    v0 = cfg.buffer if cfg.v0 is None else float(cfg.v0)
    starts, widths, levels, slopes = barrier.piece_arrays()
    burn = cfg.resolved_burn_in(model, barrier)
    nv, na, acc, hist, vhist, feed_batch, loss_batch, mart = _alloc(cfg, barrier)
    mutate = 1 if cfg.mutation == "reversed_clamp" else 0

    if cfg.scheme == "event":
        jt, jx = _jump_stream(rng, model, cfg.horizon)
        eff_nominal = cfg.horizon - burn
        status = _k.event_kernel(
            model.drift, cfg.buffer, jt, jx,
            starts, widths, levels, slopes, barrier.period, barrier.amplitude,
            u0, v0, cfg.horizon, burn, eff_nominal / cfg.batches,
            nv, na, alpha, mutate,
            acc, hist, vhist, feed_batch, loss_batch, mart)
    else:
        n_steps = int(round(cfg.horizon / cfg.step))
        burn_steps = int(round(burn / cfg.step))
        eff_nominal = (n_steps - burn_steps) * cfg.step
        total_t = n_steps * cfg.step
        state = np.zeros(6)
        a0 = barrier.value(u0)
        v_init = min(max(v0, a0), cfg.buffer)
        state[0] = 0.0
        state[1] = v_init
        state[2] = u0
        state[3] = float(barrier.piece_index(u0))
        state[4] = 1.0 if burn <= 0.0 else 0.0
        state[5] = math.exp(alpha * v_init) if not math.isnan(alpha) else 0.0
        acc[_k.V_START] = v_init
        if burn <= 0.0:
            acc[_k.V_AT_BURN] = v_init
            acc[_k.A_AT_BURN] = a0
            if not math.isnan(alpha):
                mart[_k.M_E_V0] = state[5]
        sqh = math.sqrt(cfg.step)
        done = 0
        status = 0
        while done < n_steps:
            m = min(_GRID_CHUNK_STEPS, n_steps - done)
            normals = rng.standard_normal(m) if model.sigma > 0.0 else np.zeros(m)
            if model.intensity > 0.0:
                jcounts = rng.poisson(model.intensity * cfg.step, m).astype(np.int64)
                jsizes = model.sample_jumps(rng, int(jcounts.sum()))
            else:
                jcounts = np.zeros(m, dtype=np.int64)
                jsizes = np.empty(0)
            status = _k.grid_chunk(
                state, model.drift, model.sigma, cfg.buffer, cfg.step, sqh,
                normals, jcounts, jsizes,
                starts, widths, levels, slopes, barrier.period, barrier.amplitude,
                burn_steps * cfg.step, total_t, eff_nominal / cfg.batches,
                nv, na, alpha, mutate,
                acc, hist, vhist, feed_batch, loss_batch, mart)
            if status != 0:
                break
            done += m
        acc[_k.V_END] = state[1]
        acc[_k.PHASE_END] = state[2]
        if not math.isnan(alpha):
            mart[_k.M_E_VT] = math.exp(alpha * state[1])
            mart[_k.M_WINDOW] = total_t - burn_steps * cfg.step

    if status != 0:
        raise SimulationError("path produced non-finite state")
    wrapped = _wrap(cfg, barrier, nv, na, acc, hist, vhist, feed_batch, loss_batch,
                    eff_nominal)
    return wrapped, mart


def simulate(model: LevyModel, barrier: PeriodicBarrier, cfg: SimConfig,
             replica_index: int = 0) -> PathAccumulators:
    """Run one reflected path and return its accumulators."""
    cfg.validate(model, barrier)
    if not model.integrable_tail():
        raise ConfigError("jump law has non-integrable positive tail")
    wrapped, _ = _simulate_one(model, barrier, cfg, replica_index)
    return wrapped


def run_replicas(model: LevyModel, barrier: PeriodicBarrier, cfg: SimConfig,
                 replicas: Optional[int] = None) -> PathAccumulators:
    """Run independent replicas (possibly on a thread pool) and merge them in index order."""
    cfg.validate(model, barrier)
    if not model.integrable_tail():
        raise ConfigError("jump law has non-integrable positive tail")
    n = cfg.replicas if replicas is None else int(replicas)
    workers = cfg.resolved_workers()
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda i: _simulate_one(model, barrier, cfg, i)[0], range(n)))
    else:
        parts = [_simulate_one(model, barrier, cfg, i)[0] for i in range(n)]
    merged = parts[0]
    for p in parts[1:]:
        merged = merged.merge(p)
    return merged


def martingale_statistic(model: LevyModel, barrier: PeriodicBarrier, cfg: SimConfig,
                         alpha: float, replica_index: int = 0) -> MartingaleSample:
    """Evaluate the zero-mean statistic over the window after burn-in.

    The replica warm-starts through the configured burn-in, then the
    statistic is assembled over [burn_in, horizon] (length 1 by default in
    the estimation drivers).  Exact occupation integrals under the event
    scheme, trapezoidal under the grid scheme.
    """
    cfg.validate(model, barrier)
    if not model.domain().contains(alpha):
        raise ConfigError(f"alpha={alpha} outside the exponent domain")
    _, mart = _simulate_one(model, barrier, cfg, replica_index, alpha=alpha)
    kap = model.kappa(alpha)
    ekk = math.exp(alpha * cfg.buffer)
    terms = {
        "kappa_occupation": kap * mart[_k.M_OCC],
        "initial": mart[_k.M_E_V0],
        "final": -mart[_k.M_E_VT],
        "feed_cont": alpha * mart[_k.M_FEED_EXP],
        "feed_jump": mart[_k.M_FEED_JUMP],
        "loss_cont": -alpha * ekk * mart[_k.M_LOSS_CONT],
        "loss_jump": ekk * mart[_k.M_LOSS_JUMP],
        "window": mart[_k.M_WINDOW],
    }
    value = (terms["kappa_occupation"] + terms["initial"] + terms["final"]
             + terms["feed_cont"] + terms["feed_jump"]
             + terms["loss_cont"] + terms["loss_jump"])
    return MartingaleSample(alpha=alpha, value=value, terms=terms)
