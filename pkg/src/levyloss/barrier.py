"""Piecewise-affine periodic lower barriers and their invariant measure.

The barrier is A_t = phi(t + U) for a periodic, piecewise-affine phi with
period s and a uniformly random phase U on [0, s).  Because every piece is
affine with nonzero slope, the stationary law of the barrier level has a
piecewise-constant density, so its mean, exponential moments and per-bin
masses are all exact.

A degenerate "flat" barrier (identically zero) is supported for the
constant-buffer reference runs; its invariant measure is an atom at 0.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import PhaseError

__all__ = ["BarrierPiece", "PeriodicBarrier", "InvariantMeasure", "zigzag_barrier"]


@dataclass(frozen=True)
class BarrierPiece:
    """Affine segment on the phase interval [start, end): level + slope*(t - start)."""

    start: float
    end: float
    level: float
    slope: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("piece must have positive width")

    @property
    def width(self) -> float:
        return self.end - self.start

    @property
    def end_level(self) -> float:
        return self.level + self.slope * self.width

    def image(self):
        """(min, max) of the values attained on the half-open interval."""
        lo = min(self.level, self.end_level)
        hi = max(self.level, self.end_level)
        return lo, hi


@dataclass(frozen=True)
class InvariantMeasure:
    """Stationary law of the barrier level: piecewise-constant density plus atoms."""

    intervals: tuple  # (lo, hi, density) with lo < hi, density > 0
    atoms: tuple = ()  # (location, mass)

    def total_mass(self) -> float:
        m = sum(d * (hi - lo) for lo, hi, d in self.intervals)
        return m + sum(w for _, w in self.atoms)

    def mean(self) -> float:
        m = sum(d * 0.5 * (hi * hi - lo * lo) for lo, hi, d in self.intervals)
        return m + sum(y * w for y, w in self.atoms)

    def exp_moment(self, gamma: float) -> float:
        """Integral of exp(gamma*y) against the measure."""
        if abs(gamma) < 1e-300:
            return self.total_mass()
        m = sum(d * (math.expm1(gamma * hi) - math.expm1(gamma * lo)) / gamma
                for lo, hi, d in self.intervals)
        return m + sum(w * math.exp(gamma * y) for y, w in self.atoms)

    def cdf(self, y: float) -> float:
        m = 0.0
        for lo, hi, d in self.intervals:
            if y > lo:
                m += d * (min(y, hi) - lo)
        for loc, w in self.atoms:
            if loc <= y:
                m += w
        return m

    def bin_masses(self, edges: np.ndarray) -> np.ndarray:
        """Exact mass in each [edges[i], edges[i+1]) cell; atoms go to the covering cell."""
        edges = np.asarray(edges, dtype=float)
        n = len(edges) - 1
        out = np.zeros(n)
        for i in range(n):
            lo_e, hi_e = edges[i], edges[i + 1]
            for lo, hi, d in self.intervals:
                a = max(lo, lo_e)
                b = min(hi, hi_e)
                if b > a:
                    out[i] += d * (b - a)
        for loc, w in self.atoms:
            i = int(np.searchsorted(edges, loc, side="right")) - 1
            out[min(max(i, 0), n - 1)] += w
        return out


def _validate_pieces(pieces: Sequence[BarrierPiece]):
    if not pieces:
        raise ValueError("barrier needs at least one piece")
    if abs(pieces[0].start) > 1e-12:
        raise ValueError("pieces must start at phase 0")
    for a, b in zip(pieces, pieces[1:]):
        if abs(a.end - b.start) > 1e-12:
            raise ValueError("pieces must partition the period without gaps")
    for p in pieces:
        if min(p.level, p.end_level) < -1e-12:
            raise ValueError("barrier values must stay >= 0")


@dataclass(frozen=True)
class PeriodicBarrier:
    """Periodic piecewise-affine lower barrier.

    Build with :meth:`sawtooth`, :meth:`flat`, :func:`zigzag_barrier` or an
    explicit piece list.  Instances are immutable and shareable.
    """

    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        _validate_pieces(self.pieces)
        if not self.is_flat and any(p.slope == 0.0 for p in self.pieces):
            raise ValueError("nonzero slopes required (use PeriodicBarrier.flat for a == 0)")

    # ---- constructors ------------------------------------------------------

    @classmethod
    def sawtooth(cls, a: float) -> "PeriodicBarrier":
        """Ramp 0 -> a at unit slope, dropping back to 0 each period (period = a)."""
        if not a > 0.0:
            raise ValueError("sawtooth amplitude must be > 0; use flat() for a == 0")
        return cls((BarrierPiece(0.0, a, 0.0, 1.0),))

    @classmethod
    def flat(cls, period: float = 1.0) -> "PeriodicBarrier":
        """Degenerate barrier identically 0 (constant lower boundary)."""
        return cls((BarrierPiece(0.0, period, 0.0, 0.0),))

    @classmethod
    def from_pieces(cls, rows: Sequence[tuple]) -> "PeriodicBarrier":
        """Build from (t0, t1, level, slope) tuples."""
        return cls(tuple(BarrierPiece(*row) for row in rows))

    # ---- basic geometry ----------------------------------------------------

    @property
    def is_flat(self) -> bool:
        return all(p.slope == 0.0 and p.level == 0.0 for p in self.pieces)

    @property
    def period(self) -> float:
        return self.pieces[-1].end

    @cached_property
    def amplitude(self) -> float:
        if self.is_flat:
            return 0.0
        return max(max(p.level, p.end_level) for p in self.pieces)

    @cached_property
    def _starts(self):
        return [p.start for p in self.pieces]

    def piece_index(self, phase: float) -> int:
        return min(bisect_right(self._starts, phase) - 1, len(self.pieces) - 1)

    def value(self, t: float) -> float:
        """phi(t mod period); right-continuous at piece boundaries."""
        phase = math.fmod(t, self.period)
        if phase < 0.0:
            phase += self.period
        p = self.pieces[self.piece_index(phase)]
        return p.level + p.slope * (phase - p.start)

    def sample_phase(self, rng: np.random.Generator) -> float:
        """Draw U ~ Uniform[0, period)."""
        return rng.random() * self.period

    # ---- invariant measure and derived moments ------------------------------

    @cached_property
    def _measure(self) -> InvariantMeasure:
        if self.is_flat:
            return InvariantMeasure(intervals=(), atoms=((0.0, 1.0),))
        edges = sorted({v for p in self.pieces for v in p.image()})
        s = self.period
        intervals = []
        for lo, hi in zip(edges, edges[1:]):
            if hi - lo <= 0.0:
                continue
            mid = 0.5 * (lo + hi)
            dens = 0.0
            for p in self.pieces:
                ilo, ihi = p.image()
                if ilo < mid < ihi:
                    dens += 1.0 / (s * abs(p.slope))
            if dens > 0.0:
                intervals.append((lo, hi, dens))
        meas = InvariantMeasure(intervals=tuple(intervals))
        if abs(meas.total_mass() - 1.0) > 1e-12:
            raise AssertionError(f"invariant measure mass {meas.total_mass()} != 1")
        return meas

    def invariant_density(self) -> InvariantMeasure:
        """Stationary law of the barrier level (piecewise-constant density)."""
        return self._measure

    def mean_level(self) -> float:
        """E A_0, the stationary mean barrier level."""
        return self._measure.mean()

    def exp_moment(self, gamma: float) -> float:
        """E exp(gamma * A), the barrier's exponential moment."""
        if self.is_flat:
            return 1.0
        return self._measure.exp_moment(gamma)

    def phase_weights(self, z: float) -> np.ndarray:
        """P(phase in piece k | level == z), one weight per piece.

        Membership of z in a piece image uses [min, max) for increasing
        pieces and (min, max] for decreasing ones, so boundary levels
        resolve deterministically.
        """
        if self.is_flat:
            if z != 0.0:
                raise PhaseError(f"flat barrier only attains 0, not {z}")
            return np.ones(1)
        w = np.zeros(len(self.pieces))
        for k, p in enumerate(self.pieces):
            lo, hi = p.image()
            covered = (lo <= z < hi) if p.slope > 0.0 else (lo < z <= hi)
            if covered:
                w[k] = 1.0 / abs(p.slope)
        tot = w.sum()
        if tot == 0.0:
            raise PhaseError(f"level {z} not attained by any piece")
        return w / tot

    # ---- kernel interface ---------------------------------------------------

    def piece_arrays(self):
        """(starts, widths, levels, slopes) as float64 arrays for the kernels."""
        starts = np.array([p.start for p in self.pieces], dtype=float)
        widths = np.array([p.width for p in self.pieces], dtype=float)
        levels = np.array([p.level for p in self.pieces], dtype=float)
        slopes = np.array([p.slope for p in self.pieces], dtype=float)
        return starts, widths, levels, slopes


def zigzag_barrier() -> PeriodicBarrier:
    """Three-slope demo barrier: up at 1, down at 2, up at 3 over period 5/2."""
    return PeriodicBarrier.from_pieces([
        (0.0, 1.0, 0.0, 1.0),
        (1.0, 1.5, 1.0, -2.0),
        (1.5, 2.5, 0.0, 3.0),
    ])
