"""Parametric Levy process models with closed-form Laplace exponent.

A model is drift + Brownian component + compound Poisson jumps whose
single-jump law is one of a closed set of variants with analytic moment
generating functions.  That keeps the Laplace exponent

    kappa(alpha) = log E exp(alpha * X_1)
                 = drift*alpha + sigma^2*alpha^2/2 + intensity*(M(alpha) - 1)

exact, along with its derivative, the Lundberg root (positive zero of
kappa) and the exponential change of measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoRootError

__all__ = [
    "ExpPositive",
    "ExpNegative",
    "TwoSidedExp",
    "PointMass",
    "JumpLaw",
    "ExponentDomain",
    "LevyModel",
]


@dataclass(frozen=True)
class ExpPositive:
    """Exponential jump upward: density rate*exp(-rate*y) on y > 0."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError("ExpPositive rate must be > 0")

    def mgf(self, alpha: float) -> float:
        return self.rate / (self.rate - alpha)

    def mgf_prime(self, alpha: float) -> float:
        return self.rate / (self.rate - alpha) ** 2

    def mean(self) -> float:
        return 1.0 / self.rate

    def bounds(self):
        return (-math.inf, self.rate)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y > 0.0, self.rate * np.exp(-self.rate * np.abs(y)), 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, n)

    def tilted(self, gamma: float):
        new_rate = self.rate - gamma
        if new_rate <= 0.0:
            raise DomainError(f"tilt {gamma} kills positive-exponential rate {self.rate}")
        return ExpPositive(new_rate)


@dataclass(frozen=True)
class ExpNegative:
    """Exponential jump downward: -J ~ Exp(rate), density rate*exp(rate*y) on y < 0."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError("ExpNegative rate must be > 0")

    def mgf(self, alpha: float) -> float:
        return self.rate / (self.rate + alpha)

    def mgf_prime(self, alpha: float) -> float:
        return -self.rate / (self.rate + alpha) ** 2

    def mean(self) -> float:
        return -1.0 / self.rate

    def bounds(self):
        return (-self.rate, math.inf)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0.0, self.rate * np.exp(-self.rate * np.abs(y)), 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return -rng.exponential(1.0 / self.rate, n)

    def tilted(self, gamma: float):
        new_rate = self.rate + gamma
        if new_rate <= 0.0:
            raise DomainError(f"tilt {gamma} kills negative-exponential rate {self.rate}")
        return ExpNegative(new_rate)


@dataclass(frozen=True)
class TwoSidedExp:
    """Mixture jump: up ~ Exp(rate_pos) w.p. p_pos, down ~ -Exp(rate_neg) otherwise."""

    p_pos: float
    rate_pos: float
    rate_neg: float

    def __post_init__(self):
        if not (0.0 <= self.p_pos <= 1.0):
            raise ValueError("TwoSidedExp weight must lie in [0, 1]")
        if not (self.rate_pos > 0.0 and self.rate_neg > 0.0):
            raise ValueError("TwoSidedExp rates must be > 0")

    def mgf(self, alpha: float) -> float:
        return (self.p_pos * self.rate_pos / (self.rate_pos - alpha)
                + (1.0 - self.p_pos) * self.rate_neg / (self.rate_neg + alpha))

    def mgf_prime(self, alpha: float) -> float:
        return (self.p_pos * self.rate_pos / (self.rate_pos - alpha) ** 2
                - (1.0 - self.p_pos) * self.rate_neg / (self.rate_neg + alpha) ** 2)

    def mean(self) -> float:
        return self.p_pos / self.rate_pos - (1.0 - self.p_pos) / self.rate_neg

    def bounds(self):
        return (-self.rate_neg, self.rate_pos)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        up = self.p_pos * self.rate_pos * np.exp(-self.rate_pos * np.abs(y))
        dn = (1.0 - self.p_pos) * self.rate_neg * np.exp(-self.rate_neg * np.abs(y))
        return np.where(y > 0.0, up, np.where(y < 0.0, dn, 0.0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        up = rng.random(n) < self.p_pos
        out = np.empty(n)
        out[up] = rng.exponential(1.0 / self.rate_pos, int(up.sum()))
        out[~up] = -rng.exponential(1.0 / self.rate_neg, int(n - up.sum()))
        return out

    def tilted(self, gamma: float):
        rp = self.rate_pos - gamma
        rn = self.rate_neg + gamma
        if rp <= 0.0 or rn <= 0.0:
            raise DomainError(f"tilt {gamma} leaves a non-positive rate")
        wp = self.p_pos * self.rate_pos / rp
        wn = (1.0 - self.p_pos) * self.rate_neg / rn
        return TwoSidedExp(wp / (wp + wn), rp, rn)


@dataclass(frozen=True)
class PointMass:
    """Deterministic jump of a fixed size.

    Lattice-valued, so it violates the non-lattice assumption behind the
    decay asymptotics; kept for structural tests only.
    """

    size: float

    def __post_init__(self):
        if self.size == 0.0:
            raise ValueError("PointMass size must be nonzero")

    def mgf(self, alpha: float) -> float:
        return math.exp(alpha * self.size)

    def mgf_prime(self, alpha: float) -> float:
        return self.size * math.exp(alpha * self.size)

    def mean(self) -> float:
        return self.size

    def bounds(self):
        return (-math.inf, math.inf)

    def density(self, y):
        raise NotImplementedError("PointMass has no density")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.size)

    def tilted(self, gamma: float):
        return PointMass(self.size)


JumpLaw = Union[ExpPositive, ExpNegative, TwoSidedExp, PointMass]


@dataclass(frozen=True)
class ExponentDomain:
    """Open interval (lo, hi) on which the Laplace exponent is finite."""

    lo: float
    hi: float

    def contains(self, alpha: float) -> bool:
        return self.lo < alpha < self.hi


@dataclass(frozen=True)
class LevyModel:
    """Drift + Brownian + compound Poisson process.

    Attributes:
        drift: deterministic rate (level per unit time).
        sigma: diffusion coefficient, >= 0.
        intensity: Poisson jump rate, >= 0.
        jumps: single-jump law; may be None when intensity is 0.
    """

    drift: float
    sigma: float = 0.0
    intensity: float = 0.0
    jumps: JumpLaw | None = None

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.intensity < 0.0:
            raise ValueError("intensity must be >= 0")
        if self.intensity > 0.0 and self.jumps is None:
            raise ValueError("positive intensity requires a jump law")

    @classmethod
    def mm1(cls, lam: float, mu: float) -> "LevyModel":
        """Workload net input of an M/M/1 queue: unit service drain, Exp(mu) arrivals at rate lam."""
        return cls(drift=-1.0, sigma=0.0, intensity=lam, jumps=ExpPositive(mu))

    # ---- Laplace exponent -------------------------------------------------

    def domain(self) -> ExponentDomain:
        if self.intensity > 0.0:
            lo, hi = self.jumps.bounds()
        else:
            lo, hi = -math.inf, math.inf
        return ExponentDomain(lo, hi)

    def kappa(self, alpha: float) -> float:
        """log E exp(alpha X_1); raises DomainError outside the finite interval."""
        if not self.domain().contains(alpha):
            raise DomainError(f"alpha={alpha} outside exponent domain {self.domain()}")
        val = self.drift * alpha + 0.5 * self.sigma ** 2 * alpha * alpha
        if self.intensity > 0.0:
            val += self.intensity * (self.jumps.mgf(alpha) - 1.0)
        return val

    def kappa_prime(self, alpha: float) -> float:
        if not self.domain().contains(alpha):
            raise DomainError(f"alpha={alpha} outside exponent domain {self.domain()}")
        val = self.drift + self.sigma ** 2 * alpha
        if self.intensity > 0.0:
            val += self.intensity * self.jumps.mgf_prime(alpha)
        return val

    def mean_x1(self) -> float:
        """E X_1 = drift + intensity * (mean jump); equals kappa'(0)."""
        val = self.drift
        if self.intensity > 0.0:
            val += self.intensity * self.jumps.mean()
        return val

    def integrable_tail(self) -> bool:
        """Whether the positive jump tail has a finite first moment.

        True for every supported variant; the hook exists so loss-rate
        entry points can refuse heavy-tailed laws added later.
        """
        return True

    # ---- Lundberg root and exponential tilt -------------------------------

    def lundberg_root(self) -> float:
        """Positive zero of kappa, accurate to |kappa| <= 1e-12 * max(1, |kappa'|)."""
        if self.mean_x1() >= 0.0:
            raise NoRootError("E X_1 >= 0: kappa has no positive zero")
        hi = self.domain().hi
        x = None
        prev = 1e-9
        for n in range(1, 200):
            cand = hi * (1.0 - 0.5 ** n) if math.isfinite(hi) else prev * 2.0
            if cand <= prev:
                break
            if self.kappa(cand) > 0.0:
                x = cand
                break
            prev = cand
        if x is None:
            raise NoRootError("kappa stays negative on (0, alpha_hi)")
        root = brentq(self.kappa, prev, x, xtol=1e-15, rtol=8.9e-16)
        for _ in range(8):
            f = self.kappa(root)
            fp = self.kappa_prime(root)
            if abs(f) <= 1e-13 * max(1.0, abs(fp)):
                break
            step = f / fp
            cand = root - step
            if not self.domain().contains(cand) or cand <= 0.0:
                break
            root = cand
        if abs(self.kappa(root)) > 1e-12 * max(1.0, abs(self.kappa_prime(root))):
            raise NoRootError("root polish failed to reach tolerance")
        return root

    def tilt(self, gamma: float) -> "LevyModel":
        """Exponential change of measure: the model with exponent kappa(. + gamma) - kappa(gamma)."""
        if gamma == 0.0:
            return self
        if not self.domain().contains(gamma):
            raise DomainError(f"gamma={gamma} outside exponent domain {self.domain()}")
        drift = self.drift + self.sigma ** 2 * gamma
        if self.intensity > 0.0:
            factor = self.jumps.mgf(gamma)
            return LevyModel(drift, self.sigma, self.intensity * factor, self.jumps.tilted(gamma))
        return LevyModel(drift, self.sigma, 0.0, None)

    def sample_jumps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.intensity == 0.0 or n == 0:
            return np.empty(0)
        return self.jumps.sample(rng, n)
