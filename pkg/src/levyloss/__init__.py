"""Simulation and numerical analysis of Levy input reflected between a
periodic lower barrier and a finite buffer, with loss-rate estimation,
closed-form cross-checks and decay asymptotics."""

from .analytics import (AsymptoticsReport, IntegralLossInputs, Mm1PrefactorAudit,
                        constant_barrier_reference, fit_asymptote,
                        integral_loss_rate, jump_loss_kernel,
                        mm1_sawtooth_prefactor)
from .barrier import BarrierPiece, InvariantMeasure, PeriodicBarrier, zigzag_barrier
from .errors import (ConfigError, DomainError, EmptyHistogramError,
                     InfiniteLossError, InsufficientDataError, LevylossError,
                     NoRootError, PhaseError, SimulationError)
from .estimation import (CheckResult, LossRateReport, MartingaleTest,
                         StationaryHistogram, balance_check, barrier_work_check,
                         estimate_loss_rates, martingale_zero_mean,
                         stationary_histogram)
from .model import (ExpNegative, ExpPositive, ExponentDomain, JumpLaw, LevyModel,
                    PointMass, TwoSidedExp)
from .reflection import (MartingaleSample, PathAccumulators, SimConfig,
                         martingale_statistic, run_replicas, simulate)

__version__ = "0.1.0"

__all__ = [
    "LevyModel", "ExpPositive", "ExpNegative", "TwoSidedExp", "PointMass",
    "JumpLaw", "ExponentDomain",
    "PeriodicBarrier", "BarrierPiece", "InvariantMeasure", "zigzag_barrier",
    "SimConfig", "PathAccumulators", "MartingaleSample",
    "simulate", "run_replicas", "martingale_statistic",
    "LossRateReport", "StationaryHistogram", "CheckResult", "MartingaleTest",
    "estimate_loss_rates", "stationary_histogram", "balance_check",
    "barrier_work_check", "martingale_zero_mean",
    "IntegralLossInputs", "integral_loss_rate", "jump_loss_kernel",
    "Mm1PrefactorAudit", "mm1_sawtooth_prefactor",
    "AsymptoticsReport", "fit_asymptote", "constant_barrier_reference",
    "LevylossError", "DomainError", "NoRootError", "PhaseError", "ConfigError",
    "SimulationError", "EmptyHistogramError", "InfiniteLossError",
    "InsufficientDataError",
]
