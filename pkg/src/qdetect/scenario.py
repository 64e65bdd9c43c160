"""Sensing scenario: noise power, SNR, and the background/signal models."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .filters import (
    ControlTrajectory,
    DephasingReport,
    chi_profile,
    chi_toeplitz,
    outcome_probability,
)
from .spectra import CorrelationMatrix, Lorentzian, NoiseModel, TimeGrid, White, WhiteCutoff, build_toeplitz

# Default parameter set, in units where the band center is 10.
NOISE_POWER = 30 / np.pi
SNR = 0.05
DT = 1e-3
BAND_CENTER = 10.0
BAND_HALF_WIDTH = 3.0
# J sigma_t = 0.01 sqrt(30/pi) approximates white background noise
WHITE_PROXY_SIGMA_T = 0.01
# J sigma_t = 1.17
CORRELATED_SIGMA_T = 1.17 / np.sqrt(NOISE_POWER)

__all__ = [
    "SensingScenario",
    "objective",
    "NOISE_POWER",
    "SNR",
    "DT",
    "BAND_CENTER",
    "BAND_HALF_WIDTH",
    "WHITE_PROXY_SIGMA_T",
    "CORRELATED_SIGMA_T",
]


def objective(chi_eta, chi_s):
    """Outcome-probability gap ``exp(-chi_eta) (1 - exp(-chi_s)) / 2``."""
    chi_eta = np.asarray(chi_eta, dtype=float)
    chi_s = np.asarray(chi_s, dtype=float)
    out = -0.5 * np.exp(-chi_eta) * np.expm1(-chi_s)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=32)
def _toeplitz(model: NoiseModel, dt: float, n_steps: int) -> CorrelationMatrix:
    return build_toeplitz(model, TimeGrid(dt, n_steps))


@dataclass(frozen=True)
class SensingScenario:
    """Both detection hypotheses.

    Under the null the qubit sees only the background ``J eta(t)``; under
    the alternative it additionally sees ``J sqrt(alpha) s(t)``.
    """

    noise_power: float = NOISE_POWER
    snr: float = SNR
    background: NoiseModel = field(default_factory=White)
    signal: NoiseModel = field(default_factory=lambda: WhiteCutoff(BAND_CENTER, BAND_HALF_WIDTH))

    def __post_init__(self):
        if not self.noise_power > 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        if not self.snr >= 0:
            raise ValueError(f"snr must be non-negative, got {self.snr}")
        if isinstance(self.signal, White):
            raise ValueError("signal model must have a pointwise correlation")

    @property
    def coupling(self) -> float:
        """``J``."""
        return float(np.sqrt(self.noise_power))

    def correlation_matrices(self, grid: TimeGrid) -> tuple[CorrelationMatrix, CorrelationMatrix]:
        """``(G_eta, G_s)`` on ``grid``; cached per grid."""
        return (_toeplitz(self.background, grid.dt, grid.n_steps),
                _toeplitz(self.signal, grid.dt, grid.n_steps))

    def chi(self, ctrl: ControlTrajectory) -> tuple[float, float]:
        """``(chi_eta, chi_s)`` at the end of ``ctrl``."""
        g_eta, g_s = self.correlation_matrices(ctrl.grid)
        return (chi_toeplitz(ctrl, g_eta, self.noise_power),
                chi_toeplitz(ctrl, g_s, self.noise_power, self.snr))

    def chi_profiles(self, ctrl: ControlTrajectory) -> tuple[np.ndarray, np.ndarray]:
        """``(chi_eta, chi_s)`` at every ``t = n dt`` up to the end of ``ctrl``."""
        g_eta, g_s = self.correlation_matrices(ctrl.grid)
        return (chi_profile(ctrl, g_eta, self.noise_power),
                chi_profile(ctrl, g_s, self.noise_power, self.snr))

    def report(self, ctrl: ControlTrajectory) -> DephasingReport:
        chi_eta, chi_s = self.chi(ctrl)
        return DephasingReport(
            t=ctrl.t,
            chi_eta=chi_eta,
            chi_s=chi_s,
            p0_eta=float(outcome_probability(chi_eta)),
            p0_sig=float(outcome_probability(chi_eta + chi_s)),
            objective=float(objective(chi_eta, chi_s)),
        )

    def with_background(self, background: NoiseModel) -> "SensingScenario":
        return SensingScenario(self.noise_power, self.snr, background, self.signal)

    def with_signal(self, signal: NoiseModel) -> "SensingScenario":
        return SensingScenario(self.noise_power, self.snr, self.background, signal)


def lorentzian_background(j_sigma_t: float, noise_power: float = NOISE_POWER) -> Lorentzian:
    """Lorentzian background from the dimensionless correlation time ``J sigma_t``."""
    return Lorentzian(j_sigma_t / np.sqrt(noise_power))
