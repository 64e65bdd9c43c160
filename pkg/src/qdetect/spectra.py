"""
Stationary Gaussian noise and signal models.

Each model exposes its two-point correlation ``g(tau)`` and power spectrum
``S(omega)`` using the normalization ``g(0) = 1`` and
``int S(omega) domega = 2 pi``. Discretized correlations are held as
symmetric Toeplitz matrices (:class:`CorrelationMatrix`), and
:func:`sample_process` draws realizations for the Monte Carlo simulator.

The ``White`` model has no pointwise correlation. On a grid of step ``dt``
it is represented by the identity correlation matrix, which together with
noise power ``J**2`` gives the dephasing rate ``gamma = J**2 * dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
import scipy.signal

__all__ = [
    "White",
    "Lorentzian",
    "WhiteCutoff",
    "NoiseModel",
    "TimeGrid",
    "CorrelationMatrix",
    "WhiteNoiseError",
    "correlation",
    "spectrum",
    "build_toeplitz",
    "sample_process",
]

# Number of cosines used to synthesize band-limited realizations.
N_SPECTRAL_COMPONENTS = 128


class WhiteNoiseError(ValueError):
    """Raised when a pointwise correlation or spectrum of white noise is requested."""

    def __init__(self):
        super().__init__(
            "white noise has distributional correlation; use the discrete white-noise path"
        )


@dataclass(frozen=True)
class White:
    """Delta-correlated noise; discretized as unit-variance iid steps."""

    @property
    def name(self) -> str:
        return "white"


@dataclass(frozen=True)
class Lorentzian:
    """Exponentially correlated noise, ``g(tau) = exp(-|tau| / sigma_t)``."""

    sigma_t: float

    def __post_init__(self):
        if not self.sigma_t > 0:
            raise ValueError(f"sigma_t must be positive, got {self.sigma_t}")

    @property
    def name(self) -> str:
        return "lorentzian"


@dataclass(frozen=True)
class WhiteCutoff:
    """Flat spectrum on the two bands ``omega0 - delta_omega <= |omega| <= omega0 + delta_omega``.

    ``delta_omega`` is the half-width, so each band is ``2 * delta_omega`` wide.
    """

    omega0: float
    delta_omega: float

    def __post_init__(self):
        if not self.delta_omega > 0:
            raise ValueError(f"delta_omega must be positive, got {self.delta_omega}")
        if not self.omega0 >= 0:
            raise ValueError(f"omega0 must be non-negative, got {self.omega0}")

    @property
    def name(self) -> str:
        return "white_cutoff"

    @property
    def band(self) -> tuple[float, float]:
        return max(self.omega0 - self.delta_omega, 0.0), self.omega0 + self.delta_omega

    @property
    def peak(self) -> float:
        """Spectral density inside the band."""
        if self.omega0 >= self.delta_omega:
            return np.pi / (2 * self.delta_omega)
        # overlapping bands around zero frequency add up
        return np.pi / (2 * self.delta_omega) * 2.0


NoiseModel = Union[White, Lorentzian, WhiteCutoff]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid of ``n_steps`` steps of duration ``dt``."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @classmethod
    def from_duration(cls, t: float, dt: float) -> "TimeGrid":
        """Grid covering duration ``t`` (rounded to the nearest whole step)."""
        return cls(dt=dt, n_steps=max(int(round(t / dt)), 1))

    @property
    def t(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        """Left endpoints ``k * dt`` of every step."""
        return np.arange(self.n_steps) * self.dt


def correlation(model: NoiseModel, tau) -> np.ndarray | float:
    """Two-point correlation ``g(tau)``.

    Parameters
    ----------
    model : Lorentzian or WhiteCutoff
    tau : float or array_like
        Time lag.

    Returns
    -------
    float or ndarray
        Correlation at each lag; ``g(0) == 1``.
    """
    tau = np.asarray(tau, dtype=float)
    if isinstance(model, Lorentzian):
        out = np.exp(-np.abs(tau) / model.sigma_t)
    elif isinstance(model, WhiteCutoff):
        # np.sinc(x) = sin(pi x) / (pi x)
        out = np.cos(model.omega0 * tau) * np.sinc(model.delta_omega * tau / np.pi)
    elif isinstance(model, White):
        raise WhiteNoiseError()
    else:
        raise TypeError(f"unknown noise model {model!r}")
    return out[()] if out.ndim == 0 else out


def spectrum(model: NoiseModel, omega) -> np.ndarray | float:
    """Power spectrum ``S(omega)``, normalized to integrate to ``2 pi``."""
    omega = np.asarray(omega, dtype=float)
    if isinstance(model, Lorentzian):
        s = model.sigma_t
        out = 2 * s / (1 + (omega * s) ** 2)
    elif isinstance(model, WhiteCutoff):
        height = np.pi / (2 * model.delta_omega)
        w = np.abs(omega)
        out = height * (np.abs(w - model.omega0) <= model.delta_omega)
        # mirror band folds back over zero when omega0 < delta_omega
        out = out + height * (np.abs(w + model.omega0) <= model.delta_omega)
        out = out.astype(float)
    elif isinstance(model, White):
        raise WhiteNoiseError()
    else:
        raise TypeError(f"unknown noise model {model!r}")
    return out[()] if out.ndim == 0 else out


class CorrelationMatrix:
    """Symmetric Toeplitz correlation matrix ``G[i, j] = g((i - j) dt)``.

    Only the first column is stored. Products with the matrix go through
    an FFT-based Toeplitz multiply, so large grids never need ``N**2`` memory;
    :attr:`dense` materializes the full matrix on demand.

    Attributes
    ----------
    column : ndarray
        First column ``g(k dt)`` for ``k = 0 .. N-1``.
    white : bool
        True for the identity matrix of the discrete white-noise convention,
        where the noise power ``J**2`` is read as ``gamma / dt``.
    model, dt : optional
        The model and step the matrix was sampled from, when known.
    """

    def __init__(self, column: np.ndarray, white: bool = False,
                 model: NoiseModel | None = None, dt: float | None = None):
        self.column = np.asarray(column, dtype=float)
        self.white = white
        self.model = model
        self.dt = dt
        self._dense = None

    def __len__(self):
        return self.column.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.column.size, self.column.size)

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = scipy.linalg.toeplitz(self.column)
        return self._dense

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return ``G @ x`` for a vector or a stack of column vectors."""
        x = np.asarray(x)
        if x.shape[0] != self.column.size:
            raise ValueError(
                f"dimension mismatch: matrix is {self.column.size}, vector is {x.shape[0]}"
            )
        if self.white:
            return x.copy()
        n = self.column.size
        if n <= 512:
            return self.dense @ x
        if np.iscomplexobj(x):
            return self.matvec(x.real) + 1j * self.matvec(x.imag)
        return scipy.linalg.matmul_toeplitz(self.column, x, check_finite=False)

    def quad_form(self, x: np.ndarray) -> complex:
        """``x^H G x``."""
        return np.vdot(x, self.matvec(x))

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.dense)


def build_toeplitz(model: NoiseModel, grid: TimeGrid) -> CorrelationMatrix:
    """Correlation matrix of ``model`` sampled on ``grid``.

    White noise yields the identity flagged with ``white=True``.
    """
    if isinstance(model, White):
        column = np.zeros(grid.n_steps)
        column[0] = 1.0
        return CorrelationMatrix(column, white=True, model=model, dt=grid.dt)
    lags = np.arange(grid.n_steps) * grid.dt
    return CorrelationMatrix(correlation(model, lags), model=model, dt=grid.dt)


def sample_process(model: NoiseModel, grid: TimeGrid, seed) -> np.ndarray:
    """Draw one zero-mean, unit-variance realization on ``grid``.

    Parameters
    ----------
    model : NoiseModel
    grid : TimeGrid
    seed : int, numpy.random.SeedSequence or numpy.random.Generator
        Each call builds its own generator from ``seed``; equal seeds give
        bit-identical realizations.

    Returns
    -------
    ndarray of shape (n_steps,)
        Value of the process held constant over each step.

    Notes
    -----
    * Lorentzian: exact Ornstein-Uhlenbeck recursion started from the
      stationary distribution.
    * WhiteCutoff: sum of ``N_SPECTRAL_COMPONENTS`` cosines with one
      frequency drawn uniformly in each of that many equal strata of the
      band, iid uniform phases and amplitude ``sqrt(2 / M)``.
    * White: iid standard normal steps. With the Hamiltonian coupling ``J``
      this accumulates phase variance ``J**2 dt`` per unit time, matching
      the identity correlation matrix and ``gamma = J**2 dt``.
    """
    rng = np.random.default_rng(seed)
    n = grid.n_steps
    if isinstance(model, White):
        return rng.standard_normal(n)
    if isinstance(model, Lorentzian):
        rho = np.exp(-grid.dt / model.sigma_t)
        kick = np.sqrt(-np.expm1(-2 * grid.dt / model.sigma_t))
        xi = rng.standard_normal(n)
        xi[1:] *= kick
        # x_k = rho x_{k-1} + kick xi_k is a first-order IIR filter
        return scipy.signal.lfilter([1.0], [1.0, -rho], xi)
    if isinstance(model, WhiteCutoff):
        m = N_SPECTRAL_COMPONENTS
        lo = model.omega0 - model.delta_omega
        width = 2 * model.delta_omega / m
        freqs = lo + (np.arange(m) + rng.uniform(size=m)) * width
        phases = rng.uniform(0, 2 * np.pi, size=m)
        # angle addition over blocks of B steps turns the sum into one matmul:
        # x[k B + j] = Re sum_m exp(i (w_m k B dt + phi_m)) exp(i w_m j dt)
        block = int(np.ceil(np.sqrt(n)))
        starts = np.arange(-(-n // block)) * block * grid.dt
        offsets = np.arange(block) * grid.dt
        head = np.exp(1j * (np.outer(starts, freqs) + phases))
        tail = np.exp(1j * np.outer(offsets, freqs))
        x = (head @ tail.T).real.ravel()[:n]
        return np.sqrt(2.0 / m) * x
    raise TypeError(f"unknown noise model {model!r}")

