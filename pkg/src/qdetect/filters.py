"""
Control trajectories, filter functions and second-cumulant dephasing.

A control is a piecewise-constant Rabi frequency on a uniform grid plus
optional instantaneous pulses, stored as exact jumps of the accumulated
rotation angle ``Lambda``. All discretizations use the left-endpoint rule:
``Lambda_k = sum_{j<k} Omega_j dt + (jumps at indices <= k)``.

The dephasing exponent is available in three equivalent forms:

* :func:`chi_toeplitz` -- quadratic form of the phase vector with the
  Toeplitz correlation matrix (the production path),
* :func:`chi_quadrature` -- the direct double sum over time pairs,
* :func:`chi_spectral` -- overlap of the power spectrum with ``|F_t|**2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.signal

from .spectra import (
    CorrelationMatrix,
    NoiseModel,
    TimeGrid,
    White,
    WhiteCutoff,
    WhiteNoiseError,
    correlation,
    spectrum,
)

__all__ = [
    "ControlTrajectory",
    "DephasingReport",
    "QuadratureWarning",
    "cumulative_phase",
    "phase_vector",
    "filter_function",
    "filter_function_fft",
    "ff_normalization",
    "chi_toeplitz",
    "chi_profile",
    "chi_quadrature",
    "chi_spectral",
    "outcome_probability",
    "make_spin_lock",
    "make_cpmg",
    "make_ramsey",
]


class QuadratureWarning(RuntimeWarning):
    """The spectral integration window misses a noticeable part of the integrand."""


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """Piecewise-constant single-axis control.

    Parameters
    ----------
    grid : TimeGrid
    omega : ndarray
        Rabi frequency on each step, length ``grid.n_steps``.
    pulse_jumps : tuple of (int, float)
        ``(step index, rotation angle)`` for instantaneous pulses applied at
        the start of that step. Index ``n_steps`` marks a pulse at the end.
    omega_max : float, optional
        Power bound; when set every ``|omega_k|`` must respect it.
    """

    grid: TimeGrid
    omega: np.ndarray
    pulse_jumps: tuple = ()
    omega_max: float | None = None
    label: str = field(default="custom", compare=False)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.shape != (self.grid.n_steps,):
            raise ValueError(
                f"omega has shape {omega.shape}, expected ({self.grid.n_steps},)"
            )
        object.__setattr__(self, "omega", omega)
        jumps = tuple(sorted((int(i), float(p)) for i, p in self.pulse_jumps))
        for i, p in jumps:
            if not 0 <= i <= self.grid.n_steps:
                raise ValueError(f"pulse index {i} outside [0, {self.grid.n_steps}]")
            if not np.isfinite(p):
                raise ValueError(f"pulse angle at index {i} is not finite")
        object.__setattr__(self, "pulse_jumps", jumps)
        if self.omega_max is not None and np.any(np.abs(omega) > self.omega_max * (1 + 1e-12)):
            raise ValueError(f"control exceeds power bound omega_max={self.omega_max}")

    @property
    def t(self) -> float:
        return self.grid.t

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def with_omega(self, omega: np.ndarray) -> "ControlTrajectory":
        return ControlTrajectory(self.grid, omega, self.pulse_jumps, self.omega_max, self.label)

    def truncated(self, n_steps: int) -> "ControlTrajectory":
        """The first ``n_steps`` steps of this control."""
        grid = TimeGrid(self.grid.dt, n_steps)
        jumps = tuple((i, p) for i, p in self.pulse_jumps if i < n_steps)
        return ControlTrajectory(grid, self.omega[:n_steps], jumps, self.omega_max, self.label)


@dataclass(frozen=True)
class DephasingReport:
    """Second-cumulant prediction for both hypotheses at one detection time."""

    t: float
    chi_eta: float
    chi_s: float
    p0_eta: float
    p0_sig: float
    objective: float


def cumulative_phase(ctrl: ControlTrajectory) -> np.ndarray:
    """Accumulated rotation angle ``Lambda_k`` at the left end of every step."""
    n = ctrl.n_steps
    lam = np.zeros(n)
    np.cumsum(ctrl.omega[:-1] * ctrl.grid.dt, out=lam[1:])
    if ctrl.pulse_jumps:
        kicks = np.zeros(n + 1)
        for i, p in ctrl.pulse_jumps:
            kicks[i] += p
        lam += np.cumsum(kicks)[:n]
    return lam


def phase_vector(ctrl: ControlTrajectory) -> np.ndarray:
    """Normalized phase vector ``exp(-i Lambda_k) / sqrt(N)``."""
    return np.exp(-1j * cumulative_phase(ctrl)) / np.sqrt(ctrl.n_steps)


def filter_function(ctrl: ControlTrajectory, omega, chunk: int = 2**22) -> np.ndarray:
    """Filter function ``F_t(omega) = sum_k exp(-i omega t_k + i Lambda_k) dt``.

    Evaluated directly at each requested frequency (left-endpoint rule).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    t = ctrl.grid.times
    u = np.exp(1j * cumulative_phase(ctrl)) * ctrl.grid.dt
    out = np.empty(omega.shape, dtype=complex)
    flat_w = omega.ravel()
    flat_out = out.ravel()
    rows = max(1, chunk // t.size)
    for start in range(0, flat_w.size, rows):
        w = flat_w[start:start + rows]
        flat_out[start:start + rows] = np.exp(-1j * np.outer(w, t)) @ u
    return out


def filter_function_fft(ctrl: ControlTrajectory, n_fft: int | None = None):
    """Filter function on the uniform grid ``2 pi m / (n_fft dt)`` covering the Nyquist band.

    Returns
    -------
    omega, F : ndarray
        Frequencies in ``[-pi/dt, pi/dt]`` (both ends included, the
        discrete filter function being periodic) and the filter function.
    """
    n = ctrl.n_steps
    dt = ctrl.grid.dt
    if n_fft is None:
        n_fft = 1 << int(np.ceil(np.log2(8 * n)))
    u = np.exp(1j * cumulative_phase(ctrl)) * dt
    f = np.fft.fftshift(np.fft.fft(u, n_fft))
    omega = np.fft.fftshift(np.fft.fftfreq(n_fft, dt)) * 2 * np.pi
    # close the period so the grid spans [-pi/dt, pi/dt]
    omega = np.append(omega, np.pi / dt)
    f = np.append(f, f[0])
    return omega, f


def ff_normalization(ctrl: ControlTrajectory, window: float | None = None,
                     n_points: int | None = None) -> float:
    """``(1/2pi) int |F_t(omega)|**2 domega`` by trapezoid quadrature on ``[-W, W]``.

    The default window is the Nyquist band ``pi / dt``, over which the
    discrete filter function is periodic; it is sampled by FFT. Narrower
    windows are sampled directly with ``n_points`` nodes.
    """
    if window is None:
        w, f = filter_function_fft(ctrl)
    else:
        if n_points is None:
            # resolve oscillations of period ~ 2 pi / t with >= 16 points each
            n_points = int(16 * window * ctrl.t / np.pi) + 1
        w = np.linspace(-window, window, n_points)
        f = filter_function(ctrl, w)
    return float(scipy.integrate.trapezoid(np.abs(f) ** 2, w) / (2 * np.pi))


def chi_toeplitz(ctrl: ControlTrajectory, G: CorrelationMatrix, noise_power: float,
                 snr_scale: float = 1.0) -> float:
    """Dephasing exponent ``(1/2) snr J**2 t dt theta^H G theta``.

    Parameters
    ----------
    ctrl : ControlTrajectory
    G : CorrelationMatrix
        Correlation matrix of the same dimension as the control.
    noise_power : float
        ``J**2``.
    snr_scale : float
        1 for the background, ``alpha`` for the signal.
    """
    if len(G) != ctrl.n_steps:
        raise ValueError(f"dimension mismatch: G is {len(G)}, control has {ctrl.n_steps} steps")
    theta = phase_vector(ctrl)
    q = G.quad_form(theta)
    if abs(q.imag) > 1e-9 * max(1.0, abs(q.real)):
        raise ArithmeticError(f"quadratic form has imaginary part {q.imag}")
    chi = 0.5 * snr_scale * noise_power * ctrl.t * ctrl.grid.dt * q.real
    if chi < -1e-9:
        raise ArithmeticError(f"negative dephasing exponent {chi}")
    return max(chi, 0.0)


def chi_profile(ctrl: ControlTrajectory, G: CorrelationMatrix, noise_power: float,
                snr_scale: float = 1.0) -> np.ndarray:
    """``chi`` of every prefix of ``ctrl``: entry ``n-1`` is the exponent at ``t = n dt``.

    Each prefix ``Q(n) = sum_{i,j<n} conj(c_i) g_{i-j} c_j`` adds the new
    diagonal term plus twice the real part of the causal correlation with
    all earlier steps, which is one FFT convolution for the whole profile.
    """
    n = ctrl.n_steps
    if len(G) != n:
        raise ValueError(f"dimension mismatch: G is {len(G)}, control has {n} steps")
    c = np.exp(-1j * cumulative_phase(ctrl))
    increments = np.full(n, G.column[0])
    if not G.white and n > 1:
        lagged = np.zeros(n)
        lagged[1:] = G.column[1:]
        history = scipy.signal.fftconvolve(c, lagged)[:n]
        increments += 2 * np.real(np.conj(c) * history)
    q = np.cumsum(increments)
    return np.maximum(0.5 * snr_scale * noise_power * ctrl.grid.dt ** 2 * q, 0.0)


def chi_quadrature(ctrl: ControlTrajectory, model: NoiseModel, noise_power: float,
                   snr_scale: float = 1.0, block: int = 1024) -> float:
    """Dephasing exponent from the direct double Riemann sum over ``(t1, t2)``.

    Does not use the Toeplitz structure; serves as an oracle for the
    other two forms.
    """
    if isinstance(model, White):
        raise WhiteNoiseError()
    t = ctrl.grid.times
    u = np.exp(1j * cumulative_phase(ctrl))
    total = 0.0 + 0.0j
    for start in range(0, t.size, block):
        rows = slice(start, start + block)
        g = correlation(model, np.subtract.outer(t[rows], t))
        total += u[rows] @ g @ np.conj(u)
    chi = 0.5 * noise_power * snr_scale * ctrl.grid.dt ** 2 * total
    return float(chi.real)


def _breakpoints(model: NoiseModel) -> list[float]:
    if isinstance(model, WhiteCutoff):
        lo, hi = model.omega0 - model.delta_omega, model.omega0 + model.delta_omega
        return [-hi, -lo, lo, hi]
    return [0.0]


def _tail_mass(model: NoiseModel, window: float) -> float:
    """``int_{|omega| > W} S(omega) domega``."""
    if isinstance(model, WhiteCutoff):
        lo, hi = model.omega0 - model.delta_omega, model.omega0 + model.delta_omega
        h = np.pi / (2 * model.delta_omega)
        return 2 * h * max(0.0, hi - max(window, lo))
    return 4 * np.arctan(1 / (window * model.sigma_t))


def chi_spectral(ctrl: ControlTrajectory, model: NoiseModel, noise_power: float,
                 snr_scale: float = 1.0, quad_window: float | None = None,
                 quad_points: int | None = None, order: int = 8) -> float:
    """Dephasing exponent as the overlap ``(1/2pi) int S(omega) |F_t(omega)|**2 domega``.

    Composite Gauss-Legendre quadrature on ``[-W, W]`` with panel edges at
    the spectrum's discontinuities. The default window is
    ``omega0 + delta_omega + 20 pi / t`` for a band spectrum and
    ``100 / sigma_t + 20 pi / t`` for a Lorentzian (pulsed controls keep
    weight at odd harmonics well beyond ``1 / sigma_t``). A
    :class:`QuadratureWarning` is issued when the estimated contribution from
    outside the window exceeds 1 % of the result.

    Parameters
    ----------
    quad_window : float, optional
        Half-width ``W`` of the integration window.
    quad_points : int, optional
        Approximate total number of nodes; by default panels are no wider
        than ``pi / (2 t)``.
    order : int
        Gauss-Legendre nodes per panel.
    """
    if isinstance(model, White):
        raise WhiteNoiseError()
    t = ctrl.t
    if quad_window is None:
        if isinstance(model, WhiteCutoff):
            quad_window = model.omega0 + model.delta_omega
        else:
            quad_window = 100 / model.sigma_t
        quad_window += 20 * np.pi / t
    W = float(quad_window)
    if quad_points is None:
        n_panels = int(np.ceil(2 * W / (np.pi / (2 * t))))
    else:
        n_panels = max(1, quad_points // order)
    edges = np.linspace(-W, W, n_panels + 1)
    edges = np.unique(np.concatenate([edges, [b for b in _breakpoints(model) if -W < b < W]]))
    x, wts = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * wts[None, :]).ravel()
    s = spectrum(model, nodes)
    keep = s > 0
    f2 = np.abs(filter_function(ctrl, nodes[keep])) ** 2
    overlap = np.sum(weights[keep] * s[keep] * f2) / (2 * np.pi)
    chi = 0.5 * snr_scale * noise_power * overlap

    # tail beyond W: FFT samples up to Nyquist, periodic mean t*dt of |F|^2 past it
    nyquist = np.pi / ctrl.grid.dt
    tail = t * ctrl.grid.dt * _tail_mass(model, max(W, nyquist))
    if W < nyquist:
        w_fft, f_fft = filter_function_fft(ctrl)
        outside = np.abs(w_fft) > W
        tail += scipy.integrate.trapezoid(
            np.where(outside, spectrum(model, w_fft) * np.abs(f_fft) ** 2, 0.0), w_fft)
    tail *= 0.5 * snr_scale * noise_power / (2 * np.pi)
    if tail > 0.01 * abs(chi):
        warnings.warn(
            f"spectral window W={W:g} too narrow: tail estimate {tail:.3g} vs chi {chi:.3g}",
            QuadratureWarning,
            stacklevel=2,
        )
    return float(chi)


def outcome_probability(chi) -> np.ndarray | float:
    """Probability of measuring ``|0>`` after the final Hadamard, ``(1 + exp(-chi)) / 2``."""
    return 0.5 * (1 + np.exp(-np.asarray(chi)))


def make_ramsey(grid: TimeGrid) -> ControlTrajectory:
    """Free evolution."""
    return ControlTrajectory(grid, np.zeros(grid.n_steps), label="ramsey")


def make_spin_lock(omega0: float, grid: TimeGrid) -> ControlTrajectory:
    """Constant drive at Rabi frequency ``omega0``."""
    return ControlTrajectory(grid, np.full(grid.n_steps, float(omega0)), label="spin_lock")


def make_cpmg(tau_cpmg: float, grid: TimeGrid) -> ControlTrajectory:
    """Ideal pi pulses at ``tau/2, 3 tau/2, ...`` (strictly before ``t``).

    Pulse times are rounded to the nearest grid index.
    """
    dt = grid.dt
    if tau_cpmg < 2 * dt:
        raise ValueError(
            f"tau_cpmg={tau_cpmg:g} is not resolvable with dt={dt:g}; "
            f"use dt <= {tau_cpmg / 2:g}"
        )
    times = np.arange(0.5 * tau_cpmg, grid.t - 1e-12 * grid.t, tau_cpmg)
    idx = np.rint(times / dt).astype(int)
    jumps = tuple((int(i), np.pi) for i in idx)
    return ControlTrajectory(grid, np.zeros(grid.n_steps), jumps, label="cpmg")
