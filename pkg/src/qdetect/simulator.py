"""
Monte Carlo dynamics of the sensing qubit.

Each realization draws background (and optionally signal) noise on the
control grid and propagates ``|+>`` through the exact 2x2 propagator of
every piecewise-constant step,

    H_k = (a_k sigma_z + b_k sigma_x) / 2,   a_k = J (sqrt(alpha) s_k + eta_k),  b_k = Omega_k,

with instantaneous pulses applied as exact ``sigma_x`` rotations at their
step indices. ``<sigma_x>`` is recorded, which fixes the probability of
reading ``|0>`` after the final Hadamard: ``P = (1 + <sigma_x>) / 2``.
Realizations are propagated in batches, vectorized across the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .filters import ControlTrajectory
from .scenario import SensingScenario
from .spectra import TimeGrid, sample_process

__all__ = ["EnsembleResult", "evolve_realization", "evolve_batch", "simulate_ensemble"]

NORM_TOL = 1e-9


@dataclass
class EnsembleResult:
    """Ensemble-averaged probability of reading ``|0>``.

    ``p_stderr`` is the sample standard deviation over realizations
    divided by ``sqrt(n_realizations)``.
    """

    times: np.ndarray
    p_mean: np.ndarray
    p_stderr: np.ndarray
    n_realizations: int
    signal_present: bool
    seed: int
    meta: dict = field(default_factory=dict)


def _record_steps(grid: TimeGrid, record_times) -> np.ndarray:
    if record_times is None:
        return np.array([grid.n_steps])
    steps = np.rint(np.asarray(record_times, dtype=float) / grid.dt).astype(int)
    if np.any(steps < 0) or np.any(steps > grid.n_steps):
        raise ValueError("record times must lie within the control duration")
    return steps


def evolve_batch(a: np.ndarray, ctrl: ControlTrajectory, record_steps: Sequence[int]) -> np.ndarray:
    """Propagate ``|+>`` for a batch of longitudinal fields.

    Parameters
    ----------
    a : ndarray of shape (batch, n_steps)
        Longitudinal field ``a_k`` of every realization.
    ctrl : ControlTrajectory
    record_steps : sequence of int
        Numbers of completed steps after which ``<sigma_x>`` is recorded.

    Returns
    -------
    ndarray of shape (batch, len(record_steps))
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = ctrl.n_steps
    if a.shape[1] != n:
        raise ValueError(f"field has {a.shape[1]} steps, control has {n}")
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite field value")
    dt = ctrl.grid.dt
    batch = a.shape[0]
    c0 = np.full(batch, 1 / np.sqrt(2), dtype=complex)
    c1 = c0.copy()
    record_steps = np.asarray(record_steps, dtype=int)
    out = np.empty((batch, record_steps.size))
    wanted = {}
    for j, s in enumerate(record_steps):
        wanted.setdefault(int(s), []).append(j)
    pulses = {}
    for i, p in ctrl.pulse_jumps:
        pulses[i] = pulses.get(i, 0.0) + p

    def record(k):
        for j in wanted.get(k, ()):
            out[:, j] = 2 * np.real(np.conj(c0) * c1)

    record(0)
    for k in range(n):
        if k in pulses:
            c0, c1 = _x_rotation(c0, c1, pulses[k])
        b = ctrl.omega[k]
        ak = a[:, k]
        r = np.hypot(ak, b)
        phi = 0.5 * r * dt
        cos = np.cos(phi)
        # sin(phi)/r with the r -> 0 limit; np.sinc(x) = sin(pi x)/(pi x)
        s_over_r = 0.5 * dt * np.sinc(phi / np.pi)
        sz = s_over_r * ak
        sx = s_over_r * b
        n0 = (cos - 1j * sz) * c0 - 1j * sx * c1
        n1 = -1j * sx * c0 + (cos + 1j * sz) * c1
        c0, c1 = n0, n1
        if (k & 1023) == 1023:
            norm = np.sqrt(np.abs(c0) ** 2 + np.abs(c1) ** 2)
            if np.any(np.abs(norm - 1) > NORM_TOL):
                raise FloatingPointError("state norm drifted beyond tolerance")
            c0 /= norm
            c1 /= norm
        record(k + 1)
    return out


def _x_rotation(c0, c1, angle):
    """``exp(-i angle sigma_x / 2)``."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return c * c0 - 1j * s * c1, -1j * s * c0 + c * c1


def evolve_realization(scenario: SensingScenario, ctrl: ControlTrajectory,
                       eta: np.ndarray, s: np.ndarray | None = None,
                       record_times=None) -> np.ndarray:
    """``<sigma_x>`` of one noise realization at ``record_times`` (default: the end)."""
    eta = np.asarray(eta, dtype=float)
    a = eta if s is None else np.sqrt(scenario.snr) * np.asarray(s, dtype=float) + eta
    a = scenario.coupling * a
    steps = _record_steps(ctrl.grid, record_times)
    return evolve_batch(a[None, :], ctrl, steps)[0]


def simulate_ensemble(scenario: SensingScenario, ctrl: ControlTrajectory, n_real: int,
                      seed: int, signal_present: bool, record_times=None,
                      batch_size: int = 500) -> EnsembleResult:
    """Average the ``|0>`` probability over independent noise realizations.

    Realization ``i`` draws its background and signal from two child seeds
    spawned from ``(seed, i)``; the background stream is identical whether
    or not the signal is present, so both hypotheses share background noise.
    """
    if n_real < 1:
        raise ValueError("need at least one realization")
    grid = ctrl.grid
    steps = _record_steps(grid, record_times)
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_real)
    j = scenario.coupling
    root_snr = np.sqrt(scenario.snr)
    count = 0
    mean = np.zeros(steps.size)
    m2 = np.zeros(steps.size)
    for start in range(0, n_real, batch_size):
        chunk = children[start:start + batch_size]
        a = np.empty((len(chunk), grid.n_steps))
        for row, child in enumerate(chunk):
            eta_seed, sig_seed = child.spawn(2)
            a[row] = sample_process(scenario.background, grid, eta_seed)
            if signal_present:
                a[row] = root_snr * sample_process(scenario.signal, grid, sig_seed) + a[row]
        a *= j
        p = 0.5 * (1 + evolve_batch(a, ctrl, steps))
        # merge batch moments (Chan et al. pairwise update)
        nb = p.shape[0]
        mb = p.mean(axis=0)
        m2b = ((p - mb) ** 2).sum(axis=0)
        delta = mb - mean
        total = count + nb
        mean = mean + delta * nb / total
        m2 = m2 + m2b + delta ** 2 * count * nb / total
        count = total
    var = m2 / max(n_real - 1, 1)
    return EnsembleResult(
        times=steps * grid.dt,
        p_mean=mean,
        p_stderr=np.sqrt(var / n_real),
        n_realizations=n_real,
        signal_present=signal_present,
        seed=seed,
    )
