"""
Control optimization for signal detection.

Two routes maximize the outcome-probability gap at fixed detection time:

* :func:`eigen_optimal_control` -- for white background, where the
  background dephasing does not depend on the control, the best control
  follows from the top eigenvectors of the signal correlation matrix.
* :func:`gradient_optimize` -- Adam ascent on ``log O`` over the Rabi
  frequencies with analytic gradients, for any background.

:func:`grid_search_time` then picks the detection time, and
:func:`crossover_scan` compares spin-locking and CPMG over background
correlation times.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .filters import ControlTrajectory, cumulative_phase, make_cpmg, make_ramsey, make_spin_lock, phase_vector
from .scenario import SensingScenario, objective
from .spectra import CorrelationMatrix, Lorentzian, TimeGrid, WhiteCutoff, correlation

logger = logging.getLogger(__name__)

__all__ = [
    "ObjectiveConfig",
    "OptimizerConfig",
    "OptimizationResult",
    "EigenControls",
    "ControlFamily",
    "objective",
    "log_objective_and_grad",
    "eigen_optimal_control",
    "extract_omega",
    "gradient_optimize",
    "grid_search_time",
    "spin_lock_family",
    "cpmg_family",
    "ramsey_family",
    "eigen_family",
    "gradient_family",
    "crossover_scan",
    "CrossoverScan",
    "fit_crossover",
]

# Relative gap below which the top eigenvalue pair counts as degenerate.
DEGENERACY_TOL = 1e-3

# Largest grid solved with a dense eigensolver.
DENSE_EIG_LIMIT = 2500


@dataclass(frozen=True)
class ObjectiveConfig:
    scenario: SensingScenario
    dt: float
    omega_max: float | None = None

    def grid(self, t: float) -> TimeGrid:
        return TimeGrid.from_duration(t, self.dt)


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam settings for :func:`gradient_optimize`.

    Convergence is declared when ``log O`` changes by less than ``tol``
    over ``patience`` consecutive iterations.
    """

    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 5000
    tol: float = 1e-8
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decay rates must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class OptimizationResult:
    control: ControlTrajectory
    t_opt: float
    objective: float
    trace: np.ndarray
    converged: bool
    n_iter: int = 0


def log_objective_and_grad(omega: np.ndarray, template: ControlTrajectory,
                           g_eta: CorrelationMatrix, g_s: CorrelationMatrix,
                           scenario: SensingScenario) -> tuple[float, np.ndarray]:
    """``log O`` and its gradient with respect to the Rabi frequencies.

    ``template`` supplies the grid and any fixed pulse jumps.

    The chain runs ``Omega -> Lambda -> theta -> theta^H G theta``.
    With ``chi = c theta^H G theta`` and ``theta_k = exp(-i Lambda_k)/sqrt(N)``,
    ``d chi / d Lambda_k = -2 c Im(conj(theta_k) (G theta)_k)``, and since
    ``Lambda_k`` sums ``Omega_j dt`` over ``j < k`` the gradient with respect
    to ``Omega_j`` is ``dt`` times the reverse cumulative sum over ``k > j``.
    """
    ctrl = template.with_omega(omega)
    theta = phase_vector(ctrl)
    scale = 0.5 * scenario.noise_power * ctrl.t * ctrl.grid.dt
    g_theta_eta = g_eta.matvec(theta)
    g_theta_s = g_s.matvec(theta)
    chi_eta = scale * np.vdot(theta, g_theta_eta).real
    chi_s = scale * scenario.snr * np.vdot(theta, g_theta_s).real
    if chi_s <= 0:
        return -np.inf, np.zeros_like(omega)
    log_o = np.log(0.5) - chi_eta + np.log(-np.expm1(-chi_s))

    dchi_eta = -2 * scale * np.imag(np.conj(theta) * g_theta_eta)
    dchi_s = -2 * scale * scenario.snr * np.imag(np.conj(theta) * g_theta_s)
    dlam = -dchi_eta + dchi_s / np.expm1(chi_s)
    # d Lambda_k / d Omega_j = dt for k > j
    tail = np.cumsum(dlam[::-1])[::-1]
    grad = np.zeros_like(omega)
    grad[:-1] = tail[1:] * ctrl.grid.dt
    return float(log_o), grad


@dataclass
class EigenControls:
    """The two controls built from the top eigenpair, driving near ``+/- omega0``."""

    plus: ControlTrajectory
    minus: ControlTrajectory
    eigenvalues: np.ndarray
    degenerate: bool
    interpolated: int = 0

    def __iter__(self):
        return iter((self.plus, self.minus))


def _top_eigenpairs(G: CorrelationMatrix, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    n = len(G)
    if n <= DENSE_EIG_LIMIT or G.model is None:
        if n > DENSE_EIG_LIMIT:
            logger.warning("dense eigensolve of a %d x %d matrix", n, n)
        vals, vecs = scipy.linalg.eigh(G.dense, subset_by_index=[n - k, n - 1])
    else:
        vals, vecs = _top_eigenpairs_nystrom(G, k)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def _top_eigenpairs_nystrom(G: CorrelationMatrix, k: int, block: int = 24,
                            iters: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Top eigenpairs of a large Toeplitz correlation matrix.

    The leading eigenvectors are smooth, so they are first solved on a
    subsampled grid, carried to the full grid by Nystrom interpolation and
    then polished by a few block subspace iterations with Rayleigh-Ritz
    projection (FFT matrix products only).
    """
    model, dt, n = G.model, G.dt, len(G)
    if isinstance(model, WhiteCutoff):
        coarse_dt = np.pi / (4 * (model.omega0 + model.delta_omega))
    elif isinstance(model, Lorentzian):
        coarse_dt = model.sigma_t / 4
    else:
        coarse_dt = dt
    stride = max(1, int(coarse_dt / dt))
    times = np.arange(n) * dt
    coarse = times[::stride]
    block = min(block, coarse.size)
    weight = stride * dt
    g_coarse = correlation(model, np.subtract.outer(coarse, coarse)) * weight
    vals, vecs = scipy.linalg.eigh(g_coarse, subset_by_index=[coarse.size - block, coarse.size - 1])
    x = correlation(model, np.subtract.outer(times, coarse)) @ vecs * (weight / vals)
    for _ in range(iters + 1):
        q, _ = np.linalg.qr(x)
        gq = G.matvec(q)
        h = q.T @ gq
        vals, u = np.linalg.eigh(0.5 * (h + h.T))
        x = gq @ u
    ritz = q @ u
    order = np.argsort(vals)[::-1][:k]
    return vals[order], ritz[:, order]


def eigen_optimal_control(g_s: CorrelationMatrix, grid: TimeGrid) -> EigenControls:
    """Controls whose phase vectors best overlap the top eigenvectors of ``g_s``.

    The top eigenpair of a band-pass correlation matrix is (nearly) doubly
    degenerate; the entrywise phase of ``phi_plus +/- i phi_minus`` is a valid
    phase vector. Entries where the combination vanishes take the phase
    interpolated from their neighbours.
    """
    if len(g_s) != grid.n_steps:
        raise ValueError("correlation matrix and grid disagree in size")
    if grid.n_steps < 2:
        raise ValueError("need at least two steps for an eigen-optimal control")
    vals, vecs = _top_eigenpairs(g_s, 2)
    gap = abs(vals[0] - vals[1]) / abs(vals[0])
    degenerate = gap < DEGENERACY_TOL
    if not degenerate:
        logger.warning("top eigenpair not degenerate (relative gap %.3g)", gap)
    phi_p, phi_m = vecs[:, 0], vecs[:, 1]
    controls = []
    n_bad = 0
    for sign in (1, -1):
        z = phi_p + sign * 1j * phi_m
        small = np.abs(z) < 1e-12
        n_bad += int(small.sum())
        phase = np.angle(z)
        if small.any():
            good = np.flatnonzero(~small)
            unwrapped = np.unwrap(phase[good])
            phase = np.interp(np.arange(z.size), good, unwrapped)
        theta = np.exp(1j * phase) / np.sqrt(z.size)
        controls.append(extract_omega(theta, grid))
    plus, minus = controls
    # label by the sign of the mean drive
    if np.mean(plus.omega) < np.mean(minus.omega):
        plus, minus = minus, plus
    return EigenControls(plus, minus, vals, degenerate, n_bad)


def extract_omega(theta: np.ndarray, grid: TimeGrid) -> ControlTrajectory:
    """Control whose phase vector is ``theta``.

    Step ``k`` rotates by the wrapped phase difference
    ``arg theta_k - arg theta_{k+1}``, shifted by multiples of ``2 pi`` to the
    branch closest to the previous step's rotation. The last step, which
    does not affect ``theta``, repeats its predecessor. A non-zero phase of
    ``theta_0`` is kept as a pulse jump at index 0 so the round trip is exact.
    """
    theta = np.asarray(theta)
    n = grid.n_steps
    if theta.shape != (n,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({n},)")
    arg = np.angle(theta)
    step = arg[:-1] - arg[1:]
    step = (step + np.pi) % (2 * np.pi) - np.pi
    two_pi = 2 * np.pi
    for k in range(1, step.size):
        step[k] += two_pi * np.round((step[k - 1] - step[k]) / two_pi)
    omega = np.empty(n)
    omega[:-1] = step / grid.dt
    omega[-1] = omega[-2] if n > 1 else 0.0
    jumps = ((0, -arg[0]),) if arg[0] != 0 else ()
    return ControlTrajectory(grid, omega, jumps, label="eigen_opt")


def gradient_optimize(cfg: ObjectiveConfig, t: float, init: ControlTrajectory,
                      opt: OptimizerConfig = OptimizerConfig(),
                      callback: Callable[[int, np.ndarray, float], None] | None = None) -> OptimizationResult:
    """Adam ascent on ``log O`` at fixed detection time ``t``.

    Pulse jumps of ``init`` stay fixed; only the Rabi frequencies move. With
    ``cfg.omega_max`` set every iterate is clipped to ``[-omega_max, omega_max]``.
    The best control seen is returned.

    Parameters
    ----------
    callback : callable, optional
        Called as ``callback(iteration, omega, log_objective)`` for every
        evaluated iterate.
    """
    grid = cfg.grid(t)
    if init.grid != grid:
        raise ValueError(f"init grid {init.grid} does not match detection grid {grid}")
    g_eta, g_s = cfg.scenario.correlation_matrices(grid)
    template = ControlTrajectory(grid, init.omega, init.pulse_jumps, None, init.label)
    omega = init.omega.copy()
    if cfg.omega_max is not None:
        np.clip(omega, -cfg.omega_max, cfg.omega_max, out=omega)

    m = np.zeros_like(omega)
    v = np.zeros_like(omega)
    b1, b2 = opt.beta1, opt.beta2
    trace = []
    best_val, best_omega = -np.inf, omega.copy()
    converged = False
    for it in range(1, opt.max_iter + 1):
        val, grad = log_objective_and_grad(omega, template, g_eta, g_s, cfg.scenario)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite objective at iteration {it}; trace so far: {trace[-5:]}"
            )
        trace.append(val)
        if callback is not None:
            callback(it, omega, val)
        if val > best_val:
            best_val, best_omega = val, omega.copy()
        if it > opt.patience and abs(val - trace[-1 - opt.patience]) < opt.tol:
            converged = True
            break
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        m_hat = m / (1 - b1 ** it)
        v_hat = v / (1 - b2 ** it)
        omega = omega + opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
        if cfg.omega_max is not None:
            np.clip(omega, -cfg.omega_max, cfg.omega_max, out=omega)

    best = ControlTrajectory(grid, best_omega, init.pulse_jumps, cfg.omega_max, "gradient_opt")
    return OptimizationResult(
        control=best,
        t_opt=grid.t,
        objective=float(np.exp(best_val)),
        trace=np.exp(np.asarray(trace)),
        converged=converged,
        n_iter=len(trace),
    )


@dataclass(frozen=True)
class ControlFamily:
    """A rule producing a control for any detection grid.

    ``prefix_stable`` families yield, for a shorter grid, exactly the prefix
    of a longer control; their whole time scan then costs one evaluation.
    """

    name: str
    build: Callable[[TimeGrid], ControlTrajectory]
    prefix_stable: bool = False


def spin_lock_family(omega0: float) -> ControlFamily:
    return ControlFamily("spin_lock", lambda grid: make_spin_lock(omega0, grid), True)


def cpmg_family(tau_cpmg: float) -> ControlFamily:
    return ControlFamily("cpmg", lambda grid: make_cpmg(tau_cpmg, grid), True)


def ramsey_family() -> ControlFamily:
    return ControlFamily("ramsey", make_ramsey, True)


def eigen_family(scenario: SensingScenario) -> ControlFamily:
    """Eigen-optimal control, rebuilt for each detection time; keeps the better sign."""

    def build(grid: TimeGrid) -> ControlTrajectory:
        _, g_s = scenario.correlation_matrices(grid)
        pair = eigen_optimal_control(g_s, grid)
        return max(pair, key=lambda c: scenario.report(c).objective)

    return ControlFamily("eigen_opt", build)


def gradient_family(cfg: ObjectiveConfig, init: ControlFamily,
                    opt: OptimizerConfig = OptimizerConfig()) -> ControlFamily:
    """Gradient optimum at each detection time, started from ``init``'s control."""

    def build(grid: TimeGrid) -> ControlTrajectory:
        start = init.build(grid)
        if opt.seed is not None and init.name == "spin_lock":
            rng = np.random.default_rng(opt.seed)
            scale = 0.05 * max(np.abs(start.omega).max(), 1.0)
            start = start.with_omega(start.omega + scale * rng.standard_normal(grid.n_steps))
        return gradient_optimize(cfg, grid.t, start, opt).control

    return ControlFamily("gradient_opt", build)


def grid_search_time(cfg: ObjectiveConfig, family: ControlFamily,
                     t_candidates: Sequence[float]) -> tuple[float, ControlTrajectory, float]:
    """Detection time maximizing the objective for ``family``.

    Returns ``(t_opt, control, O_opt)``; ties go to the smaller time.
    """
    if len(t_candidates) == 0:
        raise ValueError("no detection times to search")
    steps = sorted({max(int(round(t / cfg.dt)), 1) for t in t_candidates})
    scenario = cfg.scenario
    if family.prefix_stable:
        full = family.build(TimeGrid(cfg.dt, steps[-1]))
        chi_eta, chi_s = scenario.chi_profiles(full)
        idx = np.asarray(steps) - 1
        values = objective(chi_eta[idx], chi_s[idx])
        best = int(np.argmax(values))
        return steps[best] * cfg.dt, full.truncated(steps[best]), float(values[best])
    best_val, best_n, best_ctrl = -np.inf, None, None
    for n in steps:
        ctrl = family.build(TimeGrid(cfg.dt, n))
        val = scenario.report(ctrl).objective
        if val > best_val:
            best_val, best_n, best_ctrl = val, n, ctrl
    return best_n * cfg.dt, best_ctrl, float(best_val)


def objective_curve(cfg: ObjectiveConfig, family: ControlFamily, t_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Objective at every grid time up to ``t_max`` for a prefix-stable family."""
    if not family.prefix_stable:
        raise ValueError(f"family {family.name!r} is not prefix stable")
    grid = cfg.grid(t_max)
    chi_eta, chi_s = cfg.scenario.chi_profiles(family.build(grid))
    return (np.arange(1, grid.n_steps + 1) * cfg.dt, objective(chi_eta, chi_s))


@dataclass
class CrossoverScan:
    """Objective maxima over ``(omega0, sigma_t)`` and the crossover per ``omega0``.

    ``rows`` holds ``(omega0, sigma_t, O_SL, t_SL, O_CPMG, t_CPMG, O_opt)``
    with ``O_opt`` NaN when the optimizer was not run. ``cross`` maps each
    ``omega0`` to the interpolated crossover correlation time, or None when
    CPMG never overtakes spin-locking in the scanned range.
    """

    rows: list[tuple] = field(default_factory=list)
    cross: dict = field(default_factory=dict)

    columns = ("omega0", "sigma_t", "O_SL", "t_SL", "O_CPMG", "t_CPMG", "O_opt")


def crossover_scan(omega0_list: Sequence[float], sigma_t_list: Sequence[float],
                   scenario: SensingScenario, dt: float, t_max: float,
                   optimizer: OptimizerConfig | None = None) -> CrossoverScan:
    """Spin-lock versus CPMG (``tau = pi / omega0``) over Lorentzian backgrounds.

    The signal keeps the scenario's band half-width and is re-centred at each
    ``omega0``. Both schemes are evaluated at their own optimal detection time
    on the grid up to ``t_max``. The crossover is the first ``sigma_t`` where
    CPMG wins, linearly interpolated in ``sigma_t`` between the neighbours
    where the sign of ``O_CPMG - O_SL`` changes.
    """
    if not len(omega0_list) or not len(sigma_t_list):
        raise ValueError("omega0 and sigma_t lists must be non-empty")
    if list(sigma_t_list) != sorted(sigma_t_list) or list(omega0_list) != sorted(omega0_list):
        raise ValueError("omega0 and sigma_t lists must be sorted ascending")
    if not isinstance(scenario.signal, WhiteCutoff):
        raise ValueError("crossover scan needs a band (white-cutoff) signal")
    half_width = scenario.signal.delta_omega
    n_max = int(round(t_max / dt))
    candidates = np.arange(1, n_max + 1) * dt
    scan = CrossoverScan()
    for omega0 in omega0_list:
        diffs = []
        for sigma_t in sigma_t_list:
            sc = SensingScenario(scenario.noise_power, scenario.snr, Lorentzian(sigma_t),
                                 WhiteCutoff(omega0, half_width))
            cfg = ObjectiveConfig(sc, dt)
            t_sl, _, o_sl = grid_search_time(cfg, spin_lock_family(omega0), candidates)
            t_cp, ctrl_cp, o_cp = grid_search_time(cfg, cpmg_family(np.pi / omega0), candidates)
            o_opt = np.nan
            if optimizer is not None:
                t_best = t_sl if o_sl >= o_cp else t_cp
                grid = cfg.grid(t_best)
                rng = np.random.default_rng(optimizer.seed)
                init = make_spin_lock(omega0, grid)
                init = init.with_omega(init.omega + 0.05 * omega0 * rng.standard_normal(grid.n_steps))
                o_opt = gradient_optimize(cfg, t_best, init, optimizer).objective
            scan.rows.append((omega0, sigma_t, o_sl, t_sl, o_cp, t_cp, o_opt))
            diffs.append(o_cp - o_sl)
            logger.info("omega0=%g sigma_t=%g O_SL=%.6g O_CPMG=%.6g", omega0, sigma_t, o_sl, o_cp)
        scan.cross[omega0] = _first_crossing(np.asarray(sigma_t_list, float), np.asarray(diffs))
    return scan


def _first_crossing(x: np.ndarray, d: np.ndarray) -> float | None:
    wins = np.flatnonzero(d > 0)
    if wins.size == 0:
        return None
    k = wins[0]
    if k == 0:
        return float(x[0])
    x0, x1, d0, d1 = x[k - 1], x[k], d[k - 1], d[k]
    return float(x0 + (x1 - x0) * (-d0) / (d1 - d0))


def fit_crossover(cross: dict) -> dict:
    """Linear fit of ``1 / sigma_t_cross`` against ``omega0``."""
    pts = sorted((w, 1 / s) for w, s in cross.items() if s is not None)
    if len(pts) < 2:
        raise ValueError("need at least two crossover points to fit")
    x, y = np.array(pts).T
    fit = scipy.stats.linregress(x, y)
    return {
        "slope": float(fit.slope),
        "intercept": float(fit.intercept),
        "r_squared": float(fit.rvalue ** 2),
        "omega0": x.tolist(),
        "inv_sigma_cross": y.tolist(),
    }
