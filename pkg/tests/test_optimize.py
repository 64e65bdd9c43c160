from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdetect.filters import ControlTrajectory, chi_toeplitz, make_cpmg, make_ramsey, make_spin_lock, phase_vector
from qdetect.optimize import (
    ControlFamily,
    ObjectiveConfig,
    OptimizerConfig,
    crossover_scan,
    eigen_optimal_control,
    extract_omega,
    fit_crossover,
    gradient_family,
    gradient_optimize,
    grid_search_time,
    log_objective_and_grad,
    objective_curve,
    spin_lock_family,
)
from qdetect.scenario import CORRELATED_SIGMA_T, NOISE_POWER, SNR, SensingScenario, objective
from qdetect.spectra import Lorentzian, TimeGrid, White, WhiteCutoff, build_toeplitz

J2 = NOISE_POWER


def test_objective_limits():
    assert objective(0.3, 0.0) == 0.0
    assert objective(0.0, 1e3) == pytest.approx(0.5)
    assert objective(1.0, 1.0) == pytest.approx(0.5 * np.exp(-1) * (1 - np.exp(-1)))


@given(a=st.floats(0.01, 5), b=st.floats(0.01, 5))
def test_objective_bounded(a, b):
    val = objective(a, b)
    assert 0 < val <= 0.5


@pytest.mark.parametrize("a,b", [(0.05, 0.125), (0.5, 0.1), (1.0, 3.0)])
def test_linear_exponents_closed_form_optimum(a, b):
    t = np.linspace(1e-4, 60, 600_001)
    scan = t[np.argmax(objective(a * t, b * t))]
    assert scan == pytest.approx(np.log((a + b) / a) / b, abs=2e-4)


@dataclass(frozen=True)
class LinearScenario(SensingScenario):
    """Scenario with exponents exactly linear in time: chi_eta = a t, chi_s = b t."""

    a: float = 0.0
    b: float = 0.0

    def chi_profiles(self, ctrl):
        t = np.arange(1, ctrl.n_steps + 1) * ctrl.grid.dt
        return self.a * t, self.b * t

    def chi(self, ctrl):
        return self.a * ctrl.t, self.b * ctrl.t


def test_grid_search_matches_calculus_optimum():
    sc = LinearScenario(a=0.5 * J2 * 1e-3, b=0.125)
    cfg = ObjectiveConfig(sc, 1e-3)
    t_opt, ctrl, o_opt = grid_search_time(cfg, spin_lock_family(10), np.arange(1, 40_001) * 1e-3)
    exact = np.log((sc.a + sc.b) / sc.a) / sc.b
    assert abs(t_opt - exact) <= 1e-3
    assert ctrl.n_steps == round(t_opt / 1e-3)
    assert o_opt == pytest.approx(objective(sc.a * t_opt, sc.b * t_opt))


def test_grid_search_single_candidate():
    cfg = ObjectiveConfig(SensingScenario(), 1e-3)
    t_opt, ctrl, o = grid_search_time(cfg, spin_lock_family(10), [2.5])
    assert t_opt == pytest.approx(2.5) and ctrl.n_steps == 2500 and o > 0


def test_grid_search_rejects_empty():
    with pytest.raises(ValueError):
        grid_search_time(ObjectiveConfig(SensingScenario(), 1e-3), spin_lock_family(10), [])


def test_grid_search_ties_prefer_shorter_time():
    flat = ControlFamily("flat", make_ramsey)
    sc = LinearScenario(a=0.1, b=0.0)
    t_opt, _, _ = grid_search_time(ObjectiveConfig(sc, 0.1), flat, [0.3, 0.1, 0.2])
    assert t_opt == pytest.approx(0.1)


def test_grid_search_generic_family_matches_prefix_path():
    cfg = ObjectiveConfig(SensingScenario(background=Lorentzian(0.3)), 1e-2)
    cands = np.arange(1, 301) * 1e-2
    fast = grid_search_time(cfg, spin_lock_family(10), cands)
    slow = grid_search_time(cfg, ControlFamily("sl", lambda g: make_spin_lock(10, g)), cands)
    assert fast[0] == pytest.approx(slow[0])
    assert fast[2] == pytest.approx(slow[2], rel=1e-9)


def test_spin_lock_objective_unimodal_on_white():
    cfg = ObjectiveConfig(SensingScenario(), 1e-3)
    _, o = objective_curve(cfg, spin_lock_family(10), 60.0)
    signs = np.sign(np.diff(o))
    signs = signs[signs != 0]
    assert signs[0] > 0 and signs[-1] < 0
    assert np.count_nonzero(np.diff(signs)) == 1


# ---- gradient

def _fd_grad(omega, tmpl, g_eta, g_s, sc):
    fd = np.zeros_like(omega)
    for k in range(omega.size):
        h = 1e-5 * max(abs(omega[k]), 1.0)
        e = np.zeros_like(omega)
        e[k] = h
        fd[k] = (log_objective_and_grad(omega + e, tmpl, g_eta, g_s, sc)[0]
                 - log_objective_and_grad(omega - e, tmpl, g_eta, g_s, sc)[0]) / (2 * h)
    return fd


def _componentwise_rel_err(a, b):
    # a component that is identically zero in both counts as exact agreement
    both_zero = (a == 0) & (b == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(a - b) / np.abs(b)
    return np.where(both_zero, 0.0, rel)


@pytest.mark.parametrize("background", [White(), Lorentzian(CORRELATED_SIGMA_T)], ids=repr)
@pytest.mark.parametrize("pulses", [False, True])
def test_gradient_matches_finite_differences(background, pulses, rng):
    sc = SensingScenario(background=background)
    grid = TimeGrid(0.02, 50)
    g_eta, g_s = sc.correlation_matrices(grid)
    tmpl = make_cpmg(0.2, grid) if pulses else make_spin_lock(10, grid)
    for _ in range(5):
        omega = rng.normal(10, 3, grid.n_steps)
        _, grad = log_objective_and_grad(omega, tmpl, g_eta, g_s, sc)
        fd = _fd_grad(omega, tmpl, g_eta, g_s, sc)
        assert _componentwise_rel_err(grad, fd).max() <= 1e-5


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(learning_rate=0)
    with pytest.raises(ValueError):
        OptimizerConfig(beta1=1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(max_iter=0)


def test_projection_holds_for_every_iterate():
    cfg = ObjectiveConfig(SensingScenario(background=Lorentzian(0.3)), 1e-2, omega_max=9.0)
    grid = cfg.grid(2.0)
    init = make_spin_lock(12, grid)
    seen = []

    def check(it, omega, val):
        seen.append(np.abs(omega).max())

    res = gradient_optimize(cfg, 2.0, init, OptimizerConfig(max_iter=200, learning_rate=0.5), callback=check)
    assert len(seen) == res.n_iter
    assert max(seen) <= 9.0
    assert np.abs(res.control.omega).max() <= 9.0
    assert res.control.omega_max == 9.0


def test_optimizer_deterministic():
    cfg = ObjectiveConfig(SensingScenario(background=Lorentzian(0.3)), 1e-2)
    fam = gradient_family(cfg, spin_lock_family(10), OptimizerConfig(max_iter=100, seed=4))
    a = fam.build(cfg.grid(1.5))
    b = fam.build(cfg.grid(1.5))
    assert a.omega.tobytes() == b.omega.tobytes()
    r1 = gradient_optimize(cfg, 1.5, a, OptimizerConfig(max_iter=50))
    r2 = gradient_optimize(cfg, 1.5, b, OptimizerConfig(max_iter=50))
    assert r1.trace.tobytes() == r2.trace.tobytes()


def test_optimizer_rejects_mismatched_init():
    cfg = ObjectiveConfig(SensingScenario(), 1e-2)
    with pytest.raises(ValueError, match="grid"):
        gradient_optimize(cfg, 1.0, make_spin_lock(10, TimeGrid(1e-2, 50)))


def test_white_spin_lock_start_is_near_optimal():
    sc = SensingScenario()
    cfg = ObjectiveConfig(sc, 1e-2)
    init = make_spin_lock(10, cfg.grid(10.0))
    o0 = sc.report(init).objective
    res = gradient_optimize(cfg, 10.0, init, OptimizerConfig(max_iter=500))
    assert res.objective >= o0
    assert res.objective <= 1.01 * o0
    assert 0 < res.objective < 0.5


@pytest.mark.parametrize("seed", [0, 1])
def test_white_random_start_reaches_spin_lock(seed):
    sc = SensingScenario()
    cfg = ObjectiveConfig(sc, 1e-2)
    grid = cfg.grid(3.0)
    init = make_spin_lock(10, grid)
    init = init.with_omega(np.random.default_rng(seed).uniform(0, 20, grid.n_steps))
    res = gradient_optimize(cfg, 3.0, init, OptimizerConfig(max_iter=3000, learning_rate=0.1))
    o_sl = sc.report(make_spin_lock(10, grid)).objective
    assert abs(res.objective / o_sl - 1) <= 0.05
    # smoothed trace trends upward
    smooth = np.convolve(res.trace, np.ones(50) / 50, mode="valid")
    assert np.all(np.diff(smooth) >= -1e-12)


def test_correlated_background_beats_standard_schemes():
    sc = SensingScenario(background=Lorentzian(CORRELATED_SIGMA_T))
    cfg = ObjectiveConfig(sc, 1e-3)
    t = 4.087
    grid = cfg.grid(t)
    o_sl = sc.report(make_spin_lock(10, grid)).objective
    o_cp = sc.report(make_cpmg(np.pi / 10, grid)).objective
    init = make_spin_lock(10, grid)
    init = init.with_omega(init.omega + 0.5 * np.random.default_rng(0).standard_normal(grid.n_steps))
    res = gradient_optimize(cfg, t, init, OptimizerConfig(max_iter=1500, learning_rate=0.1))
    assert res.objective >= max(o_sl, o_cp) * 0.99


# ---- eigen construction

def test_eigen_bound_on_random_controls(rng):
    sc = SensingScenario()
    grid = TimeGrid(1e-2, 400)
    g_s = build_toeplitz(sc.signal, grid)
    g_max = g_s.eigvalsh()[-1]
    bound = 0.5 * J2 * SNR * grid.t * grid.dt * g_max
    for _ in range(20):
        ctrl = ControlTrajectory(grid, rng.normal(10, 4, grid.n_steps))
        assert chi_toeplitz(ctrl, g_s, J2, SNR) <= bound * (1 + 1e-12)


def test_eigen_control_properties():
    sc = SensingScenario()
    grid = TimeGrid.from_duration(3.0, 1e-3)
    _, g_s = sc.correlation_matrices(grid)
    pair = eigen_optimal_control(g_s, grid)
    g_max = pair.eigenvalues[0]
    assert pair.plus.omega.mean() > 0 > pair.minus.omega.mean()
    for ctrl in pair:
        chi_s = chi_toeplitz(ctrl, g_s, J2, SNR)
        assert chi_s <= 0.5 * J2 * SNR * grid.t * grid.dt * g_max * (1 + 1e-12)
    o_sl = sc.report(make_spin_lock(10, grid)).objective
    assert sc.report(pair.plus).objective == pytest.approx(o_sl, rel=0.02)


def test_eigen_large_grid_matches_dense_solver():
    sc = SensingScenario()
    grid = TimeGrid.from_duration(3.2, 1e-3)
    _, g_s = sc.correlation_matrices(grid)
    dense = np.linalg.eigvalsh(g_s.dense)[-2:][::-1]
    from qdetect.optimize import _top_eigenpairs_nystrom
    vals, vecs = _top_eigenpairs_nystrom(g_s, 2)
    np.testing.assert_allclose(vals, dense, rtol=1e-9)
    resid = g_s.matvec(vecs) - vecs * vals
    assert np.abs(resid).max() < 1e-6 * vals[0]


def test_extract_omega_spin_lock_round_trip():
    grid = TimeGrid(1e-3, 2000)
    ctrl = extract_omega(phase_vector(make_spin_lock(10, grid)), grid)
    np.testing.assert_allclose(ctrl.omega, 10, atol=1e-9)


def test_extract_omega_constant_theta():
    grid = TimeGrid(1e-3, 100)
    ctrl = extract_omega(np.full(100, 1 / 10, dtype=complex), grid)
    np.testing.assert_array_equal(ctrl.omega, 0.0)
    assert ctrl.pulse_jumps == ()


@given(seed=st.integers(0, 2**31), n=st.integers(2, 500))
def test_extract_omega_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(1e-2, n)
    # smooth phase: integrated drive plus a slow modulation
    lam = np.cumsum(rng.normal(10, 2, n)) * grid.dt + rng.uniform(-np.pi, np.pi)
    theta = np.exp(-1j * lam) / np.sqrt(n)
    back = phase_vector(extract_omega(theta, grid))
    np.testing.assert_allclose(back, theta, atol=1e-9)


# ---- crossover

def test_crossover_scan_small():
    scan = crossover_scan([10.0], [0.01, 0.05, 0.2, 1.0], SensingScenario(), 1e-3, 15.0)
    rows = np.array([r[:6] for r in scan.rows])
    assert rows[0, 2] > rows[0, 4]  # nearly white: spin-lock wins
    assert rows[-1, 4] > rows[-1, 2]  # slow background: CPMG wins
    s = scan.cross[10.0]
    assert 0.01 < s < 1.0


def test_crossover_scan_validation():
    with pytest.raises(ValueError):
        crossover_scan([10.0], [], SensingScenario(), 1e-3, 5.0)
    with pytest.raises(ValueError):
        crossover_scan([10.0], [0.5, 0.1], SensingScenario(), 1e-3, 5.0)


def test_crossover_open_ended():
    scan = crossover_scan([10.0], [0.005, 0.01], SensingScenario(), 1e-3, 10.0)
    assert scan.cross[10.0] is None


def test_fit_crossover_line():
    fit = fit_crossover({5.0: 1 / 2.0, 10.0: 1 / 4.0, 20.0: 1 / 8.0, 15.0: None})
    assert fit["slope"] == pytest.approx(0.4)
    assert fit["intercept"] == pytest.approx(0.0, abs=1e-12)
    assert fit["r_squared"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_crossover({5.0: 0.1})
