"""
Monte Carlo check of the second-cumulant prediction
===================================================

Explicit qubit evolution under sampled noise, compared with the
closed-form survival probability at each recorded time.
"""

import numpy as np

from qdetect.filters import make_spin_lock, outcome_probability
from qdetect.scenario import WHITE_PROXY_SIGMA_T, SensingScenario
from qdetect.simulator import simulate_ensemble
from qdetect.spectra import Lorentzian, TimeGrid

sc = SensingScenario(background=Lorentzian(WHITE_PROXY_SIGMA_T))
grid = TimeGrid.from_duration(8.0, 1e-3)
ctrl = make_spin_lock(10.0, grid)
times = np.linspace(0.8, 8.0, 10)
idx = np.rint(times / grid.dt).astype(int) - 1
chi_eta, chi_s = sc.chi_profiles(ctrl)

for present in (False, True):
    res = simulate_ensemble(sc, ctrl, 2000, seed=1, signal_present=present, record_times=times)
    pred = outcome_probability(chi_eta[idx] + (chi_s[idx] if present else 0.0))
    print("signal" if present else "noise only")
    for t, p, se, q in zip(times, res.p_mean, res.p_stderr, pred):
        print(f"  t={t:5.2f}  MC {p:.4f} +- {se:.4f}   prediction {q:.4f}   z={(p - q) / se:+.2f}")
