"""
Background and signal noise models
==================================

Correlations, spectra and sampled paths for the three built-in models,
with an empirical check of the sampler against the exact autocorrelation.
"""

import numpy as np

from qdetect.spectra import Lorentzian, TimeGrid, WhiteCutoff, correlation, sample_process, spectrum

models = [Lorentzian(0.5), WhiteCutoff(10.0, 3.0)]
lags = np.array([0.0, 0.1, 0.5, 1.0, 2.0])

for m in models:
    print(f"{m.name:>28s}  C(tau) at tau={lags.tolist()}:", np.round(correlation(m, lags), 4))
    print(f"{'':>28s}  S(omega) at 0, 10, 20:       ", np.round(spectrum(m, [0.0, 10.0, 20.0]), 4))

# empirical autocorrelation averaged over independent paths
grid = TimeGrid(1e-2, 2000)
for m in models:
    paths = np.array([sample_process(m, grid, seed) for seed in range(200)])
    k = np.rint(lags / grid.dt).astype(int)
    emp = [np.mean(paths[:, : grid.n_steps - j] * paths[:, j:]) for j in k]
    print(f"{m.name:>28s}  empirical C(tau):", np.round(emp, 3))
