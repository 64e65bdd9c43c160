"""
Filter functions of standard control sequences
==============================================

Ramsey, spin locking and CPMG seen through their filter functions, and the
dephasing each accumulates from a band-limited signal.
"""

import numpy as np

from qdetect.filters import (chi_spectral, chi_toeplitz, ff_normalization, filter_function, make_cpmg, make_ramsey,
                             make_spin_lock)
from qdetect.scenario import NOISE_POWER, SNR
from qdetect.spectra import TimeGrid, WhiteCutoff, build_toeplitz

grid = TimeGrid.from_duration(5.0, 1e-3)
controls = {
    "ramsey": make_ramsey(grid),
    "spin_lock": make_spin_lock(10.0, grid),
    "cpmg": make_cpmg(np.pi / 10, grid),
}

w = np.linspace(0, 40, 4001)
for name, ctrl in controls.items():
    ff = np.abs(filter_function(ctrl, w)) ** 2
    # Parseval: the filter-function weight equals the duration for every control
    print(f"{name:>10s}  argmax |F|^2 = {w[np.argmax(ff)]:6.2f}   weight/t = {ff_normalization(ctrl) / grid.t:.6f}")

signal = WhiteCutoff(10.0, 3.0)
g_s = build_toeplitz(signal, grid)
print("\nsignal dephasing chi_s at t = 5:")
for name, ctrl in controls.items():
    direct = chi_toeplitz(ctrl, g_s, NOISE_POWER, SNR)
    freq = chi_spectral(ctrl, signal, NOISE_POWER, SNR)
    print(f"{name:>10s}  time domain {direct:.6f}   frequency domain {freq:.6f}")
