"""
Spin locking versus CPMG under a Lorentzian background
======================================================

Scans the background correlation time and locates where CPMG overtakes
spin locking, for several signal frequencies.
"""

import numpy as np

from qdetect.optimize import crossover_scan, fit_crossover
from qdetect.scenario import SensingScenario

sigmas = np.geomspace(0.01, 3.0, 16)
scan = crossover_scan([5.0, 10.0, 20.0], list(sigmas), SensingScenario(), 1e-3, 40.0)

print(" omega0   sigma_t     O_SL    O_CPMG")
for row in scan.rows:
    print(f"{row[0]:7.1f}  {row[1]:8.4f}  {row[2]:.5f}  {row[4]:.5f}")
for w, s in scan.cross.items():
    print(f"omega0 = {w:g}: crossover at sigma_t = {s:.4f}" if s else f"omega0 = {w:g}: no crossover")

found = {w: s for w, s in scan.cross.items() if s is not None}
print("linear fit of 1/sigma_cross vs omega0:", fit_crossover(found))
