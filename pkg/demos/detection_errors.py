"""
Error rates for repeated measurements
=====================================

Optimal majority-vote thresholds and the resulting mean error versus the
number of shots, for the three standard schemes.
"""

import numpy as np

from qdetect.detection import HypothesisPair, compare_schemes
from qdetect.optimize import ObjectiveConfig, cpmg_family, grid_search_time, ramsey_family, spin_lock_family
from qdetect.scenario import SensingScenario, lorentzian_background

sc = SensingScenario(background=lorentzian_background(1.17))
cfg = ObjectiveConfig(sc, 1e-3)
times = np.arange(1, 8001) * cfg.dt

pairs = {}
for name, fam in (("spin_lock", spin_lock_family(10.0)), ("cpmg", cpmg_family(np.pi / 10)),
                  ("ramsey", ramsey_family())):
    _, ctrl, _ = grid_search_time(cfg, fam, times)
    rep = sc.report(ctrl)
    pairs[name] = HypothesisPair(rep.p0_eta, rep.p0_sig, rep.t)
    print(f"{name:>10s}  P0 noise {rep.p0_eta:.4f}  P0 signal {rep.p0_sig:.4f}")

n_list = [1, 10, 100, 1000, 10_000]
comp = compare_schemes(pairs, n_list)
print("\n      n " + "".join(f"{k:>12s}" for k in pairs))
for i, n in enumerate(n_list):
    print(f"{n:7d} " + "".join(f"{comp.curves[k].mean_error[i]:12.3e}" for k in pairs))
print("best scheme per n:", [r[0] for r in comp.ranking])
