"""
Shot-count detection statistics.

After ``n`` repetitions the detector counts the ``|0>`` outcomes ``k``.
Since the signal speeds up the decay, few ``|0>`` outcomes point to the
signal: the rule declares "signal present" when ``k < k*``. The threshold
``k*`` minimizes the mean of the false-positive and false-negative rates
(equal priors).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.stats

__all__ = [
    "HypothesisPair",
    "ThresholdResult",
    "ErrorRateCurve",
    "SchemeComparison",
    "optimal_threshold",
    "error_rate_curve",
    "compare_schemes",
]

# Relative slack under which two mean errors count as tied.
TIE_RTOL = 1e-12
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class HypothesisPair:
    """Probabilities of reading ``|0>`` without (``p_eta``) and with (``p_sig``) signal."""

    p_eta: float
    p_sig: float
    t: float | None = None

    def __post_init__(self):
        for name in ("p_eta", "p_sig"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.p_sig > self.p_eta:
            raise ValueError(
                f"signal must not raise the |0> probability: p_sig={self.p_sig} > p_eta={self.p_eta}"
            )

    @property
    def separation(self) -> float:
        return self.p_eta - self.p_sig


@dataclass(frozen=True)
class ThresholdResult:
    n_shots: int
    k_star: int
    fp: float
    fn: float
    mean_error: float


def _error_table(p_eta: float, p_sig: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """False-positive and false-negative rates for every threshold ``k* = 0 .. n+1``."""
    k = np.arange(n + 2)
    # P(k < k*) = cdf(k* - 1); P(k >= k*) = sf(k* - 1)
    fp = scipy.stats.binom.cdf(k - 1, n, p_eta)
    fn = scipy.stats.binom.sf(k - 1, n, p_sig)
    return fp, fn


def optimal_threshold(pair: HypothesisPair, n_shots: int) -> ThresholdResult:
    """Threshold minimizing the mean of the two error rates.

    Every ``k* in 0 .. n_shots + 1`` is tried; among (numerically) tied
    thresholds the smallest wins. Binomial tails come from the regularized
    incomplete beta function, accurate for ``n`` up to well beyond ``1e6``.
    """
    n = int(n_shots)
    if n < 1 or n != n_shots:
        raise ValueError(f"n_shots must be a positive integer, got {n_shots}")
    fp, fn = _error_table(pair.p_eta, pair.p_sig, n)
    mean = 0.5 * (fp + fn)
    lowest = mean.min()
    k_star = int(np.flatnonzero(mean <= lowest * (1 + TIE_RTOL) + 1e-300)[0])
    return ThresholdResult(n, k_star, float(fp[k_star]), float(fn[k_star]), float(mean[k_star]))


@dataclass
class ErrorRateCurve:
    """Optimal-threshold error rates against the number of shots."""

    pair: HypothesisPair
    rows: list[ThresholdResult] = field(default_factory=list)

    columns = ("n", "k_star", "fp", "fn", "mean_error")

    @property
    def n_shots(self) -> np.ndarray:
        return np.array([r.n_shots for r in self.rows])

    @property
    def mean_error(self) -> np.ndarray:
        return np.array([r.mean_error for r in self.rows])

    def as_tuples(self) -> list[tuple]:
        return [(r.n_shots, r.k_star, r.fp, r.fn, r.mean_error) for r in self.rows]


def error_rate_curve(pair: HypothesisPair, n_list: Sequence[int]) -> ErrorRateCurve:
    """Apply :func:`optimal_threshold` at each shot count.

    Raises
    ------
    ValueError
        If ``n_list`` is empty or not strictly ascending.
    RuntimeError
        If the resulting mean error increases with ``n``.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list is empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    curve = ErrorRateCurve(pair, [optimal_threshold(pair, n) for n in n_list])
    err = curve.mean_error
    if np.any(np.diff(err) > MONOTONE_SLACK):
        raise RuntimeError("mean error increased with the number of shots")
    return curve


@dataclass
class SchemeComparison:
    """Error-rate curves of several control schemes on a shared shot grid.

    ``ranking[i]`` lists the scheme names ordered from lowest to highest mean
    error at ``n_list[i]``; equal errors keep the input order.
    """

    n_list: list[int]
    curves: dict[str, ErrorRateCurve]
    ranking: list[list[str]]

    def table(self) -> list[tuple]:
        """Rows ``(n, scheme, mean_error, rank)`` with rank starting at 1."""
        out = []
        for i, n in enumerate(self.n_list):
            for rank, name in enumerate(self.ranking[i], start=1):
                out.append((n, name, self.curves[name].rows[i].mean_error, rank))
        return out


def compare_schemes(results: Mapping[str, HypothesisPair], n_list: Sequence[int]) -> SchemeComparison:
    """Error-rate curve per scheme and the per-``n`` ranking."""
    if not results:
        raise ValueError("no schemes to compare")
    curves = {name: error_rate_curve(pair, n_list) for name, pair in results.items()}
    names = list(curves)
    ranking = []
    for i in range(len(n_list)):
        errs = [curves[name].rows[i].mean_error for name in names]
        order = sorted(range(len(names)), key=lambda j: (errs[j], j))
        ranking.append([names[j] for j in order])
    return SchemeComparison([int(n) for n in n_list], curves, ranking)
