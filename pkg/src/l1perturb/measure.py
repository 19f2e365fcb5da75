"""Convergence in measure for a finite trace.

The measure of ``x`` above a level ``eps`` is ``tau(chi_{]eps,inf[}(|x|))``.  We
scalarize the usual (eps, delta) neighbourhoods into the gauge
``inf{eps > 0 : mass(x, eps) <= eps}``, which is read off exactly from the
weighted singular-value staircase.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .algebra import SPECTRAL_REL_TOL, Element, norm1, singular_values

DEFAULT_GRID = tuple(2.0 ** -k for k in range(21))


def _staircase(x: Element):
    """Singular values (descending) with their trace weights."""
    vals, wts = [], []
    for s, w in zip(singular_values(x), x.shape.group_weights):
        vals.append(s.ravel())
        wts.append(np.repeat(w, s.shape[-1]))
    v = np.concatenate(vals)
    w = np.concatenate(wts)
    order = np.argsort(-v, kind="stable")
    return v[order], w[order]


def _mass_above(v, w, eps, margin):
    # v descending: count entries strictly above eps + margin
    k = np.searchsorted(-v, -(eps + margin), side="left")
    return float(w[:k].sum())


def exceedance(x: Element, eps: float) -> float:
    if not eps > 0:
        raise ValueError("threshold must be positive")
    v, w = _staircase(x)
    margin = SPECTRAL_REL_TOL * (v[0] if v.size else 0.0)
    return _mass_above(v, w, eps, margin)


def exceedance_profile(x: Element, grid=DEFAULT_GRID) -> "ExceedanceProfile":
    grid = np.sort(np.asarray(grid, dtype=float))
    if np.any(grid <= 0):
        raise ValueError("thresholds must be positive")
    v, w = _staircase(x)
    margin = SPECTRAL_REL_TOL * (v[0] if v.size else 0.0)
    cum = np.concatenate([[0.0], np.cumsum(w)])
    k = np.searchsorted(-v, -(grid + margin), side="left")
    return ExceedanceProfile(tuple(grid), tuple(float(m) for m in cum[k]))


@dataclass(frozen=True)
class ExceedanceProfile:
    thresholds: tuple
    masses: tuple


def gauge(x: Element) -> float:
    """Smallest ``eps`` with ``mass(x, eps) <= eps``.

    With singular values ``s_1 >= s_2 >= ...`` and cumulative weights ``W_k``, the
    mass is ``W_k`` on ``[s_{k+1}, s_k)``; the infimum is the least
    ``max(s_{k+1}, W_k)`` over steps where that value is below ``s_k``.
    """
    v, w = _staircase(x)
    if v.size == 0 or v[0] == 0:
        return 0.0
    # collapse ties so each step of the staircase appears once
    uniq, first = np.unique(-v, return_index=True)
    s = -uniq
    cum = np.cumsum(w)
    last = np.concatenate([first[1:], [v.size]]) - 1
    W = cum[last]
    nxt = np.concatenate([s[1:], [0.0]])
    cand = np.maximum(nxt, W)
    ok = cand < s
    best = cand[ok].min() if np.any(ok) else np.inf
    # eps >= s_1 always works (mass 0)
    return float(min(best, s[0]))


@dataclass(frozen=True)
class EvidenceReport:
    grid: tuple
    masses: np.ndarray      # (n, len(grid))
    norms: np.ndarray
    gauges: np.ndarray
    monotone_trend: bool
    final_below: bool
    threshold: float

    def rows(self):
        for i in range(self.masses.shape[0]):
            for j, eps in enumerate(self.grid):
                yield (i + 1, eps, float(self.masses[i, j]), float(self.norms[i]), float(self.gauges[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["n", "epsilon", "mass", "norm1", "gauge"])
        for r in self.rows():
            wr.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), repr(r[4])])
        return buf.getvalue()


def tau_null_evidence(xs, grid=DEFAULT_GRID, threshold: float = 1e-2) -> EvidenceReport:
    """Descriptive table of masses per level along a finite prefix.

    ``monotone_trend``: every column of masses is non-increasing in ``n``.
    ``final_below``: the last element's gauge is under ``threshold``.
    """
    xs = list(xs)
    if not xs:
        raise ValueError("empty prefix")
    grid = tuple(sorted(float(g) for g in grid))
    masses = np.array([exceedance_profile(x, grid).masses for x in xs])
    norms = np.array([norm1(x) for x in xs])
    gauges = np.array([gauge(x) for x in xs])
    monotone = bool(np.all(np.diff(masses, axis=0) <= 1e-12))
    return EvidenceReport(grid, masses, norms, gauges, monotone, bool(gauges[-1] < threshold), threshold)
