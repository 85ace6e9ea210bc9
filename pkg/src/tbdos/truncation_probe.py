"""Numerical probes of the Fourier-window truncation of Bloch Lorentzians.

Window sums, corner (tail) contributions, exponential decay of resolvent
rows, and Gershgorin lower bounds.  Infinite tails are represented by
embedding the operator in a larger window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mathieu_bloch import (CONTINUUM, DISCRETE, BlochIndexWindow, MathieuParams,
                            build_dc, build_dd_scaled)
from .spectral_core import ComplexShift, SymTriMatrix, lorentzian_diagonal, resolvent_row

FIT_FLOOR = 1e-13


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class WindowTraceReport:
    L_values: tuple
    window_sums: tuple
    deltas: tuple
    fitted_decay: float


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int


def bloch_matrix(kind: str, k: float, params: MathieuParams, L: int) -> SymTriMatrix:
    window = BlochIndexWindow(L)
    if kind == CONTINUUM:
        return build_dc(k, params.lam, window)
    if kind == DISCRETE:
        return build_dd_scaled(k, params, window)
    raise ValueError(f"unknown model kind {kind!r}")


def _linear_fit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ [slope, icept]) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icept), min(max(r2, 0.0), 1.0)


def window_trace_sequence(kind: str, k: float, mu: float, params: MathieuParams,
                          L_values) -> WindowTraceReport:
    """Sum of the central |n| <= L diagonal Lorentzian entries of the 2L-window matrix.

    ``fitted_decay`` is the least-squares slope of log(delta) against L over
    the nonzero successive differences (nan if fewer than two).
    """
    Ls = [int(L) for L in L_values]
    if len(Ls) < 2 or any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L_values must be increasing with at least two entries")
    sums = []
    for L in Ls:
        diag = lorentzian_diagonal(bloch_matrix(kind, k, params, 2 * L), mu)
        sums.append(math.fsum(diag[L:3 * L + 1]))
    deltas = [abs(b - a) for a, b in zip(sums, sums[1:])]
    pts = [(L, d) for L, d in zip(Ls[1:], deltas) if d > 0]
    if len(pts) >= 2:
        slope = _linear_fit(np.array([p[0] for p in pts], float),
                            np.log([p[1] for p in pts]))[0]
    else:
        slope = math.nan
    return WindowTraceReport(tuple(Ls), tuple(sums), tuple(deltas), slope)


def corner_truncation_gap(kind: str, k: float, mu: float, params: MathieuParams, L: int) -> float:
    """Diagonal Lorentzian mass on indices L < n <= 3L of the 3L-window matrix.

    This is the one-sided lower portion of the trace, with the outer third of
    the embedding standing in for the infinite remainder.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    diag = lorentzian_diagonal(bloch_matrix(kind, k, params, 3 * L), mu)
    # row j holds n = j - 3L, so n > L starts at j = 4L + 1
    return math.fsum(diag[4 * L + 1:])


def combes_thomas_fit(m: SymTriMatrix, mu: float, im: float = 1.0) -> DecayFit:
    """Fit log|((m - mu - i)^-1)[c, n]| = intercept + slope*|n - c| about the centre row."""
    if m.dim < 11:
        raise ValueError("matrix dimension must be >= 11")
    c = m.dim // 2
    mags = resolvent_row(m, ComplexShift(mu, im), c).magnitudes
    dist = np.abs(np.arange(m.dim) - c).astype(float)
    keep = mags > FIT_FLOOR
    if np.count_nonzero(keep) < 5 or np.unique(dist[keep]).size < 2:
        raise InsufficientDataError(
            f"only {np.count_nonzero(keep)} resolvent entries above {FIT_FLOOR:g}")
    slope, icept, r2 = _linear_fit(dist[keep], np.log(mags[keep]))
    return DecayFit(slope, icept, r2, int(np.count_nonzero(keep)))


def gershgorin_min_eig_bound(m: SymTriMatrix) -> float:
    """min_i (diag_i - sum of |offdiag| in row i); a lower bound on the spectrum."""
    return m.gershgorin_interval()[0]


def corner_matrix(kind: str, k: float, params: MathieuParams, start: int, stop: int) -> SymTriMatrix:
    """Bloch matrix restricted to Fourier indices start <= n <= stop."""
    if stop < start:
        raise ValueError("empty index range")
    full = bloch_matrix(kind, k, params, max(abs(start), abs(stop)))
    L = (full.dim - 1) // 2
    sl = slice(start + L, stop + L + 1)
    return SymTriMatrix(full.diag[sl], full.offdiag[start + L:stop + L])
