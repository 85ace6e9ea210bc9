"""Symmetric tridiagonal kernels: eigensolvers, complex solves, Lorentzian traces.

Two independent eigensolvers live here.  Sturm-sequence bisection is the
reference path (and is vectorised over a batch of matrices so Bloch
Hamiltonians on a whole k-grid can be diagonalised at once); implicit-shift
QL is the independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

_EPS = np.finfo(float).eps
PIVOT_FLOOR = 1e-300


class InvalidInputError(ValueError):
    """Raised for malformed or non-finite matrix data."""


class SolverBreakdown(ArithmeticError):
    """A pivot collapsed below ``PIVOT_FLOOR`` in a tridiagonal solve."""


@dataclass(frozen=True)
class SymTriMatrix:
    """Real symmetric tridiagonal matrix stored as its two bands."""

    diag: np.ndarray
    offdiag: np.ndarray = field(default=None)

    def __post_init__(self):
        d = np.array(self.diag, dtype=float).ravel()
        if self.offdiag is None:
            e = np.zeros(max(d.size - 1, 0))
        else:
            e = np.array(self.offdiag, dtype=float).ravel()
        if d.size < 1:
            raise InvalidInputError("matrix dimension must be >= 1")
        if e.size != d.size - 1:
            raise InvalidInputError(
                f"offdiag length {e.size} does not match dim-1 = {d.size - 1}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise InvalidInputError("matrix entries must be finite")
        d.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def dim(self) -> int:
        return self.diag.size

    def trace(self) -> float:
        return math.fsum(self.diag)

    def max_abs_entry(self) -> float:
        m = float(np.max(np.abs(self.diag)))
        if self.offdiag.size:
            m = max(m, float(np.max(np.abs(self.offdiag))))
        return m

    def shifted(self, c: float) -> "SymTriMatrix":
        return SymTriMatrix(self.diag + c, self.offdiag)

    def gershgorin_interval(self) -> tuple[float, float]:
        r = np.zeros(self.dim)
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        if self.dim > 1:
            a += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return a


@dataclass(frozen=True)
class EigenSpectrum:
    values: np.ndarray
    method: str
    tol: float


@dataclass(frozen=True)
class ComplexShift:
    """Complex energy ``re + 1j*im``; ``im`` must be nonzero."""

    re: float
    im: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise InvalidInputError("shift must be finite")
        if self.im == 0:
            raise InvalidInputError("shift imaginary part must be nonzero")

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class ResolventProfile:
    """Magnitudes |((A - z)^-1)[row, n]| for n = 0..dim-1."""

    row: int
    shift: ComplexShift
    magnitudes: np.ndarray


def default_tol(scale: float) -> float:
    # bisection is run down to floating-point resolution of the spectrum
    return max(4.0 * _EPS * scale, np.finfo(float).tiny)


# -- bisection ---------------------------------------------------------------

@njit(cache=True)
def _sturm_count(d, e2, x, pivmin):
    # number of eigenvalues strictly below x
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    count = 1 if q < 0.0 else 0
    for i in range(1, d.size):
        q = (d[i] - x) - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@njit(cache=True)
def _bisect_all(d, e2, lo0, hi0, tol, pivmin, out):
    B, n = d.shape
    for b in range(B):
        lo_prev = lo0[b]
        for j in range(n):
            lo = lo_prev
            hi = hi0[b]
            while hi - lo > 2.0 * tol:
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if _sturm_count(d[b], e2[b], mid, pivmin) > j:
                    hi = mid
                else:
                    lo = mid
            out[b, j] = 0.5 * (lo + hi)
            # eigenvalue j+1 is not below the lower bracket of eigenvalue j
            lo_prev = lo


def eig_bisection_batch(diag, offdiag, tol=None):
    """All eigenvalues of a batch of symmetric tridiagonal matrices.

    Parameters
    ----------
    diag : array_like, shape (B, n)
    offdiag : array_like, shape (B, n-1)
    tol : float, optional
        Absolute half-width of the final bracketing interval.  Defaults to
        4 machine epsilons relative to the largest Gershgorin bound in the
        batch.

    Returns
    -------
    ndarray, shape (B, n), each row sorted ascending.
    """
    d = np.atleast_2d(np.asarray(diag, dtype=float))
    e = np.asarray(offdiag, dtype=float).reshape(d.shape[0], d.shape[1] - 1)
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
        raise InvalidInputError("matrix entries must be finite")
    B, n = d.shape
    r = np.zeros_like(d)
    r[:, :-1] += np.abs(e)
    r[:, 1:] += np.abs(e)
    lo = np.min(d - r, axis=1, keepdims=True)
    hi = np.max(d + r, axis=1, keepdims=True)
    scale = float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))
    if tol is not None and not tol > 0:
        raise InvalidInputError("tol must be positive")
    # work at unit scale (power-of-two factor, exact) so tiny or huge
    # matrices get the same relative resolution and pivot floor
    shift = -math.frexp(scale)[1] if scale > 0 else 0
    ds = np.ldexp(d, shift)
    es = np.ldexp(e, shift)
    tol_s = 4.0 * _EPS if tol is None else math.ldexp(tol, shift)
    pad = 2.0 * _EPS + 2.0 * tol_s
    pivmin = _EPS * _EPS
    out = np.empty((B, n))
    _bisect_all(np.ascontiguousarray(ds), np.ascontiguousarray(es * es),
                np.ldexp(lo[:, 0], shift) - pad, np.ldexp(hi[:, 0], shift) + pad,
                tol_s, pivmin, out)
    out = np.ldexp(out, -shift)
    # the spectrum lies in the Gershgorin interval; clipping removes bracket
    # slack (exact for 1x1 and decoupled extremes), sorting repairs ties
    np.clip(out, lo, hi, out=out)
    out.sort(axis=1)
    return out


def eig_bisection(m: SymTriMatrix, tol: float | None = None) -> EigenSpectrum:
    """Eigenvalues by Sturm-sequence counting and interval bisection."""
    vals = eig_bisection_batch(m.diag[None, :], m.offdiag[None, :], tol)[0]
    if tol is None:
        # upper bound on the resolution actually used
        lo, hi = m.gershgorin_interval()
        tol = default_tol(max(abs(lo), abs(hi)))
    vals.setflags(write=False)
    return EigenSpectrum(vals, "bisection", tol)


# -- implicit QL -------------------------------------------------------------

@njit(cache=True)
def _tqli(d, e):
    # d, e overwritten; e has length n with e[n-1] = 0
    n = d.size
    eps = np.finfo(np.float64).eps
    for l in range(n):
        it = 0
        while True:
            mm = l
            while mm < n - 1:
                dd = abs(d[mm]) + abs(d[mm + 1])
                # callers scale to unit norm, so eps^2 is an absolute floor
                if abs(e[mm]) <= eps * dd or abs(e[mm]) <= eps * eps:
                    break
                mm += 1
            if mm == l:
                break
            it += 1
            if it > 60:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[mm] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = mm - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[mm] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[mm] = 0.0
    return True


def eig_ql(m: SymTriMatrix, tol: float | None = None) -> EigenSpectrum:
    """Eigenvalues by implicit-shift QL iteration (eigenvalues only).

    Deflation uses the usual relative machine-precision test, so accuracy is
    of order eps*||m|| regardless of ``tol``; ``tol`` is recorded only.
    """
    if tol is None:
        lo, hi = m.gershgorin_interval()
        tol = default_tol(max(abs(lo), abs(hi)))
    elif not tol > 0:
        raise InvalidInputError("tol must be positive")
    # scale by a power of two (exact) so the largest entry is O(1)
    anorm = m.max_abs_entry()
    shift = -math.frexp(anorm)[1] if anorm > 0 else 0
    d = np.ldexp(m.diag, shift)
    e = np.zeros(m.dim)
    e[:-1] = np.ldexp(m.offdiag, shift)
    if not _tqli(d, e):
        raise ArithmeticError("QL iteration failed to converge")
    vals = np.ldexp(np.sort(d), -shift)
    vals.setflags(write=False)
    return EigenSpectrum(vals, "ql", tol)


# -- complex tridiagonal solves ----------------------------------------------

@njit(cache=True)
def _thomas(lower, diag, upper, x, floor):
    # x is (n, k), solved in place; returns False on pivot collapse
    n = diag.size
    c = np.empty(max(n - 1, 1), dtype=np.complex128)
    piv = diag[0]
    if abs(piv) < floor:
        return False
    if n > 1:
        c[0] = upper[0] / piv
    x[0] /= piv
    for i in range(1, n):
        piv = diag[i] - lower[i - 1] * c[i - 1]
        if abs(piv) < floor:
            return False
        if i < n - 1:
            c[i] = upper[i] / piv
        x[i] = (x[i] - lower[i - 1] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return True


@njit(cache=True)
def _gtsv(dl, d, du, x, floor):
    """Tridiagonal elimination with partial pivoting, as LAPACK gtsv.

    All arrays are overwritten; returns the failing row or -1.
    """
    n = d.size
    du2 = np.zeros(max(n - 2, 1), dtype=np.complex128)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if abs(d[i]) < floor:
                return i
            f = dl[i] / d[i]
            d[i + 1] -= f * du[i]
            x[i + 1] -= f * x[i]
            dl[i] = 0.0
        else:
            f = d[i] / dl[i]
            d[i] = dl[i]
            t = d[i + 1]
            d[i + 1] = du[i] - f * t
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -f * du2[i]
            du[i] = t
            for j in range(x.shape[1]):
                xi = x[i, j]
                x[i, j] = x[i + 1, j]
                x[i + 1, j] = xi - f * x[i + 1, j]
    if abs(d[n - 1]) < floor:
        return n - 1
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return -1


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a (complex) tridiagonal system for one or many right-hand sides.

    ``rhs`` may be a vector of length n or an (n, k) block.  The Thomas
    algorithm is tried first; if a pivot falls below ``PIVOT_FLOOR`` the
    system is re-solved with partial pivoting.
    """
    diag = np.array(diag, dtype=complex)
    lower = np.array(lower, dtype=complex)
    upper = np.array(upper, dtype=complex)
    rhs = np.asarray(rhs)
    x = np.array(rhs.reshape(rhs.shape[0], -1), dtype=complex)
    if not _thomas(lower, diag, upper, x, PIVOT_FLOOR):
        x = np.array(rhs.reshape(rhs.shape[0], -1), dtype=complex)
        row = _gtsv(lower, diag, upper, x, PIVOT_FLOOR)
        if row >= 0:
            raise SolverBreakdown(f"pivot below {PIVOT_FLOOR:g} at row {row}")
    return x.reshape(rhs.shape)


def resolvent_diagonal(m: SymTriMatrix, z: complex) -> np.ndarray:
    """Diagonal of (m - z)^-1 from dim solves against the identity."""
    d = m.diag - z
    rhs = np.eye(m.dim, dtype=complex)
    g = solve_tridiagonal(m.offdiag, d, m.offdiag, rhs)
    return np.diagonal(g).copy()


def lorentzian_diagonal(m: SymTriMatrix, mu: float) -> np.ndarray:
    """Diagonal entries of (1 + (m - mu)^2)^-1 via the two resolvents."""
    gp = resolvent_diagonal(m, complex(mu, 1.0))
    gm = resolvent_diagonal(m, complex(mu, -1.0))
    return ((-0.5j) * (gp - gm)).real


def resolvent_row(m: SymTriMatrix, shift: ComplexShift, row: int) -> ResolventProfile:
    if not 0 <= row < m.dim:
        raise InvalidInputError(f"row {row} outside 0..{m.dim - 1}")
    rhs = np.zeros(m.dim, dtype=complex)
    rhs[row] = 1.0
    x = solve_tridiagonal(m.offdiag, m.diag - shift.z, m.offdiag, rhs)
    mags = np.abs(x)
    mags.setflags(write=False)
    return ResolventProfile(row, shift, mags)


# -- Lorentzian traces -------------------------------------------------------

def lorentzian_sum(eigenvalues, mu: float) -> float:
    """Sum of 1/(1 + (lam - mu)^2) in ascending-eigenvalue order."""
    t = np.asarray(eigenvalues, dtype=float) - mu
    return math.fsum(1.0 / (1.0 + t * t))


def lorentzian_trace(m: SymTriMatrix, mu: float, tol: float | None = None) -> float:
    """Tr (1 + (m - mu)^2)^-1 from the bisection spectrum."""
    return lorentzian_sum(eig_bisection(m, tol).values, mu)


def lorentzian_trace_resolvent(m: SymTriMatrix, mu: float) -> float:
    """Tr (1 + (m - mu)^2)^-1 as (-i/2) Tr[(m-mu-i)^-1 - (m-mu+i)^-1]."""
    return math.fsum(lorentzian_diagonal(m, mu))
