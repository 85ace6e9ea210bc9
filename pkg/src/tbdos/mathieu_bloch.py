"""Truncated Bloch Hamiltonians of the discrete and continuum Mathieu operators.

In the plane-wave basis the Bloch Hamiltonian at quasi-momentum k is
tridiagonal: the kinetic symbol sits on the diagonal and the cosine
potential couples neighbouring Fourier indices with strength lambda.
The DoS is the Brillouin-zone average of the Lorentzian trace, evaluated
with a midpoint k-rule and a Fourier window grown until the value settles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .error_bounds import Q_OPT
from .laplacian_dos import InvalidParameterError, NonConvergenceWarning, QuadratureSpec
from .spectral_core import SymTriMatrix, eig_bisection_batch

DOS_TOL = 1e-8
MAX_L = 4096
MAX_K_PANELS = 2 ** 16
DEFAULT_KQUAD = QuadratureSpec(panels=32)

CONTINUUM = "continuum"
DISCRETE = "discrete"


class WindowTooLargeError(InvalidParameterError):
    pass


def inverse_even_integer(eps: float) -> int:
    """Return N = 1/eps, requiring N to be a positive even integer."""
    if not 0 < eps < 1:
        raise InvalidParameterError(f"eps={eps} must lie in (0, 1)")
    n = round(1.0 / eps)
    if n < 2 or abs(n * eps - 1.0) > 1e-9 or n % 2:
        raise InvalidParameterError(f"1/eps must be an even integer, got eps={eps}")
    return n


@dataclass(frozen=True)
class MathieuParams:
    lam: float
    eps: float | None = None
    q: float = Q_OPT
    L_override: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.lam):
            raise InvalidParameterError("lambda must be finite")
        if self.eps is not None:
            inverse_even_integer(self.eps)
        if not 0 < self.q < 2:
            raise InvalidParameterError("q must lie in (0, 2)")
        if self.L_override is not None and self.L_override < 1:
            raise InvalidParameterError("L_override must be >= 1")

    @property
    def period(self) -> int:
        return inverse_even_integer(self.eps)

    @property
    def max_window(self) -> int:
        """Largest Fourier half-width available on the discrete circle."""
        return self.period // 2


@dataclass(frozen=True)
class BlochIndexWindow:
    """Fourier indices |n| <= L; matrix row j holds n = j - L."""

    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise InvalidParameterError("window half-width L must be an integer >= 1")

    @property
    def dim(self) -> int:
        return 2 * self.L + 1

    def indices(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)


def _check_k(k):
    if not -math.pi <= k <= math.pi:
        raise InvalidParameterError(f"k={k} outside the Brillouin zone [-pi, pi]")


def dc_diagonal(k, L):
    """(k + 2 pi n)^2 for |n| <= L; ``k`` may be an array (rows)."""
    kn = np.asarray(k, dtype=float)[..., None] + 2.0 * math.pi * np.arange(-L, L + 1)
    return kn * kn


def dd_scaled_diagonal(k, eps, L):
    """2(1 - cos(eps (k + 2 pi n))) / eps^2, written with sin^2 for accuracy."""
    kn = np.asarray(k, dtype=float)[..., None] + 2.0 * math.pi * np.arange(-L, L + 1)
    s = np.sin(0.5 * eps * kn)
    return 4.0 * s * s / (eps * eps)


def build_dc(k: float, lam: float, window: BlochIndexWindow) -> SymTriMatrix:
    """Continuum Bloch Hamiltonian truncated to the Fourier window."""
    _check_k(k)
    return SymTriMatrix(dc_diagonal(k, window.L), np.full(window.dim - 1, float(lam)))


def build_dd_scaled(k: float, params: MathieuParams, window: BlochIndexWindow) -> SymTriMatrix:
    """Discrete Bloch Hamiltonian divided by eps^2, truncated to the window."""
    _check_k(k)
    if params.eps is None:
        raise InvalidParameterError("discrete model needs eps")
    if window.L > params.max_window:
        raise WindowTooLargeError(
            f"L={window.L} exceeds 1/(2 eps) = {params.max_window}")
    return SymTriMatrix(dd_scaled_diagonal(k, params.eps, window.L),
                        np.full(window.dim - 1, float(params.lam)))


def default_window(params: MathieuParams) -> BlochIndexWindow:
    """max(8, ceil(2 eps^(q/2 - 1))) unless overridden; 8 for the continuum."""
    if params.L_override is not None:
        return BlochIndexWindow(int(params.L_override))
    if params.eps is None:
        return BlochIndexWindow(8)
    half = params.eps ** (params.q / 2.0 - 1.0)
    return BlochIndexWindow(max(8, math.ceil(2.0 * half)))


# -- k-quadrature ------------------------------------------------------------

def half_zone_nodes(panels: int) -> np.ndarray:
    """Midpoints of a ``panels``-panel grid on [-pi, pi] lying in (0, pi).

    The traces are even in k (reversing the Fourier index maps the Bloch
    matrix at -k to the one at k), so the full midpoint sum is twice the
    sum over these nodes.
    """
    h = 2.0 * math.pi / panels
    return (np.arange(panels // 2) + 0.5) * h


@lru_cache(maxsize=48)
def bloch_spectra(kind: str, lam: float, eps: float | None, L: int, panels: int) -> np.ndarray:
    """Eigenvalues of every Bloch matrix on the half-zone grid, shape (panels/2, 2L+1)."""
    k = half_zone_nodes(panels)
    if kind == CONTINUUM:
        d = dc_diagonal(k, L)
    elif kind == DISCRETE:
        d = dd_scaled_diagonal(k, eps, L)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    e = np.full((k.size, 2 * L), float(lam))
    vals = eig_bisection_batch(d, e)
    vals.setflags(write=False)
    return vals


def trace_grid(spectra: np.ndarray, mu: float) -> np.ndarray:
    """Per-k Lorentzian traces, each summed in ascending-eigenvalue order."""
    t = spectra - mu
    terms = 1.0 / (1.0 + t * t)
    return np.array([math.fsum(row) for row in terms])


def _zone_average(kind, lam, eps, L, panels, mu):
    traces = trace_grid(bloch_spectra(kind, float(lam), eps, int(L), int(panels)), mu)
    return 2.0 / panels * math.fsum(traces)


@dataclass(frozen=True)
class MathieuDos:
    value: float
    L_used: int
    k_panels_used: int
    delta_L: float
    delta_panels: float
    converged: bool
    saturated: bool = False


def _adaptive_dos(kind, mu, lam, eps, window, kquad, tol, L_cap):
    r = int(kquad.refine_factor)
    coarse = int(kquad.panels) + int(kquad.panels) % 2
    P = coarse * r
    L = min(window.L, L_cap)
    converged = True
    saturated = False
    dP = dL = math.inf

    def val(L_, P_):
        return _zone_average(kind, lam, eps, L_, P_, mu)

    while True:
        # accept P once it agrees with the next-coarser grid at this window
        v = val(L, P)
        dP = abs(v - val(L, P // r))
        while dP >= tol:
            if P * r > MAX_K_PANELS:
                converged = False
                break
            P *= r
            prev, v = v, val(L, P)
            dP = abs(v - prev)
        # grow the window until doubling it no longer moves the value
        L_start = L
        while True:
            L2 = min(2 * L, L_cap)
            if L2 == L:
                saturated = True
                dL = 0.0
                break
            v2 = val(L2, P)
            dL = abs(v2 - v)
            if dL < tol:
                break
            L, v = L2, v2
        if L == L_start or not converged:
            break
    if not saturated and L == L_cap:
        saturated = True
    if kind == CONTINUUM and saturated:
        converged = False
    return MathieuDos(v, L, P, dL, dP, converged, saturated)


def _warn(res: MathieuDos, what: str) -> float:
    if not res.converged:
        warnings.warn(f"{what}: not converged (dL={res.delta_L:.3e}, dP={res.delta_panels:.3e})",
                      NonConvergenceWarning, stacklevel=3)
    return res.value


def mathieu_continuum_result(mu: float, lam: float, window: BlochIndexWindow | None = None,
                             kquad: QuadratureSpec = DEFAULT_KQUAD, tol: float = DOS_TOL) -> MathieuDos:
    window = window or BlochIndexWindow(8)
    return _adaptive_dos(CONTINUUM, float(mu), float(lam), None, window, kquad, tol, MAX_L)


def mathieu_discrete_result(mu: float, params: MathieuParams, window: BlochIndexWindow | None = None,
                            kquad: QuadratureSpec = DEFAULT_KQUAD, tol: float = DOS_TOL) -> MathieuDos:
    if params.eps is None:
        raise InvalidParameterError("discrete model needs eps")
    window = window or default_window(params)
    # on the discrete Fourier circle the window saturates at 1/(2 eps)
    return _adaptive_dos(DISCRETE, float(mu), float(params.lam), float(params.eps),
                         window, kquad, tol, params.max_window)


def dos_mathieu_continuum(mu: float, lam: float, window: BlochIndexWindow | None = None,
                          kquad: QuadratureSpec = DEFAULT_KQUAD) -> float:
    """(1/2pi) int_{-pi}^{pi} Tr (1 + (D_c(k) - mu)^2)^-1 dk."""
    return _warn(mathieu_continuum_result(mu, lam, window, kquad), "continuum Mathieu DoS")


def dos_mathieu_discrete_scaled(mu: float, params: MathieuParams,
                                window: BlochIndexWindow | None = None,
                                kquad: QuadratureSpec = DEFAULT_KQUAD) -> float:
    """(1/2pi) int_{-pi}^{pi} Tr (1 + (D_d(k)/eps^2 - mu)^2)^-1 dk."""
    return _warn(mathieu_discrete_result(mu, params, window, kquad), "discrete Mathieu DoS")


def dos_at_fixed_resolution(kind: str, mu: float, lam: float, eps: float | None,
                            L: int, panels: int) -> float:
    """Non-adaptive zone average at a given window and panel count."""
    if kind == DISCRETE and L > inverse_even_integer(eps) // 2:
        raise WindowTooLargeError(f"L={L} exceeds 1/(2 eps)")
    if panels < 2 or panels % 2:
        raise InvalidParameterError("panels must be a positive even integer")
    return _zone_average(kind, lam, eps, L, panels, float(mu))
