"""Density of states of the 1D discrete and continuum Laplacians.

Both quantities are one-dimensional integrals of a Lorentzian of the band
energy and are evaluated with a composite midpoint rule refined by panel
doubling until successive values agree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9
TAIL_TOL = 1e-9
MAX_PANELS = 2 ** 24
MAX_CUTOFF_DOUBLINGS = 12


class NonConvergenceWarning(RuntimeWarning):
    pass


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint-rule settings.

    panels
        Starting number of panels over the integration interval.
    tail_cutoff
        Half-width K of the truncated real line for the continuum integral.
    refine_factor
        Panel multiplier between refinement levels.
    """

    panels: int = 4096
    tail_cutoff: float = 50.0
    refine_factor: int = 2

    def __post_init__(self):
        if int(self.panels) != self.panels or self.panels < 16:
            raise InvalidParameterError("panels must be an integer >= 16")
        if not self.tail_cutoff >= 10:
            raise InvalidParameterError("tail_cutoff must be >= 10")
        if int(self.refine_factor) != self.refine_factor or self.refine_factor < 2:
            raise InvalidParameterError("refine_factor must be an integer >= 2")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class QuadResult:
    value: float
    panels: int
    delta: float
    converged: bool
    cutoff: float | None = None
    tail_bound: float | None = None


@dataclass(frozen=True)
class DosCurve:
    model: str
    epsilon: float | None
    samples: tuple
    quadrature: QuadratureSpec

    def __post_init__(self):
        mus = [m for m, _ in self.samples]
        if any(b <= a for a, b in zip(mus, mus[1:])):
            raise InvalidParameterError("mu samples must be strictly increasing")
        if not all(0 < v < math.inf for _, v in self.samples):
            raise InvalidParameterError("DoS samples must be positive and finite")

    @property
    def mu(self) -> np.ndarray:
        return np.array([m for m, _ in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])


def _even_midpoint_half(f, half_width, panels):
    """Midpoint rule over [-a, a] for an even integrand, using the right half.

    ``panels`` counts panels on the full interval and must be even.
    """
    h = 2.0 * half_width / panels
    x = (np.arange(panels // 2) + 0.5) * h
    return 2.0 * h * math.fsum(f(x))


def _refine(f, half_width, panels, refine, tol):
    prev = _even_midpoint_half(f, half_width, panels)
    while True:
        nxt_panels = panels * refine
        if nxt_panels > MAX_PANELS:
            return QuadResult(prev, panels, math.inf, False)
        cur = _even_midpoint_half(f, half_width, nxt_panels)
        delta = abs(cur - prev)
        panels = nxt_panels
        if delta < tol:
            return QuadResult(cur, panels, delta, True)
        prev = cur


def _warn_if(res: QuadResult, what: str) -> float:
    if not res.converged:
        warnings.warn(f"{what}: panel cap reached, last difference {res.delta:.3e}",
                      NonConvergenceWarning, stacklevel=3)
    return res.value


def discrete_scaled_result(mu: float, eps: float,
                           quad: QuadratureSpec = DEFAULT_QUAD) -> QuadResult:
    if not 0 < eps:
        raise InvalidParameterError("eps must be positive")
    inv_eps2 = 1.0 / (eps * eps)

    def f(k):
        # 2 - 2cos k written as 4 sin^2(k/2) to avoid cancellation near k = 0
        s = np.sin(0.5 * k)
        t = 4.0 * s * s * inv_eps2 - mu
        return 1.0 / (1.0 + t * t)

    panels = quad.panels + quad.panels % 2
    res = _refine(f, math.pi, panels, quad.refine_factor, 2 * math.pi * eps * SUM_TOL)
    scale = 1.0 / (2.0 * math.pi * eps)
    return QuadResult(res.value * scale, res.panels, res.delta * scale, res.converged)


def dos_laplacian_discrete_scaled(mu: float, eps: float,
                                  quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """eps-scaled discrete Laplacian DoS,
    (1/(2 pi eps)) * integral over [-pi, pi] of 1/(1 + ((2-2cos k)/eps^2 - mu)^2).
    """
    return _warn_if(discrete_scaled_result(mu, eps, quad), "discrete Laplacian DoS")


def continuum_tail_bound(mu: float, cutoff: float) -> float:
    """Upper bound on the DoS mass outside [-K, K] for the continuum integrand.

    For k >= K and K^2 > max(mu, 0): k^2 - mu >= c k^2 with c = 1 - max(mu,0)/K^2,
    so the two tails together are at most 1 / (3 pi c^2 K^3).
    """
    c = 1.0 - max(mu, 0.0) / (cutoff * cutoff)
    if c <= 0:
        return math.inf
    return 1.0 / (3.0 * math.pi * c * c * cutoff ** 3)


def continuum_result(mu: float, quad: QuadratureSpec = DEFAULT_QUAD) -> QuadResult:
    cutoff = float(quad.tail_cutoff)
    panels = quad.panels + quad.panels % 2
    for _ in range(MAX_CUTOFF_DOUBLINGS + 1):
        if mu <= cutoff * cutoff / 2 and continuum_tail_bound(mu, cutoff) < TAIL_TOL:
            break
        cutoff *= 2.0
        panels *= 2
    else:
        raise InvalidParameterError(
            f"mu={mu} too large for tail control (cutoff reached {cutoff:g})")

    def f(k):
        t = k * k - mu
        return 1.0 / (1.0 + t * t)

    res = _refine(f, cutoff, panels, quad.refine_factor, 2 * math.pi * SUM_TOL)
    scale = 1.0 / (2.0 * math.pi)
    return QuadResult(res.value * scale, res.panels, res.delta * scale, res.converged,
                      cutoff, continuum_tail_bound(mu, cutoff))


def dos_laplacian_continuum(mu: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Continuum Laplacian DoS, (1/2pi) * integral over R of 1/(1 + (k^2 - mu)^2)."""
    return _warn_if(continuum_result(mu, quad), "continuum Laplacian DoS")


def laplacian_error_curve(mu: float, eps_list, quad: QuadratureSpec = DEFAULT_QUAD):
    """[(eps, |DoS_d^eps(mu) - DoS_c(mu)|) for eps in eps_list]."""
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e < 1 for e in eps_list):
        raise InvalidParameterError("eps values must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameterError("eps_list must be strictly decreasing")
    cont = dos_laplacian_continuum(mu, quad)
    return [(e, abs(dos_laplacian_discrete_scaled(mu, e, quad) - cont)) for e in eps_list]


def laplacian_curve(mus, eps: float | None, quad: QuadratureSpec = DEFAULT_QUAD) -> DosCurve:
    """Sample either the discrete (eps given) or continuum (eps None) DoS."""
    if eps is None:
        vals = [dos_laplacian_continuum(m, quad) for m in mus]
        tag = "laplacian-continuum"
    else:
        vals = [dos_laplacian_discrete_scaled(m, eps, quad) for m in mus]
        tag = "laplacian-discrete"
    return DosCurve(tag, eps, tuple(zip(map(float, mus), vals)), quad)
