"""Explicit discrete-to-continuum error budgets and power-law rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Q_OPT = 16.0 / 11.0
Q_MIN = 10.0 / 7.0
Q_MAX = 1.5


class DegenerateDataError(ValueError):
    """Raised when a rate fit receives non-positive errors."""


@dataclass(frozen=True)
class ErrorBudget:
    """Named nonnegative bound terms and their sum.

    ``dos_scale`` converts ``total`` into a bound on |DoS_d - DoS_c|: the
    Laplacian budget bounds the unnormalised integral difference, which is
    2*pi times the DoS difference.
    """

    terms: tuple
    total: float
    q: float
    eps: float
    mu: float | None
    validity: dict
    dos_scale: float = 1.0

    @property
    def valid(self) -> bool:
        return all(self.validity.values())

    @property
    def dos_bound(self) -> float:
        return self.total * self.dos_scale

    def term(self, name: str) -> float:
        return dict(self.terms)[name]


def _q_flags(q):
    return {"q_above_10_7": q > Q_MIN, "q_below_3_2": q < Q_MAX}


def laplacian_bound(eps: float, mu: float, q: float = Q_OPT) -> ErrorBudget:
    """Bound on (1/eps) int_{-pi}^{pi} L_d - int_R L_c for the Laplacian pair.

    Terms: inner mismatch from the k^6 and mu*k^4 Taylor remainders, the
    outer discrete integral and the discarded continuum tail.  Negative mu
    enters through |mu|.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    terms = (
        ("inner_mismatch", 2.0 * eps ** (3.5 * q - 5.0)),
        ("inner_mismatch_mu", 4.0 * abs(mu) * eps ** (2.5 * q - 3.0)),
        ("outer_integral", 32.0 * math.pi * eps ** (3.0 - 2.0 * q)),
        ("continuum_tail", (8.0 / 3.0) * eps ** (3.0 - 1.5 * q)),
    )
    validity = _q_flags(q)
    validity["mu_in_window"] = abs(mu) <= eps ** (q - 2.0)
    return ErrorBudget(terms, math.fsum(v for _, v in terms), q, eps, mu, validity,
                       dos_scale=1.0 / (2.0 * math.pi))


def mathieu_bound(eps: float, q: float = Q_OPT, c5: float = 1.0, c6: float = 1.0) -> ErrorBudget:
    """Bound on |DoS_c - DoS_d^eps| for the Mathieu pair.

    ``c5`` and ``c6`` are the unspecified constants of the exponentially
    small truncation term; see ``estimate_mathieu_constants``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not (c5 > 0 and c6 > 0):
        raise ValueError("c5 and c6 must be positive")
    terms = (
        ("window_mismatch", 2.0 ** 16 * math.pi ** 6 * eps ** (3.5 * q - 5.0)),
        ("window_edges", 8.0 * eps ** (1.0 - 0.5 * q)),
        ("corner_eigenvalue", (8.0 / math.pi ** 4) * eps ** (3.0 - 2.0 * q)),
        ("combes_thomas", c5 * eps ** -2.0 * math.exp(-c6 * eps ** (0.5 * q - 1.0))),
    )
    return ErrorBudget(terms, math.fsum(v for _, v in terms), q, eps, None, _q_flags(q))


def estimate_mathieu_constants(lam: float = 8.0, mu: float = 0.0, L: int = 50):
    """(c5, c6) taken from a decay fit of the continuum Bloch resolvent.

    c6 is the fitted decay rate, c5 = 10 * c1^2 with c1 the fitted prefactor.
    """
    from .mathieu_bloch import BlochIndexWindow, build_dc
    from .truncation_probe import combes_thomas_fit

    fit = combes_thomas_fit(build_dc(0.0, lam, BlochIndexWindow(L)), mu)
    c1 = math.exp(fit.intercept)
    return 10.0 * c1 * c1, -fit.slope


@dataclass(frozen=True)
class RateFit:
    exponent: float
    log_constant: float
    residual: float
    n_points: int


def fit_rate(points) -> RateFit:
    """Least-squares fit of log(error) = log C + p log(eps)."""
    pts = [(float(e), float(err)) for e, err in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(err <= 0 for _, err in pts):
        raise DegenerateDataError("errors must be positive; agreement at machine precision")
    eps = [e for e, _ in pts]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps must be strictly decreasing")
    x = np.log(eps)
    y = np.log([err for _, err in pts])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, icept] - y) ** 2)))
    return RateFit(float(slope), float(icept), resid, len(pts))
