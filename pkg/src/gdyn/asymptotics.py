"""Large-N laws for the eigenvector correlator.

The macroscopic correlator is ``-sigma/(pi tau^2)`` where ``sigma`` is the
smallest root of ``g(sigma) = -1/tau + mean_i 1/(A_i - sigma)`` with
``A_i = |a_i - z|^2``. Edge and collision scaling laws are erfc expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, gammainc

from .errors import ValidationError
from .exact import SourceSpec, _check_tau

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SADDLE_TOL = 1e-12


@dataclass(frozen=True)
class SaddleResult:
    sigma_min: float
    converged: bool
    iterations: int
    residual: float  # |g(sigma)| * tau


def _saddle_parts(A: np.ndarray, counts: np.ndarray, n: int, tau: float, d: float):
    # g and dg/dsigma written in terms of d = min(A) - sigma > 0
    gaps = A - A.min() + d
    g = -1.0 / tau + float(np.dot(counts, 1.0 / gaps)) / n
    dg = float(np.dot(counts, 1.0 / gaps ** 2)) / n
    return g, dg


def solve_min_saddle(tau: float, z: complex, source: SourceSpec, max_iter: int = 200) -> SaddleResult:
    """Smallest real root of the macroscopic saddle equation.

    ``g`` is strictly increasing on ``(-inf, min A)``, negative far left and
    divergent at ``min A``, so the root is bracketed by
    ``(min A - 2 N tau, min A - eps)``. Bisection shrinks the bracket and
    safeguarded Newton steps finish; a Newton step leaving the bracket falls
    back to bisection.
    """
    _check_tau(tau)
    A = np.abs(np.asarray(source.values, dtype=np.complex128) - complex(z)) ** 2
    counts = np.asarray(source.counts, dtype=float)
    n = source.n
    amin = float(A.min())
    # bracket in d = amin - sigma: g(d_hi) < 0, g(d_lo) > 0
    d_lo = 1e-12 * (1.0 + abs(amin))
    d_hi = 2.0 * n * tau
    g_lo, _ = _saddle_parts(A, counts, n, tau, d_lo)
    if g_lo <= 0.0:
        # the pole is so weak that the root sits within eps of it
        return SaddleResult(amin - d_lo, True, 0, abs(g_lo) * tau)
    d = 0.5 * (d_lo + d_hi)
    it = 0
    for it in range(1, max_iter + 1):
        g, dg = _saddle_parts(A, counts, n, tau, d)
        if g > 0:
            d_lo = d
        else:
            d_hi = d
        if abs(g) * tau < SADDLE_TOL:
            return SaddleResult(amin - d, True, it, abs(g) * tau)
        # g decreases with d, so dg/dd = -dg
        step = g / dg
        cand = d + step
        if not (d_lo < cand < d_hi) or it < 8:
            cand = math.sqrt(d_lo * d_hi) if d_hi / d_lo > 4.0 else 0.5 * (d_lo + d_hi)
        if cand == d:
            break
        d = cand
    g, _ = _saddle_parts(A, counts, n, tau, d)
    return SaddleResult(amin - d, abs(g) * tau < SADDLE_TOL, it, abs(g) * tau)


def macro_O(tau: float, z: complex, source: SourceSpec) -> float:
    """Macroscopic correlator ``(-sigma) theta(-sigma) / (pi tau^2)``, with ``theta(0) = 0``."""
    s = solve_min_saddle(tau, z, source).sigma_min
    return -s / (math.pi * tau * tau) if s < 0.0 else 0.0


def ginibre_bulk_O(tau: float, r2):
    """``(tau - |z|^2) theta(tau - |z|^2) / (pi tau^2)`` for the null source."""
    _check_tau(tau)
    r2 = np.asarray(r2, dtype=float)
    return np.where(r2 < tau, (tau - r2) / (math.pi * tau * tau), 0.0)


def ginibre_bulk_deviation(n: int, tau: float, r2):
    """Relative gap ``O_N / O_bulk - 1`` between the finite-N Ginibre correlator and the bulk law.

    With ``s = |z|^2/tau`` and ``x = N s`` the closed sum equals
    ``(Q(N, x) - s Q(N-1, x)) / (pi tau)`` for the regularised upper gamma
    ``Q``. Writing ``Q = 1 - P`` leaves ``(s P(N-1, x) - P(N, x)) / (1 - s)``,
    which keeps full relative accuracy deep in the bulk. Defined for ``s < 1``.
    """
    _check_tau(tau)
    if n < 2:
        raise ValidationError("bulk deviation needs N >= 2")
    s = np.asarray(r2, dtype=float) / tau
    if np.any(s >= 1.0):
        raise ValidationError("bulk deviation is defined inside the disk only")
    x = n * s
    return (s * gammainc(n - 1, x) - gammainc(n, x)) / (1.0 - s)


def edge_micro_law(delta, tau: float):
    """Scaled correlator ``sqrt(N) O`` at ``|z| = sqrt(tau) + delta / sqrt(N)``."""
    _check_tau(tau)
    delta = np.asarray(delta, dtype=float)
    st = math.sqrt(tau)
    val = _INV_SQRT_2PI * np.exp(-2.0 * delta ** 2 / tau) - (delta / st) * erfc(math.sqrt(2.0) * delta / st)
    return val / (math.pi * tau)


def collision_T(eta: complex, t: float, a: complex) -> float:
    a2 = abs(a) ** 2
    cross = (a * np.conj(eta) + np.conj(a) * eta).real
    return t + (cross ** 2 - a2 * abs(eta) ** 2) / a2


def collision_law_T(T, a2: float):
    """Collision law as a function of ``T_*`` and ``|a|^2``."""
    if not a2 > 0:
        raise ValidationError("collision law needs a nonzero source value")
    T = np.asarray(T, dtype=float)
    val = _INV_SQRT_2PI * np.exp(-T ** 2 / (2.0 * a2 * a2)) + (T / (2.0 * a2)) * erfc(-T / (math.sqrt(2.0) * a2))
    return val / (math.pi * a2)


def collision_micro_law(eta: complex, t: float, a: complex) -> float:
    """Scaled correlator ``sqrt(N) O`` near the origin when the two spiric lobes touch."""
    if a == 0:
        raise ValidationError("collision law needs a nonzero source value")
    return float(collision_law_T(collision_T(eta, t, a), abs(a) ** 2))


def macro_spiric(tau: float, a: complex, z):
    """Closed-form macroscopic correlator for the two-point source ``+-a``."""
    _check_tau(tau)
    z = np.asarray(z, dtype=np.complex128)
    am = np.abs(a - z) ** 2
    ap = np.abs(a + z) ** 2
    val = (tau - am - ap + np.sqrt(tau * tau + (ap - am) ** 2)) / (2.0 * math.pi * tau * tau)
    return np.where(val > 0.0, val, 0.0)


def spiric_sigma(tau: float, a: complex, z: complex) -> float:
    am = abs(a - z) ** 2
    ap = abs(a + z) ** 2
    return 0.5 * (am + ap - tau - math.sqrt(tau * tau + (ap - am) ** 2))
