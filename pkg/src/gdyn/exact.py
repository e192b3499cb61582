"""Exact finite-N density and eigenvector correlator for a normal initial matrix.

The process starts from ``X0 = diag(a_1, ..., a_N)`` and runs for rescaled time
``tau = N t``. With ``A_i = |a_i - z|^2`` the correlator has three equivalent
representations, all implemented here:

* a beta integral over ``[0, 1]`` of a contour integral around the ``A_i``;
* a finite sum for the null source (``a_i = 0``);
* a double integral: half line in ``u`` times a contour in ``sigma``.

Every contour integral is taken before the outer integral. Integrands are
produced by short recursions (see :mod:`gdyn.kernels`) that never build a
product only to subtract 1 from it, so no 1/beta cancellation is exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import gammaincc, gammaln, logsumexp

from . import kernels
from .contour import (
    best_radius,
    circle_integral,
    enclosing_radius,
    geometric_breakpoints,
    laguerre,
    panel_nodes,
)
from .errors import PoleCollision, QuadratureNonConverged, TruncationError, ValidationError

TOL_QUAD = 1e-8
POLE_FLOOR_REL = 1e-6
BETA_ORDER = 20
BETA_CHECK_ORDER = 14


# --------------------------------------------------------------------------- sources


@dataclass(frozen=True)
class SourceSpec:
    """Multiset of diagonal entries of the initial matrix."""

    values: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.values) != len(self.counts) or not self.values:
            raise ValidationError("source needs matching, nonempty values and counts")
        if any(int(c) < 1 for c in self.counts):
            raise ValidationError("source multiplicities must be positive")
        if not all(np.isfinite(complex(v)) for v in self.values):
            raise ValidationError("source values must be finite")

    @classmethod
    def from_values(cls, a) -> "SourceSpec":
        vals: list[complex] = []
        cnts: list[int] = []
        for x in np.atleast_1d(np.asarray(a, dtype=np.complex128)):
            x = complex(x)
            if vals and vals[-1] == x:
                cnts[-1] += 1
            elif x in vals:
                cnts[vals.index(x)] += 1
            else:
                vals.append(x)
                cnts.append(1)
        return cls(tuple(vals), tuple(cnts))

    @classmethod
    def ginibre(cls, n: int) -> "SourceSpec":
        return cls((0j,), (int(n),))

    @classmethod
    def spiric(cls, n: int, a: complex) -> "SourceSpec":
        if n % 2:
            raise ValidationError("the two-point source needs an even N")
        a = complex(a)
        return cls((a, -a), (n // 2, n // 2))

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    @property
    def a(self) -> np.ndarray:
        return np.repeat(np.asarray(self.values, dtype=np.complex128), self.counts)

    def distances(self, z: complex) -> np.ndarray:
        """``A_i = |a_i - z|^2`` for every source entry."""
        return np.abs(self.a - complex(z)) ** 2

    def to_text(self) -> str:
        return "\n".join(repr(complex(x)) for x in self.a) + "\n"


def parse_source(text: str) -> SourceSpec:
    """One complex number per line (or comma separated); ``#`` starts a comment."""
    vals = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for tok in line.replace(",", " ").split():
            try:
                vals.append(complex(tok.replace("i", "j")))
            except ValueError as exc:
                raise ValidationError(f"cannot parse source entry {tok!r}") from exc
    if not vals:
        raise ValidationError("empty source")
    return SourceSpec.from_values(vals)


@dataclass
class QuadInfo:
    """Diagnostics gathered while evaluating one point."""

    outer_nodes: int = 0
    max_contour_nodes: int = 0
    outer_error: float = 0.0
    notes: list = field(default_factory=list)

    def merge_contour(self, nodes: int) -> None:
        self.max_contour_nodes = max(self.max_contour_nodes, nodes)


# --------------------------------------------------------------------------- incomplete gamma

_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_RESCALE = 2.0 ** 500


def upper_gamma_int(k: int, x: float) -> tuple[float, int]:
    """Upper incomplete gamma ``Gamma(k, x)`` for integer ``k >= 1``.

    Returns ``(mantissa, exponent)`` with value ``mantissa * 2**exponent`` and
    ``0.5 <= mantissa < 1``, so results far outside double range stay exact in
    scale. Uses ``Gamma(k, x) = e^{-x} x^{k-1} sum_m (k-1)!/(m! x^{k-1-m})``.
    """
    k = int(k)
    x = float(x)
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if x < 0 or not math.isfinite(x):
        raise ValidationError("x must be finite and nonnegative")
    if x < 1.0:
        # (k-1)! e^{-x} sum_{m<k} x^m/m!, terms decreasing from m = 0
        f = math.factorial(k - 1)
        e = f.bit_length()
        sh = max(e - 64, 0)
        term = 1.0
        acc = [1.0]
        for m in range(1, k):
            term *= x / m
            if term < 1e-18:
                break
            acc.append(term)
        mant, e2 = math.frexp(math.ldexp(float(f >> sh), sh - e) * math.exp(-x) * math.fsum(acc))
        return mant, e + e2
    # e^{-x} = 2^{-E} e^{-r}, r reduced with a two-part ln 2
    E = int(round(x / math.log(2.0)))
    r = math.fsum([x, -E * _LN2_HI, -E * _LN2_LO])
    mant, expo = math.frexp(math.exp(-r))
    expo -= E
    # x^{k-1} in chunks that cannot underflow
    mx, ex = math.frexp(x)
    expo += ex * (k - 1)
    left = k - 1
    while left > 0:
        step = min(left, 1000)
        mant *= math.pow(mx, step)
        mant, e2 = math.frexp(mant)
        expo += e2
        left -= step
    # downward sum of ratios t_m / t_{k-1}
    t = 1.0
    s = 1.0
    for m in range(k - 2, -1, -1):
        t *= (m + 1) / x
        s += t
        if s > _RESCALE:
            s /= _RESCALE
            t /= _RESCALE
            expo += 500
    mant *= s
    mant, e3 = math.frexp(mant)
    return mant, expo + e3


def upper_gamma_int_log(k: int, x: float) -> float:
    m, e = upper_gamma_int(k, x)
    return math.log(m) + e * math.log(2.0)


def upper_gamma_int_value(k: int, x: float) -> float:
    """``Gamma(k, x)`` as a float (may overflow to inf or underflow to 0)."""
    m, e = upper_gamma_int(k, x)
    try:
        return math.ldexp(m, e)
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------- null source


def ginibre_closed_sum(n: int, tau: float, r2):
    """Finite-N correlator for the null source as a positive-term sum.

    ``O = e^{-x} / (pi tau N) * sum_{m<N} (N-m) x^m / m!`` with
    ``x = N r2 / tau``; evaluated with log-sum-exp so large N is safe.
    """
    n = int(n)
    _check_tau(tau)
    r2a = np.asarray(r2, dtype=np.float64)
    if np.any(r2a < 0):
        raise ValidationError("r2 must be nonnegative")
    x = n * r2a / tau
    m = np.arange(n, dtype=np.float64)
    base = np.log(n - m) - gammaln(m + 1.0)
    with np.errstate(divide="ignore"):
        lx = np.log(x)[..., None]
    with np.errstate(invalid="ignore"):
        terms = base + m * np.where(np.isfinite(lx), lx, -np.inf)
    terms[..., 0] = base[0]
    out = np.exp(logsumexp(terms, axis=-1) - x) / (math.pi * tau * n)
    return float(out) if np.ndim(out) == 0 else out


def ginibre_closed_sum_gamma(n: int, tau: float, r2: float) -> float:
    """Same quantity through ``(tau/N) sum_{m<N} Gamma(m+1, x)/m!`` (slow oracle)."""
    x = n * float(r2) / tau
    acc = math.fsum(math.exp(upper_gamma_int_log(m + 1, x) - math.lgamma(m + 1)) for m in range(n))
    return acc / (math.pi * tau * n)


def ginibre_density(n: int, tau: float, r2):
    """Finite-N eigenvalue density of the Ginibre ensemble at variance ``tau/N``."""
    out = gammaincc(int(n), int(n) * np.asarray(r2, dtype=np.float64) / tau) / (math.pi * tau)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------- helpers


def _check_tau(tau: float) -> None:
    if not (tau > 0 and math.isfinite(tau)):
        raise ValidationError(f"tau must be positive and finite, got {tau}")


def _prepare(n, tau, z, source: SourceSpec, pole_floor):
    _check_tau(tau)
    if source.n != int(n):
        raise ValidationError(f"source has {source.n} entries but n = {n}")
    g = complex(z) - source.a
    A = np.abs(g) ** 2
    floor = POLE_FLOOR_REL * tau if pole_floor is None else pole_floor
    if A.min() < floor:
        raise PoleCollision(f"z = {complex(z)} lies within sqrt({floor:.1e}) of a source entry")
    return g, A


def _contour_geometry(A, tau, n):
    """Centre and admissible radius range for circles around the ``A_i``."""
    c = float(A.mean())
    r0 = enclosing_radius(A, c, floor=max(1e-3 * tau / max(n, 1) ** 0.5, 1e-12))
    return c, (r0, max(20.0 * r0, 4.0 * (tau + float(A.max()))))


def _beta_log_abs(A, beta, n, tau):
    def log_abs(v):
        lp = np.log(np.abs(1.0 - beta * v[None, :] / (v[None, :] - A[:, None]))).sum(axis=0)
        return -beta * n * v.real / tau + np.maximum(lp, 0.0)

    return log_abs


def _beta_integral(point_fn, breaks, info: QuadInfo, scale: float):
    """Composite Gauss-Legendre over ``breaks`` with an embedded lower-order check."""
    xb, wb = panel_nodes(breaks, BETA_ORDER)
    hi = sum(w * point_fn(b) for b, w in zip(xb, wb))
    xc, wc = panel_nodes(breaks, BETA_CHECK_ORDER)
    lo = sum(w * point_fn(b) for b, w in zip(xc, wc))
    err = abs(hi - lo)
    info.outer_nodes = len(xb) + len(xc)
    info.outer_error = err
    if err > 1e-6 * scale:
        raise QuadratureNonConverged(f"beta integral unstable (embedded estimate {err:.2e})")
    return hi


# --------------------------------------------------------------------------- beta form


def correlator_beta_form(n: int, tau: float, z: complex, source: SourceSpec,
                         tol_quad: float = TOL_QUAD, pole_floor: float | None = None,
                         return_info: bool = False):
    """Correlator from the beta integral of a contour integral around the ``A_i``.

    ``O = (1/pi tau^2) int_0^1 dbeta oint dv/(2 pi i) e^{-beta N v/tau} prod(...)/beta + 1/(pi tau)``
    """
    n = int(n)
    g, A = _prepare(n, tau, z, source, pole_floor)
    c, r0 = _contour_geometry(A, tau, n)
    info = QuadInfo()
    tol_c = 1e-2 * tol_quad * tau

    def at_beta(beta):
        R = best_radius(_beta_log_abs(A, beta, n, tau), c, *r0)
        res = circle_integral(
            lambda v: kernels.beta_kernel(A, beta, v, np.exp(-beta * v / tau)), c, R, tol_c)
        info.merge_contour(res.nodes)
        return res.value.real

    breaks = geometric_breakpoints(tau / (n * (float(A.max()) + tau)))
    integral = _beta_integral(at_beta, breaks, info, tau)
    val = integral / (math.pi * tau * tau) + 1.0 / (math.pi * tau)
    return (val, info) if return_info else val


# --------------------------------------------------------------------------- density


def _density_bracket_fd(n, tau, z, source, beta):
    """Contour integral of ``e^{-beta N v/tau} (prod - 1)/(beta^2 v)`` at one z."""
    A = source.distances(z)
    c, r0 = _contour_geometry(A, tau, n)
    R = best_radius(_beta_log_abs(A, beta, n, tau), c, *r0)
    res = circle_integral(
        lambda v: kernels.beta_kernel(A, beta, v, np.exp(-beta * v / tau)) / (beta * v), c, R,
        1e-14 * n)
    return res.value.real


def density_source(n: int, tau: float, z: complex, source: SourceSpec,
                   tol_quad: float = TOL_QUAD, pole_floor: float | None = None,
                   method: str = "analytic", h: float | None = None, return_info: bool = False):
    """Normalised eigenvalue density for the diffusing matrix started at ``diag(a)``.

    ``method="analytic"`` moves the ``d_z d_zbar`` derivative inside the
    contour integral exactly. ``method="fd"`` applies a centred five-point
    Laplacian of step ``h`` to the inner bracket instead (slower, less
    accurate; useful as an independent check).
    """
    n = int(n)
    g, A = _prepare(n, tau, z, source, pole_floor)
    info = QuadInfo()
    breaks = geometric_breakpoints(tau / (n * (float(A.max()) + tau)))
    if method == "analytic":
        c, r0 = _contour_geometry(A, tau, n)
        tol_c = 1e-4 * tol_quad * n / tau

        def at_beta(beta):
            base = _beta_log_abs(A, beta, n, tau)

            def log_abs(v):
                # the derivative terms carry up to 1/(v-A)^3 on top of the beta kernel
                d = np.abs(v[None, :] - A[:, None])
                extra = np.log(np.sum(d ** -2 * (1.0 + 2.0 * A[:, None] / d), axis=0) / n + 1e-300)
                return base(v) + np.maximum(extra, 0.0)

            R = best_radius(log_abs, c, *r0)
            res = circle_integral(
                lambda v: kernels.density_kernel(A, g, beta, v, np.exp(-beta * v / tau)), c, R, tol_c)
            info.merge_contour(res.nodes)
            # closed-form contour integral of the split-off sum_i s_i / beta part
            head = np.exp(-beta * n * A / tau) * (n / tau - beta * n * n * A / (tau * tau))
            return res.value.real + float(head.sum())

    elif method == "fd":
        step = h if h is not None else 1e-3 * math.sqrt(tau)
        z = complex(z)
        shifts = (step, -step, 1j * step, -1j * step)

        def at_beta(beta):
            centre = _density_bracket_fd(n, tau, z, source, beta)
            ring = sum(_density_bracket_fd(n, tau, z + s, source, beta) for s in shifts)
            return (ring - 4.0 * centre) / (4.0 * step * step)

    else:
        raise ValidationError(f"unknown method {method!r}")
    integral = _beta_integral(at_beta, breaks, info, n / tau)
    val = integral / (math.pi * n)
    return (val, info) if return_info else val


# --------------------------------------------------------------------------- double contour


def correlator_double_contour(n: int, tau: float, z: complex, source: SourceSpec,
                              tol_quad: float = TOL_QUAD, pole_floor: float | None = None,
                              return_info: bool = False):
    """Correlator from the half-line ``u`` integral of a contour integral in ``sigma``.

    ``O = -(1/pi tau^2) int_0^inf du oint dsigma/(2 pi i)
    e^{-N(sigma+u)/tau}/(sigma+u) prod_i (A_i+u)/(A_i-sigma)``, contour around
    the ``A_i`` only. After pulling out ``e^{-N u/tau}`` the contour integral
    is a polynomial of degree below N in ``u``, so Gauss-Laguerre with more
    than N/2 nodes is exact; two orders are compared as a tail check.
    """
    n = int(n)
    g, A = _prepare(n, tau, z, source, pole_floor)
    c, r0 = _contour_geometry(A, tau, n)
    info = QuadInfo()
    # each node value is weighted by an O(1) Laguerre weight; stop at rounding
    tol_c = 1e-6 * tol_quad * tau

    def G(u):
        # the kernel is regular at sigma = -u, but the trapezoid terms still
        # carry e^{-N sigma/tau}/|sigma+u| from the subtracted constant
        def log_abs(s):
            lp = np.log(np.abs((A[:, None] + u) / (A[:, None] - s[None, :]))).sum(axis=0)
            return -n * s.real / tau + np.logaddexp(lp, 0.0) - np.log(np.abs(s + u) + 1e-300)

        R = best_radius(log_abs, c, *r0, n_radii=40)
        res = circle_integral(
            lambda s: np.exp(-n * s / tau) * kernels.double_contour_kernel(A, u, s), c, R, tol_c)
        info.merge_contour(res.nodes)
        return res.value.real

    def rule(order):
        x, w = laguerre(order)
        return (tau / n) * sum(wk * G(tau * xk / n) for xk, wk in zip(x, w))

    n1 = n // 2 + 3
    v1 = rule(n1)
    v2 = rule(n1 + 4)
    info.outer_nodes = 2 * n1 + 4
    info.outer_error = abs(v1 - v2)
    if abs(v1 - v2) > tol_quad * tau:
        raise TruncationError(f"u-integral changes by {abs(v1 - v2):.2e} between Laguerre orders")
    val = -v2 / (math.pi * tau * tau)
    return (val, info) if return_info else val


# --------------------------------------------------------------------------- spiric support


def spiric_boundary(tau: float, a: complex, z):
    """True where ``z`` lies inside the support for the two-point source ``+-a``."""
    _check_tau(tau)
    z = np.asarray(z, dtype=np.complex128)
    ap = np.abs(a + z) ** 2
    am = np.abs(a - z) ** 2
    out = 0.5 * tau * (ap + am) >= ap * am
    return bool(out) if out.ndim == 0 else out


def spiric_components(tau: float, a: complex, half_width: float, cells: int = 200) -> int:
    """Number of 4-connected pieces of the two-point support on a square grid.

    The grid has ``cells`` points per side spanning ``[-half_width, half_width]``
    in both directions.
    """
    if cells < 2 or not half_width > 0:
        raise ValidationError("need a positive half width and at least two cells per side")
    xs = np.linspace(-half_width, half_width, cells)
    return support_components(spiric_boundary(tau, a, xs[:, None] + 1j * xs[None, :]))


def support_components(mask) -> int:
    """4-connected components of a boolean grid (flood fill by ``scipy.ndimage.label``)."""
    _, count = ndimage.label(np.asarray(mask, dtype=bool))
    return int(count)
