"""Trapezoidal quadrature on circles and Gauss rules on panels."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_laguerre, roots_legendre

from .errors import QuadratureNonConverged

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    nodes: int

    def points(self, nodes: int | None = None) -> np.ndarray:
        m = self.nodes if nodes is None else nodes
        return self.center + self.radius * np.exp(2j * np.pi * np.arange(m) / m)

    def clearance(self, poles) -> float:
        """Smallest distance from any pole to the circle, in units of the radius."""
        d = np.abs(np.abs(np.asarray(poles) - self.center) - self.radius)
        return float(d.min() / self.radius) if d.size else 1.0


@dataclass(frozen=True)
class ContourResult:
    value: complex
    nodes: int
    error: float


def enclosing_radius(poles, center: complex, floor: float) -> float:
    """Smallest radius that leaves every pole at most 0.8 radii from the centre."""
    spread = float(np.max(np.abs(np.asarray(poles) - center))) if len(poles) else 0.0
    return max(spread / 0.8, floor)


def best_radius(log_abs, center: complex, r_min: float, r_max: float,
                n_radii: int = 24, n_angles: int = 32) -> float:
    """Radius in ``[r_min, r_max]`` (log spaced) minimising the peak of ``log|f|``.

    ``log_abs(v)`` must return ``log|f(v)|`` for an array of points. The
    trapezoidal rule loses roughly ``max|f| / |integral|`` digits, so the
    circle with the lowest peak gives the cleanest sum.
    """
    radii = np.geomspace(r_min, max(r_max, 1.01 * r_min), n_radii)
    ang = np.exp(2j * np.pi * (np.arange(n_angles) + 0.5) / n_angles)
    pts = center + radii[:, None] * ang[None, :]
    peak = np.max(log_abs(pts.ravel()).reshape(pts.shape) + np.log(radii)[:, None], axis=1)
    return float(radii[int(np.argmin(peak))])


def circle_integral(f, center: complex, radius: float, tol: float, m0: int = 64,
                    max_nodes: int = 16384) -> ContourResult:
    """``(1/2 pi i) \\oint f(v) dv`` on a circle, doubling nodes until stable.

    Convergence is declared once two successive estimates differ by less than
    ``tol`` or by less than the rounding floor set by the largest term.
    """
    m = m0
    th = 2.0 * np.pi * np.arange(m) / m
    v = center + radius * np.exp(1j * th)
    terms = f(v) * (v - center)
    total = terms.sum()
    est = total / m
    peak = float(np.max(np.abs(terms)))
    while True:
        m2 = 2 * m
        th = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        v = center + radius * np.exp(1j * th)
        t2 = f(v) * (v - center)
        total = total + t2.sum()
        peak = max(peak, float(np.max(np.abs(t2))))
        new = total / m2
        err = abs(new - est)
        floor = 64.0 * _EPS * peak
        if not np.isfinite(new):
            raise QuadratureNonConverged("non-finite contour integrand")
        if err <= max(tol, floor):
            return ContourResult(complex(new), m2, float(err))
        if m2 >= max_nodes:
            raise QuadratureNonConverged(
                f"contour integral not converged at {m2} nodes (change {err:.2e}, tol {tol:.2e})")
        m, est = m2, new


@lru_cache(maxsize=64)
def legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=64)
def laguerre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_laguerre(n)


def geometric_breakpoints(scale: float, upper: float = 1.0) -> list[float]:
    """``[0, s, 2s, 4s, ..., upper]`` with ``s = min(scale, upper/2)``."""
    s = min(max(scale, 1e-300), upper / 2.0)
    pts = [0.0]
    b = s
    while b < upper:
        pts.append(b)
        b *= 2.0
    pts.append(upper)
    return pts


def panel_nodes(breaks, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre01(order)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs.append(lo + (hi - lo) * x)
        ws.append((hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)
