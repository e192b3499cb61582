"""Numerical checks of the Fokker-Planck machinery in eigenvalue/eigenvector
coordinates.

A test point is a pair ``(Lambda, S)``. From it we build ``A = S^H S``, the
overlap matrix ``O_ij = A^-1_ij A_ji``, the reciprocal gaps
``W_ln = 1/(lambda_l - lambda_n)`` (zero on the diagonal) and the four
second-order coefficient tensors

* ``Cll[i, j]      = O_ij``
* ``Cls[i, k, l]   = sum_n conj(S_kn) A_li A^-1_in conj(W_ln)``
* ``Csl[i, k, l]   = sum_n S_kn A_il A^-1_ni W_ln``
* ``Css[k, l, n, m] = sum_ab S_ka conj(S_nb) A_ml A^-1_ab W_la conj(W_mb)``.

Derivatives of these tensors with respect to ``S`` and ``conj(S)`` are
assembled from the closed-form derivatives of ``A`` and ``A^-1`` by the
product rule, so the cancellation checks do not reuse the simplified sums
they are meant to confirm. Wirtinger derivatives in finite-difference checks
use ``d/dS = (d/dx - i d/dy)/2`` and ``d/dconj(S) = (d/dx + i d/dy)/2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import mpmath
import numpy as np

from .errors import StepTooLarge, ValidationError
from .integrators import draw_increment, dyson_increment, trajectory_rng
from .linalg_core import Gauge, SpectralDecomposition, min_pairwise_gap

POINT_GAP_MIN = 1e-3
POINT_COND_MAX = 1e3
TOL_IDENTITY = 1e-10


def _es(expr: str, *ops):
    return np.einsum(expr, *ops, optimize=_path(expr, tuple(o.shape for o in ops)))


@lru_cache(maxsize=256)
def _path(expr: str, shapes: tuple):
    dummies = [np.empty(s) for s in shapes]
    return np.einsum_path(expr, *dummies, optimize="optimal")[0]


@dataclass(frozen=True)
class SfpPoint:
    lambdas: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    @cached_property
    def s_inv(self) -> np.ndarray:
        return np.linalg.inv(self.s)

    @cached_property
    def sc(self) -> np.ndarray:
        return self.s.conj()

    @cached_property
    def sdi(self) -> np.ndarray:
        """``(S^H)^-1``."""
        return self.s_inv.conj().T

    @cached_property
    def a(self) -> np.ndarray:
        return self.s.conj().T @ self.s

    @cached_property
    def a_inv(self) -> np.ndarray:
        return self.s_inv @ self.s_inv.conj().T

    @cached_property
    def o(self) -> np.ndarray:
        return self.a_inv * self.a.T

    @cached_property
    def w(self) -> np.ndarray:
        d = self.lambdas[:, None] - self.lambdas[None, :]
        np.fill_diagonal(d, 1.0)
        w = 1.0 / d
        np.fill_diagonal(w, 0.0)
        return w

    @cached_property
    def u(self) -> np.ndarray:
        """``u_i = sum_{k != i} 1/(lambda_i - lambda_k)``, so ``d_lambda_i F = 2 F u_i``."""
        return self.w.sum(axis=1)

    @cached_property
    def c_ll(self) -> np.ndarray:
        return self.o

    @cached_property
    def c_ls(self) -> np.ndarray:
        return _es("kn,li,in,ln->ikl", self.sc, self.a, self.a_inv, self.w.conj())

    @cached_property
    def c_sl(self) -> np.ndarray:
        return _es("kn,il,ni,ln->ikl", self.s, self.a, self.a_inv, self.w)

    @cached_property
    def c_ss(self) -> np.ndarray:
        return _es("ka,nb,ml,ab,la,mb->klnm", self.s, self.sc, self.a, self.a_inv, self.w, self.w.conj())

    def decomposition(self) -> SpectralDecomposition:
        return SpectralDecomposition(self.lambdas, self.s, self.s_inv, Gauge.TRAJECTORY,
                                     min_pairwise_gap(self.lambdas))


def sample_point(n: int, rng: np.random.Generator, gap_min: float = POINT_GAP_MIN,
                 cond_max: float = POINT_COND_MAX, max_tries: int = 10000) -> SfpPoint:
    """Eigenvalues uniform in the unit disk and a complex Gaussian ``S``, resampled
    until the gap and conditioning bounds hold."""
    if n < 1:
        raise ValidationError("n must be positive")
    for _ in range(max_tries):
        r = np.sqrt(rng.random(n))
        lam = r * np.exp(2j * np.pi * rng.random(n))
        if n > 1 and min_pairwise_gap(lam) < gap_min:
            continue
        s = draw_increment(rng, (n, n), 1.0, 1.0)
        if np.linalg.cond(s) >= cond_max:
            continue
        return SfpPoint(lam, s)
    raise ValidationError("could not sample a well-conditioned point")


def point_from_decomposition(dec: SpectralDecomposition) -> SfpPoint:
    return SfpPoint(np.asarray(dec.lambdas), np.asarray(dec.s))


# --------------------------------------------------------------------------- derivative identities


def closed_form_derivatives(p: SfpPoint) -> dict[str, np.ndarray]:
    """Derivative tensors of ``A`` and ``A^-1`` indexed ``[k, l, row, col]``."""
    n = p.n
    eye = np.eye(n)
    return {
        # d A_am / d conj(S_kl) = S_km delta_la
        "dA_dSbar": np.einsum("km,la->klam", p.s, eye),
        # d A_ab / d S_kl = conj(S_ka) delta_lb
        "dA_dS": np.einsum("ka,lb->klab", p.sc, eye),
        # d A^-1_na / d conj(S_kl) = -A^-1_nl ((S^H)^-1)_ka
        "dAi_dSbar": -np.einsum("nl,ka->klna", p.a_inv, p.sdi),
        # d A^-1_ab / d S_kl = -S^-1_ak A^-1_lb
        "dAi_dS": -np.einsum("ak,lb->klab", p.s_inv, p.a_inv),
    }


def _fd_derivatives(s: np.ndarray, h: float) -> dict[str, np.ndarray]:
    n = s.shape[0]

    def fa(m):
        return m.conj().T @ m

    def fai(m):
        return np.linalg.inv(m.conj().T @ m)

    out = {key: np.zeros((n, n, n, n), np.complex128) for key in ("dA_dSbar", "dA_dS", "dAi_dSbar", "dAi_dS")}
    for k in range(n):
        for l in range(n):
            e = np.zeros((n, n))
            e[k, l] = 1.0
            for name, f in (("A", fa), ("Ai", fai)):
                dx = (f(s + h * e) - f(s - h * e)) / (2 * h)
                dy = (f(s + 1j * h * e) - f(s - 1j * h * e)) / (2 * h)
                out[f"d{name}_dS"][k, l] = 0.5 * (dx - 1j * dy)
                out[f"d{name}_dSbar"][k, l] = 0.5 * (dx + 1j * dy)
    return out


def check_derivative_ids(p: SfpPoint, h: float = 1e-5, richardson: bool = True) -> float:
    """Max deviation between the closed-form derivatives of ``A``, ``A^-1``
    and centred differences in the entries of ``S``, relative to
    ``max(1, largest closed-form entry)``."""
    exact = closed_form_derivatives(p)
    d1 = _fd_derivatives(p.s, h)
    if richardson:
        d2 = _fd_derivatives(p.s, h / 2)
        d1 = {k: (4.0 * d2[k] - d1[k]) / 3.0 for k in d1}
    scale = max(1.0, max(float(np.max(np.abs(v))) for v in exact.values()))
    return float(max(np.max(np.abs(d1[k] - exact[k])) for k in exact)) / scale


# --------------------------------------------------------------------------- divergence terms


def div_c_ls(p: SfpPoint) -> np.ndarray:
    """``sum_kl d/d conj(S_kl) Cls[i, k, l]`` via the product rule."""
    wc = p.w.conj()
    t_a = _es("kn,ln,ki,in->i", p.sc, wc, p.s, p.a_inv)
    t_b = _es("kn,ln,li,il,kn->i", p.sc, wc, p.a, p.a_inv, p.sdi)
    return t_a - t_b


class _AbsPoint:
    """Entrywise magnitudes of the factors used by the product-rule terms."""

    def __init__(self, p: SfpPoint):
        for name in ("s", "sc", "s_inv", "sdi", "a", "a_inv", "w"):
            setattr(self, name, np.abs(getattr(p, name)))


def _div_c_sl_parts(p: SfpPoint):
    t_a = _es("kn,ln,ki,ni->i", p.s, p.w, p.sc, p.a_inv)
    t_b = _es("kn,ln,il,nk,li->i", p.s, p.w, p.a, p.s_inv, p.a_inv)
    return t_a, t_b


def div_c_sl(p: SfpPoint) -> np.ndarray:
    """``sum_kl d/d S_kl Csl[i, k, l]`` via the product rule."""
    t_a, t_b = _div_c_sl_parts(p)
    return t_a - t_b


def _div_c_ss_bar_parts(p: SfpPoint):
    wc = p.w.conj()
    t_b = _es("ka,nb,nl,ab,la,mb->kl", p.s, p.sc, p.s, p.a_inv, p.w, wc)
    t_c = _es("ka,nb,ml,am,nb,la,mb->kl", p.s, p.sc, p.a, p.a_inv, p.sdi, p.w, wc)
    return t_b, t_c


def div_c_ss_bar(p: SfpPoint) -> np.ndarray:
    """``sum_nm d/d conj(S_nm) Css[k, l, n, m]`` as a ``(k, l)`` array."""
    t_b, t_c = _div_c_ss_bar_parts(p)
    return t_b - t_c


def div2_c_ss(p: SfpPoint) -> complex:
    """``sum_klnm d^2/(d S_kl d conj(S_nm)) Css[k, l, n, m]``."""
    s, sc, a, ai, si, sdi, w = p.s, p.sc, p.a, p.a_inv, p.s_inv, p.sdi, p.w
    wc = w.conj()
    b1 = _es("ka,kb,ab,la,mb->", s, sc, ai, w, wc)
    b2 = _es("ka,nb,nl,ak,lb,la,mb->", s, sc, s, si, ai, w, wc)
    c1 = _es("ka,nb,km,am,nb,la,mb->", s, sc, sc, ai, sdi, w, wc)
    c2 = _es("ka,nb,ml,ak,lm,nb,la,mb->", s, sc, a, si, ai, sdi, w, wc)
    return complex(b1 - b2 - c1 + c2)


@dataclass(frozen=True)
class IdentityResult:
    residual: float  # |sum| / largest term
    terms: tuple


def check_TQ(p: SfpPoint) -> IdentityResult:
    """The four terms multiplying ``Q`` (each divided by ``F``) and their relative sum."""
    u, uc = p.u, p.u.conj()
    t1 = 4.0 * complex(uc @ (p.c_ll.T @ u))  # sum_ij O_ij d_i dbar_j F / F
    t2 = complex(np.dot(div_c_ls(p), 2.0 * u))
    t3 = complex(np.dot(div_c_sl(p), 2.0 * uc))
    t4 = div2_c_ss(p)
    terms = (t1, t2, t3, t4)
    scale = max(abs(t) for t in terms)
    total = abs(sum(terms))
    return IdentityResult(total / scale if scale > 0 else total, terms)


def check_TdQ(p: SfpPoint) -> tuple[float, float]:
    """Relative size of the two bracket identities multiplying first derivatives of ``Q``.

    Each residual is scaled by the same contractions taken over absolute
    values, which bounds the rounding error even where every term vanishes
    (at a normal point, for instance).
    """
    u, uc = p.u, p.u.conj()
    a1 = 2.0 * (p.c_ll.T @ u)  # sum_i O_ij d_lambda_i F / F, indexed by j
    a2 = 2.0 * np.einsum("ikl,i->kl", p.c_sl, uc)
    m = _AbsPoint(p)
    au = np.abs(p.w).sum(axis=1)
    s1 = 2.0 * (np.abs(p.o).T @ au) + sum(_div_c_sl_parts(m))
    s2 = 2.0 * np.einsum("ikl,i->kl", np.abs(p.c_sl), au) + sum(_div_c_ss_bar_parts(m))

    def rel(x, parts, scale):
        r = np.max(np.abs(x + parts[0] - parts[1]))
        sc = float(np.max(scale))
        return float(r / sc) if sc > 0 else float(r)

    return rel(a1, _div_c_sl_parts(p), s1), rel(a2, _div_c_ss_bar_parts(p), s2)


# --------------------------------------------------------------------------- covariances


@dataclass
class CovarianceReport:
    n: int
    draws: int
    dt: float
    max_z: dict = field(default_factory=dict)
    min_diag_ratio: float = math.nan

    @property
    def worst(self) -> float:
        return max(self.max_z.values())


def _z_scores(prod_sum, prod_sq_re, prod_sq_im, count, pred):
    mean = prod_sum / count
    var_re = np.maximum(prod_sq_re / count - mean.real ** 2, 0.0) * count / (count - 1)
    var_im = np.maximum(prod_sq_im / count - mean.imag ** 2, 0.0) * count / (count - 1)
    # entries that vanish identically (e.g. diagonal imaginary parts) carry
    # rounding-level spread only, so floor the standard error
    floor = 1e-10 * max(float(np.max(np.abs(pred))), 1e-300)
    se_re = np.maximum(np.sqrt(var_re / count), floor)
    se_im = np.maximum(np.sqrt(var_im / count), floor)
    z_re = np.abs(mean.real - pred.real) / se_re
    z_im = np.abs(mean.imag - pred.imag) / se_im
    return float(max(z_re.max(), z_im.max())), mean


def check_covariances(p: SfpPoint, n_draws: int, dt: float, seed: int = 0,
                      chunk: int = 20000) -> CovarianceReport:
    """One-step Dyson increments at a fixed point against the closed-form covariances.

    Reports, per covariance family, the largest deviation in units of its
    standard error (real and imaginary parts tested separately).
    """
    if n_draws < 10000:
        raise ValidationError("n_draws must be at least 1e4")
    n = p.n
    rng = trajectory_rng(seed, 0)
    keys = ("ll", "sl", "ss")
    shapes = {"ll": (n, n), "sl": (n, n, n), "ss": (n, n, n, n)}
    acc = {k: [np.zeros(shapes[k], np.complex128), np.zeros(shapes[k]), np.zeros(shapes[k])] for k in keys}
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        dx = draw_increment(rng, (m, n, n), dt, 1.0)
        dlam, ds = dyson_increment(p.lambdas, p.s, p.s_inv, dx)
        prods = {
            "ll": dlam[:, :, None] * dlam.conj()[:, None, :],
            "sl": dlam.conj()[:, :, None, None] * ds[:, None, :, :],
            "ss": ds[:, :, :, None, None] * ds.conj()[:, None, None, :, :],
        }
        for k in keys:
            pr = prods[k]
            acc[k][0] += pr.sum(0)
            acc[k][1] += (pr.real ** 2).sum(0)
            acc[k][2] += (pr.imag ** 2).sum(0)
        done += m
    preds = {"ll": p.c_ll * dt, "sl": p.c_sl * dt, "ss": p.c_ss * dt}
    rep = CovarianceReport(n, n_draws, dt)
    for k in keys:
        rep.max_z[k], mean = _z_scores(*acc[k], n_draws, preds[k])
        if k == "ll":
            rep.min_diag_ratio = float(np.min(mean.diagonal().real) / dt)
    return rep


# --------------------------------------------------------------------------- Q_t residual
#
# Q_t is evaluated in extended precision so that second differences stay
# free of rounding error even at the small steps ill-conditioned S needs.

Q_DIGITS = 40


def q_value(lambdas: np.ndarray, s: np.ndarray, t: float, x0: np.ndarray) -> float:
    """``t^{-N^2} exp(-|S Lambda S^-1 - X0|_F^2 / t)`` with unit normalisation."""
    n = lambdas.shape[0]
    x = (s * lambdas[None, :]) @ np.linalg.inv(s)
    return t ** (-n * n) * math.exp(-float(np.sum(np.abs(x - x0) ** 2)) / t)


def _q_mp(y, t, x0):
    # N = 2: y holds (Re, Im) of lambda_1, lambda_2, S_11, S_12, S_21, S_22
    c = [mpmath.mpc(y[2 * j], y[2 * j + 1]) for j in range(6)]
    l1, l2, s11, s12, s21, s22 = c
    det = s11 * s22 - s12 * s21
    # S diag(l) adj(S) / det
    x = ((s11 * l1 * s22 - s12 * l2 * s21) / det, (s12 * l2 * s11 - s11 * l1 * s12) / det,
         (s21 * l1 * s22 - s22 * l2 * s21) / det, (s22 * l2 * s11 - s21 * l1 * s12) / det)
    dist = mpmath.fsum(abs(xe - x0e) ** 2 for xe, x0e in zip(x, x0))
    return t ** -4 * mpmath.exp(-dist / t)


def _pack(lambdas, s):
    v = np.concatenate([lambdas, s.ravel()])
    return [mpmath.mpf(float(z)) for pair in zip(v.real, v.imag) for z in pair]


def _real_hessian(f, y, h):
    m = len(y)
    f0 = f(y)
    hess = np.empty((m, m))

    def shifted(*moves):
        z = list(y)
        for idx, d in moves:
            z[idx] += d
        return f(z)

    for a in range(m):
        hess[a, a] = float((shifted((a, h)) - 2 * f0 + shifted((a, -h))) / (h * h))
        for b in range(a + 1, m):
            v = (shifted((a, h), (b, h)) - shifted((a, h), (b, -h))
                 - shifted((a, -h), (b, h)) + shifted((a, -h), (b, -h))) / (4 * h * h)
            hess[a, b] = hess[b, a] = float(v)
    return hess


def _wirtinger_mixed(hess, c, d):
    """``d^2 f / (d z_c d conj(z_d))`` from the real Hessian."""
    xc, yc, xd, yd = 2 * c, 2 * c + 1, 2 * d, 2 * d + 1
    return 0.25 * (hess[xc, xd] + hess[yc, yd] + 1j * (hess[xc, yd] - hess[yc, xd]))


@dataclass(frozen=True)
class QResidual:
    residual: float
    dq_dt: float
    rhs: complex
    step: float  # effective coordinate step


def _q_rhs(p: SfpPoint, t: float, x0: np.ndarray, h: float) -> tuple[float, complex]:
    n = p.n
    with mpmath.workdps(Q_DIGITS):
        y0 = _pack(p.lambdas, p.s)
        x0m = [mpmath.mpc(complex(v)) for v in np.asarray(x0).ravel()]
        tm = mpmath.mpf(t)
        hm = mpmath.mpf(h)

        def f(y):
            return _q_mp(y, tm, x0m)

        hess = _real_hessian(f, y0, hm)
        ht = hm * tm
        dq = float((_q_mp(y0, tm + ht, x0m) - _q_mp(y0, tm - ht, x0m)) / (2 * ht))
        q0 = float(f(y0))
    hess /= q0
    dq /= q0
    lam_idx = np.arange(n)
    s_idx = n + np.arange(n * n).reshape(n, n)
    mix = np.empty((n + n * n, n + n * n), np.complex128)
    for c in range(n + n * n):
        for d in range(n + n * n):
            mix[c, d] = _wirtinger_mixed(hess, c, d)
    ll = mix[np.ix_(lam_idx, lam_idx)]
    ls = mix[lam_idx][:, s_idx]  # [i, k, l]: d lambda_i d conj(S_kl)
    sl = mix[s_idx][:, :, lam_idx]  # [k, l, i]: d S_kl d conj(lambda_i)
    ss = mix[s_idx][:, :, s_idx]  # [k, l, n, m]
    rhs = (np.sum(p.c_ll * ll) + np.sum(p.c_ls * ls)
           + np.einsum("ikl,kli->", p.c_sl, sl) + np.sum(p.c_ss * ss))
    return dq, complex(rhs)


def natural_time(p: SfpPoint, x0=None) -> float:
    """``max(0.1, |X - X0|_F^2)``: a time at which ``d_t Q`` is well away from zero."""
    x = (p.s * p.lambdas[None, :]) @ p.s_inv
    x0 = np.zeros_like(x) if x0 is None else np.asarray(x0)
    return max(0.1, float(np.sum(np.abs(x - x0) ** 2)))


def check_Q_solution(p: SfpPoint, t: float, x0=None, fd_step: float = 2e-3,
                     richardson_tol: float = 5e-5, max_halvings: int = 10) -> QResidual:
    """Pointwise relative residual of the ``Q_t`` evolution equation at ``N = 2``.

    Second derivatives come from centred differences over the 12 real
    coordinates of ``(Lambda, S)`` and ``d_t Q`` from a centred difference of
    relative size ``fd_step``. The coordinate step is ``fd_step / cond(S)^2``,
    the scale on which ``S Lambda S^-1`` responds to changes of ``S``. A second
    evaluation at half the step guards the result: if the two right-hand sides
    differ by more than ``richardson_tol * |d_t Q|`` the step is halved, up to
    ``max_halvings`` times, before giving up.
    """
    if p.n != 2:
        raise ValidationError("the Q residual check is implemented for N = 2")
    if t < 0.1:
        raise ValidationError("t must be at least 0.1")
    if fd_step <= 0:
        raise ValidationError("fd_step must be positive")
    x0 = np.zeros((2, 2), np.complex128) if x0 is None else np.asarray(x0, dtype=np.complex128)
    h = fd_step / np.linalg.cond(p.s) ** 2
    dq, rhs = _q_rhs(p, t, x0, h)
    for _ in range(max_halvings + 1):
        dq2, rhs2 = _q_rhs(p, t, x0, h / 2)
        scale = max(abs(dq), abs(dq2))
        gap = abs(rhs - rhs2) / scale
        if gap <= richardson_tol:
            return QResidual(abs(dq - rhs) / abs(dq), dq, rhs, h)
        h, dq, rhs = h / 2, dq2, rhs2
    raise StepTooLarge(f"halving the step still moves the right-hand side by {gap:.2e}")


# --------------------------------------------------------------------------- report


@dataclass(frozen=True)
class VerificationRow:
    """One check. ``bound="max"`` passes when ``value <= tolerance``; ``"min"`` when ``value >= tolerance``."""

    name: str
    n: int
    value: float
    tolerance: float
    bound: str = "max"

    @property
    def passed(self) -> bool:
        if self.bound == "min":
            return bool(self.value >= self.tolerance)
        return bool(self.value <= self.tolerance)


def format_report(rows) -> str:
    lines = [f"{'check':<26}{'N':>4}  {'value':>11}  {'limit':>11}  result"]
    for r in rows:
        op = ">=" if r.bound == "min" else "<="
        lines.append(f"{r.name:<26}{r.n:>4}  {r.value:11.3e}  {op}{r.tolerance:9.2e}  "
                     f"{'pass' if r.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def report_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["name", "n", "value", "bound", "tolerance", "passed"])
    for r in rows:
        wr.writerow([r.name, r.n, repr(float(r.value)), r.bound, repr(float(r.tolerance)), int(r.passed)])
    return buf.getvalue()


def identity_suite(seed: int, points: int, n_values=(2, 3, 4, 5, 6),
                   fd_h: float = 1e-5) -> list[VerificationRow]:
    """Worst residual per ``N`` over ``points`` random points for each identity."""
    rows = []
    for n in n_values:
        rng = trajectory_rng(seed, n)
        worst = {"TQ": 0.0, "TdQ_1": 0.0, "TdQ_2": 0.0}
        for _ in range(points):
            p = sample_point(n, rng)
            worst["TQ"] = max(worst["TQ"], check_TQ(p).residual)
            r1, r2 = check_TdQ(p)
            worst["TdQ_1"] = max(worst["TdQ_1"], r1)
            worst["TdQ_2"] = max(worst["TdQ_2"], r2)
        rows += [VerificationRow(k, n, v, TOL_IDENTITY) for k, v in worst.items()]
        p = sample_point(n, rng)
        rows.append(VerificationRow("derivative_ids", n, check_derivative_ids(p, fd_h), 1e-6))
    return rows
