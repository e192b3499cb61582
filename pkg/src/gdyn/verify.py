"""Verification suites shared by the command line and the test-suite.

Every suite returns a list of :class:`~gdyn.sfp.VerificationRow`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sfp
from .errors import ValidationError
from .asymptotics import ginibre_bulk_O
from .exact import SourceSpec, correlator_beta_form, density_source
from .integrators import (
    Scheme,
    SimConfig,
    draw_increment,
    dyson_increment,
    map_ordered,
    run_trajectory,
    trajectory_rng,
)
from .linalg_core import eigendecompose, match_eigenvalues
from .observables import (
    FieldGrid,
    ecp_check,
    ecp_heat_residual,
    ecp_heat_residual_scalar,
    grid_from_nodes,
    hierarchy_residual,
)
from .sfp import VerificationRow

# --------------------------------------------------------------------------- sfp


def covariance_rows(seed: int, points: int = 20, draws: int = 100_000, n_values=(2, 3),
                    dt: float = 0.01, z_limit: float = 4.0) -> list[VerificationRow]:
    rows = []
    for n in n_values:
        rng = trajectory_rng(seed, 100 + n)
        worst = {"ll": 0.0, "sl": 0.0, "ss": 0.0}
        min_diag = math.inf
        for k in range(points):
            p = sfp.sample_point(n, rng)
            rep = sfp.check_covariances(p, draws, dt, seed=seed * 1000 + k)
            for key in worst:
                worst[key] = max(worst[key], rep.max_z[key])
            min_diag = min(min_diag, rep.min_diag_ratio)
        rows += [VerificationRow(f"cov_{key}_max_z", n, v, z_limit) for key, v in worst.items()]
        # O_ii >= 1 makes every eigenvalue at least as mobile as a free one
        rows.append(VerificationRow("cov_ll_diag_over_dt", n, min_diag, 1.0 - 5 * z_limit / math.sqrt(draws), "min"))
    return rows


def q_solution_rows(seed: int, points: int = 10, fd_step: float = 2e-3,
                    tol: float = 1e-4) -> list[VerificationRow]:
    """Residual of the ``Q_t`` equation at random ``N = 2`` points, half with ``X0 = 0``.

    ``t`` is taken as :func:`sfp.natural_time` of the point, where ``d_t Q``
    is well away from zero. The order row compares residuals at ``fd_step``
    and ``fd_step / 2`` with a fixed step.
    """
    rng = trajectory_rng(seed, 7)
    worst = 0.0
    worst_order = math.inf
    for k in range(points):
        p = sfp.sample_point(2, rng)
        x0 = None if k % 2 == 0 else draw_increment(rng, (2, 2), 1.0, 0.2)
        t = sfp.natural_time(p, x0)
        res = sfp.check_Q_solution(p, t, x0, fd_step)
        worst = max(worst, res.residual)
        h = res.step * np.linalg.cond(p.s) ** 2
        r1 = sfp.check_Q_solution(p, t, x0, h, richardson_tol=math.inf, max_halvings=0).residual
        r2 = sfp.check_Q_solution(p, t, x0, h / 2, richardson_tol=math.inf, max_halvings=0).residual
        worst_order = min(worst_order, math.log2(r1 / r2))
    return [VerificationRow("Q_residual", 2, worst, tol),
            VerificationRow("Q_fd_order", 2, worst_order, 1.9, "min")]


def identity_rows(seed: int, points: int, n_values=(2, 3, 4, 5, 6), q_points: int = 2) -> list[VerificationRow]:
    rows = sfp.identity_suite(seed, points, n_values)
    if q_points:
        rows += q_solution_rows(seed, q_points)
    return rows


# --------------------------------------------------------------------------- integrators


@dataclass(frozen=True)
class OrderReport:
    order: float
    mean_mismatch: tuple
    max_ratio: tuple  # max mismatch / dt per dt


def coupled_noise_order(n: int = 8, states: int = 2000, seed: int = 0,
                        dts=(1e-3, 1e-4)) -> OrderReport:
    """Dyson step vs direct diagonalisation under one shared increment.

    Each state is a Ginibre matrix with unit entry variance; the increment
    is ``sqrt(dt) G`` with the same ``G`` for every ``dt``. The observed order
    is the log-slope of the mean (over states) of the largest eigenvalue
    mismatch.
    """
    rng = trajectory_rng(seed, 0)
    mism = np.empty((states, len(dts)))
    for k in range(states):
        x = draw_increment(rng, (n, n), 1.0, 1.0)
        dec = eigendecompose(x)
        g = draw_increment(rng, (n, n), 1.0, 1.0)
        for j, dt in enumerate(dts):
            dx = math.sqrt(dt) * g
            dlam, _ = dyson_increment(dec.lambdas, dec.s, dec.s_inv, dx)
            lam = dec.lambdas + dlam
            ev = np.linalg.eigvals(x + dx)
            ev = ev[match_eigenvalues(lam, ev)]
            mism[k, j] = np.max(np.abs(ev - lam))
    mean = mism.mean(axis=0)
    order = math.log(mean[0] / mean[-1]) / math.log(dts[0] / dts[-1])
    return OrderReport(order, tuple(mean), tuple(mism.max(axis=0) / np.asarray(dts)))


def integrator_rows(seed: int = 0, states: int = 2000) -> list[VerificationRow]:
    rep = coupled_noise_order(seed=seed, states=states)
    return [VerificationRow("coupled_noise_order", 8, rep.order, 1.0, "min")]


# --------------------------------------------------------------------------- semicircle comparison


def semicircle_cdf(x):
    """CDF of the density ``(2/pi) sqrt(1 - x^2)`` on ``[-1, 1]``."""
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / math.pi


def ks_semicircle(samples) -> float:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    f = semicircle_cdf(x)
    return float(max(np.max(np.arange(1, m + 1) / m - f), np.max(f - np.arange(m) / m)))


@dataclass
class Fig1Result:
    scheme: Scheme
    snapshots: list
    pooled_real: np.ndarray
    ks: float


FIG1_DT = {Scheme.COULOMB: 2.5e-3, Scheme.MATRIX_OU: 1e-2}


def fig1_run(scheme: Scheme, n: int, steps: int, seed: int, interval: int = 20,
             n_snapshots: int = 40, init_scale: float = 0.1, dt: float | None = None,
             record_every: int | None = None) -> Fig1Result:
    """Relax from a small Ginibre cloud and pool the real parts of the last
    ``n_snapshots`` snapshots taken every ``interval`` steps.

    ``record_every`` (a divisor of ``interval``) keeps denser snapshots for
    trajectory output; only multiples of ``interval`` enter the histogram.
    """
    dt = FIG1_DT[scheme] if dt is None else dt
    record = interval if record_every is None else record_every
    if interval % record:
        raise ValidationError("record_every must divide interval")
    cfg = SimConfig(n, scheme, dt, steps, seed, scheme.default_convention(n), SourceSpec.ginibre(n),
                    snapshot_every=record, init_scale=init_scale)
    snaps = run_trajectory(cfg)
    grid = [s for s in snaps if s.step % interval == 0]
    used = grid[-n_snapshots:] if len(grid) > 1 else grid
    pooled = np.concatenate([s.lambdas.real for s in used])
    return Fig1Result(scheme, snaps, pooled, ks_semicircle(pooled))


# --------------------------------------------------------------------------- ECP


def ecp_identity_worst(seed: int, cases: int = 100, n_max: int = 8) -> float:
    rng = trajectory_rng(seed, 11)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, n_max + 1))
        x = draw_increment(rng, (n, n), 1.0, 1.0)
        z = complex(*rng.normal(size=2))
        w = complex(*rng.normal(size=2))
        worst = max(worst, ecp_check(x, z, w))
    return worst


ECP_W = np.linspace(-0.6, 0.6, 5)
ECP_T = (0.3, 0.6, 0.9)


def ecp_rows(n: int, seed: int = 1, n_traj: int = 10_000, sigma_limit: float = 3.0) -> list[VerificationRow]:
    rows = [VerificationRow("ecp_identity_rel", 8, ecp_identity_worst(seed), 1e-8)]
    w_nodes = (ECP_W[:, None] + 1j * ECP_W[None, :]).ravel()
    z = 0.2 + 0.1j
    if n == 1:
        r = ecp_heat_residual_scalar(z, w_nodes, ECP_T, x0=0.3)
        rows.append(VerificationRow("ecp_heat_exact", 1, float(np.max(np.abs(r))), 1e-10))
        x0 = np.array([[0.3]], dtype=np.complex128)
    else:
        x0 = np.diag(np.linspace(-0.3, 0.3, n) + 0.1j * np.linspace(0.2, -0.2, n))
    res = ecp_heat_residual(x0, z, w_nodes, ECP_T, n_traj, seed)
    rows.append(VerificationRow("ecp_heat_mc_sigma", n, res.max_sigma(), sigma_limit))
    return rows


# --------------------------------------------------------------------------- hierarchy


HIER_SOURCE = (0.5, -0.4 + 0.2j, 0.1j, -0.1 - 0.3j)
HIER_CENTER = 0.1 - 0.05j


def _exact_fields(n, tau, source, center, h, threads=None):
    """rho and O on a 5x5 grid of spacing ``h`` around ``center`` at ``tau + k h``, ``k = -2..2``."""
    g = grid_from_nodes(center.real - 2 * h, center.real + 2 * h, center.imag - 2 * h, center.imag + 2 * h, 5, 5)
    zc = g.centers().ravel()
    taus = [tau + k * h for k in (-2, -1, 0, 1, 2)]
    jobs = [(tt, z) for tt in taus for z in zc]

    def ev(job):
        tt, z = job
        return density_source(n, tt, z, source), correlator_beta_form(n, tt, z, source)

    vals = np.array(map_ordered(ev, jobs, threads)).reshape(5, 5, 5, 2)
    zero = np.zeros((5, 5))
    rho = [FieldGrid(g.window, 5, 5, vals[k, :, :, 0], zero) for k in range(5)]
    o = [FieldGrid(g.window, 5, 5, vals[k, :, :, 1], zero) for k in range(5)]
    return taus, rho, o


@dataclass(frozen=True)
class HierarchyReport:
    h: tuple
    max_residual: tuple
    bound: tuple
    order: float


def hierarchy_exact(n: int = 4, tau: float = 1.0, source: SourceSpec | None = None,
                    center: complex = HIER_CENTER, h: float = 0.02, threads=None) -> HierarchyReport:
    """Residual of the hierarchy on exact finite-N fields at spacing ``h`` and ``h/2``.

    The truncation bound at spacing ``s`` is twice the leading centred-difference
    error ``s^2 (|rho_ttt| / 6 + (|O_xxxx| + |O_yyyy|) / 48)`` at the centre,
    with the derivatives taken from five-point differences at spacing ``s``.
    """
    if source is None:
        source = SourceSpec.from_values(HIER_SOURCE[:n] if n <= len(HIER_SOURCE)
                                        else np.resize(np.asarray(HIER_SOURCE), n))
    out_r, out_b = [], []
    for s in (h, h / 2):
        taus, rho, o = _exact_fields(n, tau, source, center, s, threads)
        res = hierarchy_residual(taus[1:4], rho[1:4], o[1:4])[0]
        out_r.append(float(np.max(np.abs(res.values[1:-1, 1:-1]))))
        r = [g.values[2, 2] for g in rho]
        rho_ttt = (r[4] - 2 * r[3] + 2 * r[1] - r[0]) / (2 * s ** 3)
        oc = o[2].values
        o_xxxx = (oc[4, 2] - 4 * oc[3, 2] + 6 * oc[2, 2] - 4 * oc[1, 2] + oc[0, 2]) / s ** 4
        o_yyyy = (oc[2, 4] - 4 * oc[2, 3] + 6 * oc[2, 2] - 4 * oc[2, 1] + oc[2, 0]) / s ** 4
        out_b.append(2.0 * s * s * (abs(rho_ttt) / 6.0 + (abs(o_xxxx) + abs(o_yyyy)) / 48.0))
    order = math.log2(out_r[0] / out_r[1])
    return HierarchyReport((h, h / 2), tuple(out_r), tuple(out_b), order)


def ginibre_bulk_hierarchy(tau: float = 1.0, h: float = 0.05) -> float:
    """Gap between the two sides for the bulk Ginibre fields.

    The time side is the exact derivative of ``1/(pi tau)``; the space side is
    the five-point Laplacian of the quadratic bulk correlator, which the
    stencil differentiates exactly. Both equal ``-1/(pi tau^2)``.
    """
    lhs = -1.0 / (math.pi * tau * tau)
    zs = np.array([0.1, 0.1 + h, 0.1 - h, 0.1 + 1j * h, 0.1 - 1j * h])
    o = ginibre_bulk_O(tau, np.abs(zs) ** 2)
    rhs = 0.25 * (o[1] + o[2] + o[3] + o[4] - 4 * o[0]) / (h * h)
    return abs(lhs - rhs) / abs(lhs)


def hierarchy_rows(n: int = 4, threads=None) -> list[VerificationRow]:
    rep = hierarchy_exact(n, threads=threads)
    return [
        VerificationRow("hierarchy_residual_h", n, rep.max_residual[0], rep.bound[0]),
        VerificationRow("hierarchy_residual_h/2", n, rep.max_residual[1], rep.bound[1]),
        VerificationRow("hierarchy_fd_order", n, rep.order, 2.0, "min"),
        VerificationRow("ginibre_bulk_hierarchy", n, ginibre_bulk_hierarchy(), 1e-12),
    ]
