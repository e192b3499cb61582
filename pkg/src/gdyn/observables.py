"""Histogram estimators, the extended characteristic polynomial and
finite-difference residual checks on complex-plane grids."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindow, GridMismatch, RegulatorTooSmall, ValidationError
from .integrators import map_ordered, sample_matrix_bm
from .linalg_core import SpectralDecomposition, eigendecompose


@dataclass
class FieldGrid:
    """Values on the cell centres of a rectangular window.

    ``values[i, j]`` belongs to ``re_min + (i + 1/2) dx + 1j (im_min + (j + 1/2) dy)``.
    """

    window: tuple
    nx: int
    ny: int
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.window = tuple(float(w) for w in self.window)
        re0, re1, im0, im1 = self.window
        if not (re1 > re0 and im1 > im0):
            raise ValidationError(f"degenerate window {self.window}")
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("grid needs at least one cell per axis")
        self.values = np.asarray(self.values)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.values.shape != (self.nx, self.ny) or self.stderr.shape != (self.nx, self.ny):
            raise ValidationError("values and stderr must have shape (nx, ny)")
        if np.any(self.stderr < 0):
            raise ValidationError("standard errors must be nonnegative")

    @classmethod
    def empty(cls, window, nx: int, ny: int, meta: dict | None = None) -> "FieldGrid":
        return cls(window, nx, ny, np.zeros((nx, ny)), np.zeros((nx, ny)), dict(meta or {}))

    @property
    def dx(self) -> float:
        return (self.window[1] - self.window[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.window[3] - self.window[2]) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        re0, _, im0, _ = self.window
        return re0 + (np.arange(self.nx) + 0.5) * self.dx, im0 + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self) -> np.ndarray:
        xr, yi = self.axes()
        return xr[:, None] + 1j * yi[None, :]

    def same_geometry(self, other: "FieldGrid") -> bool:
        return self.window == other.window and (self.nx, self.ny) == (other.nx, other.ny)

    def cell_index(self, z: np.ndarray):
        """Cell indices of points ``z`` and a mask of those inside the window."""
        z = np.asarray(z)
        re0, re1, im0, im1 = self.window
        i = np.floor((z.real - re0) / self.dx).astype(np.int64)
        j = np.floor((z.imag - im0) / self.dy).astype(np.int64)
        ok = (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        return i, j, ok

    def total(self) -> float:
        return float(np.sum(self.values.real) * self.cell_area)


def symmetric_grid(half_width: float, n: int, meta: dict | None = None) -> FieldGrid:
    """Square window centred on 0 with ``n`` cells per side (odd ``n`` puts a cell centre at 0)."""
    h = float(half_width)
    return FieldGrid.empty((-h, h, -h, h), n, n, meta)


def grid_from_nodes(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> FieldGrid:
    """Grid whose cell centres are ``linspace(x0, x1, nx)`` by ``linspace(y0, y1, ny)``."""
    hx = (x1 - x0) / (nx - 1) if nx > 1 else 1.0
    hy = (y1 - y0) / (ny - 1) if ny > 1 else 1.0
    return FieldGrid.empty((x0 - hx / 2, x1 + hx / 2, y0 - hy / 2, y1 + hy / 2), nx, ny)


# --------------------------------------------------------------------------- histograms


def _weighted_hist(grid: FieldGrid, samples, weight_fn, norm: float, name: str) -> FieldGrid:
    s_count = len(samples)
    if s_count < 1:
        raise ValidationError("need at least one sample")
    acc = np.zeros((grid.nx, grid.ny))
    acc2 = np.zeros((grid.nx, grid.ny))
    hits = 0
    for smp in samples:
        lam, w = weight_fn(smp)
        i, j, ok = grid.cell_index(lam)
        hits += int(ok.sum())
        h = np.zeros((grid.nx, grid.ny))
        np.add.at(h, (i[ok], j[ok]), w[ok] * norm)
        acc += h
        acc2 += h * h
    if hits == 0:
        warnings.warn(f"{name}: no eigenvalue fell inside the window", EmptyWindow, stacklevel=3)
    mean = acc / s_count
    if s_count > 1:
        var = np.maximum(acc2 / s_count - mean * mean, 0.0) * s_count / (s_count - 1)
        se = np.sqrt(var / s_count)
    else:
        se = np.zeros_like(mean)
    area = grid.cell_area
    meta = dict(grid.meta)
    meta.update(estimator=name, samples=s_count)
    return FieldGrid(grid.window, grid.nx, grid.ny, mean / area, se / area, meta)


def estimate_density(samples, grid: FieldGrid) -> FieldGrid:
    """Normalised eigenvalue density ``<(1/N) sum_i delta(z - lambda_i)>`` by binning.

    Standard errors come from the spread of per-sample bin fractions, which
    accounts for correlations between eigenvalues of the same matrix.
    """

    def wf(lam):
        lam = np.asarray(lam)
        return lam, np.full(lam.shape, 1.0 / lam.size)

    return _weighted_hist(grid, samples, wf, 1.0, "density")


def estimate_O1(samples, grid: FieldGrid) -> FieldGrid:
    """``(1/N^2) <sum_a O_aa delta(z - lambda_a)>`` from ``(lambdas, O_diag)`` pairs."""

    def wf(smp):
        lam, od = smp
        lam = np.asarray(lam)
        return lam, np.asarray(od, dtype=float) / lam.size ** 2

    return _weighted_hist(grid, samples, wf, 1.0, "O1")


@dataclass
class PairField:
    grid1: FieldGrid
    grid2: FieldGrid
    values: np.ndarray  # (nx1*ny1, nx2*ny2), cells in C order
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def total(self) -> float:
        return float(np.sum(self.values.real) * self.grid1.cell_area * self.grid2.cell_area)


MAX_PAIR_CELLS = 32 * 32


def estimate_rho2_O2(samples, grid1: FieldGrid, grid2: FieldGrid) -> tuple[PairField, PairField]:
    """Two-point density and off-diagonal overlap correlator on a product of grids.

    Each sample is ``(lambdas, O)`` with the full overlap matrix. Both
    estimators carry the ``1/N^2`` normalisation:
    ``rho2 = (1/N^2) <sum_{i != j} delta(z1 - l_i) delta(z2 - l_j)>`` and
    ``O2`` weights the same pairs by ``O_ij``.
    """
    for g in (grid1, grid2):
        if g.nx * g.ny > MAX_PAIR_CELLS:
            raise ValidationError("pair grids are limited to 32 x 32 cells per factor")
    c1, c2 = grid1.nx * grid1.ny, grid2.nx * grid2.ny
    sums = {k: np.zeros((c1, c2)) for k in ("r", "r2", "o", "o2")}
    count = 0
    hits = 0
    for lam, o in samples:
        lam = np.asarray(lam)
        o = np.asarray(o)
        n = lam.size
        count += 1
        i1, j1, ok1 = grid1.cell_index(lam)
        i2, j2, ok2 = grid2.cell_index(lam)
        f1 = np.where(ok1, i1 * grid1.ny + j1, -1)
        f2 = np.where(ok2, i2 * grid2.ny + j2, -1)
        hr = np.zeros((c1, c2))
        ho = np.zeros((c1, c2))
        for a in range(n):
            if f1[a] < 0:
                continue
            for b in range(n):
                if b == a or f2[b] < 0:
                    continue
                hr[f1[a], f2[b]] += 1.0 / n ** 2
                ho[f1[a], f2[b]] += o[a, b].real / n ** 2
                hits += 1
        sums["r"] += hr
        sums["r2"] += hr * hr
        sums["o"] += ho
        sums["o2"] += ho * ho
    if count == 0:
        raise ValidationError("need at least one sample")
    if hits == 0:
        warnings.warn("rho2/O2: no eigenvalue pair fell inside the windows", EmptyWindow, stacklevel=2)
    area = grid1.cell_area * grid2.cell_area

    def finish(m1, m2, name):
        mean = m1 / count
        var = np.maximum(m2 / count - mean * mean, 0.0) * (count / (count - 1) if count > 1 else 0.0)
        return PairField(grid1, grid2, mean / area, np.sqrt(var / count) / area,
                         {"estimator": name, "samples": count})

    return finish(sums["r"], sums["r2"], "rho2"), finish(sums["o"], sums["o2"], "O2")


# --------------------------------------------------------------------------- ECP


def ecp_value(x, z: complex, w: complex) -> float:
    """``det[(z - X)(z - X)^H + |w|^2]`` via a Cholesky log-determinant."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    zx = z * np.eye(n) - x
    m = zx @ zx.conj().T + (abs(w) ** 2) * np.eye(n)
    sign, logdet = np.linalg.slogdet(m)
    return float(sign.real * math.exp(logdet))


def ecp_block_value(dec: SpectralDecomposition, z: complex, w: complex) -> float:
    """Same determinant from the ``2N x 2N`` eigenbasis block form.

    ``det[[z - L, -conj(w) A^-1], [w A, conj(z) - conj(L)]]`` with ``A = S^H S``.
    """
    n = dec.n
    a = dec.s.conj().T @ dec.s
    a_inv = dec.s_inv @ dec.s_inv.conj().T
    m = np.zeros((2 * n, 2 * n), np.complex128)
    m[:n, :n] = np.diag(z - dec.lambdas)
    m[:n, n:] = -np.conj(w) * a_inv
    m[n:, :n] = w * a
    m[n:, n:] = np.diag(np.conj(z) - np.conj(dec.lambdas))
    return float(np.linalg.det(m).real)


def ecp_check(x, z: complex, w: complex, dec: SpectralDecomposition | None = None) -> float:
    """Relative gap between the two ECP forms."""
    d1 = ecp_value(x, z, w)
    d2 = ecp_block_value(dec if dec is not None else eigendecompose(x), z, w)
    return abs(d1 - d2) / max(abs(d1), abs(d2), np.finfo(float).tiny)


def _hermitian_spectra(xs: np.ndarray, z: complex) -> np.ndarray:
    n = xs.shape[-1]
    zx = z * np.eye(n) - xs
    return np.linalg.eigvalsh(zx @ np.conj(np.swapaxes(zx, -1, -2)))


def _ecp_from_spectra(mu: np.ndarray, w: complex) -> np.ndarray:
    return np.prod(mu + abs(w) ** 2, axis=-1)


def ecp_mean_scalar(z: complex, w: complex, t: float, x0: complex = 0.0, variance_rate: float = 1.0) -> float:
    """Exact ``<D>`` for a 1x1 matrix diffusing from ``x0``."""
    return abs(z - x0) ** 2 + abs(w) ** 2 + variance_rate * t


@dataclass
class HeatResidual:
    w: np.ndarray  # complex w nodes, shape (nw,)
    t: np.ndarray  # times, shape (nt,)
    residual: np.ndarray  # (nw, nt)
    stderr: np.ndarray
    mean_d: np.ndarray  # <D> at (w, t)
    meta: dict = field(default_factory=dict)

    def max_sigma(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(self.residual) / self.stderr
        r = np.where(self.stderr > 0, r, np.where(self.residual == 0, 0.0, np.inf))
        return float(np.max(r))


def heat_stencil(d_fn, w: complex, t: float, hw: float, ht: float):
    """Centred residual ``d_t D - d_{w wbar} D`` from a value function ``d_fn(w, t)``."""
    dt_part = (d_fn(w, t + ht) - d_fn(w, t - ht)) / (2.0 * ht)
    ring = d_fn(w + hw, t) + d_fn(w - hw, t) + d_fn(w + 1j * hw, t) + d_fn(w - 1j * hw, t)
    lap = (ring - 4.0 * d_fn(w, t)) / (hw * hw)
    return dt_part - 0.25 * lap


def ecp_heat_residual(x0, z: complex, w_nodes, t_nodes, n_traj: int, seed: int,
                      hw: float = 0.05, ht: float = 0.05, variance_rate: float = 1.0,
                      threads: int | None = None) -> HeatResidual:
    """Monte Carlo residual of the ECP heat equation on a ``(w, t)`` grid.

    Matrix Brownian paths are sampled exactly at ``t - ht, t, t + ht`` for
    each ``t``; all ``w`` nodes reuse the same paths. Returns the per-node
    mean residual and its standard error over trajectories.
    """
    x0 = np.asarray(x0, dtype=np.complex128)
    w_nodes = np.asarray(w_nodes, dtype=np.complex128).ravel()
    t_nodes = np.asarray(t_nodes, dtype=float).ravel()
    if np.any(t_nodes - ht <= 0):
        raise ValidationError("every t node must exceed the time step ht")
    if np.any(np.diff(t_nodes) <= 2.0 * ht):
        raise ValidationError("t nodes must increase in steps larger than 2 ht")
    times = np.concatenate([t_nodes - ht, t_nodes, t_nodes + ht])
    times.sort()
    chunk = 1000
    starts = list(range(0, n_traj, chunk))

    def run(first):
        k = min(chunk, n_traj - first)
        xs = sample_matrix_bm(x0, times, k, seed, variance_rate, first=first)
        mu = _hermitian_spectra(xs, z)  # (k, nt3, n)
        tidx = {float(t): i for i, t in enumerate(times)}
        out = np.empty((k, w_nodes.size, t_nodes.size))
        for a, w in enumerate(w_nodes):
            for b, t in enumerate(t_nodes):
                def d_fn(ww, tt):
                    return _ecp_from_spectra(mu[:, tidx[float(tt)]], ww)

                out[:, a, b] = heat_stencil(d_fn, w, float(t), hw, ht)
        dmean = np.stack([[_ecp_from_spectra(mu[:, tidx[float(t)]], w).sum() for t in t_nodes]
                          for w in w_nodes])
        return out.sum(0), (out * out).sum(0), dmean

    parts = map_ordered(run, starts, threads)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    dsum = sum(p[2] for p in parts)
    mean = s1 / n_traj
    var = np.maximum(s2 / n_traj - mean * mean, 0.0) * n_traj / max(n_traj - 1, 1)
    return HeatResidual(w_nodes, t_nodes, mean, np.sqrt(var / n_traj), dsum / n_traj,
                        {"n": int(x0.shape[0]), "trajectories": int(n_traj), "seed": int(seed),
                         "hw": hw, "ht": ht})


def ecp_heat_residual_scalar(z: complex, w_nodes, t_nodes, x0: complex = 0.0,
                             hw: float = 0.05, ht: float = 0.05) -> np.ndarray:
    """Residual of the exact 1x1 mean; zero up to rounding."""
    w_nodes = np.asarray(w_nodes, dtype=np.complex128).ravel()
    t_nodes = np.asarray(t_nodes, dtype=float).ravel()

    def d_fn(w, t):
        return ecp_mean_scalar(z, w, t, x0)

    return np.array([[heat_stencil(d_fn, w, t, hw, ht) for t in t_nodes] for w in w_nodes])


LOGD_VAR_LIMIT = 1e3


def mean_log_ecp(samples: np.ndarray, z_values, w: complex):
    """``<log D>`` and its standard error at each ``z`` for a stack of matrices."""
    z_values = np.asarray(z_values, dtype=np.complex128)
    out = np.empty(z_values.shape)
    se = np.empty(z_values.shape)
    var_max = 0.0
    for idx, z in np.ndenumerate(z_values):
        mu = _hermitian_spectra(samples, z)
        logd = np.sum(np.log(mu + abs(w) ** 2), axis=-1)
        out[idx] = logd.mean()
        v = logd.var(ddof=1) if logd.size > 1 else 0.0
        se[idx] = math.sqrt(v / logd.size)
        var_max = max(var_max, v)
    return out, se, var_max


def log_mean_ecp(samples: np.ndarray, z_values, w: complex):
    """``log <D>`` with a delta-method standard error, in the layout of :func:`mean_log_ecp`."""
    z_values = np.asarray(z_values, dtype=np.complex128)
    out = np.empty(z_values.shape)
    se = np.empty(z_values.shape)
    var_max = 0.0
    for idx, z in np.ndenumerate(z_values):
        logd = np.sum(np.log(_hermitian_spectra(samples, z) + abs(w) ** 2), axis=-1)
        shift = logd.max()
        d = np.exp(logd - shift)
        m = d.mean()
        out[idx] = math.log(m) + shift
        v = d.var(ddof=1) / (m * m) if d.size > 1 else 0.0
        se[idx] = math.sqrt(v / d.size)
        var_max = max(var_max, v)
    return out, se, var_max


def ecp_observables(samples: np.ndarray, grid: FieldGrid, w: float, h: float | None = None,
                    var_limit: float = LOGD_VAR_LIMIT, average: str = "log") -> tuple[FieldGrid, FieldGrid]:
    """Regulated density and correlator from the averaged ECP at fixed ``|w|``.

    ``rho = (1/(pi N)) d_{z zbar} L`` and ``O = (1/(pi N^2)) |d_w L|^2`` with
    centred differences of step ``h`` (default: the grid spacing), where
    ``L = <log D>`` (``average="log"``) or ``L = log <D>``
    (``average="mean"``). Nothing here asserts that the two agree. The
    ``w -> 0`` and ``N -> inf`` limits are not taken; outputs depend on the
    regulator.
    """
    if average == "log":
        averaged = mean_log_ecp
    elif average == "mean":
        averaged = log_mean_ecp
    else:
        raise ValidationError(f"average must be 'log' or 'mean', got {average!r}")
    samples = np.asarray(samples, dtype=np.complex128)
    n = samples.shape[-1]
    if not abs(w) > 0:
        raise RegulatorTooSmall("the regulator |w| must be positive")
    w = float(abs(w))
    h = grid.dx if h is None else float(h)
    zc = grid.centers()
    ring = [zc + h, zc - h, zc + 1j * h, zc - 1j * h]
    l0, s0, v0 = averaged(samples, zc, w)
    lr = [averaged(samples, zz, w) for zz in ring]
    lp, sp_, vp = averaged(samples, zc, w + h)
    lm, sm, vm = averaged(samples, zc, w - h) if w - h > 0 else (l0, s0, v0)
    vmax = max([v0, vp, vm] + [r[2] for r in lr])
    if vmax > var_limit:
        raise RegulatorTooSmall(f"variance of log D reached {vmax:.3g}; increase |w|")
    lap = (sum(r[0] for r in lr) - 4.0 * l0) / (h * h)
    rho = lap / (4.0 * math.pi * n)
    rho_se = math.sqrt(16.0 + 4.0) * np.max([s0] + [r[1] for r in lr], axis=0) / (h * h) / (4.0 * math.pi * n)
    # <log D> depends on |w| only, so d_w = (1/2) d_|w| for real positive w
    if w - h > 0:
        dw = 0.5 * (lp - lm) / (2.0 * h)
        dw_se = 0.5 * np.sqrt(sp_ ** 2 + sm ** 2) / (2.0 * h)
    else:
        dw = 0.5 * (lp - l0) / h
        dw_se = 0.5 * np.sqrt(sp_ ** 2 + s0 ** 2) / h
    o = np.abs(dw) ** 2 / (math.pi * n * n)
    o_se = 2.0 * np.abs(dw) * dw_se / (math.pi * n * n)
    meta = {"estimator": "ecp", "average": average, "w": w, "h": h,
            "samples": int(samples.shape[0]), "regulated": True}
    return (FieldGrid(grid.window, grid.nx, grid.ny, rho, rho_se, dict(meta, field="rho")),
            FieldGrid(grid.window, grid.nx, grid.ny, o, o_se, dict(meta, field="O")))


# --------------------------------------------------------------------------- hierarchy


def hierarchy_residual(taus, rho_grids, o_grids) -> list[FieldGrid]:
    """Centred residual of ``d_tau rho = d_{z zbar} O`` at the interior times.

    ``taus`` must be equally spaced. Each output grid covers the interior
    cells of the input window (one cell trimmed on each side); boundary cells
    are set to zero with zero error. Standard errors propagate the inputs'.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size < 3 or len(rho_grids) != taus.size or len(o_grids) != taus.size:
        raise GridMismatch("need rho and O grids at three or more equally spaced times")
    ht = np.diff(taus)
    if not np.allclose(ht, ht[0], rtol=1e-12, atol=0):
        raise GridMismatch("times must be equally spaced")
    ht = float(ht[0])
    ref = rho_grids[0]
    for g in list(rho_grids) + list(o_grids):
        if not g.same_geometry(ref):
            raise GridMismatch("all grids must share window and shape")
    if ref.nx < 3 or ref.ny < 3:
        raise GridMismatch("need at least 3 x 3 cells")
    hx, hy = ref.dx, ref.dy
    out = []
    for k in range(1, taus.size - 1):
        drho = (rho_grids[k + 1].values - rho_grids[k - 1].values) / (2.0 * ht)
        drho_var = (rho_grids[k + 1].stderr ** 2 + rho_grids[k - 1].stderr ** 2) / (2.0 * ht) ** 2
        o = o_grids[k].values
        so = o_grids[k].stderr
        res = np.zeros_like(drho)
        var = np.zeros_like(drho_var)
        oxx = (o[2:, 1:-1] - 2.0 * o[1:-1, 1:-1] + o[:-2, 1:-1]) / hx ** 2
        oyy = (o[1:-1, 2:] - 2.0 * o[1:-1, 1:-1] + o[1:-1, :-2]) / hy ** 2
        res[1:-1, 1:-1] = drho[1:-1, 1:-1] - 0.25 * (oxx + oyy)
        ovar = ((so[2:, 1:-1] ** 2 + so[:-2, 1:-1] ** 2) / hx ** 4
                + (so[1:-1, 2:] ** 2 + so[1:-1, :-2] ** 2) / hy ** 4
                + (2.0 / hx ** 2 + 2.0 / hy ** 2) ** 2 * so[1:-1, 1:-1] ** 2)
        var[1:-1, 1:-1] = drho_var[1:-1, 1:-1] + ovar / 16.0
        meta = {"estimator": "hierarchy_residual", "tau": float(taus[k]), "h_tau": ht, "h": hx}
        out.append(FieldGrid(ref.window, ref.nx, ref.ny, res, np.sqrt(var), meta))
    return out
