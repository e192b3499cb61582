"""Euler-Maruyama steppers for matrix Brownian motion, matrix OU, the Dyson
eigenvalue/eigenvector SDE and the planar Coulomb gas.

Noise is complex Gaussian with ``<dX dX*> = variance_rate * dt`` per entry,
real and imaginary parts independent with half that variance each.
Trajectory ``k`` of a run seeded with ``seed`` draws from a Philox stream
keyed by ``(seed, k)``, so results do not depend on how trajectories are
scheduled across threads.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DegenerateSpectrum, GapCollapse, ValidationError
from .exact import SourceSpec
from .linalg_core import (
    DEFAULT_GAP_FLOOR,
    Gauge,
    SpectralDecomposition,
    eigendecompose,
    match_eigenvalues,
    min_pairwise_gap,
)


class NoiseKind(enum.Enum):
    RAW = "RawDiffusion"
    OU = "UnitDiskOU"
    COULOMB = "CoulombGas"


@dataclass(frozen=True)
class NoiseConvention:
    kind: NoiseKind
    variance_rate: float
    drift_coeff: float

    def __post_init__(self):
        if not self.variance_rate > 0:
            raise ValidationError("variance_rate must be positive")
        if self.kind is NoiseKind.RAW and self.drift_coeff != 0:
            raise ValidationError("raw diffusion has no drift")

    @classmethod
    def raw(cls, variance_rate: float = 1.0) -> "NoiseConvention":
        return cls(NoiseKind.RAW, float(variance_rate), 0.0)

    @classmethod
    def unit_disk_ou(cls, n: int) -> "NoiseConvention":
        # drift 1/4 and entry variance rate 1/(2N), stored as given
        return cls(NoiseKind.OU, 1.0 / (2.0 * n), 0.25)

    @classmethod
    def coulomb(cls, n: int) -> "NoiseConvention":
        # sqrt(2)(dB1 + i dB2) with <dB dB> = dt/(2N): complex variance 2/N
        return cls(NoiseKind.COULOMB, 2.0 / n, 2.0)

    def stationary_entry_variance(self) -> float:
        if self.drift_coeff <= 0:
            return math.inf
        return self.variance_rate / (2.0 * self.drift_coeff)

    def stationary_radius(self, n: int) -> float:
        """Spectral radius of the stationary law, sqrt(N * entry variance)."""
        return math.sqrt(n * self.stationary_entry_variance())


class Scheme(enum.Enum):
    MATRIX_BM = "MatrixBM"
    MATRIX_OU = "MatrixOU"
    DYSON = "DysonSDE"
    COULOMB = "Coulomb"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for s in cls:
            if key in (s.value.lower(), s.name.lower().replace("_", "")):
                return s
        aliases = {"bm": cls.MATRIX_BM, "ou": cls.MATRIX_OU, "dyson": cls.DYSON, "coulomb": cls.COULOMB}
        if key in aliases:
            return aliases[key]
        raise ValidationError(f"unknown scheme {text!r}")

    def default_convention(self, n: int) -> NoiseConvention:
        if self is Scheme.MATRIX_OU:
            return NoiseConvention.unit_disk_ou(n)
        if self is Scheme.COULOMB:
            return NoiseConvention.coulomb(n)
        return NoiseConvention.raw()


@dataclass(frozen=True)
class SimConfig:
    n: int
    scheme: Scheme
    dt: float
    steps: int
    seed: int
    convention: NoiseConvention
    source: SourceSpec
    snapshot_every: int = 1
    init_scale: float = 0.0
    gap_floor: float = DEFAULT_GAP_FLOOR
    keep_matrix: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be positive")
        if not (self.dt >= 0 and math.isfinite(self.dt)):
            raise ValidationError("dt must be finite and nonnegative")
        if self.steps < 0:
            raise ValidationError("steps must be nonnegative")
        if self.snapshot_every < 1:
            raise ValidationError("snapshot_every must be at least 1")
        if self.source.n != self.n:
            raise ValidationError(f"source has {self.source.n} entries, expected {self.n}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if self.init_scale < 0:
            raise ValidationError("init_scale must be nonnegative")

    @property
    def final_time(self) -> float:
        return self.dt * self.steps


@dataclass(frozen=True)
class TrajectoryState:
    time: float
    step: int = 0
    x: np.ndarray | None = None
    dec: SpectralDecomposition | None = None
    lambdas_only: np.ndarray | None = None

    def __post_init__(self):
        populated = sum(v is not None for v in (self.x, self.dec, self.lambdas_only))
        if populated != 1:
            raise ValidationError("exactly one state representation must be set")

    def eigenvalues(self) -> np.ndarray:
        if self.dec is not None:
            return self.dec.lambdas
        if self.lambdas_only is not None:
            return self.lambdas_only
        return np.linalg.eigvals(self.x)


@dataclass(frozen=True)
class TrajectorySnapshot:
    step: int
    time: float
    lambdas: np.ndarray
    x: np.ndarray | None = field(default=None, repr=False)


# --------------------------------------------------------------------------- noise


def trajectory_rng(seed: int, k: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(k),))))


def draw_increment(rng: np.random.Generator, shape, dt: float, variance_rate: float) -> np.ndarray:
    """Complex Gaussian array with ``E|dX|^2 = variance_rate * dt`` per entry."""
    sd = math.sqrt(0.5 * variance_rate * dt)
    g = rng.standard_normal(tuple(shape) + (2,))
    return sd * (g[..., 0] + 1j * g[..., 1])


# --------------------------------------------------------------------------- steppers


def step_matrix_bm(state: TrajectoryState, dt: float, rng, conv: NoiseConvention,
                   dx: np.ndarray | None = None) -> TrajectoryState:
    if dt == 0:
        return state
    if dx is None:
        dx = draw_increment(rng, state.x.shape, dt, conv.variance_rate)
    return TrajectoryState(state.time + dt, state.step + 1, x=state.x + dx)


def step_matrix_ou(state: TrajectoryState, dt: float, rng, conv: NoiseConvention,
                   dx: np.ndarray | None = None) -> TrajectoryState:
    if dt == 0:
        return state
    if dx is None:
        dx = draw_increment(rng, state.x.shape, dt, conv.variance_rate)
    x = state.x - (conv.drift_coeff * dt) * state.x + dx
    return TrajectoryState(state.time + dt, state.step + 1, x=x)


def dyson_increment(lambdas: np.ndarray, s: np.ndarray, s_inv: np.ndarray, dx: np.ndarray):
    """First-order response ``(d lambda, dS)`` to a raw increment ``dx``.

    ``dx`` may carry leading batch axes. With ``dY = S^-1 dx S`` the update is
    ``d lambda_i = dY_ii`` and ``dS = S K`` where ``K_lj = dY_lj / (lambda_j - lambda_l)``
    off the diagonal and ``K_jj = 0``.
    """
    dy = s_inv @ dx @ s
    n = lambdas.shape[0]
    dlam = np.diagonal(dy, axis1=-2, axis2=-1).copy()
    diff = lambdas[None, :] - lambdas[:, None]
    np.fill_diagonal(diff, 1.0)
    k = dy / diff
    idx = np.arange(n)
    k[..., idx, idx] = 0.0
    return dlam, s @ k


def step_dyson(state: TrajectoryState, dt: float, rng, conv: NoiseConvention,
               gap_floor: float = DEFAULT_GAP_FLOOR, dx: np.ndarray | None = None) -> TrajectoryState:
    if dt == 0:
        return state
    dec = state.dec
    if dec.min_gap < gap_floor:
        raise GapCollapse(f"gap {dec.min_gap:.3e} below floor before step", state.step + 1)
    if dx is None:
        dx = draw_increment(rng, dec.s.shape, dt, conv.variance_rate)
    dlam, ds = dyson_increment(dec.lambdas, dec.s, dec.s_inv, dx)
    lam = dec.lambdas + dlam
    gap = min_pairwise_gap(lam)
    if gap < gap_floor:
        raise GapCollapse(f"gap {gap:.3e} below floor {gap_floor:.1e}", state.step + 1)
    s = dec.s + ds
    new = SpectralDecomposition(lam, s, np.linalg.inv(s), Gauge.TRAJECTORY, gap)
    return TrajectoryState(state.time + dt, state.step + 1, dec=new)


def step_coulomb(lambdas: np.ndarray, dt: float, rng, conv: NoiseConvention,
                 gap_floor: float = DEFAULT_GAP_FLOOR, noise: np.ndarray | None = None,
                 step: int = 0) -> np.ndarray:
    """One Euler-Maruyama step of the planar Coulomb gas.

    Drift is ``-(2/N) sum_k (l_k - l_j)/|l_k - l_j|^2 - drift_coeff * l_j``.
    """
    if dt == 0:
        return lambdas
    n = lambdas.shape[0]
    if n > 1:
        gap = min_pairwise_gap(lambdas)
        if gap < gap_floor:
            raise GapCollapse(f"gap {gap:.3e} below floor {gap_floor:.1e}", step)
    if noise is None:
        noise = draw_increment(rng, (n,), dt, conv.variance_rate)
    drift = -(2.0 / n) * kernels.pair_interaction(lambdas) - conv.drift_coeff * lambdas
    return lambdas + drift * dt + noise


# --------------------------------------------------------------------------- runs


def initial_state(config: SimConfig, rng: np.random.Generator) -> TrajectoryState:
    """Diagonal source, optionally plus ``init_scale`` times a Ginibre matrix of unit radius."""
    n = config.n
    x0 = np.diag(config.source.a).astype(np.complex128)
    if config.init_scale > 0:
        x0 = x0 + config.init_scale * draw_increment(rng, (n, n), 1.0, 1.0 / n)
    if config.scheme in (Scheme.MATRIX_BM, Scheme.MATRIX_OU):
        return TrajectoryState(0.0, x=x0)
    if config.scheme is Scheme.COULOMB:
        lam = np.diag(x0).copy() if config.init_scale == 0 else np.linalg.eigvals(x0)
        if n > 1 and min_pairwise_gap(lam) < config.gap_floor:
            raise DegenerateSpectrum("initial Coulomb charges coincide")
        return TrajectoryState(0.0, lambdas_only=lam)
    dec = eigendecompose(x0, config.gap_floor)
    return TrajectoryState(0.0, dec=replace(dec, gauge=Gauge.TRAJECTORY))


def advance(state: TrajectoryState, config: SimConfig, rng) -> TrajectoryState:
    dt, conv = config.dt, config.convention
    sch = config.scheme
    if sch is Scheme.MATRIX_BM:
        return step_matrix_bm(state, dt, rng, conv)
    if sch is Scheme.MATRIX_OU:
        return step_matrix_ou(state, dt, rng, conv)
    if sch is Scheme.DYSON:
        return step_dyson(state, dt, rng, conv, config.gap_floor)
    lam = step_coulomb(state.lambdas_only, dt, rng, conv, config.gap_floor, step=state.step + 1)
    return TrajectoryState(state.time + dt, state.step + 1, lambdas_only=lam)


def _snapshot(state: TrajectoryState, config: SimConfig, prev: np.ndarray | None) -> TrajectorySnapshot:
    lam = np.asarray(state.eigenvalues(), dtype=np.complex128)
    if prev is not None and config.scheme in (Scheme.MATRIX_BM, Scheme.MATRIX_OU):
        lam = lam[match_eigenvalues(prev, lam)]
    elif prev is None and config.scheme in (Scheme.MATRIX_BM, Scheme.MATRIX_OU):
        lam = lam[np.lexsort((lam.imag, lam.real))]
    x = None
    if config.keep_matrix:
        x = state.x if state.x is not None else (
            (state.dec.s * state.dec.lambdas[None, :]) @ state.dec.s_inv if state.dec is not None else None)
    return TrajectorySnapshot(state.step, state.time, lam, x)


def run_trajectory(config: SimConfig, k: int = 0, callback=None) -> list[TrajectorySnapshot]:
    """Run trajectory ``k`` and return snapshots at step 0 and every ``snapshot_every`` steps.

    Step errors are re-raised with the failing step index attached.
    """
    rng = trajectory_rng(config.seed, k)
    state = initial_state(config, rng)
    snaps = [_snapshot(state, config, None)]
    if callback is not None:
        callback(snaps[-1])
    for i in range(1, config.steps + 1):
        try:
            state = advance(state, config, rng)
        except GapCollapse as exc:
            if exc.step is None:
                raise GapCollapse(str(exc), i) from exc
            raise
        if i % config.snapshot_every == 0:
            snaps.append(_snapshot(state, config, snaps[-1].lambdas))
            if callback is not None:
                callback(snaps[-1])
    return snaps


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("GDYN_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ValidationError("GDYN_THREADS must be an integer") from exc
    return max(1, n)


def map_ordered(fn, items, threads: int | None = None) -> list:
    """``[fn(i) for i in items]`` on a thread pool; results keep input order."""
    items = list(items)
    workers = worker_count(threads)
    if workers == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_ensemble(config: SimConfig, n_traj: int, threads: int | None = None) -> list[list[TrajectorySnapshot]]:
    return map_ordered(lambda k: run_trajectory(config, k), range(n_traj), threads)


def sample_matrix_bm(x0: np.ndarray, times, n_traj: int, seed: int,
                     variance_rate: float = 1.0, first: int = 0) -> np.ndarray:
    """Exact Brownian paths sampled at increasing ``times``.

    Returns an array of shape ``(n_traj, len(times), N, N)``; trajectory ``k``
    uses stream ``first + k``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValidationError("times must be nonnegative and increasing")
    x0 = np.asarray(x0, dtype=np.complex128)
    n = x0.shape[0]
    steps = np.diff(np.concatenate([[0.0], times]))
    out = np.empty((n_traj, times.size, n, n), np.complex128)
    for k in range(n_traj):
        rng = trajectory_rng(seed, first + k)
        g = rng.standard_normal((times.size, n, n, 2))
        inc = np.sqrt(0.5 * variance_rate * steps)[:, None, None] * (g[..., 0] + 1j * g[..., 1])
        out[k] = x0 + np.cumsum(inc, axis=0)
    return out
