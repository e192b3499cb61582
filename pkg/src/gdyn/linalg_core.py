"""Eigendecomposition of non-normal matrices and the overlap matrix.

A decomposition stores the eigenvalues, the right-eigenvector matrix ``S``
(eigenvectors as columns) and its inverse, whose rows are the matching left
eigenvectors normalised so that ``s_inv @ s = I``. The overlap matrix
``O_ij = A^-1_ij A_ji`` with ``A = S^H S`` is invariant under any rescaling
of the columns of ``S``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSpectrum, NonFinite, SingularOverlap, ValidationError

TOL_RECON = 1e-9
TOL_ALG = 1e-10
DEFAULT_GAP_FLOOR = 1e-8
# 1/cond(S)^2 bounds the smallest singular value of A relative to its largest.
COND_LIMIT = 1e7


class Gauge(enum.Enum):
    DECOMPOSITION = "DecompositionGauge"
    TRAJECTORY = "TrajectoryGauge"


@dataclass(frozen=True)
class SpectralDecomposition:
    lambdas: np.ndarray
    s: np.ndarray
    s_inv: np.ndarray
    gauge: Gauge
    min_gap: float

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    def with_s(self, s: np.ndarray, s_inv: np.ndarray | None = None) -> "SpectralDecomposition":
        if s_inv is None:
            s_inv = np.linalg.inv(s)
        return replace(self, s=s, s_inv=s_inv)


@dataclass(frozen=True)
class OverlapMatrix:
    o: np.ndarray

    @property
    def diag_real(self) -> np.ndarray:
        return self.o.diagonal().real.copy()


def as_complex_matrix(x) -> np.ndarray:
    """Validate and copy ``x`` into a square complex128 array."""
    a = np.array(x, dtype=np.complex128, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"expected a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has NaN or Inf entries")
    return a


def min_pairwise_gap(lambdas: np.ndarray) -> float:
    n = lambdas.shape[0]
    if n < 2:
        return float("inf")
    d = np.abs(lambdas[:, None] - lambdas[None, :])
    d[np.diag_indices(n)] = np.inf
    return float(d.min())


def _fix_gauge(s: np.ndarray) -> np.ndarray:
    s = s / np.linalg.norm(s, axis=0, keepdims=True)
    idx = np.argmax(np.abs(s), axis=0)
    pivot = s[idx, np.arange(s.shape[1])]
    return s * (np.abs(pivot) / pivot)[None, :]


def eigendecompose(x, gap_floor: float = DEFAULT_GAP_FLOOR) -> SpectralDecomposition:
    """Diagonalise ``x`` as ``S diag(lambdas) S^-1`` in the decomposition gauge.

    Eigenvalues are sorted lexicographically by (real, imaginary) part; each
    column of ``S`` has unit norm and its largest-modulus entry on the positive
    real axis. Raises :class:`DegenerateSpectrum` when two eigenvalues are
    closer than ``gap_floor``.
    """
    a = as_complex_matrix(x)
    lam, s = np.linalg.eig(a)
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order]
    s = _fix_gauge(s[:, order])
    gap = min_pairwise_gap(lam)
    if gap < gap_floor:
        raise DegenerateSpectrum(f"minimum eigenvalue gap {gap:.3e} below floor {gap_floor:.3e}")
    s_inv = np.linalg.inv(s)
    if not (np.all(np.isfinite(s_inv)) and np.all(np.isfinite(lam))):
        raise DegenerateSpectrum("eigenvector matrix is numerically singular")
    return SpectralDecomposition(lam, s, s_inv, Gauge.DECOMPOSITION, gap)


def overlap_matrix(dec: SpectralDecomposition, cond_limit: float = COND_LIMIT) -> OverlapMatrix:
    """Return ``O_ij = A^-1_ij A_ji`` for ``A = S^H S``.

    ``A^-1 = s_inv s_inv^H`` is formed from the stored inverse rather than by
    inverting ``A``, which would square the condition number.
    """
    s, s_inv = dec.s, dec.s_inv
    if np.linalg.cond(s) > cond_limit:
        raise SingularOverlap(f"cond(S) exceeds {cond_limit:.1e}")
    a = s.conj().T @ s
    a_inv = s_inv @ s_inv.conj().T
    o = a_inv * a.T
    return OverlapMatrix(o)


def reconstruct(dec: SpectralDecomposition) -> np.ndarray:
    return (dec.s * dec.lambdas[None, :]) @ dec.s_inv


def reconstruction_error(dec: SpectralDecomposition, x) -> float:
    """Max-norm error of ``S Lambda S^-1`` relative to ``max|x|``."""
    x = np.asarray(x)
    scale = max(float(np.max(np.abs(x))), np.finfo(float).tiny)
    return float(np.max(np.abs(reconstruct(dec) - x))) / scale


def check_decomposition(dec: SpectralDecomposition, x=None, tol: float = TOL_RECON) -> None:
    """Raise ``AssertionError`` if a stored decomposition violates its invariants."""
    eye = np.eye(dec.n)
    err_inv = float(np.max(np.abs(dec.s @ dec.s_inv - eye)))
    if err_inv > tol:
        raise AssertionError(f"|S S^-1 - I| = {err_inv:.3e} > {tol:.1e}")
    if x is not None:
        err = reconstruction_error(dec, x)
        if err > tol:
            raise AssertionError(f"reconstruction error {err:.3e} > {tol:.1e}")
    if not dec.min_gap > 0:
        raise AssertionError("nonpositive eigenvalue gap")


def match_eigenvalues(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Greedy nearest-neighbour permutation of ``cur`` onto ``prev``.

    Pairs are taken in order of increasing distance; ties fall back to the
    lexicographic position of the indices. Returns ``perm`` such that
    ``cur[perm]`` lines up with ``prev``.
    """
    n = prev.shape[0]
    d = np.abs(prev[:, None] - cur[None, :]).ravel()
    order = np.lexsort((np.arange(n * n), d))
    perm = np.full(n, -1, dtype=np.intp)
    used_prev = np.zeros(n, bool)
    used_cur = np.zeros(n, bool)
    left = n
    for flat in order:
        i, j = divmod(int(flat), n)
        if used_prev[i] or used_cur[j]:
            continue
        perm[i] = j
        used_prev[i] = used_cur[j] = True
        left -= 1
        if left == 0:
            break
    return perm
