import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdyn.errors import DegenerateSpectrum, NonFinite, SingularOverlap
from gdyn.linalg_core import (
    TOL_ALG,
    check_decomposition,
    eigendecompose,
    match_eigenvalues,
    min_pairwise_gap,
    overlap_matrix,
    reconstruct,
    reconstruction_error,
)


def ginibre(rng, n):
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)


def test_diagonal_input_is_its_own_decomposition():
    dec = eigendecompose(np.diag([1.0, 2.0]))
    assert np.allclose(np.sort(dec.lambdas.real), [1, 2])
    o = overlap_matrix(dec).o
    assert np.allclose(o, np.eye(2))
    assert np.allclose(reconstruct(dec), np.diag([1.0, 2.0]))


def test_identity_is_degenerate():
    with pytest.raises(DegenerateSpectrum):
        eigendecompose(np.eye(2))


def test_gap_below_floor_is_rejected():
    with pytest.raises(DegenerateSpectrum):
        eigendecompose(np.array([[0, 1], [0, 1e-9]]), gap_floor=1e-6)


def test_non_finite_input_is_rejected():
    with pytest.raises(NonFinite):
        eigendecompose(np.array([[np.nan, 0], [0, 1]]))


def test_shear_overlap_by_hand():
    # A = S^H S = [[1,1],[1,2]], A^-1 = [[2,-1],[-1,1]]
    x = np.array([[1.0, 1.0], [0.0, 2.0]])
    dec = eigendecompose(x)
    o = overlap_matrix(dec).o
    order = np.argsort(dec.lambdas.real)
    assert np.allclose(o[np.ix_(order, order)], [[2, -1], [-1, 2]], atol=1e-12)
    assert np.allclose(o.sum(axis=0), 1.0, atol=1e-12)


def test_unitary_eigenvectors_give_identity_overlap(rng):
    q, _ = np.linalg.qr(ginibre(rng, 4))
    x = q @ np.diag([1, 2j, -1, 0.5 + 0.5j]) @ q.conj().T
    assert np.allclose(overlap_matrix(eigendecompose(x)).o, np.eye(4), atol=1e-10)


def test_random_matrix_round_trip(rng):
    x = ginibre(rng, 4)
    dec = eigendecompose(x)
    assert reconstruction_error(dec, x) < 1e-10
    check_decomposition(dec, x)
    assert dec.min_gap > 0


def test_perturbed_inverse_fails_invariant_check(rng):
    x = ginibre(rng, 4)
    dec = eigendecompose(x)
    bad = dec.with_s(dec.s, dec.s_inv + 1e-3)
    with pytest.raises(Exception):
        check_decomposition(bad, x)


def test_ill_conditioned_overlap_raises():
    x = np.array([[0.0, 1.0], [0.0, 1e-9]])
    dec = eigendecompose(x, gap_floor=1e-12)
    with pytest.raises(SingularOverlap):
        overlap_matrix(dec)


def test_min_gap_and_matching():
    lam = np.array([0, 1, 1 + 0.5j])
    assert min_pairwise_gap(lam) == pytest.approx(0.5)
    cur = lam[[2, 0, 1]] + 1e-4
    perm = match_eigenvalues(lam, cur)
    assert np.allclose(cur[perm], lam + 1e-4)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_overlap_sum_rule_and_lower_bound(n, seed):
    x = ginibre(np.random.default_rng(seed), n)
    ov = overlap_matrix(eigendecompose(x))
    assert np.max(np.abs(ov.o.sum(axis=0) - 1)) < TOL_ALG * 10
    assert np.all(ov.diag_real >= 1 - TOL_ALG)
    assert np.max(np.abs(np.diag(ov.o).imag)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 6))
def test_overlap_gauge_invariance(seed, n):
    r = np.random.default_rng(seed)
    dec = eigendecompose(ginibre(r, n))
    c = np.exp(2j * np.pi * r.random(n)) * (0.2 + 3 * r.random(n))
    scaled = dec.with_s(dec.s * c[None, :], dec.s_inv / c[:, None])
    assert np.allclose(overlap_matrix(scaled).o, overlap_matrix(dec).o, atol=1e-9)
