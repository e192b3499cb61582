import math

import numpy as np
import pytest

from gdyn.errors import ValidationError
from gdyn.integrators import trajectory_rng
from gdyn.linalg_core import eigendecompose
from gdyn.sfp import (
    SfpPoint,
    VerificationRow,
    check_covariances,
    check_derivative_ids,
    check_Q_solution,
    check_TdQ,
    check_TQ,
    format_report,
    natural_time,
    point_from_decomposition,
    q_value,
    report_csv,
    sample_point,
)


def unitary_point(n, seed=0):
    r = np.random.default_rng(seed)
    q, _ = np.linalg.qr(r.normal(size=(n, n)) + 1j * r.normal(size=(n, n)))
    lam = np.exp(2j * np.pi * np.arange(n) / n) * (0.3 + 0.5 * r.random(n))
    return SfpPoint(lam, q)


def test_point_tensors_shapes_and_sum_rule():
    p = sample_point(4, np.random.default_rng(1))
    assert p.c_ls.shape == (4, 4, 4) and p.c_ss.shape == (4, 4, 4, 4)
    assert np.allclose(p.o.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(p.s @ p.s_inv, np.eye(4), atol=1e-12)


def test_point_from_decomposition_round_trip():
    x = np.array([[1.0, 2.0], [0.5j, -1.0]])
    p = point_from_decomposition(eigendecompose(x))
    assert np.allclose((p.s * p.lambdas) @ p.s_inv, x)
    assert p.decomposition().n == 2


def test_derivative_ids_identity_point():
    p = SfpPoint(np.array([0.3, -0.2 + 0.4j]), np.eye(2, dtype=complex))
    assert check_derivative_ids(p) < 1e-8


def test_derivative_ids_random_point():
    p = sample_point(3, np.random.default_rng(2))
    assert check_derivative_ids(p) < 1e-6


def test_derivative_ids_second_order():
    p = sample_point(3, np.random.default_rng(3))
    e1 = check_derivative_ids(p, h=1e-2, richardson=False)
    e2 = check_derivative_ids(p, h=5e-3, richardson=False)
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_tq_cancels(n):
    rng = trajectory_rng(10, n)
    for _ in range(20):
        assert check_TQ(sample_point(n, rng)).residual < 1e-10


def test_tq_permutation_symmetry():
    p = sample_point(4, np.random.default_rng(4))
    perm = [1, 0, 2, 3]
    q = SfpPoint(p.lambdas[perm], p.s[:, perm])
    a, b = check_TQ(p), check_TQ(q)
    assert b.residual < 1e-10
    scale = max(abs(t) for t in a.terms)
    assert all(abs(x - y) < 1e-10 * scale for x, y in zip(a.terms, b.terms))


@pytest.mark.parametrize("n", [2, 4])
def test_tdq_cancels(n):
    rng = trajectory_rng(11, n)
    for _ in range(20):
        r1, r2 = check_TdQ(sample_point(n, rng))
        assert r1 < 1e-10 and r2 < 1e-10


def test_identities_hold_for_normal_point():
    p = unitary_point(3)
    assert np.allclose(p.o, np.eye(3), atol=1e-12)
    assert check_TQ(p).residual < 1e-10
    assert max(check_TdQ(p)) < 1e-10


def test_covariances_random_point():
    p = sample_point(2, np.random.default_rng(5))
    rep = check_covariances(p, 100_000, 0.01, seed=3)
    assert rep.worst < 4.0
    assert set(rep.max_z) == {"ll", "sl", "ss"}
    assert rep.min_diag_ratio >= 1 - 0.05


def test_covariances_normal_point():
    p = unitary_point(2, seed=1)
    rep = check_covariances(p, 50_000, 0.01, seed=4)
    assert rep.worst < 4.0
    assert rep.min_diag_ratio == pytest.approx(1.0, abs=0.05)


def test_covariance_draws_validation():
    with pytest.raises(ValidationError):
        check_covariances(sample_point(2, np.random.default_rng(0)), 10, 0.01)


def test_q_solution_from_zero():
    rng = np.random.default_rng(6)
    for _ in range(3):
        p = sample_point(2, rng)
        res = check_Q_solution(p, natural_time(p))
        assert res.residual < 1e-4


def test_q_value_zero_start_closed_form():
    p = sample_point(2, np.random.default_rng(7))
    t = 0.7
    quad = np.real(np.einsum("ij,i,j->", p.o, p.lambdas, p.lambdas.conj()))
    expected = math.exp(-quad / t) / t ** 4
    got = q_value(p.lambdas, p.s, t, np.zeros((2, 2)))
    assert got == pytest.approx(expected, rel=1e-10)


def test_q_solution_generic_start():
    rng = np.random.default_rng(8)
    p = sample_point(2, rng)
    x0 = 0.3 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    res = check_Q_solution(p, natural_time(p, x0), x0)
    assert res.residual < 1e-4


def test_q_residual_second_order():
    p = SfpPoint(np.array([0.4 + 0.1j, -0.3 - 0.2j]), np.array([[1.0, 0.3j], [0.2, 0.9 + 0.1j]]))
    t = natural_time(p)
    r1 = check_Q_solution(p, t, fd_step=0.2, richardson_tol=1.0, max_halvings=0).residual
    r2 = check_Q_solution(p, t, fd_step=0.1, richardson_tol=1.0, max_halvings=0).residual
    assert r1 / r2 == pytest.approx(4.0, rel=0.15)


def test_q_solution_validation():
    p3 = sample_point(3, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        check_Q_solution(p3, 1.0)
    p2 = sample_point(2, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        check_Q_solution(p2, 0.01)


def test_report_rows():
    rows = [VerificationRow("a", 2, 1e-12, 1e-10), VerificationRow("b", 8, 0.9, 1.0, "min")]
    assert rows[0].passed and not rows[1].passed
    text = format_report(rows)
    assert "pass" in text and "FAIL" in text
    lines = report_csv(rows).splitlines()
    assert lines[0] == "name,n,value,bound,tolerance,passed"
    assert lines[2].endswith(",0")
