# cython: language_level=3
"""Compiled versions of the loops in ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


def pair_interaction(lam_in):
    cdef cplx[::1] lam = np.ascontiguousarray(lam_in, dtype=np.complex128)
    cdef Py_ssize_t n = lam.shape[0], j, k
    out_arr = np.zeros(n, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx d
    cdef double m
    for j in range(n):
        for k in range(j + 1, n):
            d = lam[k] - lam[j]
            m = d.real * d.real + d.imag * d.imag
            d = d / m
            out[j] = out[j] + d
            out[k] = out[k] - d
    return out_arr


def beta_kernel(A_in, double beta, v_in, gam_in):
    cdef double[::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef cplx[::1] v = np.ascontiguousarray(v_in, dtype=np.complex128)
    cdef cplx[::1] gam = np.ascontiguousarray(gam_in, dtype=np.complex128)
    cdef Py_ssize_t n = A.shape[0], m = v.shape[0], i, k
    out_arr = np.empty(m, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx e, gp, w, vv, gg
    with nogil:
        for k in range(m):
            vv = v[k]
            gg = gam[k]
            e = 0
            gp = 1
            for i in range(n):
                w = vv / (vv - A[i])
                gp = gp * gg
                e = e * gg * (1.0 - beta * w) - gp * w
            out[k] = e
    return out_arr


def density_kernel(A_in, g_in, double beta, v_in, gam_in):
    cdef double[::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef cplx[::1] g = np.ascontiguousarray(g_in, dtype=np.complex128)
    cdef cplx[::1] v = np.ascontiguousarray(v_in, dtype=np.complex128)
    cdef cplx[::1] gam = np.ascontiguousarray(gam_in, dtype=np.complex128)
    cdef Py_ssize_t n = A.shape[0], m = v.shape[0], i, k
    out_arr = np.empty(m, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx P, D, S, U, Sc, Sd, S2, inv, w, phi, qt, s, q, c, d, p, vv, gg, gi
    cdef double g2
    with nogil:
        for k in range(m):
            vv = v[k]
            gg = gam[k]
            P = 1
            D = 0
            S = 0
            U = 0
            Sc = 0
            Sd = 0
            S2 = 0
            for i in range(n):
                gi = g[i]
                g2 = gi.real * gi.real + gi.imag * gi.imag
                inv = 1.0 / (vv - A[i])
                w = vv * inv
                phi = 1.0 - beta * w
                qt = -inv * inv
                s = qt * (1.0 + 2.0 * g2 * inv)
                q = gg * qt
                c = q * gi
                d = q * gi.conjugate()
                p = gg * phi
                S2 = S2 * p + c * Sd + d * Sc
                Sc = Sc * p + c * P
                Sd = Sd * p + d * P
                U = gg * (U - w * S + s * D)
                S = gg * (S * phi + s * P)
                D = gg * (D - w * P)
                P = P * p
            out[k] = U + vv * S2
    return out_arr


def double_contour_kernel(A_in, double u, sig_in):
    cdef double[::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef cplx[::1] sig = np.ascontiguousarray(sig_in, dtype=np.complex128)
    cdef Py_ssize_t n = A.shape[0], m = sig.shape[0], i, k
    out_arr = np.empty(m, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx e, P, inv, s
    with nogil:
        for k in range(m):
            s = sig[k]
            e = 0
            P = 1
            for i in range(n):
                inv = 1.0 / (A[i] - s)
                e = e + P * inv
                P = P * (A[i] + u) * inv
            out[k] = e
    return out_arr
