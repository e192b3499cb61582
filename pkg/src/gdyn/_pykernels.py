"""NumPy reference implementations of the hot loops.

Each function vectorises over contour nodes (or particles) and loops in
Python over the source elements. ``_ckernels`` mirrors these signatures.
"""

import numpy as np


def pair_interaction(lam):
    """``sum_{k != j} (lam_k - lam_j) / |lam_k - lam_j|^2`` for every j."""
    lam = np.asarray(lam, dtype=np.complex128)
    d = lam[None, :] - lam[:, None]
    m = np.abs(d) ** 2
    np.fill_diagonal(m, 1.0)
    out = d / m
    np.fill_diagonal(out, 0.0)
    return out.sum(axis=1)


def beta_kernel(A, beta, v, gam):
    """Contour integrand ``e^{-beta N v/tau} (prod_i p_i - 1) / beta``.

    ``gam`` holds ``e^{-beta v / tau}``; with ``w_i = v/(v - A_i)`` the
    recursion ``E <- E gam (1 - beta w_i) - gam^i w_i`` never forms the
    product and its 1/beta part separately.
    """
    v = np.asarray(v, dtype=np.complex128)
    e = np.zeros_like(v)
    gp = np.ones_like(v)
    for a in np.asarray(A, dtype=np.float64):
        w = v / (v - a)
        gp = gp * gam
        e = e * gam * (1.0 - beta * w) - gp * w
    return e


def density_kernel(A, g, beta, v, gam):
    """Density integrand after the z zbar derivative acts on the product.

    Returns ``U + v S2`` in which ``S2`` sums over two differentiated factors
    and ``U = sum_i s_i (prod_{k != i} phi_k - 1) / beta`` with
    ``s_i = -1/(v-A_i)^2 - 2|g_i|^2/(v-A_i)^3``, both carrying the overall
    ``e^{-beta N v/tau}``. The omitted ``sum_i s_i / beta`` part has a closed
    form contour integral and is added by the caller.
    """
    v = np.asarray(v, dtype=np.complex128)
    P = np.ones_like(v)
    D = np.zeros_like(v)
    S = np.zeros_like(v)
    U = np.zeros_like(v)
    Sc = np.zeros_like(v)
    Sd = np.zeros_like(v)
    S2 = np.zeros_like(v)
    for a, gi in zip(np.asarray(A, dtype=np.float64), np.asarray(g, dtype=np.complex128)):
        inv = 1.0 / (v - a)
        w = v * inv
        phi = 1.0 - beta * w
        qt = -inv * inv
        s = qt * (1.0 + 2.0 * (gi.real * gi.real + gi.imag * gi.imag) * inv)
        q = gam * qt
        c = q * gi
        d = q * np.conj(gi)
        p = gam * phi
        S2 = S2 * p + c * Sd + d * Sc
        Sc = Sc * p + c * P
        Sd = Sd * p + d * P
        U = gam * (U - w * S + s * D)
        S = gam * (S * phi + s * P)
        D = gam * (D - w * P)
        P = P * p
    return U + v * S2


def double_contour_kernel(A, u, sig):
    """``(prod_i (A_i + u)/(A_i - sig) - 1) / (sig + u)`` without cancellation."""
    sig = np.asarray(sig, dtype=np.complex128)
    e = np.zeros_like(sig)
    P = np.ones_like(sig)
    for a in np.asarray(A, dtype=np.float64):
        inv = 1.0 / (a - sig)
        e = e + P * inv
        P = P * (a + u) * inv
    return e
