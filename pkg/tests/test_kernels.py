import os
import subprocess
import sys

import numpy as np
import pytest

from gdyn import _pykernels, kernels

ck = pytest.importorskip("gdyn._ckernels")


def _inputs(seed=3):
    r = np.random.default_rng(seed)
    lam = r.normal(size=30) + 1j * r.normal(size=30)
    a = r.random(12) * 2
    g = r.normal(size=12) + 1j * r.normal(size=12)
    v = 1.0 + 1.5 * np.exp(2j * np.pi * np.arange(64) / 64)
    gam = np.exp(-0.4 * v)
    return {
        "pair_interaction": (lam,),
        "beta_kernel": (a, 0.4, v, gam),
        "density_kernel": (a, g, 0.4, v, gam),
        "double_contour_kernel": (a, 0.3, v),
    }


@pytest.mark.parametrize("name", ["pair_interaction", "beta_kernel", "density_kernel", "double_contour_kernel"])
def test_backends_agree(name):
    args = _inputs()[name]
    ref = np.asarray(getattr(_pykernels, name)(*args))
    got = np.asarray(getattr(ck, name)(*args))
    assert np.max(np.abs(ref - got)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_pair_interaction_two_charges():
    lam = np.array([0.0, 2.0 + 0j])
    # sum over k != j of (l_k - l_j) / |l_k - l_j|^2
    assert np.allclose(_pykernels.pair_interaction(lam), [0.5, -0.5])


def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython"


def test_environment_variable_forces_fallback():
    env = dict(os.environ, GDYN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import gdyn.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
