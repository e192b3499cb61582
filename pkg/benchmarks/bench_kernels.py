"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is run on identical inputs through both backends; the script
checks that they agree and prints the median wall time per call.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import timeit

import numpy as np

from gdyn import _pykernels

try:
    from gdyn import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def cases(rng: np.random.Generator):
    lam = rng.normal(size=400) + 1j * rng.normal(size=400)
    a_big = rng.random(200) * 2.0
    g_big = rng.normal(size=200) + 1j * rng.normal(size=200)
    v = 1.0 + 1.5 * np.exp(2j * np.pi * np.arange(256) / 256)
    gam = np.exp(-0.4 * v)
    return {
        "pair_interaction N=400": ("pair_interaction", (lam,)),
        "beta_kernel N=200, 256 nodes": ("beta_kernel", (a_big, 0.4, v, gam)),
        "density_kernel N=200, 256 nodes": ("density_kernel", (a_big, g_big, 0.4, v, gam)),
        "double_contour_kernel N=200, 256 nodes": ("double_contour_kernel", (a_big, 0.3, v)),
    }


def time_call(fn, args, repeat: int) -> float:
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return statistics.median(t / number for t in timer.repeat(repeat, number))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<42}{'python [us]':>13}{'cython [us]':>13}{'speed-up':>10}")
    for label, (name, a) in cases(rng).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        ref, got = py(*a), cy(*a)
        err = float(np.max(np.abs(ref - got)) / max(np.max(np.abs(ref)), 1e-300))
        if err > 1e-10:
            print(f"{label}: backends disagree (relative {err:.2e})")
            return 2
        t_py, t_cy = time_call(py, a, args.repeat), time_call(cy, a, args.repeat)
        rows.append({"kernel": label, "python_s": t_py, "cython_s": t_cy, "rel_diff": err})
        print(f"{label:<42}{t_py * 1e6:13.1f}{t_cy * 1e6:13.1f}{t_py / t_cy:10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
