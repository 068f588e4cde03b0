"""Compare the numba and numpy backends of the sum-factorization kernel.

Two measurements:

* the raw ``tensor_apply`` contraction at the block sizes the solver uses;
* one application of the viscous and pressure-Poisson operators, run in a
  child process per backend because the backend is fixed at import time
  through ``SPLITDG_BACKEND``.

Usage::

    python bench/bench_kernels.py [--repeat 5] [--skip-operators]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from splitdg._kernels import BACKEND, numba, tensor_apply

# (label, batch, n_in, n_out, dim): velocity values at quadrature points
CASES = [
    ("2D k=4, 16^2 cells x 2 comps", 2 * 16**2, 5, 7, 2),
    ("2D k=6, 16^2 cells x 2 comps", 2 * 16**2, 7, 9, 2),
    ("3D k=3, 8^3 cells x 3 comps", 3 * 8**3, 4, 6, 3),
    ("3D k=4, 8^3 cells x 3 comps", 3 * 8**3, 5, 7, 3),
]

_OPERATOR_SNIPPET = """
import json, timeit, numpy as np
from splitdg.mesh import build_cartesian_mesh
from splitdg.operators import apply_viscous_sipg
from splitdg.operators.base import Discretization
from splitdg.operators.pressure import apply_ppe_lhs
out = {}
for label, bounds, cells, k in [("2D k=4 16^2", ((0, 1),) * 2, [16, 16], 4),
                                ("3D k=3 8^3", ((0, 1),) * 3, [8, 8, 8], 3)]:
    disc = Discretization(build_cartesian_mesh(bounds, cells, "periodic"), k)
    u = np.random.default_rng(0).normal(size=disc.velocity.n_dofs)
    p = np.random.default_rng(1).normal(size=disc.pressure.n_dofs)
    apply_viscous_sipg(disc, u, 0.01); apply_ppe_lhs(disc, p)
    out[label] = {
        "viscous": min(timeit.repeat(lambda: apply_viscous_sipg(disc, u, 0.01), number=1, repeat=REPEAT)),
        "ppe": min(timeit.repeat(lambda: apply_ppe_lhs(disc, p), number=1, repeat=REPEAT)),
    }
print(json.dumps(out))
"""


def bench_kernel(repeat: int) -> list:
    rng = np.random.default_rng(0)
    rows = []
    for label, batch, n_in, n_out, dim in CASES:
        data = rng.normal(size=(batch,) + (n_in,) * dim)
        mats = [rng.normal(size=(n_out, n_in)) for _ in range(dim)]
        ref = tensor_apply(data, mats, backend="numpy")
        times = {}
        for backend in ("numpy", "numba"):
            if backend == "numba" and numba is None:
                continue
            got = tensor_apply(data, mats, backend=backend)  # warm-up and compile
            if not np.allclose(got, ref, rtol=1e-12, atol=1e-12):
                raise RuntimeError(f"backend {backend} disagrees on {label}")
            times[backend] = min(timeit.repeat(lambda: tensor_apply(data, mats, backend=backend),
                                               number=1, repeat=repeat))
        rows.append((label, times))
    return rows


def bench_operators(repeat: int) -> dict:
    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, SPLITDG_BACKEND=backend)
        code = _OPERATOR_SNIPPET.replace("REPEAT", str(repeat))
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])
    return results


def _ms(seconds):
    return f"{1e3 * seconds:9.2f}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions (best is reported)")
    ap.add_argument("--skip-operators", action="store_true", help="only time the raw kernel")
    args = ap.parse_args(argv)

    print(f"default backend: {BACKEND}")
    print("\ntensor_apply (ms, best of %d)" % args.repeat)
    print(f"{'case':34s} {'numpy':>9s} {'numba':>9s} {'speed-up':>9s}")
    for label, times in bench_kernel(args.repeat):
        nb = times.get("numba", float("nan"))
        print(f"{label:34s} {_ms(times['numpy'])} {_ms(nb)} {times['numpy'] / nb:9.2f}")

    if not args.skip_operators:
        res = bench_operators(args.repeat)
        print("\noperator application (ms, best of %d)" % args.repeat)
        print(f"{'case':34s} {'numpy':>9s} {'numba':>9s} {'speed-up':>9s}")
        for label in res["numpy"]:
            for op in ("viscous", "ppe"):
                a, b = res["numpy"][label][op], res["numba"][label][op]
                print(f"{label + ' ' + op:34s} {_ms(a)} {_ms(b)} {a / b:9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
