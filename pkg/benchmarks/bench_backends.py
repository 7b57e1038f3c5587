"""Compare the compiled kernels with the NumPy fallback.

Part 1 times each kernel from both modules on identical inputs.  Part 2 runs
a whole porous-medium solve (naive and compressed history) once per backend,
the fallback in a subprocess with ``CQSUBDIFF_PURE=1`` so that the selection
at import is exercised.

    python3 benchmarks/bench_backends.py [--M 255] [--N 512] [--reps 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from cqsubdiff import _pykernels as py

try:
    from cqsubdiff import _ckernels as cy
except ImportError:  # pragma: no cover - build without a compiler
    cy = None

WHOLE_RUN = """
import json, sys, time
from cqsubdiff import _backend
from cqsubdiff.experiments import porous_problem
from cqsubdiff.stepper import HistoryMode, TimeGrid, run
N, M = int(sys.argv[1]), int(sys.argv[2])
sp, grid = porous_problem(0.5), TimeGrid(1.0, N)
out = {"backend": _backend.BACKEND}
for name, mode in (("naive", HistoryMode.naive()), ("fast", HistoryMode.fast(1e-8))):
    t0 = time.perf_counter()
    run(sp, grid, "bdf1", mode, M=M, store="final")
    out[name] = time.perf_counter() - t0
print(json.dumps(out))
"""


def kernel_cases(M, N, rng):
    w = rng.random(N + 1)
    Y = rng.random((N + 1, M))
    lower, upper = -rng.random(M - 1), -rng.random(M - 1)
    diag = 4.0 + rng.random(M)
    rhs = rng.random(M)
    dmean = 1.0 + rng.random(M + 1)
    load = rng.random(M)
    Q = 40
    decay, inject = rng.random(Q), rng.random(Q)
    xi = np.array([0.2113248654051871, 0.7886751345948129])
    wq = np.array([0.5, 0.5])
    d2 = 1.0 + rng.random((M + 1, 2))
    f2 = rng.random((M + 1, 2))

    def fresh(mod):
        Z = np.zeros((Q, M))
        tail = np.zeros(M)
        R = rng.random((5, M))
        y = rng.random(M)
        uq = np.empty((M + 1, 2))
        dm, ld = np.empty(M + 1), np.empty(M)
        Yw = Y.copy()
        return {
            "thomas": lambda: mod.thomas(lower, diag, upper, rhs),
            "conv_history": lambda: mod.conv_history(w, Y, N),
            "soe_advance": lambda: mod.soe_advance(Z, decay, inject, rhs, tail),
            "solve_cq_system": lambda: mod.solve_cq_system(3.0, 0.01, dmean, load, rhs),
            "gauss_interp": lambda: mod.gauss_interp(rhs, xi, uq),
            "reduce_elements": lambda: mod.reduce_elements(d2, f2, wq, xi, 0.01, dm, ld),
            "direct_step": lambda: mod.direct_step(w, Yw, N, 0.01, dmean, load),
            "velocity_soe_step": lambda: mod.velocity_soe_step(
                3.0, 0.01, 0.002, dmean, load, y, w[1:6], R, Z, decay, inject, tail, True),
        }

    return fresh


def best_of(fn, reps):
    number = max(1, int(0.02 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=reps)) / number


def whole_run(N, M, pure):
    env = dict(os.environ)
    env["CQSUBDIFF_PURE"] = "1" if pure else "0"
    res = subprocess.run([sys.executable, "-c", WHOLE_RUN, str(N), str(M)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=255)
    ap.add_argument("--N", type=int, default=512)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"kernel timings, M={args.M}, history length N={args.N} (best of {args.reps})")
    print(f"{'kernel':<20}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    cases = kernel_cases(args.M, args.N, np.random.default_rng(0))
    pyk = cases(py)
    cyk = cases(cy) if cy is not None else {}
    for name, fn in pyk.items():
        tp = best_of(fn, args.reps) * 1e6
        if name in cyk:
            tc = best_of(cyk[name], args.reps) * 1e6
            print(f"{name:<20}{tp:>14.1f}{tc:>14.1f}{tp / tc:>10.1f}")
        else:
            print(f"{name:<20}{tp:>14.1f}{'n/a':>14}{'':>10}")

    print(f"\nwhole porous-medium run, alpha=0.5, N={args.N}, M={args.M}")
    print(f"{'backend':<10}{'naive [s]':>12}{'fast [s]':>12}{'naive/fast':>12}")
    for pure in (False, True):
        r = whole_run(args.N, args.M, pure)
        print(f"{r['backend']:<10}{r['naive']:>12.3f}{r['fast']:>12.3f}{r['naive'] / r['fast']:>12.2f}")


if __name__ == "__main__":
    main()
