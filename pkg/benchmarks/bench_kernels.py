"""Compare the two prox-kernel backends.

The componentwise proximal solve dominates the sparsifying phase, so it
carries both a numba-compiled scalar loop and a masked numpy fallback
(selected at import time via QUTSPARSE_BACKEND).  This script times the
two implementations head-to-head on growing batch sizes, checks they
agree, and optionally times a full training run under each backend in
subprocesses so the env flag is exercised for real.

Usage: python3 benchmarks/bench_kernels.py [--sizes 1000,100000] [--no-fit]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

try:
    from qutsparse import _kernels
    from qutsparse.penalty import solve_threshold
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))
    from qutsparse import _kernels
    from qutsparse.penalty import solve_threshold

FIT_SNIPPET = """
import time
import numpy as np
from qutsparse import BACKEND
from qutsparse.losses import TaskSpec
from qutsparse.network import Architecture
from qutsparse.trainer import TrainConfig, fit

rng = np.random.default_rng(0)
n, p = 300, 80
X = rng.normal(size=(n, p))
Y = (2.0 * X[:, 3] - 1.5 * X[:, 11] + rng.normal(size=n)).reshape(-1, 1)
Xs = (X - X.mean(axis=0)) / X.std(axis=0)
t0 = time.perf_counter()
res = fit(Xs, Y, TaskSpec("regression", 1), Architecture(p, (20,), 1, "relu"),
          TrainConfig(seed=0, n_mc=500))
wall = time.perf_counter() - t0
print("%s %.3f %s" % (BACKEND, wall, ",".join(str(j) for j in res.selected)))
"""


def best_of(fn, args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel(sizes):
    lam, nu = 1.0, 0.1
    spec = solve_threshold(lam, nu)
    rng = np.random.default_rng(0)
    impls = [("numpy", _kernels._prox_magnitudes_np)]
    if _kernels.HAS_NUMBA:
        impls.append(("numba", _kernels._prox_magnitudes_nb))
    else:
        print("numba unavailable; timing the numpy backend only")

    header = "%10s" % "size" + "".join("%14s" % ("%s [ms]" % n) for n, _ in impls)
    if len(impls) == 2:
        header += "%10s %12s" % ("speedup", "max |diff|")
    print(header)
    for size in sizes:
        z = np.abs(rng.normal(0.0, 2.0, size=size))
        args = (z, lam, nu, spec.threshold, spec.jump)
        for _, fn in impls:
            fn(*args)  # warm up (jit compile, allocator)
        times = [best_of(fn, args) for _, fn in impls]
        line = "%10d" % size + "".join("%14.3f" % (t * 1e3) for t in times)
        if len(impls) == 2:
            diff = float(np.max(np.abs(impls[0][1](*args) - impls[1][1](*args))))
            line += "%10.1fx %12.3g" % (times[0] / times[1], diff)
        print(line)


def bench_fit():
    print("\nfull training run (subprocess per backend):")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, QUTSPARSE_BACKEND=backend)
        src_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src")
        env["PYTHONPATH"] = src_dir + os.pathsep + env.get("PYTHONPATH", "")
        out = subprocess.run(
            [sys.executable, "-c", FIT_SNIPPET], env=env,
            capture_output=True, text=True,
        )
        if out.returncode != 0:
            print("  %s: failed\n%s" % (backend, out.stderr.strip()))
            continue
        used, wall, selected = out.stdout.split()
        print("  backend=%-6s wall=%ss selected=[%s]" % (used, wall, selected))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,10000,100000,1000000",
                    help="comma-separated batch sizes")
    ap.add_argument("--no-fit", action="store_true",
                    help="skip the end-to-end training comparison")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    print("import-time backend: %s" % _kernels.BACKEND)
    bench_kernel(sizes)
    if not args.no_fit:
        bench_fit()


if __name__ == "__main__":
    main()
