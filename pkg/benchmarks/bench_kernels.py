"""Compare the compiled tridiagonal kernels with the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The band
function timing runs in subprocesses with ``MAGSTEP_BACKEND`` set, because
the backend is chosen once at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from magstep import _kernels_py

try:
    from magstep import _kernels
except ImportError:
    _kernels = None


def _problem(n, seed=0):
    rng = np.random.default_rng(seed)
    d = 2.0 + rng.random(n)
    e = -np.ones(n - 1)
    return d, e, e**2, rng.random(n)


def time_kernels(n, repeat):
    d, e, e2, rhs = _problem(n)
    cases = {
        "sturm_count": lambda m: m.sturm_count(d, e2, 2.5),
        "bisect_eigenvalue": lambda m: m.bisect_eigenvalue(d, e2, 0, 0.0, 4.0, 1e-12),
        "tridiag_shift_solve": lambda m: m.tridiag_shift_solve(d, e, 0.1, rhs),
    }
    rows = []
    for name, fn in cases.items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=repeat))
        cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=repeat)) \
            if _kernels is not None else float("nan")
        rows.append((name, n, py, cy))
    return rows


BAND_SNIPPET = (
    "import timeit; from magstep import model1d, kernels; g = model1d.default_grid(); "
    "model1d.band_function(-0.5, -0.66, g); "
    "t = min(timeit.repeat(lambda: model1d.band_function(-0.5, -0.66, g), number=1, repeat={r})); "
    "print(kernels.BACKEND, t)"
)


def time_band_function(repeat):
    out = {}
    for backend in ("compiled", "python"):
        env = dict(os.environ, MAGSTEP_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", BAND_SNIPPET.format(r=repeat)], env=env,
                             capture_output=True, text=True, check=True)
        name, t = res.stdout.split()
        out[backend] = (name, float(t))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 4000])
    args = p.parse_args(argv)
    print(f"{'kernel':22s} {'n':>6s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>8s}")
    for n in args.sizes:
        for name, size, py, cy in time_kernels(n, args.repeat):
            print(f"{name:22s} {size:6d} {py:12.2e} {cy:12.2e} {py / cy:8.1f}")
    band = time_band_function(args.repeat)
    (_, tc), (_, tp) = band["compiled"], band["python"]
    print(f"band_function (a=-0.5): compiled backend={band['compiled'][0]} {tc:.3e}s, "
          f"python {tp:.3e}s, speedup {tp / tc:.1f}")


if __name__ == "__main__":
    main()
