"""Compare the compiled kernels with the pure-Python fallback.

Run ``python3 benchmarks/bench_kernels.py [--n 500 1000 2000] [--repeat 3]``.
Each kernel is timed on the same random point set with both backends and
the outputs are checked for equality before the timings are reported.
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from verigeo import _kernels_py
from verigeo.veracity import default_delta

try:
    from verigeo import _kernels
except ImportError:  # extension not built
    _kernels = None


def _best_of(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(n, seed=0):
    rng = np.random.default_rng(seed)
    side = math.sqrt(n / 5.0)
    coords = rng.uniform(0.0, side, size=(n, 2))
    values = rng.normal(size=n)
    delta = default_delta(coords)
    edges = np.linspace(0.0, side / 2.0, 16)
    return coords, values, delta, edges


def run(sizes, repeat):
    rows = []
    for n in sizes:
        coords, values, delta, edges = _cases(n)
        for name in ("square_neighbors", "neighborhood_summaries", "pair_bins"):
            timings = {}
            outputs = {}
            for label, mod in (("python", _kernels_py), ("cython", _kernels)):
                if mod is None:
                    continue
                if name == "square_neighbors":
                    fn = lambda m=mod: m.square_neighbors(coords, delta, True)
                elif name == "neighborhood_summaries":
                    indptr, indices = mod.square_neighbors(coords, delta, True)
                    fn = lambda m=mod, p=indptr, i=indices: m.neighborhood_summaries(
                        values, p, i, _kernels_py.MEDIAN_IQR)
                else:
                    fn = lambda m=mod: m.pair_bins(coords, values, edges)
                timings[label], outputs[label] = _best_of(fn, repeat)
            if len(outputs) == 2:
                for a, b in zip(outputs["python"], outputs["cython"]):
                    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
            rows.append((n, name, timings.get("python"), timings.get("cython")))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels unavailable; timing the fallback only")
    print(f"{'n':>6}  {'kernel':<24}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for n, name, tp, tc in run(args.n, args.repeat):
        sp = f"{tp / tc:8.1f}x" if tc else "      -"
        tcs = f"{tc:10.4f}" if tc else "         -"
        print(f"{n:>6}  {name:<24}{tp:10.4f}{tcs}{sp}")


if __name__ == "__main__":
    main()
