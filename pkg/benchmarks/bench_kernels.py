"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 1000 4000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from metriccalc import kernels, space as sp


def best_of(fn, repeat):
    out = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out = min(out, time.perf_counter() - t0)
    return out


def cases(n, seed=0):
    rng = np.random.default_rng(seed)
    side = int(round(np.sqrt(n)))
    s = sp.grid(2, side)
    lad = sp.ScaleLadder.default(s)
    nb = s.neighbors(lad.top)
    v = np.ascontiguousarray(np.sin(5 * s.coords[:, 0]) + s.coords[:, 1] ** 2)
    radii = np.asarray(lad.radii)
    A = np.sort(rng.choice(s.n, size=max(2, s.n // 10), replace=False)).astype(np.int64)
    X = np.ascontiguousarray(s.coords)
    return {
        "scale_maxima": lambda k: k.scale_maxima(nb.indptr, nb.indices, nb.dists, v, radii),
        "max_slope_coords": lambda k: k.max_slope_coords(X, 1.0, v),
        "mcshane_coords": lambda k: k.mcshane_coords(X, 1.0, A, v[A], 10.0),
    }, s.n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; only the fallback is timed")
        cy = None
    print(f"{'kernel':<18}{'n':>7}{'python [s]':>13}{'cython [s]':>13}{'speedup':>9}")
    for n in args.sizes:
        fns, npts = cases(n)
        for name, fn in fns.items():
            tp = best_of(lambda: fn(py), args.repeat)
            if cy is None:
                print(f"{name:<18}{npts:>7}{tp:>13.4f}{'-':>13}{'-':>9}")
                continue
            tc = best_of(lambda: fn(cy), args.repeat)
            print(f"{name:<18}{npts:>7}{tp:>13.4f}{tc:>13.4f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
