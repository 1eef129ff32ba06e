"""Compare the compiled path kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--paths 200000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from renewcap import kernels
from renewcap.model import ModelParams, TimeGrid
from renewcap.rng import RngStream


def bench(impl, keys, params, grid, scheme, store, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out = kernels.run_paths(keys, grid.M, params, grid.dt, scheme=scheme, threshold=1.58,
                                store=store, impl=impl)
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params, grid = ModelParams(), TimeGrid(1.0, 50)
    keys = RngStream(0).substream_keys(np.arange(args.paths))
    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    print(f"{args.paths} paths, M={grid.M}, best of {args.repeat}")
    print(f"{'scheme':<14}{'store':<7}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}"
          + f"{'max |diff|':>13}")
    for scheme in kernels.SCHEMES:
        for store in (False, True):
            times, outs = [], []
            for name in backends:
                t, out = bench(kernels.get_backend(name), keys, params, grid, scheme, store,
                               args.repeat)
                times.append(t)
                outs.append(out)
            row = f"{scheme:<14}{str(store):<7}" + "".join(f"{t:11.3f}s" for t in times)
            if len(times) == 2:
                diff = max(float(np.max(np.abs(outs[0][k] - outs[1][k]))) for k in outs[0])
                row += f"{times[0] / times[1]:9.1f}x{diff:13.1e}"
            print(row)


if __name__ == "__main__":
    main()
