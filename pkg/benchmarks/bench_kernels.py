"""Compare the compiled kernels with the pure numpy fallback.

Run ``python3 benchmarks/bench_kernels.py [--repeat N] [--json FILE]``.
Each kernel is timed on both backends with identical inputs; the table
reports the best of ``repeat`` wall-clock times and the speed-up.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from gammaruin import kernels
from gammaruin.mc_estimators import ruin_sweep
from gammaruin.variance_models import brownian_model


def _walks(rows: int, cols: int) -> np.ndarray:
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.normal(scale=cols ** -0.5, size=(rows, cols)), axis=1)
    x[:, 0] = 0.0
    return x - np.linspace(0.0, 1.0, cols)


def cases() -> dict:
    walks = _walks(2000, 4097)
    coarse = _walks(20_000, 129)
    streams = np.arange(4096)
    return {
        "normal_rows 4096x1024": lambda: kernels.normal_rows(1, kernels.DOMAIN_PATH, streams, count=1024),
        "uniform_rows 4096x1024": lambda: kernels.uniform_rows(1, kernels.DOMAIN_SELECT, streams, count=1024),
        "reflected_prefix_sup 2000x4097, 5 gammas": lambda: kernels.reflected_prefix_sup(
            walks, [0.1, 0.3, 0.5, 0.7, 0.9], [1024, 2048, 4096]),
        "reflected_passages 2000x4097": lambda: kernels.reflected_passages(walks, 0.5, 0.5),
        "bridge_screen 20000x129": lambda: kernels.bridge_screen(coarse, 1 / 128, 1.0, 9.0, 1.0, 0.5, 1.0, 127),
        "ruin_sweep bm 20000 paths, step 2^-12": lambda: ruin_sweep(
            brownian_model(), 1.0, [0.5], [1.5], [1.0], 2 ** -12, 20_000, 1),
    }


def best_time(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", default=None, help="also write the timings to this file")
    args = p.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for name, fn in cases().items():
        timing = {}
        for backend in ("cython", "python"):
            with kernels.use_backend(backend):
                timing[backend] = best_time(fn, args.repeat)
        rows.append({"kernel": name, **timing, "speedup": timing["python"] / timing["cython"]})
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'compiled s':>11}  {'numpy s':>9}  {'speed-up':>8}")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['cython']:>11.4f}  {r['python']:>9.4f}  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
