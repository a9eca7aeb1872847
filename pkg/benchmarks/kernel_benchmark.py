"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels (plain forward, forward with input gradient,
and the extended-graph VJP) across batch sizes and prints the speedup.

    python3 -m benchmarks.kernel_benchmark
"""
import time

import numpy as np

from zcbf import net
from zcbf.backends import numba_backend, numpy_backend

KERNELS = ("forward", "forward_grad", "vjp")


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(batch_sizes=(128, 512, 2048), dims=(6, 32, 32, 1), repeats=5):
    rng = np.random.default_rng(0)
    netobj = net.init(dims, seed=0)
    theta, d, wo, bo = netobj.theta, netobj._dims_arr, netobj._w_off, netobj._b_off
    rows = []
    for batch in batch_sizes:
        x = np.ascontiguousarray(rng.uniform(-2, 2, (batch, dims[0])))
        wbar = rng.normal(size=batch)
        gbar = rng.normal(size=(batch, dims[0]))
        calls = {
            "forward": (
                lambda: numpy_backend.forward(theta, d, wo, bo, x),
                lambda: numba_backend.forward(theta, d, wo, bo, x),
            ),
            "forward_grad": (
                lambda: numpy_backend.forward_grad(theta, d, wo, bo, x),
                lambda: numba_backend.forward_grad(theta, d, wo, bo, x),
            ),
            "vjp": (
                lambda: numpy_backend.vjp(theta, d, wo, bo, x, wbar, gbar),
                lambda: numba_backend.vjp(theta, d, wo, bo, x, wbar, gbar),
            ),
        }
        for name, (np_call, nb_call) in calls.items():
            nb_call()  # compile before timing
            rows.append({
                "kernel": name,
                "batch": batch,
                "numpy_s": _time(np_call, repeats),
                "numba_s": _time(nb_call, repeats),
            })
    return rows


def main():
    rows = run()
    print(f"{'kernel':<14}{'batch':>7}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for r in rows:
        print(
            f"{r['kernel']:<14}{r['batch']:>7}"
            f"{1e3 * r['numpy_s']:>12.3f}{1e3 * r['numba_s']:>12.3f}"
            f"{r['numpy_s'] / r['numba_s']:>9.2f}"
        )


if __name__ == "__main__":
    main()
