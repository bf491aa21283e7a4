"""Time the residual sweep and the full many-query prediction on both backends.

    python3 benchmarks/bench_backends.py --n 1000 --layers 30 --queries 441
"""
import argparse
import time

import numpy as np

from ictd import _backend
from ictd.kernels import KernelSpec, state_affinity
from ictd.mrp import get_preset
from ictd.rng import make_rng
from ictd.training import grid_points
from ictd.transformer import predict_raw


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--layers", type=int, default=30)
    parser.add_argument("--queries", type=int, default=441)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    dom = get_preset("appendixF")
    context = dom.sample_prompt(args.n, make_rng(0))
    side = max(2, int(round(args.queries ** 0.5)))
    _, _, queries = grid_points(side)
    kernel = KernelSpec.exponential(1.0)

    backends = [("numpy", False)] + ([("numba", True)] if _backend.HAVE_NUMBA else [])
    S = context.states
    tables = (state_affinity(kernel, S, S), state_affinity(kernel, S, context.next_states),
              state_affinity(kernel, S, queries), state_affinity(kernel, S, np.zeros((1, 2)))[:, 0],
              context.rewards, np.full(args.layers, -1.0 / args.n), np.full(args.layers, dom.gamma / args.n))
    for name, flag in backends:
        sweep = lambda: _backend.residual_sweep(*tables, use_numba=flag)
        sweep()
        print(f"{name:6s} sweep only:                       {best_of(sweep, args.repeats)[0] * 1e3:8.2f} ms")
    results = {}
    for name, flag in backends:
        run = lambda: predict_raw(context, queries, 1.0, args.layers, kernel, dom.gamma, use_numba=flag)
        run()  # warm-up, includes JIT compilation for numba
        results[name] = best_of(run, args.repeats)
        print(f"{name:6s} n={args.n} L={args.layers} queries={len(queries)}: {results[name][0] * 1e3:8.2f} ms")
    if len(results) == 2:
        (t_np, a), (t_nb, b) = results["numpy"], results["numba"]
        print(f"speedup {t_np / t_nb:.2f}x, max |numpy - numba| = {np.max(np.abs(a - b)):.2e}")
    else:
        print("numba not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
