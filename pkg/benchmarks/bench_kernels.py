#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Two workloads dominate runtime: the Gillespie event loop (rate table rebuilt
every step) and the cyclic Jacobi eigensolver behind every feasibility
certificate. Run from anywhere after installing the package:

    python benchmarks/bench_kernels.py [--trials 20] [--eig-dim 240]
"""

import argparse
import time

import numpy as np

from malmit import kernels, topology, virus
from malmit.markov import sample_initial_masks, trial_rng


def bench_gillespie(lane, trials, net, model, grid):
    indptr, indices = net.csr()
    lam_tab = model.lam_table()
    compete = np.asarray(model.compete, np.int32)
    beta0 = np.full(net.n, 10.0)
    start = time.perf_counter()
    last = None
    for k in range(trials):
        rng = trial_rng(0, k)
        masks0 = sample_initial_masks(rng, net.n, [0.2, 0.2])
        last = kernels.run_trial(indptr, indices, lam_tab, model.mu, compete,
                                 masks0, beta0, 0.1, 4, 50.0, 0.01, 1e-3,
                                 grid, rng, lane=lane)
    return time.perf_counter() - start, last


def bench_jacobi(lane, dim, repeats):
    rng = np.random.default_rng(7)
    M = rng.standard_normal((dim, dim))
    M = M + M.T
    start = time.perf_counter()
    out = None
    for _ in range(repeats):
        out = kernels.jacobi_eigh(M, True, lane=lane)
    return time.perf_counter() - start, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--eig-dim", type=int, default=240)
    parser.add_argument("--eig-repeats", type=int, default=3)
    args = parser.parse_args()

    if not kernels.HAVE_EXT:
        print("compiled extension not built; only the py lane will run")
    lanes = ["ext", "py"] if kernels.HAVE_EXT else ["py"]

    net = topology.erdos_renyi(100, 0.2, 13)
    model = virus.coexisting([1.0, 2.0], mu=[2.0, 4.0])
    grid = np.linspace(0.0, 2.0, 41)

    print(f"gillespie: joint patch+filter law, n={net.n}, |E|={net.n_edges}, "
          f"{args.trials} trials, horizon 2.0")
    times = {}
    outputs = {}
    for lane in lanes:
        times[lane], outputs[lane] = bench_gillespie(lane, args.trials, net,
                                                     model, grid)
        rate = args.trials / times[lane]
        print(f"  {lane:>3}: {times[lane]:8.3f}s  ({rate:7.2f} trials/s)")
    if len(lanes) == 2:
        same = all(np.array_equal(a, b)
                   for a, b in zip(outputs["ext"], outputs["py"]))
        print(f"  speedup x{times['py'] / times['ext']:.1f}, "
              f"outputs bit-identical: {same}")

    print(f"jacobi eigensolver: dim {args.eig_dim}, "
          f"{args.eig_repeats} factorizations")
    for lane in lanes:
        t, out = bench_jacobi(lane, args.eig_dim, args.eig_repeats)
        print(f"  {lane:>3}: {t:8.3f}s  ({out[2]} sweeps)")
    if len(lanes) == 2:
        te, _ = bench_jacobi("ext", args.eig_dim, args.eig_repeats)
        tp, _ = bench_jacobi("py", args.eig_dim, args.eig_repeats)
        print(f"  speedup x{tp / te:.1f}")


if __name__ == "__main__":
    main()
