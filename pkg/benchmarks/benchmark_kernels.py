#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

The package selects its backend at import time (numba when available,
numpy when SIDEBAND_STEER_NO_NUMBA=1); this script times both
implementations in one process so the speedups are directly comparable.

Usage: python benchmarks/benchmark_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from sideband_steer import _kernels
from sideband_steer import modal_planner as mp
from sideband_steer import operator_core as oc


def timeit(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_scan(s_span):
    # the order-8 frequency set: the hardest scan the acceptance suite runs
    w = np.sqrt(np.array([1.0, 4.0, 2.0, 3.0, 5.0, 6.0, 7.0]))
    cls_ptr = np.array([0, 2, 3, 4, 5, 6, 7], dtype=np.int64)
    args = (1.37, 2 * np.pi, w, cls_ptr, 1e-9, 0, s_span, -1, np.inf)
    rows = []
    t_np, out_np = timeit(_kernels.scan_decoupling_numpy, *args, repeat=3)
    rows.append(("decoupling scan", "numpy", t_np, s_span / t_np))
    if _kernels.scan_decoupling_numba is not None:
        _kernels.scan_decoupling_numba(*args[:5], 0, 10, -1, np.inf)  # compile
        t_nb, out_nb = timeit(_kernels.scan_decoupling_numba, *args, repeat=3)
        rows.append(("decoupling scan", "numba", t_nb, s_span / t_nb))
        assert out_np[1] == out_nb[1], "backends disagree on the best index"
    return rows


def bench_objective(n_evals):
    p = 3
    gens = mp.default_generator_ids(p)
    ops = [mp.build_generator_operator(g, p) for g in gens] * 4  # 80 segments
    ptr = np.cumsum([0] + [len(op.pj) for op in ops]).astype(np.int64)
    pj = np.concatenate([op.pj for op in ops])
    pk = np.concatenate([op.pk for op in ops])
    pc = np.concatenate([op.coeff for op in ops])
    pt = np.concatenate([op.kind for op in ops])
    rng = np.random.default_rng(0)
    thetas = rng.normal(0, 0.5, len(ops))
    phi0 = oc.random_state(4 * p, rng)
    target = oc.random_state(4 * p, rng)
    args = (thetas, phi0, target, ptr, pj, pk, pc, pt)

    def loop(fn):
        f = g = None
        for _ in range(n_evals):
            f, g = fn(*args)
        return f, g

    rows = []
    t_np, (f_np, _) = timeit(lambda: loop(_kernels.objective_grad_numpy), repeat=3)
    rows.append(("objective+gradient", "numpy", t_np, n_evals / t_np))
    if _kernels.objective_grad_numba is not None:
        _kernels.objective_grad_numba(*args)  # compile
        t_nb, (f_nb, _) = timeit(lambda: loop(_kernels.objective_grad_numba), repeat=3)
        rows.append(("objective+gradient", "numba", t_nb, n_evals / t_nb))
        assert abs(f_np - f_nb) < 1e-12
    return rows


def bench_rotations(n_apply):
    dim = 256
    pj, pk, pc, pt, _ = oc.pair_arrays("V1r", dim)
    rng = np.random.default_rng(1)
    state = oc.random_state(dim, rng)
    betas = rng.uniform(-1, 1, len(pj))

    def loop(fn):
        s = state.copy()
        for _ in range(n_apply):
            fn(s, pj, pk, betas, pt)
        return s

    rows = []
    t_np, _ = timeit(lambda: loop(_kernels.rotate_pairs_numpy), repeat=3)
    rows.append(("pair rotations", "numpy", t_np, n_apply / t_np))
    if _kernels.rotate_pairs_numba is not None:
        _kernels.rotate_pairs_numba(state.copy(), pj, pk, betas, pt)  # compile
        t_nb, _ = timeit(lambda: loop(_kernels.rotate_pairs_numba), repeat=3)
        rows.append(("pair rotations", "numba", t_nb, n_apply / t_nb))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()
    scale = 10 if args.quick else 1

    print(f"selected backend: {_kernels.backend_name()}")
    rows = []
    rows += bench_scan(20_000_000 // scale)
    rows += bench_objective(2_000 // scale)
    rows += bench_rotations(20_000 // scale)

    print(f"\n{'kernel':<22} {'backend':<8} {'time [s]':>10} {'throughput':>14}")
    print("-" * 58)
    speed = {}
    for name, backend, t, thr in rows:
        unit = "steps/s" if "scan" in name else "evals/s"
        print(f"{name:<22} {backend:<8} {t:>10.3f} {thr:>11.3g} {unit}")
        speed.setdefault(name, {})[backend] = t
    print()
    for name, d in speed.items():
        if "numba" in d:
            print(f"{name}: numba speedup x{d['numpy'] / d['numba']:.1f}")


if __name__ == "__main__":
    main()
