"""Compare the compiled kernels against the numpy fallback.

Times the operations behind one all-pairs similarity breakdown at the
production sizes (K patches of D dims) and prints per-pair timings for both
backends. Run as: python3 benchmarks/bench_kernels.py [--pairs N]
"""

import argparse
import time

import numpy as np

import rrfsim._core_py as core_py

try:
    import rrfsim._core as core_cy
except ImportError:
    core_cy = None


def breakdown_once(impl, a, b):
    cross = impl.pair_dot_matrix(a, b)
    self_a = impl.sum_all(impl.pair_dot_matrix(a, a))
    self_b = impl.sum_all(impl.pair_dot_matrix(b, b))
    return impl.sum_all(cross) / (self_a**0.5 * self_b**0.5)


def time_backend(impl, inputs, op):
    start = time.perf_counter()
    sink = 0.0
    for a, b in inputs:
        sink += op(impl, a, b)
    elapsed = time.perf_counter() - start
    return elapsed, sink


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=300, help="number of embedding pairs")
    parser.add_argument("--patches", type=int, default=33)
    parser.add_argument("--dim", type=int, default=512)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    inputs = [
        (
            rng.standard_normal((args.patches, args.dim)),
            rng.standard_normal((args.patches, args.dim)),
        )
        for _ in range(args.pairs)
    ]

    backends = [("python (numpy)", core_py)]
    if core_cy is not None:
        backends.append(("cython", core_cy))
    else:
        print("compiled kernels unavailable; timing the fallback only")

    # agreement check before timing anything
    a, b = inputs[0]
    reference = breakdown_once(core_py, a, b)
    for name, impl in backends:
        got = breakdown_once(impl, a, b)
        assert abs(got - reference) < 1e-9, f"{name} disagrees: {got} vs {reference}"

    ops = [
        ("allpairs breakdown", breakdown_once),
        ("local cosines", lambda impl, a, b: float(np.sum(impl.row_cosines(a, b)))),
    ]
    print(
        f"{args.pairs} pairs, K={args.patches}, D={args.dim} "
        f"(times are per pair)"
    )
    for op_name, op in ops:
        row = [f"{op_name:<20}"]
        timings = {}
        for name, impl in backends:
            elapsed, _ = time_backend(impl, inputs, op)
            timings[name] = elapsed
            row.append(f"{name}: {1e6 * elapsed / args.pairs:9.1f} us")
        if core_cy is not None:
            ratio = timings["python (numpy)"] / timings["cython"]
            row.append(f"speedup(cython/numpy): {ratio:5.2f}x")
        print("  ".join(row))


if __name__ == "__main__":
    main()
