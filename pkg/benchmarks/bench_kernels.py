"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 50x25,200x100] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from sinkdiff import generate_point_cloud_instance
from sinkdiff.kernels import available_backends, get_backend


def solve_loop(impl, log_k, log_a, log_b, tol=1e-10, max_iter=100_000):
    # x_k - x_{k+1} is the log of the row-sum ratio r/a at x_k.
    x = np.zeros(log_k.shape[0])
    for k in range(max_iter):
        x_next = impl.lse_step(log_k, log_a, log_b, x)
        if np.max(np.abs(x - x_next)) <= tol:
            return k + 1
        x = x_next
    return max_iter


def parse_sizes(text):
    return [tuple(int(v) for v in s.split("x")) for s in text.split(",")]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=parse_sizes, default=parse_sizes("20x10,100x50,200x100"))
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = available_backends()
    print(f"backends: {', '.join(backends)}", flush=True)
    print(f"{'size':>9} {'kernel':>20} " + " ".join(f"{b + ' [ms]':>14}" for b in backends) + f" {'speedup':>8}", flush=True)
    for n, m in args.sizes:
        inst = generate_point_cloud_instance(n, m, seed=0, epsilon=args.epsilon)
        log_k = np.ascontiguousarray(inst.log_kernel)
        log_a, log_b = np.log(inst.a), np.log(inst.b)
        x = np.random.default_rng(0).normal(size=n)
        cases = {
            "lse_step": lambda impl: impl.lse_step(log_k, log_a, log_b, x),
            "lse_log_plan": lambda impl: impl.lse_log_plan(log_k, log_b, x),
            "solve(tol=1e-10)": lambda impl: solve_loop(impl, log_k, log_a, log_b),
        }
        if n * m <= 5000:
            cases["max_log_cross_ratio"] = lambda impl: impl.max_log_cross_ratio(log_k)
        for name, fn in cases.items():
            times = {}
            for b in backends:
                impl = get_backend(b)
                number = 1 if name.startswith(("solve", "max")) else 20
                best = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat))
                times[b] = 1e3 * best / number
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            cols = " ".join(f"{times[b]:>14.3f}" for b in backends)
            print(f"{f'{n}x{m}':>9} {name:>20} {cols} {speed:>7.1f}x", flush=True)


if __name__ == "__main__":
    main()
