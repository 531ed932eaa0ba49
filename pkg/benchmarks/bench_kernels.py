"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--agents 3] [--seconds 600]

Each kernel is run on identical inputs with every available backend; the
outputs are checked for bitwise agreement before timings are reported.
"""
import argparse
import math
import sys
import timeit

import numpy as np

from collabhar._kernels import backends


def make_inputs(agents: int, seconds: float, rate: float = 50.0, seed: int = 0):
    rng = np.random.default_rng(seed)
    n = int(seconds * rate)
    t = np.arange(n) / rate
    ceff = 100.0 + 10.0 * (np.sin(2 * np.pi * 2.0 * t[None, :] + rng.uniform(0, 6, (agents, 1))) > 0)
    cluster = np.tile(np.arange(agents, dtype=np.int64)[:, None], (1, n))
    # agents 0 and 1 coupled for the middle third
    cluster[1, n // 3:2 * n // 3] = 0
    ceff[:2, n // 3:2 * n // 3] += 25.0

    codes = np.repeat(rng.integers(0, 6, n // 100 + 1), 100)[:n].astype(np.int64)
    valid = np.ones(n, dtype=np.uint8)
    window, step = int(5 * rate), int(rate)
    starts = np.arange(0, n - window + 1, step, dtype=np.int64)

    probas = rng.dirichlet(np.ones(6), len(starts))
    return {
        "propagate_potential": (ceff, cluster, 0.02, math.exp(-1 / (rate * 0.2)), 0.02),
        "window_majority": (codes, valid, starts, window),
        "soft_vote": (probas, 3),
    }


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.asarray(a).tobytes() == np.asarray(b).tobytes()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--agents", type=int, default=3)
    ap.add_argument("--seconds", type=float, default=600.0)
    args = ap.parse_args(argv)

    found = backends()
    if "cython" not in found:
        print("compiled backend not built; only the python fallback is available", file=sys.stderr)
    inputs = make_inputs(args.agents, args.seconds)

    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in found) + f"{'speedup':>10}")
    status = 0
    for kernel, kargs in inputs.items():
        results, times = {}, {}
        for name, mod in found.items():
            fn = getattr(mod, kernel)
            results[name] = fn(*kargs)
            times[name] = min(timeit.repeat(lambda: fn(*kargs), number=1, repeat=args.repeat))
        if len(results) > 1 and not same(results["python"], results["cython"]):
            print(f"{kernel}: backends disagree", file=sys.stderr)
            status = 1
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{kernel:<22}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in found) + f"{speedup:>9.1f}x")
    return status


if __name__ == "__main__":
    sys.exit(main())
