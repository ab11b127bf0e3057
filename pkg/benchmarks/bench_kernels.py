"""Compare the compiled Euler-Maruyama kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Both backends must agree bit for bit; the script checks that before timing.
"""
import argparse
import timeit

import numpy as np

from enkflab import kernels


def cases(rng):
    l96 = rng.standard_normal((20, 40)) + 2.0, 0.05 * rng.standard_normal((20, 20, 40))
    l63 = rng.standard_normal((20, 3)) * 5.0, 0.05 * rng.standard_normal((20, 10, 3))
    return {
        "lorenz96 K=20 N=40 n_sub=20": ("em_lorenz96", l96, (8.0, 0.0025)),
        "lorenz63 K=20 n_sub=10": ("em_lorenz63", l63, (10.0, 28.0, 8.0 / 3.0, 0.005)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.BACKENDS:
        print("compiled backend not built; only the NumPy path is available")
    rng = np.random.default_rng(0)
    print(f"{'case':32s} {'backend':9s} {'us/call':>10s} {'speedup':>8s}")
    for label, (fn, (X, incr), extra) in cases(rng).items():
        outputs, times = {}, {}
        for name, mod in kernels.BACKENDS.items():
            f = getattr(mod, fn)
            outputs[name] = f(X, incr, *extra)[0]
            times[name] = timeit.timeit(lambda: f(X, incr, *extra), number=args.repeat) / args.repeat
        if len(outputs) == 2 and not np.array_equal(outputs["python"], outputs["compiled"]):
            raise SystemExit(f"{label}: backends disagree")
        for name, t in times.items():
            print(f"{label:32s} {name:9s} {t * 1e6:10.1f} {times['python'] / t:8.1f}x")


if __name__ == "__main__":
    main()
