"""Compare the compiled and numpy Jacobi kernels on square random matrices.

    python3 benchmarks/bench_jacobi.py --sizes 64,128,256,512 --repeat 3
"""

import argparse
import time

import numpy as np

from gradsub import _kernels, matcore


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="64,128,256")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    backends = [("python", _kernels.python_sweeps)]
    if _kernels.compiled_sweeps is not None:
        backends.append(("compiled", _kernels.compiled_sweeps))
    else:
        print("compiled kernel not built; timing the numpy fallback only")
    rng = np.random.default_rng(args.seed)
    saved = matcore._sweeps
    print(f"{'n':>6} " + " ".join(f"{name:>12}" for name, _ in backends) + "   speedup  max|ds|/s0")
    try:
        for n in (int(s) for s in args.sizes.split(",")):
            a = rng.standard_normal((n, n))
            times, values = [], []
            for _, kernel in backends:
                matcore._sweeps = kernel
                times.append(_time(lambda: matcore.singular_values(a), args.repeat))
                values.append(matcore.singular_values(a))
            speedup = f"{times[0] / times[-1]:9.1f}x" if len(times) > 1 else "         -"
            diff = np.max(np.abs(values[0] - values[-1])) / values[0][0]
            print(f"{n:>6} " + " ".join(f"{t:11.4f}s" for t in times) + f" {speedup}  {diff:.1e}")
    finally:
        matcore._sweeps = saved


if __name__ == "__main__":
    main()
