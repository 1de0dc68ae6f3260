"""Compare the compiled and pure-Python kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times label-rate evaluation, RK4 integration and SSA simulation on the
bundled fixtures with each backend and prints the best time per case and
the speed-up.  Run after ``pip install -e . --no-build-isolation`` so the
extension is built.
"""

import argparse
import timeit

import numpy as np

from pepafluid import bundled_model, numeric_model
from pepafluid import kernels
from pepafluid.fluid import build_fluid_system, integrate
from pepafluid.simulation import gillespie_trace


def cases(nm2, fs2, nm1):
    x = nm2.x0.astype(float)
    args = kernels.rate_args(nm2.tables)
    return [
        ("label_rates model2 x1000",
         lambda b: [kernels.backend(b).label_rates(x, *args) for _ in range(1000)]),
        ("rk4 model2 t=20", lambda b: integrate(fs2, nm2.x0, 20.0, backend=b)),
        ("ssa model1 n=100 t=10",
         lambda b: gillespie_trace(nm1, None, 10.0, seed=1, level=100, backend=b)),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args(argv)
    try:
        kernels.backend("cython")
        backends = ["cython", "python"]
    except ImportError:
        backends = ["python"]
        print("compiled extension not available; timing the Python kernels only")
    nm2 = numeric_model(bundled_model("model2"))
    nm1 = numeric_model(bundled_model("model1"))
    fs2 = build_fluid_system(nm2)
    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + "     speed-up")
    for name, fn in cases(nm2, fs2, nm1):
        best = {}
        for b in backends:
            fn(b)  # warm up
            best[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=a.repeat))
        row = f"{name:<28}" + "".join(f"{best[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {best['python'] / best['cython']:10.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
