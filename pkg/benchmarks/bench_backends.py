"""Wall-clock comparison of the pure-Python and compiled closed loops.

    python benchmarks/bench_backends.py [--repeat 3] [scenario ...]

Each scenario runs on both kernels; the script reports the best time of
``--repeat`` runs, the speedup, and whether the two traces are bit-identical.
"""
import argparse
import time

import numpy as np

from smithsafe import builtin, run_scenario
from smithsafe import _backend
from smithsafe.config import BUILTIN_SCENARIOS


def best_time(cfg, backend, repeat):
    best = float("inf")
    trace = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace = run_scenario(cfg, backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenarios", nargs="*", default=list(BUILTIN_SCENARIOS))
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _backend.core is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'scenario':<24}{'steps':>8}{'python s':>11}{'compiled s':>12}{'speedup':>9}  identical")
    for name in args.scenarios:
        cfg = builtin(name)
        t_py, tr_py = best_time(cfg, "python", args.repeat)
        t_c, tr_c = best_time(cfg, "compiled", args.repeat)
        same = np.array_equal(tr_py.data, tr_c.data, equal_nan=True)
        print(f"{name:<24}{cfg.n_steps:>8}{t_py:>11.3f}{t_c:>12.4f}{t_py / t_c:>8.0f}x  {same}")


if __name__ == "__main__":
    main()
