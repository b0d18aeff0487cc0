"""Time the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each workload
is run through the public API with the kernel module swapped, and the two
results are checked for agreement before timings are printed.
"""

import argparse
import contextlib
import time

import numpy as np

from gsdion import _kernels_py, atom, stabilizer
from gsdion.atom import DepletionPulse, LevelSystem

try:
    from gsdion import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


@contextlib.contextmanager
def using(module):
    saved = atom.kernels, stabilizer.kernels
    atom.kernels = stabilizer.kernels = module
    try:
        yield
    finally:
        atom.kernels, stabilizer.kernels = saved


def depletion():
    return atom.lindblad_p0(LevelSystem(), DepletionPulse(100.0, 50e-9))


def trapezoid():
    pulse = DepletionPulse(20.0, 1e-6, envelope=atom.TRAPEZOID)
    return atom.lindblad_p0(LevelSystem(), pulse)


def loop():
    return stabilizer.simulate_loop(seed=0, duration=86400.0).rel_error


WORKLOADS = {
    "lindblad_rk4 (s=100, 50 ns)": depletion,
    "lindblad_rk4 (trapezoid, 1 us)": trapezoid,
    "pid_loop (one day at 2 Hz)": loop,
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if _kernels_c is None:
        print("compiled kernels not built; only the fallback is available")
    print(f"{'workload':34s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in WORKLOADS.items():
        with using(_kernels_py):
            t_py, ref = best_of(fn, args.repeat)
        if _kernels_c is None:
            print(f"{name:34s} {t_py:10.4f} {'-':>10s} {'-':>8s} {'-':>10s}")
            continue
        with using(_kernels_c):
            t_c, out = best_of(fn, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out) - np.asarray(ref))))
        print(f"{name:34s} {t_py:10.4f} {t_c:10.4f} {t_py / t_c:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
