#!/usr/bin/env python3
"""Benchmark the hot kernels under both backends (compiled extension vs
pure Python), and optionally a whole scenario run under each.

    python3 benchmarks/bench_kernels.py [--number 200000] [--scenario PATH]
"""

import argparse
import os
import subprocess
import sys
import time

from gamesync import _kernels_py

try:
    from gamesync import _kernels as compiled
except ImportError:
    compiled = None


CASES = {
    "rng_step": lambda k: _drive_rng(k),
    "predict": lambda k: k.predict(1.5, -2.0, 10.0, 3.0, 1000, 1250),
    "converge_blend": lambda k: k.converge_blend(0.0, 0.0, 1000, 200,
                                                 10.0, 5.0, 1.0, -1.0,
                                                 900, 1100),
    "ewma": lambda k: k.ewma(200.0, 280.0, 0.125),
    "dist": lambda k: k.dist(0.0, 0.0, 3.0, 4.0),
}


def _drive_rng(kernel):
    state = 0x123456789ABCDEF
    state, _ = kernel.rng_step(state)
    return state


def time_case(fn, kernel, number):
    start = time.perf_counter()
    for _ in range(number):
        fn(kernel)
    return (time.perf_counter() - start) / number * 1e9   # ns/call


def bench_kernels(number):
    print(f"{'kernel':<16} {'pure ns/call':>14} {'compiled ns/call':>18} {'speedup':>9}")
    for name, fn in CASES.items():
        pure_ns = time_case(fn, _kernels_py, number)
        if compiled is None:
            print(f"{name:<16} {pure_ns:>14.1f} {'(not built)':>18} {'-':>9}")
            continue
        compiled_ns = time_case(fn, compiled, number)
        print(f"{name:<16} {pure_ns:>14.1f} {compiled_ns:>18.1f} "
              f"{pure_ns / compiled_ns:>8.1f}x")


def bench_scenario(path):
    print(f"\nwhole-run comparison on {path}:")
    for tag, extra in (("compiled", {}), ("pure", {"GAMESYNC_PURE": "1"})):
        env = dict(os.environ, **extra)
        start = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "gamesync", "run", path],
                              capture_output=True, text=True, env=env)
        elapsed = time.perf_counter() - start
        if proc.returncode != 0:
            print(f"  {tag:<9} FAILED: {proc.stderr.strip()}")
            continue
        wall = next((line.split("=", 1)[1] for line in proc.stdout.splitlines()
                     if line.startswith("wall_time_s=")), "?")
        print(f"  {tag:<9} run wall_time_s={wall} (process total {elapsed:.2f}s)")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--number", type=int, default=200_000,
                        help="iterations per kernel")
    parser.add_argument("--scenario", default=None,
                        help="also time a full scenario run per backend")
    args = parser.parse_args()
    bench_kernels(args.number)
    if args.scenario:
        bench_scenario(args.scenario)


if __name__ == "__main__":
    main()
