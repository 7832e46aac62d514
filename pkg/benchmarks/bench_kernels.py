"""Compiled kernels against the interpreted fallback.

Runs the timed workload in this process (numba, if available) and again in a
subprocess with ``GLUCOKIN_DISABLE_JIT=1``, checks both give identical
numbers, and prints per-call timings and the speedup.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def workload(repeat: int) -> dict:
    import numpy as np

    from glucokin import JIT_ENABLED
    from glucokin.protocols import reduced_scenario
    from glucokin.sensitivity import forward_sensitivities, sensitivity_grid
    from glucokin.solver import integrate

    sc = reduced_scenario(1)
    grid = sensitivity_grid(sc.schedule)

    def simulate():
        return integrate(None, sc.params, sc.x0, sc.schedule).glucose

    def sensitivities():
        return forward_sensitivities(sc.params, sc.x0, sc.schedule, grid)[1]

    out = {"jit": JIT_ENABLED}
    for name, fn in (("simulate", simulate), ("sensitivities", sensitivities)):
        value = fn()  # warm-up, includes compilation when jitted
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        out[name] = (time.perf_counter() - t0) / repeat
        out[name + "_checksum"] = float(np.sum(np.abs(value)))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        print(json.dumps(workload(args.repeat)))
        return 0

    fast = workload(args.repeat)
    env = dict(os.environ, GLUCOKIN_DISABLE_JIT="1")
    proc = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(max(1, args.repeat // 5))],
        env=env, capture_output=True, text=True, check=True,
    )
    slow = json.loads(proc.stdout.strip().splitlines()[-1])
    if slow["jit"]:
        print("warning: the fallback run still had the JIT enabled", file=sys.stderr)
    print(f"{'kernel':<15}{'jit [s]':>12}{'python [s]':>14}{'speedup':>10}  match")
    for name in ("simulate", "sensitivities"):
        a, b = fast[name], slow[name]
        same = fast[name + "_checksum"] == slow[name + "_checksum"]
        print(f"{name:<15}{a:>12.4g}{b:>14.4g}{b / a:>10.1f}  {'yes' if same else 'NO'}")
    if not fast["jit"]:
        print("numba unavailable: both columns ran interpreted")
    return 0


if __name__ == "__main__":
    sys.exit(main())
