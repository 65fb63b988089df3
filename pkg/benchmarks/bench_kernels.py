"""Numba versus pure-numpy timings for the hot kernels.

The backend is fixed at import time by ``COUETTE_EP_NUMBA``, so each
backend runs in its own subprocess.  The parent prints a table and checks
that both backends produce the same numbers.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--t-max 20]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads(t_max: float):
    from couette_ep import FrequencyGrid, ModeCoord, PlasmaParams, SymPair, integrate_mode, make_initial, propagate_grid
    from couette_ep.verify import compute_series

    params = PlasmaParams.all_ones("ion")
    modes = [ModeCoord(1, 0.0), ModeCoord(-2, 3.0), ModeCoord(3, -5.0), ModeCoord(8, 12.0)]
    t_grid = np.linspace(0.0, t_max, 101)
    grid = FrequencyGrid(k_max=2, xi_min=-8.0, xi_max=8.0, n_xi=65)
    spec = make_initial(grid, "gaussian_bump")

    def modes_job():
        out = [integrate_mode(SymPair(1.0, 0.5j), 0.3, m, params, t_grid, tol=1e-8) for m in modes]
        return [float(np.abs(tr.states[-1]).sum()) for tr in out], sum(tr.n_steps for tr in out)

    def grid_job():
        prop = propagate_grid(grid, params, np.linspace(0.0, t_max, 41))
        series = compute_series(spec, prop)
        return [float(series.pux[-1]), float(series.qu[-1]), float(series.r_norm[-1])], prop.n_steps

    return {"integrate_mode x4": modes_job, "grid propagate + series": grid_job}


def _child(repeat: int, t_max: float):
    from couette_ep._accel import backend_name

    jobs = _workloads(t_max)
    result = {"backend": backend_name(), "jobs": {}}
    for name, job in jobs.items():
        start = time.perf_counter()
        values, steps = job()  # first call includes jit compilation or cache load
        first = time.perf_counter() - start
        best = float("inf")
        for _ in range(repeat):
            start = time.perf_counter()
            job()
            best = min(best, time.perf_counter() - start)
        result["jobs"][name] = {"first": first, "best": best, "values": values, "steps": steps}
    print(json.dumps(result))


def _run_backend(flag: str, repeat: int, t_max: float) -> dict:
    env = dict(os.environ, COUETTE_EP_NUMBA=flag)
    cmd = [sys.executable, __file__, "--child", "--repeat", str(repeat), "--t-max", str(t_max)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--t-max", type=float, default=20.0)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.child:
        _child(args.repeat, args.t_max)
        return 0

    fast = _run_backend("1", args.repeat, args.t_max)
    slow = _run_backend("0", max(1, args.repeat // 3), args.t_max)
    print(f"{'workload':26s} {'steps':>8s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>9s} {'max diff':>10s}")
    worst = 0.0
    for name, f in fast["jobs"].items():
        s = slow["jobs"][name]
        diff = float(np.max(np.abs(np.subtract(f["values"], s["values"]))))
        worst = max(worst, diff)
        print(f"{name:26s} {f['steps']:8d} {f['best']:11.4f} {s['best']:11.4f} "
              f"{s['best'] / f['best']:8.1f}x {diff:10.1e}")
        print(f"{'':26s} {'':8s} (first call {f['first']:.2f}s with compile/cache load)")
    if any(fast["jobs"][n]["steps"] != slow["jobs"][n]["steps"] for n in fast["jobs"]):
        print("step counts differ between backends")
        return 1
    return 0 if worst <= 1e-12 else 1


if __name__ == "__main__":
    sys.exit(main())
