"""Compare the compiled and pure-Python kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--n 500] [--reps 2000] [--json out.json]

Each workload is timed on both backends with the same seeds, and the outputs
are checked for bit-identity before any timing is reported.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from urnphylo import rng
from urnphylo._backend import BACKEND
from urnphylo.harness import CampaignConfig, simulate_counts
from urnphylo.urn import PDA_MATRIX, YHK_MATRIX, UrnState, run


def _best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_growth(model, n, reps, backend, repeat):
    cfg = CampaignConfig(model=model, n=n, replicates=reps, base_seed=1, chunk=reps,
                         backend=backend)
    secs, counts = _best_of(lambda: simulate_counts(cfg), repeat)
    return secs, counts, reps * (n - 2)


def bench_urn(model, steps, backend, repeat):
    R, s0 = (YHK_MATRIX, (0, 2, 0, 0)) if model == "yhk" else (PDA_MATRIX, (0, 2, 0, 0, 1, 0))
    secs, traj = _best_of(
        lambda: run(UrnState(s0), R, steps, rng.make_stream(1), backend=backend), repeat)
    return secs, traj.counts, steps


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=500, help="leaves per grown tree")
    p.add_argument("--reps", type=int, default=2000, help="trees per compiled run")
    p.add_argument("--py-reps", type=int, default=40, help="trees per pure-Python run")
    p.add_argument("--urn-steps", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json")
    args = p.parse_args(argv)
    if BACKEND != "cython":
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    rows = []
    for model in ("yhk", "pda"):
        # identical outputs on a shared prefix of replicates
        _, c_py, _ = bench_growth(model, args.n, args.py_reps, "python", 1)
        _, c_cy, _ = bench_growth(model, args.n, args.py_reps, "cython", 1)
        assert np.array_equal(c_py, c_cy), "backends disagree"
        t_py, _, steps_py = bench_growth(model, args.n, args.py_reps, "python", args.repeat)
        t_cy, _, steps_cy = bench_growth(model, args.n, args.reps, "cython", args.repeat)
        rows.append({"workload": f"{model} tree growth n={args.n}",
                     "python_us_per_step": 1e6 * t_py / steps_py,
                     "cython_us_per_step": 1e6 * t_cy / steps_cy})

        u_steps = args.urn_steps
        t_py, a, _ = bench_urn(model, u_steps // 20, "python", args.repeat)
        t_cy, b, _ = bench_urn(model, u_steps, "cython", args.repeat)
        assert np.array_equal(a, b[: a.shape[0]]), "backends disagree"
        rows.append({"workload": f"{model} urn draws",
                     "python_us_per_step": 1e6 * t_py / (u_steps // 20),
                     "cython_us_per_step": 1e6 * t_cy / u_steps})

    for r in rows:
        r["speedup"] = r["python_us_per_step"] / r["cython_us_per_step"]
    width = max(len(r["workload"]) for r in rows)
    print(f"{'workload':<{width}}  {'python us/step':>15}  {'cython us/step':>15}  {'speedup':>8}")
    for r in rows:
        print(f"{r['workload']:<{width}}  {r['python_us_per_step']:>15.3f}  "
              f"{r['cython_us_per_step']:>15.3f}  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
