"""Compare the numba and pure-numpy kernel paths.

The kernel module picks its path at import time from NARPARSE_NO_NUMBA, so
this script re-executes itself once with the flag set and merges the two
timing tables.

Usage: python benchmarks/bench_kernels.py [--rows N] [--cols N] [--iters N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench_current_path(rows, cols, iters):
    from narparse import kernels

    rng = np.random.default_rng(0)
    x = rng.standard_normal((rows, cols)).astype(np.float32)
    dy = rng.standard_normal((rows, cols)).astype(np.float32)
    gain = np.ones(cols, np.float32)
    bias = np.zeros(cols, np.float32)
    p = kernels.softmax(x)
    y = kernels.log_softmax(x)
    _, xhat, rstd = kernels.layernorm_forward(x, gain, bias)
    param = x.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)

    cases = {
        "softmax": lambda: kernels.softmax(x),
        "log_softmax": lambda: kernels.log_softmax(x),
        "softmax_backward": lambda: kernels.softmax_backward(p, dy),
        "log_softmax_backward": lambda: kernels.log_softmax_backward(y, dy),
        "layernorm_forward": lambda: kernels.layernorm_forward(x, gain, bias),
        "layernorm_backward": lambda: kernels.layernorm_backward(
            dy, xhat, rstd, gain),
        "adam_step": lambda: kernels.adam_step(param, dy, m, v, 1e-3, 0.9,
                                               0.999, 1e-8, 1),
    }
    results = {}
    for name, fn in cases.items():
        fn()  # warm-up (JIT compilation on the numba path)
        t0 = time.perf_counter()
        for _ in range(iters):
            fn()
        results[name] = (time.perf_counter() - t0) / iters
    return {"path": "numba" if kernels.USE_NUMBA else "numpy",
            "timings": results}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--cols", type=int, default=256)
    parser.add_argument("--iters", type=int, default=50)
    parser.add_argument("--emit-json", action="store_true",
                        help="internal: print one path's results as JSON")
    args = parser.parse_args()

    if args.emit_json:
        print(json.dumps(bench_current_path(args.rows, args.cols, args.iters)))
        return

    tables = {}
    for flag in ("0", "1"):
        env = dict(os.environ, NARPARSE_NO_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, __file__, "--emit-json", "--rows",
             str(args.rows), "--cols", str(args.cols), "--iters",
             str(args.iters)],
            env=env, capture_output=True, text=True, check=True)
        result = json.loads(out.stdout.strip().splitlines()[-1])
        tables[result["path"]] = result["timings"]

    print(f"shape ({args.rows}, {args.cols}), {args.iters} iterations, "
          "mean seconds per call\n")
    width = max(len(k) for k in tables.get("numpy", {}))
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name in tables["numpy"]:
        np_t = tables["numpy"][name]
        nb_t = tables.get("numba", {}).get(name)
        if nb_t:
            print(f"{name:<{width}}  {np_t:>10.2e}  {nb_t:>10.2e}  "
                  f"{np_t / nb_t:>7.2f}x")
        else:
            print(f"{name:<{width}}  {np_t:>10.2e}  {'n/a':>10}  {'n/a':>8}")


if __name__ == "__main__":
    main()
