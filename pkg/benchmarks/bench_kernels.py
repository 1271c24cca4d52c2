"""Compiled vs numpy kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times the two hot loops (the NCC lag grid and the first-order tracker) on
inputs shaped like the ones the lag estimator and the simulator use, checks
that both backends agree, and prints one line per case.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from umikit import kernels


def cases(rng: np.random.Generator):
    # lag estimation: 10 s chirp at 100 Hz, 1 ms grid up to 400 ms
    t = np.arange(1000) / 100.0
    x = np.sin(2 * np.pi * (0.5 * t + 0.125 * t**2))
    y = np.interp(t - 0.137, t, x) + rng.normal(0, 0.02, t.size)
    lags = np.arange(0, 0.4005, 0.001)
    yield "ncc_lag_grid 1000x401", lambda b: kernels.ncc_lag_grid(t[:950], x[:950], t, y, lags, backend=b)

    # long recording: 60 s at 200 Hz, 2 ms grid up to 1 s
    t = np.arange(12000) / 200.0
    x = np.sin(2 * np.pi * (0.2 * t + 0.02 * t**2))
    y = np.roll(x, 30)
    lags = np.arange(0, 1.001, 0.002)
    yield "ncc_lag_grid 12000x501", lambda b: kernels.ncc_lag_grid(t[:11700], x[:11700], t, y, lags, backend=b)

    # simulator: 1 kHz tracker over a 4 s toss, position + width
    sp = rng.normal(size=(4000, 4)).cumsum(axis=0)
    yield "first_order_track 4000x4", lambda b: kernels.first_order_track(sp[0], sp, 0.001, 0.03, backend=b)

    sp = rng.normal(size=(100000, 3)).cumsum(axis=0)
    yield "first_order_track 100000x3", lambda b: kernels.first_order_track(sp[0], sp, 0.001, 0.03, backend=b)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write the timings here")
    a = p.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels unavailable (not built, or UMIKIT_PURE_PYTHON=1); timing numpy only", file=sys.stderr)
    rows = []
    for name, fn in cases(np.random.default_rng(0)):
        ref = fn("numpy")
        row = {"case": name}
        for b in backends:
            out = fn(b)
            if not np.allclose(out, ref, atol=1e-10):
                print(f"{name}: {b} disagrees with numpy", file=sys.stderr)
                return 1
            n = max(1, int(0.2 / max(timeit.timeit(lambda: fn(b), number=1), 1e-6)))
            row[b] = min(timeit.repeat(lambda: fn(b), number=n, repeat=a.repeat)) / n
        rows.append(row)
        line = f"{name:<28}" + "".join(f"  {b} {row[b] * 1e3:9.3f} ms" for b in backends)
        if "cython" in row:
            line += f"  speedup {row['numpy'] / row['cython']:6.1f}x"
        print(line)
    if a.json:
        with open(a.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
