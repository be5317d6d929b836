"""Compiled vs NumPy Viterbi on receiver-sized trellises.

    python3 benchmarks/bench_kernels.py [--repeats 20]

Prints per-call times for both backends and checks they return the same path.
"""

import argparse
import timeit

import numpy as np

from deeprx import kernels
from deeprx.kernels import _viterbi_py

try:
    from deeprx.kernels import _viterbi_ext
except ImportError:  # extension not built
    _viterbi_ext = None

CASES = [  # (order, memory, steps)
    (2, 2, 2000),
    (2, 4, 2000),
    (2, 6, 2000),
    (4, 3, 2000),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"selected backend: {kernels.BACKEND}")
    if _viterbi_ext is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'M':>2} {'L':>2} {'B':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for order, memory, steps in CASES:
        met = rng.exponential(size=(steps, order**memory))
        t_py = min(timeit.repeat(lambda: _viterbi_py.viterbi_path(met, order, memory), number=1,
                                 repeat=args.repeats)) * 1e3
        if _viterbi_ext is None:
            print(f"{order:>2} {memory:>2} {steps:>6} {t_py:>10.3f} {'-':>10} {'-':>8}")
            continue
        t_ext = min(timeit.repeat(lambda: _viterbi_ext.viterbi_path(met, order, memory), number=1,
                                  repeat=args.repeats)) * 1e3
        same = np.array_equal(_viterbi_py.viterbi_path(met, order, memory),
                              _viterbi_ext.viterbi_path(met, order, memory))
        flag = "" if same else "  MISMATCH"
        print(f"{order:>2} {memory:>2} {steps:>6} {t_py:>10.3f} {t_ext:>10.3f} {t_py / t_ext:>7.1f}x{flag}")


if __name__ == "__main__":
    main()
