"""Runtime scaling of one detection over duplicated Beta sequences.

Times ``detect`` at each prefix length and reports the least-squares fit of
seconds on n. Example::

    python3 scripts/run_bench.py --lengths 2000:20000:2000 --repeats 3
"""

import argparse

import numpy as np
from scipy import stats

from fmosum.cli import parse_range, run_bench
from fmosum.mosum import DetectConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", type=parse_range, default=parse_range("2000:20000:2000"))
    ap.add_argument("--bandwidth", "-G", type=int, default=80)
    ap.add_argument("--repeats", type=int, default=1, help="keep the fastest of this many runs per length")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    config = DetectConfig(args.bandwidth)
    runs = [run_bench(args.lengths, args.seed, config) for _ in range(args.repeats)]
    n = np.array([r[0] for r in runs[0]], dtype=float)
    sec = np.min([[r[1] for r in run] for run in runs], axis=0)
    print("n,seconds")
    for a, b in zip(n, sec):
        print(f"{int(a)},{b:.4f}")
    fit = stats.linregress(n, sec)
    print(f"# slope {fit.slope * 1e3:.4f} s per 1000 elements, R^2 {fit.rvalue**2:.4f}")


if __name__ == "__main__":
    main()
