"""Compare the compiled and numpy sampling kernels on one protocol workload.

Usage: python3 benchmarks/bench_kernels.py [--trials N] [--p P] [--N N] [--repeat R]
"""

import argparse
import time

import numpy as np

from mubqkd import kernels, protocol
from mubqkd.galois import field


def time_backend(name, config, channel, repeat):
    cfg = protocol.RunConfig(config.ctx, config.trials, seed=config.seed, kernel=name)
    best = float("inf")
    tally = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        tally = protocol.run_protocol(cfg, channel)
        best = min(best, time.perf_counter() - t0)
    return best, tally


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2_000_000)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--N", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    ctx = field(args.p, args.N)
    channel = protocol.ChannelModel.depolarizing_from_error(ctx.d, 0.05)
    config = protocol.RunConfig(ctx, args.trials, seed=1)
    print(f"field: {ctx!r}  trials: {args.trials}")
    results = {}
    for name in kernels.available_backends():
        secs, tally = time_backend(name, config, channel, args.repeat)
        results[name] = tally.counts
        print(f"{name:>7}: {secs:8.3f} s  {args.trials / secs / 1e6:7.2f} Mtrials/s")
    if len(results) == 2:
        same = np.array_equal(results["cython"], results["python"])
        print(f"identical counts: {same}")


if __name__ == "__main__":
    main()
