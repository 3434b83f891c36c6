"""Timing and accuracy of the interior-point solver on planted instances.

    python3 scripts/sdp_benchmark.py [count]
"""
import sys
import time

import numpy as np

from sosmult.sdp import planted_instance, solve_sdp


def main(argv):
    count = int(argv[0]) if argv else 10
    rng = np.random.default_rng(0)
    print(f"{'m':>3} {'k':>4} {'status':>10} {'iters':>5} {'gap':>9} {'residual':>9} {'seconds':>8}")
    for _ in range(count):
        m = int(rng.integers(3, 21))
        k = int(rng.integers(1, m * (m + 1) // 2))
        problem, _ = planted_instance(m, k, rng)
        start = time.perf_counter()
        sol = solve_sdp(problem)
        elapsed = time.perf_counter() - start
        print(f"{m:>3} {k:>4} {sol.status.value:>10} {sol.iterations:>5} {sol.gap:>9.2e} "
              f"{sol.primal_residual:>9.2e} {elapsed:>8.3f}")


if __name__ == "__main__":
    main(sys.argv[1:])
