"""Sup-distance between consecutive snowsphere metrics on the coarser vertices, and the fitted constant C in dev_n <= C 3^-n."""

import argparse
import time

from quasisphere.constructions import interstage_deviation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-stage", type=int, default=2, help="largest n; compares stage n with n + 1")
    ap.add_argument("--mesh-level", type=int, default=4)
    ap.add_argument("--sources", type=int, default=40, help="sampled source rows from stage 2 on")
    args = ap.parse_args()

    print(f"{'n':>2} {'dev_n':>8} {'dev_n 3^n':>10} {'time':>7}")
    scaled = []
    for n in range(args.max_stage + 1):
        t0 = time.perf_counter()
        d = interstage_deviation(n, args.mesh_level, None if n < 2 else args.sources)
        scaled.append(d * 3**n)
        print(f"{n:>2} {d:8.4f} {scaled[-1]:10.4f} {time.perf_counter() - t0:6.1f}s", flush=True)
    print(f"fitted C = {max(scaled):.4f}")


if __name__ == "__main__":
    main()
