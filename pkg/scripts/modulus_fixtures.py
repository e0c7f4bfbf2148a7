"""Discrete 2-modulus of the closed-form fixtures across mesh levels, with both solvers where affordable."""

import argparse
import time

from quasisphere.modulus import MODULUS_FIXTURES, fixture_family, mod2


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--fixtures", nargs="+", default=sorted(MODULUS_FIXTURES))
    ap.add_argument("--method", choices=["auto", "paths", "potential"], default="auto")
    args = ap.parse_args()

    print(f"{'fixture':>10} {'m':>3} {'value':>9} {'exact':>9} {'rel err':>8} {'gap':>9} {'time':>7}")
    for name in args.fixtures:
        exact = MODULUS_FIXTURES[name][0]
        for m in args.levels:
            t0 = time.perf_counter()
            r = mod2(fixture_family(name, m), method=args.method)
            print(
                f"{name:>10} {m:3d} {r.value:9.5f} {exact:9.5f} {r.value / exact - 1:+8.4f} "
                f"{r.upper - r.lower:9.2e} {time.perf_counter() - t0:6.1f}s",
                flush=True,
            )


if __name__ == "__main__":
    main()
