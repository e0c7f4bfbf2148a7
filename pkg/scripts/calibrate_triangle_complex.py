"""Regenerate the frozen qc-certificate curve for the three-triangle complex.

For each tabulated side ratio R the script samples admissible boundary
lengths (d1, d2, d3) with max/min <= R, including degenerate and extreme
corners, records the largest certificate M and the smallest angle, and
prints the table. With --write the QC_BOUND tuple in constructions.py is
replaced by ceil10(margin * max M).
"""

import argparse
import math
import re
from pathlib import Path

import numpy as np

from quasisphere import constructions as C
from quasisphere.simplicial import qc_certificate


def corner_cases(R: float) -> list[tuple[float, float, float]]:
    out = [(1.0, 1.0, 1.0), (1.0, 1.0, 2.0), (1.0, R, R), (R, R, 1.0), (R, 1.0, R)]
    # flattest admissible shape at this ratio: d3 = d1 + d2 with d2 = d1 * (R - 1) when R >= 2
    if R >= 2:
        out += [(1.0, R - 1.0, R), (R - 1.0, 1.0, R)]
    return out


def sample(rng: np.random.Generator, R: float, n: int) -> list[tuple[float, float, float]]:
    out = []
    while len(out) < n:
        d = np.exp(rng.uniform(0.0, math.log(R), size=3))
        d /= d.min()
        s = np.sort(d)
        if s[2] > s[0] + s[1]:
            continue
        # push some samples onto the degenerate boundary
        if rng.random() < 0.1:
            i = int(np.argmax(d))
            d[i] = d.sum() - d[i]
            if d.max() / d.min() > R:
                continue
        out.append(tuple(float(x) for x in d))
    return out


def calibrate(n_per_bin: int, seed: int):
    rng = np.random.default_rng(seed)
    rows = []
    for R in C.CALIBRATION_RATIOS:
        triples = corner_cases(R) + (sample(rng, R, n_per_bin) if R > 1 else [])
        worst_M, worst_d, min_ang = 0.0, None, math.inf
        for d in triples:
            if max(d) / min(d) > R * (1 + 1e-12):
                continue
            K = C.triangle_complex(*d)
            M = qc_certificate(K.complex).M
            if M > worst_M:
                worst_M, worst_d = M, d
            min_ang = min(min_ang, C.min_angle(K.complex))
        rows.append((R, worst_M, worst_d, min_ang, C.min_angle_bound(R)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2000, help="random triples per ratio bin")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--margin", type=float, default=1.1)
    ap.add_argument("--write", action="store_true", help="freeze the new curve into constructions.py")
    args = ap.parse_args()

    rows = calibrate(args.samples, args.seed)
    bounds = []
    print(f"{'ratio':>6} {'max M':>10} {'bound':>8} {'min angle':>10} {'angle bound':>12}  worst triple")
    for R, M, d, ang, ang_lb in rows:
        b = math.ceil(10 * args.margin * M) / 10
        bounds.append(b)
        flag = "" if ang >= ang_lb else "  ANGLE BOUND VIOLATED"
        print(f"{R:6.1f} {M:10.4f} {b:8.1f} {ang:10.5f} {ang_lb:12.3e}  {tuple(round(x, 4) for x in d)}{flag}")
    # the curve must be nondecreasing in the ratio
    for k in range(1, len(bounds)):
        bounds[k] = max(bounds[k], bounds[k - 1])

    if args.write:
        path = Path(C.__file__)
        text = path.read_text()
        new = "QC_BOUND = (" + ", ".join(f"{b:.1f}" for b in bounds) + ")"
        text, n = re.subn(r"QC_BOUND = \([^)]*\)", new, text)
        if n != 1:
            raise SystemExit("QC_BOUND line not found")
        path.write_text(text)
        print(f"wrote {new} to {path}")


if __name__ == "__main__":
    main()
