"""Gluing a new metric onto a subset of a finite metric space.

Given (Y, d_Y), a subset S and a metric d_S <= d_Y on S, the glued metric is

    d~(x, y) = min( d_Y(x, y),  min_{u, v in S} d_Y(x, u) + d_S(u, v) + d_Y(v, y) ).

In the finite case the inner minimum is exact. It is evaluated as two
min-plus products, first A = d_Y[:, S] (+) d_S and then A (+) d_Y[S, :].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .finite_metric import BALL_TOL, FiniteMetric, InputError, check_metric


class GluePreconditionError(InputError):
    def __init__(self, msg, witness):
        super().__init__(msg)
        self.witness = witness


@dataclass
class GluedMetric:
    base: FiniteMetric
    subset: np.ndarray
    sub_metric: np.ndarray
    result: FiniteMetric
    # largest amount by which the raw formula undershot d_S on S x S
    on_S_rounding: float = 0.0

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "S": self.subset.tolist(),
            "d_S": self.sub_metric.tolist(),
            "result": self.result.to_json(),
        }


try:
    import numba
except ImportError:  # pragma: no cover - numpy fallback below
    numba = None


def _minplus_numpy(a: np.ndarray, b: np.ndarray, block: int = 64) -> np.ndarray:
    n, k = a.shape
    out = np.empty((n, b.shape[1]))
    if k <= block:
        for i0 in range(0, n, block):
            sl = slice(i0, i0 + block)
            out[sl] = (a[sl, :, None] + b[None, :, :]).min(axis=1)
        return out
    out.fill(np.inf)
    for kk in range(k):
        np.minimum(out, a[:, kk, None] + b[None, kk, :], out=out)
    return out


if numba is not None:

    @numba.njit(cache=True)
    def _minplus_kernel(a, b):  # pragma: no cover - compiled
        n, k = a.shape
        m = b.shape[1]
        out = np.full((n, m), np.inf)
        for i in range(n):
            o = out[i]
            for kk in range(k):
                aik = a[i, kk]
                bk = b[kk]
                for j in range(m):
                    v = aik + bk[j]
                    if v < o[j]:
                        o[j] = v
        return out


def _minplus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a (+) b)[i, j] = min_k a[i, k] + b[k, j]."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if numba is not None and a.size * b.shape[1] > 1_000_000:
        return _minplus_kernel(a, b)
    return _minplus_numpy(a, b)


def glue(base: FiniteMetric, S, d_S, tol: float = 1e-12) -> GluedMetric:
    S = np.asarray(list(S), dtype=int)
    d_S = np.asarray(d_S, dtype=float)
    if S.size == 0:
        raise InputError("gluing set S is empty")
    if np.unique(S).size != S.size:
        raise InputError("gluing set S has repeated points")
    if d_S.shape != (S.size, S.size):
        raise InputError(f"d_S has shape {d_S.shape}, expected ({S.size}, {S.size})")
    dY = base.dist
    over = d_S - dY[np.ix_(S, S)]
    if over.max() > tol:
        i, j = np.unravel_index(int(over.argmax()), over.shape)
        raise GluePreconditionError(
            f"d_S exceeds d_Y at ({S[i]}, {S[j]}) by {over[i, j]:.3g}", (int(S[i]), int(S[j]))
        )
    A = _minplus(dY[:, S], d_S)
    through = _minplus(A, dY[S, :])
    dt = np.minimum(dY, through)
    dt = np.minimum(dt, dt.T)
    # the formula equals d_S on S x S exactly; rounding can only undershoot
    block = dt[np.ix_(S, S)]
    rounding = float(np.max(d_S - block)) if S.size else 0.0
    dt[np.ix_(S, S)] = d_S
    np.fill_diagonal(dt, 0.0)
    return GluedMetric(base, S, d_S.copy(), FiniteMetric(base.points, dt), max(rounding, 0.0))


def glue_from_json(obj) -> GluedMetric:
    base = FiniteMetric.from_json(obj["base"])
    sub = obj["subset"]
    return glue(base, sub["S"], sub["d_S"])


@dataclass
class GlueReport:
    ok: bool
    checks: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    lam: float = 1.0

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": self.checks, "witnesses": self.witnesses, "lambda": self.lam}


def verify_glue(g: GluedMetric, lam: float | None = None, tol: float = 1e-9) -> GlueReport:
    """Check the properties of a materialised glued metric.

    metric: metric axioms. agrees_on_S: equality with d_S on S x S.
    one_index_formula: for x outside S and y in S, d~(x, y) = min_u d_Y(x, u)
    + d_S(u, y). local_isometry: for each x with r = dist(x, S minus x) > 0,
    d~ = d_Y on pairs inside the d~-ball of radius r/3 about x, and that ball
    equals the d_Y-ball. bilipschitz: with lam = max d_Y/d_S over S pairs
    (or the given value), lam^-1 d_Y <= d~ <= d_Y everywhere. The purely
    topological consequences are covered by local_isometry at sample
    resolution.
    """
    dY = g.base.dist
    dt = g.result.dist
    S = g.subset
    dS = g.sub_metric
    n = dY.shape[0]
    checks, wit = {}, {}

    mc = check_metric(g.result, tol)
    checks["metric"] = mc.ok
    if not mc.ok:
        wit["metric"] = [mc.axiom, list(mc.witness)]

    dev = np.abs(dt[np.ix_(S, S)] - dS)
    checks["agrees_on_S"] = bool(dev.max() <= tol) and g.on_S_rounding <= tol
    if not checks["agrees_on_S"]:
        i, j = np.unravel_index(int(dev.argmax()), dev.shape)
        wit["agrees_on_S"] = [int(S[i]), int(S[j])]
    outside = np.setdiff1d(np.arange(n), S)
    if outside.size:
        one_index = _minplus(dY[np.ix_(outside, S)], dS)
        dev2 = np.abs(dt[np.ix_(outside, S)] - one_index)
        checks["one_index_formula"] = bool(dev2.max() <= tol)
        if not checks["one_index_formula"]:
            i, j = np.unravel_index(int(dev2.argmax()), dev2.shape)
            wit["one_index_formula"] = [int(outside[i]), int(S[j])]
    else:
        checks["one_index_formula"] = True

    in_S = np.zeros(n, dtype=bool)
    in_S[S] = True
    ok3 = True
    for x in range(n):
        others = in_S.copy()
        others[x] = False
        if not others.any():
            continue
        r = dt[x, others].min()
        if r <= 0:
            continue
        ball = np.flatnonzero(dt[x] < r / 3.0)
        block = np.abs(dt[np.ix_(ball, ball)] - dY[np.ix_(ball, ball)])
        if block.max() > tol:
            i, j = np.unravel_index(int(block.argmax()), block.shape)
            ok3 = False
            wit["local_isometry"] = [int(x), int(ball[i]), int(ball[j])]
            break
        # d~-ball and d_Y-ball of radius r/3 coincide
        if not np.array_equal(ball, np.flatnonzero(dY[x] < r / 3.0)):
            ok3 = False
            wit["local_isometry"] = [int(x)]
            break
    checks["local_isometry"] = ok3

    if lam is None:
        sub = dY[np.ix_(S, S)]
        mask = ~np.eye(S.size, dtype=bool)
        lam = float((sub[mask] / dS[mask]).max()) if mask.any() else 1.0
        lam = max(lam, 1.0)
    low = dY / lam - dt
    high = dt - dY
    checks["bilipschitz"] = bool(low.max() <= tol and high.max() <= tol)
    if not checks["bilipschitz"]:
        i, j = np.unravel_index(int(np.maximum(low, high).argmax()), low.shape)
        wit["bilipschitz"] = [int(i), int(j)]
    return GlueReport(all(checks.values()), checks, wit, lam)


def random_glue_instance(rng: np.random.Generator, n_max: int = 40, s_max: int = 10):
    """Random Euclidean base space with a shrunk random metric on a subset.

    d_S is built as the shortest-path closure of c * d_Y with c in (0, 1]
    randomised per pair, which keeps d_S a metric and d_S <= d_Y.
    """
    from scipy.sparse.csgraph import shortest_path

    n = int(rng.integers(3, n_max + 1))
    dim = int(rng.integers(1, 4))
    base = FiniteMetric.from_coords(rng.random((n, dim)))
    k = int(rng.integers(1, min(s_max, n) + 1))
    S = np.sort(rng.choice(n, size=k, replace=False))
    sub = base.dist[np.ix_(S, S)]
    c = rng.uniform(0.05, 1.0, size=sub.shape)
    c = np.minimum(c, c.T)
    w = sub * c
    d_S = shortest_path(w, method="FW", directed=False) if k > 1 else np.zeros((1, 1))
    return base, S, d_S
