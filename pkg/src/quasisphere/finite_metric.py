"""Finite metric spaces and the sampled geometric checkers.

Everything here works on a dense distance matrix. Point maps between two
finite spaces are integer index arrays: ``f[i]`` is the index in the target
of the image of source point ``i``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EXHAUSTIVE_TRIPLE_LIMIT = 300
BALL_TOL = 1e-9


class InputError(ValueError):
    """Malformed input (shape, NaN, non-bijective map, empty set ...)."""


@dataclass(frozen=True)
class FiniteMetric:
    points: tuple
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InputError(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InputError("distance matrix has non-finite entries")
        if len(self.points) != d.shape[0]:
            raise InputError("points and distance matrix disagree in size")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "points", tuple(self.points))

    @classmethod
    def from_matrix(cls, dist, points=None) -> "FiniteMetric":
        dist = np.asarray(dist, dtype=float)
        if points is None:
            points = range(dist.shape[0])
        return cls(tuple(points), dist)

    @classmethod
    def from_coords(cls, coords, points=None) -> "FiniteMetric":
        x = np.asarray(coords, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        diff = x[:, None, :] - x[None, :, :]
        return cls.from_matrix(np.sqrt((diff**2).sum(-1)), points)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def restrict(self, idx) -> "FiniteMetric":
        idx = np.asarray(idx, dtype=int)
        return FiniteMetric(tuple(self.points[i] for i in idx), self.dist[np.ix_(idx, idx)])

    def diam(self, subset=None) -> float:
        if subset is None:
            return float(self.dist.max()) if self.n else 0.0
        idx = np.asarray(list(subset), dtype=int)
        if idx.size == 0:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())

    def ball(self, center: int, radius: float, closed: bool = False) -> np.ndarray:
        row = self.dist[center]
        if closed:
            return np.flatnonzero(row <= radius + BALL_TOL)
        return np.flatnonzero(row < radius - BALL_TOL)

    # the same surface as MeshGraph, so approximations can sit on either host
    def distances_from(self, sources, limit: float = np.inf) -> dict:
        src = np.asarray(list(sources), dtype=int)
        row = self.dist[src].min(axis=0)
        hit = np.flatnonzero(row <= limit)
        return {int(i): float(row[i]) for i in hit}

    def to_json(self) -> dict:
        return {"points": list(self.points), "dist": self.dist.tolist()}

    @classmethod
    def from_json(cls, obj) -> "FiniteMetric":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(tuple(obj["points"]), np.asarray(obj["dist"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad FiniteMetric JSON: {exc}") from exc


@dataclass
class MetricCheck:
    ok: bool
    axiom: str | None = None
    witness: tuple = ()
    excess: float = 0.0


def check_metric(m: FiniteMetric | np.ndarray, tol: float = 1e-9) -> MetricCheck:
    """Scan the metric axioms and return the first violation found.

    Order of checks: zero diagonal, symmetry, positivity off the diagonal,
    triangle inequality. The triangle scan is vectorised one middle point at
    a time, so it is O(n^3) work but O(n^2) memory.
    """
    d = m.dist if isinstance(m, FiniteMetric) else np.asarray(m, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InputError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise InputError("distance matrix has NaN or infinite entries")
    n = d.shape[0]
    diag = np.abs(np.diag(d))
    if n and diag.max() > tol:
        i = int(diag.argmax())
        return MetricCheck(False, "identity", (i,), float(diag[i]))
    asym = np.abs(d - d.T)
    if n and asym.max() > tol:
        i, j = np.unravel_index(int(asym.argmax()), asym.shape)
        return MetricCheck(False, "symmetry", (int(i), int(j)), float(asym[i, j]))
    off = d + np.eye(n) * (tol + 1.0)
    if n > 1 and off.min() <= tol:
        i, j = np.unravel_index(int(off.argmin()), off.shape)
        return MetricCheck(False, "positivity", (int(i), int(j)), float(d[i, j]))
    for k in range(n):
        excess = d - (d[:, k, None] + d[None, k, :])
        if excess.max() > tol:
            i, j = np.unravel_index(int(excess.argmax()), excess.shape)
            return MetricCheck(False, "triangle", (int(i), int(k), int(j)), float(excess[i, j]))
    return MetricCheck(True)


def _as_map(f, n_src: int, n_dst: int, bijective: bool = True) -> np.ndarray:
    f = np.asarray(f, dtype=int)
    if f.shape != (n_src,):
        raise InputError(f"map has shape {f.shape}, expected ({n_src},)")
    if f.size and (f.min() < 0 or f.max() >= n_dst):
        raise InputError("map sends a point outside the target")
    if bijective and (n_src != n_dst or np.unique(f).size != n_src):
        raise InputError("map is not a bijection")
    return f


# ---------------------------------------------------------------------------
# quasisymmetric distortion


@dataclass
class DistortionProfile:
    """Monotone upper envelope t -> H(t) of observed three-point ratios.

    ``t`` and ``H`` are the breakpoints of a right-continuous step function:
    H(s) is the largest image ratio seen among triples whose source ratio is
    at most s. Both arrays are nondecreasing.
    """

    t: np.ndarray
    H: np.ndarray
    triple_budget: int
    seed: int
    exhaustive: bool = True
    n_triples: int = 0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.t, s, side="right") - 1
        out = np.where(k >= 0, self.H[np.clip(k, 0, None)], 0.0)
        return out if out.ndim else float(out)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.H.tolist()))

    def to_json(self) -> dict:
        return {
            "t": self.t.tolist(),
            "H": self.H.tolist(),
            "triple_budget": self.triple_budget,
            "seed": self.seed,
            "exhaustive": self.exhaustive,
            "n_triples": self.n_triples,
        }


def _envelope(t: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((-s, t))
    t, s = t[order], s[order]
    run = np.maximum.accumulate(s)
    # keep a breakpoint only where the running max strictly grows
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = run[1:] > run[:-1]
    return t[keep], run[keep]


def _merge_envelopes(a, b):
    if a is None:
        return b
    return _envelope(np.concatenate([a[0], b[0]]), np.concatenate([a[1], b[1]]))


def qs_profile(
    f,
    src: FiniteMetric,
    dst: FiniteMetric,
    budget: int = 200_000,
    seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_TRIPLE_LIMIT,
) -> DistortionProfile:
    """Empirical distortion function of the point bijection ``f``.

    Triples (x, y, z) with x != z are enumerated exhaustively when the space
    has at most ``exhaustive_limit`` points and sampled uniformly (seeded)
    otherwise. Triples with y == x contribute the pair (0, 0).
    """
    n = src.n
    if n < 3:
        raise InputError("need at least three points")
    f = _as_map(f, n, dst.n)
    ds = src.dist
    dt = dst.dist[np.ix_(f, f)]
    env = None
    count = 0
    if n <= exhaustive_limit:
        for x in range(n):
            mask = np.ones(n, dtype=bool)
            mask[x] = False
            den_s = ds[x, mask]
            den_t = dt[x, mask]
            t = ds[x][:, None] / den_s[None, :]
            s = dt[x][:, None] / den_t[None, :]
            env = _merge_envelopes(env, _envelope(t.ravel(), s.ravel()))
            count += t.size
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        x = rng.integers(0, n, budget)
        y = rng.integers(0, n, budget)
        z = rng.integers(0, n - 1, budget)
        z = z + (z >= x)  # uniform over z != x
        t = ds[x, y] / ds[x, z]
        s = dt[x, y] / dt[x, z]
        env = _envelope(t, s)
        count = budget
        exhaustive = False
    return DistortionProfile(env[0], env[1], budget, seed, exhaustive, count)


def bilip_constant(f, src: FiniteMetric, dst: FiniteMetric) -> float:
    """Smallest lambda with lambda^-1 d <= d' o f <= lambda d over all pairs."""
    n = src.n
    f = _as_map(f, n, dst.n)
    iu = np.triu_indices(n, 1)
    a = src.dist[iu]
    b = dst.dist[np.ix_(f, f)][iu]
    if np.any(a <= 0) or np.any(b <= 0):
        raise InputError("coincident distinct points")
    if a.size == 0:
        return 1.0
    return float(max((b / a).max(), (a / b).max()))


@dataclass
class DiamCheck:
    ok: bool
    ratio: float
    lower: float
    upper: float


def check_diam_inequality(
    f, src: FiniteMetric, dst: FiniteMetric, A, B, eta: Callable[[float], float], tol: float = 1e-12
) -> DiamCheck:
    """Two-sided diameter distortion bound for A subset of B under an eta-QS map."""
    f = _as_map(f, src.n, dst.n, bijective=False)
    A = list(A)
    B = list(B)
    if not set(A) <= set(B):
        raise InputError("A must be a subset of B")
    da, db = src.diam(A), src.diam(B)
    if da <= 0:
        raise InputError("diam(A) must be positive")
    fa = dst.diam(f[A])
    fb = dst.diam(f[B])
    ratio = fa / fb if fb > 0 else np.inf
    lower = 1.0 / (2.0 * eta(db / da))
    upper = eta(2.0 * da / db)
    ok = lower * (1 - tol) <= ratio <= upper * (1 + tol)
    return DiamCheck(bool(ok), float(ratio), float(lower), float(upper))


# ---------------------------------------------------------------------------
# Hausdorff distance and eps-isometries


def hausdorff_distance(E, F, m: FiniteMetric) -> float:
    E = np.asarray(list(E), dtype=int)
    F = np.asarray(list(F), dtype=int)
    if E.size == 0 or F.size == 0:
        raise InputError("Hausdorff distance of an empty set")
    block = m.dist[np.ix_(E, F)]
    return float(max(block.min(axis=1).max(), block.min(axis=0).max()))


@dataclass
class EpsIsometryCert:
    eps_distortion: float
    eps_density: float
    eps: float
    witness_pair: tuple = ()
    witness_far_point: int = -1

    @property
    def gh_bound(self) -> float:
        return 2.0 * self.eps

    def to_json(self) -> dict:
        return {
            "eps_distortion": self.eps_distortion,
            "eps_density": self.eps_density,
            "eps": self.eps,
            "gh_bound": self.gh_bound,
            "witness_pair": list(self.witness_pair),
            "witness_far_point": self.witness_far_point,
        }


def eps_isometry_cert(f, src: FiniteMetric, dst: FiniteMetric, tol: float = 1e-12, density_dist=None) -> EpsIsometryCert:
    """Distortion and density of the point map f: src -> dst.

    ``density_dist`` optionally gives, for every point of a larger target
    sample, its distance to the image of f; it replaces the density scan
    over ``dst`` when the full target is too big to hold as a matrix.
    """
    f = _as_map(f, src.n, dst.n, bijective=False)
    dev = np.abs(src.dist - dst.dist[np.ix_(f, f)])
    i, j = np.unravel_index(int(dev.argmax()), dev.shape)
    if density_dist is None:
        to_image = dst.dist[:, np.unique(f)].min(axis=1)
    else:
        to_image = np.asarray(density_dist, dtype=float)
    far = int(to_image.argmax())
    e_dist = float(dev[i, j])
    e_dens = float(to_image[far])
    return EpsIsometryCert(e_dist, e_dens, max(e_dist + tol, e_dens + tol), (int(i), int(j)), far)


# ---------------------------------------------------------------------------
# doubling, LLC, bounded turning


@dataclass
class Estimate:
    value: float
    witness: tuple = ()
    details: dict = field(default_factory=dict)


def _greedy_cover(m: FiniteMetric, members: np.ndarray, radius: float) -> int:
    left = members.copy()
    count = 0
    while left.size:
        c = left[0]
        count += 1
        left = left[m.dist[c, left] > radius + BALL_TOL]
    return count


def doubling_constant(m: FiniteMetric, radius_samples=None, centers=None) -> Estimate:
    """Greedy upper estimate of the doubling constant at sample resolution."""
    n = m.n
    if n == 1:
        return Estimate(1.0, (0, 0.0))
    if centers is None:
        centers = range(n)
    if radius_samples is None:
        pos = m.dist[m.dist > 0]
        lo, hi = pos.min(), pos.max()
        radius_samples = np.geomspace(lo, hi, 12)
    best = Estimate(1.0)
    for c in centers:
        for R in radius_samples:
            members = np.flatnonzero(m.dist[c] <= R + BALL_TOL)
            k = _greedy_cover(m, members, R / 2.0)
            if k > best.value:
                best = Estimate(float(k), (int(c), float(R)))
    return best


def _adjacency_lists(adjacency, n: int) -> list[list[int]]:
    if isinstance(adjacency, dict):
        adj = [[] for _ in range(n)]
        for u, nbrs in adjacency.items():
            for v in nbrs:
                adj[u].append(v)
                adj[v].append(u)
    else:
        adj = [[] for _ in range(n)]
        for u, v in adjacency:
            adj[u].append(v)
            adj[v].append(u)
    return [sorted(set(a)) for a in adj]


def _components(adj: list[list[int]], allowed: np.ndarray) -> np.ndarray:
    comp = np.full(len(adj), -1)
    label = 0
    for s in np.flatnonzero(allowed):
        if comp[s] >= 0:
            continue
        comp[s] = label
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if allowed[v] and comp[v] < 0:
                    comp[v] = label
                    queue.append(v)
        label += 1
    return comp


def _require_connected(adj, n):
    comp = _components(adj, np.ones(n, dtype=bool))
    if n and comp.max() > 0:
        raise InputError("adjacency graph is disconnected")


@dataclass
class LLCResult:
    ok: bool
    condition: str | None = None
    ball: tuple = ()
    pair: tuple = ()
    balls_checked: int = 0


def llc_check(m: FiniteMetric, adjacency, M: float, ball_samples=None) -> LLCResult:
    """Check LLC_1 and LLC_2 on sampled balls, with graph connectivity.

    ``ball_samples`` is a sequence of (center, radius); by default every
    point is a center and radii run over the distinct distances from it.
    Only the sampled scale range is certified.
    """
    n = m.n
    adj = _adjacency_lists(adjacency, n)
    _require_connected(adj, n)
    if ball_samples is None:
        ball_samples = [(a, r) for a in range(n) for r in np.unique(m.dist[a]) if r > 0]
    checked = 0
    for a, r in ball_samples:
        row = m.dist[a]
        inner = row < r + BALL_TOL
        comp = _components(adj, row < M * r + BALL_TOL)
        labels = comp[inner]
        if labels.size and (labels.min() < 0 or np.unique(labels).size > 1):
            pts = np.flatnonzero(inner)
            x = pts[0]
            y = pts[np.flatnonzero(comp[pts] != comp[x])[0]]
            return LLCResult(False, "LLC1", (int(a), float(r)), (int(x), int(y)), checked + 1)
        outer = row >= r - BALL_TOL
        comp = _components(adj, row >= r / M - BALL_TOL)
        labels = comp[outer]
        if labels.size and (labels.min() < 0 or np.unique(labels).size > 1):
            pts = np.flatnonzero(outer)
            x = pts[0]
            y = pts[np.flatnonzero(comp[pts] != comp[x])[0]]
            return LLCResult(False, "LLC2", (int(a), float(r)), (int(x), int(y)), checked + 1)
        checked += 1
    return LLCResult(True, balls_checked=checked)


def _bfs_path(adj, allowed, s, t):
    prev = {s: s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        if u == t:
            path = [t]
            while path[-1] != s:
                path.append(prev[path[-1]])
            return path[::-1]
        for v in adj[u]:
            if allowed[v] and v not in prev:
                prev[v] = u
                queue.append(v)
    return None


def bounded_turning_constant(m: FiniteMetric, adjacency, pairs=None) -> Estimate:
    """Heuristic upper estimate of the bounded-turning constant.

    For each pair the connecting set is a BFS path inside the smallest
    sampled ball around either endpoint that already joins the pair; its
    diameter is measured in the metric of ``m``.
    """
    n = m.n
    adj = _adjacency_lists(adjacency, n)
    _require_connected(adj, n)
    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best = Estimate(1.0)
    for x, y in pairs:
        dxy = m.dist[x, y]
        if dxy <= 0:
            continue
        ratio = np.inf
        for c in (x, y):
            for R in np.unique(m.dist[c][m.dist[c] >= dxy - BALL_TOL]):
                path = _bfs_path(adj, m.dist[c] <= R + BALL_TOL, x, y)
                if path is not None:
                    ratio = min(ratio, m.diam(path) / dxy)
                    break
        if ratio > best.value:
            best = Estimate(float(ratio), (int(x), int(y)))
    return best
