"""(K, L)-approximations of finite metric samples.

An approximation is a graph G = (V, ~) together with a point p_v, a radius
r_v and a cover set U_v for every vertex. Hosts are either a FiniteMetric
(points are its indices) or a MeshGraph (points are mesh nodes). All
containment tests are done on the host sample.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .finite_metric import FiniteMetric, InputError
from .simplicial import MeshGraph, MetricComplex, epsilon_all, mesh_graph

UNREACHABLE = -1


class PreconditionError(InputError):
    pass


# ---------------------------------------------------------------------------
# host access


def host_size(host) -> int:
    return host.n if isinstance(host, FiniteMetric) else host.n_nodes


def local_distances(host, sources, limit: float = math.inf, targets=None, min_radius: float = 0.0) -> dict:
    """Distances from a source set, truncated at ``limit``.

    On a mesh host the search also stops once every node in ``targets`` is
    settled and the frontier has passed ``min_radius``.
    """
    if isinstance(host, FiniteMetric):
        return host.distances_from(sources, limit)
    indptr, indices, data = host._adj
    remaining = set(int(t) for t in targets) if targets is not None else None
    dist: dict[int, float] = {}
    heap = [(0.0, int(s)) for s in sources]
    heapq.heapify(heap)
    while heap:
        d, u = heapq.heappop(heap)
        if u in dist:
            continue
        dist[u] = d
        if remaining is not None:
            remaining.discard(u)
            if not remaining and d >= min_radius:
                break
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if v not in dist:
                nd = d + data[k]
                if nd <= limit:
                    heapq.heappush(heap, (nd, v))
    return dist


def pairwise(host, points) -> np.ndarray:
    pts = np.asarray(list(points), dtype=int)
    if isinstance(host, FiniteMetric):
        return host.dist[np.ix_(pts, pts)]
    d = dijkstra(host.graph, directed=False, indices=pts)[:, pts]
    return np.minimum(d, d.T)


def _host_path(host, s: int, t: int) -> list[int]:
    if isinstance(host, FiniteMetric):
        return [s, t] if s != t else [s]
    _, pred = dijkstra(host.graph, directed=False, indices=s, return_predecessors=True)
    if pred[t] < 0 and s != t:
        raise InputError(f"host points {s} and {t} are not connected")
    path = [t]
    while path[-1] != s:
        path.append(int(pred[path[-1]]))
    return path[::-1]


# ---------------------------------------------------------------------------
# the quadruple


@dataclass
class Approximation:
    adjacency: list
    p: np.ndarray
    r: np.ndarray
    U: list
    host: object = None

    def __post_init__(self):
        self.adjacency = [sorted(set(int(w) for w in nb)) for nb in self.adjacency]
        self.p = np.asarray(self.p, dtype=int)
        self.r = np.asarray(self.r, dtype=float)
        self.U = [np.unique(np.asarray(u, dtype=int)) for u in self.U]
        n = len(self.adjacency)
        if self.p.shape != (n,) or self.r.shape != (n,) or len(self.U) != n:
            raise InputError("p, r, U must have one entry per graph vertex")
        if np.any(self.r <= 0) or not np.all(np.isfinite(self.r)):
            raise InputError("all radii must be positive and finite")
        for v, nb in enumerate(self.adjacency):
            for w in nb:
                if v not in self.adjacency[w]:
                    raise InputError(f"adjacency is not symmetric at ({v}, {w})")
        if self.host is not None:
            covered = np.zeros(host_size(self.host), dtype=bool)
            for u in self.U:
                covered[u] = True
            if not covered.all():
                raise InputError(f"U does not cover the host; point {int(np.argmin(covered))} is missed")

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def owners(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(host_size(self.host))]
        for v, u in enumerate(self.U):
            for x in u.tolist():
                out[x].append(v)
        return out

    def bfs(self, v: int, radius: int | None = None) -> dict[int, int]:
        seen = {v: 0}
        q = deque([v])
        while q:
            u = q.popleft()
            if radius is not None and seen[u] >= radius:
                continue
            for w in self.adjacency[u]:
                if w not in seen:
                    seen[w] = seen[u] + 1
                    q.append(w)
        return seen

    def bfs_until(self, v: int, targets, radius: int) -> dict[int, int]:
        """BFS from v that stops once all targets are reached or the radius is exhausted."""
        remaining = set(targets) - {v}
        seen = {v: 0}
        q = deque([v])
        while q and remaining:
            u = q.popleft()
            if seen[u] >= radius:
                break
            for w in self.adjacency[u]:
                if w not in seen:
                    seen[w] = seen[u] + 1
                    remaining.discard(w)
                    q.append(w)
        return seen

    def edges(self) -> list[tuple[int, int]]:
        return [(v, w) for v, nb in enumerate(self.adjacency) for w in nb if v < w]

    def to_json(self) -> dict:
        return {
            "adjacency": [list(e) for e in self.edges()],
            "p": {str(v): int(x) for v, x in enumerate(self.p)},
            "r": {str(v): float(x) for v, x in enumerate(self.r)},
            "U": {str(v): u.tolist() for v, u in enumerate(self.U)},
        }

    @classmethod
    def from_json(cls, obj, host=None) -> "Approximation":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            n = len(obj["p"])
            adj: list[list[int]] = [[] for _ in range(n)]
            for a, b in obj["adjacency"]:
                adj[a].append(b)
                adj[b].append(a)
            p = [obj["p"][str(v)] for v in range(n)]
            r = [obj["r"][str(v)] for v in range(n)]
            U = [obj["U"][str(v)] for v in range(n)]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad approximation JSON: {exc}") from exc
        return cls(adj, p, r, U, host)


def comb_distance(a: Approximation, u: int, v: int) -> int:
    """Graph distance k(u, v); UNREACHABLE (-1) when no chain exists."""
    return a.bfs(u).get(v, UNREACHABLE)


def star(a: Approximation, v: int, K: int) -> np.ndarray:
    if K < 1:
        raise InputError("K must be >= 1")
    ball = a.bfs(v, K - 1)
    return np.unique(np.concatenate([a.U[u] for u in ball]))


# ---------------------------------------------------------------------------
# axioms


@dataclass
class AxiomReport:
    ok: bool
    K: int
    L: float
    axioms: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"ok": self.ok, "K": self.K, "L": self.L, "axioms": self.axioms, "witnesses": self.witnesses, "stats": self.stats}


@dataclass
class _Scan:
    """Per-vertex geometry shared by the axiom checks and the certified L."""

    outer: np.ndarray  # max distance from p_v to U_v
    inner_violation: dict  # v -> node at distance < r_v outside U_v
    gap: np.ndarray  # distance from U_v to the nearest point outside st_K(v)
    gap_witness: dict
    far_owner: dict  # v -> owners met inside N(U_v, r_v / L) with k >= 2K (only when L given)


def _scan(a: Approximation, K: int, star_K: int, L: float | None, tol: float) -> _Scan:
    """One pass over the vertices.

    Without L the star gap is only searched out to r_v: a gap beyond r_v
    cannot force L above 1.
    """
    host = a.host
    owners = a.owners()
    outer = np.zeros(a.n)
    gap = np.full(a.n, math.inf)
    inner_violation, gap_witness, far_owner = {}, {}, {}
    cap = max(star_K, 2 * K)
    for v in range(a.n):
        pv, rv, Uv = int(a.p[v]), float(a.r[v]), a.U[v]
        inU = set(Uv.tolist())
        d = local_distances(host, [pv], targets=Uv, min_radius=rv)
        outer[v] = max(d[x] for x in inU) if inU <= d.keys() else math.inf
        for x, dx in d.items():
            if dx < rv * (1.0 - tol) and x not in inU:
                inner_violation[v] = x
                break
        reach = rv / L if L is not None else rv
        dU = local_distances(host, Uv.tolist(), limit=reach)
        met = {u for x in dU for u in owners[x]}
        k = a.bfs_until(v, met, cap)
        for x, dx in sorted(dU.items(), key=lambda kv: kv[1]):
            if not any(k.get(u, cap) < star_K for u in owners[x]):
                gap[v] = dx
                gap_witness[v] = x
                break
        if L is not None:
            for x, dx in dU.items():
                if dx < reach * (1.0 - tol):
                    bad = [u for u in owners[x] if k.get(u, cap) >= 2 * K]
                    if bad:
                        far_owner[v] = (bad[0], x)
                        break
    return _Scan(outer, inner_violation, gap, gap_witness, far_owner)


def check_axioms(
    a: Approximation,
    K: int,
    L: float,
    tol: float = 1e-9,
    star_K: int | None = None,
    a7_pairs: int = 12,
    seed: int = 0,
) -> AxiomReport:
    """Check the approximation axioms, fineness and the derived properties at (K, L).

    ``star_K`` sets the star radius used by the neighbourhood axiom (defaults
    to K). The two-sided comparability property is checked on up to
    ``a7_pairs`` seeded vertex pairs with k(u, v) >= 2K.
    """
    star_K = K if star_K is None else star_K
    ax, wit = {}, {}
    val = [len(nb) for nb in a.adjacency]
    ax["A1"] = max(val) <= K
    if not ax["A1"]:
        wit["A1"] = int(np.argmax(val))
    sc = _scan(a, K, star_K, L, tol)
    bad_outer = np.flatnonzero(sc.outer >= L * a.r * (1.0 + tol))
    ax["A2"] = not sc.inner_violation and bad_outer.size == 0
    if sc.inner_violation:
        v, x = next(iter(sc.inner_violation.items()))
        wit["A2"] = {"vertex": int(v), "point": int(x), "kind": "ball not inside U"}
    elif bad_outer.size:
        v = int(bad_outer[np.argmax(sc.outer[bad_outer] / a.r[bad_outer])])
        wit["A2"] = {"vertex": v, "ratio": float(sc.outer[v] / a.r[v]), "kind": "U not inside L-ball"}
    ok3, w3 = True, None
    sets = [set(u.tolist()) for u in a.U]
    for v, w in a.edges():
        ratio = a.r[v] / a.r[w]
        if not sets[v] & sets[w] or ratio > L * (1 + tol) or 1 / ratio > L * (1 + tol):
            ok3, w3 = False, [v, w]
            break
    if ok3:
        partners: dict[int, set] = {}
        for ow in a.owners():
            for u in ow:
                partners.setdefault(u, set()).update(ow)
        for u in sorted(partners):
            targets = partners[u] - {u}
            reached = a.bfs_until(u, targets, K - 1)
            missing = sorted(targets - reached.keys())
            if missing:
                ok3, w3 = False, [u, missing[0]]
                break
    ax["A3"] = ok3
    if w3 is not None:
        wit["A3"] = w3
    bad4 = np.flatnonzero(a.r / L > sc.gap * (1.0 + tol))
    ax["A4"] = bad4.size == 0
    if bad4.size:
        v = int(bad4[0])
        wit["A4"] = {"vertex": v, "point": int(sc.gap_witness.get(v, -1))}
    n_host = host_size(a.host)
    fine = [v for v in range(a.n) if a.U[v].size >= n_host]
    ax["fine"] = not fine
    if fine:
        wit["fine"] = fine[0]
    ax["A6"] = not sc.far_owner
    if sc.far_owner:
        v, (u, x) = next(iter(sc.far_owner.items()))
        wit["A6"] = [int(u), int(v), int(x)]
    a7 = _check_a7(a, K, L, a7_pairs, seed, tol)
    ax["A7"] = a7[0]
    if a7[1] is not None:
        wit["A7"] = a7[1]
    stats = {
        "max_valence": int(max(val)),
        "A2_ratio": float(np.max(sc.outer / a.r)),
        "A4_margin": float(np.min(sc.gap * L / a.r)),
        "A7_pairs": a7[2],
    }
    return AxiomReport(all(ax.values()), int(K), float(L), ax, wit, stats)


def _check_a7(a: Approximation, K: int, L: float, budget: int, seed: int, tol: float, per_set: int = 6):
    """Sampled two-sided comparability for pairs with k(u, v) >= 2K.

    Each U set is represented by p and up to ``per_set`` seeded members.
    """
    C = 2 * L * L + 1
    rng = np.random.default_rng(seed)
    pairs = []
    for u in rng.permutation(a.n)[: max(budget, 1) * 4].tolist():
        far = [w for w, k in a.bfs(u).items() if k >= 2 * K]
        if far:
            pairs.append((u, int(far[int(rng.integers(len(far)))])))
        if len(pairs) >= budget:
            break

    def sample(v):
        extra = a.U[v] if a.U[v].size <= per_set else rng.choice(a.U[v], per_set, replace=False)
        return np.unique(np.concatenate([[a.p[v]], extra]))

    for u, v in pairs:
        xs, ys = sample(u), sample(v)
        if isinstance(a.host, FiniteMetric):
            block = a.host.dist[np.ix_(xs, ys)]
        else:
            block = dijkstra(a.host.graph, directed=False, indices=xs)[:, ys]
        base = block[list(xs).index(a.p[u]), list(ys).index(a.p[v])]
        if block.min() < base / C * (1 - tol) or block.max() > C * base * (1 + tol):
            return False, [int(u), int(v)], len(pairs)
    return True, None, len(pairs)


def certified_L(a: Approximation, K: int, star_K: int | None = None, tol: float = 1e-9) -> float:
    """Smallest L for which the metric axioms hold at sample resolution.

    Combines the outer ball ratio, the neighbour radius ratio and the star
    margin; the lower ball inclusion does not depend on L and is left to
    check_axioms.
    """
    star_K = K if star_K is None else star_K
    sc = _scan(a, K, star_K, None, tol)
    L2 = float(np.max(sc.outer / a.r)) * (1.0 + 10 * tol)
    L3 = 1.0
    for v, w in a.edges():
        L3 = max(L3, a.r[v] / a.r[w], a.r[w] / a.r[v])
    L4 = float(np.max(a.r / sc.gap)) if np.all(sc.gap > 0) else math.inf
    return float(max(1.0, L2, L3, L4))


# ---------------------------------------------------------------------------
# builders


def skeleton_approximation(c: MetricComplex, m: int = 4, mesh: MeshGraph | None = None) -> Approximation:
    """1-skeleton with r_v = eps(v) and U_v = open star of v, sampled on the level-m mesh.

    A mesh node lies in U_v exactly when v is a vertex of the open simplex
    containing the node. Needs m >= 2 so every edge carries an interior node.
    """
    if m < 2 and mesh is None:
        raise InputError("skeleton approximation needs mesh level >= 2")
    mesh = mesh if mesh is not None else mesh_graph(c, m)
    U: list[list[int]] = [[] for _ in range(c.n_vertices)]
    for x in range(mesh.n_nodes):
        for v in mesh.node_in_simplex(x):
            U[v].append(x)
    return Approximation(c.neighbors, np.arange(c.n_vertices), epsilon_all(c), U, mesh)


def image_approximation(a: Approximation, f, target: FiniteMetric) -> Approximation:
    """Push an approximation forward along a point map f (array: host point -> target point).

    r'_v is the minimum of d_target(f x, f p_v) over sample points x with
    d_host(x, p_v) >= r_v.
    """
    f = np.asarray(f, dtype=int)
    n = host_size(a.host)
    if f.shape != (n,):
        raise InputError(f"point map has {f.shape[0]} entries, host has {n} points")
    if np.unique(f).size != n:
        raise InputError("point map is not injective")
    if f.min() < 0 or f.max() >= target.n:
        raise InputError("point map leaves the target")
    r2 = np.empty(a.n)
    for v in range(a.n):
        d = local_distances(a.host, [int(a.p[v])])
        far = np.array([x for x, dx in d.items() if dx >= a.r[v]], dtype=int)
        if far.size == 0:
            raise InputError(f"no sample point at distance >= r_v from p_v for vertex {v}; approximation is not fine")
        r2[v] = float(target.dist[f[a.p[v]], f[far]].min())
    inv = np.full(target.n, -1)
    inv[f] = np.arange(n)
    if np.any(inv < 0):
        raise InputError("point map is not onto the target sample")
    return Approximation(a.adjacency, f[a.p], r2, [f[u] for u in a.U], target)


# ---------------------------------------------------------------------------
# chains


@dataclass
class ChainReport:
    chain: list
    max_step: int
    ratio: float
    radius_sum: float = math.nan


def _cover_walk(a: Approximation, u: int, v: int) -> list[int]:
    path = _host_path(a.host, int(a.p[u]), int(a.p[v]))
    owners = a.owners()
    chain = [u]
    for x in path[1:]:
        if chain[-1] in owners[x]:
            continue
        # stay close to the previous vertex
        prev = chain[-1]
        cands = owners[x]
        nb = set(a.adjacency[prev])
        pick = next((w for w in cands if w in nb), cands[0])
        chain.append(pick)
    if chain[-1] != v:
        chain.append(v)
    return chain


def chain_between(a: Approximation, u: int, v: int, K: int | None = None) -> ChainReport:
    """Vertex chain from u to v obtained by walking a host geodesic through the cover."""
    if u == v:
        return ChainReport([u], 0, 0.0)
    if isinstance(a.host, FiniteMetric):
        bfs = a.bfs(u)
        if v not in bfs:
            raise InputError("vertices are not connected in the approximation graph")
        chain = _graph_path(a, u, v)
    else:
        chain = _cover_walk(a, u, v)
    steps = [comb_distance(a, chain[i - 1], chain[i]) for i in range(1, len(chain))]
    D = pairwise(a.host, a.p[chain])
    ratio = float(D.max() / D[0, -1]) if D[0, -1] > 0 else math.inf
    return ChainReport(chain, max(steps) if steps else 0, ratio)


def _graph_path(a: Approximation, u: int, v: int) -> list[int]:
    parent = {u: None}
    q = deque([u])
    while q:
        x = q.popleft()
        if x == v:
            break
        for w in a.adjacency[x]:
            if w not in parent:
                parent[w] = x
                q.append(w)
    if v not in parent:
        raise InputError("vertices are not connected in the approximation graph")
    out = [v]
    while out[-1] != u:
        out.append(parent[out[-1]])
    return out[::-1]


def quasiconvex_chain(a: Approximation, u: int, v: int, K: int) -> ChainReport:
    """Chain of adjacent vertices following a host geodesic; reports sum r / d(p_u, p_v)."""
    k = comb_distance(a, u, v)
    if k == UNREACHABLE:
        raise InputError("vertices are not connected")
    if k < K:
        raise PreconditionError(f"k(u, v) = {k} < K = {K}; the chain bound does not apply")
    base = chain_between(a, u, v).chain
    chain = [base[0]]
    for w in base[1:]:
        if w == chain[-1]:
            continue
        if w in a.adjacency[chain[-1]]:
            chain.append(w)
        else:
            chain.extend(_graph_path(a, chain[-1], w)[1:])
    d = float(pairwise(a.host, [a.p[u], a.p[v]])[0, 1])
    total = float(a.r[chain].sum())
    return ChainReport(chain, 1, total / d, total)
