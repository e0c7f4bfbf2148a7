"""Metric simplicial 2-complexes with their intrinsic (string) metric.

A complex is a list of triangles with prescribed side lengths glued along
shared edges. Distances are computed on a Steiner refinement: each triangle
is laid flat and carries the lattice of points whose barycentric
coordinates are multiples of 1/m. Every graph edge is a straight segment
inside one flat triangle, so graph distances are upper bounds for the
intrinsic distance. Lattices for m and 2m nest, so refining never
increases a graph distance.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .finite_metric import FiniteMetric, InputError

LENGTH_TOL = 1e-9
SLACK_C0 = 1.0
STANDARD_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])


class ComplexError(InputError):
    pass


def planar_triangle(l01: float, l12: float, l20: float) -> np.ndarray:
    """Flat realisation: v0 at the origin, v1 on the positive x axis."""
    x2 = (l01**2 + l20**2 - l12**2) / (2.0 * l01)
    # clamp the cosine so near-degenerate input does not produce NaN
    x2 = min(max(x2, -l20), l20)
    y2 = math.sqrt(max(l20**2 - x2**2, 0.0))
    return np.array([[0.0, 0.0], [l01, 0.0], [x2, y2]])


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class MetricComplex:
    """Immutable triangle complex.

    ``triangles[f] = (a, b, c)`` indexes ``vertices``; ``lengths[f]`` holds
    (|ab|, |bc|, |ca|).
    """

    vertices: tuple
    triangles: np.ndarray
    lengths: np.ndarray
    embedding: np.ndarray | None = None
    strict: bool = True

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def edges(self) -> dict[tuple[int, int], float]:
        out = {}
        for f, (a, b, c) in enumerate(self.triangles.tolist()):
            la, lb, lc = self.lengths[f]
            out[_edge(a, b)] = la
            out[_edge(b, c)] = lb
            out[_edge(c, a)] = lc
        return dict(sorted(out.items()))

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    @cached_property
    def edge_triangles(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {e: [] for e in self.edges}
        for f, (a, b, c) in enumerate(self.triangles.tolist()):
            for e in (_edge(a, b), _edge(b, c), _edge(c, a)):
                out[e].append(f)
        return out

    @cached_property
    def vertex_triangles(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for f, tri in enumerate(self.triangles.tolist()):
            for v in tri:
                out[v].append(f)
        return out

    @cached_property
    def neighbors(self) -> list[list[int]]:
        out: list[set] = [set() for _ in range(self.n_vertices)]
        for a, b in self.edges:
            out[a].add(b)
            out[b].add(a)
        return [sorted(s) for s in out]

    def edge_length(self, a: int, b: int) -> float:
        return self.edges[_edge(a, b)]

    def planar(self, f: int) -> np.ndarray:
        return planar_triangle(*self.lengths[f])

    def area(self, f: int) -> float:
        p = self.planar(f)
        return 0.5 * abs(p[1, 0] * p[2, 1] - p[1, 1] * p[2, 0])

    def diam(self, f: int) -> float:
        return float(self.lengths[f].max())

    def is_closed_surface(self) -> bool:
        return all(len(ts) == 2 for ts in self.edge_triangles.values())

    def is_consistently_oriented(self) -> bool:
        """Every interior edge is traversed in opposite directions by its two triangles."""
        seen: dict[tuple[int, int], int] = {}
        for a, b, c in self.triangles.tolist():
            for e in ((a, b), (b, c), (c, a)):
                seen[e] = seen.get(e, 0) + 1
        return all(k == 1 for k in seen.values())

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    def to_json(self) -> dict:
        tris = [
            [int(a), int(b), int(c), float(l0), float(l1), float(l2)]
            for (a, b, c), (l0, l1, l2) in zip(self.triangles.tolist(), self.lengths.tolist())
        ]
        out = {"vertices": list(self.vertices), "triangles": tris}
        if self.embedding is not None:
            out["embedding"] = self.embedding.tolist()
        return out

    @classmethod
    def from_json(cls, obj, strict: bool = True) -> "MetricComplex":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            tris = obj["triangles"]
            emb = obj.get("embedding")
            return build_complex(obj["vertices"], tris, embedding=emb, strict=strict)
        except (KeyError, TypeError, IndexError) as exc:
            raise InputError(f"bad complex JSON: {exc}") from exc

    def to_obj(self) -> str:
        if self.embedding is None:
            raise ComplexError("complex has no embedding; OBJ export needs coordinates")
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.embedding.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.triangles.tolist()]
        return "\n".join(lines) + "\n"


def build_complex(vertices, triangles, embedding=None, strict: bool = True, tol: float = LENGTH_TOL) -> MetricComplex:
    """Validate and freeze a triangle complex.

    ``triangles`` rows are (v1, v2, v3, l12, l23, l31) with vertex indices
    into ``vertices``. Raises on degenerate triangles and on shared edges
    with inconsistent lengths; edges with more than two triangles are
    rejected only when ``strict``.
    """
    vertices = tuple(vertices)
    rows = [list(t) for t in triangles]
    if not rows:
        raise ComplexError("complex has no triangles")
    tri = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=int)
    lens = np.array([[float(r[3]), float(r[4]), float(r[5])] for r in rows], dtype=float)
    nv = len(vertices)
    if tri.min() < 0 or tri.max() >= nv:
        raise ComplexError("triangle refers to a missing vertex")
    if np.any(tri[:, 0] == tri[:, 1]) or np.any(tri[:, 1] == tri[:, 2]) or np.any(tri[:, 0] == tri[:, 2]):
        raise ComplexError("triangle with a repeated vertex")
    if not np.all(np.isfinite(lens)) or np.any(lens <= 0):
        raise ComplexError("side lengths must be positive and finite")
    for f, (l0, l1, l2) in enumerate(lens.tolist()):
        s = sorted((l0, l1, l2))
        if s[2] >= (s[0] + s[1]) * (1.0 - 1e-12):
            raise ComplexError(f"triangle {f} is degenerate: sides {l0}, {l1}, {l2}")
    seen: dict[tuple[int, int], tuple[float, int]] = {}
    count: dict[tuple[int, int], int] = {}
    for f in range(tri.shape[0]):
        a, b, c = tri[f]
        for (p, q), ell in zip(((a, b), (b, c), (c, a)), lens[f]):
            e = _edge(int(p), int(q))
            count[e] = count.get(e, 0) + 1
            if e in seen and abs(seen[e][0] - ell) > tol * max(1.0, ell):
                raise ComplexError(
                    f"edge {e} has length {seen[e][0]} in triangle {seen[e][1]} but {ell} in triangle {f}"
                )
            seen.setdefault(e, (ell, f))
    if strict:
        bad = [e for e, k in count.items() if k > 2]
        if bad:
            raise ComplexError(f"non-manifold edge {bad[0]} has {count[bad[0]]} triangles")
    emb = None
    if embedding is not None:
        emb = np.asarray(embedding, dtype=float)
        if emb.shape != (nv, 3):
            raise ComplexError(f"embedding has shape {emb.shape}, expected ({nv}, 3)")
        emb.setflags(write=False)
    tri.setflags(write=False)
    lens.setflags(write=False)
    return MetricComplex(vertices, tri, lens, emb, strict)


def complex_from_embedding(coords, faces, strict: bool = True) -> MetricComplex:
    x = np.asarray(coords, dtype=float)
    faces = np.asarray(faces, dtype=int)
    if x.shape[1] == 2:
        x = np.hstack([x, np.zeros((x.shape[0], 1))])
    rows = []
    for a, b, c in faces.tolist():
        rows.append(
            [a, b, c, np.linalg.norm(x[a] - x[b]), np.linalg.norm(x[b] - x[c]), np.linalg.norm(x[c] - x[a])]
        )
    return build_complex(range(x.shape[0]), rows, embedding=x, strict=strict)


# ---------------------------------------------------------------------------
# local geometry


def epsilon_x(c: MetricComplex, x: int) -> float:
    """Distance from vertex x to the faces of its simplices not containing x.

    For a triangle that is the height from x; for an edge, its length.
    """
    if not c.neighbors[x]:
        raise ComplexError(f"vertex {x} is isolated")
    best = min(c.edge_length(x, y) for y in c.neighbors[x])
    for f in c.vertex_triangles[x]:
        tri = c.triangles[f].tolist()
        k = tri.index(x)
        opposite = c.lengths[f][(k + 1) % 3]
        best = min(best, 2.0 * c.area(f) / opposite)
    return float(best)


def epsilon_all(c: MetricComplex) -> np.ndarray:
    return np.array([epsilon_x(c, v) for v in range(c.n_vertices)])


@dataclass
class QCCertificate:
    M1: float
    M2: float
    M3: float
    witness: dict = field(default_factory=dict)

    @property
    def M(self) -> float:
        return max(self.M1, self.M2, self.M3)

    def to_json(self) -> dict:
        return {"M1": self.M1, "M2": self.M2, "M3": self.M3, "M": self.M, "witness": self.witness}


def simplex_distortion(l01: float, l12: float, l20: float) -> float:
    """Bi-Lipschitz constant of the diameter-normalised linear map onto the standard triangle."""
    P = planar_triangle(l01, l12, l20)
    src = np.column_stack([P[1] - P[0], P[2] - P[0]])
    dst = np.column_stack([STANDARD_TRIANGLE[1], STANDARD_TRIANGLE[2]])
    A = dst @ np.linalg.inv(src)
    sv = np.linalg.svd(A, compute_uv=False)
    d = max(l01, l12, l20)
    return float(max(sv[0] * d, 1.0 / (sv[-1] * d)))


def qc_certificate(c: MetricComplex) -> QCCertificate:
    counts = [1 + len(c.neighbors[v]) + len(c.vertex_triangles[v]) for v in range(c.n_vertices)]
    v1 = int(np.argmax(counts))
    m2 = [simplex_distortion(*ls) for ls in c.lengths.tolist()]
    f2 = int(np.argmax(m2))
    diams = c.lengths.max(axis=1)
    m3, v3 = 1.0, -1
    for v, ts in enumerate(c.vertex_triangles):
        if len(ts) > 1:
            r = float(diams[ts].max() / diams[ts].min())
            if r > m3:
                m3, v3 = r, v
    return QCCertificate(float(counts[v1]), float(m2[f2]), m3, {"M1_vertex": v1, "M2_triangle": f2, "M3_vertex": v3})


# ---------------------------------------------------------------------------
# stars


def simplices_of_triangle(tri) -> set:
    a, b, c = sorted(int(v) for v in tri)
    return {("v", a), ("v", b), ("v", c), ("e", a, b), ("e", b, c), ("e", a, c), ("t", a, b, c)}


def star_sets(c: MetricComplex, x: int) -> set:
    """S(x): all simplices containing the vertex x."""
    out = {("v", x)}
    for y in c.neighbors[x]:
        out.add(("e",) + _edge(x, y))
    for f in c.vertex_triangles[x]:
        out.add(("t",) + tuple(sorted(c.triangles[f].tolist())))
    return out


def S_of(c: MetricComplex, A) -> set:
    """S(A): all simplices meeting the closed simplex A (given as a vertex tuple)."""
    verts = sorted(int(v) for v in A)
    out: set = set()
    for v in verts:
        for f in c.vertex_triangles[v]:
            out |= simplices_of_triangle(c.triangles[f])
        for y in c.neighbors[v]:
            out |= {("v", v), ("v", y), ("e",) + _edge(v, y)}
    return out


def k_star_vertices(c: MetricComplex, x: int, K: int) -> set[int]:
    """Vertices at combinatorial distance < K from x in the 1-skeleton."""
    seen = {x}
    frontier = [x]
    for _ in range(K - 1):
        nxt = []
        for u in frontier:
            for w in c.neighbors[u]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# Steiner mesh graph


def slack(m: int) -> float:
    """Documented (heuristic) refinement slack: graph <= (1 + slack) * intrinsic."""
    return SLACK_C0 / max(m, 1)


def _lattice(n: int):
    """Barycentric lattice with n divisions, and its nearest-neighbour pairs."""
    pts = [(i, j, n - i - j) for i in range(n + 1) for j in range(n + 1 - i)]
    index = {p: k for k, p in enumerate(pts)}
    nbr = []
    for (i, j, k), a in index.items():
        for d in ((-1, 1, 0), (-1, 0, 1), (0, -1, 1)):
            q = (i + d[0], j + d[1], k + d[2])
            if q in index:
                nbr.append((a, index[q]))
    return np.array(pts, dtype=int), np.array(nbr, dtype=int)


@dataclass
class MeshGraph:
    complex: MetricComplex
    level: int
    n_nodes: int
    graph: csr_matrix
    tri_nodes: np.ndarray  # (F, P) global node index of each lattice point
    tri_coords: np.ndarray  # (F, P, 2) flat coordinates inside each triangle
    lattice: np.ndarray  # (P, 3) barycentric numerators
    area_weights: np.ndarray
    owner: list  # relative-interior simplex of each node
    complete: bool = True

    @property
    def delta(self) -> float:
        return slack(self.level)

    @cached_property
    def node_triangles(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for f, row in enumerate(self.tri_nodes.tolist()):
            for u in set(row):
                out[u].append(f)
        return out

    @cached_property
    def _adj(self):
        g = self.graph
        return g.indptr.tolist(), g.indices.tolist(), g.data.tolist()

    def distances_from(self, sources, limit: float = math.inf) -> dict:
        """Multi-source Dijkstra truncated at ``limit`` (pure Python heap, for local queries)."""
        indptr, indices, data = self._adj
        dist: dict[int, float] = {}
        heap = [(0.0, int(s)) for s in sources]
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if u in dist:
                continue
            dist[u] = d
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if v in dist:
                    continue
                nd = d + data[k]
                if nd <= limit:
                    heapq.heappush(heap, (nd, v))
        return dist

    def all_distances(self, sources, limit: float = np.inf) -> np.ndarray:
        return dijkstra(self.graph, directed=False, indices=np.asarray(sources, dtype=int), limit=limit)

    def node_in_simplex(self, u: int) -> set[int]:
        """Vertices spanning the open simplex that contains node u."""
        return set(self.owner[u][1:]) if self.owner[u][0] != "t" else set(self.complex.triangles[self.owner[u][1]].tolist())

    def metric(self, nodes=None) -> FiniteMetric:
        if nodes is None:
            nodes = range(self.complex.n_vertices)
        nodes = np.asarray(list(nodes), dtype=int)
        d = self.all_distances(nodes)[:, nodes]
        d = np.minimum(d, d.T)
        np.fill_diagonal(d, 0.0)
        return FiniteMetric(tuple(int(u) for u in nodes), d)


def mesh_graph(c: MetricComplex, m: int, complete: bool = True) -> MeshGraph:
    """Steiner refinement with ``m`` subdivisions per edge.

    Nodes: the vertices (indices 0..V-1), then m - 1 points on every edge,
    then interior lattice points of every triangle. With ``complete`` every
    pair of nodes in a common triangle is joined by its flat segment;
    otherwise only lattice neighbours are joined (used for modulus).
    """
    if m < 0:
        raise InputError("refinement level must be >= 0")
    n = max(int(m), 1)
    lat, nbr = _lattice(n)
    P = lat.shape[0]
    V = c.n_vertices
    edge_list = list(c.edges)
    edge_base = {e: V + k * (n - 1) for k, e in enumerate(edge_list)}
    next_id = V + len(edge_list) * (n - 1)
    owner: list = [("v", v) for v in range(V)]
    for e in edge_list:
        owner.extend([("e",) + e] * (n - 1))
    F = c.n_triangles
    tri_nodes = np.empty((F, P), dtype=int)
    tri_coords = np.empty((F, P, 2))
    interior_count = sum(1 for i, j, k in lat.tolist() if i > 0 and j > 0 and k > 0)
    for f in range(F):
        verts = c.triangles[f].tolist()
        planar = c.planar(f)
        tri_coords[f] = (lat @ planar) / n
        for p, (i, j, k) in enumerate(lat.tolist()):
            bary = (i, j, k)
            nz = [t for t in range(3) if bary[t] > 0]
            if len(nz) == 1:
                tri_nodes[f, p] = verts[nz[0]]
            elif len(nz) == 2:
                s, t = nz
                a, b = verts[s], verts[t]
                # position measured from the smaller vertex id
                pos = bary[t] if a < b else bary[s]
                tri_nodes[f, p] = edge_base[_edge(a, b)] + pos - 1
        interior = [p for p, (i, j, k) in enumerate(lat.tolist()) if i > 0 and j > 0 and k > 0]
        tri_nodes[f, interior] = np.arange(next_id, next_id + interior_count)
        owner.extend([("t", f)] * interior_count)
        next_id += interior_count
    if complete:
        pairs = np.array(list(combinations(range(P), 2)), dtype=int)
    else:
        pairs = nbr
    a = tri_nodes[:, pairs[:, 0]].ravel()
    b = tri_nodes[:, pairs[:, 1]].ravel()
    w = np.linalg.norm(tri_coords[:, pairs[:, 0]] - tri_coords[:, pairs[:, 1]], axis=-1).ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = lo.astype(np.int64) * next_id + hi
    order = np.argsort(key, kind="stable")
    key, w = key[order], w[order]
    uniq, start = np.unique(key, return_index=True)
    wmin = np.minimum.reduceat(w, start)
    r, s = uniq // next_id, uniq % next_id
    g = csr_matrix((np.concatenate([wmin, wmin]), (np.concatenate([r, s]), np.concatenate([s, r]))), shape=(next_id, next_id))
    # lumped area: each small lattice triangle gives a third of its area to each corner
    area = np.zeros(next_id)
    small = []
    index = {tuple(p): k for k, p in enumerate(lat.tolist())}
    for (i, j, k), p in index.items():
        for q1, q2 in (((i - 1, j + 1, k), (i - 1, j, k + 1)), ((i, j - 1, k + 1), (i - 1, j, k + 1))):
            if q1 in index and q2 in index:
                small.append((p, index[q1], index[q2]))
    small = np.array(small, dtype=int)
    for f in range(F):
        share = c.area(f) / (n * n) / 3.0
        np.add.at(area, tri_nodes[f, small.ravel()], share)
    return MeshGraph(c, int(m), next_id, g, tri_nodes, tri_coords, lat, area, owner, complete)


def intrinsic_distance(c: MetricComplex, x: int, y: int, m: int = 8, mesh: MeshGraph | None = None) -> tuple[float, float]:
    """(upper bound, heuristic lower hint) for the intrinsic distance of two mesh nodes."""
    mesh = mesh if mesh is not None else mesh_graph(c, m)
    d = float(mesh.all_distances([x])[0, y])
    return d, d / (1.0 + mesh.delta)


def is_connected(c: MetricComplex) -> bool:
    rows = [a for a, b in c.edges] + [b for a, b in c.edges]
    cols = [b for a, b in c.edges] + [a for a, b in c.edges]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(c.n_vertices, c.n_vertices))
    return connected_components(g, directed=False)[0] == 1


# ---------------------------------------------------------------------------
# neighbourhoods of simplices


@dataclass
class InclusionResult:
    r: float
    diam: float
    ratio: float
    witness_node: int = -1


def check_neighborhood_inclusion(c: MetricComplex, A: int, m: int = 8, mesh: MeshGraph | None = None) -> InclusionResult:
    """Largest r (on the mesh sample) with N(A, r) inside the interior of the union of S(A).

    ``A`` is a triangle index. A node is interior to the union when every
    triangle containing it meets A.
    """
    mesh = mesh if mesh is not None else mesh_graph(c, m)
    verts = set(c.triangles[A].tolist())
    touching = {f for f in range(c.n_triangles) if verts & set(c.triangles[f].tolist())}
    sources = np.unique(mesh.tri_nodes[A])
    dist = mesh.distances_from(sources)
    best, wit = math.inf, -1
    for u, d in dist.items():
        if d >= best:
            continue
        if not set(mesh.node_triangles[u]) <= touching:
            best, wit = d, u
    diam = c.diam(A)
    return InclusionResult(best, diam, best / diam, wit)
