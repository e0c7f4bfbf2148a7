"""Explicit builders: prescribed-side triangle complexes, barycentric subdivision,
the replace-and-glue assembly, the snowsphere, and flat fixture meshes."""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .finite_metric import InputError
from .simplicial import MetricComplex, build_complex, complex_from_embedding, planar_triangle, qc_certificate

SNOWSPHERE_MAX_STAGE = 4

# Frozen regression curve for triangle_complex: for input side ratio M
# (max d / min d) the qc certificate stays below QC_BOUND and every angle
# stays above MIN_ANGLE. Produced by scripts/calibrate_triangle_complex.py
# with a 10% margin on the certificate; see calibration_bound().
CALIBRATION_RATIOS = (1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0)
QC_BOUND = (7.7, 7.7, 7.7, 7.7, 7.7, 14.4, 51.6, 310.1)


def calibration_bound(M: float) -> float:
    """Calibrated certificate bound C(M), stepping up to the next tabulated ratio."""
    if M < 1.0:
        raise InputError("side ratio must be >= 1")
    k = bisect_left(CALIBRATION_RATIOS, M - 1e-12)
    if k >= len(CALIBRATION_RATIOS):
        raise InputError(f"side ratio {M} beyond calibrated range {CALIBRATION_RATIOS[-1]}")
    return QC_BOUND[k]


def min_angle_bound(M: float) -> float:
    """Lower bound for every angle of the three apex triangles, from sin(theta) >= 1/(4 M^3)."""
    return math.asin(min(1.0, 1.0 / (4.0 * M**3)))


def side_ratio(d) -> float:
    d = np.asarray(d, dtype=float)
    return float(d.max() / d.min())


# ---------------------------------------------------------------------------
# three triangles over a prescribed boundary


@dataclass
class TriangleComplexK:
    """Three triangles sharing an apex whose boundary has side lengths d1, d2, d3.

    Vertices 0, 1, 2 carry the boundary (|01| = d1, |12| = d2, |20| = d3),
    vertex 3 is the apex. ``iso`` maps the subdivided standard triangle
    (corners 0, 1, 2, barycenter 3) onto this complex, triangle by triangle.
    """

    complex: MetricComplex
    boundary: tuple
    apex_lengths: tuple
    iso: tuple = ((0, 1, 3), (1, 2, 3), (2, 0, 3))


def _triangle_complex_coords(d1: float, d2: float, d3: float) -> np.ndarray:
    a, b, c = 1.0, d2 / d1, d3 / d1
    x = (a * a + c * c - b * b) / (2.0 * a)
    x = min(max(x, -c), c)
    y = math.sqrt(max(c * c - x * x, 0.0))
    P = np.array([[0.0, 0.0, 0.0], [a, 0.0, 0.0], [x, y, 0.0]])
    z0 = np.array([P[:, 0].mean(), P[:, 1].mean(), 1.0])
    return np.vstack([P, z0]) * d1


def triangle_complex(d1: float, d2: float, d3: float) -> TriangleComplexK:
    d = (float(d1), float(d2), float(d3))
    if min(d) <= 0 or not all(math.isfinite(v) for v in d):
        raise InputError("side lengths must be positive")
    for i in range(3):
        if d[i] > d[(i + 1) % 3] + d[(i + 2) % 3] + 1e-12 * max(d):
            raise InputError(f"sides {d} violate the triangle inequality; not realisable")
    X = _triangle_complex_coords(*d)
    apex = tuple(float(np.linalg.norm(X[3] - X[i])) for i in range(3))
    rows = [
        [0, 1, 3, d[0], apex[1], apex[0]],
        [1, 2, 3, d[1], apex[2], apex[1]],
        [2, 0, 3, d[2], apex[0], apex[2]],
    ]
    c = build_complex(range(4), rows, embedding=X)
    return TriangleComplexK(c, d, apex)


def triangle_angles(l01: float, l12: float, l20: float) -> np.ndarray:
    P = planar_triangle(l01, l12, l20)
    out = []
    for i in range(3):
        u, v = P[(i + 1) % 3] - P[i], P[(i + 2) % 3] - P[i]
        cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        out.append(math.acos(min(1.0, max(-1.0, cosang))))
    return np.array(out)


def min_angle(c: MetricComplex) -> float:
    return float(min(triangle_angles(*ls).min() for ls in c.lengths.tolist()))


# ---------------------------------------------------------------------------
# barycentric subdivision and assembly


@dataclass
class Subdivided:
    """Z' = every triangle of Z split at its barycenter.

    Vertices of Z keep their indices; the barycenter of triangle f is vertex
    ``n_original + f``. Sub-triangles 3f, 3f+1, 3f+2 are (a, b, g), (b, c, g),
    (c, a, g) for Z's triangle (a, b, c).
    """

    complex: MetricComplex
    base: MetricComplex

    @property
    def n_original(self) -> int:
        return self.base.n_vertices

    def apex(self, f: int) -> int:
        return self.n_original + f


def subdivide3(Z: MetricComplex) -> Subdivided:
    V = Z.n_vertices
    rows = []
    for f, (a, b, c) in enumerate(Z.triangles.tolist()):
        P = planar_triangle(*Z.lengths[f])
        g = P.mean(axis=0)
        la, lb, lc = (float(np.linalg.norm(P[i] - g)) for i in range(3))
        l01, l12, l20 = Z.lengths[f]
        g_id = V + f
        rows += [[a, b, g_id, l01, lb, la], [b, c, g_id, l12, lc, lb], [c, a, g_id, l20, la, lc]]
    emb = None
    if Z.embedding is not None:
        emb = np.vstack([Z.embedding, Z.embedding[Z.triangles].mean(axis=1)])
    out = build_complex(range(V + Z.n_triangles), rows, embedding=emb, strict=Z.strict)
    return Subdivided(out, Z)


@dataclass
class Assembled:
    """Y built from Z' by replacing each subdivided triangle with a TriangleComplexK.

    The correspondence Z' -> Y is the identity on vertex and triangle indices.
    """

    Y: MetricComplex
    Zp: Subdivided
    pieces: list = field(default_factory=list)


def _edge_lengths_per_triangle(Z: MetricComplex, edge_lengths) -> np.ndarray:
    if isinstance(edge_lengths, dict):
        out = np.empty((Z.n_triangles, 3))
        for f, (a, b, c) in enumerate(Z.triangles.tolist()):
            for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
                key = (min(p, q), max(p, q))
                if key not in edge_lengths:
                    raise InputError(f"no length given for edge {key}")
                out[f, k] = float(edge_lengths[key])
        return out
    if callable(edge_lengths):
        return np.array([[edge_lengths(p, q) for p, q in ((a, b), (b, c), (c, a))] for a, b, c in Z.triangles.tolist()])
    arr = np.asarray(edge_lengths, dtype=float)
    if arr.shape != (Z.n_triangles, 3):
        raise InputError("edge lengths must be a dict, a callable or an (F, 3) array")
    seen: dict = {}
    for f, (a, b, c) in enumerate(Z.triangles.tolist()):
        for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
            key = (min(p, q), max(p, q))
            if key in seen and abs(seen[key] - arr[f, k]) > 1e-9 * max(1.0, arr[f, k]):
                raise InputError(f"inconsistent lengths {seen[key]} and {arr[f, k]} on edge {key}")
            seen[key] = arr[f, k]
    return arr


def assemble_Y(Zp: Subdivided, edge_lengths) -> Assembled:
    """Glue one TriangleComplexK per triangle of Z along the shared boundary edges."""
    Z = Zp.base
    D = _edge_lengths_per_triangle(Z, edge_lengths)
    rows, pieces = [], []
    for f, (a, b, c) in enumerate(Z.triangles.tolist()):
        try:
            K = triangle_complex(*D[f])
        except InputError as exc:
            raise InputError(f"triangle {f} ({a}, {b}, {c}): {exc}") from exc
        pieces.append(K)
        g = Zp.apex(f)
        l0, l1, l2 = K.boundary
        h0, h1, h2 = K.apex_lengths
        rows += [[a, b, g, l0, h1, h0], [b, c, g, l1, h2, h1], [c, a, g, l2, h0, h2]]
    # Z' coordinates give a display layout for OBJ export; Y's metric comes from the lengths only
    Y = build_complex(range(Zp.complex.n_vertices), rows, embedding=Zp.complex.embedding, strict=Z.strict)
    return Assembled(Y, Zp, pieces)


# ---------------------------------------------------------------------------
# snowsphere


@dataclass
class SquareSurface:
    """Square-faced surface: 3D coordinates and squares as ccw-from-outside corner ids."""

    coords: np.ndarray
    squares: np.ndarray
    side: float
    normals: np.ndarray


def _cube() -> SquareSurface:
    X = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float)

    def vid(p):
        return int(p[0] * 4 + p[1] * 2 + p[2])

    squares, normals = [], []
    for axis in range(3):
        for val in (0, 1):
            n = np.zeros(3)
            n[axis] = 1.0 if val else -1.0
            u, w = [a for a in range(3) if a != axis]
            corners = []
            for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = [0, 0, 0]
                p[axis], p[u], p[w] = val, du, dw
                corners.append(vid(p))
            e1 = X[corners[1]] - X[corners[0]]
            e2 = X[corners[3]] - X[corners[0]]
            if np.dot(np.cross(e1, e2), n) < 0:
                corners = corners[::-1]
            squares.append(corners)
            normals.append(n)
    return SquareSurface(X, np.array(squares), 1.0, np.array(normals))


def _refine(s: SquareSurface) -> SquareSurface:
    coords = [p for p in s.coords]
    edge_pts: dict = {}

    def new_point(p) -> int:
        coords.append(np.asarray(p, dtype=float))
        return len(coords) - 1

    def edge_points(a: int, b: int) -> tuple[int, int]:
        lo, hi = (a, b) if a < b else (b, a)
        if (lo, hi) not in edge_pts:
            P, Q = coords[lo], coords[hi]
            edge_pts[(lo, hi)] = (new_point(P + (Q - P) / 3.0), new_point(P + 2.0 * (Q - P) / 3.0))
        first, second = edge_pts[(lo, hi)]
        return (first, second) if a == lo else (second, first)

    h = s.side / 3.0
    squares, normals = [], []
    for sq, n in zip(s.squares.tolist(), s.normals):
        c0, c1, c2, c3 = sq
        grid = {(0, 0): c0, (3, 0): c1, (3, 3): c2, (0, 3): c3}
        e01, e12, e32, e03 = edge_points(c0, c1), edge_points(c1, c2), edge_points(c3, c2), edge_points(c0, c3)
        grid[(1, 0)], grid[(2, 0)] = e01
        grid[(3, 1)], grid[(3, 2)] = e12
        grid[(1, 3)], grid[(2, 3)] = e32
        grid[(0, 1)], grid[(0, 2)] = e03
        P0, P1, P3 = coords[c0], coords[c1], coords[c3]
        for i, j in ((1, 1), (2, 1), (2, 2), (1, 2)):
            grid[(i, j)] = new_point(P0 + i / 3.0 * (P1 - P0) + j / 3.0 * (P3 - P0))
        for i in range(3):
            for j in range(3):
                if (i, j) == (1, 1):
                    continue
                squares.append([grid[(i, j)], grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)]])
                normals.append(n)
        m = [grid[(1, 1)], grid[(2, 1)], grid[(2, 2)], grid[(1, 2)]]
        t = [new_point(coords[v] + n * h) for v in m]
        squares.append(t)
        normals.append(n)
        for k in range(4):
            a, b = m[k], m[(k + 1) % 4]
            ta, tb = t[k], t[(k + 1) % 4]
            squares.append([a, b, tb, ta])
            e = coords[b] - coords[a]
            wn = np.cross(e, n)
            normals.append(wn / np.linalg.norm(wn))
    return SquareSurface(np.array(coords), np.array(squares), h, np.array(normals))



def square_surface(stage: int) -> SquareSurface:
    s = _cube()
    for _ in range(stage):
        s = _refine(s)
    return s


def choose_diagonals(squares: np.ndarray, n_vertices: int, bounds=(6, 7, 8)) -> np.ndarray:
    """Pick one diagonal per square minimising the largest vertex star.

    A vertex with q squares and k diagonals has a star of 1 + 2(q + k)
    simplices. For each bound B in turn we solve the 0/1 feasibility program
    q + k <= B with HiGHS and return the first feasible assignment (0 for the
    c0-c2 diagonal, 1 for c1-c3).
    """
    S = squares.shape[0]
    q = np.bincount(squares.ravel(), minlength=n_vertices)
    # x_s = 1 selects c0-c2; load_v = sum over c0/c2 of x + sum over c1/c3 of (1 - x)
    rows = np.concatenate([squares[:, 0], squares[:, 2], squares[:, 1], squares[:, 3]])
    cols = np.tile(np.arange(S), 4)
    vals = np.concatenate([np.ones(2 * S), -np.ones(2 * S)])
    A = coo_matrix((vals, (rows, cols)), shape=(n_vertices, S)).tocsr()
    const = np.bincount(squares[:, [1, 3]].ravel(), minlength=n_vertices)
    for B in bounds:
        res = milp(
            np.zeros(S),
            constraints=LinearConstraint(A, -np.inf, B - q - const),
            integrality=np.ones(S),
            bounds=Bounds(0, 1),
        )
        if res.status == 0:
            return np.where(np.round(res.x) == 1, 0, 1)
    raise RuntimeError("no diagonal assignment within the requested star bounds")


def triangulate_squares(s: SquareSurface, diagonals: np.ndarray | None = None) -> MetricComplex:
    if diagonals is None:
        diagonals = choose_diagonals(s.squares, s.coords.shape[0])
    a, d = s.side, s.side * math.sqrt(2.0)
    rows = []
    for (c0, c1, c2, c3), k in zip(s.squares.tolist(), diagonals.tolist()):
        if k == 0:
            rows += [[c0, c1, c2, a, a, d], [c0, c2, c3, d, a, a]]
        else:
            rows += [[c0, c1, c3, a, d, a], [c1, c2, c3, a, a, d]]
    return build_complex(range(s.coords.shape[0]), rows, embedding=s.coords)


def snowsphere(stage: int) -> MetricComplex:
    """Stage-n snowsphere: the unit cube with n rounds of outward cubical caps, split into right-isosceles triangles.

    Vertex ids persist across stages: the vertices of stage n are the first
    vertices of stage n + 1.
    """
    if stage < 0:
        raise InputError("stage must be >= 0")
    if stage > SNOWSPHERE_MAX_STAGE:
        raise InputError(f"stage {stage} exceeds the guard {SNOWSPHERE_MAX_STAGE} (13^n growth)")
    return triangulate_squares(square_surface(stage))


# ---------------------------------------------------------------------------
# flat fixtures


def cube_surface() -> MetricComplex:
    return snowsphere(0)


def equilateral_grid(nx: int, ny: int, t: float = 1.0) -> MetricComplex:
    """Parallelogram of 2 * nx * ny equilateral triangles with side t."""
    idx = lambda i, j: j * (nx + 1) + i  # noqa: E731
    coords = np.array([[t * (i + 0.5 * j), t * j * math.sqrt(3.0) / 2.0] for j in range(ny + 1) for i in range(nx + 1)])
    faces = []
    for j in range(ny):
        for i in range(nx):
            faces += [[idx(i, j), idx(i + 1, j), idx(i, j + 1)], [idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]]
    rows = [[a, b, c, t, t, t] for a, b, c in faces]
    emb = np.hstack([coords, np.zeros((coords.shape[0], 1))])
    return build_complex(range(coords.shape[0]), rows, embedding=emb)


def grid_index(nx: int, i: int, j: int) -> int:
    return j * (nx + 1) + i


def rectangle_mesh(width: float, height: float, nx: int, ny: int) -> MetricComplex:
    """[0, width] x [0, height] cut into nx * ny rectangles, each split along one diagonal."""
    xs, ys = np.linspace(0, width, nx + 1), np.linspace(0, height, ny + 1)
    coords = np.array([[x, y] for y in ys for x in xs])
    faces = []
    for j in range(ny):
        for i in range(nx):
            a, b = grid_index(nx, i, j), grid_index(nx, i + 1, j)
            c, d = grid_index(nx, i + 1, j + 1), grid_index(nx, i, j + 1)
            faces += [[a, b, c], [a, c, d]]
    return complex_from_embedding(coords, faces)


def annulus_mesh(r_in: float, r_out: float, n_theta: int = 48, n_r: int = 4) -> MetricComplex:
    """Polygonal annulus; radii spaced geometrically. Inner ring is vertices 0..n_theta-1, outer ring the last n_theta."""
    radii = np.geomspace(r_in, r_out, n_r + 1)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    coords = np.array([[r * np.cos(a), r * np.sin(a)] for r in radii for a in th])
    faces = []
    for k in range(n_r):
        for i in range(n_theta):
            a, b = k * n_theta + i, k * n_theta + (i + 1) % n_theta
            c, d = b + n_theta, a + n_theta
            faces += [[a, b, c], [a, c, d]]
    return complex_from_embedding(coords, faces)


def flat_torus(n: int, t: float = 1.0) -> MetricComplex:
    """n x n periodic grid of unit squares (side t) split along the same diagonal."""
    idx = lambda i, j: (j % n) * n + (i % n)  # noqa: E731
    rows = []
    d = t * math.sqrt(2.0)
    for j in range(n):
        for i in range(n):
            a, b, c, e = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            rows += [[a, b, c, t, t, d], [a, c, e, d, t, t]]
    return build_complex(range(n * n), rows)


def qc_of_triangle_complex(d) -> float:
    return qc_certificate(triangle_complex(*d).complex).M


def interstage_deviation(n: int, m: int = 4, n_sources: int | None = None, seed: int = 0) -> float:
    """Sup-norm gap between the stage-n and stage-(n+1) intrinsic metrics on the stage-n vertices.

    Vertex ids persist across stages, so both metrics live on the first
    V_n vertices. Rows are restricted to ``n_sources`` seeded vertices when
    given (an under-estimate of the sup, exact on the sampled rows).
    """
    from scipy.sparse.csgraph import dijkstra

    from .simplicial import mesh_graph

    A, B = snowsphere(n), snowsphere(n + 1)
    V = A.n_vertices
    src = np.arange(V)
    if n_sources is not None and n_sources < V:
        src = np.sort(np.random.default_rng(seed).choice(V, size=n_sources, replace=False))
    dA = dijkstra(mesh_graph(A, m).graph, directed=False, indices=src)[:, :V]
    dB = dijkstra(mesh_graph(B, m).graph, directed=False, indices=src)[:, :V]
    return float(np.max(np.abs(dA - dB)))
