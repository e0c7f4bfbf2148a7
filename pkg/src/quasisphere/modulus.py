"""Discrete conformal 2-modulus of curve families on Steiner meshes.

Densities live on mesh nodes and carry the lumped area weights of the mesh,
so the energy is sum_v w_v rho_v^2. A curve is a mesh path from E to F
inside G; its rho-length is trapezoidal along edges,
sum_edges len * (rho_a + rho_b) / 2.

The minimisation over all paths is done by constraint generation: solve
the quadratic program over the paths seen so far, find the rho-shortest
E-F path, and add it while it is shorter than 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csc_matrix, csr_matrix, diags, vstack
from scipy.sparse.csgraph import connected_components, dijkstra

try:
    import clarabel
except ImportError:
    clarabel = None

from .constructions import annulus_mesh, rectangle_mesh
from .finite_metric import InputError
from .simplicial import MeshGraph, MetricComplex, mesh_graph

TINY_WEIGHT = 1e-12


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, lower, upper):
        super().__init__(msg)
        self.lower = lower
        self.upper = upper


def node_positions(mesh: MeshGraph) -> np.ndarray:
    """3D coordinates of every mesh node, from the complex embedding."""
    c = mesh.complex
    if c.embedding is None:
        raise InputError("complex has no embedding")
    n = mesh.lattice.sum(axis=1)[0]
    out = np.zeros((mesh.n_nodes, 3))
    bary = mesh.lattice / n
    for f in range(c.n_triangles):
        out[mesh.tri_nodes[f]] = bary @ c.embedding[c.triangles[f]]
    return out


@dataclass
class CurveFamily:
    """Mesh paths joining E and F inside G (node index sets)."""

    mesh: MeshGraph
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray | None = None

    def __post_init__(self):
        self.E = np.unique(np.asarray(self.E, dtype=int))
        self.F = np.unique(np.asarray(self.F, dtype=int))
        if self.G is None:
            self.G = np.arange(self.mesh.n_nodes)
        self.G = np.unique(np.asarray(self.G, dtype=int))
        if self.E.size == 0 or self.F.size == 0:
            raise InputError("E and F must be nonempty")
        if np.intersect1d(self.E, self.F).size:
            raise InputError("E and F must be disjoint")
        inG = np.zeros(self.mesh.n_nodes, dtype=bool)
        inG[self.G] = True
        if not inG[self.E].all() or not inG[self.F].all():
            raise InputError("E and F must lie in G")

    def to_json(self) -> dict:
        return {"E": self.E.tolist(), "F": self.F.tolist(), "G": self.G.tolist()}


@dataclass
class DensityField:
    rho: np.ndarray
    area_weights: np.ndarray

    @property
    def energy(self) -> float:
        return float(np.sum(self.area_weights * self.rho**2))

    def stats(self) -> dict:
        return {
            "energy": self.energy,
            "max": float(self.rho.max()),
            "support": int(np.count_nonzero(self.rho > 0)),
        }


@dataclass
class ModulusResult:
    value: float
    rho: DensityField
    certificate: dict
    iterations: int
    lower: float
    upper: float

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "iterations": self.iterations,
            "certificate": self.certificate,
            "rho_stats": self.rho.stats(),
        }


class _Restricted:
    """Edges of the mesh graph with both ends in G, indexed over G."""

    def __init__(self, fam: CurveFamily):
        g = fam.mesh.graph.tocoo()
        local = np.full(fam.mesh.n_nodes, -1)
        local[fam.G] = np.arange(fam.G.size)
        keep = (local[g.row] >= 0) & (local[g.col] >= 0) & (g.row < g.col)
        self.a = local[g.row[keep]]
        self.b = local[g.col[keep]]
        self.len = g.data[keep]
        self.n = fam.G.size
        self.E = local[fam.E]
        self.F = local[fam.F]
        self.w = fam.mesh.area_weights[fam.G]

    def graph(self, rho: np.ndarray) -> csr_matrix:
        wt = self.len * (rho[self.a] + rho[self.b]) / 2.0 + TINY_WEIGHT * self.len
        return csr_matrix(
            (np.concatenate([wt, wt]), (np.concatenate([self.a, self.b]), np.concatenate([self.b, self.a]))),
            shape=(self.n, self.n),
        )

    def edge_len(self) -> dict:
        return {(int(a), int(b)): float(ell) for a, b, ell in zip(self.a, self.b, self.len)}


def _path_coeffs(path, lens: dict, n: int) -> csr_matrix:
    acc: dict[int, float] = {}
    for u, v in zip(path[:-1], path[1:]):
        ell = lens[(u, v) if u < v else (v, u)]
        acc[u] = acc.get(u, 0.0) + ell / 2.0
        acc[v] = acc.get(v, 0.0) + ell / 2.0
    idx = np.fromiter(acc.keys(), dtype=int, count=len(acc))
    val = np.fromiter(acc.values(), dtype=float, count=len(acc))
    return csr_matrix((val, (np.zeros(idx.size, dtype=int), idx)), shape=(1, n))


def _shortest(R: _Restricted, rho: np.ndarray):
    """rho-lengths from E to every node, with predecessors."""
    g = R.graph(rho)
    dist, pred, _ = dijkstra(g, directed=False, indices=R.E, min_only=True, return_predecessors=True)
    return dist, pred


def _trace(pred: np.ndarray, t: int) -> list[int]:
    path = [int(t)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def _dual_qp(Q: np.ndarray, lam0: np.ndarray, gtol: float) -> np.ndarray:
    """argmin 1/2 lam Q lam - sum(lam) over lam >= 0."""

    def fg(lam):
        q = Q @ lam
        return 0.5 * lam @ q - lam.sum(), q - 1.0

    res = minimize(
        fg, lam0, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * lam0.size,
        options={"maxiter": 50000, "gtol": gtol, "ftol": 1e-16, "maxcor": 30},
    )
    return np.maximum(res.x, 0.0)


def mod2(
    fam: CurveFamily,
    tol: float = 1e-6,
    method: str = "auto",
    batch: int = 64,
    max_iter: int | None = None,
) -> ModulusResult:
    """Discrete 2-modulus with a bracket [lower, upper].

    method "paths" runs constraint generation over explicit E-F paths.
    method "potential" solves the same program in one sparse QP, replacing
    the path constraints by a potential phi with phi = 0 on E, phi >= 1 on
    F and |phi_b - phi_a| <= len_ab (rho_a + rho_b) / 2 on every edge.
    "auto" uses the potential form when clarabel is importable.

    lower is a dual value, upper the energy of the returned density after
    scaling it to be admissible on every mesh path.
    """
    if method not in ("auto", "paths", "potential"):
        raise InputError(f"unknown method {method!r}")
    R = _Restricted(fam)
    n = R.n
    # E and F in different components of G: the family is empty
    adj = csr_matrix((np.ones(R.a.size), (R.a, R.b)), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    if not np.intersect1d(lab[R.E], lab[R.F]).size:
        zero = DensityField(np.zeros(fam.mesh.n_nodes), fam.mesh.area_weights)
        return ModulusResult(0.0, zero, {"min_length": math.inf, "active_constraints": 0}, 0, 0.0, 0.0)
    w = np.maximum(R.w, 1e-300)
    if method == "auto":
        method = "potential" if clarabel is not None else "paths"
    if method == "potential":
        rho, lower, it, active = _solve_potential(R, w, tol)
    else:
        rho, lower, it, active = _solve_paths(R, w, tol, batch, max_iter)
    # scale to exact admissibility on the mesh paths
    ell = _exact_length(R, rho)
    if not ell > 0:
        raise NonConvergenceError("density is not admissible after solve", lower, math.inf)
    rho_adm = rho / ell
    value = float(np.sum(w * rho_adm**2))
    full = np.zeros(fam.mesh.n_nodes)
    full[fam.G] = rho_adm
    cert = {"min_length": _exact_length(R, rho_adm), "active_constraints": int(active), "method": method}
    return ModulusResult(value, DensityField(full, fam.mesh.area_weights), cert, it, min(lower, value), value)


def _exact_length(R: _Restricted, rho: np.ndarray) -> float:
    wt = R.len * (rho[R.a] + rho[R.b]) / 2.0
    # zero-weight edges would be dropped by the sparse graph; contract them to a tiny positive value
    wt = np.where(wt > 0, wt, 1e-300)
    g = csr_matrix(
        (np.concatenate([wt, wt]), (np.concatenate([R.a, R.b]), np.concatenate([R.b, R.a]))), shape=(R.n, R.n)
    )
    d = dijkstra(g, directed=False, indices=R.E, min_only=True)
    return float(d[R.F].min())


def _solve_potential(R: _Restricted, w: np.ndarray, tol: float):
    n, m = R.n, R.a.size
    k = np.arange(m)
    half = R.len / 2.0
    # rows: phi_b - phi_a - half (rho_a + rho_b) <= 0 and the mirrored row
    rows = np.concatenate([k, k, k, k, m + k, m + k, m + k, m + k])
    cols = np.concatenate([n + R.b, n + R.a, R.a, R.b, n + R.a, n + R.b, R.a, R.b])
    vals = np.concatenate([np.ones(m), -np.ones(m), -half, -half, np.ones(m), -np.ones(m), -half, -half])
    nf, ne = R.F.size, R.E.size
    A_edge = csr_matrix((vals, (rows, cols)), shape=(2 * m, 2 * n))
    A_F = csr_matrix((-np.ones(nf), (np.arange(nf), n + R.F)), shape=(nf, 2 * n))
    A_rho = csr_matrix((-np.ones(n), (np.arange(n), np.arange(n))), shape=(n, 2 * n))
    A_E = csr_matrix((np.ones(ne), (np.arange(ne), n + R.E)), shape=(ne, 2 * n))
    A = vstack([A_E, A_edge, A_F, A_rho]).tocsc()
    b = np.concatenate([np.zeros(ne), np.zeros(2 * m), -np.ones(nf), np.zeros(n)])
    P = csc_matrix((np.concatenate([2.0 * w, np.zeros(n)]), (np.arange(2 * n), np.arange(2 * n))), shape=(2 * n, 2 * n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = min(1e-8, tol)
    settings.tol_feas = min(1e-8, tol)
    solver = clarabel.DefaultSolver(
        P, np.zeros(2 * n), A, b, [clarabel.ZeroConeT(ne), clarabel.NonnegativeConeT(2 * m + nf + n)], settings
    )
    sol = solver.solve()
    if str(sol.status) not in ("Solved", "AlmostSolved"):
        raise NonConvergenceError(f"potential QP status {sol.status}", 0.0, math.inf)
    x = np.asarray(sol.x)
    rho = np.maximum(x[:n], 0.0)
    z = np.asarray(sol.z)[ne : ne + 2 * m]
    return rho, float(sol.obj_val_dual), int(sol.iterations), int(np.count_nonzero(z > 1e-9 * max(z.max(), 1e-300)))


def _solve_paths(R: _Restricted, w: np.ndarray, tol: float, batch: int, max_iter: int | None):
    n = R.n
    Winv = diags(1.0 / w)
    lens = R.edge_len()
    rho = np.zeros(n)
    C = None
    CW = None
    Q = np.zeros((0, 0))
    lam = np.zeros(0)
    seen: set = set()
    it = 0
    lower = 0.0
    gtol = 1e-10
    while True:
        dist, pred = _shortest(R, rho)
        dF = dist[R.F]
        ell = float(dF.min())
        if ell >= 1.0 - tol:
            break
        cap = 10 * lam.size + 1000 if max_iter is None else max_iter
        if it >= cap:
            raise NonConvergenceError(f"no convergence after {it} rounds", lower, math.inf)
        new = []
        for k in np.argsort(dF, kind="stable"):
            if dF[k] >= 1.0 - tol or len(new) >= batch:
                break
            path = _trace(pred, R.F[k])
            key = tuple(path)
            if key in seen:
                continue
            seen.add(key)
            new.append(_path_coeffs(path, lens, n))
        if not new:
            # violated paths are all active: the dual solve was not tight enough
            if gtol < 1e-15:
                raise NonConvergenceError("active constraints cannot be met", lower, math.inf)
            gtol *= 1e-2
        else:
            Cn = vstack(new).tocsr()
            CWn = Cn @ Winv
            if C is None:
                C, CW = Cn, CWn
                Q = (CWn @ Cn.T).toarray()
            else:
                cross = (CW @ Cn.T).toarray()
                Q = np.block([[Q, cross], [cross.T, (CWn @ Cn.T).toarray()]])
                C, CW = vstack([C, Cn]).tocsr(), vstack([CW, CWn]).tocsr()
            lam = np.concatenate([lam, np.zeros(len(new))])
        lam = _dual_qp(Q, lam, gtol)
        rho = CW.T @ lam
        lower = max(lower, float(2 * lam.sum() - lam @ Q @ lam))
        it += 1
    return rho, lower, it, lam.size


def admissible_length(fam: CurveFamily, rho) -> float:
    """Independent recomputation: rho-length of the shortest E-F path in G."""
    return _exact_length(_Restricted(fam), np.asarray(rho, dtype=float)[fam.G])


# ---------------------------------------------------------------------------
# balls and annuli


def modulus_meshes(c: MetricComplex, m: int) -> tuple[MeshGraph, MeshGraph]:
    """(distance mesh, modulus mesh) on the same node indexing."""
    return mesh_graph(c, m, complete=True), mesh_graph(c, m, complete=False)


@dataclass
class AnnulusReport:
    max_modulus: float
    witness: dict
    samples: list

    def to_json(self) -> dict:
        return {"max_modulus": self.max_modulus, "witness": self.witness, "samples": self.samples}


def annulus_condition(
    c: MetricComplex,
    centers=None,
    L: float = 2.0,
    m: int = 4,
    radii=None,
    tol: float = 1e-6,
    meshes=None,
) -> AnnulusReport:
    """Max of mod2(Gamma(closed B(a, r), X minus B(a, L r))) over sampled centers and dyadic r."""
    if L <= 1:
        raise InputError("L must exceed 1")
    dmesh, mmesh = meshes if meshes is not None else modulus_meshes(c, m)
    centers = list(range(c.n_vertices)) if centers is None else [int(a) for a in centers]
    D = dijkstra(dmesh.graph, directed=False, indices=centers)
    samples, best = [], (-1.0, {})
    for i, a in enumerate(centers):
        row = D[i]
        diam = float(row[np.isfinite(row)].max())
        rs = radii if radii is not None else [diam / L / 2**k for k in range(1, 4)]
        for r in rs:
            E = np.flatnonzero(row <= r)
            F = np.flatnonzero(row >= L * r)
            if E.size == 0 or F.size == 0:
                val = 0.0
            else:
                val = mod2(CurveFamily(mmesh, E, F), tol=tol).value
            samples.append({"center": a, "r": float(r), "modulus": val})
            if val > best[0]:
                best = (val, {"center": a, "r": float(r)})
    return AnnulusReport(max(best[0], 0.0), best[1], samples)


def telescoping_bound(M: float, L: float, r: float, R: float) -> float:
    """M / N with N the number of nested L-annuli between r and R."""
    if L <= 1 or M <= 0 or r <= 0:
        raise InputError("need L > 1, M > 0, r > 0")
    if R < L * r * (1 - 1e-12):
        raise InputError("R < L r: no full annulus fits")
    N = int(math.floor(math.log(R / r) / math.log(L) + 1e-9))
    return M / max(N, 1)


# ---------------------------------------------------------------------------
# Loewner profiling


@dataclass
class LoewnerSample:
    relative_distance: float
    modulus: float


def relative_distance(D_E: np.ndarray, E: np.ndarray, F: np.ndarray, diamE: float, diamF: float) -> float:
    return float(D_E[F].min() / min(diamE, diamF))


def loewner_profile(c: MetricComplex, pairs, m: int = 4, tol: float = 1e-6, meshes=None) -> dict:
    """Relative distance against modulus for sampled continuum pairs (node sets)."""
    dmesh, mmesh = meshes if meshes is not None else modulus_meshes(c, m)
    out = []
    for E, F in pairs:
        E = np.unique(np.asarray(E, dtype=int))
        F = np.unique(np.asarray(F, dtype=int))
        if E.size < 2 or F.size < 2:
            continue
        DE = dijkstra(dmesh.graph, directed=False, indices=E)
        DF = dijkstra(dmesh.graph, directed=False, indices=F)
        diamE = float(DE[:, E].max())
        diamF = float(DF[:, F].max())
        delta = float(DE[:, F].min() / min(diamE, diamF))
        val = mod2(CurveFamily(mmesh, E, F), tol=tol).value
        out.append(LoewnerSample(delta, val))
    out.sort(key=lambda s: s.relative_distance)
    # candidate phi: running minimum from the left, a decreasing lower envelope
    env, cur = [], math.inf
    for s in out:
        cur = min(cur, s.modulus)
        env.append((s.relative_distance, cur))
    return {"samples": [(s.relative_distance, s.modulus) for s in out], "phi": env}


def geodesic_nodes(mesh: MeshGraph, u: int, v: int) -> np.ndarray:
    """Nodes of one shortest mesh path from u to v; a mesh-connected continuum."""
    _, pred = dijkstra(mesh.graph, directed=False, indices=int(u), return_predecessors=True)
    if pred[v] < 0 and u != v:
        raise InputError("nodes are not connected")
    return np.array(_trace(pred, int(v)))


# ---------------------------------------------------------------------------
# flat fixtures with closed-form moduli

MODULUS_FIXTURES = {
    # name: (exact value, relative tolerance)
    "rectangle": (1.0 / 3.0, 0.10),
    "square": (1.0, 0.10),
    "annulus": (2.0 * math.pi, 0.10),
}


def side_family(width: float, height: float, nx: int, ny: int, m: int, across: bool = True) -> CurveFamily:
    """Curves in a flat rectangle joining its left and right sides (or bottom and top with across=False)."""
    c = rectangle_mesh(width, height, nx, ny)
    mesh = mesh_graph(c, m, complete=False)
    pos = node_positions(mesh)
    x, span = (pos[:, 0], width) if across else (pos[:, 1], height)
    return CurveFamily(mesh, np.flatnonzero(x <= 1e-9 * span), np.flatnonzero(x >= span * (1 - 1e-9)))


def fixture_family(name: str, m: int) -> CurveFamily:
    """Curve family of a named fixture at mesh level m; exact modulus in MODULUS_FIXTURES."""
    if name == "rectangle":
        return side_family(3.0, 1.0, 3, 1, m)
    if name == "square":
        return side_family(1.0, 1.0, 1, 1, m)
    if name != "annulus":
        raise InputError(f"unknown fixture {name!r}")
    nt = 24
    mesh = mesh_graph(annulus_mesh(1.0, math.e, n_theta=nt, n_r=2), m, complete=False)
    rad = np.hypot(*node_positions(mesh)[:, :2].T)
    # outer boundary is a polygon: its edge midpoints sit at e cos(pi / nt)
    E = np.flatnonzero(rad <= 1.0 + 1e-9)
    F = np.flatnonzero(rad >= math.e * math.cos(math.pi / nt) - 1e-9)
    return CurveFamily(mesh, E, F)
