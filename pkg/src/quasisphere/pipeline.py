"""From a triangulated base surface and sampled target distances to a glued
polyhedral space (Y, d~), with certificates.

Steps: subdivide every triangle of Z at its barycenter; give each original
edge the length alpha * d_X of its endpoints and replace each subdivided
triangle by the three-triangle complex with that boundary; then glue the
target distances onto the original vertices of Y.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .approximation import (
    certified_L,
    check_axioms,
    image_approximation,
    skeleton_approximation,
)
from .constructions import assemble_Y, snowsphere, subdivide3
from .finite_metric import (
    FiniteMetric,
    InputError,
    bilip_constant,
    eps_isometry_cert,
    qs_profile,
)
from .glue import glue
from .simplicial import MetricComplex, epsilon_all, mesh_graph, qc_certificate

CONGRUENCE_TOL = 1e-9


@dataclass
class PipelineInput:
    """Base complex Z and the target distances d_X on its vertices.

    ``target_dist`` is indexed like Z's vertices (vertex v sits at target
    point tau(v), recorded in ``target_dist.points``). ``extra_density``
    optionally lists, for a denser target sample, each point's distance to
    the image of the vertices.
    """

    Z: MetricComplex
    target_dist: FiniteMetric
    alpha: float | str = "auto"
    mesh_level: int = 4
    sample: str = "vertices"
    distortion: str = "bilip"
    extra_density: np.ndarray | None = None
    axioms: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.target_dist.n != self.Z.n_vertices:
            raise InputError(
                f"target has {self.target_dist.n} points but Z has {self.Z.n_vertices} vertices"
            )
        shapes = np.sort(self.Z.lengths, axis=1)
        if np.max(np.abs(shapes - shapes[0])) > CONGRUENCE_TOL * max(1.0, shapes.max()):
            raise InputError("triangles of Z are not congruent")
        if self.sample not in ("vertices", "mesh"):
            raise InputError("sample must be 'vertices' or 'mesh'")
        if self.distortion not in ("bilip", "qs", "both", "none"):
            raise InputError("distortion must be one of bilip, qs, both, none")
        if not (self.alpha == "auto" or (isinstance(self.alpha, (int, float)) and self.alpha > 0)):
            raise InputError("alpha must be positive or 'auto'")
        if self.sample == "mesh" and self.mesh_level < 2:
            raise InputError("mesh sample needs mesh level >= 2")

    @property
    def t(self) -> float:
        return float(self.Z.lengths.min())


@dataclass
class PipelineOutput:
    Y: MetricComplex
    Zp: object
    alpha: float
    sample: np.ndarray
    d_Y: FiniteMetric
    d_S: np.ndarray
    glued: object
    phi: np.ndarray
    certs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def d_tilde(self) -> FiniteMetric:
        return self.glued.result

    @property
    def passed(self) -> bool:
        keys = ("precondition", "agrees_on_S", "separation", "axioms", "image_axioms")
        return all(self.certs[k]["ok"] for k in keys if k in self.certs)

    def report(self) -> dict:
        out = {"alpha": self.alpha, "passed": self.passed, "n_sample": int(self.sample.size)}
        for k, v in self.certs.items():
            out[k] = v.to_json() if hasattr(v, "to_json") else v
        out["timings"] = self.timings
        return out


def _edge_lengths(Z: MetricComplex, target: FiniteMetric, alpha: float) -> dict:
    return {(a, b): alpha * float(target.dist[a, b]) for a, b in Z.edges}


def _sample_nodes(Y: MetricComplex, mesh, sample: str) -> np.ndarray:
    if sample == "vertices":
        return np.arange(Y.n_vertices)
    return np.arange(mesh.n_nodes)


def _sample_metric(mesh, nodes: np.ndarray) -> np.ndarray:
    d = dijkstra(mesh.graph, directed=False, indices=nodes)[:, nodes]
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def select_alpha(dY1_vertices: np.ndarray, target: FiniteMetric) -> float:
    """Smallest alpha with d_S <= alpha * d_Y1 on all vertex pairs, nudged up a few ulps.

    Y's distances scale exactly linearly in alpha, so the ratio is computed
    once on the unit-alpha complex.
    """
    d1 = np.asarray(dY1_vertices, dtype=float)
    if not np.all(np.isfinite(d1)):
        raise InputError("unit-alpha complex is disconnected")
    mask = ~np.eye(d1.shape[0], dtype=bool)
    alpha = float(np.max(target.dist[mask] / d1[mask])) if mask.any() else 1.0
    for _ in range(64):
        if np.all(target.dist <= alpha * d1):
            return alpha
        alpha = float(np.nextafter(alpha, math.inf))
    raise RuntimeError("could not enforce d_S <= d_Y numerically")


def run_pipeline(inp: PipelineInput) -> PipelineOutput:
    inp.validate()
    Z, target, m = inp.Z, inp.target_dist, inp.mesh_level
    timings = {}
    t0 = time.perf_counter()
    Zp = subdivide3(Z)
    unit = assemble_Y(Zp, _edge_lengths(Z, target, 1.0)).Y
    mesh1 = mesh_graph(unit, m)
    nodes = _sample_nodes(unit, mesh1, inp.sample)
    dY1 = _sample_metric(mesh1, nodes)
    V = Z.n_vertices
    timings["unit_complex"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    alpha = select_alpha(dY1[:V, :V], target) if inp.alpha == "auto" else float(inp.alpha)
    Y = assemble_Y(Zp, _edge_lengths(Z, target, alpha)).Y
    dY = alpha * dY1
    d_S = target.dist.copy()
    excess = float(np.max(d_S - dY[:V, :V]))
    base = FiniteMetric(tuple(int(x) for x in nodes), dY)
    if excess > 0:
        raise InputError(f"d_S exceeds d_Y by {excess:.3g}; alpha = {alpha} is too small")
    g = glue(base, np.arange(V), d_S, tol=0.0)
    timings["glue"] = time.perf_counter() - t0

    certs: dict = {}
    certs["qc"] = qc_certificate(Y)
    certs["precondition"] = {"ok": excess <= 0.0, "max_excess": excess}
    dev2 = float(np.max(np.abs(g.result.dist[:V, :V] - d_S)))
    certs["agrees_on_S"] = {"ok": dev2 == 0.0 and g.on_S_rounding <= 1e-12, "max_dev": dev2, "rounding": g.on_S_rounding}
    adj = [float(dY[a, b] / d_S[a, b]) for a, b in Z.edges]
    certs["adjacent_L"] = {"ok": True, "L": max(adj)}

    # phi: Y sample -> Z vertices (apex of a triangle goes to its first corner)
    t0 = time.perf_counter()
    phi = _phi(Zp, mesh1, nodes)
    cert = eps_isometry_cert(
        phi,
        g.result,
        target,
        density_dist=inp.extra_density,
    )
    certs["eps_iso"] = cert
    timings["eps_iso"] = time.perf_counter() - t0

    # the domain side: Z' with its own intrinsic metric, on the same node indices
    t0 = time.perf_counter()
    meshZ = mesh_graph(Zp.complex, m)
    dZ = FiniteMetric(tuple(int(x) for x in nodes), _sample_metric(meshZ, nodes))
    eps = epsilon_all(Zp.complex)
    nv = Zp.complex.n_vertices
    dv = dZ.dist[:nv, :nv] + np.diag(np.full(nv, np.inf))
    sep = float(np.min(dv.min(axis=1) / eps))
    certs["separation"] = {"ok": sep >= 1.0 - 1e-12, "min_ratio": sep}
    ident = np.arange(nodes.size)
    if inp.distortion in ("bilip", "both"):
        certs["bilip"] = {"ok": True, "lambda": bilip_constant(ident, dZ, g.result)}
    if inp.distortion in ("qs", "both"):
        certs["qs"] = qs_profile(ident, dZ, g.result, seed=inp.seed)
    timings["distortion"] = time.perf_counter() - t0

    if inp.axioms:
        t0 = time.perf_counter()
        level = max(m, 2)
        meshA = meshZ if level == m else mesh_graph(Zp.complex, level)
        sk = skeleton_approximation(Zp.complex, mesh=meshA)
        K = int(math.ceil(qc_certificate(Zp.complex).M))
        L = certified_L(sk, K)
        rep = check_axioms(sk, K, L, seed=inp.seed)
        certs["axioms"] = {"ok": rep.ok, "K": K, "L": L, "report": rep.to_json()}
        if inp.sample == "mesh":
            img = image_approximation(sk, np.arange(meshA.n_nodes), g.result)
            L2 = certified_L(img, K)
            rep2 = check_axioms(img, K, L2, seed=inp.seed)
            certs["image_axioms"] = {"ok": rep2.ok, "K": K, "L": L2, "report": rep2.to_json()}
        timings["axioms"] = time.perf_counter() - t0
    return PipelineOutput(Y, Zp, alpha, nodes, base, d_S, g, phi, certs, timings)


def _phi(Zp, mesh, nodes: np.ndarray) -> np.ndarray:
    """Send each sampled node of Y to a vertex of Z: a node inside (or on) the piece
    over triangle f goes to the first corner of f, vertices of Z to themselves."""
    Z = Zp.base
    V = Z.n_vertices
    out = np.empty(nodes.size, dtype=int)
    first = Z.triangles[:, 0]
    for i, x in enumerate(nodes.tolist()):
        if x < V:
            out[i] = x
        elif x < Zp.complex.n_vertices:
            out[i] = first[x - V]
        else:
            f = mesh.node_triangles[x][0] // 3
            out[i] = first[f]
    return out


# ---------------------------------------------------------------------------
# multi-scale fits


@dataclass
class EpsBoundReport:
    t: list
    eps: list
    C1: float
    C2: float
    monotone: bool
    ratios: list

    def to_json(self) -> dict:
        return {"t": self.t, "eps": self.eps, "C1": self.C1, "C2": self.C2, "monotone": self.monotone, "ratios": self.ratios}


def eps_bound_report(eps, t, H, C2_grid=None) -> EpsBoundReport:
    """Fit eps(t) <= 4 C1 H(C2 t) over the measured scales.

    For each C2 on a log grid the smallest admissible C1 is taken; the
    reported pair minimises the worst-case slack max_i 4 C1 H(C2 t_i) / eps_i.
    """
    eps = np.asarray(eps, dtype=float)
    t = np.asarray(t, dtype=float)
    if eps.size < 3:
        raise InputError("need at least three scales to fit")
    order = np.argsort(t)[::-1]
    eps, t = eps[order], t[order]
    H = H if callable(H) else (lambda s: s)
    grid = np.geomspace(1e-2, 1e2, 81) if C2_grid is None else np.asarray(C2_grid)
    best = None
    for C2 in grid:
        h = np.array([float(H(C2 * ti)) for ti in t])
        if np.any(h <= 0):
            continue
        C1 = float(np.max(eps / (4 * h)))
        slack = float(np.max(4 * C1 * h / eps))
        if best is None or slack < best[0]:
            best = (slack, C1, float(C2))
    if best is None:
        raise InputError("distortion function vanishes on all tried scales")
    monotone = bool(np.all(np.diff(eps) < 0))
    return EpsBoundReport(t.tolist(), eps.tolist(), best[1], best[2], monotone, (eps / t).tolist())


# ---------------------------------------------------------------------------
# target families


@dataclass
class SmoothPerturbation:
    """x -> x + sum_k a_k u_k sin(w_k . x + phase_k) on the plane, with |D - I| <= strength."""

    amps: np.ndarray
    dirs: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray
    strength: float

    @property
    def lam(self) -> float:
        """Bi-Lipschitz constant implied by the derivative bound."""
        return max(1.0 + self.strength, 1.0 / (1.0 - self.strength))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        arg = x @ self.freqs.T + self.phases
        return x + (np.sin(arg) * self.amps) @ self.dirs


def smooth_perturbation(seed: int = 0, strength: float = 1.0 / 3.0, modes: int = 4) -> SmoothPerturbation:
    if not 0 <= strength < 1:
        raise InputError("strength must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, modes)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    fang = rng.uniform(0, 2 * np.pi, modes)
    fmag = rng.uniform(2.0, 6.0, modes)
    freqs = np.column_stack([fmag * np.cos(fang), fmag * np.sin(fang)])
    amps = strength / (modes * fmag)
    return SmoothPerturbation(amps, dirs, freqs, rng.uniform(0, 2 * np.pi, modes), strength)


def perturbed_metric(Z: MetricComplex, phi: SmoothPerturbation) -> FiniteMetric:
    if Z.embedding is None:
        raise InputError("perturbed target needs an embedded base")
    return FiniteMetric.from_coords(phi(Z.embedding[:, :2]))


@dataclass
class SnowsphereTarget:
    Z: MetricComplex
    target: FiniteMetric
    density: np.ndarray


def snowsphere_target(base_stage: int, target_stage: int = 3, m: int = 2) -> SnowsphereTarget:
    """Stage-``target_stage`` intrinsic distances among the stage-``base_stage`` vertices.

    Vertex ids persist across stages, so the base vertices are the first
    vertices of the target. The density sample is every node of the
    target mesh.
    """
    if target_stage < base_stage:
        raise InputError("target stage must not be coarser than the base")
    Z = snowsphere(base_stage)
    T = snowsphere(target_stage)
    mesh = mesh_graph(T, m)
    V = Z.n_vertices
    D = dijkstra(mesh.graph, directed=False, indices=np.arange(V))
    dens = D.min(axis=0)
    d = D[:, :V]
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return SnowsphereTarget(Z, FiniteMetric(tuple(range(V)), d), dens)


def self_target(Z: MetricComplex, m: int = 4) -> FiniteMetric:
    """Z's own intrinsic distances on its vertices."""
    return mesh_graph(Z, m).metric()
