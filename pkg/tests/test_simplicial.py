import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasisphere.constructions import cube_surface, equilateral_grid, snowsphere
from quasisphere.simplicial import (
    ComplexError,
    MetricComplex,
    S_of,
    build_complex,
    check_neighborhood_inclusion,
    complex_from_embedding,
    epsilon_x,
    intrinsic_distance,
    mesh_graph,
    qc_certificate,
    simplex_distortion,
    star_sets,
)

SQRT3 = math.sqrt(3.0)


def unit_square(diagonal_02=True):
    coords = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    faces = [[0, 1, 2], [0, 2, 3]] if diagonal_02 else [[0, 1, 3], [1, 2, 3]]
    return complex_from_embedding(coords, faces)


def linear_map_distortion(P, Q):
    """Oracle for M2: singular values of the map between diameter-normalised triangles."""
    P = P / max(np.linalg.norm(P[i] - P[j]) for i, j in itertools.combinations(range(3), 2))
    A = np.column_stack([Q[1] - Q[0], Q[2] - Q[0]]) @ np.linalg.inv(np.column_stack([P[1] - P[0], P[2] - P[0]]))
    s = np.linalg.svd(A, compute_uv=False)
    return max(s[0], 1 / s[1])


def test_single_triangle():
    c = build_complex([0, 1, 2], [[0, 1, 2, 1, 1, 1]])
    assert len(c.edges) == 3 and c.n_triangles == 1


def test_degenerate_rejected():
    with pytest.raises(ComplexError):
        build_complex([0, 1, 2], [[0, 1, 2, 1, 1, 2]])


def test_inconsistent_edge_rejected():
    with pytest.raises(ComplexError):
        build_complex(range(4), [[0, 1, 2, 1, 1, 1], [0, 2, 3, 1.1, 1, 1]])


def test_nonmanifold_strict_and_relaxed():
    rows = [[0, 1, k, 1, 1, 1] for k in (2, 3, 4)]
    with pytest.raises(ComplexError):
        build_complex(range(5), rows)
    assert build_complex(range(5), rows, strict=False).n_triangles == 3


def test_cube_surface_closed():
    c = cube_surface()
    assert c.n_triangles == 12 and c.is_closed_surface() and c.euler_characteristic() == 2
    assert c.is_consistently_oriented()


def test_json_roundtrip():
    c = snowsphere(1)
    c2 = MetricComplex.from_json(json.loads(json.dumps(c.to_json())))
    assert np.array_equal(c.triangles, c2.triangles)
    assert np.array_equal(c.lengths, c2.lengths)
    assert c.to_obj().count("\nf ") + c.to_obj().startswith("f ") == c.n_triangles


def test_epsilon_examples():
    c = build_complex([0, 1, 2], [[0, 1, 2, 1, 1, 1]])
    assert epsilon_x(c, 0) == pytest.approx(SQRT3 / 2, rel=1e-14)
    sq = unit_square()
    # vertex 1 is the right-angle corner of triangle (0, 1, 2)
    assert epsilon_x(sq, 1) == pytest.approx(math.sqrt(2) / 2, rel=1e-14)


def test_mesh_level_zero_single_triangle():
    c = build_complex([0, 1, 2], [[0, 1, 2, 1.0, 1.5, 2.0]])
    g = mesh_graph(c, 0)
    assert g.n_nodes == 3
    d = g.graph.toarray()
    assert d[0, 1] == 1.0 and d[1, 2] == 1.5 and d[0, 2] == 2.0


def test_square_diagonal_distances():
    sq = unit_square(True)
    assert intrinsic_distance(sq, 0, 2, m=0)[0] == pytest.approx(math.sqrt(2), rel=1e-14)
    assert intrinsic_distance(sq, 1, 3, m=0)[0] == pytest.approx(2.0)
    assert intrinsic_distance(sq, 1, 3, m=8)[0] <= 1.46


def test_vertex_distance_bounds():
    c = snowsphere(1)
    g = mesh_graph(c, 4)
    D = g.all_distances(range(c.n_vertices))[:, : c.n_vertices]
    for f in range(c.n_triangles):
        for a, b in itertools.permutations(c.triangles[f].tolist(), 2):
            assert epsilon_x(c, a) <= D[a, b] + 1e-12
            assert D[a, b] <= c.diam(f) + 1e-12
            assert D[a, b] == pytest.approx(c.edge_length(a, b), rel=1e-14)


def test_cube_antipodal():
    c = cube_surface()
    emb = c.embedding
    a = int(np.argmin(emb.sum(axis=1)))
    b = int(np.argmax(emb.sum(axis=1)))
    up, low = intrinsic_distance(c, a, b, m=16)
    assert up <= math.sqrt(5) + 0.02
    assert low <= up


def random_flat_complex(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    pts = np.array([[i, j] for j in range(k + 1) for i in range(k + 1)], dtype=float)
    pts += rng.uniform(-0.2, 0.2, size=pts.shape)
    faces = []
    for j in range(k):
        for i in range(k):
            a, b, c, d = j * (k + 1) + i, j * (k + 1) + i + 1, (j + 1) * (k + 1) + i + 1, (j + 1) * (k + 1) + i
            faces += [[a, b, c], [a, c, d]] if rng.random() < 0.5 else [[a, b, d], [b, c, d]]
    return complex_from_embedding(pts, faces)


@pytest.mark.parametrize("seed", range(20))
def test_mesh_distance_monotone_in_level(seed):
    c = random_flat_complex(seed)
    prev = None
    for m in (0, 2, 4, 8, 16):
        D = mesh_graph(c, m).all_distances(range(c.n_vertices))[:, : c.n_vertices]
        if prev is not None:
            assert np.all(D <= prev + 1e-12)
        prev = D
    # flat and convex: the Euclidean distance is a lower bound
    e = np.linalg.norm(c.embedding[:, None] - c.embedding[None], axis=2)
    assert np.all(prev >= e - 1e-12)


def test_qc_equilateral_grid():
    q = qc_certificate(equilateral_grid(5, 5))
    assert q.M2 == pytest.approx(1.0, abs=1e-12) and q.M3 == 1.0
    assert q.M1 == 13  # interior vertex: 6 triangles + 6 edges + itself


def test_qc_right_isosceles_matches_linear_map_oracle():
    P = np.array([[0, 0], [1, 0], [0, 1.0]])
    Q = np.array([[0, 0], [1, 0], [0.5, SQRT3 / 2]])
    oracle = linear_map_distortion(P, Q)
    assert simplex_distortion(1.0, math.sqrt(2), 1.0) == pytest.approx(oracle, rel=1e-12)
    assert qc_certificate(cube_surface()).M2 == pytest.approx(oracle, rel=1e-12)


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(0.05, 0.95))
def test_simplex_distortion_matches_oracle(a, b, frac):
    # triangle from two sides and an angle
    ang = frac * math.pi
    P = np.array([[0, 0], [a, 0], [b * math.cos(ang), b * math.sin(ang)]])
    l01, l12, l20 = a, np.linalg.norm(P[2] - P[1]), b
    if min(l01, l12, l20) < 1e-3:
        return
    Q = np.array([[0, 0], [1, 0], [0.5, SQRT3 / 2]])
    assert simplex_distortion(l01, l12, l20) == pytest.approx(linear_map_distortion(P, Q), rel=1e-9)


def test_qc_one_shape_has_unit_M3():
    assert qc_certificate(snowsphere(2)).M3 == 1.0


def test_star_counts():
    g = equilateral_grid(4, 4)
    interior = [v for v in range(g.n_vertices) if len(g.neighbors[v]) == 6][0]
    assert len(star_sets(g, interior)) == 13
    iso = build_complex([0, 1, 2], [[0, 1, 2, 1, 1, 1]])
    assert len(S_of(iso, (0, 1, 2))) == 7


def test_star_of_interior_triangle():
    g = equilateral_grid(6, 6)
    # a triangle whose three vertices are all interior
    f = next(f for f in range(g.n_triangles) if all(len(g.neighbors[v]) == 6 for v in g.triangles[f]))
    tris = {s for s in S_of(g, g.triangles[f]) if s[0] == "t"}
    assert len(tris) == 13  # A plus 12 surrounding triangles


def test_neighborhood_inclusion():
    iso = build_complex([0, 1, 2], [[0, 1, 2, 1, 1, 1]])
    assert check_neighborhood_inclusion(iso, 0).r == math.inf
    g = equilateral_grid(6, 6)
    f = next(f for f in range(g.n_triangles) if all(len(g.neighbors[v]) == 6 for v in g.triangles[f]))
    r = check_neighborhood_inclusion(g, f, m=8)
    assert r.r >= 0.4 and r.r <= SQRT3 / 2 + 1e-12


def test_neighborhood_inclusion_uniform_on_snowsphere():
    c = snowsphere(1)
    mesh = mesh_graph(c, 4)
    ratios = [check_neighborhood_inclusion(c, f, mesh=mesh).ratio for f in range(c.n_triangles)]
    assert min(ratios) > 0.2
