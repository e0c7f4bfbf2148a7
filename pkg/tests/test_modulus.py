import math

import numpy as np
import pytest

from quasisphere.constructions import equilateral_grid, flat_torus, rectangle_mesh
from quasisphere.finite_metric import InputError
from quasisphere.modulus import (
    MODULUS_FIXTURES,
    CurveFamily,
    admissible_length,
    annulus_condition,
    fixture_family,
    geodesic_nodes,
    loewner_profile,
    mod2,
    modulus_meshes,
    node_positions,
    side_family,
    telescoping_bound,
)
from quasisphere.simplicial import build_complex, mesh_graph


def brute_length(fam, rho):
    """Bellman-Ford relaxation over the trapezoid edge weights, restricted to G."""
    mesh = fam.mesh
    inG = np.zeros(mesh.n_nodes, dtype=bool)
    inG[fam.G] = True
    g = mesh.graph.tocoo()
    keep = inG[g.row] & inG[g.col]
    a, b, ln = g.row[keep], g.col[keep], g.data[keep]
    w = ln * (rho[a] + rho[b]) / 2
    d = np.full(mesh.n_nodes, np.inf)
    d[fam.E] = 0.0
    for _ in range(mesh.n_nodes):
        nd = d.copy()
        np.minimum.at(nd, b, d[a] + w)
        if np.array_equal(nd, d):
            break
        d = nd
    return d[fam.F].min()


# closed-form fixtures


@pytest.mark.parametrize("name", ["rectangle", "square"])
def test_flat_fixtures(name):
    expected, rel = MODULUS_FIXTURES[name]
    res = mod2(fixture_family(name, 16))
    assert abs(res.value - expected) <= rel * expected
    # the lattice discretisation is already within 0.1% at this level
    assert res.value == pytest.approx(expected, rel=1e-3)


@pytest.mark.slow
def test_annulus_fixture():
    expected, rel = MODULUS_FIXTURES["annulus"]
    res = mod2(fixture_family("annulus", 16))
    assert abs(res.value - expected) <= rel * expected


def test_lower_and_upper_bracket_value():
    res = mod2(fixture_family("rectangle", 8))
    assert res.lower <= res.value == res.upper
    assert res.upper - res.lower <= 1e-6 * res.value


def test_solvers_agree():
    fam = side_family(2.0, 1.0, 2, 1, 6)
    a = mod2(fam, method="potential", tol=1e-9)
    b = mod2(fam, method="paths", tol=1e-9)
    assert a.value == pytest.approx(b.value, rel=1e-6)


def test_unknown_method():
    with pytest.raises(InputError):
        mod2(fixture_family("square", 2), method="simplex")


def test_admissibility_recomputed_independently():
    fam = side_family(2.0, 1.0, 2, 1, 4)
    res = mod2(fam)
    rho = res.rho.rho
    assert admissible_length(fam, rho) >= 1 - 1e-9
    assert brute_length(fam, rho) >= 1 - 1e-9
    assert res.rho.energy == pytest.approx(res.value)


def test_conjugate_families_multiply_to_one():
    across = mod2(side_family(2.0, 1.0, 2, 1, 8)).value
    along = mod2(side_family(2.0, 1.0, 2, 1, 8, across=False)).value
    assert across * along == pytest.approx(1.0, rel=0.15)


def test_monotone_under_inclusion():
    fam = side_family(2.0, 1.0, 2, 1, 6)
    pos = node_positions(fam.mesh)
    # fewer curves: F shrinks to the lower half of the right side
    sub = CurveFamily(fam.mesh, fam.E, fam.F[pos[fam.F, 1] <= 0.5 + 1e-9])
    # restricting G removes curves as well
    G = np.flatnonzero(pos[:, 1] <= 0.5 + 1e-9)
    strip = CurveFamily(fam.mesh, np.intersect1d(fam.E, G), np.intersect1d(fam.F, G), G)
    full = mod2(fam).value
    assert mod2(sub).value <= full + 1e-9
    assert mod2(strip).value <= full + 1e-9


def test_disconnected_family_has_zero_modulus():
    c = build_complex(range(6), [[0, 1, 2, 1, 1, 1], [3, 4, 5, 1, 1, 1]])
    mesh = mesh_graph(c, 2, complete=False)
    res = mod2(CurveFamily(mesh, [0], [4]))
    assert res.value == 0.0
    assert res.certificate["min_length"] == math.inf


def test_family_validation():
    mesh = mesh_graph(equilateral_grid(1, 1), 2, complete=False)
    with pytest.raises(InputError):
        CurveFamily(mesh, [], [1])
    with pytest.raises(InputError):
        CurveFamily(mesh, [0, 1], [1, 2])
    with pytest.raises(InputError):
        CurveFamily(mesh, [0], [1], G=[0, 2])


def test_modulus_scale_invariant():
    a = mod2(side_family(2.0, 1.0, 2, 1, 4)).value
    b = mod2(side_family(20.0, 10.0, 2, 1, 4)).value
    assert a == pytest.approx(b, rel=1e-6)


# annuli


def test_telescoping_examples():
    assert telescoping_bound(5.0, 2.0, 1.0, 8.0) == pytest.approx(5.0 / 3.0)
    assert telescoping_bound(4.0, 2.0, 1.0, 2.0) == pytest.approx(4.0)
    with pytest.raises(InputError):
        telescoping_bound(4.0, 2.0, 1.0, 1.5)


def test_telescoping_bounds_direct_modulus():
    c = rectangle_mesh(8.0, 8.0, 8, 8)
    dmesh, mmesh = modulus_meshes(c, 4)
    center = int(np.argmin(np.linalg.norm(c.embedding[:, :2] - 4.0, axis=1)))
    D = dmesh.all_distances([center])[0]
    L = 2.0
    radii = [0.5, 1.0]
    M = max(
        mod2(CurveFamily(mmesh, np.flatnonzero(D <= r), np.flatnonzero(D >= L * r))).value for r in radii
    )
    r, R = 0.5, 2.0
    direct = mod2(CurveFamily(mmesh, np.flatnonzero(D <= r), np.flatnonzero(D >= R))).value
    assert direct <= telescoping_bound(M, L, r, R) * (1 + 1e-6)


def test_annulus_condition_on_torus():
    rep = annulus_condition(flat_torus(6), centers=[0, 14], L=2.0, m=4)
    # planar reference: 2 pi / log 2 plus discretisation slack
    assert 0 < rep.max_modulus <= 2 * math.pi / math.log(2) + 0.5
    assert rep.witness["center"] in (0, 14)


def test_annulus_condition_single_triangle_is_zero():
    c = build_complex(range(3), [[0, 1, 2, 1, 1, 1]])
    rep = annulus_condition(c, L=2.0, m=4, radii=[2.0])
    assert rep.max_modulus == 0.0


def test_annulus_condition_rejects_small_L():
    with pytest.raises(InputError):
        annulus_condition(flat_torus(4), L=1.0)


# Loewner profile


def test_loewner_profile_decreasing_envelope():
    c = flat_torus(8)
    meshes = modulus_meshes(c, 2)
    dmesh = meshes[0]
    E = geodesic_nodes(dmesh, 0, 2)
    pairs = [(E, geodesic_nodes(dmesh, 8 * k, 8 * k + 2)) for k in (1, 2, 4)]
    prof = loewner_profile(c, pairs, meshes=meshes)
    deltas = [d for d, _ in prof["samples"]]
    mods = [v for _, v in prof["samples"]]
    assert deltas == sorted(deltas)
    # farther apart continua are joined by fewer curves
    assert mods[0] > mods[-1] > 0
    env = [v for _, v in prof["phi"]]
    assert all(x >= y for x, y in zip(env, env[1:]))


def test_geodesic_nodes_connect_endpoints():
    mesh = mesh_graph(flat_torus(4), 2)
    path = geodesic_nodes(mesh, 0, 5)
    assert path[0] == 0 and path[-1] == 5
