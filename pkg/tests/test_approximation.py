import json
import math

import numpy as np
import pytest

from quasisphere.approximation import (
    UNREACHABLE,
    Approximation,
    PreconditionError,
    certified_L,
    chain_between,
    check_axioms,
    comb_distance,
    image_approximation,
    quasiconvex_chain,
    skeleton_approximation,
    star,
)
from quasisphere.constructions import equilateral_grid, flat_torus, snowsphere
from quasisphere.finite_metric import FiniteMetric, InputError
from quasisphere.simplicial import build_complex, epsilon_all, qc_certificate


def line_approximation(n=8, spacing=1.0):
    """Points 0..n-1 on a line; vertex v owns its neighbours, radius = spacing."""
    X = FiniteMetric.from_coords(spacing * np.arange(n, dtype=float)[:, None])
    adj = [[w for w in (v - 1, v + 1) if 0 <= w < n] for v in range(n)]
    U = [[w for w in (v - 1, v, v + 1) if 0 <= w < n] for v in range(n)]
    return Approximation(adj, np.arange(n), np.full(n, spacing), U, X)


def certified(c, m=4):
    a = skeleton_approximation(c, m)
    K = math.ceil(qc_certificate(c).M)
    return a, K, certified_L(a, K, star_K=K)


# combinatorics


def test_comb_distance_on_a_path():
    a = line_approximation(6)
    assert comb_distance(a, 0, 0) == 0
    assert comb_distance(a, 0, 5) == 5
    assert comb_distance(a, 4, 1) == 3


def test_comb_distance_unreachable():
    X = FiniteMetric.from_coords(np.arange(4.0)[:, None])
    a = Approximation([[1], [0], [3], [2]], np.arange(4), np.ones(4), [[0, 1], [0, 1], [2, 3], [2, 3]], X)
    assert comb_distance(a, 0, 3) == UNREACHABLE


def test_star_grows_with_K():
    a = line_approximation(9)
    assert star(a, 4, 1).tolist() == [3, 4, 5]
    assert star(a, 4, 2).tolist() == [2, 3, 4, 5, 6]
    assert star(a, 4, 3).tolist() == list(range(1, 8))
    with pytest.raises(InputError):
        star(a, 4, 0)


def test_constructor_validation():
    X = FiniteMetric.from_coords(np.arange(3.0)[:, None])
    with pytest.raises(InputError):
        Approximation([[1], [0, 2], [1]], [0, 1, 2], [1, 0, 1], [[0], [1], [2]], X)
    with pytest.raises(InputError):
        Approximation([[1], [], [1]], [0, 1, 2], [1, 1, 1], [[0], [1], [2]], X)
    with pytest.raises(InputError):
        Approximation([[1], [0, 2], [1]], [0, 1, 2], [1, 1, 1], [[0], [1], [1]], X)


def test_json_round_trip():
    a = line_approximation(5)
    b = Approximation.from_json(json.dumps(a.to_json()), host=a.host)
    assert b.edges() == a.edges()
    assert np.array_equal(b.p, a.p) and np.array_equal(b.r, a.r)
    assert all(np.array_equal(u, w) for u, w in zip(a.U, b.U))
    with pytest.raises(InputError):
        Approximation.from_json({"p": {"0": 0}})


# skeleton approximations


def test_skeleton_single_triangle():
    c = build_complex(range(3), [[0, 1, 2, 1, 1, 1]])
    a = skeleton_approximation(c, 4)
    assert a.edges() == [(0, 1), (0, 2), (1, 2)]
    assert np.allclose(a.r, epsilon_all(c))
    # open star of a corner: the corner, its two open edges, the open face
    for v in range(3):
        owned = set(a.U[v].tolist())
        assert v in owned
        assert not ({0, 1, 2} - {v}) & owned


def test_skeleton_needs_interior_edge_nodes():
    with pytest.raises(InputError):
        skeleton_approximation(equilateral_grid(1, 1), m=1)


@pytest.mark.parametrize("make", [lambda: equilateral_grid(4, 4), lambda: snowsphere(1), lambda: flat_torus(6)])
def test_skeleton_passes_at_certified_constants(make):
    a, K, L = certified(make())
    rep = check_axioms(a, K, L, star_K=K)
    assert rep.ok, rep.witnesses
    assert L <= 2.0


def test_halved_L_yields_containment_witness():
    a, K, L = certified(snowsphere(1))
    rep = check_axioms(a, K, L / 2, star_K=K)
    assert not rep.ok
    assert not rep.axioms["A2"]
    assert rep.witnesses["A2"]["kind"] == "U not inside L-ball"


def test_valence_violation_is_reported():
    a, K, L = certified(equilateral_grid(3, 3))
    rep = check_axioms(a, 3, L, star_K=K)
    assert not rep.axioms["A1"]
    assert rep.stats["max_valence"] > 3


def test_single_vertex_covering_everything_is_not_fine():
    X = FiniteMetric.from_coords(np.arange(4.0)[:, None])
    a = Approximation([[]], [0], [0.5], [[0, 1, 2, 3]], X)
    rep = check_axioms(a, 2, 10.0)
    assert not rep.axioms["fine"]
    assert not rep.ok


def test_axioms_monotone_in_constants():
    a, K, L = certified(equilateral_grid(3, 3))
    assert check_axioms(a, K, L, star_K=K).ok
    assert check_axioms(a, K + 2, 1.5 * L, star_K=K).ok


def test_line_approximation_certificate():
    a = line_approximation(10)
    L = certified_L(a, 3)
    rep = check_axioms(a, 3, L)
    assert rep.ok, rep.witnesses


# pushing forward


def test_image_under_identity_is_unchanged():
    a = line_approximation(8)
    b = image_approximation(a, np.arange(8), a.host)
    assert np.allclose(b.r, a.r)
    assert check_axioms(b, 3, certified_L(a, 3)).ok


def test_image_under_scaling_scales_radii():
    a = line_approximation(8)
    target = FiniteMetric(a.host.points, 3.0 * a.host.dist)
    b = image_approximation(a, np.arange(8), target)
    assert np.allclose(b.r, 3.0 * a.r)
    assert certified_L(b, 3) == pytest.approx(certified_L(a, 3))


def test_image_map_validation():
    a = line_approximation(4)
    with pytest.raises(InputError):
        image_approximation(a, [0, 0, 1, 2], a.host)
    with pytest.raises(InputError):
        image_approximation(a, [0, 1, 2], a.host)


# chains


def test_chain_between_on_grid():
    a, K, L = certified(equilateral_grid(5, 5))
    rep = chain_between(a, 0, a.n - 1)
    assert rep.chain[0] == 0 and rep.chain[-1] == a.n - 1
    assert rep.max_step <= 1
    assert rep.ratio <= 3.0


def test_quasiconvex_chain_precondition():
    a = line_approximation(10)
    with pytest.raises(PreconditionError):
        quasiconvex_chain(a, 0, 2, K=3)
    rep = quasiconvex_chain(a, 0, 9, K=3)
    assert rep.chain == list(range(10))
    # sum of radii over the chain is comparable to the distance
    assert rep.ratio == pytest.approx(10 / 9)
