from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from quasisphere.finite_metric import FiniteMetric, check_metric
from quasisphere.glue import (
    GluePreconditionError,
    _minplus,
    _minplus_numpy,
    glue,
    random_glue_instance,
    verify_glue,
)


def closure_oracle(dY, S, dS):
    """Shortest paths in the graph with d_Y edges plus d_S shortcuts on S."""
    w = dY.copy()
    w[np.ix_(S, S)] = np.minimum(w[np.ix_(S, S)], dS)
    return shortest_path(w, method="FW", directed=False)


def formula_oracle(dY, S, dS):
    n = dY.shape[0]
    out = dY.copy()
    for x in range(n):
        for y in range(n):
            for i, u in enumerate(S):
                for j, v in enumerate(S):
                    out[x, y] = min(out[x, y], dY[x, u] + dS[i, j] + dY[v, y])
    return out


def three_points():
    base = FiniteMetric.from_coords(np.array([[0.0], [1.0], [2.0]]))
    return glue(base, [0, 2], np.array([[0.0, 0.5], [0.5, 0.0]]))


def test_three_point_example():
    g = three_points()
    d = g.result.dist
    assert d[0, 2] == 0.5 and d[0, 1] == 1.0 and d[1, 2] == 1.0
    rep = verify_glue(g)
    assert rep.ok and rep.lam == 4.0


def test_single_point_and_restriction_are_noops(rng):
    base = FiniteMetric.from_coords(rng.random((10, 2)))
    assert np.array_equal(glue(base, [3], np.zeros((1, 1))).result.dist, base.dist)
    S = [1, 4, 7]
    assert np.array_equal(glue(base, S, base.dist[np.ix_(S, S)]).result.dist, base.dist)


def test_precondition_witness():
    base = FiniteMetric.from_coords(np.array([[0.0], [1.0], [2.0]]))
    with pytest.raises(GluePreconditionError) as e:
        glue(base, [0, 2], np.array([[0.0, 3.0], [3.0, 0.0]]))
    assert set(e.value.witness) == {0, 2}


@pytest.mark.parametrize("seed", range(15))
def test_matches_both_oracles(seed):
    rng = np.random.default_rng(seed)
    base, S, dS = random_glue_instance(rng, n_max=14, s_max=5)
    g = glue(base, S, dS)
    assert np.allclose(g.result.dist, formula_oracle(base.dist, S, dS), atol=1e-12)
    assert np.allclose(g.result.dist, closure_oracle(base.dist, S, dS), atol=1e-12)


@given(st.integers(0, 10_000))
def test_glue_properties_hold(seed):
    rng = np.random.default_rng(seed)
    base, S, dS = random_glue_instance(rng)
    g = glue(base, S, dS)
    assert check_metric(g.result).ok
    rep = verify_glue(g)
    assert rep.ok, rep.witnesses


@given(st.integers(0, 10_000))
def test_idempotent_and_monotone(seed):
    rng = np.random.default_rng(seed)
    base, S, dS = random_glue_instance(rng, n_max=20)
    g = glue(base, S, dS)
    again = glue(g.result, S, dS)
    # equal up to float regrouping of the three-term sums
    assert np.max(np.abs(again.result.dist - g.result.dist)) <= 1e-15
    smaller = closure_oracle(dS, np.arange(len(S)), dS * rng.uniform(0.3, 1.0, size=dS.shape).clip(max=1.0))
    smaller = np.minimum(smaller, smaller.T)
    np.fill_diagonal(smaller, 0)
    g2 = glue(base, S, smaller)
    assert np.all(g2.result.dist <= g.result.dist + 1e-12)


def test_minplus_kernel_matches_numpy(rng):
    a = rng.random((120, 40))
    b = rng.random((40, 90))
    brute = (a[:, :, None] + b[None, :, :]).min(axis=1)
    assert np.array_equal(_minplus_numpy(a, b), brute)
    big_a = rng.random((300, 70))
    big_b = rng.random((70, 200))
    assert np.array_equal(_minplus(big_a, big_b), _minplus_numpy(big_a, big_b))


def test_violation_is_reported():
    g = three_points()
    d = g.result.dist.copy()
    d[0, 1] = d[1, 0] = 0.2  # below d_Y / lambda, and inside a local-isometry ball
    bad = replace(g, result=FiniteMetric(g.result.points, d))
    rep = verify_glue(bad)
    assert not rep.ok and rep.witnesses
