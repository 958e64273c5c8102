import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fieldkind.catalog import all_entries, builtin
from fieldkind.expr import DomainError
from fieldkind.geometry import ChartManifold, NotPositiveDefinite, christoffel, geometry_jet, lower_index, raise_index
from fieldkind.operators import FieldSpec, field_jet, random_interior_points, second_covariant

from oracles import christoffel_fd, riemann_fd

THETA = math.pi / 3


def test_euclidean_is_flat(euclid):
    jet = geometry_jet(euclid.manifold, [1.3, -2.2])
    assert not jet.gamma.any()
    assert not jet.riemann.any()
    assert jet.sqrt_det_g == 1.0


def test_sphere_christoffels(sphere):
    jet = geometry_jet(sphere.manifold, [THETA, 0.4])
    oracle = christoffel_fd(sphere.manifold, [THETA, 0.4])
    np.testing.assert_allclose(jet.gamma, oracle, atol=1e-9)
    assert jet.gamma[0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, abs=1e-12)
    assert jet.gamma[1, 0, 1] == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert jet.gamma[1, 1, 0] == jet.gamma[1, 0, 1]


def test_sphere_curvature(sphere):
    m = sphere.manifold
    jet = geometry_jet(m, [THETA, 0.4])
    low = jet.riemann_lowered()
    oracle = np.einsum("im,mjkl->ijkl", jet.g, riemann_fd(m, [THETA, 0.4]))
    np.testing.assert_allclose(low, oracle, atol=1e-6)
    assert low[0, 1, 0, 1] == pytest.approx(0.75, abs=1e-12)


def test_hyperbolic_curvature_is_minus_one(hyper):
    jet = geometry_jet(hyper.manifold, [0.2, 1.7])
    low = jet.riemann_lowered()
    det = jet.g[0, 0] * jet.g[1, 1]
    assert low[0, 1, 0, 1] / det == pytest.approx(-1.0, abs=1e-12)


def test_christoffel_only_path_matches_full_jet(entry):
    pts = random_interior_points(entry.manifold, 20, seed=3)
    np.testing.assert_array_equal(christoffel(entry.manifold, pts), geometry_jet(entry.manifold, pts).gamma)


def test_lower_raise_examples(euclid, sphere, hyper):
    assert lower_index(geometry_jet(euclid.manifold, [0, 0]), [2, 3]).tolist() == [2, 3]
    np.testing.assert_allclose(lower_index(geometry_jet(sphere.manifold, [math.pi / 2, 1.0]), [1, 1]), [1, 1], atol=1e-15)
    assert lower_index(geometry_jet(hyper.manifold, [0.0, 2.0]), [4, 0]).tolist() == [1, 0]


@pytest.mark.parametrize("name", ["euclidean2", "flat_torus2", "sphere2", "hyperbolic2"])
def test_raise_inverts_lower(name):
    m = builtin(name).manifold
    rng = np.random.default_rng(5)
    pts = random_interior_points(m, 100, seed=5)
    jet = geometry_jet(m, pts)
    v = rng.normal(size=(100, m.dim))
    np.testing.assert_allclose(raise_index(jet, lower_index(jet, v)), v, atol=1e-12, rtol=0)
    eye = np.einsum("...ij,...jk->...ik", jet.g, jet.g_inv)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(m.dim), eye.shape), atol=1e-12)


@pytest.mark.parametrize("name", ["euclidean2", "flat_torus2", "sphere2", "hyperbolic2"])
def test_curvature_symmetries(name):
    m = builtin(name).manifold
    jet = geometry_jet(m, random_interior_points(m, 100, seed=7))
    R = jet.riemann
    low = jet.riemann_lowered()
    assert np.abs(R + np.swapaxes(R, -1, -2)).max() <= 1e-9
    assert np.abs(low + np.swapaxes(low, -4, -3)).max() <= 1e-9
    # first Bianchi: R^i_jkl + R^i_klj + R^i_ljk = 0
    cyc = np.zeros_like(R)
    n = m.dim
    for j in range(n):
        for k in range(n):
            for l in range(n):
                cyc[:, :, j, k, l] = R[:, :, j, k, l] + R[:, :, k, l, j] + R[:, :, l, j, k]
    assert np.abs(cyc).max() <= 1e-9
    assert np.abs(jet.gamma - np.swapaxes(jet.gamma, -1, -2)).max() == 0


def test_riemann_matches_fd_oracle_on_catalog():
    for entry in all_entries():
        m = entry.manifold
        for p in random_interior_points(m, 3, seed=13):
            np.testing.assert_allclose(geometry_jet(m, p).riemann, riemann_fd(m, p), atol=1e-5, rtol=1e-6)


# --------------------------------------------------------------------------
# the sign convention: nabla^2_{V,W} X - nabla^2_{W,V} X = R(V, W) X

_POLY = ["{a}*{b} + 0.3*{a}^2", "sin({a}) - {b}^2", "{a}^3 - 2*{b}", "cos({b})*{a}"]


@pytest.mark.parametrize("name", ["euclidean2", "flat_torus2", "sphere2", "hyperbolic2"])
def test_ricci_identity_fixes_curvature_sign(name):
    m = builtin(name).manifold
    rng = np.random.default_rng(17)
    a, b = m.coord_names
    for trial in range(5):
        picks = rng.choice(len(_POLY), size=2, replace=False)
        comps = [_POLY[k].format(a=a, b=b) for k in picks]
        f = FieldSpec.from_strings("probe", comps, m.coord_names)
        pts = random_interior_points(m, 100, seed=trial)
        jet = geometry_jet(m, pts)
        fj = field_jet(m, f, pts, geo=jet)
        H = second_covariant(jet, fj)
        V, W = rng.normal(size=m.dim), rng.normal(size=m.dim)
        lhs = np.einsum("...ijk,j,k->...i", H, V, W) - np.einsum("...ijk,j,k->...i", H, W, V)
        rhs = jet.curvature_operator(np.broadcast_to(V, pts.shape), np.broadcast_to(W, pts.shape), fj.x_up)
        scale = 1.0 + np.abs(H).max()
        assert np.abs(lhs - rhs).max() <= 1e-8 * scale


# --------------------------------------------------------------------------
# errors


def test_point_outside_domain(hyper):
    with pytest.raises(DomainError):
        geometry_jet(hyper.manifold, [0.0, -1.0])


def test_periodic_coordinates_accept_any_value(torus):
    a = geometry_jet(torus.manifold, [100.0, -7.0])
    assert a.g.tolist() == [[1, 0], [0, 1]]


def test_indefinite_metric_rejected():
    with pytest.raises(NotPositiveDefinite):
        ChartManifold.from_strings("bad", ["x", "y"], [["1", "0"], ["0", "-1"]], [(-1, 1), (-1, 1)])


def test_metric_losing_definiteness_at_a_point():
    with pytest.raises(NotPositiveDefinite):
        ChartManifold.from_strings("cone", ["x", "y"], [["1", "0"], ["0", "x"]], [(-1, 2), (-1, 1)])


def test_asymmetric_metric_rejected():
    with pytest.raises(ValueError, match="not symmetric"):
        ChartManifold.from_strings("skew", ["x", "y"], [["2", "x"], ["0", "2"]], [(-1, 1), (-1, 1)])


def test_default_margins():
    m = ChartManifold.from_strings("box", ["x", "y"], [["1", "0"], ["0", "1"]], [(0, 10), (0, 1)], periodic=[False, True])
    assert m.boundary_margin == (0.1, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.06, math.pi - 0.06), st.floats(0, 2 * math.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_lower_raise_round_trip_sphere(theta, phi, a, b):
    jet = geometry_jet(builtin("sphere2").manifold, [theta, phi])
    v = np.array([a, b])
    np.testing.assert_allclose(raise_index(jet, lower_index(jet, v)), v, atol=1e-12)
