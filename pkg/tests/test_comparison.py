import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as O
from finsler_lab import hyperdual as hd
from finsler_lab.comparison import (PiecewisePath, comparison_triangle, condition_flags,
                                    double_triangle_check, forward_triangle, h_map, h_map_check,
                                    make_model, model_distance, piecewise_path, radial_bound_check,
                                    angle_monotonicity_check, ray_perpendicularity_probe,
                                    toponogov_check)
from finsler_lab.errors import DegenerateError, NoComparisonTriangle
from finsler_lab.geodesics import find_rays, integrate_geodesic

flat, sphere = make_model(0.0), make_model(1.0)
polar = st.tuples(st.floats(0.05, 1.4), st.floats(-np.pi, np.pi))


# -- models ---------------------------------------------------------------------

def test_constant_models():
    for k in (-1.0, 0.0, 1.0):
        m = make_model(k)
        assert np.all(m.G(np.linspace(0.1, 1, 5)) == k) and m.von_mangoldt
    assert make_model(1.0).t_max == pytest.approx(np.pi)
    assert make_model({"kappa": 4.0}).critical_radius() == [pytest.approx(np.pi / 4)]
    assert make_model(-1.0).critical_radius() == []


def test_tabulated_and_callable_models():
    m = make_model(lambda t: t + t * t * t, t_max=2.0)
    t = np.linspace(0.1, 2.0, 7)
    np.testing.assert_allclose(m.G(t), -6 * t / (t + t ** 3), rtol=1e-12)
    assert not m.von_mangoldt and m.notes
    m = make_model(hd.sin, t_max=3.0)
    np.testing.assert_allclose(m.G(t), 1.0, atol=1e-12)
    assert m.critical_radius() == [pytest.approx(np.pi / 2, abs=1e-10)]
    ts = np.linspace(0, 3, 301)
    tab = make_model({"t": ts.tolist(), "f": np.sin(ts).tolist()})
    np.testing.assert_allclose(tab.f(t), np.sin(t), atol=1e-8)
    with pytest.raises(ValueError):
        make_model(lambda t: 2 * t)
    with pytest.raises(ValueError):
        make_model({"t": [0.1, 1.0], "f": [0.1, 1.0]})


def test_model_distance_examples():
    assert model_distance(flat, (1, 0), (1, np.pi / 2)) == pytest.approx(math.sqrt(2), abs=1e-14)
    # spherical law of cosines
    t1, t2, dth = 0.7, 1.2, 0.9
    ref = math.acos(math.cos(t1) * math.cos(t2) + math.sin(t1) * math.sin(t2) * math.cos(dth))
    assert model_distance(sphere, (t1, 0), (t2, dth)) == pytest.approx(ref, abs=1e-12)
    hyp = make_model(-1.0)
    ref = math.acosh(math.cosh(t1) * math.cosh(t2) - math.sinh(t1) * math.sinh(t2) * math.cos(dth))
    assert model_distance(hyp, (t1, 0), (t2, dth)) == pytest.approx(ref, abs=1e-12)
    assert model_distance(flat, (0.3, 1.0), (1.7, 1.0)) == pytest.approx(1.4)
    with pytest.raises(ValueError):
        model_distance(flat, (-1, 0), (1, 0))


@settings(max_examples=25)
@given(polar, polar, polar)
def test_model_distance_is_a_metric(P, Q, R):
    d = lambda u, v: model_distance(sphere, u, v)
    assert d(P, Q) == pytest.approx(d(Q, P), abs=1e-12)
    assert d(P, R) <= d(P, Q) + d(Q, R) + 1e-12


def test_tabulated_distance_matches_constant():
    ts = np.linspace(0, 3, 301)
    tab = make_model({"t": ts.tolist(), "f": np.sin(ts).tolist()})
    for P, Q in (((0.7, 0), (1.2, 0.9)), ((0.4, 0), (0.5, 3.0)), ((1.0, 0), (1.0, np.pi))):
        assert model_distance(tab, P, Q) == pytest.approx(model_distance(sphere, P, Q), abs=1e-6)


# -- comparison triangles ------------------------------------------------------------

def test_flat_triangle_examples():
    tri = comparison_triangle(flat, 3.0, 4.0, 5.0)
    assert tri.pole_angle == pytest.approx(np.pi / 2, abs=1e-12)
    assert tri.base_angles[0] == pytest.approx(math.atan2(4, 3), abs=1e-12)
    assert tri.base_angles[1] == pytest.approx(math.atan2(3, 4), abs=1e-12)
    tri = comparison_triangle(flat, 1.0, 2.0, 3.0)
    assert tri.pole_angle == pytest.approx(np.pi, abs=1e-12)
    assert tri.base_angles == pytest.approx((0.0, 0.0), abs=1e-6)
    with pytest.raises(NoComparisonTriangle):
        comparison_triangle(flat, 1.0, 1.0, 3.0)
    with pytest.raises(DegenerateError):
        comparison_triangle(flat, 0.0, 1.0, 1.0)


def test_sphere_octant():
    tri = comparison_triangle(sphere, np.pi / 2, np.pi / 2, np.pi / 2)
    assert tri.pole_angle == pytest.approx(np.pi / 2, abs=1e-12)
    assert tri.base_angles == pytest.approx((np.pi / 2, np.pi / 2), abs=1e-12)
    with pytest.raises(NoComparisonTriangle):
        comparison_triangle(sphere, 3.5, 1.0, 3.0)


sides = st.tuples(st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.floats(0.05, 0.95))


@given(sides)
def test_flat_triangles_follow_the_law_of_cosines(s):
    a, b, u = s
    L = abs(a - b) + u * (a + b - abs(a - b))
    tri = comparison_triangle(flat, a, b, L)
    # angles opposite (d_pa, d_pb, L) sit at b~, a~ and the pole
    at_b, at_a, at_p = O.planar_triangle_angles(a, b, L)
    assert tri.pole_angle == pytest.approx(at_p, abs=1e-7)
    assert tri.base_angles == pytest.approx((at_a, at_b), abs=1e-6)
    P, Q = tri.vertices
    assert model_distance(flat, P, Q) == pytest.approx(L, abs=1e-10)


@settings(max_examples=20)
@given(sides)
def test_sphere_triangles_follow_spherical_trigonometry(s):
    a, b, u = s
    a, b = 0.7 * a, 0.7 * b
    L = abs(a - b) + u * (a + b - abs(a - b))
    tri = comparison_triangle(sphere, a, b, L)
    at_b, at_a, at_p = O.spherical_triangle_angles(a, b, L)
    assert tri.pole_angle == pytest.approx(at_p, abs=1e-7)
    assert tri.base_angles == pytest.approx((at_a, at_b), abs=1e-6)
    P, Q = tri.vertices
    assert model_distance(sphere, P, Q) == pytest.approx(L, abs=1e-10)


def test_tabulated_triangles_match_constant():
    ts = np.linspace(0, 3, 301)
    tab = make_model({"t": ts.tolist(), "f": np.sin(ts).tolist()})
    sinh = make_model({"t": ts.tolist(), "f": np.sinh(ts).tolist()})
    hyp = make_model(-1.0)
    for sides in ((0.8, 1.1, 0.9), (0.5, 0.6, 0.3), (1.0, 1.2, 1.9)):
        for m, ref in ((tab, sphere), (sinh, hyp)):
            got, want = comparison_triangle(m, *sides), comparison_triangle(ref, *sides)
            assert got.pole_angle == pytest.approx(want.pole_angle, abs=1e-6)
            assert got.base_angles == pytest.approx(want.base_angles, abs=1e-6)


# -- curvature bounds and conditions -------------------------------------------------

def test_radial_bound_margins(fixtures):
    r = radial_bound_check(fixtures["euclidean"], [0, 0], flat, samples=10)
    assert r["worst_margin"] == pytest.approx(0, abs=1e-6) and r["passed"]
    S = fixtures["riemann-sphere"]
    p = [1.2, 0.4]
    r = radial_bound_check(S, p, flat, samples=10)
    assert r["worst_margin"] == pytest.approx(1, abs=1e-4) and r["passed"]
    r = radial_bound_check(S, p, sphere, samples=10)
    assert r["worst_margin"] == pytest.approx(0, abs=1e-4) and r["passed"]
    r = radial_bound_check(S, p, make_model(2.0), samples=10)
    assert r["worst_margin"] == pytest.approx(-1, abs=1e-4) and not r["passed"]


def test_condition_flags(fixtures):
    E = fixtures["euclidean"]
    flags = condition_flags(E, forward_triangle(E, [0, 0], [1, 0.2], [0.3, 1]), flat)
    assert flags["i"]["status"].startswith("not applicable")
    assert flags["ii"]["holds"] and flags["iii"]["holds"] and flags["iv"]["holds"]
    S = fixtures["riemann-sphere"]
    tri = forward_triangle(S, [1.0, 0.0], [1.3, 0.5], [0.8, 0.6])
    flags = condition_flags(S, tri, sphere)
    # the side stays within the critical radius pi/2 of the unit-sphere model
    assert flags["i"]["rho"] == pytest.approx(np.pi / 2)
    assert flags["i"]["status"] == "fails" and flags["i"]["min_distance"] < np.pi / 2
    R = fixtures["randers-nb"]
    tri = forward_triangle(R, [0, 0], [0.3, 0.1], [0.1, 0.3])
    flags = condition_flags(R, tri, flat, samples=1, vectors=2)
    assert not flags["iii"]["holds"] and not flags["iv"]["holds"]


def test_toponogov_euclidean_equality(fixtures):
    E = fixtures["euclidean"]
    rng = np.random.default_rng(3)
    for _ in range(5):
        p, a, b = rng.uniform(-1, 1, (3, 2))
        r = toponogov_check(E, forward_triangle(E, p, a, b), flat)
        assert r["passed"]
        assert r["forward_angle_a"] == pytest.approx(O.planar_angle(p - a, b - a), abs=1e-6)
        assert abs(r["margin_a"]) <= 1e-3 and abs(r["margin_b"]) <= 1e-3


def test_toponogov_sphere_strict(fixtures):
    S = fixtures["riemann-sphere"]
    p, a, b = np.array([1.0, 0.0]), np.array([1.4, 0.5]), np.array([0.7, 0.7])
    r = toponogov_check(S, forward_triangle(S, p, a, b), flat)
    assert r["forward_angle_a"] == pytest.approx(O.sphere_vertex_angle(a, p, b), abs=1e-5)
    assert r["margin_a"] > 1e-3 and r["margin_b"] > 1e-3
    same = toponogov_check(S, forward_triangle(S, p, a, b), sphere)
    assert abs(same["margin_a"]) <= 1e-5 and abs(same["margin_b"]) <= 1e-5


def test_toponogov_across_the_cylinder_seam(fixtures):
    C = fixtures["flat-cylinder"]
    tri = forward_triangle(C, [0, 0], [0.2, 0.45], [0.3, -0.45])
    # a -> b is shorter through the seam: displacement (0.1, 0.1)
    assert tri.lengths[2] == pytest.approx(math.hypot(0.1, 0.1))
    r = toponogov_check(C, tri, flat)
    assert r["passed"]


# -- angle monotonicity and double triangles -----------------------------------------

def test_angle_monotonicity_along_a_euclidean_ray(fixtures):
    E = fixtures["euclidean"]
    sigma = integrate_geodesic(E, [0, 0], [1.0, 0], 5.0)
    r = angle_monotonicity_check(E, [0.5, 1.0], sigma, np.linspace(0.5, 5, 10), flat)
    np.testing.assert_allclose(r["angles"], O.planar_angle([0.5, 1.0], [1, 0]), atol=1e-9)
    assert r["passed"] and r["truncated"] is None


def test_angle_monotonicity_on_the_sphere_and_cylinder(fixtures):
    S = fixtures["riemann-sphere"]
    sigma = integrate_geodesic(S, [1.2, 0.0], [0.0, 1.0 / math.sin(1.2)], 2.0)
    r = angle_monotonicity_check(S, [1.0, 0.3], sigma, np.linspace(0.2, 2.0, 10), flat)
    assert r["passed"] and np.all(np.diff(r["angles"]) <= 1e-9)
    C = fixtures["flat-cylinder"]
    sigma = integrate_geodesic(C, [0, 0], [1.0, 0], 20.0)
    r = angle_monotonicity_check(C, [0.5, 0.3], sigma, [1, 2, 5, 10, 20], flat)
    assert r["passed"]


def test_piecewise_path(fixtures):
    E = fixtures["euclidean"]
    path = piecewise_path(E, [0, 0], [[2.0, 0], [0, 1.0]], [1.0, 3.0])
    assert isinstance(path, PiecewisePath) and path.t_end == 4.0
    np.testing.assert_allclose(path.at(2.0)[0], [2, 1], atol=1e-12)
    assert path.length_to(E, 2.0) == pytest.approx(3.0)
    assert path.length_to(E, 4.0) == pytest.approx(5.0)
    r = angle_monotonicity_check(E, [1.0, -1.0], path, [0.5, 1.0, 2.0, 4.0], flat)
    assert len(r["angles"]) == 4


def test_double_triangle_flat():
    p, x, y, z = map(np.array, ([0, 0], [1.0, 0], [1.5, 0.8], [1.2, 1.6]))
    d = lambda u, v: float(np.linalg.norm(u - v))
    r = double_triangle_check(flat, (d(p, x), d(p, y), d(x, y)), (d(p, y), d(p, z), d(y, z)))
    assert r["admissible"] and r["angle_sum_at_y"] <= np.pi and r["passed"]
    # y on the segment xz: the summed triangle is pxz itself
    y = 0.4 * x + 0.6 * z
    r = double_triangle_check(flat, (d(p, x), d(p, y), d(x, y)), (d(p, y), d(p, z), d(y, z)))
    assert r["angle_sum_at_y"] == pytest.approx(np.pi, abs=1e-9)
    assert r["angle_x"] == pytest.approx(r["angle_a"], abs=1e-7)
    assert r["angle_z"] == pytest.approx(r["angle_b"], abs=1e-7)
    # y pulled towards p: the angles at y on the side of p add up to more than pi
    y = 0.8 * (0.5 * (x + z))
    r = double_triangle_check(flat, (d(p, x), d(p, y), d(x, y)), (d(p, y), d(p, z), d(y, z)))
    assert r["angle_sum_at_y"] > np.pi and not r["admissible"]
    with pytest.raises(ValueError):
        double_triangle_check(flat, (1.0, 1.0, 0.5), (1.1, 1.0, 0.5))


def test_double_triangle_sphere():
    S = lambda u, v: O.sphere_distance(u, v)
    p, x, y, z = map(np.array, ([0.3, 0.0], [1.0, 0.2], [1.1, 0.6], [0.9, 1.0]))
    r = double_triangle_check(sphere, (S(p, x), S(p, y), S(x, y)), (S(p, y), S(p, z), S(y, z)))
    assert r["admissible"] and r["passed"]


# -- rays and the h map --------------------------------------------------------------

@pytest.mark.parametrize("norm", ["euclidean", "quartic"])
def test_ray_perpendicularity_on_the_cylinder(norm):
    from finsler_lab import make_fixture
    C = make_fixture("flat-cylinder", {"norm": norm})
    sigma = integrate_geodesic(C, [0, 0], [0, 1.0], 1.0)
    r = ray_perpendicularity_probe(C, sigma, [1.0, 0], [1, 10, 100])
    assert r["passed"] and abs(r["final_offset"]) <= 0.05
    np.testing.assert_allclose(r["angles"], r["first_variation"], atol=1e-3)


def test_h_map(fixtures):
    E = fixtures["euclidean"]
    th = np.linspace(0, 2 * np.pi, 9)
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    np.testing.assert_allclose(h_map(E, [0, 0], [0, 1.0], V), np.sin(th), atol=1e-12)
    C = fixtures["flat-cylinder"]
    rays = find_rays(C, [0, 0], 200.0, tol=1e-4, resolution=720)
    r = h_map_check(C, [0, 0], [0, 1.0], rays)
    assert r["passed"] and r["rays"] >= 2 and r["ray_fraction"] <= 0.05
