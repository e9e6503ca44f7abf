import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles as O
from finsler_lab.errors import HypothesisError
from finsler_lab.fixtures import make_fixture
from finsler_lab.measure import (ComparisonParams, annulus_volume, ball_volume,
                                 comparison_volume, direction_measure, ray_cone_volume, s_kappa,
                                 volume_comparison_check, volume_growth_estimate)


def test_s_kappa_examples():
    assert float(s_kappa(1.0, np.pi / 2)) == pytest.approx(1, abs=1e-15)
    # series oracle for sinh(1)
    series = sum(1 / math.factorial(2 * k + 1) for k in range(12))
    assert float(s_kappa(-1.0, 1.0)) == pytest.approx(series, abs=1e-14)
    assert float(s_kappa(0.0, 2.5)) == 2.5
    with pytest.raises(ValueError):
        s_kappa(1.0, -0.1)


def test_comparison_volume_examples():
    assert comparison_volume(ComparisonParams(0, 0, 2), 0, 1, 2 * np.pi) == pytest.approx(np.pi)
    assert comparison_volume(ComparisonParams(0, 0, 3), 1, 2, 4 * np.pi) == pytest.approx(
        4 * np.pi * 7 / 3)
    # integration by parts: int_0^1 e^t t dt = 1
    assert comparison_volume(ComparisonParams(0, 1, 2), 0, 1, 2 * np.pi) == pytest.approx(
        2 * np.pi, rel=1e-12)
    # unit-sphere caps for kappa = 1
    assert comparison_volume(ComparisonParams(1, 0, 2), 0, 1.0) == pytest.approx(
        O.sphere_cap_area(1.0), rel=1e-12)
    with pytest.raises(ValueError):
        ComparisonParams(0, -1, 2)
    with pytest.raises(ValueError):
        comparison_volume(ComparisonParams(), 2, 1)


@given(st.floats(-2, 2), st.floats(0, 2), st.integers(2, 4),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_comparison_volume_additive(k, lam, n, a, b, c):
    r, s, R = sorted((a, b, c))
    P = ComparisonParams(k, lam, n)
    whole = comparison_volume(P, r, R)
    parts = comparison_volume(P, r, s) + comparison_volume(P, s, R)
    assert abs(whole - parts) <= 1e-10 * max(1.0, whole)


def test_minkowski_identity(fixtures):
    for key in ("euclidean", "randers", "flat-cylinder", "flat-torus"):
        for r in (0.3, 0.49):
            vol, se = ball_volume(fixtures[key], [0, 0], r)
            assert vol == pytest.approx(np.pi * r * r, abs=3 * se + 1e-12), key
    Q = make_fixture("euclidean", {"norm": "quartic"})
    assert ball_volume(Q, [0, 0], 7.0)[0] == pytest.approx(49 * np.pi, rel=1e-12)
    vol, se = ball_volume(fixtures["randers"], [0, 0], 2.0, method="monte-carlo",
                          samples=200_000, seed=3)
    assert abs(vol - 4 * np.pi) <= 3 * se
    assert ball_volume(fixtures["euclidean"], [0, 0], 0.0) == (0.0, 0.0)


def test_exact_area_oracles(fixtures):
    C, T = fixtures["flat-cylinder"], fixtures["flat-torus"]
    for r, tol in ((0.3, 1e-12), (0.8, 1e-7), (3.0, 1e-6), (40.0, 1e-5), (200.0, 1e-5)):
        assert ball_volume(C, [0, 0], r)[0] == pytest.approx(O.cylinder_ball_area(r, 1.0), rel=tol)
    # the cut time has corners on the torus; the equispaced rule is second order there
    for r in (0.3, 0.6, 0.7):
        assert ball_volume(T, [0, 0], r)[0] == pytest.approx(O.torus_ball_area(r, 1, 1), rel=1e-7)
    assert ball_volume(T, [0, 0], 5.0)[0] == pytest.approx(1.0, rel=1e-7)
    S = fixtures["riemann-sphere"]
    vol, se = ball_volume(S, [np.pi / 2, 0], 1.2, samples=200_000, seed=1)
    assert abs(vol - O.sphere_cap_area(1.2)) <= 3 * se


def test_ball_volume_monotone(fixtures):
    S = fixtures["riemann-sphere"]
    prev = 0.0
    for r in (0.3, 0.6, 0.9, 1.2):
        vol, se = ball_volume(S, [np.pi / 2, 0], r, samples=50_000, seed=2)
        assert vol >= prev - 2 * se
        prev = vol


def test_annulus_examples(fixtures):
    E = fixtures["euclidean"]
    half = lambda u: u[..., 1] >= 0
    vol, _ = annulus_volume(E, [0, 0], half, 1.0, 2.0)
    assert vol == pytest.approx(1.5 * np.pi, rel=1e-6)
    full, _ = annulus_volume(E, [0, 0], None, 0.0, 1.3)
    assert full == pytest.approx(ball_volume(E, [0, 0], 1.3)[0], rel=1e-12)
    C = fixtures["flat-cylinder"]
    wrapped, _ = annulus_volume(C, [0, 0], None, 0.0, 2.0)
    assert wrapped < 4 * np.pi
    assert wrapped == pytest.approx(O.cylinder_ball_area(2.0, 1.0), rel=1e-6)
    assert direction_measure(E, [0, 0]) == pytest.approx(2 * np.pi, rel=1e-12)
    assert direction_measure(fixtures["randers"], [0, 0]) == pytest.approx(2 * np.pi, rel=1e-9)
    assert direction_measure(E, [0, 0], half) == pytest.approx(np.pi, rel=1e-3)


def test_volume_comparison_flat(fixtures):
    inner, outer = [0.0, 0.2, 0.4], [0.5, 0.9, 1.3]
    rep = volume_comparison_check(fixtures["euclidean"], [0, 0], ComparisonParams(), inner, outer)
    assert rep["passed"]
    np.testing.assert_allclose(rep["ratios"], 1, atol=1e-12)
    rep = volume_comparison_check(fixtures["flat-cylinder"], [0, 0], ComparisonParams(),
                                  [0.0, 0.2], [0.3, 1.0, 3.0])
    assert rep["passed"]
    ratios = dict(zip(map(tuple, rep["annuli"]), rep["ratios"]))
    assert ratios[(0.0, 3.0)] < ratios[(0.0, 1.0)] < ratios[(0.0, 0.3)] + 1e-12


def test_volume_comparison_hypotheses(fixtures):
    with pytest.raises(HypothesisError):
        volume_comparison_check(fixtures["hyperbolic-disk"], [0, 0], ComparisonParams(),
                                [0.0], [0.5], samples=1000)


def test_volume_growth(fixtures):
    rep = volume_growth_estimate(fixtures["euclidean"], [0, 0], 50.0)
    assert rep.v_M == pytest.approx(1, abs=0.02) and rep.monotone
    rep = volume_growth_estimate(fixtures["flat-cylinder"], [0, 0], 100.0)
    assert rep.v_M <= 0.05 and rep.monotone
    # ratio ~ C / r far beyond the wrap: area 2 r L against pi r^2
    assert rep.ratios[-1] == pytest.approx(2 / (np.pi * 100), rel=0.02)
    assert 0 <= rep.v_M <= 1 + 3 * rep.v_M_se
    rep = volume_growth_estimate(fixtures["randers"], [0, 0], 20.0)
    assert rep.v_M == pytest.approx(1, abs=0.02)


def test_volume_report_exports(fixtures, tmp_path):
    rep = volume_growth_estimate(fixtures["flat-torus"], [0, 0], 10.0, grid=[1, 5, 10])
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "r,vol,V,ratio,SE" and len(lines) == 4
    assert rep.to_json()["monotone"] is True


def test_ray_cones(fixtures):
    out = ray_cone_volume(fixtures["euclidean"], [0, 0], 20.0, 5.0, resolution=180)
    assert out["nonray_volume"] == pytest.approx(0, abs=1e-9)
    C = fixtures["flat-cylinder"]
    small = ray_cone_volume(C, [0, 0], 20.0, 5.0, resolution=360, tol=1e-4)
    large = ray_cone_volume(C, [0, 0], 100.0, 5.0, resolution=360, tol=1e-4, delta=0.05)
    assert large["ray_volume"] <= small["ray_volume"] + 1e-12
    assert large["ray_fraction"] <= small["ray_fraction"]
    tiny = ray_cone_volume(C, [0, 0], 100.0, 5.0, resolution=360, tol=1e-4, delta=0.005)
    assert tiny["tube_ratio"] <= large["tube_ratio"]
