import numpy as np
import pytest

from cube_family import CubeFamily, build_family
from maximal_ops import (MaximalQuery, doubling_maximal, evaluate_all, maximal_frame, p_maximal, radial_maximal,
                         sharp_maximal, sharp_ratio, upper_radial_maximal)
from measure_core import AnalysisContext, Cube, DiscreteMeasure, NotInSupport
from oscillation_norms import rbmo_star

TOL = 1e-12


def test_constant_function(cloud, cloud_ctx, cloud_family):
    f = np.full(cloud.size, 2.0)
    assert np.allclose(evaluate_all("sharp", cloud, cloud_ctx, f, cloud_family), 0.0, atol=1e-12)
    assert np.allclose(evaluate_all("doubling", cloud, cloud_ctx, f, cloud_family), 2.0)
    assert np.all(evaluate_all("p", cloud, cloud_ctx, f, cloud_family, p=2.0, eta=1.5) <= 2.0 * (1 + TOL))


def test_two_point_hand_value(line_pair):
    ctx = AnalysisContext.build(line_pair, n=1, beta_d=4.0)
    family = CubeFamily(line_pair, ctx, [Cube([0.0], 1.0), Cube([0.5], 1.0)])
    f = [0.0, 1.0]
    # [0, 1] against mu(3/2 [0, 1]) = 2, oscillation 1
    assert sharp_maximal(line_pair, ctx, f, [0.0], family) == pytest.approx(0.5)
    assert sharp_maximal(line_pair, ctx, f, [1.0], family) == pytest.approx(0.5)
    assert doubling_maximal(line_pair, ctx, f, [1.0], family) == pytest.approx(0.5)
    assert doubling_maximal(line_pair, ctx, f, [0.0], family) == pytest.approx(0.5)


def test_single_point_support():
    mu = DiscreteMeasure([[0.0, 0.0]], [2.0], 0.5)
    ctx = AnalysisContext.build(mu)
    family = build_family(mu, ctx, min_side=0.5, max_side=4.0)
    assert doubling_maximal(mu, ctx, [-3.0], [0.0, 0.0], family) == pytest.approx(3.0)
    assert radial_maximal(mu, [1.0], [0.0, 0.0], 2.0, family) == pytest.approx(1.0)
    assert radial_maximal(mu, [0.0], [0.0, 0.0], 2.0, family) == 0.0
    assert p_maximal(mu, [5.0], [0.0, 0.0], 3.0, 1.5, family) == pytest.approx(5.0)


def test_queries_off_support_are_rejected(cloud, cloud_ctx, cloud_family):
    with pytest.raises(NotInSupport):
        MaximalQuery(cloud.points[0] + 1e-3, cloud_family)
    with pytest.raises(NotInSupport):
        sharp_maximal(cloud, cloud_ctx, np.ones(cloud.size), [5.0, 5.0], cloud_family)


def test_pointwise_dominations(cloud, cloud_ctx, cloud_family):
    rng = np.random.default_rng(0)
    beta = cloud_ctx.beta_d
    for _ in range(5):
        f = rng.standard_normal(cloud.size)
        sharp = evaluate_all("sharp", cloud, cloud_ctx, f, cloud_family)
        doubling = evaluate_all("doubling", cloud, cloud_ctx, f, cloud_family)
        radial2 = evaluate_all("radial", cloud, cloud_ctx, f, cloud_family, rho=2.0)
        radial15 = evaluate_all("radial", cloud, cloud_ctx, f, cloud_family, rho=1.5)
        upper15 = evaluate_all("upper_radial", cloud, cloud_ctx, f, cloud_family, rho=1.5)
        sharp_abs = evaluate_all("sharp", cloud, cloud_ctx, np.abs(f), cloud_family)
        scale = np.max(np.abs(f)) * TOL
        assert np.all(doubling <= beta * radial2 + scale)
        assert np.all(sharp_abs <= 5 * beta * sharp + scale)
        assert np.all(sharp <= radial15 + 3 * doubling + scale)
        assert np.all(radial15 <= upper15 + scale)


def test_doubling_maximal_dominates_the_function(small_segment):
    ctx = AnalysisContext.build(small_segment, n=1)
    family = build_family(small_segment, ctx)
    f = np.sin(7 * small_segment.points[:, 0])
    assert np.all(np.abs(f) <= evaluate_all("doubling", small_segment, ctx, f, family) * (1 + TOL))


def test_p_maximal_with_p_one_is_radial(cloud, cloud_ctx, cloud_family):
    f = np.random.default_rng(1).standard_normal(cloud.size)
    x = cloud.points[4]
    assert p_maximal(cloud, f, x, 1.0, 2.0, cloud_family) == radial_maximal(cloud, f, x, 2.0, cloud_family)
    assert radial_maximal(cloud, f, x, 2.0, cloud_family) <= upper_radial_maximal(cloud, f, x, 2.0,
                                                                                  cloud_family) * (1 + TOL)


def test_sublinear_and_homogeneous(cloud, cloud_ctx, cloud_family):
    rng = np.random.default_rng(2)
    f, g = rng.standard_normal(cloud.size), rng.standard_normal(cloud.size)
    for op in ("sharp", "doubling", "radial"):
        both = evaluate_all(op, cloud, cloud_ctx, f + g, cloud_family)
        apart = evaluate_all(op, cloud, cloud_ctx, f, cloud_family) + evaluate_all(op, cloud, cloud_ctx, g,
                                                                                   cloud_family)
        assert np.all(both <= apart + 1e-12)
        scaled = evaluate_all(op, cloud, cloud_ctx, -3.0 * f, cloud_family)
        assert np.allclose(scaled, 3.0 * evaluate_all(op, cloud, cloud_ctx, f, cloud_family), rtol=1e-12)


def test_rbmo_star_is_the_largest_sharp_value(cloud):
    ctx = AnalysisContext.build(cloud, rho=1.5)
    family = build_family(cloud, ctx, max_centers=15, seed=3)
    f = np.random.default_rng(3).standard_normal(cloud.size)
    sharp = evaluate_all("sharp", cloud, ctx, f, family)
    assert np.max(sharp) == pytest.approx(rbmo_star(cloud, ctx, f, family).value, rel=1e-12)


def test_sharp_ratio_for_mean_zero_draws(cloud, cloud_ctx, cloud_family, calibration):
    rng = np.random.default_rng(4)
    for _ in range(5):
        f = rng.standard_normal(cloud.size)
        f -= np.sum(f * cloud.masses) / cloud.total_mass
        for p in (1.5, 2.0, 4.0):
            assert sharp_ratio(cloud, cloud_ctx, f, cloud_family, p) <= calibration["sharp_maximal"]["ratio"]


def test_maximal_frame_columns(cloud, cloud_ctx, cloud_family):
    frame = maximal_frame(cloud, cloud_ctx, np.ones(cloud.size), cloud_family)
    assert list(frame.columns) == ["x0", "x1", "f", "sharp", "doubling", "radial", "upper_radial", "p_maximal"]
    assert len(frame) == cloud.size


def test_p_maximal_is_nondecreasing_in_p(cloud, cloud_family):
    f = np.random.default_rng(21).standard_normal(cloud.size)
    for i in (0, 9, 33):
        x = cloud.points[i]
        values = [p_maximal(cloud, f, x, p, 1.5, cloud_family) for p in (1.0, 1.5, 2.0, 4.0)]
        assert all(a <= b * (1 + TOL) for a, b in zip(values, values[1:]))
