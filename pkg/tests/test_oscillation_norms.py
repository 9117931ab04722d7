import numpy as np
import pytest

from cube_coefficients import NestedCubePair, k_coeff
from cube_family import CubeFamily, build_family
from example_measures import eps_step, eps_weighted, segment
from measure_core import AnalysisContext, Cube, DiscreteMeasure, FunctionOnSupport, cube_mass
from oscillation_norms import (AtomicBlock, AtomicPiece, alpha_median, bmo_rho, circ_norm, fifi_b_norm, fifi_c_norm,
                               h1_upper, jn_slope, jn_tail, pairing_check, rbmo_doublestar, rbmo_p, rbmo_star,
                               truncate, validate_block)

NORMS = (rbmo_star, rbmo_doublestar, circ_norm, fifi_b_norm, fifi_c_norm)


@pytest.fixture(scope="module")
def two_point(line_pair):
    ctx = AnalysisContext.build(line_pair, n=1, beta_d=4.0)
    family = CubeFamily(line_pair, ctx, [Cube([0.0], 1.0), Cube([0.5], 1.0)])
    return line_pair, ctx, family


def test_constants_have_zero_norm(cloud, cloud_ctx, cloud_family):
    f = np.full(cloud.size, 3.5)
    for norm in NORMS:
        assert norm(cloud, cloud_ctx, f, cloud_family).value == pytest.approx(0.0, abs=1e-12)
    assert bmo_rho(cloud, f, cloud_family, 2.0).value == pytest.approx(0.0, abs=1e-12)
    assert rbmo_p(cloud, cloud_ctx, f, cloud_family, 2.0).value == pytest.approx(0.0, abs=1e-12)


def test_two_point_hand_values(two_point):
    mu, ctx, family = two_point
    f = [0.0, 1.0]
    # Q = [0, 1] carries both points: oscillation 1 against mu(2Q) = 2; the cube around 0 is flat
    assert rbmo_star(mu, ctx, f, family).value == pytest.approx(0.5)
    assert rbmo_doublestar(mu, ctx, f, family).value == pytest.approx(0.5)
    assert circ_norm(mu, ctx, f, family).value == pytest.approx(0.5)


def test_bounded_functions(cloud, cloud_ctx, cloud_family):
    rng = np.random.default_rng(1)
    for _ in range(5):
        f = rng.uniform(-2.0, 2.0, size=cloud.size)
        sup = np.max(np.abs(f))
        star = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
        assert star <= 2 * sup * (1 + 1e-12)
        assert star <= rbmo_doublestar(cloud, cloud_ctx, f, cloud_family).value * (1 + 1e-12)
        assert bmo_rho(cloud, f, cloud_family, cloud_ctx.rho).value <= 2 * star * (1 + 1e-12)


def test_rbmo_p_with_p_one_is_rbmo_star(cloud, cloud_ctx, cloud_family):
    f = np.random.default_rng(2).standard_normal(cloud.size)
    assert rbmo_p(cloud, cloud_ctx, f, cloud_family, 1.0).value == rbmo_star(cloud, cloud_ctx, f, cloud_family).value


def test_equivalent_norms_stay_comparable(cloud, cloud_ctx, cloud_family, calibration):
    spread = calibration["norm_equivalence"]["spread"]
    rng = np.random.default_rng(3)
    for _ in range(8):
        f = rng.standard_normal(cloud.size) * rng.uniform(0.1, 10.0)
        star = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
        for other in (rbmo_doublestar(cloud, cloud_ctx, f, cloud_family).value,
                      circ_norm(cloud, cloud_ctx, f, cloud_family).value,
                      rbmo_p(cloud, cloud_ctx, f, cloud_family, 2.0).value):
            assert 1 / spread <= other / star <= spread


def test_alpha_median_examples(line_pair):
    both = Cube([0.5], 2.0)
    weighted = DiscreteMeasure([[0.0], [1.0]], [1.0, 3.0], 0.5)
    assert alpha_median(weighted, [0.0, 5.0], both) == 5.0
    assert alpha_median(line_pair, [0.0, 5.0], both) == 0.0
    three = DiscreteMeasure([[0.0], [1.0], [2.0]], [1.0, 1.0, 1.0], 0.5)
    assert alpha_median(three, [3.0, 1.0, 2.0], Cube([1.0], 3.0)) == 2.0


def test_truncate():
    f = FunctionOnSupport([-5.0, 3.0])
    assert np.array_equal(truncate(f, 2.0).values, [-2.0, 2.0])
    assert np.array_equal(truncate(f, 10.0).values, f.values)
    with pytest.raises(ValueError):
        truncate(f, 0.0)


def test_truncation_keeps_norm_under_control(cloud, cloud_ctx, cloud_family, calibration):
    spread = calibration["norm_equivalence"]["spread"]
    f = np.log(np.maximum(cloud.euclidean_distances(cloud.points[0]), cloud.r_min))
    star = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
    for q in (0.5, 1.0, 2.0):
        assert rbmo_star(cloud, cloud_ctx, truncate(f, q), cloud_family).value <= spread * star


def test_jn_tail(cloud, cloud_ctx, cloud_family, calibration):
    cube = Cube(cloud.points[0], 0.5)
    flat = jn_tail(cloud, cloud_ctx, np.ones(cloud.size), cube, [0.1, 1.0])
    assert [t for _, t in flat] == [0.0, 0.0]
    f = np.log(np.maximum(cloud.euclidean_distances(cloud.points[0]), cloud.r_min))
    norm = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
    tails = jn_tail(cloud, cloud_ctx, f / norm, cube, np.linspace(0.0, 6.0, 25))
    values = [t for _, t in tails]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert jn_tail(cloud, cloud_ctx, f, cube, [1e6])[0][1] == 0.0
    assert jn_slope(tails) <= calibration["john_nirenberg"]["slope"]


def _symmetric_block(mu, ctx, q, r):
    idx = mu.cube_indices(q)
    a = np.zeros(mu.size)
    k = k_coeff(mu, ctx, NestedCubePair(q, r))
    scale = 1.0 / (cube_mass(mu, q.dilate(ctx.rho)) * k)
    a[idx[0]], a[idx[1]] = scale, -scale * mu.masses[idx[0]] / mu.masses[idx[1]]
    return AtomicBlock(r, [AtomicPiece(0.7, FunctionOnSupport(a), q)])


def test_validate_block():
    mu = segment(9, d=1)
    ctx = AnalysisContext.build(mu, n=1)
    q, r = Cube([0.1875], 0.25), Cube([0.5], 1.0)
    block = _symmetric_block(mu, ctx, q, r)
    check = validate_block(mu, ctx, block)
    assert check.ok and check.value == pytest.approx(0.7)
    assert h1_upper([check, check]) == pytest.approx(1.4)

    one_sided = np.zeros(mu.size)
    one_sided[mu.cube_indices(q)[0]] = 0.01
    bad = validate_block(mu, ctx, AtomicBlock(r, [AtomicPiece(1.0, FunctionOnSupport(one_sided), q)]))
    assert {v["kind"] for v in bad.violations} == {"nonzero integral"}

    too_big = AtomicBlock(r, [AtomicPiece(1.0, FunctionOnSupport(block.pieces[0].a.values * 10), q)])
    assert "size bound" in {v["kind"] for v in validate_block(mu, ctx, too_big).violations}
    outside = AtomicBlock(Cube([0.9], 0.2), block.pieces)
    assert "cube outside envelope" in {v["kind"] for v in validate_block(mu, ctx, outside).violations}


def test_pairing_check(calibration):
    mu = segment(33, d=1)
    ctx = AnalysisContext.build(mu, n=1)
    family = build_family(mu, ctx)
    block = _symmetric_block(mu, ctx, Cube([0.25], 0.25), Cube([0.5], 1.0))
    assert pairing_check(mu, ctx, block, np.ones(mu.size), family) == 0.0
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = rng.standard_normal(mu.size)
        assert pairing_check(mu, ctx, block, g, family) <= calibration["pairing"]["bound"]


@pytest.mark.parametrize("eps", [0.1, 0.01, pytest.param(0.001, marks=pytest.mark.slow)])
def test_step_function_separates_rbmo_from_bmo(eps):
    mu = eps_weighted(eps / 4, eps)
    ctx = AnalysisContext.build(mu, n=1)
    grid_points = mu.points[np.isclose(mu.points[:, 0] * 8, np.round(mu.points[:, 0] * 8))]
    extra = [Cube([0.375, 0.0], 0.25), Cube([-0.375, 0.0], 0.25)]
    family = build_family(mu, ctx, centers=grid_points, min_side=0.5, extra_cubes=extra)
    f = eps_step(mu, eps)
    assert rbmo_star(mu, ctx, f, family).value >= 0.1 / eps
    assert bmo_rho(mu, f, family, 2.0).value >= 0.1 / eps
    assert bmo_rho(mu, f, family, 5.0).value <= 10.0


def test_plain_mean_characterizations_stay_comparable(cloud, cloud_ctx, cloud_family, calibration):
    spread = calibration["norm_equivalence"]["spread"]
    rng = np.random.default_rng(11)
    for _ in range(8):
        f = rng.standard_normal(cloud.size) * rng.uniform(0.1, 10.0)
        star = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
        for norm in (fifi_b_norm, fifi_c_norm):
            assert 1 / spread <= norm(cloud, cloud_ctx, f, cloud_family).value / star <= spread


def test_lattice_operations_stay_in_the_space(cloud, cloud_ctx, cloud_family, calibration):
    spread = calibration["norm_equivalence"]["spread"]
    rng = np.random.default_rng(12)
    for _ in range(5):
        f = rng.standard_normal(cloud.size)
        g = np.log(np.maximum(cloud.euclidean_distances(cloud.points[rng.integers(cloud.size)]), cloud.r_min))
        nf = rbmo_star(cloud, cloud_ctx, f, cloud_family).value
        ng = rbmo_star(cloud, cloud_ctx, g, cloud_family).value
        assert rbmo_star(cloud, cloud_ctx, np.abs(f), cloud_family).value <= spread * nf
        assert rbmo_star(cloud, cloud_ctx, np.abs(g), cloud_family).value <= spread * ng
        for h in (np.minimum(f, g), np.maximum(f, g)):
            assert rbmo_star(cloud, cloud_ctx, h, cloud_family).value <= spread * (nf + ng)


def test_rbmo_p_is_nondecreasing_in_p(cloud, cloud_ctx, cloud_family):
    # mu(Q) <= mu(rho Q), so the oscillation p-means are taken against a sub-probability
    rng = np.random.default_rng(13)
    for _ in range(5):
        f = rng.standard_normal(cloud.size)
        values = [rbmo_p(cloud, cloud_ctx, f, cloud_family, p).value for p in (1.0, 1.5, 2.0, 3.0)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(values, values[1:]))


def test_jn_tail_near_zero_is_the_cube_share(cloud, cloud_ctx):
    f = np.random.default_rng(14).standard_normal(cloud.size)
    for i in (0, 17, 42):
        cube = Cube(cloud.points[i], 0.5)
        share = cube_mass(cloud, cube) / cube_mass(cloud, cube.dilate(cloud_ctx.rho))
        tail = jn_tail(cloud, cloud_ctx, f, cube, [1e-300])[0][1]
        assert tail <= share * (1 + 1e-12)
        # continuous draws never hit the companion mean exactly
        assert tail == pytest.approx(share, rel=1e-12)
