import numpy as np
import pytest

from cz_machinery import (besicovich_cover, check_proviso, cz_companions, cz_decompose, cz_stopping_cubes,
                          overlap_count, proviso_threshold)
from example_measures import cantor4
from measure_core import AnalysisContext, Cube, DiscreteMeasure

EXACT = 1e-12


def spikes(mu, count, seed):
    """Unit spikes at `count` random support points."""
    rng = np.random.default_rng(seed)
    f = np.zeros(mu.size)
    f[rng.choice(mu.size, size=count, replace=False)] = rng.choice([-1.0, 1.0], size=count)
    return f


def sparse_gaussian(mu, count, rng):
    """Standard normal values on `count` random support points, zero elsewhere."""
    f = np.zeros(mu.size)
    f[rng.choice(mu.size, size=count, replace=False)] = rng.standard_normal(count)
    return f


def level_for(mu, ctx, f, p, factor=1.2):
    """A level above the L1 threshold and above its p-th power analogue."""
    lp_level = (ctx.beta_d * np.sum(np.abs(f) ** p * mu.masses) / mu.total_mass) ** (1.0 / p)
    return factor * max(proviso_threshold(mu, ctx, f), lp_level)


def test_proviso_rejects_low_levels(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    f = np.ones(small_cantor.size)
    # beta_d * ||f||_1 / ||mu|| = 8
    assert proviso_threshold(small_cantor, ctx, f) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        check_proviso(small_cantor, ctx, f, 8.0)
    with pytest.raises(ValueError):
        check_proviso(small_cantor, ctx, f, -1.0)
    with pytest.raises(ValueError):
        cz_decompose(small_cantor, ctx, 10.0 * f, 2.0, 0.5)
    check_proviso(small_cantor, ctx, f, 9.0)


def test_l1_level_is_accepted_for_p_two(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    f = np.zeros(small_cantor.size)
    f[5] = 10.0
    # L1 level 8 * 10 / 64 = 1.25, while the squared form would ask lambda^2 > 12.5
    lam = 1.5 * proviso_threshold(small_cantor, ctx, f)
    assert lam == pytest.approx(1.875)
    dec = cz_decompose(small_cantor, ctx, f, 2.0, lam)
    cert = dec.certificates
    assert cert["stopping_cubes"] >= 1
    assert not cert["lp_proviso"]
    assert cert["reconstruction_error"] <= EXACT
    assert cert["cc1"] and cert["cc3"] and cert["blocks_valid"]
    assert cert["cc4_error"] <= EXACT


def test_invalid_exponent(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    with pytest.raises(ValueError):
        cz_decompose(small_cantor, ctx, np.ones(small_cantor.size), 0.5, 10.0)


def test_level_above_sup_gives_no_blocks(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    f = spikes(small_cantor, 5, seed=0)
    dec = cz_decompose(small_cantor, ctx, f, 2.0, 1.0)
    assert dec.stopping_cubes == [] and dec.bad_blocks == []
    assert np.array_equal(dec.good.values, f)
    assert dec.certificates["reconstruction_error"] == 0.0
    assert dec.certificates["cc3"]


def test_certificates_on_spiky_functions(small_cantor, calibration):
    ctx = AnalysisContext.build(small_cantor)
    for seed in range(4):
        f = spikes(small_cantor, 3, seed)
        for p in (1.0, 2.0):
            lam = level_for(small_cantor, ctx, f, p)
            assert lam < 1.0
            dec = cz_decompose(small_cantor, ctx, f, p, lam)
            cert = dec.certificates
            assert cert["stopping_cubes"] >= 1
            assert cert["reconstruction_error"] <= EXACT
            assert cert["cc1"] and cert["cc3"] and cert["blocks_valid"]
            assert cert["cc4_error"] <= EXACT
            assert cert["cc7_ratio"] <= calibration["cz"]["cc7_ratio"]
            if p > 1:
                assert cert["cc6_constant"] is not None


def test_cc7_bound_holds_for_rho_two(small_cantor):
    ctx = AnalysisContext.build(small_cantor, rho=2.0)
    f = spikes(small_cantor, 4, seed=7)
    dec = cz_decompose(small_cantor, ctx, f, 2.0, level_for(small_cantor, ctx, f, 2.0))
    cert = dec.certificates
    assert cert["cc7_bound"] is not None
    assert cert["cc7_ratio"] <= cert["cc7_bound"]


def test_stopping_cubes_cover_exceedances(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    f = spikes(small_cantor, 6, seed=3)
    lam = level_for(small_cantor, ctx, f, 2.0)
    cubes = cz_stopping_cubes(small_cantor, ctx, f, 2.0, lam)
    covered = overlap_count(small_cantor, cubes) > 0
    assert np.all(covered[np.abs(f) > lam])


def test_companions_are_doubling_dilates(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    cubes = [Cube(small_cantor.points[i], small_cantor.r_min) for i in (0, 10, 40)]
    beta = 6.0 ** (ctx.n + 1)
    for q, r in zip(cubes, cz_companions(small_cantor, ctx, cubes)):
        assert r.center == q.center
        ratio = r.side / q.side
        assert ratio >= 6.0 and np.isclose(6.0 ** round(np.log(ratio) / np.log(6.0)), ratio)
        inner = np.sum(small_cantor.masses[small_cantor.cube_indices(r)])
        outer = np.sum(small_cantor.masses[small_cantor.cube_indices(r.dilate(6.0))])
        assert outer <= beta * inner


def test_besicovich_cover_keeps_every_center():
    rng = np.random.default_rng(5)
    candidates = []
    for _ in range(40):
        c = rng.uniform(0, 1, size=2)
        candidates.append((c, Cube(c, float(rng.choice([0.05, 0.1, 0.2])))))
    chosen = besicovich_cover(candidates)
    assert 0 < len(chosen) <= len(candidates)
    for c, _ in candidates:
        assert any(np.max(np.abs(np.asarray(cube.center) - c)) <= 0.5 * cube.side for _, cube in chosen)
    # selected centers lie outside every earlier selected cube
    for k, (c, _) in enumerate(chosen):
        for _, earlier in chosen[:k]:
            assert np.max(np.abs(np.asarray(earlier.center) - c)) > 0.5 * earlier.side


def test_decomposition_serializes(small_cantor):
    ctx = AnalysisContext.build(small_cantor)
    f = spikes(small_cantor, 2, seed=11)
    data = cz_decompose(small_cantor, ctx, f, 2.0, level_for(small_cantor, ctx, f, 2.0)).to_dict()
    assert set(data) >= {"lambda", "p", "stopping_cubes", "companions", "good", "bad_blocks", "certificates"}
    assert len(data["stopping_cubes"]) == len(data["bad_blocks"])


def _assert_decomposition_properties(mu, dec):
    cert = dec.certificates
    assert cert["reconstruction_error"] <= EXACT
    assert cert["cc1"] and cert["cc3"] and cert["blocks_valid"]
    assert cert["cc4_error"] <= EXACT
    assert cert["cc2_residuals"] == 0
    assert cert["good_sup_over_lambda"] <= dec.B_used + 1.0 + EXACT
    # the weights form a partition of unity on the union of the stopping cubes
    covered = overlap_count(mu, dec.stopping_cubes) > 0
    total = np.sum([w.values for w in dec.weights], axis=0) if dec.weights else np.zeros(mu.size)
    assert np.allclose(total[covered], 1.0, rtol=0, atol=EXACT)
    assert np.all(total[~covered] == 0.0)


def _gaussian_sweep(generation, draws, points, seed):
    mu = cantor4(generation)
    ctx = AnalysisContext.build(mu)
    rng = np.random.default_rng(seed)
    nontrivial = 0
    for _ in range(draws):
        f = sparse_gaussian(mu, points, rng)
        lam = level_for(mu, ctx, f, 2.0, factor=float(rng.uniform(1.1, 2.0)))
        dec = cz_decompose(mu, ctx, f, 2.0, lam)
        _assert_decomposition_properties(mu, dec)
        nontrivial += dec.certificates["stopping_cubes"] > 0
    assert nontrivial > 0


def test_gaussian_draws_on_cantor_set():
    _gaussian_sweep(generation=4, draws=10, points=24, seed=21)


@pytest.mark.slow
def test_gaussian_draws_on_fine_cantor_set():
    _gaussian_sweep(generation=6, draws=50, points=200, seed=22)


def test_single_spike_gives_one_cube_at_the_spike():
    mu = DiscreteMeasure(np.arange(64.0).reshape(-1, 1), np.ones(64), 0.5)
    ctx = AnalysisContext.build(mu, n=1)
    f = np.zeros(mu.size)
    f[0] = 10.0
    dec = cz_decompose(mu, ctx, f, 1.0, 1.0)
    assert len(dec.stopping_cubes) == 1
    assert dec.stopping_cubes[0].center == (0.0,)
    # first dyadic side whose double holds fewer than 40 unit masses
    assert dec.stopping_cubes[0].side == 32.0
    _assert_decomposition_properties(mu, dec)


def test_single_correction_spreads_the_mean_over_its_companion():
    mu = DiscreteMeasure(np.arange(64.0).reshape(-1, 1), np.ones(64), 0.5)
    ctx = AnalysisContext.build(mu, n=1)
    f = np.zeros(mu.size)
    f[0] = 10.0
    dec = cz_decompose(mu, ctx, f, 1.0, 1.0)
    r = dec.companions[0]
    inside = mu.cube_indices(r)
    expected = np.zeros(mu.size)
    expected[inside] = np.sum(f * dec.weights[0].values * mu.masses) / np.sum(mu.masses[inside])
    assert np.allclose(dec.phis[0].values, expected, rtol=0, atol=EXACT)


def test_besicovich_cover_examples():
    disjoint = [(np.array([x, 0.0]), Cube([x, 0.0], 1.0)) for x in (0.0, 5.0, 10.0)]
    assert len(besicovich_cover(disjoint)) == 3
    same = [(np.array([0.0, 0.0]), Cube([0.0, 0.0], 1.0)) for _ in range(3)]
    assert len(besicovich_cover(same)) == 1
    chain = [(np.array([x]), Cube([x], 1.0)) for x in (0.0, 0.5, 1.0)]
    assert [cube.center for _, cube in besicovich_cover(chain)] == [(0.0,), (1.0,)]
