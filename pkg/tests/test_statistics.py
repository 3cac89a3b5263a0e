import warnings

import numpy as np
import pytest

from _oracles import poisson_sample
from pertspec.density import DensityModel, one_point_density
from pertspec.errors import EmptyRecords, ErosionTooLarge, MismatchedConfig, TooFewTrials
from pertspec.montecarlo import TrialConfig, read_records, records_from_memory, run_batch, EigenRecord
from pertspec.statistics import (
    CompareReport,
    compare_report,
    intensity_grid,
    loglog_slope,
    pair_correlation,
    radial_bins,
    theory_pair_correlation,
    unordered_pair_counts,
    weyl_count,
)
from pertspec.symbol import SpectralWindow, SymbolFunction

G = SymbolFunction.default()
OMEGA = SpectralWindow(-0.5, 0.5, -0.5, 0.5)
H = 0.02


@pytest.fixture(scope="module")
def perturbed(tmp_path_factory):
    d = tmp_path_factory.mktemp("stats-run")
    c = TrialConfig(g=G, h=H, window=OMEGA, trials=200, master_seed=2024)
    run_batch(c, d)
    return c, read_records(d, c.config_hash())


def test_weyl_unperturbed_comb():
    k = np.arange(-109, 110)
    comb = (H * k).astype(complex)
    recs = records_from_memory([EigenRecord(i, 0, comb) for i in range(40)])
    mean, se = weyl_count(recs, OMEGA)
    assert mean == 51 and se == 0
    with pytest.raises(TooFewTrials):
        weyl_count(recs.eigenvalue_lists()[:29], OMEGA)


def test_weyl_scales_with_window():
    rng = np.random.default_rng(0)
    pts = poisson_sample(16.0, (-1.5, 1.5, -0.6, 0.6), 400, rng)
    a, sa = weyl_count(pts, OMEGA)
    b, sb = weyl_count(pts, SpectralWindow(-1.0, 1.0, -0.5, 0.5))
    assert abs(b - 2 * a) < 4 * np.hypot(sb, 2 * sa)


def test_intensity_grid_poisson():
    rng = np.random.default_rng(1)
    lam = 30.0
    pts = poisson_sample(lam, OMEGA.as_tuple(), 400, rng)
    ig = intensity_grid(pts, OMEGA, (5, 5))
    assert ig.counts.sum() == sum(len(p) for p in pts)
    assert np.all(ig.density >= 0)
    assert np.mean(np.abs(ig.density - lam) <= 3 * ig.stderr) >= 0.95
    assert ig.bin_area == pytest.approx(0.04)
    with pytest.raises(EmptyRecords):
        intensity_grid([], OMEGA)


def test_intensity_grid_empty_window():
    pts = [np.array([2.0 + 0j]), np.array([], dtype=complex)]
    ig = intensity_grid(pts, OMEGA, (3, 3))
    assert not ig.counts.any() and not ig.density.any()


def test_intensity_grid_warns_for_fine_bins():
    rng = np.random.default_rng(2)
    pts = poisson_sample(2000.0, OMEGA.as_tuple(), 5, rng)
    with pytest.warns(UserWarning):
        intensity_grid(pts, OMEGA, (40, 40))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        intensity_grid(pts, OMEGA, (4, 4))


def test_pair_correlation_poisson():
    rng = np.random.default_rng(3)
    edges = radial_bins(H)
    padded = OMEGA.dilate(edges[-1])
    pts = poisson_sample(20.0, padded.as_tuple(), 300, rng)
    for norm in ("mixed", "stationary"):
        pc = pair_correlation(pts, OMEGA, edges, padded_window=padded, normalization=norm)
        assert np.all(pc.g2 >= 0)
        assert np.all(np.diff(pc.r_edges) > 0)
        z = np.abs(pc.g2 - 1) / pc.stderr
        assert np.mean(z <= 3) >= 0.95


def test_pair_correlation_erosion_guard():
    edges = radial_bins(H)
    with pytest.raises(ErosionTooLarge):
        pair_correlation([np.zeros(2, complex)], OMEGA, edges, padded_window=OMEGA.dilate(0.5 * edges[-1]))
    with pytest.raises(ValueError):
        pair_correlation([np.zeros(2, complex)], OMEGA, edges[::-1])


def test_no_pairs_from_outside_padded_window():
    rng = np.random.default_rng(4)
    edges = np.geomspace(0.01, 0.3, 9)
    padded = OMEGA.dilate(0.3)
    pts = poisson_sample(20.0, padded.as_tuple(), 20, rng)
    base = pair_correlation(pts, OMEGA, edges, padded_window=padded, normalization="stationary")
    # points beyond the padded window never count, even right next to a centre
    extra = [np.concatenate([p, [0.81 + 0j, 0.5 + 0.81j]]) for p in pts]
    more = pair_correlation(extra, OMEGA, edges, padded_window=padded, normalization="stationary")
    assert np.array_equal(base.same_counts, more.same_counts)


def test_ordered_is_twice_unordered():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.5, 0.5, 60) + 1j * rng.uniform(-0.5, 0.5, 60)
    edges = np.geomspace(0.01, 0.4, 12)
    big = SpectralWindow(-0.6, 0.6, -0.6, 0.6, margin=0.01)
    pc = pair_correlation([pts], big, edges, normalization="stationary")
    assert np.array_equal(pc.same_counts, 2 * unordered_pair_counts(pts, edges))


def test_loglog_slope_exact_power():
    edges = np.geomspace(0.01, 1.0, 11)
    from pertspec.statistics import PairCorrelation

    r = np.sqrt(edges[1:] * edges[:-1])
    g = 3.0 * r**2
    pc = PairCorrelation(edges, g, 0.05 * g, g, np.ones_like(g), 1.0, 1.0, 10, "mixed")
    for weighted in (True, False):
        slope, se, n = loglog_slope(pc, 0.0, 2.0, weighted=weighted)
        assert slope == pytest.approx(2.0, abs=1e-12)
        assert n == 10
    slope, se, _ = loglog_slope(pc, 0.0, 2.0)
    assert se == pytest.approx(0.05 / np.sqrt(np.sum((np.log(r) - np.log(r).mean()) ** 2)), rel=1e-9)


def test_theory_self_comparison_and_roundtrip():
    edges = radial_bins(H)
    model = DensityModel(G, H, max_separation=10.0)
    th = theory_pair_correlation(model, OMEGA, edges)
    rep = compare_report(th, model, OMEGA)
    assert np.allclose(rep.z_scores, 0.0)
    back = CompareReport.from_json(rep.to_json())
    assert back == rep
    with pytest.raises(MismatchedConfig):
        compare_report(th, DensityModel(G, 0.03, max_separation=10.0), OMEGA)


def test_perturbed_intensity_matches_theory(perturbed):
    c, recs = perturbed
    ig = intensity_grid(recs, OMEGA, (4, 4))
    cre, cim = ig.centers
    model = DensityModel(G, H)
    th = np.array([[one_point_density(complex(x, y), model) for y in cim] for x in cre])
    z = np.abs(ig.density - th) / ig.stderr
    assert np.all(z[1:-1, 1:-1] <= 3)


def test_report_flags_on_perturbed_run(perturbed):
    c, recs = perturbed
    pc = pair_correlation(recs, OMEGA, radial_bins(H), padded_window=c.padded_window, h=H)
    rep = compare_report(pc, DensityModel(G, H, c.delta, max_separation=10.0), OMEGA,
                         weyl=weyl_count(recs, OMEGA), weyl_expected=50 / 3)
    crit = rep.criteria
    assert set(crit) == {"repulsion_slope", "long_range", "weyl"}
    assert crit["weyl"]["pass"] == (crit["weyl"]["relative_error"] < 0.1)
    assert crit["long_range"]["pass"] == (0.85 <= rep.long_range_min and rep.long_range_max <= 1.15)
    assert crit["repulsion_slope"]["pass"] == (abs(rep.repulsion_slope - 2) <= 0.3)
    assert crit["weyl"]["pass"] and crit["long_range"]["pass"]
