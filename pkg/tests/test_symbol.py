import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import action_quad, pushforward_density
from pertspec.errors import HypothesisViolation, MultiplicityViolation, OutOfBand, PairTooFar
from pertspec.oracles import mc_phase_volume
from pertspec.symbol import (
    SpectralWindow,
    SymbolFunction,
    action_S,
    find_turning_points,
    k_weight,
    phi_leading,
    sigma_density,
    symplectic_volume,
)

G = SymbolFunction.default()
interior = st.floats(-0.9, 0.9, allow_nan=False)
shift = st.floats(-3.0, 3.0, allow_nan=False)

# frozen from the test-side oracles (pushforward histogram, plain quadrature)
SIGMA_0 = 2.0
S_0 = 2.0
S_03 = 1.1482161991661917
VOLUME_UNIT = 2 * np.pi / 3


def test_default_symbol_band():
    assert G.band_min == pytest.approx(-1.0)
    assert G.band_max == pytest.approx(1.0)
    assert G.mean_value == 0
    assert G.band_limit == 1


def test_evaluation_is_periodic():
    x = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(G(x), G(x + 2 * np.pi), atol=1e-13)
    assert np.allclose(G(x), np.exp(1j * x), atol=1e-14)
    assert np.allclose(G.im(x, 1), np.cos(x), atol=1e-14)


def test_from_triples_roundtrip():
    g = SymbolFunction.from_triples([(1, 1.0, 0.0), (0, 0.2, 0.1)])
    assert SymbolFunction.from_triples(g.to_triples()) == g
    assert g.mean_value == pytest.approx(0.2 + 0.1j)


def test_h1_violation_detected():
    with pytest.raises(MultiplicityViolation) as exc:
        SymbolFunction.from_triples([(1, 1.0, 0.0), (3, 1.0, 0.0)])
    assert "H.1" in str(exc.value)
    assert isinstance(exc.value, HypothesisViolation)
    # Im g = sin x (1 + cos x): g'(pi) = 0 with no sign change of Im g'
    with pytest.raises(MultiplicityViolation, match="without changing sign"):
        SymbolFunction.from_triples([(1, 1.0, 0.0), (2, 0.5, 0.0)])
    SymbolFunction.from_triples([(1, 1.0, 0.0), (2, 0.3, 0.0)]).check_h1()


def test_turning_points_examples():
    tp = find_turning_points(G, 0.0)
    assert tp.x_plus == pytest.approx(np.pi, abs=1e-12)
    assert tp.x_minus == pytest.approx(2 * np.pi, abs=1e-12)
    tp = find_turning_points(G, 0.5)
    assert tp.x_plus == pytest.approx(5 * np.pi / 6, abs=1e-12)
    assert tp.x_minus == pytest.approx(2 * np.pi + np.pi / 6, abs=1e-12)
    with pytest.raises(OutOfBand):
        find_turning_points(G, 1.5)


@given(interior)
def test_turning_point_invariants(t):
    tp = find_turning_points(G, t)
    assert abs(np.sin(tp.x_plus) - t) <= 1e-12
    assert abs(np.sin(tp.x_minus) - t) <= 1e-12
    assert np.cos(tp.x_plus) < 0 < np.cos(tp.x_minus)
    assert tp.x_minus - 2 * np.pi < tp.x_plus < tp.x_minus
    b = G.b
    assert b - 2 * np.pi <= tp.x_plus < b and b - 2 * np.pi <= tp.x_minus < b


def test_turning_points_general_symbol():
    g = SymbolFunction.from_triples([(1, 1.0, 0.0), (2, 0.1, 0.05)])
    for t in np.linspace(g.band_min + 0.05, g.band_max - 0.05, 9):
        tp = find_turning_points(g, t)
        assert abs(g.im(tp.x_plus) - t) <= 1e-12
        assert abs(g.im(tp.x_minus) - t) <= 1e-12
        assert g.im(tp.x_plus, 1) < 0 < g.im(tp.x_minus, 1)


def test_sigma_matches_pushforward_oracle():
    assert sigma_density(G, 0) == pytest.approx(SIGMA_0, abs=1e-12)
    assert pushforward_density(0.0) == pytest.approx(SIGMA_0, rel=0.01)
    assert sigma_density(G, 0.3j) == pytest.approx(pushforward_density(0.3), rel=0.01)
    assert sigma_density(G, 0.3) == pytest.approx(sigma_density(G, 0.0), abs=1e-12)


def test_sigma_blows_up_at_band_edge():
    ts = 1 - np.logspace(-1, -6, 12)
    vals = [sigma_density(G, 1j * t) for t in ts]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] > 1e3
    with pytest.raises(OutOfBand):
        sigma_density(G, 1.0j)


def test_action_values():
    assert action_S(G, 0) == pytest.approx(S_0, abs=1e-10)
    assert action_S(G, 0.3j) == pytest.approx(S_03, abs=1e-10)
    assert action_quad(0.3) == pytest.approx(S_03, abs=1e-10)
    assert action_S(G, 0.2) == pytest.approx(action_S(G, -0.7), abs=1e-12)


def test_action_vanishes_at_band_edge():
    ts = 1 - np.logspace(-1, -5, 9)
    vals = [action_S(G, 1j * t) for t in ts]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-5
    for t in ts[:3]:
        assert action_S(G, 1j * t) == pytest.approx(action_quad(t), abs=1e-9)


@given(interior, shift)
def test_im_only_dependence(t, s):
    z = 1j * t
    assert sigma_density(G, z + s) == pytest.approx(sigma_density(G, z), abs=1e-12)
    assert action_S(G, z + s) == pytest.approx(action_S(G, z), abs=1e-12)
    assert phi_leading(G, z + s, 0.05) == pytest.approx(phi_leading(G, z, 0.05), abs=1e-12)
    assert phi_leading(G, z + s, 0.05, branch="minus") == pytest.approx(
        phi_leading(G, z, 0.05, branch="minus"), abs=1e-12
    )


@given(interior)
def test_sigma_and_action_positive(t):
    assert sigma_density(G, 1j * t) > 0
    assert action_S(G, 1j * t) > 0


def test_k_weight_examples():
    assert k_weight(G, 0, 0, 0.01) == 0
    assert k_weight(G, 0, 0.1, 0.01, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert k_weight(G, 0, 0.1, 0.01, 0.25) == pytest.approx(0.125, abs=1e-12)
    with pytest.raises(PairTooFar):
        k_weight(G, 0, 0.6, 0.01)


@settings(max_examples=50)
@given(interior, interior, st.floats(-0.2, 0.2), st.floats(0.01, 0.2))
def test_k_weight_symmetric_and_monotone(t1, t2, dx, h):
    z, w = 1j * t1 * 0.2, dx + 1j * t2 * 0.2
    assert k_weight(G, z, w, h) == k_weight(G, w, z, h)
    mid = 0.5 * (z + w)
    d = (w - z) / 2
    ks = [k_weight(G, mid - s * d, mid + s * d, h) for s in (0.25, 0.5, 1.0)]
    assert ks[0] <= ks[1] <= ks[2]


def test_phi_leading_at_turning_point():
    h = 0.05
    assert phi_leading(G, 0, h) == pytest.approx(h / 4 * np.log(np.pi * h), abs=1e-14)
    assert phi_leading(G, 0, h, branch="minus") == pytest.approx(h / 4 * np.log(np.pi * h), abs=1e-14)
    # explicit reference point away from the turning point adds the action term
    x0 = np.pi + 0.3
    expected = (np.cos(x0) - np.cos(np.pi)) + h / 4 * np.log(np.pi * h)  # int_pi^x0 (0 - sin) = cos x0 + 1
    assert phi_leading(G, 0, h, x0=x0) == pytest.approx(expected, abs=1e-10)


def test_symplectic_volume_examples():
    w = SpectralWindow(-0.5, 0.5, -0.5, 0.5)
    assert symplectic_volume(G, w) == pytest.approx(VOLUME_UNIT, abs=1e-9)
    vol, se = mc_phase_volume(G, w, 400_000, np.random.default_rng(3))
    assert abs(vol - VOLUME_UNIT) < 4 * se
    assert symplectic_volume(G, SpectralWindow(1.7, 2.7, -0.5, 0.5)) == pytest.approx(VOLUME_UNIT, abs=1e-9)
    assert symplectic_volume(G, SpectralWindow(0.0, 0.0, -0.5, 0.5)) == 0.0


@settings(max_examples=25)
@given(st.floats(-0.8, 0.7), st.floats(0.01, 0.1), st.floats(0.01, 0.1))
def test_symplectic_volume_additive(lo, d1, d2):
    a = SpectralWindow(0, 1, lo, lo + d1, margin=0.05)
    b = SpectralWindow(0, 1, lo + d1, lo + d1 + d2, margin=0.05)
    ab = SpectralWindow(0, 1, lo, lo + d1 + d2, margin=0.05)
    assert symplectic_volume(G, a) + symplectic_volume(G, b) == pytest.approx(symplectic_volume(G, ab), abs=1e-9)


def test_window_validation():
    SpectralWindow(-0.5, 0.5, -0.5, 0.5).validate(G)
    with pytest.raises(HypothesisViolation) as exc:
        SpectralWindow(-0.5, 0.5, -0.5, 0.95).validate(G)
    assert "H.2" in str(exc.value)
    w = SpectralWindow(-0.5, 0.5, -0.5, 0.5)
    assert w.area == pytest.approx(1.0)
    assert w.contains(np.array([0, 0.6, 0.5j])).tolist() == [True, False, True]
    assert w.dilate(0.1).erode(0.1) == w
