import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pertspec.errors import DeltaWindowEmpty, HypothesisViolation, RejectedDraw, TruncationTooSmall
from pertspec.operators import (
    FourierTruncation,
    assemble_perturbed,
    block_half_width,
    build_unperturbed,
    delta_from_hypothesis,
    draw_perturbation,
    read_matrix_binary,
    write_matrix_binary,
    write_matrix_csv,
)
from pertspec.symbol import SpectralWindow, SymbolFunction

G = SymbolFunction.default()
OMEGA = SpectralWindow(-0.5, 0.5, -0.5, 0.5)


def test_truncation_layout():
    tr = FourierTruncation.for_h(0.02, G)
    assert tr.block == 100
    assert tr.M == 100 + 1 + 8
    assert tr.dim == 219
    assert tr.index(-tr.M) == 0 and tr.index(tr.M) == tr.dim - 1
    assert tr.block_slice() == slice(9, 210)
    with pytest.raises(IndexError):
        tr.index(tr.M + 1)
    assert block_half_width(0.1, 2.0) == 20  # 2/0.1 rounds below 20 in floating point


def test_truncation_too_small():
    with pytest.raises(TruncationTooSmall):
        build_unperturbed(G, 0.1, FourierTruncation(M=20, block=20))
    with pytest.raises(TruncationTooSmall):
        FourierTruncation(M=5, block=6)


def test_unperturbed_small_example():
    op = build_unperturbed(G, 0.1, FourierTruncation(M=2))
    assert np.allclose(np.diag(op.matrix), [-0.2, -0.1, 0, 0.1, 0.2])
    assert np.array_equal(np.diag(op.matrix, -1), np.ones(4))
    assert np.count_nonzero(np.triu(op.matrix, 1)) == 0
    ev = np.sort(np.linalg.eigvals(op.matrix).real)
    assert np.allclose(ev, [-0.2, -0.1, 0, 0.1, 0.2], atol=1e-14)


@settings(max_examples=20)
@given(
    st.lists(st.tuples(st.integers(-3, 3), st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=4),
    st.floats(0.05, 0.5),
    st.integers(4, 20),
)
def test_entries_and_trace(triples, h, M):
    coeffs = {}
    for m, re, im in triples:
        coeffs[m] = complex(re, im)
    coeffs[1] = coeffs.get(1, 0) + 2.0  # keep a dominant first mode so H.1 holds
    try:
        g = SymbolFunction.from_coeffs(coeffs)
    except HypothesisViolation:
        return
    op = build_unperturbed(g, h, FourierTruncation(M))
    k = np.arange(-M, M + 1)
    for j in range(-M, M + 1):
        for kk in (-M, 0, M):
            want = h * kk * (j == kk) + g.coeff(j - kk)
            assert op.matrix[j + M, kk + M] == pytest.approx(want, abs=1e-15)
    assert np.trace(op.matrix) == pytest.approx((2 * M + 1) * g.mean_value + h * k.sum(), abs=1e-12)


def test_galerkin_consistency():
    g = SymbolFunction.from_triples([(1, 1.0, 0.0), (2, 0.1, 0.0), (0, 0.05, 0.02)])
    h = 0.05
    ev = {}
    for M in (40, 80):
        ev[M] = np.linalg.eigvals(build_unperturbed(g, h, FourierTruncation(M)).matrix)
    inside = lambda v: v[OMEGA.dilate(0).contains(v - g.mean_value)]  # noqa: E731
    a, b = np.sort_complex(inside(ev[40])), np.sort_complex(inside(ev[80]))
    assert len(a) == len(b) > 0
    assert np.max(np.abs(a - b)) < 1e-10
    # on the line <g> + h Z
    k = (a - g.mean_value) / h
    assert np.allclose(k, np.round(k.real), atol=1e-9)


def test_draw_determinism_and_variance():
    d1 = draw_perturbation(123, 0.02)
    d2 = draw_perturbation(123, 0.02)
    assert np.array_equal(d1.alpha, d2.alpha)
    assert not np.array_equal(d1.alpha, draw_perturbation(124, 0.02).alpha)
    assert d1.alpha.shape == (201, 201)
    # E|alpha|^2 = 1 over many draws of a small block
    acc = np.array([np.mean(np.abs(draw_perturbation(s, 1.0, C1=2.0).alpha) ** 2) for s in range(10_000)])
    assert acc.mean() == pytest.approx(1.0, abs=0.03)
    a = np.concatenate([draw_perturbation(s, 1.0).alpha.ravel() for s in range(2000)])
    assert np.var(a.real) == pytest.approx(0.5, abs=0.02)
    assert np.var(a.imag) == pytest.approx(0.5, abs=0.02)
    assert abs(np.mean(a.real * a.imag)) < 0.02


def test_rejection_rate_and_norm():
    draws = [draw_perturbation(s, 0.02) for s in range(1000)]
    assert np.mean([d.accepted for d in draws]) >= 0.99
    d = draws[0]
    assert d.norm == pytest.approx(np.linalg.norm(d.alpha))
    assert d.radius == pytest.approx(8.0 / 0.02)
    tight = draw_perturbation(0, 0.02, C_ball=1.0)
    assert not tight.accepted


def test_assemble_perturbed():
    h = 0.1
    tr = FourierTruncation.for_h(h, G)
    P0 = build_unperturbed(G, h, tr)
    d = draw_perturbation(7, h)
    assert np.array_equal(assemble_perturbed(P0, d, 0.0).matrix, P0.matrix)
    op = assemble_perturbed(P0, d, 1e-3)
    diff = op.matrix - P0.matrix
    sl = tr.block_slice()
    assert np.linalg.norm(diff) == pytest.approx(1e-3 * d.norm, rel=1e-12)
    outside = diff.copy()
    outside[sl, sl] = 0
    assert not outside.any()
    two = assemble_perturbed(assemble_perturbed(P0, d, 1e-3), d, 2e-3)
    assert np.allclose(two.matrix, assemble_perturbed(P0, d, 3e-3).matrix, atol=1e-15)
    assert two.delta == pytest.approx(3e-3)
    assert op.fingerprint != P0.fingerprint
    with pytest.raises(RejectedDraw):
        assemble_perturbed(P0, draw_perturbation(7, h, C_ball=0.1), 1e-3)


def test_delta_examples():
    v = delta_from_hypothesis(0.02, 6.0, G, OMEGA)
    assert v.delta == pytest.approx(np.sqrt(0.02) * 0.02**6, rel=1e-12)
    assert v.delta == pytest.approx(9.05e-12, rel=1e-3)
    assert v.upper == pytest.approx(0.02**5.1)
    assert v.upper == pytest.approx(2.2e-9, rel=0.05)
    assert v.delta <= v.upper
    # the action is smallest on the window's Im edges: S(0.5 i)
    assert v.min_action == pytest.approx(2 * np.sqrt(0.75) - 2 * 0.5 * np.arccos(0.5), abs=1e-8)
    assert v.lower == pytest.approx(np.sqrt(0.02) * np.exp(-v.min_action / 0.02))
    assert v.ok
    assert v.require() is v


def test_delta_window_empty():
    with pytest.raises(DeltaWindowEmpty) as exc:
        delta_from_hypothesis(0.05, 6.0, G, OMEGA)
    assert "H.3" in str(exc.value)
    assert exc.value.lower >= exc.value.upper
    # C = 10 shrinks the admissible window to nothing at h = 0.02
    with pytest.raises(DeltaWindowEmpty):
        delta_from_hypothesis(0.02, 6.0, G, OMEGA, C=10.0)


def test_delta_eps0_out_of_range():
    v = delta_from_hypothesis(0.02, 3.0, G, OMEGA)
    assert not v.eps0_ok
    with pytest.raises(HypothesisViolation):
        v.require()


def test_matrix_export_roundtrip(tmp_path):
    op = assemble_perturbed(build_unperturbed(G, 0.2, FourierTruncation.for_h(0.2, G)), draw_perturbation(1, 0.2), 0.1)
    p = write_matrix_binary(tmp_path / "m.bin", op.matrix)
    assert p.stat().st_size == op.dim**2 * 16
    assert np.array_equal(read_matrix_binary(p), op.matrix)
    raw = np.fromfile(p, dtype="<f8")
    assert raw[0] == op.matrix[0, 0].real and raw[1] == op.matrix[0, 0].imag
    csv = write_matrix_csv(tmp_path / "m.csv", op.matrix).read_text().splitlines()
    assert csv[0] == "row,col,re,im"
    assert len(csv) - 1 == np.count_nonzero(op.matrix)
