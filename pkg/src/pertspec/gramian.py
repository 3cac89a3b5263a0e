"""Quasimodes from singular triplets and the Gramian of their coupling vectors.

For a spectral parameter ``z`` the bottom singular triplet of ``P - z``
gives a right vector ``e0`` (quasimode of ``P``) and a left vector ``f0``
(quasimode of ``P^*``). Their restrictions to the perturbation block define
the rank one coupling vector

    X(z)[j, k] = e0(z; k) * conj(f0(z; j)),       |j|, |k| <= L,

which is kept factored; inner products reduce to products of short
vector inner products.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .backend import SingularTriplet, smallest_singular_triplet
from .errors import MixedRun, PairTooClose, PairTooFar, SingularA, StepTooCoarse, TooLarge
from .operators import PerturbedOperator
from .symbol import PAIR_SEPARATION_FRACTION, SymbolFunction, k_weight, sigma_density

DET_A_FLOOR = 1e-12
STEP_HALVING_TOL = 0.05


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """``(a | b) = sum a * conj(b)`` (linear in the first slot)."""
    return complex(np.vdot(b, a))


# -- gauge ------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugeReference:
    """Frozen reference vectors that fix the phases of e0 and f0."""

    z_ref: complex
    ref_e: np.ndarray
    ref_f: np.ndarray
    fingerprint: str


def _phase_to_reference(v: np.ndarray, ref: np.ndarray) -> np.ndarray:
    p = inner(v, ref)
    if p == 0:
        raise StepTooCoarse("quasimode orthogonal to gauge reference; move the reference closer")
    return v * (np.conj(p) / abs(p))


def make_reference(op: PerturbedOperator, z_ref: complex) -> GaugeReference:
    tr = smallest_singular_triplet(op.matrix, z_ref)
    sl = op.truncation.block_slice()
    e = tr.e0[sl] / np.linalg.norm(tr.e0[sl])
    f = tr.f0[sl] / np.linalg.norm(tr.f0[sl])
    return GaugeReference(complex(z_ref), e, f, op.fingerprint)


@dataclass(frozen=True)
class QuasimodePair:
    """Gauge-fixed block restrictions of the bottom singular vectors.

    ``e0`` and ``f0`` are restricted to the block ``|k| <= L`` and
    normalized there, so the coupling vector has unit norm; ``block_mass``
    records the squared norms before normalization.
    """

    z: complex
    t0: float
    e0: np.ndarray
    f0: np.ndarray
    gauge_phase: tuple[complex, complex]
    block_mass: tuple[float, float]
    fingerprint: str

    def x_vector(self) -> "XVector":
        return XVector(self.e0, self.f0)


def fix_gauge(e: np.ndarray, f: np.ndarray, ref: GaugeReference) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Rotate ``e`` and ``f`` so their inner products with the reference are real positive."""
    ge = _phase_to_reference(e, ref.ref_e)
    gf = _phase_to_reference(f, ref.ref_f)
    pe = ge[np.argmax(np.abs(e))] / e[np.argmax(np.abs(e))]
    pf = gf[np.argmax(np.abs(f))] / f[np.argmax(np.abs(f))]
    return ge, gf, (complex(pe), complex(pf))


def quasimode_from_triplet(
    triplet: SingularTriplet, op: PerturbedOperator, reference: GaugeReference | None = None
) -> QuasimodePair:
    sl = op.truncation.block_slice()
    e, f = triplet.e0[sl], triplet.f0[sl]
    me, mf = float(np.vdot(e, e).real), float(np.vdot(f, f).real)
    e = e / np.sqrt(me)
    f = f / np.sqrt(mf)
    if reference is None:
        reference = GaugeReference(triplet.z, e, f, op.fingerprint)
    elif reference.fingerprint != op.fingerprint:
        raise MixedRun("gauge reference was built from a different matrix")
    e, f, phases = fix_gauge(e, f, reference)
    return QuasimodePair(
        z=triplet.z, t0=triplet.t0, e0=e, f0=f, gauge_phase=phases,
        block_mass=(me, mf), fingerprint=op.fingerprint,
    )


def quasimode(op: PerturbedOperator, z: complex, reference: GaugeReference | None = None) -> QuasimodePair:
    """Gauge-fixed quasimode pair at ``z``.

    Without a reference the pair is its own reference, i.e. the gauge is
    only meaningful when comparing with other quasimodes built against the
    same ``GaugeReference``.
    """
    return quasimode_from_triplet(smallest_singular_triplet(op.matrix, z), op, reference)


# -- coupling vectors -------------------------------------------------------------


class XVector:
    """Sum of rank one terms ``a (x) conj(b)``, entry ``[j, k] = a[k] conj(b[j])``."""

    __slots__ = ("terms",)

    def __init__(self, e=None, f=None, terms=None):
        self.terms = tuple(terms) if terms is not None else ((e, f),)

    def flatten(self) -> np.ndarray:
        return sum(np.outer(np.conj(b), a) for a, b in self.terms)

    def norm(self) -> float:
        return float(np.sqrt(max(x_inner_terms(self, self).real, 0.0)))

    def __add__(self, other: "XVector") -> "XVector":
        return XVector(terms=self.terms + other.terms)


def x_inner_terms(u: XVector, v: XVector) -> complex:
    """``(u | v)`` using ``(a1 (x) conj b1 | a2 (x) conj b2) = (a1|a2) (b2|b1)``."""
    return complex(sum(inner(a1, a2) * inner(b2, b1) for a1, b1 in u.terms for a2, b2 in v.terms))


def x_inner(qm_z: QuasimodePair, qm_w: QuasimodePair) -> complex:
    """``(X(z) | X(w)) = (e0(z) | e0(w)) (f0(w) | f0(z))``."""
    if qm_z.fingerprint != qm_w.fingerprint:
        raise MixedRun("quasimodes come from different matrices")
    return inner(qm_z.e0, qm_w.e0) * inner(qm_w.f0, qm_z.f0)


# -- derivatives ------------------------------------------------------------------


def wirtinger_difference(fun: Callable[[complex], np.ndarray], z: complex, step: float):
    """Central differences of a vector function of ``z``.

    Returns ``(d/dz F, d/dzbar F)`` with ``d/dz = (d/dRe - i d/dIm)/2``.
    """
    d_re = (fun(z + step) - fun(z - step)) / (2 * step)
    d_im = (fun(z + 1j * step) - fun(z - 1j * step)) / (2 * step)
    return 0.5 * (d_re - 1j * d_im), 0.5 * (d_re + 1j * d_im)


def richardson_wirtinger(fun, z: complex, step: float, tol: float = STEP_HALVING_TOL):
    """Wirtinger derivatives at steps ``s`` and ``s/2``, combined by Richardson.

    Raises ``StepTooCoarse`` if halving the step changes either derivative
    by more than ``tol`` relative.
    """
    dz1, dzb1 = wirtinger_difference(fun, z, step)
    dz2, dzb2 = wirtinger_difference(fun, z, step / 2)
    change = 0.0
    for a, b in ((dz1, dz2), (dzb1, dzb2)):
        scale = np.linalg.norm(b)
        diff = np.linalg.norm(a - b)
        if scale > 0:
            change = max(change, diff / scale)
        elif diff > 0:
            change = np.inf
    if change > tol:
        raise StepTooCoarse(f"halving step {step:g} changed derivative by {change:.2%}")
    return (4 * dz2 - dz1) / 3, (4 * dzb2 - dzb1) / 3, change


@dataclass(frozen=True)
class XDerivative:
    z: complex
    step: float
    de: np.ndarray  # d/dz e0
    dbar_f: np.ndarray  # d/dzbar f0
    halving_change: float
    base: QuasimodePair

    def as_x(self) -> XVector:
        """``d/dz X = (d e) (x) conj f + e (x) conj(dbar f)``."""
        return XVector(terms=((self.de, self.base.f0), (self.base.e0, self.dbar_f)))


def default_step(h: float) -> float:
    return max(1e-4, h * h / 10.0)


def x_derivative(
    op: PerturbedOperator,
    z: complex,
    step: float | None = None,
    reference: GaugeReference | None = None,
) -> XDerivative:
    """``d/dz`` of the gauge-fixed pair ``(e0, f0)`` by Richardson-extrapolated differences."""
    step = default_step(op.h) if step is None else float(step)
    if reference is None:
        reference = make_reference(op, z)
    base = quasimode(op, z, reference)

    def stacked(s):
        q = quasimode(op, s, reference)
        return np.concatenate([q.e0, q.f0])

    dz, dzb, change = richardson_wirtinger(stacked, z, step)
    n = base.e0.size
    return XDerivative(z=complex(z), step=step, de=dz[:n], dbar_f=dzb[n:], halving_change=change, base=base)


# -- permanent --------------------------------------------------------------------


def permanent(M) -> complex:
    """Permanent by direct summation over the symmetric group (n <= 4)."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n > 4:
        raise TooLarge(f"permanent supports n <= 4, got n = {n}")
    rows = range(n)
    return complex(sum(np.prod([M[i, p[i]] for i in rows]) for p in itertools.permutations(rows)))


# -- Gramian ----------------------------------------------------------------------


@dataclass(frozen=True)
class GramianBundle:
    z: complex
    w: complex
    h: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray
    Gamma: np.ndarray
    detA: float
    detG: float
    permGamma: float
    trGamma: float
    absXX: float
    K_pred: float
    sigma_mid: float
    step: float

    @property
    def density_estimate(self) -> float:
        """``perm Gamma / (pi^2 det A)``, the Gramian form of the two-point density."""
        return self.permGamma / (np.pi**2 * self.detA)

    def to_row(self) -> dict:
        return {
            "z_re": self.z.real, "z_im": self.z.imag, "w_re": self.w.real, "w_im": self.w.imag,
            "h": self.h, "detA": self.detA, "detG": self.detG, "permGamma": self.permGamma,
            "trGamma": self.trGamma, "absXX": self.absXX, "K_pred": self.K_pred,
        }


def gram_matrix(vectors) -> np.ndarray:
    """``G[a, b] = (v_a | v_b)``."""
    n = len(vectors)
    G = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(a, n):
            G[a, b] = x_inner_terms(vectors[a], vectors[b])
            G[b, a] = np.conj(G[a, b])
    return G


def gramian(
    op: PerturbedOperator,
    z: complex,
    w: complex,
    g: SymbolFunction,
    step: float | None = None,
    c_norm: float = 1.0,
    reference: GaugeReference | None = None,
    max_separation: float = PAIR_SEPARATION_FRACTION,
) -> GramianBundle:
    """Gramian of ``(X(z), X(w), dX(z), dX(w))`` and its Schur complement.

    The pair must satisfy ``0.5 h^(3/5) <= |z - w| <= max_separation *
    band_width``. The gauge reference defaults to the quasimode at the
    midpoint.
    """
    h = op.h
    z, w = complex(z), complex(w)
    r = abs(z - w)
    if r < 0.5 * h**0.6:
        raise PairTooClose(f"|z - w| = {r:.4g} below guard 0.5 h^(3/5) = {0.5 * h**0.6:.4g}")
    if r > max_separation * g.band_width:
        raise PairTooFar(f"|z - w| = {r:.4g} above {max_separation:g} * band width")
    step = default_step(h) if step is None else float(step)
    if reference is None:
        reference = make_reference(op, 0.5 * (z + w))
    dz = x_derivative(op, z, step, reference)
    dw = x_derivative(op, w, step, reference)
    vecs = [dz.base.x_vector(), dw.base.x_vector(), dz.as_x(), dw.as_x()]
    G = gram_matrix(vecs)
    A, B, C = G[:2, :2], G[:2, 2:], G[2:, 2:]
    detA = float(np.linalg.det(A).real)
    if detA <= DET_A_FLOOR:
        raise SingularA(f"det A = {detA:.3g} at |z - w| = {r:.4g}")
    Gamma = C - B.conj().T @ np.linalg.solve(A, B)
    Gamma = 0.5 * (Gamma + Gamma.conj().T)
    xx = x_inner(dz.base, dw.base)
    return GramianBundle(
        z=z, w=w, h=h, A=A, B=B, C=C, G=G, Gamma=Gamma,
        detA=detA,
        detG=float(np.linalg.det(G).real),
        permGamma=float(permanent(Gamma).real),
        trGamma=float(np.trace(Gamma).real),
        absXX=abs(xx),
        K_pred=k_weight(g, z, w, h, c_norm, max_separation),
        sigma_mid=sigma_density(g, 0.5 * (z + w)),
        step=step,
    )


# -- pair sweeps and the overlap fit ---------------------------------------------


def sample_pairs(
    n: int,
    h: float,
    rng: np.random.Generator,
    center: complex = 0.013 + 0.0j,
    spread: float = 0.1,
    r_range: tuple[float, float] = (0.5, 3.0),
) -> list[tuple[complex, complex]]:
    """Random pairs with midpoint in a square of half side ``spread`` and
    ``|z - w| / sqrt(h)`` uniform in ``r_range``."""
    out = []
    for _ in range(n):
        mid = center + complex(*rng.uniform(-spread, spread, 2))
        r = np.sqrt(h) * rng.uniform(*r_range)
        d = 0.5 * r * np.exp(1j * rng.uniform(0, 2 * np.pi))
        out.append((mid + d, mid - d))
    return out


@dataclass(frozen=True)
class OverlapFit:
    h: float
    n_pairs: int
    slope: float  # fitted c_norm
    intercept: float
    r_squared: float
    stderr: float

    def as_dict(self) -> dict:
        return asdict(self)


def overlap_rows(
    op: PerturbedOperator,
    g: SymbolFunction,
    pairs,
    max_separation: float = PAIR_SEPARATION_FRACTION,
) -> list[dict]:
    """``-ln |(X(z)|X(w))|`` against ``sigma(mid) |z-w|^2 / (4h)`` for each pair."""
    rows = []
    for z, w in pairs:
        ref = make_reference(op, 0.5 * (z + w))
        xx = x_inner(quasimode(op, z, ref), quasimode(op, w, ref))
        rows.append({
            "z_re": z.real, "z_im": z.imag, "w_re": w.real, "w_im": w.imag, "h": op.h,
            "absXX": abs(xx), "neg_log_absXX": -np.log(abs(xx)),
            "K_unit": k_weight(g, z, w, op.h, 1.0, max_separation),
        })
    return rows


def fit_overlap(rows: list[dict]) -> OverlapFit:
    x = np.array([r["K_unit"] for r in rows])
    y = np.array([r["neg_log_absXX"] for r in rows])
    res = stats.linregress(x, y)
    return OverlapFit(
        h=float(rows[0]["h"]), n_pairs=len(rows), slope=float(res.slope),
        intercept=float(res.intercept), r_squared=float(res.rvalue**2), stderr=float(res.stderr),
    )
