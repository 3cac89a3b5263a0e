"""Geometry of the principal symbol ``p(x, xi) = xi + g(x)`` on the circle.

Everything here depends on the coefficient function ``g`` alone: the band
``Sigma = {min Im g <= Im z <= max Im g}``, the turning points, the density
``sigma`` of the pushforward of ``dxi ^ dx``, the action ``S``, the leading
phase functions and the overlap weight ``K``.

All quantities depend on ``z`` only through ``Im z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import HypothesisViolation, MultiplicityViolation, OutOfBand, PairTooFar

TWO_PI = 2.0 * np.pi
H1_GRID = 4096
ROOT_TOL = 1e-12
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class SymbolFunction:
    """Finite Fourier series ``g(x) = sum_m c_m exp(i m x)``.

    Construct with :meth:`from_coeffs` or :meth:`from_triples`; the critical
    points of ``Im g`` and the band edges are computed once at construction
    and the single-well condition is checked on a grid of ``H1_GRID`` points.
    """

    modes: np.ndarray
    coeffs: np.ndarray
    a: float = field(default=np.nan)  # argmin Im g, in [0, 2pi)
    b: float = field(default=np.nan)  # argmax Im g, lifted into (a, a + 2pi)
    band_min: float = field(default=np.nan)
    band_max: float = field(default=np.nan)

    # construction ---------------------------------------------------------

    @classmethod
    def from_coeffs(cls, coeffs: Mapping[int, complex]) -> "SymbolFunction":
        items = sorted((int(m), complex(c)) for m, c in coeffs.items() if c != 0)
        if not items:
            raise MultiplicityViolation("symbol is identically zero, Im g has no critical points")
        modes = np.array([m for m, _ in items], dtype=int)
        vals = np.array([c for _, c in items], dtype=complex)
        proto = cls(modes=modes, coeffs=vals)
        a, b = _critical_points(proto)
        return cls(
            modes=modes,
            coeffs=vals,
            a=a,
            b=b,
            band_min=float(proto.im(a)),
            band_max=float(proto.im(b)),
        )

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]]) -> "SymbolFunction":
        """Build from ``(mode, re, im)`` triples; repeated modes are summed."""
        acc: dict[int, complex] = {}
        for m, re, im in triples:
            if float(m) != int(m):
                raise HypothesisViolation("H.1", f"Fourier mode {m!r} is not an integer")
            acc[int(m)] = acc.get(int(m), 0j) + complex(float(re), float(im))
        return cls.from_coeffs(acc)

    @classmethod
    def default(cls) -> "SymbolFunction":
        """The model symbol ``g(x) = exp(ix)``."""
        return cls.from_coeffs({1: 1.0})

    # evaluation -----------------------------------------------------------

    @property
    def band_limit(self) -> int:
        """Largest |mode| present, ``M_g``."""
        return int(np.max(np.abs(self.modes)))

    @property
    def mean_value(self) -> complex:
        return self.coeff(0)

    @property
    def band_width(self) -> float:
        return self.band_max - self.band_min

    def coeff(self, m: int) -> complex:
        hit = np.nonzero(self.modes == m)[0]
        return complex(self.coeffs[hit[0]]) if hit.size else 0j

    def to_triples(self) -> list[tuple[int, float, float]]:
        return [(int(m), float(c.real), float(c.imag)) for m, c in zip(self.modes, self.coeffs)]

    def __call__(self, x, order: int = 0):
        """``d^order g / dx^order`` evaluated at ``x`` (array-like)."""
        x = np.asarray(x, dtype=float)
        w = self.coeffs * (1j * self.modes) ** order
        return np.exp(1j * np.multiply.outer(x, self.modes)) @ w

    def im(self, x, order: int = 0):
        return np.imag(self(x, order))

    def check_h1(self, n: int = H1_GRID) -> None:
        """Raise unless ``Im g'`` has exactly two sign changes on ``[0, 2pi)``."""
        _critical_points(self, n)

    def __hash__(self):
        return hash(tuple(self.to_triples()))

    def __eq__(self, other):
        return isinstance(other, SymbolFunction) and self.to_triples() == other.to_triples()


def _periodic_sign_changes(vals: np.ndarray) -> np.ndarray:
    """Indices i with a sign change between vals[i] and vals[i+1 mod n]."""
    s = np.sign(vals)
    # treat exact zeros as belonging to the following sample's sign
    for i in np.nonzero(s == 0)[0][::-1]:
        s[i] = s[(i + 1) % len(s)] or 1.0
    return np.nonzero(s != np.roll(s, -1))[0]


def _bracket_root(fun, lo: float, hi: float) -> float:
    r = optimize.brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(r)


def _reject_touching_zeros(g: SymbolFunction, x: np.ndarray, d: np.ndarray, crossings: np.ndarray,
                           rtol: float = 1e-8) -> None:
    """Zeros of ``Im g'`` without a sign change are extra (degenerate) critical points."""
    n = len(d)
    a = np.abs(d)
    scale = a.max()
    near = set()
    for i in crossings:
        near.update(((i - 1) % n, i, (i + 1) % n, (i + 2) % n))
    cand = np.nonzero((a <= np.roll(a, 1)) & (a <= np.roll(a, -1)))[0]
    step = TWO_PI / n
    for i in cand:
        if i in near:
            continue
        res = optimize.minimize_scalar(lambda s: abs(g.im(s, 1)), bounds=(x[i] - step, x[i] + step),
                                       method="bounded", options={"xatol": 1e-13})
        if min(res.fun, a[i]) <= rtol * scale:
            raise MultiplicityViolation(
                f"Im g' vanishes without changing sign near x = {float(x[i]):.6g}; "
                "Im g must have exactly two non-degenerate critical points"
            )


def _critical_points(g: SymbolFunction, n: int = H1_GRID) -> tuple[float, float]:
    x = np.arange(n) * (TWO_PI / n)
    d = g.im(x, 1)
    idx = _periodic_sign_changes(d)
    if len(idx) != 2:
        raise MultiplicityViolation(
            f"Im g' has {len(idx)} sign changes on a {n}-point grid, expected exactly 2"
        )
    _reject_touching_zeros(g, x, d, idx)
    crit_min = crit_max = None
    for i in idx:
        lo = x[i]
        hi = lo + TWO_PI / n
        r = _bracket_root(lambda s: g.im(s, 1), lo, hi) % TWO_PI
        if d[i] < 0:
            crit_min = r
        else:
            crit_max = r
    if crit_min is None or crit_max is None:
        raise MultiplicityViolation("Im g' sign changes do not alternate")
    a = crit_min
    b = crit_max if crit_max > a else crit_max + TWO_PI
    if not g.im(a) < g.im(b):
        raise MultiplicityViolation("degenerate band, min Im g equals max Im g")
    return a, b


# -- turning points -----------------------------------------------------------


@dataclass(frozen=True)
class TurningPoints:
    """Solutions of ``Im g(x) = t``; ``x_plus`` has ``Im g' < 0``, ``x_minus`` has ``Im g' > 0``.

    Both lie in ``[b - 2pi, b)`` and satisfy ``x_minus - 2pi < x_plus < x_minus``.
    """

    x_plus: float
    x_minus: float
    t: float


def _check_in_band(g: SymbolFunction, t: float) -> None:
    if not (g.band_min < t < g.band_max):
        raise OutOfBand(
            f"Im z = {t!r} is outside the open band ({g.band_min!r}, {g.band_max!r})"
        )


def _newton_polish(g: SymbolFunction, x: float, t: float) -> float:
    for _ in range(3):
        f = g.im(x) - t
        if abs(f) <= 1e-16:
            break
        d = g.im(x, 1)
        if d == 0:
            break
        x = x - f / d
    return float(x)


def find_turning_points(g: SymbolFunction, t: float) -> TurningPoints:
    """Turning points at height ``t`` strictly inside the band.

    The level set is first checked on a uniform grid (more than two
    crossings means the single-well hypothesis fails), then each root is
    bracketed on its monotone arc, bisected and Newton polished.
    """
    t = float(t)
    _check_in_band(g, t)
    x = np.arange(H1_GRID) * (TWO_PI / H1_GRID)
    if len(_periodic_sign_changes(g.im(x) - t)) > 2:
        raise MultiplicityViolation(f"level set Im g = {t!r} has more than two points")
    f = lambda s: g.im(s) - t  # noqa: E731
    x_minus = _newton_polish(g, _bracket_root(f, g.a, g.b), t)
    x_plus = _newton_polish(g, _bracket_root(f, g.b - TWO_PI, g.a), t)
    return TurningPoints(x_plus=x_plus, x_minus=x_minus, t=t)


# -- densities and actions ------------------------------------------------------


def sigma_density(g: SymbolFunction, z: complex) -> float:
    """Lebesgue density of the pushforward of ``dxi ^ dx`` under ``p``.

    ``sigma(z) = 1/Im g'(x_minus) - 1/Im g'(x_plus)``.
    """
    tp = find_turning_points(g, np.imag(z))
    return float(1.0 / g.im(tp.x_minus, 1) - 1.0 / g.im(tp.x_plus, 1))


def _im_phase_integral(g: SymbolFunction, t: float, lo: float, hi: float) -> float:
    """``Im int_lo^hi (z - g(y)) dy`` for any ``z`` with ``Im z = t``."""
    if lo == hi:
        return 0.0
    val, _ = integrate.quad(
        lambda y: t - g.im(y), lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200
    )
    return float(val)


def action_branches(g: SymbolFunction, z: complex) -> tuple[float, float]:
    """The two branch integrals whose minimum is the action."""
    t = float(np.imag(z))
    tp = find_turning_points(g, t)
    return (
        _im_phase_integral(g, t, tp.x_plus, tp.x_minus),
        _im_phase_integral(g, t, tp.x_plus, tp.x_minus - TWO_PI),
    )


def action_S(g: SymbolFunction, z: complex) -> float:
    """Tunnelling action ``S(z)``, the smaller of the two branch integrals."""
    return float(min(action_branches(g, z)))


PAIR_SEPARATION_FRACTION = 0.25


def k_weight(
    g: SymbolFunction,
    z: complex,
    w: complex,
    h: float,
    c_norm: float = 1.0,
    max_separation: float = PAIR_SEPARATION_FRACTION,
) -> float:
    """Leading overlap weight ``K = c_norm * sigma((z+w)/2) |z-w|^2 / (4h)``.

    Pairs farther apart than ``max_separation`` times the band width are
    rejected: the weight is a local (short-separation) approximation.
    """
    r = abs(complex(z) - complex(w))
    cap = max_separation * g.band_width
    if r > cap:
        raise PairTooFar(f"|z - w| = {r:.4g} exceeds {max_separation:g} * band width = {cap:.4g}")
    # symmetric in (z, w): |z-w| and the midpoint are
    mid = 0.5 * (complex(z) + complex(w))
    return float(c_norm * sigma_density(g, mid) * r * r / (4.0 * h))


def phi_leading(
    g: SymbolFunction,
    z: complex,
    h: float,
    x0: float | None = None,
    branch: str = "plus",
) -> float:
    """Leading term of the quasimode phase functions (``O(h^2)`` dropped).

    ``branch="plus"``: ``Im int_{x+}^{x0}(z-g) + (h/4) ln(pi h / (-Im g'(x+)))``.
    ``branch="minus"``: ``-Im int_{x-}^{x0}(z-g) + (h/4) ln(pi h / Im g'(x-))``.
    ``x0`` defaults to the turning point of the branch, where the action
    term vanishes.
    """
    t = float(np.imag(z))
    tp = find_turning_points(g, t)
    if branch == "plus":
        xp = tp.x_plus
        x0 = xp if x0 is None else float(x0)
        return _im_phase_integral(g, t, xp, x0) + 0.25 * h * np.log(np.pi * h / -g.im(xp, 1))
    if branch == "minus":
        xm = tp.x_minus
        x0 = xm if x0 is None else float(x0)
        return -_im_phase_integral(g, t, xm, x0) + 0.25 * h * np.log(np.pi * h / g.im(xm, 1))
    raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")


# -- windows --------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralWindow:
    """Closed rectangle ``[re_lo, re_hi] x [im_lo, im_hi]`` in the complex plane."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float
    margin: float = 0.1

    def __post_init__(self):
        if self.re_hi < self.re_lo or self.im_hi < self.im_lo:
            raise ValueError(f"empty window {self!r}")

    @property
    def area(self) -> float:
        return (self.re_hi - self.re_lo) * (self.im_hi - self.im_lo)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        return (
            (z.real >= self.re_lo)
            & (z.real <= self.re_hi)
            & (z.imag >= self.im_lo)
            & (z.imag <= self.im_hi)
        )

    def dilate(self, r: float) -> "SpectralWindow":
        return SpectralWindow(
            self.re_lo - r, self.re_hi + r, self.im_lo - r, self.im_hi + r, self.margin
        )

    def erode(self, r: float) -> "SpectralWindow":
        return self.dilate(-r)

    def validate(self, g: SymbolFunction) -> None:
        """Interior condition: window at distance >= ``margin`` from the band edges."""
        if not self.margin > 0:
            raise HypothesisViolation("H.2", f"window margin must be positive, got {self.margin!r}")
        if self.im_lo < g.band_min + self.margin or self.im_hi > g.band_max - self.margin:
            raise HypothesisViolation(
                "H.2",
                f"window Im range [{self.im_lo}, {self.im_hi}] is not at distance "
                f">= {self.margin} from the band edges {g.band_min:.6g}, {g.band_max:.6g}",
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.re_lo, self.re_hi, self.im_lo, self.im_hi)


def symplectic_volume(g: SymbolFunction, window: SpectralWindow) -> float:
    """Phase-space volume of ``p^{-1}(window)``, i.e. the integral of sigma over it.

    sigma depends on Im z only, so the area integral factorizes into the
    real width times a one dimensional quadrature in Im z.
    """
    window.validate(g)
    width = window.re_hi - window.re_lo
    if width == 0 or window.im_hi == window.im_lo:
        return 0.0
    val, _ = integrate.quad(
        lambda t: sigma_density(g, 1j * t),
        window.im_lo,
        window.im_hi,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=200,
    )
    return float(width * val)
