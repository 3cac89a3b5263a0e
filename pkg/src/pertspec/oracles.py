"""Independent reference computations used by the acceptance harness.

Each routine reaches its answer by a different route than the production
code it checks: Monte Carlo in phase space instead of quadrature of sigma,
Ryser's inclusion-exclusion formula instead of a sum over permutations,
closed-form antiderivatives instead of adaptive quadrature.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate

from .symbol import TWO_PI, SpectralWindow, SymbolFunction, find_turning_points


def mc_phase_volume(
    g: SymbolFunction, window: SpectralWindow, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo measure of ``{(x, xi): xi + g(x) in window}``.

    Samples ``(x, xi)`` uniformly in ``[0, 2pi) x [xi_lo, xi_hi]`` where the xi
    range covers every point that can land in the window.
    """
    xs = np.linspace(0, TWO_PI, 4097)
    re_g = np.real(g(xs))
    xi_lo = window.re_lo - re_g.max() - 0.1
    xi_hi = window.re_hi - re_g.min() + 0.1
    box = TWO_PI * (xi_hi - xi_lo)
    x = rng.uniform(0, TWO_PI, n)
    xi = rng.uniform(xi_lo, xi_hi, n)
    hit = window.contains(xi + g(x))
    p = hit.mean()
    return float(box * p), float(box * np.sqrt(p * (1 - p) / n))


def pushforward_sigma(g: SymbolFunction, t: float, dt: float = 1e-3, n: int = 2_000_000) -> float:
    """Density of the pushforward of ``dxi ^ dx`` at ``Im z = t`` by histogramming.

    On a strip of unit real width the measure of ``{Im g(x) in [t - dt/2, t + dt/2]}``
    times the unit xi-length, divided by ``dt``.
    """
    x = (np.arange(n) + 0.5) * (TWO_PI / n)
    img = g.im(x)
    inside = np.abs(img - t) <= 0.5 * dt
    return float(np.count_nonzero(inside) * (TWO_PI / n) / dt)


def antiderivative(g: SymbolFunction, x):
    """Exact ``G`` with ``G' = g``: ``c_0 x + sum_{m != 0} c_m e^{imx} / (im)``."""
    x = np.asarray(x, dtype=float)
    out = g.coeff(0) * x + 0j
    for m, c in zip(g.modes, g.coeffs):
        if m != 0:
            out = out + c * np.exp(1j * m * x) / (1j * m)
    return out


def im_phase_exact(g: SymbolFunction, t: float, lo, hi):
    """``Im int_lo^hi (z - g)`` by the closed-form antiderivative."""
    return t * (np.asarray(hi) - lo) - np.imag(antiderivative(g, hi) - antiderivative(g, lo))


def action_exact(g: SymbolFunction, t: float) -> float:
    tp = find_turning_points(g, t)
    b1 = im_phase_exact(g, t, tp.x_plus, tp.x_minus)
    b2 = im_phase_exact(g, t, tp.x_plus, tp.x_minus - TWO_PI)
    return float(min(b1, b2))


def ryser_permanent(M) -> complex:
    """Permanent by Ryser's formula ``(-1)^n sum_S (-1)^|S| prod_i sum_{j in S} a_ij``."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    total = 0j
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            total += (-1) ** k * np.prod(M[:, list(S)].sum(axis=1))
    return complex((-1) ** n * total)


def poisson_points(intensity: float, window: SpectralWindow, trials: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Homogeneous Poisson samples in ``window``, one array per trial."""
    out = []
    for _ in range(trials):
        n = rng.poisson(intensity * window.area)
        re = rng.uniform(window.re_lo, window.re_hi, n)
        im = rng.uniform(window.im_lo, window.im_hi, n)
        out.append(re + 1j * im)
    return out


def _smooth_step(s):
    # C-infinity step: 0 for s <= 0, 1 for s >= 1
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def plateau_cutoff(x, lo: float, hi: float, eta: float):
    """Smooth cutoff, 1 on ``[lo + eta, hi - eta]``, 0 outside ``(lo, hi)``."""
    x = np.asarray(x, dtype=float)
    return _smooth_step((x - lo) / eta) * _smooth_step((hi - x) / eta)


def wkb_log_norm(
    g: SymbolFunction,
    z: complex,
    h: float,
    branch: str = "plus",
    x0: float | None = None,
    eta_fraction: float = 0.15,
) -> float:
    """``ln int chi |u|^2 dx`` for the cut-off WKB quasimode at ``z``.

    ``|u(x)|^2 = exp(-(2/h) Im int_{x0}^x (z - g))`` on the arc of the
    ``x_plus`` turning point (branch plus), or with the opposite sign on the arc
    of ``x_minus`` (branch minus, the adjoint problem).
    """
    t = float(np.imag(z))
    tp = find_turning_points(g, t)
    if branch == "plus":
        lo, hi, xt, sgn = g.b - TWO_PI, g.a, tp.x_plus, -1.0
    elif branch == "minus":
        lo, hi, xt, sgn = g.a, g.b, tp.x_minus, 1.0
    else:
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")
    x0 = xt if x0 is None else float(x0)
    eta = eta_fraction * (hi - lo)

    def expo(x):
        return sgn * (2.0 / h) * im_phase_exact(g, t, x0, x)

    peak = float(expo(xt))
    val, _ = integrate.quad(
        lambda x: plateau_cutoff(x, lo, hi, eta) * np.exp(expo(x) - peak),
        lo, hi, points=[xt], epsabs=0.0, epsrel=1e-13, limit=500,
    )
    return float(peak + np.log(val))
