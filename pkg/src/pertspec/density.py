"""Leading-order one- and two-point eigenvalue densities.

With ``K = c_norm * sigma(mid) |z-w|^2 / (4h)`` the two-point density is

    D(z, w) = Lambda / ((2 pi h)^2 (1 - exp(-2K))),
    Lambda  = s_z s_w + s_m^2 exp(-2K) + s_m^2 (2K^2 coth K - 4K) / (e^K sinh K),

where ``s_z = sigma(z)``, ``s_w = sigma(w)`` and ``s_m = sigma((z+w)/2)``.
All error factors are dropped. Near the diagonal the expression is a
difference of O(1) terms of size O(K), so it is evaluated as

    (2 pi h)^2 D = (s_z s_w - s_m^2) / (1 - exp(-2K)) + s_m^2 f(K)

with ``f`` switched to its Taylor series for small ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import OutOfBand, PairCoincident
from .symbol import PAIR_SEPARATION_FRACTION, SymbolFunction, k_weight, sigma_density

# odd Taylor coefficients of f(K) = K - 2K^3/9 + 2K^5/45 - ...
_F_SERIES = (
    Fraction(1),
    Fraction(-2, 9),
    Fraction(2, 45),
    Fraction(-4, 525),
    Fraction(2, 1701),
    Fraction(-2764, 16372125),
    Fraction(4, 173745),
    Fraction(-28936, 9577693125),
    Fraction(87734, 227949096375),
    Fraction(-698444, 14584090145625),
    Fraction(310732, 53153584745625),
    Fraction(-1890912728, 2692260959516753625),
)
F_SERIES_COEFFS = np.array([float(c) for c in _F_SERIES])
SERIES_SWITCH = 0.1


def _f_closed(K: np.ndarray) -> np.ndarray:
    em = np.exp(-2.0 * K)
    one_minus = -np.expm1(-2.0 * K)
    # 1 / (e^K sinh K) = 2 e^{-2K} / (1 - e^{-2K})
    cross = (2.0 * K * K / np.tanh(K) - 4.0 * K) * 2.0 * em / one_minus
    return (1.0 + em + cross) / one_minus


def _f_series(K: np.ndarray) -> np.ndarray:
    K2 = K * K
    acc = np.zeros_like(K)
    for c in F_SERIES_COEFFS[::-1]:
        acc = acc * K2 + c
    return K * acc


def pair_kernel(K) -> np.ndarray:
    """``f(K) = Lambda / (sigma^2 (1 - exp(-2K)))`` for constant sigma.

    Equals the pair correlation when sigma does not vary: ``f ~ K`` at 0 and
    ``f -> 1`` as ``K -> infinity``.
    """
    K = np.asarray(K, dtype=float)
    if np.any(K < 0):
        raise ValueError("K must be non-negative")
    out = np.empty_like(K)
    small = K < SERIES_SWITCH
    out[small] = _f_series(K[small])
    out[~small] = _f_closed(K[~small])
    return out if out.ndim else float(out)


def lambda_factor(K, s_z, s_w, s_m):
    """``Lambda`` of the two-point density."""
    K = np.asarray(K, dtype=float)
    return (s_z * s_w - s_m**2) + s_m**2 * np.asarray(pair_kernel(K)) * -np.expm1(-2.0 * K)


@dataclass(frozen=True)
class DensityModel:
    g: SymbolFunction
    h: float
    delta: float = 0.0
    c_norm: float = 1.0
    max_separation: float = PAIR_SEPARATION_FRACTION

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.c_norm <= 0:
            raise ValueError(f"c_norm must be positive, got {self.c_norm}")


def one_point_density(z: complex, model: DensityModel) -> float:
    """``sigma(z) / (2 pi h)``."""
    return sigma_density(model.g, z) / (2.0 * np.pi * model.h)


def _pair_parts(z, w, model: DensityModel):
    z, w = complex(z), complex(w)
    if z == w:
        raise PairCoincident(f"two-point density undefined on the diagonal z = w = {z}")
    K = k_weight(model.g, z, w, model.h, model.c_norm, model.max_separation)
    if K == 0.0:
        raise PairCoincident(f"|z - w| = {abs(z - w):.3g} too small to resolve K > 0")
    s_z = sigma_density(model.g, z)
    s_w = sigma_density(model.g, w)
    s_m = sigma_density(model.g, 0.5 * (z + w))
    return K, s_z, s_w, s_m


def two_point_density(z: complex, w: complex, model: DensityModel) -> float:
    K, s_z, s_w, s_m = _pair_parts(z, w, model)
    scaled = (s_z * s_w - s_m**2) / -np.expm1(-2.0 * K) + s_m**2 * pair_kernel(K)
    return float(scaled / (2.0 * np.pi * model.h) ** 2)


def pair_correlation_theory(z: complex, w: complex, model: DensityModel) -> float:
    """``D(z, w) / (d(z) d(w))``."""
    return two_point_density(z, w, model) / (one_point_density(z, model) * one_point_density(w, model))


def short_range_density(z: complex, w: complex, model: DensityModel) -> float:
    """Small-separation form ``c sigma^3 |z-w|^2 / (16 pi^2 h^3)``.

    Obtained from ``f(K) ~ K``; ``sigma`` taken at the midpoint.
    """
    s_m = sigma_density(model.g, 0.5 * (complex(z) + complex(w)))
    r2 = abs(complex(z) - complex(w)) ** 2
    return float(model.c_norm * s_m**3 * r2 / (16.0 * np.pi**2 * model.h**3))


def long_range_density(z: complex, w: complex, model: DensityModel) -> float:
    """Decoupled form ``sigma(z) sigma(w) / (2 pi h)^2``."""
    return float(
        sigma_density(model.g, z) * sigma_density(model.g, w) / (2.0 * np.pi * model.h) ** 2
    )


def conditional_density(z: complex, w0: complex, model: DensityModel) -> float:
    """Density at ``z`` of the other eigenvalues given one at ``w0``."""
    d0 = one_point_density(w0, model)
    if not d0 > 0:
        raise OutOfBand(f"one-point density at w0 = {w0} is not positive")
    return two_point_density(z, w0, model) / d0


def conditional_short_range(z: complex, w0: complex, model: DensityModel) -> float:
    """``c sigma^2 |z - w0|^2 / (8 pi h^2)``."""
    s_m = sigma_density(model.g, 0.5 * (complex(z) + complex(w0)))
    return float(model.c_norm * s_m**2 * abs(complex(z) - complex(w0)) ** 2 / (8.0 * np.pi * model.h**2))


def regime_classify(z: complex, w: complex, h: float) -> str:
    """``short_range`` below ``sqrt(h)``, ``long_range`` above ``sqrt(h ln 1/h)``."""
    r = abs(complex(z) - complex(w))
    if r < np.sqrt(h):
        return "short_range"
    if r > np.sqrt(h * np.log(1.0 / h)):
        return "long_range"
    return "crossover"


def theory_curves(model: DensityModel, w0: complex, r: np.ndarray, direction: complex = 1.0) -> dict:
    """Sampled curves along ``z = w0 + r * direction``.

    Returns arrays ``r, D, D_short, D_long, conditional`` (``D`` is the
    two-point density of the pair ``(z, w0)``).
    """
    r = np.asarray(r, dtype=float)
    direction = complex(direction) / abs(complex(direction))
    D, Ds, Dl, cond = (np.empty_like(r) for _ in range(4))
    for i, ri in enumerate(r):
        z = complex(w0) + ri * direction
        D[i] = two_point_density(z, w0, model)
        Ds[i] = short_range_density(z, w0, model)
        Dl[i] = long_range_density(z, w0, model)
        cond[i] = D[i] / one_point_density(w0, model)
    return {"r": r, "D": D, "D_short": Ds, "D_long": Dl, "conditional": cond}
