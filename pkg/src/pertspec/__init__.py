"""Numerical laboratory for the spectrum of ``hD_x + g(x)`` on the circle under
small random Gaussian perturbations."""

__version__ = "0.1.0"

from .symbol import (  # noqa: E402
    SpectralWindow,
    SymbolFunction,
    TurningPoints,
    action_S,
    find_turning_points,
    k_weight,
    phi_leading,
    sigma_density,
    symplectic_volume,
)

__all__ = [
    "SpectralWindow",
    "SymbolFunction",
    "TurningPoints",
    "action_S",
    "find_turning_points",
    "k_weight",
    "phi_leading",
    "sigma_density",
    "symplectic_volume",
    "__version__",
]
