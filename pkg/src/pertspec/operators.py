"""Fourier-Galerkin matrices for ``hD_x + g(x)`` and its random perturbation.

In the basis ``e^{ikx}``, ``|k| <= M``, the unperturbed operator has entries
``P0[j, k] = h k delta_jk + c_{j-k}``; the perturbation ``Q`` carries i.i.d.
standard complex Gaussians ``alpha[j, k]`` on the block ``|j|, |k| <= L`` with
``L = floor(C1 / h)``, and the coupled matrix is ``P0 + delta * Q``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import DeltaWindowEmpty, HypothesisViolation, RejectedDraw, TruncationTooSmall
from .symbol import SpectralWindow, SymbolFunction, action_S

GUARD_MODES = 8
DEFAULT_C1 = 2.0
DEFAULT_C_BALL = 8.0
DEFAULT_KAPPA = 5.1
DEFAULT_H3_C = 1.0


def block_half_width(h: float, C1: float = DEFAULT_C1) -> int:
    """``floor(C1 / h)``, robust to representation error in ``C1 / h``."""
    return int(np.floor(C1 / h * (1.0 + 1e-12)))


@dataclass(frozen=True)
class FourierTruncation:
    """Retained modes ``k = -M..M``; row/column ``k + M``.

    ``block`` is the half width ``L`` of the perturbation block, or ``None``
    if no perturbation is planned.
    """

    M: int
    block: int | None = None

    def __post_init__(self):
        if self.M < 1:
            raise TruncationTooSmall(f"M must be positive, got {self.M}")
        if self.block is not None and not 1 <= self.block <= self.M:
            raise TruncationTooSmall(f"perturbation block L={self.block} does not fit in M={self.M}")

    @classmethod
    def for_h(
        cls, h: float, g: SymbolFunction, C1: float = DEFAULT_C1, guard: int = GUARD_MODES
    ) -> "FourierTruncation":
        L = block_half_width(h, C1)
        return cls(M=L + g.band_limit + guard, block=L)

    @property
    def dim(self) -> int:
        return 2 * self.M + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def index(self, k: int) -> int:
        if abs(k) > self.M:
            raise IndexError(f"mode {k} outside truncation M={self.M}")
        return int(k) + self.M

    def block_slice(self) -> slice:
        if self.block is None:
            raise TruncationTooSmall("truncation has no perturbation block")
        return slice(self.M - self.block, self.M + self.block + 1)


@dataclass(frozen=True)
class PerturbationDraw:
    alpha: np.ndarray  # (2L+1, 2L+1), alpha[j + L, k + L]
    seed: int
    norm: float
    radius: float
    accepted: bool

    @property
    def block(self) -> int:
        return (self.alpha.shape[0] - 1) // 2


@dataclass(frozen=True)
class PerturbedOperator:
    matrix: np.ndarray
    h: float
    delta: float
    truncation: FourierTruncation
    draw_seed: int | None = None
    _fp: list = field(default_factory=list, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def fingerprint(self) -> str:
        """Content hash of the matrix, used to detect mixing of runs."""
        if not self._fp:
            self._fp.append(hashlib.sha1(np.ascontiguousarray(self.matrix).tobytes()).hexdigest())
        return self._fp[0]


def build_unperturbed(g: SymbolFunction, h: float, trunc: FourierTruncation) -> PerturbedOperator:
    """Galerkin matrix of ``hD_x + g`` on the modes of ``trunc``."""
    need = g.band_limit + (trunc.block or 0)
    if trunc.M < need:
        raise TruncationTooSmall(
            f"M={trunc.M} < block + symbol band = {need}; convolution would leak past the edge"
        )
    n = trunc.dim
    P = np.diag(h * trunc.modes.astype(float)).astype(complex)
    for m, c in zip(g.modes, g.coeffs):
        if abs(m) < n:
            P += np.diag(np.full(n - abs(m), c), -m)
    return PerturbedOperator(matrix=P, h=float(h), delta=0.0, truncation=trunc)


def draw_perturbation(
    seed: int, h: float, C1: float = DEFAULT_C1, C_ball: float = DEFAULT_C_BALL
) -> PerturbationDraw:
    """Standard complex Gaussian block, ``E|alpha|^2 = 1``, with ball test ``|alpha| <= C_ball/h``."""
    L = block_half_width(h, C1)
    if L < 1:
        raise TruncationTooSmall(f"floor(C1/h) = {L} < 1")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    n = 2 * L + 1
    alpha = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * np.sqrt(0.5)
    norm = float(np.linalg.norm(alpha))
    radius = C_ball / h
    return PerturbationDraw(alpha=alpha, seed=int(seed), norm=norm, radius=radius, accepted=norm <= radius)


def assemble_perturbed(P0: PerturbedOperator, draw: PerturbationDraw, delta: float) -> PerturbedOperator:
    """``P0 + delta * Q`` with ``Q`` supported on the central block."""
    if not draw.accepted:
        raise RejectedDraw(f"draw with seed {draw.seed} has norm {draw.norm:.4g} > R = {draw.radius:.4g}")
    M = P0.truncation.M
    L = draw.block
    if L > M:
        raise TruncationTooSmall(f"perturbation block L={L} exceeds truncation M={M}")
    out = P0.matrix.copy()
    sl = slice(M - L, M + L + 1)
    out[sl, sl] += delta * draw.alpha
    trunc = P0.truncation if P0.truncation.block == L else FourierTruncation(M, L)
    return PerturbedOperator(
        matrix=out, h=P0.h, delta=P0.delta + float(delta), truncation=trunc, draw_seed=draw.seed
    )


# -- coupling constant ----------------------------------------------------------


@dataclass(frozen=True)
class DeltaValidation:
    """Coupling ``delta = sqrt(h) exp(-eps0/h)`` and the checks it was put through."""

    h: float
    delta: float
    eps0: float
    min_action: float
    lower: float  # sqrt(h) exp(-min S / (C h))
    upper: float  # h^kappa
    kappa: float
    C: float
    eps0_floor: float  # (kappa - 1/2) h ln(1/h) + C h
    eps0_ceiling: float  # min S / C

    @property
    def delta_ok(self) -> bool:
        return self.lower < self.delta <= self.upper

    @property
    def eps0_ok(self) -> bool:
        return self.eps0_floor <= self.eps0 < self.eps0_ceiling

    @property
    def ok(self) -> bool:
        return self.delta_ok and self.eps0_ok

    def require(self) -> "DeltaValidation":
        if not self.ok:
            raise HypothesisViolation(
                "H.3",
                f"delta = {self.delta:.4g} at h = {self.h} not admissible: need "
                f"{self.lower:.4g} < delta <= {self.upper:.4g} and "
                f"{self.eps0_floor:.4g} <= eps0 = {self.eps0:.4g} < {self.eps0_ceiling:.4g}",
            )
        return self

    def as_dict(self) -> dict:
        return {
            "h": self.h, "delta": self.delta, "eps0": self.eps0, "min_action": self.min_action,
            "lower": self.lower, "upper": self.upper, "kappa": self.kappa, "C": self.C,
            "eps0_floor": self.eps0_floor, "eps0_ceiling": self.eps0_ceiling,
            "delta_ok": self.delta_ok, "eps0_ok": self.eps0_ok,
        }


def min_action(g: SymbolFunction, window: SpectralWindow, n: int = 33) -> float:
    """Minimum of the action over the window (it depends on Im z only)."""
    ts = np.linspace(window.im_lo, window.im_hi, n)
    vals = np.array([action_S(g, 1j * t) for t in ts])
    if window.im_hi == window.im_lo:
        return float(vals[0])
    i = int(np.argmin(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n - 1)]
    res = optimize.minimize_scalar(
        lambda t: action_S(g, 1j * t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
    )
    return float(min(vals[i], res.fun))


def delta_from_hypothesis(
    h: float,
    eps0_coeff: float,
    g: SymbolFunction,
    window: SpectralWindow,
    kappa: float = DEFAULT_KAPPA,
    C: float = DEFAULT_H3_C,
) -> DeltaValidation:
    """Coupling constant for ``eps0 = eps0_coeff * h ln(1/h)``, with admissibility bounds.

    Raises ``DeltaWindowEmpty`` when the lower barrier already exceeds
    ``h^kappa``, i.e. no coupling at all is admissible at this ``h``.
    """
    window.validate(g)
    S = min_action(g, window)
    lhl = h * np.log(1.0 / h)
    eps0 = eps0_coeff * lhl
    lower = np.sqrt(h) * np.exp(-S / (C * h))
    upper = h**kappa
    if not lower < upper:
        raise DeltaWindowEmpty(
            f"no admissible delta at h = {h}: lower barrier {lower:.4g} >= h^kappa = {upper:.4g}",
            lower=lower,
            upper=upper,
        )
    return DeltaValidation(
        h=float(h),
        delta=float(np.sqrt(h) * np.exp(-eps0 / h)),
        eps0=float(eps0),
        min_action=S,
        lower=float(lower),
        upper=float(upper),
        kappa=float(kappa),
        C=float(C),
        eps0_floor=float((kappa - 0.5) * lhl + C * h),
        eps0_ceiling=float(S / C),
    )


# -- export ---------------------------------------------------------------------


def write_matrix_binary(path: str | Path, matrix: np.ndarray) -> Path:
    """Row-major ``(re, im)`` pairs as little-endian doubles, no header."""
    path = Path(path)
    np.ascontiguousarray(matrix, dtype="<c16").tofile(path)
    return path


def read_matrix_binary(path: str | Path) -> np.ndarray:
    data = np.fromfile(path, dtype="<c16")
    n = int(round(np.sqrt(data.size)))
    if n * n != data.size:
        raise ValueError(f"{path}: {data.size} entries is not a square matrix")
    return data.reshape(n, n)


def write_matrix_csv(path: str | Path, matrix: np.ndarray) -> Path:
    """One line per nonzero entry: ``row,col,re,im``."""
    path = Path(path)
    rows, cols = np.nonzero(matrix)
    with open(path, "w") as fh:
        fh.write("row,col,re,im\n")
        for r, c in zip(rows, cols):
            v = matrix[r, c]
            fh.write(f"{r},{c},{v.real!r},{v.imag!r}\n")
    return path
