"""Empirical one- and two-point statistics of eigenvalue samples.

The pair correlation estimator counts, for every eigenvalue ``c`` inside the
window Omega, the eigenvalues of the same trial at distance in each radial
bin. Omega must sit at distance at least ``max(r)`` inside the padded window
from which partners are taken (minus sampling), so no pair is truncated by
the padding edge.

Two normalizations are offered:

``"mixed"`` (default)
    the expected count for independent points is measured directly by
    pairing the centres of trial ``i`` with the eigenvalues of trials
    ``i+1, ..., i+S`` (cyclically). This is exact for any inhomogeneous
    intensity and gives ``g2 = sum(same) / sum(mixed)``.
``"stationary"``
    classical annulus normalization ``N_Omega * dbar * annulus area`` with
    ``dbar`` the mean intensity in Omega; only correct when the intensity is
    flat over Omega plus the largest radius.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .density import DensityModel, pair_kernel
from .errors import EmptyRecords, ErosionTooLarge, MismatchedConfig, TooFewTrials
from .montecarlo import RecordSet
from .symbol import SpectralWindow, sigma_density

MIN_WEYL_TRIALS = 30
DEFAULT_SHIFTS = 20


def _as_lists(records) -> list[np.ndarray]:
    if isinstance(records, RecordSet):
        return records.eigenvalue_lists()
    return [np.asarray(r, dtype=complex) for r in records]


# -- counts ---------------------------------------------------------------------------


def weyl_count(records, window: SpectralWindow, min_trials: int = MIN_WEYL_TRIALS) -> tuple[float, float]:
    """Mean and standard error of the per-trial number of eigenvalues in ``window``."""
    lists = _as_lists(records)
    if len(lists) < min_trials:
        raise TooFewTrials(f"{len(lists)} trials, need at least {min_trials}")
    n = np.array([np.count_nonzero(window.contains(ev)) for ev in lists], dtype=float)
    return float(n.mean()), float(n.std(ddof=1) / np.sqrt(len(n)))


@dataclass(frozen=True)
class IntensityGrid:
    window: SpectralWindow
    re_edges: np.ndarray
    im_edges: np.ndarray
    counts: np.ndarray  # (n_re, n_im), summed over trials
    trial_count: int
    density: np.ndarray
    stderr: np.ndarray

    @property
    def bin_area(self) -> float:
        return float((self.re_edges[1] - self.re_edges[0]) * (self.im_edges[1] - self.im_edges[0]))

    @property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.re_edges[1:] + self.re_edges[:-1]), 0.5 * (self.im_edges[1:] + self.im_edges[:-1])


def intensity_grid(records, window: SpectralWindow, bins: tuple[int, int] = (10, 10)) -> IntensityGrid:
    """Histogram intensity ``counts / (trials * bin area)`` with across-trial standard errors."""
    lists = _as_lists(records)
    if not lists:
        raise EmptyRecords("no trials to histogram")
    nx, ny = int(bins[0]), int(bins[1])
    re_edges = np.linspace(window.re_lo, window.re_hi, nx + 1)
    im_edges = np.linspace(window.im_lo, window.im_hi, ny + 1)
    per_trial = np.empty((len(lists), nx, ny))
    for t, ev in enumerate(lists):
        ev = ev[window.contains(ev)]
        per_trial[t] = np.histogram2d(ev.real, ev.imag, bins=(re_edges, im_edges))[0]
    area = (re_edges[1] - re_edges[0]) * (im_edges[1] - im_edges[0])
    T = len(lists)
    counts = per_trial.sum(axis=0)
    # spacing of the superposition of all trials
    pooled = counts.sum()
    if pooled > 0 and area > 0:
        spacing2 = window.area / pooled
        if area < 25 * spacing2:
            warnings.warn(
                f"bin area {area:.3g} below (5 spacings)^2 = {25 * spacing2:.3g}; "
                "per-bin variance will be large",
                stacklevel=2,
            )
    density = counts / (T * area) if area > 0 else np.zeros_like(counts)
    sd = per_trial.std(axis=0, ddof=1) if T > 1 else np.zeros_like(counts)
    stderr = sd / (np.sqrt(T) * area) if area > 0 else np.zeros_like(counts)
    return IntensityGrid(window, re_edges, im_edges, counts, T, density, stderr)


# -- pair correlation ---------------------------------------------------------------------


def radial_bins(h: float, n: int = 24, lo_factor: float = 0.1, hi_factor: float = 6.0) -> np.ndarray:
    """Geometric edges from ``lo_factor sqrt(h)`` to ``hi_factor sqrt(h ln 1/h)``."""
    return np.geomspace(lo_factor * np.sqrt(h), hi_factor * np.sqrt(h * np.log(1.0 / h)), n + 1)


@dataclass(frozen=True)
class PairCorrelation:
    r_edges: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    same_counts: np.ndarray
    reference_counts: np.ndarray
    eroded_area: float
    mean_intensity: float
    trial_count: int
    normalization: str
    h: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def r(self) -> np.ndarray:
        """Geometric bin centres."""
        return np.sqrt(self.r_edges[1:] * self.r_edges[:-1])

    def to_csv(self, theory_ratio: np.ndarray | None = None) -> str:
        lines = ["r,g2,stderr,theory_D_ratio"]
        th = np.full(len(self.g2), np.nan) if theory_ratio is None else theory_ratio
        for r, g, s, t in zip(self.r, self.g2, self.stderr, th):
            lines.append(f"{r!r},{g!r},{s!r},{t!r}")
        return "\n".join(lines) + "\n"


def _bin_counts(d: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, d.ravel(), side="right") - 1
    idx = idx[(idx >= 0) & (idx < len(edges) - 1)]
    return np.bincount(idx, minlength=len(edges) - 1).astype(float)


def pair_correlation(
    records,
    window: SpectralWindow,
    r_edges: np.ndarray,
    padded_window: SpectralWindow | None = None,
    normalization: str = "mixed",
    shifts: int = DEFAULT_SHIFTS,
    h: float | None = None,
) -> PairCorrelation:
    """Radial pair correlation of the eigenvalues, centres restricted to ``window``.

    ``padded_window`` is the region in which eigenvalues were recorded;
    ``window`` dilated by ``max(r_edges)`` must fit inside it.
    """
    lists = _as_lists(records)
    if not lists:
        raise EmptyRecords("no trials for pair statistics")
    r_edges = np.asarray(r_edges, dtype=float)
    if np.any(np.diff(r_edges) <= 0) or r_edges[0] <= 0:
        raise ValueError("radial bin edges must be positive and strictly increasing")
    rmax = float(r_edges[-1])
    if padded_window is not None:
        need = window.dilate(rmax)
        if (
            need.re_lo < padded_window.re_lo - 1e-12
            or need.re_hi > padded_window.re_hi + 1e-12
            or need.im_lo < padded_window.im_lo - 1e-12
            or need.im_hi > padded_window.im_hi + 1e-12
        ):
            raise ErosionTooLarge(
                f"window dilated by max r = {rmax:.4g} leaves the padded window {padded_window.as_tuple()}"
            )
        lists = [ev[padded_window.contains(ev)] for ev in lists]
    T = len(lists)
    nb = len(r_edges) - 1
    centres = [ev[window.contains(ev)] for ev in lists]
    n_centres = np.array([len(c) for c in centres], dtype=float)

    same = np.zeros((T, nb))
    for t in range(T):
        c, ev = centres[t], lists[t]
        if len(c) == 0:
            continue
        d = np.abs(c[:, None] - ev[None, :])
        # self pairs have d == 0 and fall below the first edge
        same[t] = _bin_counts(d, r_edges)

    if normalization == "mixed":
        if T < 2:
            raise TooFewTrials("mixed normalization needs at least two trials")
        S = int(min(shifts, T - 1))
        ref = np.zeros((T, nb))
        for t in range(T):
            c = centres[t]
            if len(c) == 0:
                continue
            for s in range(1, S + 1):
                ev = lists[(t + s) % T]
                ref[t] += _bin_counts(np.abs(c[:, None] - ev[None, :]), r_edges)
            ref[t] /= S
    elif normalization == "stationary":
        dbar = n_centres.mean() / window.area
        ann = np.pi * (r_edges[1:] ** 2 - r_edges[:-1] ** 2)
        ref = n_centres[:, None] * dbar * ann[None, :]
    else:
        raise ValueError(f"unknown normalization {normalization!r}")

    S_tot = same.sum(axis=0)
    R_tot = ref.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        g2 = np.where(R_tot > 0, S_tot / R_tot, 0.0)
        # delta method for a ratio of sums over independent trials
        resid = same - g2[None, :] * ref
        var = T / max(T - 1, 1) * np.sum(resid**2, axis=0) / np.where(R_tot > 0, R_tot**2, np.inf)
    return PairCorrelation(
        r_edges=r_edges,
        g2=g2,
        stderr=np.sqrt(var),
        same_counts=S_tot,
        reference_counts=R_tot,
        eroded_area=window.area,
        mean_intensity=float(n_centres.mean() / window.area) if window.area > 0 else 0.0,
        trial_count=T,
        normalization=normalization,
        h=h,
    )


def unordered_pair_counts(points: np.ndarray, r_edges: np.ndarray) -> np.ndarray:
    """Histogram of ``|z - w|`` over unordered pairs of distinct points."""
    points = np.asarray(points, dtype=complex)
    i, j = np.triu_indices(len(points), k=1)
    return _bin_counts(np.abs(points[i] - points[j]), np.asarray(r_edges, dtype=float))


def loglog_slope(
    pc: PairCorrelation, r_lo: float, r_hi: float, weighted: bool = True
) -> tuple[float, float, int]:
    """Slope of ``log g2`` against ``log r`` for bin centres in ``[r_lo, r_hi]``.

    With ``weighted`` the fit is inverse-variance weighted, using
    ``stderr / g2`` as the standard error of ``log g2``; the returned
    standard error then follows from those per-bin errors. Otherwise an
    unweighted least squares fit with its residual-based standard error.
    Empty bins are skipped either way.
    """
    r = pc.r
    sel = (r >= r_lo) & (r <= r_hi) & (pc.g2 > 0)
    n = int(np.count_nonzero(sel))
    if n < 2:
        return float("nan"), float("nan"), n
    x, y = np.log(r[sel]), np.log(pc.g2[sel])
    if not weighted:
        res = sps.linregress(x, y)
        return float(res.slope), float(res.stderr), n
    se = pc.stderr[sel] / pc.g2[sel]
    if np.any(~(se > 0)):
        raise ValueError("weighted slope needs positive per-bin standard errors")
    w = 1.0 / se**2
    xm = np.sum(w * x) / w.sum()
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    return float(slope), float(np.sqrt(1.0 / sxx)), n


# -- theory overlays ------------------------------------------------------------------------


def theory_g2(model: DensityModel, window: SpectralWindow, r: np.ndarray, n_t: int = 41) -> np.ndarray:
    """Radial pair correlation predicted for centres spread over ``window``.

    Averages ``f(c sigma(t) r^2 / (4h))`` over ``Im z = t`` with weight
    ``sigma(t)^2`` (the leading pair intensity); the variation of sigma over a
    distance ``r`` is neglected.
    """
    r = np.asarray(r, dtype=float)
    ts = np.linspace(window.im_lo, window.im_hi, n_t)
    sig = np.array([sigma_density(model.g, 1j * t) for t in ts])
    wts = sig**2 / np.sum(sig**2)
    K = model.c_norm * sig[:, None] * r[None, :] ** 2 / (4.0 * model.h)
    return np.sum(wts[:, None] * pair_kernel(K), axis=0)


def theory_pair_correlation(model: DensityModel, window: SpectralWindow, r_edges: np.ndarray) -> PairCorrelation:
    """Theory curve packaged as an estimate with unit standard errors."""
    r_edges = np.asarray(r_edges, dtype=float)
    r = np.sqrt(r_edges[1:] * r_edges[:-1])
    g = theory_g2(model, window, r)
    return PairCorrelation(
        r_edges=r_edges, g2=g, stderr=np.ones_like(g), same_counts=g, reference_counts=np.ones_like(g),
        eroded_area=window.area, mean_intensity=float("nan"), trial_count=0,
        normalization="theory", h=model.h,
    )


# -- comparison report ------------------------------------------------------------------------


@dataclass
class CompareReport:
    h: float
    c_norm: float
    window: list
    r: list
    g2: list
    stderr: list
    g2_theory: list
    z_scores: list
    repulsion_slope: float
    repulsion_slope_stderr: float
    repulsion_slope_unweighted: float
    repulsion_bins: int
    long_range_ratio: float
    long_range_min: float
    long_range_max: float
    long_range_bins: int
    c_norm_fit: float | None = None
    weyl_mean: float | None = None
    weyl_stderr: float | None = None
    weyl_expected: float | None = None
    criteria: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CompareReport":
        return cls(**json.loads(text))


def compare_report(
    empirical: PairCorrelation,
    theory_model: DensityModel,
    window: SpectralWindow,
    weyl: tuple[float, float] | None = None,
    weyl_expected: float | None = None,
    c_norm_fit: float | None = None,
) -> CompareReport:
    """Per-bin comparison of an empirical pair correlation with the theory.

    Also evaluates the Weyl, short-range repulsion and long-range
    decoupling criteria at their stated tolerances.
    """
    h = theory_model.h
    if empirical.h is not None and not np.isclose(empirical.h, h, rtol=1e-12, atol=0):
        raise MismatchedConfig(f"empirical data at h = {empirical.h}, theory at h = {h}")
    r = empirical.r
    if empirical.normalization == "theory":
        g_th = empirical.g2.copy()
    else:
        g_th = theory_g2(theory_model, window, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(empirical.stderr > 0, (empirical.g2 - g_th) / empirical.stderr, 0.0)
    r_rep = (0.2 * np.sqrt(h), np.sqrt(h))
    if empirical.normalization == "theory":
        slope, slope_se, nrep = loglog_slope(empirical, *r_rep, weighted=False)
        slope_ols = slope
    else:
        slope, slope_se, nrep = loglog_slope(empirical, *r_rep)
        slope_ols = loglog_slope(empirical, *r_rep, weighted=False)[0]
    long_sel = r >= 3.0 * np.sqrt(h * np.log(1.0 / h))
    lr = empirical.g2[long_sel]
    crit = {
        "repulsion_slope": {"value": slope, "unweighted": slope_ols, "bound": [1.7, 2.3],
                            "pass": bool(abs(slope - 2.0) <= 0.3)},
        "long_range": {
            "value": [float(lr.min()), float(lr.max())] if lr.size else None,
            "bound": [0.85, 1.15],
            "pass": bool(lr.size > 0 and np.all((lr >= 0.85) & (lr <= 1.15))),
        },
    }
    if weyl is not None and weyl_expected is not None:
        rel = abs(weyl[0] - weyl_expected) / weyl_expected
        crit["weyl"] = {"value": weyl[0], "expected": weyl_expected, "relative_error": rel, "bound": 0.1,
                        "pass": bool(rel < 0.1)}
    return CompareReport(
        h=h,
        c_norm=theory_model.c_norm,
        window=list(window.as_tuple()),
        r=r.tolist(),
        g2=empirical.g2.tolist(),
        stderr=empirical.stderr.tolist(),
        g2_theory=g_th.tolist(),
        z_scores=z.tolist(),
        repulsion_slope=slope,
        repulsion_slope_stderr=slope_se,
        repulsion_slope_unweighted=slope_ols,
        repulsion_bins=nrep,
        long_range_ratio=float(lr.mean()) if lr.size else float("nan"),
        long_range_min=float(lr.min()) if lr.size else float("nan"),
        long_range_max=float(lr.max()) if lr.size else float("nan"),
        long_range_bins=int(lr.size),
        c_norm_fit=c_norm_fit,
        weyl_mean=None if weyl is None else weyl[0],
        weyl_stderr=None if weyl is None else weyl[1],
        weyl_expected=weyl_expected,
        criteria=crit,
    )
