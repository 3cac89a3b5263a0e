"""Acceptance criteria, each evaluated at its stated tolerance.

Every ``criterion_*`` function returns a :class:`CriterionResult`; the
``verify`` subcommand and the acceptance tests both call them. The Monte
Carlo criteria (2 to 4) share one run, produced by :func:`monte_carlo_run`.
"""

from __future__ import annotations

import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .backend import eigenvalues, smallest_singular_value
from .config import RunConfig
from .density import DensityModel
from .gramian import fit_overlap, gramian, overlap_rows, permanent, sample_pairs
from .montecarlo import RecordSet, TrialConfig, read_records, run_batch
from .operators import FourierTruncation, build_unperturbed
from .oracles import mc_phase_volume, poisson_points, ryser_permanent, wkb_log_norm
from .statistics import (
    compare_report,
    intensity_grid,
    pair_correlation,
    radial_bins,
    weyl_count,
)
from .symbol import SpectralWindow, SymbolFunction, phi_leading, symplectic_volume


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    value: object
    bound: object
    runtime: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} [{self.number:>2}] {self.name}: value={_fmt(self.value)} bound={_fmt(self.bound)} ({self.runtime:.1f}s)"

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# -- 1 ----------------------------------------------------------------------------------


def criterion_exact_spectrum(h: float = 0.1, M: int = 60) -> CriterionResult:
    g = SymbolFunction.default()
    with _Timer() as tm:
        op = build_unperturbed(g, h, FourierTruncation(M))
        ev = eigenvalues(op.matrix)
    exact = h * np.arange(-M, M + 1)
    err = float(np.max(np.abs(ev.values - exact)))
    return CriterionResult(
        1, "exact unperturbed spectrum", err < 1e-10 and tm.elapsed < 1.0,
        {"max_error": err, "seconds": tm.elapsed}, {"max_error": 1e-10, "seconds": 1.0}, tm.elapsed,
    )


# -- 2, 3, 4 ----------------------------------------------------------------------------


def acceptance_config(trials: int = 2000, seed: int = 20261014) -> RunConfig:
    return RunConfig.default().override("monte_carlo", "trials", trials).override("monte_carlo", "master_seed", seed)


@dataclass
class MonteCarloRun:
    trial_config: TrialConfig
    records: RecordSet
    runtime: float
    exit_code: int
    rejections: int


def monte_carlo_run(run_dir: str | Path, config: RunConfig | None = None, workers: int | None = None) -> MonteCarloRun:
    """Run (or resume) the Monte Carlo batch in ``run_dir``."""
    config = acceptance_config() if config is None else config
    tc = config.trial_config()
    with _Timer() as tm:
        res = run_batch(tc, run_dir, workers=workers, resume=True)
    recs = read_records(run_dir, expected_hash=tc.config_hash())
    rej = sum(int(m.get("rejections", 0)) for m in res.manifest.trial_meta.values())
    return MonteCarloRun(tc, recs, tm.elapsed, res.exit_code, rej)


def criterion_weyl(run: MonteCarloRun, oracle_samples: int = 2_000_000) -> CriterionResult:
    tc = run.trial_config
    with _Timer() as tm:
        vol = symplectic_volume(tc.g, tc.window)
        mc_vol, mc_se = mc_phase_volume(tc.g, tc.window, oracle_samples, np.random.default_rng(12345))
        expected = vol / (2 * np.pi * tc.h)
        mean, se = weyl_count(run.records, tc.window)
    rel = abs(mean - expected) / expected
    vol_ok = abs(mc_vol - vol) <= 4 * mc_se
    ok = run.records.trial_count >= 200 and rel < 0.1 and vol_ok and run.runtime <= 900
    return CriterionResult(
        2, "Weyl law", bool(ok),
        {"mean_count": mean, "stderr": se, "expected": expected, "relative_error": rel,
         "trials": run.records.trial_count, "seconds": run.runtime},
        {"relative_error": 0.1, "min_trials": 200, "seconds": 900},
        tm.elapsed + run.runtime,
        {"volume_quadrature": vol, "volume_monte_carlo": mc_vol, "volume_mc_stderr": mc_se,
         "volume_oracle_agrees": bool(vol_ok), "ball_rejections": run.rejections, "delta": tc.delta},
    )


def _pair_stats(run: MonteCarloRun, normalization: str = "mixed"):
    tc = run.trial_config
    edges = radial_bins(tc.h)
    return pair_correlation(
        run.records, tc.window, edges, padded_window=tc.padded_window, normalization=normalization, h=tc.h
    )


def criteria_pair(run: MonteCarloRun) -> tuple[CriterionResult, CriterionResult]:
    tc = run.trial_config
    with _Timer() as tm:
        pc = _pair_stats(run)
        model = DensityModel(tc.g, tc.h, tc.delta, 1.0, max_separation=10.0)
        rep = compare_report(pc, model, tc.window)
    slope = rep.repulsion_slope
    c3 = CriterionResult(
        3, "short-range repulsion slope", bool(abs(slope - 2.0) <= 0.3),
        {"slope": slope, "stderr": rep.repulsion_slope_stderr, "bins": rep.repulsion_bins,
         "unweighted_slope": rep.repulsion_slope_unweighted},
        [1.7, 2.3], tm.elapsed,
        {"r": rep.r, "g2": rep.g2, "g2_stderr": rep.stderr, "g2_theory": rep.g2_theory},
    )
    lr_ok = rep.long_range_bins > 0 and 0.85 <= rep.long_range_min and rep.long_range_max <= 1.15
    c4 = CriterionResult(
        4, "long-range decoupling", bool(lr_ok),
        {"min": rep.long_range_min, "max": rep.long_range_max, "bins": rep.long_range_bins},
        [0.85, 1.15], 0.0,
    )
    return c3, c4


# -- 5, 6, 7 ----------------------------------------------------------------------------

GRAMIAN_H = (0.1, 0.05)
FIXED_RATIOS = (0.75, 1.0, 1.5, 2.0, 2.5)
FIXED_MID = 0.013 + 0.05j


@dataclass
class GramianStudy:
    fits: dict
    bundles: dict  # h -> list of bundles (random pairs)
    fixed: dict  # h -> list of bundles on the fixed ratio grid
    identity_errors: dict
    runtime: float


def gramian_study(
    h_values=GRAMIAN_H, n_pairs: int = 48, seed: int = 7, max_separation: float = 0.5
) -> GramianStudy:
    g = SymbolFunction.default()
    fits, bundles, fixed, ident = {}, {}, {}, {}
    with _Timer() as tm:
        for h in h_values:
            op = build_unperturbed(g, h, FourierTruncation.for_h(h, g))
            rng = np.random.default_rng(seed)
            pairs = sample_pairs(n_pairs, h, rng)
            rows = overlap_rows(op, g, pairs, max_separation)
            fits[h] = fit_overlap(rows)
            bundles[h] = [gramian(op, z, w, g, max_separation=max_separation) for z, w in pairs]
            fixed[h] = []
            for q in FIXED_RATIOS:
                d = 0.5 * q * np.sqrt(h)
                fixed[h].append(gramian(op, FIXED_MID + d, FIXED_MID - d, g, max_separation=max_separation))
            ident[h] = max(abs(b.detA - (1.0 - b.absXX**2)) for b in bundles[h] + fixed[h])
    return GramianStudy(fits, bundles, fixed, ident, tm.elapsed)


def criterion_gramian_fit(study: GramianStudy) -> CriterionResult:
    hs = sorted(study.fits, reverse=True)
    slopes = [study.fits[h].slope for h in hs]
    r2 = [study.fits[h].r_squared for h in hs]
    n = [study.fits[h].n_pairs for h in hs]
    stab = abs(slopes[1] / slopes[0] - 1.0)
    ok = all(x > 0.99 for x in r2) and stab <= 0.10 and all(k >= 40 for k in n) and study.runtime <= 300
    return CriterionResult(
        5, "Gramian exponential overlap law", bool(ok),
        {"c_norm": dict(zip(hs, slopes)), "r_squared": dict(zip(hs, r2)), "slope_change": stab, "pairs": dict(zip(hs, n))},
        {"r_squared": 0.99, "slope_change": 0.10, "min_pairs": 40, "seconds": 300},
        study.runtime,
        {"fits": {h: study.fits[h].as_dict() for h in hs}},
    )


def criterion_det_a(study: GramianStudy) -> CriterionResult:
    hs = sorted(study.fixed, reverse=True)
    ident = max(study.identity_errors.values())
    dev = {}
    for h in hs:
        c = study.fits[h].slope
        row = []
        for b in study.fixed[h]:
            pred = -np.expm1(-2.0 * c * b.K_pred)
            row.append(abs(b.detA - pred) / pred)
        dev[h] = row
    decreasing = [dev[hs[1]][i] < dev[hs[0]][i] for i in range(len(FIXED_RATIOS))]
    ok = ident <= 1e-10 and all(decreasing)
    return CriterionResult(
        6, "det A identity and asymptotics", bool(ok),
        {"identity_max_error": ident, "relative_deviation": {h: dev[h] for h in hs}, "ratios": list(FIXED_RATIOS)},
        {"identity": 1e-10, "deviation": "decreasing as h halves"},
        0.0,
    )


def criterion_det_g(study: GramianStudy) -> CriterionResult:
    detg_min = {}
    tr = {}
    ok = True
    for h in study.bundles:
        allb = study.bundles[h] + study.fixed[h]
        detg_min[h] = min(b.detG for b in allb)
        trs = [b.trGamma for b in allb]
        tr[h] = [min(trs), max(trs)]
        ok &= detg_min[h] > 0 and min(trs) > 0 and max(trs) <= 10.0 / h
    return CriterionResult(
        7, "det G positivity and trace of Gamma", bool(ok),
        {"min_detG": detg_min, "trGamma_range": tr},
        {"detG": "> 0", "trGamma": "(0, 10/h]"},
        0.0,
    )


# -- 8 ----------------------------------------------------------------------------------


def criterion_stationary_phase(zs=(0.0, 0.3j, -0.3j), hs=(0.2, 0.1, 0.05)) -> CriterionResult:
    g = SymbolFunction.default()
    out = {}
    ok = True
    with _Timer() as tm:
        for branch in ("plus", "minus"):
            for z in zs:
                seq = [
                    abs(wkb_log_norm(g, z, h, branch) - 2.0 * phi_leading(g, z, h, branch=branch) / h) * h
                    for h in hs
                ]
                out[f"{branch} z={complex(z)}"] = seq
                ok &= all(b <= a for a, b in zip(seq, seq[1:]))
    return CriterionResult(
        8, "stationary phase norm", bool(ok), out, "non-increasing in h", tm.elapsed, {"h": list(hs)}
    )


# -- 9 ----------------------------------------------------------------------------------


def criterion_pseudospectrum(z: complex = 0.3j, hs=(0.2, 0.1, 0.05, 0.033)) -> CriterionResult:
    g = SymbolFunction.default()
    with _Timer() as tm:
        y = []
        for h in hs:
            op = build_unperturbed(g, h, FourierTruncation.for_h(h, g))
            y.append(-np.log(smallest_singular_value(op.matrix, z)))
        x = 1.0 / np.array(hs)
        res = sps.linregress(x, y)
    r2 = float(res.rvalue**2)
    return CriterionResult(
        9, "pseudospectral blowup", bool(res.slope > 0 and r2 > 0.95),
        {"slope": float(res.slope), "r_squared": r2, "log_resolvent_norm": [float(v) for v in y]},
        {"slope": "> 0", "r_squared": 0.95}, tm.elapsed, {"h": list(hs)},
    )


# -- 10 ---------------------------------------------------------------------------------


def criterion_calibration(trials: int = 300, seed: int = 99, h: float = 0.02) -> CriterionResult:
    rng = np.random.default_rng(seed)
    window = SpectralWindow(-0.5, 0.5, -0.5, 0.5)
    edges = radial_bins(h)
    padded = window.dilate(float(edges[-1]))
    lam = 20.0
    with _Timer() as tm:
        pts = poisson_points(lam, padded, trials, rng)
        grid = intensity_grid(pts, window, (6, 6))
        zi = np.abs(grid.density - lam) / grid.stderr
        frac_i = float(np.mean(zi <= 3))
        pc = pair_correlation(pts, window, edges, padded_window=padded)
        zg = np.abs(pc.g2 - 1.0) / pc.stderr
        frac_g = float(np.mean(zg <= 3))
        perm_err = 0.0
        for _ in range(100):
            M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            perm_err = max(perm_err, abs(permanent(M) - ryser_permanent(M)))
    ok = frac_i >= 0.95 and frac_g >= 0.95 and perm_err <= 1e-12
    return CriterionResult(
        10, "estimator calibration and permanent", bool(ok),
        {"intensity_fraction": frac_i, "g2_fraction": frac_g, "permanent_max_error": perm_err},
        {"fraction": 0.95, "permanent": 1e-12}, tm.elapsed,
    )


# -- 11 ---------------------------------------------------------------------------------


def criterion_reproducibility(work_dir: str | Path, trials: int = 12, workers=(1, 2)) -> CriterionResult:
    from .cli import main

    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    cfg = acceptance_config(trials=trials, seed=424242)
    cfg_path = work_dir / "repro.ini"
    cfg_path.write_text(cfg.to_text())
    blobs, codes = [], []
    with _Timer() as tm:
        for n in workers:
            out = work_dir / f"run-w{n}"
            if (out / "manifest.json").exists():
                shutil.rmtree(out)  # stale run from an earlier invocation
            codes.append(main(["simulate", "--config", str(cfg_path), "--workers", str(n), "--out", str(out)]))
            blobs.append((out / "records_sorted.csv").read_bytes())
    same = all(b == blobs[0] for b in blobs)
    return CriterionResult(
        11, "reproducibility across worker counts", bool(same and all(c == 0 for c in codes)),
        {"identical": same, "exit_codes": codes, "bytes": len(blobs[0])},
        "byte-identical", tm.elapsed, {"workers": list(workers)},
    )


# -- driver -----------------------------------------------------------------------------


def run_all(work_dir: str | Path, config: RunConfig | None = None, workers: int | None = None) -> list[CriterionResult]:
    work_dir = Path(work_dir)
    results = [criterion_exact_spectrum()]
    run = monte_carlo_run(work_dir / "mc", config, workers)
    results.append(criterion_weyl(run))
    results.extend(criteria_pair(run))
    study = gramian_study()
    results += [criterion_gramian_fit(study), criterion_det_a(study), criterion_det_g(study)]
    results.append(criterion_stationary_phase())
    results.append(criterion_pseudospectrum())
    results.append(criterion_calibration())
    results.append(criterion_reproducibility(work_dir / "repro"))
    return results
