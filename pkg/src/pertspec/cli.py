"""Command line entry point.

Subcommands: ``simulate``, ``stats``, ``theory``, ``gramian``,
``pseudospectrum``, ``verify``. Exit codes:

0  success
1  runtime failure, or ``verify`` found a failing criterion
2  configuration or hypothesis violation (message names H.1, H.2 or H.3)
3  more than 1% of Monte Carlo trials failed
4  some trials failed but at least 99% succeeded (partial success)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, IncompatibleManifest, PertspecError, TooFewTrials
from .montecarlo import WORKERS_ENV, atomic_write_text, read_records, run_batch

log = logging.getLogger("pertspec")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_TRIALS, EXIT_PARTIAL = 0, 1, 2, 3, 4


def _csv(path: Path, header: str, rows, config_hash: str) -> Path:
    lines = [f"# config_hash={config_hash}", header]
    lines += [",".join(repr(float(v)) if not isinstance(v, str) else v for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _json(path: Path, obj: dict) -> Path:
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")
    return path


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.default()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override("monte_carlo", "master_seed", args.seed)
    if getattr(args, "out", None):
        cfg = cfg.override("output", "dir", args.out)
    return cfg


def _workers(args, cfg: RunConfig) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    return int(env) if env else cfg.workers


# -- subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    tc = cfg.trial_config()
    tc.validate()
    out = cfg.output_dir
    res = run_batch(tc, out, workers=_workers(args, cfg), resume=args.resume)
    atomic_write_text(out / "config.ini", f"# config_hash={tc.config_hash()}\n" + cfg.to_text())
    m = res.manifest
    print(f"simulate: {len(m.completed)} completed, {len(m.failed)} failed, {res.new_trials} new -> {out}")
    return res.exit_code


def cmd_stats(args) -> int:
    from .density import DensityModel
    from .plotting import heatmap, line_plot
    from .statistics import compare_report, intensity_grid, pair_correlation, radial_bins, weyl_count
    from .symbol import symplectic_volume

    cfg = _load_config(args)
    tc = cfg.trial_config()
    tc.validate()
    out = cfg.output_dir
    chash = tc.config_hash()
    recs = read_records(args.records or out, expected_hash=chash)
    h = tc.h
    nb = cfg.getint("statistics", "r_bins")
    edges = radial_bins(h, nb, cfg.getfloat("statistics", "r_lo_factor"), cfg.getfloat("statistics", "r_hi_factor"))
    pc = pair_correlation(
        recs, tc.window, edges, padded_window=tc.padded_window,
        normalization=cfg.get("statistics", "normalization"), shifts=cfg.getint("statistics", "shifts"), h=h,
    )
    nx, ny = (int(v) for v in cfg.floats("statistics", "intensity_bins", 2))
    grid = intensity_grid(recs, tc.window, (nx, ny))
    expected = symplectic_volume(tc.g, tc.window) / (2 * np.pi * h)
    try:
        weyl = weyl_count(recs, tc.window)
    except TooFewTrials as exc:
        log.warning("skipping Weyl count: %s", exc)
        weyl = None
    model = DensityModel(tc.g, h, tc.delta, cfg.getfloat("statistics", "c_norm"), max_separation=10.0)
    rep = compare_report(pc, model, tc.window, weyl=weyl, weyl_expected=expected)

    from .density import one_point_density

    cre, cim = grid.centers
    rows = []
    for i, x in enumerate(cre):
        for j, y in enumerate(cim):
            rows.append((x, y, grid.counts[i, j], grid.density[i, j], grid.stderr[i, j],
                         one_point_density(complex(x, y), model)))
    _csv(out / "intensity.csv", "re,im,count,density,stderr,theory", rows, chash)
    _csv(out / "pair_correlation.csv", "r,g2,stderr,theory_D_ratio",
         zip(pc.r, pc.g2, pc.stderr, rep.g2_theory), chash)
    report = json.loads(rep.to_json())
    report["config_hash"] = chash
    report["trials"] = recs.trial_count
    _json(out / "report.json", report)
    note = f"config {chash[:12]}"
    line_plot(out / "g2.svg", pc.r / np.sqrt(h), {"empirical": pc.g2, "theory": np.array(rep.g2_theory)},
              "r / sqrt(h)", "g2(r)", title=f"pair correlation, h = {h}", logx=True,
              errors={"empirical": pc.stderr}, styles={"empirical": "o", "theory": "-"}, note=note)
    heatmap(out / "intensity.svg", grid.re_edges, grid.im_edges, grid.density.T, "eigenvalue density",
            title=f"empirical density, {recs.trial_count} trials", note=note)
    crit = rep.criteria
    wtxt = "n/a" if weyl is None else f"{weyl[0]:.3f} +- {weyl[1]:.3f}"
    print(f"stats: weyl {wtxt} (expected {expected:.3f}), "
          f"repulsion slope {rep.repulsion_slope:.3f}, long range [{rep.long_range_min:.3f}, {rep.long_range_max:.3f}]")
    return EXIT_OK if all(c["pass"] for c in crit.values()) else EXIT_FAIL


def cmd_theory(args) -> int:
    from .density import DensityModel, one_point_density, theory_curves
    from .plotting import line_plot

    cfg = _load_config(args)
    g = cfg.symbol
    h = cfg.getfloat("theory", "h")
    w0 = cfg.complex_value("theory", "w0")
    rmax = cfg.getfloat("theory", "r_max_factor") * np.sqrt(h)
    n = cfg.getint("theory", "points")
    r = np.linspace(rmax / n, rmax, n)
    model = DensityModel(g, h, c_norm=cfg.getfloat("statistics", "c_norm"),
                         max_separation=max(0.25, 1.01 * rmax / g.band_width))
    cur = theory_curves(model, w0, r)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    _csv(out / "theory.csv", "r,D,D_short,D_long,conditional",
         zip(cur["r"], cur["D"], cur["D_short"], cur["D_long"], cur["conditional"]), chash)
    d0 = one_point_density(w0, model)
    short_cond = cur["D_short"] / d0
    clip = short_cond <= 1.5 * cur["conditional"].max()
    line_plot(
        out / "theory.svg", r,
        {"conditional density": cur["conditional"], "short range": np.where(clip, short_cond, np.nan),
         "one-point density": np.full_like(r, d0)},
        "|z - w0|", "density", title=f"conditional density given w0 = {w0}, h = {h}",
        styles={"conditional density": "-", "short range": "--", "one-point density": ":"},
        note=f"config {chash[:12]}",
    )
    print(f"theory: {n} points up to r = {rmax:.4g} -> {out}")
    return EXIT_OK


def cmd_gramian(args) -> int:
    from .gramian import fit_overlap, gramian, overlap_rows, sample_pairs
    from .operators import FourierTruncation, build_unperturbed
    from .plotting import line_plot

    cfg = _load_config(args)
    g = cfg.symbol
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    sep = cfg.getfloat("gramian", "max_separation")
    r_range = (cfg.getfloat("gramian", "r_lo"), cfg.getfloat("gramian", "r_hi"))
    center = cfg.complex_value("gramian", "center")
    fits, rows_all, series = {}, [], {}
    for h in cfg.floats("gramian", "h_values"):
        op = build_unperturbed(g, h, FourierTruncation.for_h(h, g, cfg.getfloat("operator", "C1")))
        rng = np.random.default_rng(cfg.getint("gramian", "seed"))
        pairs = sample_pairs(cfg.getint("gramian", "pairs"), h, rng, center, cfg.getfloat("gramian", "spread"), r_range)
        orow = overlap_rows(op, g, pairs, sep)
        fit = fit_overlap(orow)
        fits[str(h)] = fit.as_dict()
        for (z, w), o in zip(pairs, orow):
            b = gramian(op, z, w, g, c_norm=fit.slope, max_separation=sep)
            row = b.to_row()
            row["neg_log_absXX"] = o["neg_log_absXX"]
            row["K_unit"] = o["K_unit"]
            rows_all.append(row)
        order = np.argsort([o["K_unit"] for o in orow])
        series[f"h = {h}"] = (np.array([o["K_unit"] for o in orow])[order], np.array([o["neg_log_absXX"] for o in orow])[order])
    lines = [json.dumps({"config_hash": chash})] + [json.dumps(r, sort_keys=True) for r in rows_all]
    atomic_write_text(out / "gramian_rows.jsonl", "\n".join(lines) + "\n")
    _json(out / "gramian_fit.json", {"config_hash": chash, "fits": fits})
    x0 = np.linspace(0, max(v[0].max() for v in series.values()), 50)
    curves = {"slope 1": x0}
    for name, (x, y) in series.items():
        curves[name] = np.interp(x0, x, y, left=np.nan, right=np.nan)
    line_plot(out / "gramian.svg", x0, curves, "sigma |z-w|^2 / (4h)", "-ln |(X(z)|X(w))|",
              title="overlap decay", styles={"slope 1": "k:"}, note=f"config {chash[:12]}")
    for h, f in fits.items():
        print(f"gramian: h = {h}: c_norm = {f['slope']:.4f}, R^2 = {f['r_squared']:.5f}, {f['n_pairs']} pairs")
    return EXIT_OK


def cmd_pseudospectrum(args) -> int:
    from .backend import eigenvalues, resolvent_norm_grid
    from .operators import FourierTruncation, build_unperturbed
    from .plotting import heatmap

    cfg = _load_config(args)
    g = cfg.symbol
    h = cfg.getfloat("pseudospectrum", "h")
    op = build_unperturbed(g, h, FourierTruncation.for_h(h, g, cfg.getfloat("operator", "C1")))
    f = lambda k: cfg.getfloat("pseudospectrum", k)  # noqa: E731
    re = np.linspace(f("re_lo"), f("re_hi"), cfg.getint("pseudospectrum", "n_re"))
    im = np.linspace(f("im_lo"), f("im_hi"), cfg.getint("pseudospectrum", "n_im"))
    Z = re[None, :] + 1j * im[:, None]
    R = resolvent_norm_grid(op.matrix, Z)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    rows = [(z.real, z.imag, 1.0 / r, np.log10(r)) for z, r in zip(Z.ravel(), R.ravel())]
    _csv(out / "pseudospectrum.csv", "re,im,s_min,log10_resolvent_norm", rows, chash)
    ev = eigenvalues(op.matrix).values
    ev = ev[(ev.real >= re[0]) & (ev.real <= re[-1]) & (ev.imag >= im[0]) & (ev.imag <= im[-1])]
    heatmap(out / "pseudospectrum.svg", re, im, np.log10(R), "log10 resolvent norm",
            title=f"unperturbed operator, h = {h}", points=ev, note=f"config {chash[:12]}")
    print(f"pseudospectrum: {Z.size} points, max log10 |R| = {np.log10(R).max():.2f} -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    cfg = _load_config(args)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.validate()
    results = run_all(out, cfg if args.config else None, workers=_workers(args, cfg))
    for r in results:
        print(r.line())
    _json(out / "verify.json", {
        "version": __version__,
        "all_passed": all(r.passed for r in results),
        "criteria": [r.as_dict() for r in results],
    })
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pertspec", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"pertspec {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": cmd_simulate, "stats": cmd_stats, "theory": cmd_theory,
        "gramian": cmd_gramian, "pseudospectrum": cmd_pseudospectrum, "verify": cmd_verify,
    }
    for name, fn in handlers.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--workers", type=int, metavar="N", help=f"worker processes (env {WORKERS_ENV})")
        sp.add_argument("--resume", action="store_true")
        if name == "stats":
            sp.add_argument("--records", metavar="PATH", help="record file or run directory")
        sp.set_defaults(func=fn)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return int(args.func(args))
    except (ConfigError, IncompatibleManifest) as exc:
        print(f"pertspec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PertspecError, OSError) as exc:
        print(f"pertspec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
