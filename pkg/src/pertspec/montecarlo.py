"""Seeded, resumable, parallel spectral trials of the perturbed operator.

Trial ``i`` draws its perturbation from a Philox stream keyed by
``(master_seed, i, attempt)`` through ``numpy.random.SeedSequence``, so its
output depends on nothing but the configuration and the index. Results go
to a run directory:

``records.csv``
    one line per finished trial in completion order,
    ``trial_index,seed,n_eigs,re_1,im_1,...``; floats use ``repr``.
``records_sorted.csv``
    the same lines sorted by trial index, written at the end of a run; this
    is the canonical artifact and is byte-identical across worker counts.
``manifest.json``
    config hash, completed and failed indices, the byte offset of
    ``records.csv`` covered by the manifest and per-trial metadata.

Only the parent process writes; the manifest is replaced atomically. On
resume ``records.csv`` is cut back to the manifest offset, so a crash
between a record write and a manifest flush loses at most the unflushed
trials, which are then rerun.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .backend import DIM_CAP, eigenvalues
from .errors import ConfigError, IncompatibleManifest, PertspecError
from .operators import (
    DEFAULT_C1,
    DEFAULT_C_BALL,
    DEFAULT_H3_C,
    DEFAULT_KAPPA,
    GUARD_MODES,
    DeltaValidation,
    FourierTruncation,
    PerturbedOperator,
    assemble_perturbed,
    build_unperturbed,
    delta_from_hypothesis,
    draw_perturbation,
)
from .symbol import SpectralWindow, SymbolFunction

RECORDS = "records.csv"
SORTED_RECORDS = "records_sorted.csv"
MANIFEST = "manifest.json"
WORKERS_ENV = "PERTSPEC_WORKERS"
SUCCESS_THRESHOLD = 0.99


def default_pad_radius(h: float) -> float:
    """Largest pair radius studied by default, ``6 sqrt(h ln 1/h)``."""
    return float(6.0 * np.sqrt(h * np.log(1.0 / h)))


@dataclass(frozen=True)
class TrialConfig:
    g: SymbolFunction
    h: float
    window: SpectralWindow
    trials: int
    master_seed: int
    eps0_coeff: float = 6.0
    C1: float = DEFAULT_C1
    C_ball: float = DEFAULT_C_BALL
    guard_modes: int = GUARD_MODES
    kappa: float = DEFAULT_KAPPA
    h3_C: float = DEFAULT_H3_C
    pad_radius: float | None = None
    delta_override: float | None = None
    max_rejections: int = 1000
    dim_cap: int = DIM_CAP
    fault_injection: tuple[int, ...] = ()  # trial indices forced to fail (testing hook)

    # derived --------------------------------------------------------------------

    @property
    def pad(self) -> float:
        return default_pad_radius(self.h) if self.pad_radius is None else float(self.pad_radius)

    @property
    def padded_window(self) -> SpectralWindow:
        return self.window.dilate(self.pad)

    @property
    def truncation(self) -> FourierTruncation:
        return FourierTruncation.for_h(self.h, self.g, self.C1, self.guard_modes)

    def delta_validation(self) -> DeltaValidation:
        return delta_from_hypothesis(self.h, self.eps0_coeff, self.g, self.window, self.kappa, self.h3_C)

    @property
    def delta(self) -> float:
        if self.delta_override is not None:
            return float(self.delta_override)
        return self.delta_validation().delta

    def validate(self) -> DeltaValidation | None:
        """Run the symbol, window and coupling checks; raise on violation."""
        self.g.check_h1()
        self.window.validate(self.g)
        if self.trials < 0:
            raise ConfigError(f"trials must be non-negative, got {self.trials}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if self.delta_override is None:
            return self.delta_validation().require()
        return None

    def as_dict(self) -> dict:
        return {
            "symbol": self.g.to_triples(),
            "h": self.h,
            "window": list(self.window.as_tuple()),
            "window_margin": self.window.margin,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "eps0_coeff": self.eps0_coeff,
            "C1": self.C1,
            "C_ball": self.C_ball,
            "guard_modes": self.guard_modes,
            "kappa": self.kappa,
            "h3_C": self.h3_C,
            "pad_radius": self.pad,
            "delta_override": self.delta_override,
            "max_rejections": self.max_rejections,
            "dim_cap": self.dim_cap,
            "fault_injection": sorted(self.fault_injection),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def trial_seed(master_seed: int, trial_index: int, attempt: int = 0) -> int:
    """64-bit seed of the ``attempt``-th draw of trial ``trial_index``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index), int(attempt)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class EigenRecord:
    trial_index: int
    seed: int
    eigenvalues: np.ndarray
    rejection_count: int = 0
    wall_time: float = 0.0
    max_residual: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_line(self) -> str:
        parts = [str(self.trial_index), str(self.seed), str(len(self.eigenvalues))]
        for lam in self.eigenvalues:
            parts.append(repr(float(lam.real)))
            parts.append(repr(float(lam.imag)))
        return ",".join(parts) + "\n"

    @classmethod
    def from_line(cls, line: str) -> "EigenRecord":
        fields = line.rstrip("\n").split(",")
        i, seed, n = int(fields[0]), int(fields[1]), int(fields[2])
        vals = np.array(fields[3:], dtype=float)
        if vals.size != 2 * n:
            raise ValueError(f"record for trial {i} declares {n} eigenvalues, has {vals.size // 2}")
        return cls(trial_index=i, seed=seed, eigenvalues=vals[0::2] + 1j * vals[1::2])

    def meta(self) -> dict:
        return {
            "seed": self.seed,
            "n_eigs": int(len(self.eigenvalues)),
            "rejections": self.rejection_count,
            "wall_time": round(self.wall_time, 6),
            "max_residual": self.max_residual,
            "error": self.error,
        }


_P0_CACHE: dict[str, PerturbedOperator] = {}


def _unperturbed(config: TrialConfig) -> PerturbedOperator:
    key = config.config_hash()
    if key not in _P0_CACHE:
        _P0_CACHE.clear()
        _P0_CACHE[key] = build_unperturbed(config.g, config.h, config.truncation)
    return _P0_CACHE[key]


def run_trial(config: TrialConfig, trial_index: int, delta: float | None = None) -> EigenRecord:
    """One realization: draw (resampling rejected draws), assemble, solve, filter.

    Solver failures are returned in the record's ``error`` field rather than
    raised, so a batch can continue.
    """
    t_start = time.perf_counter()
    delta = config.delta if delta is None else delta
    seed = trial_seed(config.master_seed, trial_index, 0)
    rejections = 0
    try:
        if trial_index in config.fault_injection:
            raise PertspecError(f"injected failure for trial {trial_index}")
        P0 = _unperturbed(config)
        while True:
            seed = trial_seed(config.master_seed, trial_index, rejections)
            draw = draw_perturbation(seed, config.h, config.C1, config.C_ball)
            if draw.accepted:
                break
            rejections += 1
            if rejections > config.max_rejections:
                raise PertspecError(f"{rejections} consecutive ball rejections")
        op = assemble_perturbed(P0, draw, delta)
        eig = eigenvalues(op.matrix, cap=config.dim_cap)
        keep = config.padded_window.contains(eig.values)
        return EigenRecord(
            trial_index=trial_index,
            seed=seed,
            eigenvalues=eig.values[keep],
            rejection_count=rejections,
            wall_time=time.perf_counter() - t_start,
            max_residual=float(eig.max_relative_residual),
        )
    except PertspecError as exc:
        return EigenRecord(
            trial_index=trial_index,
            seed=seed,
            eigenvalues=np.empty(0, dtype=complex),
            rejection_count=rejections,
            wall_time=time.perf_counter() - t_start,
            error=f"{type(exc).__name__}: {exc}",
        )


# -- run directory -------------------------------------------------------------------


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


@dataclass
class RunManifest:
    config_hash: str
    trials: int
    version: str = __version__
    completed: list[int] = field(default_factory=list)
    failed: list[int] = field(default_factory=list)
    offset: int = 0
    header_offset: int = 0
    trial_meta: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    delta: float = 0.0

    @property
    def done(self) -> set[int]:
        return set(self.completed) | set(self.failed)

    @property
    def success_fraction(self) -> float:
        n = len(self.completed) + len(self.failed)
        return len(self.completed) / n if n else 1.0

    @property
    def finished(self) -> bool:
        return len(self.done) >= self.trials

    def to_json(self) -> str:
        d = {
            "config_hash": self.config_hash,
            "version": self.version,
            "trials": self.trials,
            "delta": self.delta,
            "completed": sorted(self.completed),
            "failed": sorted(self.failed),
            "records_offset": self.offset,
            "header_offset": self.header_offset,
            "trial_meta": {k: self.trial_meta[k] for k in sorted(self.trial_meta, key=int)},
            "config": self.config,
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            config_hash=d["config_hash"],
            trials=int(d["trials"]),
            version=d.get("version", ""),
            completed=[int(i) for i in d["completed"]],
            failed=[int(i) for i in d["failed"]],
            offset=int(d["records_offset"]),
            header_offset=int(d.get("header_offset", 0)),
            trial_meta=d.get("trial_meta", {}),
            config=d.get("config", {}),
            delta=float(d.get("delta", 0.0)),
        )

    def save(self, run_dir: Path) -> None:
        atomic_write_text(run_dir / MANIFEST, self.to_json())


def records_header(config_hash: str) -> str:
    return f"# config_hash={config_hash}\n# trial_index,seed,n_eigs,(re,im)*\n"


def _worker_init(threads: int) -> None:
    # every worker, and the inline path, run LAPACK single threaded so the
    # floating point result does not depend on the pool layout
    global _LIMITER
    _LIMITER = threadpool_limits(limits=threads)


_LIMITER = None


def _trial_job(config: TrialConfig, index: int, delta: float) -> EigenRecord:
    return run_trial(config, index, delta)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    return int(workers)


@dataclass
class RunResult:
    run_dir: Path
    manifest: RunManifest
    new_trials: int

    @property
    def exit_code(self) -> int:
        """0 all good, 4 some failures within tolerance, 3 too many failures."""
        if self.manifest.failed:
            return 4 if self.manifest.success_fraction >= SUCCESS_THRESHOLD else 3
        return 0


def _open_run_dir(run_dir: Path, config: TrialConfig, resume: bool, delta: float) -> RunManifest:
    h = config.config_hash()
    mpath = run_dir / MANIFEST
    rpath = run_dir / RECORDS
    if mpath.exists():
        manifest = RunManifest.from_json(mpath.read_text())
        if manifest.config_hash != h:
            raise IncompatibleManifest(
                f"{run_dir} holds a run with config hash {manifest.config_hash[:12]}, "
                f"requested {h[:12]}"
            )
        if not resume:
            raise IncompatibleManifest(f"{run_dir} already holds a run; pass --resume to continue it")
        # drop anything written after the last manifest flush
        with open(rpath, "r+b") as fh:
            fh.truncate(manifest.offset)
        return manifest
    run_dir.mkdir(parents=True, exist_ok=True)
    header = records_header(h)
    with open(rpath, "w") as fh:
        fh.write(header)
    manifest = RunManifest(
        config_hash=h, trials=config.trials, config=config.as_dict(), delta=delta,
        offset=len(header.encode()), header_offset=len(header.encode()),
    )
    manifest.save(run_dir)
    return manifest


def write_sorted_records(run_dir: Path) -> Path:
    """Canonical record file: header plus lines ordered by trial index."""
    rpath = run_dir / RECORDS
    manifest = RunManifest.from_json((run_dir / MANIFEST).read_text())
    with open(rpath, "rb") as fh:
        fh.seek(manifest.header_offset)
        body = fh.read(manifest.offset - manifest.header_offset).decode()
    lines = [ln + "\n" for ln in body.split("\n") if ln]
    by_index = {int(ln.split(",", 1)[0]): ln for ln in lines}
    text = records_header(manifest.config_hash) + "".join(by_index[i] for i in sorted(by_index))
    out = run_dir / SORTED_RECORDS
    atomic_write_text(out, text)
    return out


def run_batch(
    config: TrialConfig,
    run_dir: str | Path,
    workers: int | None = None,
    resume: bool = False,
    max_new_trials: int | None = None,
    flush_every: int = 50,
) -> RunResult:
    """Run all trials not yet recorded in ``run_dir``.

    ``max_new_trials`` stops early after that many new trials (used to
    simulate an interruption). The sorted record file is written once every
    trial index is accounted for.
    """
    run_dir = Path(run_dir)
    workers = resolve_workers(workers)
    config.validate()
    delta = config.delta
    manifest = _open_run_dir(run_dir, config, resume, delta)
    todo = [i for i in range(config.trials) if i not in manifest.done]
    if max_new_trials is not None:
        todo = todo[: max(0, int(max_new_trials))]

    rpath = run_dir / RECORDS
    fh = open(rpath, "ab")
    pending_flush = 0

    def commit(rec: EigenRecord) -> None:
        nonlocal pending_flush
        if rec.ok:
            fh.write(rec.to_line().encode())
            manifest.completed.append(rec.trial_index)
        else:
            manifest.failed.append(rec.trial_index)
        manifest.trial_meta[str(rec.trial_index)] = rec.meta()
        pending_flush += 1
        if pending_flush >= flush_every:
            flush()

    def flush() -> None:
        nonlocal pending_flush
        fh.flush()
        os.fsync(fh.fileno())
        manifest.offset = fh.tell()
        manifest.save(run_dir)
        pending_flush = 0

    try:
        if workers == 1 or len(todo) <= 1:
            with threadpool_limits(limits=1):
                for i in todo:
                    commit(run_trial(config, i, delta))
        else:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_worker_init, initargs=(1,)
            ) as pool:
                it = iter(todo)
                running = set()
                for i in it:
                    running.add(pool.submit(_trial_job, config, i, delta))
                    if len(running) >= 2 * workers:
                        break
                while running:
                    finished, running = wait(running, return_when=FIRST_COMPLETED)
                    for fut in sorted(finished, key=lambda f: f.result().trial_index):
                        commit(fut.result())
                        nxt = next(it, None)
                        if nxt is not None:
                            running.add(pool.submit(_trial_job, config, nxt, delta))
    finally:
        flush()
        fh.close()

    if manifest.finished:
        write_sorted_records(run_dir)
    return RunResult(run_dir=run_dir, manifest=manifest, new_trials=len(todo))


# -- reading ------------------------------------------------------------------------


@dataclass
class RecordSet:
    """Eigenvalue samples of the successful trials of one run."""

    config_hash: str
    records: list[EigenRecord]

    @property
    def trial_count(self) -> int:
        return len(self.records)

    def eigenvalue_lists(self) -> list[np.ndarray]:
        return [r.eigenvalues for r in self.records]


def read_records(path: str | Path, expected_hash: str | None = None) -> RecordSet:
    """Parse a record file; refuse it if its embedded hash differs from ``expected_hash``."""
    path = Path(path)
    if path.is_dir():
        path = path / (SORTED_RECORDS if (path / SORTED_RECORDS).exists() else RECORDS)
    config_hash = None
    recs = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# config_hash="):
                config_hash = line.strip().split("=", 1)[1]
            elif line.startswith("#") or not line.strip():
                continue
            else:
                recs.append(EigenRecord.from_line(line))
    if config_hash is None:
        raise IncompatibleManifest(f"{path} has no config hash header")
    if expected_hash is not None and expected_hash != config_hash:
        raise IncompatibleManifest(
            f"{path}: config hash {config_hash[:12]} does not match expected {expected_hash[:12]}"
        )
    recs.sort(key=lambda r: r.trial_index)
    return RecordSet(config_hash=config_hash, records=recs)


def records_from_memory(records: list[EigenRecord], config_hash: str = "") -> RecordSet:
    return RecordSet(config_hash=config_hash, records=sorted((r for r in records if r.ok), key=lambda r: r.trial_index))
