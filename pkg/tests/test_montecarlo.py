import json

import numpy as np
import pytest

from pertspec.errors import ConfigError, HypothesisViolation, IncompatibleManifest
from pertspec.montecarlo import (
    MANIFEST,
    RECORDS,
    SORTED_RECORDS,
    EigenRecord,
    RunManifest,
    TrialConfig,
    default_pad_radius,
    read_records,
    resolve_workers,
    run_batch,
    run_trial,
    trial_seed,
)
from pertspec.statistics import weyl_count
from pertspec.symbol import SpectralWindow, SymbolFunction, symplectic_volume

G = SymbolFunction.default()
OMEGA = SpectralWindow(-0.5, 0.5, -0.5, 0.5)


def cfg(trials=200, seed=11, h=0.02, **kw):
    return TrialConfig(g=G, h=h, window=OMEGA, trials=trials, master_seed=seed, **kw)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("full")
    res = run_batch(cfg(), d)
    return d, res


def test_trial_seed_properties():
    s = {trial_seed(5, i) for i in range(1000)}
    assert len(s) == 1000
    assert trial_seed(5, 3) == trial_seed(5, 3)
    assert trial_seed(5, 3, 1) != trial_seed(5, 3, 0)
    assert trial_seed(6, 3) != trial_seed(5, 3)
    assert all(0 <= v < 2**64 for v in s)


def test_config_defaults_and_validation():
    c = cfg()
    assert c.pad == pytest.approx(default_pad_radius(0.02))
    assert c.pad >= 6 * np.sqrt(0.02 * np.log(50)) - 1e-12
    assert c.truncation.dim == 219
    assert c.delta == pytest.approx(9.05e-12, rel=1e-3)
    c.validate()
    with pytest.raises(HypothesisViolation) as exc:
        cfg(h=0.05).validate()
    assert "H.3" in str(exc.value)
    with pytest.raises(ConfigError):
        cfg(seed=-1).validate()
    assert cfg(seed=1).config_hash() != cfg(seed=2).config_hash()
    assert cfg().config_hash() == cfg().config_hash()


def test_run_trial_deterministic():
    c = cfg()
    a, b = run_trial(c, 17), run_trial(c, 17)
    assert a.ok and a.to_line() == b.to_line()
    assert a.seed == trial_seed(c.master_seed, 17)
    assert len(a.eigenvalues) <= c.truncation.dim
    assert np.all(c.padded_window.contains(a.eigenvalues))
    order = np.lexsort((a.eigenvalues.imag, a.eigenvalues.real))
    assert np.array_equal(order, np.arange(len(order)))
    assert a.max_residual <= 1e-8
    assert run_trial(c, 18).to_line() != a.to_line()


def test_unperturbed_override():
    c = cfg(delta_override=0.0, trials=1)
    rec = run_trial(c, 0)
    k = np.arange(-c.truncation.M, c.truncation.M + 1)
    comb = 0.02 * k
    comb = comb[c.padded_window.contains(comb.astype(complex))]
    assert np.allclose(np.sort(rec.eigenvalues.real), np.sort(comb), atol=1e-12)
    assert np.all(rec.eigenvalues.imag == 0)


def test_record_roundtrip():
    rec = EigenRecord(3, 99, np.array([0.1 + 0.2j, -1 / 3 + 1e-17j]))
    back = EigenRecord.from_line(rec.to_line())
    assert back.trial_index == 3 and back.seed == 99
    assert np.array_equal(back.eigenvalues, rec.eigenvalues)
    with pytest.raises(ValueError):
        EigenRecord.from_line("1,2,3,0.1,0.2\n")


def test_weyl_count_two_hundred_trials(full_run):
    d, res = full_run
    assert res.exit_code == 0
    recs = read_records(d)
    assert recs.trial_count == 200
    mean, se = weyl_count(recs, OMEGA)
    expected = symplectic_volume(G, OMEGA) / (2 * np.pi * 0.02)
    assert abs(mean - expected) / expected < 0.1
    assert se > 0


def test_resume_matches_uninterrupted(full_run, tmp_path):
    d_full, _ = full_run
    c = cfg()
    first = run_batch(c, tmp_path, max_new_trials=50)
    assert first.new_trials == 50
    assert not (tmp_path / SORTED_RECORDS).exists()
    m1 = RunManifest.from_json((tmp_path / MANIFEST).read_text())
    # simulate a crash after the last manifest flush: garbage past the offset
    with open(tmp_path / RECORDS, "ab") as fh:
        fh.write(b"999,1,1,0.0,0.")
    second = run_batch(c, tmp_path, resume=True)
    assert second.new_trials == 150
    m2 = second.manifest
    assert set(m1.completed) <= set(m2.completed)
    assert sorted(m2.completed) == list(range(200))
    assert (tmp_path / SORTED_RECORDS).read_bytes() == (d_full / SORTED_RECORDS).read_bytes()
    again = run_batch(c, tmp_path, resume=True)
    assert again.new_trials == 0


def test_incompatible_manifest(full_run):
    d, _ = full_run
    with pytest.raises(IncompatibleManifest):
        run_batch(cfg(seed=12), d, resume=True)
    with pytest.raises(IncompatibleManifest):
        run_batch(cfg(), d)  # exists, no resume
    with pytest.raises(IncompatibleManifest):
        read_records(d, expected_hash="0" * 64)


def test_worker_counts_identical(tmp_path):
    c = cfg(trials=8, seed=3)
    a = run_batch(c, tmp_path / "w1", workers=1)
    b = run_batch(c, tmp_path / "w2", workers=2)
    assert a.exit_code == b.exit_code == 0
    assert (tmp_path / "w1" / SORTED_RECORDS).read_bytes() == (tmp_path / "w2" / SORTED_RECORDS).read_bytes()


def test_fault_injection_partial_success(tmp_path):
    c = cfg(trials=200, seed=5, fault_injection=(7,))
    res = run_batch(c, tmp_path, workers=1, flush_every=17)
    assert res.manifest.failed == [7]
    assert res.exit_code == 4
    meta = json.loads((tmp_path / MANIFEST).read_text())
    assert "injected" in meta["trial_meta"]["7"]["error"]
    recs = read_records(tmp_path)
    assert recs.trial_count == 199
    assert 7 not in [r.trial_index for r in recs.records]


def test_fault_injection_beyond_threshold(tmp_path):
    c = cfg(trials=40, seed=5, fault_injection=(1, 2))
    res = run_batch(c, tmp_path)
    assert res.exit_code == 3


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("PERTSPEC_WORKERS", raising=False)
    assert resolve_workers(None) == 1
    monkeypatch.setenv("PERTSPEC_WORKERS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    with pytest.raises(ConfigError):
        resolve_workers(0)
