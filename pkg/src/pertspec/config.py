"""INI run configuration.

Schema (all keys optional; defaults shown)::

    [symbol]
    # one "mode, re, im" triple per line or separated by ';'
    coefficients = 1, 1.0, 0.0

    [operator]
    h = 0.02
    C1 = 2.0
    C_ball = 8.0
    guard_modes = 8
    eps0_coeff = 6.0
    kappa = 5.1
    h3_C = 1.0
    # delta = 0      (override; skips the coupling check)

    [window]
    re_lo = -0.5
    re_hi = 0.5
    im_lo = -0.5
    im_hi = 0.5
    margin = 0.1

    [monte_carlo]
    trials = 2000
    master_seed = 20261014
    # pad_radius = 6 sqrt(h ln 1/h) when omitted
    max_rejections = 1000
    workers = 1

    [statistics]
    r_bins = 24
    r_lo_factor = 0.1
    r_hi_factor = 6.0
    normalization = mixed
    shifts = 20
    intensity_bins = 8, 8
    c_norm = 1.0

    [gramian]
    h_values = 0.1, 0.05
    pairs = 48
    seed = 7
    r_lo = 0.5
    r_hi = 3.0
    center = 0.013, 0.0
    spread = 0.1
    max_separation = 0.5

    [pseudospectrum]
    h = 0.05
    re_lo = -1.0
    re_hi = 1.0
    im_lo = -0.9
    im_hi = 0.9
    n_re = 40
    n_im = 36

    [theory]
    h = 0.01
    w0 = 0.0, 0.0
    r_max_factor = 3.0
    points = 200

    [output]
    dir = pertspec-out

The config hash covers every key that influences numerical output; worker
count and output directory are excluded.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .montecarlo import TrialConfig
from .symbol import SpectralWindow, SymbolFunction

DEFAULTS: dict[str, dict[str, str]] = {
    "symbol": {"coefficients": "1, 1.0, 0.0"},
    "operator": {
        "h": "0.02", "C1": "2.0", "C_ball": "8.0", "guard_modes": "8", "eps0_coeff": "6.0",
        "kappa": "5.1", "h3_C": "1.0", "delta": "",
    },
    "window": {"re_lo": "-0.5", "re_hi": "0.5", "im_lo": "-0.5", "im_hi": "0.5", "margin": "0.1"},
    "monte_carlo": {
        "trials": "2000", "master_seed": "20261014", "pad_radius": "", "max_rejections": "1000",
        "workers": "1", "fault_injection": "",
    },
    "statistics": {
        "r_bins": "24", "r_lo_factor": "0.1", "r_hi_factor": "6.0", "normalization": "mixed",
        "shifts": "20", "intensity_bins": "8, 8", "c_norm": "1.0",
    },
    "gramian": {
        "h_values": "0.1, 0.05", "pairs": "48", "seed": "7", "r_lo": "0.5", "r_hi": "3.0",
        "center": "0.013, 0.0", "spread": "0.1", "max_separation": "0.5",
    },
    "pseudospectrum": {
        "h": "0.05", "re_lo": "-1.0", "re_hi": "1.0", "im_lo": "-0.9", "im_hi": "0.9",
        "n_re": "40", "n_im": "36",
    },
    "theory": {"h": "0.01", "w0": "0.0, 0.0", "r_max_factor": "3.0", "points": "200"},
    "output": {"dir": "pertspec-out"},
}

_NOT_HASHED = {("monte_carlo", "workers"), ("output", "dir")}


def _floats(text: str, n: int | None = None) -> list[float]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


def parse_triples(text: str) -> list[tuple[int, float, float]]:
    out = []
    for chunk in text.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = _floats(chunk, 3)
        if vals[0] != int(vals[0]):
            raise ConfigError(f"Fourier mode must be an integer: {chunk!r}")
        out.append((int(vals[0]), vals[1], vals[2]))
    if not out:
        raise ConfigError("symbol has no coefficients")
    return out


@dataclass
class RunConfig:
    """Parsed configuration; ``values`` holds every section as strings."""

    values: dict[str, dict[str, str]]
    source: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # construction ---------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, source: str | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # keep key case (C1, C_ball)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        values = {s: dict(d) for s, d in DEFAULTS.items()}
        for section in cp.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown section [{section}]")
            for key, val in cp.items(section):
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[section][key] = val.strip()
        return cls(values=values, source=source)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, str(path))

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_text("")

    def override(self, section: str, key: str, value) -> "RunConfig":
        if key not in DEFAULTS.get(section, {}):
            raise ConfigError(f"unknown key {section}.{key}")
        vals = {s: dict(d) for s, d in self.values.items()}
        vals[section][key] = str(value)
        return RunConfig(values=vals, source=self.source)

    def to_text(self) -> str:
        lines = []
        for section in DEFAULTS:
            lines.append(f"[{section}]")
            for key, val in self.values[section].items():
                if "\n" in val:
                    val = val.replace("\n", "; ")
                lines.append(f"{key} = {val}")
            lines.append("")
        return "\n".join(lines)

    # typed access ---------------------------------------------------------------

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def getfloat(self, section: str, key: str) -> float:
        try:
            return float(self.values[section][key])
        except ValueError as exc:
            raise ConfigError(f"{section}.{key} = {self.values[section][key]!r} is not a number") from exc

    def getint(self, section: str, key: str) -> int:
        try:
            return int(self.values[section][key])
        except ValueError as exc:
            raise ConfigError(f"{section}.{key} = {self.values[section][key]!r} is not an integer") from exc

    def optional_float(self, section: str, key: str) -> float | None:
        v = self.values[section][key]
        return None if v == "" else self.getfloat(section, key)

    def floats(self, section: str, key: str, n: int | None = None) -> list[float]:
        return _floats(self.values[section][key], n)

    def complex_value(self, section: str, key: str) -> complex:
        re, im = self.floats(section, key, 2)
        return complex(re, im)

    @property
    def symbol(self) -> SymbolFunction:
        if "symbol" not in self._cache:
            self._cache["symbol"] = SymbolFunction.from_triples(parse_triples(self.get("symbol", "coefficients")))
        return self._cache["symbol"]

    @property
    def window(self) -> SpectralWindow:
        f = lambda k: self.getfloat("window", k)  # noqa: E731
        try:
            return SpectralWindow(f("re_lo"), f("re_hi"), f("im_lo"), f("im_hi"), f("margin"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def h(self) -> float:
        h = self.getfloat("operator", "h")
        if not 0 < h < 1:
            raise ConfigError(f"operator.h must lie in (0, 1), got {h}")
        return h

    @property
    def workers(self) -> int:
        return self.getint("monte_carlo", "workers")

    @property
    def output_dir(self) -> Path:
        return Path(self.get("output", "dir"))

    def trial_config(self) -> TrialConfig:
        fi = self.get("monte_carlo", "fault_injection")
        return TrialConfig(
            g=self.symbol,
            h=self.h,
            window=self.window,
            trials=self.getint("monte_carlo", "trials"),
            master_seed=self.getint("monte_carlo", "master_seed"),
            eps0_coeff=self.getfloat("operator", "eps0_coeff"),
            C1=self.getfloat("operator", "C1"),
            C_ball=self.getfloat("operator", "C_ball"),
            guard_modes=self.getint("operator", "guard_modes"),
            kappa=self.getfloat("operator", "kappa"),
            h3_C=self.getfloat("operator", "h3_C"),
            pad_radius=self.optional_float("monte_carlo", "pad_radius"),
            delta_override=self.optional_float("operator", "delta"),
            max_rejections=self.getint("monte_carlo", "max_rejections"),
            fault_injection=tuple(int(v) for v in _floats(fi)) if fi else (),
        )

    def validate(self) -> None:
        """Symbol, window and coupling checks; raises ``HypothesisViolation``."""
        self.trial_config().validate()

    def canonical(self) -> dict:
        return {
            s: {k: v for k, v in sorted(d.items()) if (s, k) not in _NOT_HASHED}
            for s, d in sorted(self.values.items())
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
