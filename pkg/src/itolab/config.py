"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma separated,
and a momentum mode in ``d > 1`` is written as space-separated integers
(``probe.core.eta_modes = 0 0, 1 0``). Every key in ``SCHEMA`` without a
default is required. A run manifest (JSON) is accepted wherever a config file
is: its stored config text is parsed instead.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .compensator import ProbeSpec
from .correlation import CorrelationModel
from .exceptions import ConfigError, ProbeError
from .initial import GaussianBump
from .kinetic import SeriesConfig
from .lattice import GridSpec

REQUIRED = object()

# key -> (parser name, default)
SCHEMA = {
    "dimension": ("int", REQUIRED),
    "corr.family": ("str", REQUIRED),
    "corr.amplitude": ("float", REQUIRED),
    "corr.length": ("float", REQUIRED),
    "init.amplitude": ("float", REQUIRED),
    "init.center": ("floats", REQUIRED),
    "init.width": ("float", REQUIRED),
    "grid.L": ("float", REQUIRED),
    "grid.N": ("int", REQUIRED),
    "grid.dt": ("auto_float", REQUIRED),
    "grid.k_active": ("auto_float", "auto"),
    "grid.T": ("float", REQUIRED),
    "eps": ("floats", REQUIRED),
    "seed": ("int", REQUIRED),
    "replicas": ("int", REQUIRED),
    "block_size": ("int", 500),
    "probes": ("names", REQUIRED),
    "kinetic.method": ("str", "all"),
    "kinetic.max_order": ("auto_int", "auto"),
    "kinetic.samples": ("int", REQUIRED),
    "kinetic.mc_samples": ("int", REQUIRED),
    "kinetic.grid_N": ("int", REQUIRED),
    "kinetic.dt": ("float", REQUIRED),
    "kinetic.tail_tol": ("float", 1e-6),
    "kinetic.xi": ("floats", REQUIRED),
    "kinetic.times": ("floats", REQUIRED),
    "ou.replicas": ("int", REQUIRED),
    "ou.dt": ("float", REQUIRED),
    "ou.psd_tol": ("float", 1e-6),
    "ou.eps": ("auto_float", "auto"),
    "verify.identity_eps": ("float", REQUIRED),
    "verify.covariance_probe": ("str", REQUIRED),
    "verify.gaussian_probe": ("str", REQUIRED),
    "verify.q_probe": ("str", REQUIRED),
    "verify.fourth_probe": ("str", REQUIRED),
    "verify.fourth_pair": ("ints", REQUIRED),
    "verify.alpha": ("float", 0.01),
    "verify.norm_tol": ("float", 1e-10),
}
PROBE_KEYS = {"xi_mode": "modes", "eta_modes": "modes", "times": "floats"}


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _modes(v):
    return tuple(tuple(int(c) for c in item.split()) for item in v.split(",") if item.strip())


PARSERS = {
    "int": lambda v: int(v),
    "float": lambda v: float(v),
    "str": lambda v: v.strip(),
    "floats": _floats,
    "ints": lambda v: tuple(int(x) for x in v.split(",") if x.strip()),
    "names": lambda v: tuple(x.strip() for x in v.split(",") if x.strip()),
    "modes": _modes,
    "auto_float": lambda v: None if v.strip() == "auto" else float(v),
    "auto_int": lambda v: None if v.strip() == "auto" else int(v),
}


def parse_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


@dataclass
class ExperimentConfig:
    """Validated configuration plus the verbatim text it came from."""

    values: dict
    text: str
    source: str = ""
    probes: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    # ---- builders -------------------------------------------------------
    def model(self) -> CorrelationModel:
        return CorrelationModel(self["dimension"], self["corr.amplitude"], self["corr.length"],
                                self["corr.family"])

    def initial(self) -> GaussianBump:
        center = self["init.center"]
        if len(center) != self["dimension"]:
            raise ConfigError("init.center must have 'dimension' components")
        return GaussianBump(self["init.amplitude"], center, self["init.width"])

    def probe_times(self):
        return sorted({t for p in self.probes.values() for t in p.times})

    def k_active(self) -> float:
        if self["grid.k_active"] is not None:
            return self["grid.k_active"]
        init, model = self.initial(), self.model()
        return max(abs(c) for c in init.center) + 6 * init.width + 6 * model.jump_std()

    def grid(self, eps: float, scaling: str = "scaled") -> GridSpec:
        kw = dict(dimension=self["dimension"], box_length=self["grid.L"], modes=self["grid.N"],
                  horizon=self["grid.T"], scaling=scaling)
        if self["grid.dt"] is None:
            return GridSpec.with_auto_dt(eps, k_active=self.k_active(),
                                         probe_times=self.probe_times(), **kw)
        return GridSpec(dt=self["grid.dt"], eps=eps, **kw)

    def series_config(self) -> SeriesConfig:
        return SeriesConfig(self["kinetic.max_order"], self["kinetic.samples"],
                            self["kinetic.tail_tol"], seed=derived_seed(self["seed"], "series"))

    def ou_eps(self) -> float:
        return self["ou.eps"] if self["ou.eps"] is not None else self["eps"][-1]


def derived_seed(base: int, *tags) -> int:
    """Deterministic 63-bit seed for a named sub-task of a run."""
    h = hashlib.sha256(repr((int(base),) + tags).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def rung_seed(base: int, eps: float) -> int:
    return derived_seed(base, "rung", f"{eps:.12g}")


def from_text(text: str, source: str = "") -> ExperimentConfig:
    raw = parse_text(text)
    values = {}
    for key, (kind, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = PARSERS[kind](raw[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: cannot parse {raw[key]!r} ({exc})") from None
        elif default is REQUIRED:
            raise ConfigError(f"missing config key {key!r}")
        else:
            values[key] = PARSERS[kind](str(default))
    probes = {}
    for name in values["probes"]:
        spec = {}
        for sub, kind in PROBE_KEYS.items():
            key = f"probe.{name}.{sub}"
            if key not in raw:
                raise ConfigError(f"missing config key {key!r}")
            spec[sub] = PARSERS[kind](raw[key])
        if len(spec["xi_mode"]) != 1:
            raise ConfigError(f"probe.{name}.xi_mode must be a single mode")
        probes[name] = ProbeSpec(spec["xi_mode"][0], spec["eta_modes"], spec["times"], label=name)
    known = set(SCHEMA) | {f"probe.{n}.{s}" for n in probes for s in PROBE_KEYS}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = ExperimentConfig(values, text, source, probes)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    v = cfg.values
    if not v["eps"]:
        raise ConfigError("eps ladder is empty")
    if any(not 0 < e <= 1 for e in v["eps"]):
        raise ConfigError("eps values must lie in (0, 1]")
    if list(v["eps"]) != sorted(v["eps"], reverse=True):
        raise ConfigError("eps ladder must be decreasing")
    if v["replicas"] < 1 or v["ou.replicas"] < 1:
        raise ConfigError("replica counts must be positive")
    if v["kinetic.method"] not in ("all", "mc", "series", "grid"):
        raise ConfigError("kinetic.method must be one of all, mc, series, grid")
    for key in ("verify.covariance_probe", "verify.gaussian_probe", "verify.q_probe",
                "verify.fourth_probe"):
        if v[key] not in cfg.probes:
            raise ConfigError(f"{key} names unknown probe {v[key]!r}")
    pair = v["verify.fourth_pair"]
    n_eta = cfg.probes[v["verify.fourth_probe"]].n_eta
    if len(pair) != 2 or any(not 0 <= j < n_eta for j in pair):
        raise ConfigError("verify.fourth_pair must be two eta indices of the fourth-moment probe")
    if v["verify.identity_eps"] not in v["eps"]:
        raise ConfigError("verify.identity_eps must be one of the eps ladder values")
    if cfg.ou_eps() not in v["eps"]:
        raise ConfigError("ou.eps must be one of the eps ladder values")
    T = v["grid.T"]
    for name, p in cfg.probes.items():
        if any(t <= 0 or t > T for t in p.times):
            raise ConfigError(f"probe.{name}.times must lie in (0, grid.T]")
        if any(len(m) != v["dimension"] for m in p.eta_modes + (p.xi_mode,)):
            raise ConfigError(f"probe.{name} modes must have 'dimension' components")
    for t in set(v["kinetic.times"]) | set(cfg.probe_times()):
        r = t / v["kinetic.dt"]
        if abs(r - round(r)) > 1e-9 * max(r, 1):
            raise ConfigError(f"time {t} is not a multiple of kinetic.dt")
        r = t / v["ou.dt"]
        if abs(r - round(r)) > 1e-9 * max(r, 1):
            raise ConfigError(f"time {t} is not a multiple of ou.dt")
    if math.isnan(v["corr.amplitude"]) or v["corr.amplitude"] < 0:
        raise ConfigError("corr.amplitude must be nonnegative")
    # builders raise ConfigError on their own invariants
    cfg.model()
    cfg.initial()
    for e in v["eps"]:
        g = cfg.grid(e)
        for name, p in cfg.probes.items():
            try:
                p.validate(g)
            except ProbeError as exc:
                raise ConfigError(f"probe.{name} at eps={e:g}: {exc}") from None


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            text = json.loads(text)["config_text"]
        except (ValueError, KeyError):
            raise ConfigError(f"{path} is not a run manifest") from None
    return from_text(text, str(path))


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Re-parse with ``key = value`` lines replaced (keeps the text the source of truth)."""
    lines = []
    raw = parse_text(cfg.text)
    raw.update({k: str(v) for k, v in overrides.items() if v is not None})
    for k, v in raw.items():
        lines.append(f"{k} = {v}")
    return from_text("\n".join(lines) + "\n", cfg.source)
