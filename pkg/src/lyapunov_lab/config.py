"""Experiment configuration: INI files parsed into dataclasses.

Grammar (``configparser`` syntax, ``#`` or ``;`` comments, keys are
case-insensitive, lists are comma separated)::

    [experiment]   kind, seed, out
    [grid]         cells, length
    [time]         t_final, dt, dt_safety, record_every
    [model]        sigma, kappa, thermo, drift, bath_temperature, left, right
    [initial]      profile, amplitude, mode, value, seed_offset
    [lattice]      sites, rate, z_left, z_right, burn_in, thin, samples, batches
    [ldf]          coarse_cells, ratios, sizes
    [kinetic]      nodes, v_max, dimension, tau, dt, steps, replicas
    [sweep]        cells

Unknown sections or keys are rejected so that typos surface as errors.
Model names are resolved by :mod:`lyapunov_lab.models`.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

KINDS = ("heat-closed", "heat-bath", "zrp-pde", "zrp-pde-drift", "bgk", "zrp-mc", "ldf-check", "functional-eval")
STOCHASTIC_KINDS = ("zrp-mc", "bgk")
PROFILES = ("uniform", "sin", "random", "step")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class GridConfig:
    cells: int = 100
    length: float = 1.0


@dataclass
class TimeConfig:
    t_final: float = 0.01
    dt: float | None = None
    dt_safety: float = 0.4
    record_every: int = 1


@dataclass
class ModelConfig:
    sigma: str = "identity"
    kappa: str = "constant:1"
    thermo: str = "ideal:1"
    drift: float = 0.0
    bath_temperature: float | None = None
    left: float = 1.0
    right: float = 2.0


@dataclass
class InitialConfig:
    profile: str = "sin"
    amplitude: float = 0.3
    mode: int = 1
    value: float = 1.0
    seed_offset: int = 0


@dataclass
class LatticeConfig:
    sites: int = 32
    rate: str = "linear"
    z_left: float = 1.0
    z_right: float = 2.0
    burn_in: float = 5000.0
    thin: float = 512.0
    samples: int = 2000
    batches: int = 50


@dataclass
class LdfConfig:
    coarse_cells: int = 2
    ratios: tuple = (0.5, 2.0)
    sizes: tuple = (16, 32, 64, 128)


@dataclass
class KineticConfig:
    nodes: int = 64
    v_max: float = 8.0
    dimension: int = 1
    tau: float = 1.0
    dt: float = 0.5
    steps: int = 1000
    replicas: int = 1


@dataclass
class SweepConfig:
    cells: tuple = (25, 50, 100, 200)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int | None = None
    out: str = "runs"
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    ldf: LdfConfig = field(default_factory=LdfConfig)
    kinetic: KineticConfig = field(default_factory=KineticConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError("experiment.kind", f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind in STOCHASTIC_KINDS and self.seed is None:
            raise ConfigError("experiment.seed", f"a seed is required for {self.kind}")
        _positive("grid.cells", self.grid.cells)
        if self.grid.cells < 3:
            raise ConfigError("grid.cells", "need at least 3 cells")
        _positive("grid.length", self.grid.length)
        _positive("time.t_final", self.time.t_final)
        if self.time.dt is not None:
            _positive("time.dt", self.time.dt)
        if not 0 < self.time.dt_safety <= 0.5:
            raise ConfigError("time.dt_safety", "must lie in (0, 0.5]")
        _positive("time.record_every", self.time.record_every)
        if self.initial.profile not in PROFILES:
            raise ConfigError("initial.profile", f"unknown profile {self.initial.profile!r}; expected one of {', '.join(PROFILES)}")
        if not 0 <= self.initial.amplitude < 1:
            raise ConfigError("initial.amplitude", "relative amplitude must lie in [0, 1)")
        _positive("initial.value", self.initial.value)
        if self.kind == "heat-bath":
            if self.model.bath_temperature is None:
                raise ConfigError("model.bath_temperature", "required for heat-bath")
            _positive("model.bath_temperature", self.model.bath_temperature)
        for name in ("left", "right"):
            _positive(f"model.{name}", getattr(self.model, name))
        if self.kind == "zrp-pde-drift" and self.model.drift == 0:
            raise ConfigError("model.drift", "zrp-pde-drift needs a nonzero drift")
        lat = self.lattice
        for name in ("sites", "samples", "batches"):
            _positive(f"lattice.{name}", getattr(lat, name))
        for name in ("z_left", "z_right", "burn_in", "thin"):
            _positive(f"lattice.{name}", getattr(lat, name))
        if lat.samples < 2 * lat.batches:
            raise ConfigError("lattice.samples", "need at least two samples per batch")
        _positive("ldf.coarse_cells", self.ldf.coarse_cells)
        if len(self.ldf.ratios) != self.ldf.coarse_cells:
            raise ConfigError("ldf.ratios", "need one ratio per coarse cell")
        for r in self.ldf.ratios:
            _positive("ldf.ratios", r)
        for k in self.ldf.sizes:
            _positive("ldf.sizes", k)
        kin = self.kinetic
        for name in ("nodes", "v_max", "tau", "dt", "steps", "replicas"):
            _positive(f"kinetic.{name}", getattr(kin, name))
        if kin.dimension not in (1, 2, 3):
            raise ConfigError("kinetic.dimension", "must be 1, 2 or 3")
        if kin.dt > kin.tau:
            raise ConfigError("kinetic.dt", "must not exceed kinetic.tau")
        if len(self.sweep.cells) < 2:
            raise ConfigError("sweep.cells", "need at least two resolutions")
        for n in self.sweep.cells:
            if n < 3:
                raise ConfigError("sweep.cells", "need at least 3 cells per resolution")
        return self


def _positive(name: str, value) -> None:
    if value is None or not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")


_SECTIONS = {
    "grid": GridConfig,
    "time": TimeConfig,
    "model": ModelConfig,
    "initial": InitialConfig,
    "lattice": LatticeConfig,
    "ldf": LdfConfig,
    "kinetic": KineticConfig,
    "sweep": SweepConfig,
}


def _convert(name: str, raw: str, default: Any, annotation: str):
    raw = raw.strip()
    try:
        if "None" in annotation and raw.lower() in ("", "none", "auto"):
            return None
        if "tuple" in annotation:
            items = [x.strip() for x in raw.split(",") if x.strip()]
            cast = int if default and isinstance(default[0], int) else float
            return tuple(cast(x) for x in items)
        if annotation.startswith("int"):
            return int(raw)
        if annotation.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r} as {annotation}") from None


def _fill(section_name: str, cls, items: dict):
    obj = cls()
    known = {f.name: f for f in fields(cls)}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{section_name}.{key}", f"unknown key; known keys: {', '.join(known)}")
        f = known[key]
        setattr(obj, key, _convert(f"{section_name}.{key}", raw, getattr(obj, key), str(f.type)))
    return obj


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    if not cp.has_section("experiment"):
        raise ConfigError("experiment", "missing [experiment] section")
    exp = dict(cp.items("experiment"))
    for key in exp:
        if key not in ("kind", "seed", "out"):
            raise ConfigError(f"experiment.{key}", "unknown key; known keys: kind, seed, out")
    if "kind" not in exp:
        raise ConfigError("experiment.kind", "missing")
    seed = _convert("experiment.seed", exp["seed"], None, "int | None") if "seed" in exp else None
    kwargs = {}
    for name in cp.sections():
        if name == "experiment":
            continue
        if name not in _SECTIONS:
            raise ConfigError(name, f"unknown section; known sections: experiment, {', '.join(_SECTIONS)}")
        kwargs[name] = _fill(name, _SECTIONS[name], dict(cp.items(name)))
    cfg = ExperimentConfig(kind=exp["kind"].strip(), seed=seed, out=exp.get("out", "runs").strip(), **kwargs)
    return cfg.validate()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def default_config(kind: str) -> ExperimentConfig:
    """Built-in defaults for ``kind`` (used when no file is given)."""
    cfg = ExperimentConfig(kind=kind)
    if kind == "heat-bath":
        cfg.model.bath_temperature = 1.5
    if kind == "zrp-pde-drift":
        cfg.model.drift = 1.0
    if kind in STOCHASTIC_KINDS:
        cfg.seed = 0
    return cfg.validate()
