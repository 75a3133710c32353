"""Experiment configuration: flat `key = value` files with one section level.

Every key has a default except the potential and the method; unknown keys are
rejected so typos surface as parse errors instead of silently ignored
settings.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .errors import ConfigError


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


@dataclass
class SystemConfig:
    potential: str = ""
    alpha: float = 0.0
    sigma: float = 0.7
    h: float = 1e-3
    steps: int = 10_000
    seed: int = 0


@dataclass
class DiscretizationConfig:
    domain: list = field(default_factory=lambda: [-2.0, 2.0, -2.0, 2.0])
    boxes: list = field(default_factory=lambda: [32, 32])
    test_points: int = 100
    basis_order: int = 3
    samples: int = 10_000


@dataclass
class SolverConfig:
    theta: float = 0.99
    eps: float = 1e-10
    rank_cap: int = 0  # 0 means unlimited
    max_iters: int = 500
    tol: float = 1e-8
    n_eigs: int = 1


@dataclass
class OutputConfig:
    directory: str = "."


@dataclass
class ExperimentConfig:
    method: str = ""
    operator: str = "pf"  # pf | koopman
    system: SystemConfig = field(default_factory=SystemConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        if not self.system.potential:
            raise ConfigError("system.potential is required")
        if self.method not in ("ulam", "edmd"):
            raise ConfigError(
                f"run.method must be 'ulam' or 'edmd', got {self.method!r}"
            )
        if self.operator not in ("pf", "koopman"):
            raise ConfigError(
                f"run.operator must be 'pf' or 'koopman', got {self.operator!r}"
            )
        d = len(self.discretization.domain)
        if d % 2 != 0 or d == 0:
            raise ConfigError("discretization.domain needs pairs of bounds")
        return self

    def as_dict(self) -> dict:
        out = {"run": {"method": self.method, "operator": self.operator}}
        for name in ("system", "discretization", "solver", "output"):
            block = getattr(self, name)
            out[name] = {f.name: getattr(block, f.name) for f in fields(block)}
        return out


_LIST_KEYS = {
    ("discretization", "domain"): _parse_floats,
    ("discretization", "boxes"): _parse_ints,
}

_SECTIONS = {
    "system": SystemConfig,
    "discretization": DiscretizationConfig,
    "solver": SolverConfig,
    "output": OutputConfig,
}


def _coerce(section: str, key: str, raw: str, target_type):
    if (section, key) in _LIST_KEYS:
        return _LIST_KEYS[(section, key)](raw)
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {section}.{key} = {raw!r}") from exc


def load_config(source) -> ExperimentConfig:
    """Parse a config file (path, text, or file object) into ExperimentConfig."""
    if hasattr(source, "read"):
        text = source.read()
    elif "\n" in str(source) or "=" in str(source):
        text = str(source)
    else:
        with open(source) as fh:
            text = fh.read()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    cfg = ExperimentConfig()
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items(section):
                if key not in ("method", "operator"):
                    raise ConfigError(f"unknown config key run.{key}")
                setattr(cfg, key, raw.strip())
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        block = getattr(cfg, section)
        known = {f.name: f.type for f in fields(block)}
        types = {f.name: type(getattr(block, f.name)) for f in fields(block)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(block, key, _coerce(section, key, raw.strip(), types[key]))
    return cfg


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply `section.key=value` strings on top of a parsed config."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form section.key=value")
        dotted, raw = pair.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} needs a section prefix")
        section, key = dotted.strip().split(".", 1)
        if section == "run":
            if key not in ("method", "operator"):
                raise ConfigError(f"unknown config key run.{key}")
            setattr(cfg, key, raw.strip())
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        block = getattr(cfg, section)
        names = {f.name for f in fields(block)}
        if key not in names:
            raise ConfigError(f"unknown config key {section}.{key}")
        target = type(getattr(block, key))
        setattr(block, key, _coerce(section, key, raw.strip(), target))
    return cfg
