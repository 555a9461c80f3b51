"""Declarative experiment configuration.

Experiments are described by a single JSON file with fixed sections; unknown
keys anywhere are errors (typos must not silently fall back to defaults).
Validation failures carry the dotted path of the offending field so the CLI
can report it and exit with the dedicated config-error status.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "PriorConfig",
    "EnsembleConfig",
    "FlowConfig",
    "IntegratorConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _check_section(data: dict, path: str, allowed: set[str]):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")


def _number(data, key, path, default, minimum=None, maximum=None, strict_min=False):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
    value = float(value)
    if minimum is not None and (value <= minimum if strict_min else value < minimum):
        op = ">" if strict_min else ">="
        raise ConfigError(f"{path}.{key}", f"must be {op} {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{path}.{key}", f"must be <= {maximum}, got {value}")
    return value


def _integer(data, key, path, default, minimum=None):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _choice(data, key, path, default, choices):
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {sorted(choices)}, got {value!r}")
    return value


def _boolean(data, key, path, default):
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {value!r}")
    return value


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "darcy"
    refinement: int = 6
    n_obs: int = 31
    noise: float = 0.01
    n_param: int = 10  # linear problems only

    @classmethod
    def from_dict(cls, data: dict, path: str = "problem"):
        _check_section(data, path, {"kind", "refinement", "n_obs", "noise", "n_param"})
        kind = _choice(data, "kind", path, "darcy", {"darcy", "linear"})
        cfg = cls(
            kind=kind,
            refinement=_integer(data, "refinement", path, 6, minimum=2),
            n_obs=_integer(data, "n_obs", path, 31 if kind == "darcy" else 0, minimum=0),
            noise=_number(data, "noise", path, 0.01, minimum=0.0, strict_min=True),
            n_param=_integer(data, "n_param", path, 10, minimum=2),
        )
        if kind == "darcy":
            total = 2**cfg.refinement
            if cfg.n_obs < 1:
                raise ConfigError(f"{path}.n_obs", "must be >= 1 for darcy problems")
            if total % (cfg.n_obs + 1) != 0:
                raise ConfigError(
                    f"{path}.n_obs",
                    f"n_obs+1 = {cfg.n_obs + 1} must divide 2**refinement = {total}",
                )
        return cfg


@dataclass(frozen=True)
class PriorConfig:
    amplitude: float = 10.0
    exponent: float = 1.0
    truth_amplitude: float | None = None
    truth_exponent: float | None = None

    @classmethod
    def from_dict(cls, data: dict, path: str = "prior"):
        _check_section(
            data, path, {"amplitude", "exponent", "truth_amplitude", "truth_exponent"}
        )
        amplitude = _number(data, "amplitude", path, 10.0, minimum=0.0, strict_min=True)
        exponent = _number(data, "exponent", path, 1.0, minimum=1.0)
        truth_amplitude = None
        if data.get("truth_amplitude") is not None:
            truth_amplitude = _number(data, "truth_amplitude", path, None, minimum=0.0, strict_min=True)
        truth_exponent = None
        if data.get("truth_exponent") is not None:
            truth_exponent = _number(data, "truth_exponent", path, None, minimum=1.0)
        return cls(amplitude, exponent, truth_amplitude, truth_exponent)

    def resolved_truth(self) -> tuple[float, float]:
        return (
            self.amplitude if self.truth_amplitude is None else self.truth_amplitude,
            self.exponent if self.truth_exponent is None else self.truth_exponent,
        )


@dataclass(frozen=True)
class EnsembleConfig:
    size: int = 5
    init: str = "basis"
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict, path: str = "ensemble"):
        _check_section(data, path, {"size", "init", "seed"})
        return cls(
            size=_integer(data, "size", path, 5, minimum=2),
            init=_choice(data, "init", path, "basis", {"basis", "random"}),
            seed=_integer(data, "seed", path, 0, minimum=0),
        )


@dataclass(frozen=True)
class FlowConfig:
    rho: float = 0.0
    kappa: float = 1.0
    adaptive: bool = False
    bound: float = 1e6
    theta_rate: float = 1.0
    per_particle: bool = False

    @classmethod
    def from_dict(cls, data: dict, path: str = "flow"):
        _check_section(
            data, path, {"rho", "kappa", "adaptive", "bound", "theta_rate", "per_particle"}
        )
        rho = _number(data, "rho", path, 0.0, minimum=0.0)
        if rho >= 1.0:
            raise ConfigError(f"{path}.rho", f"rho must be < 1, got {rho}")
        kappa = _number(data, "kappa", path, 1.0, minimum=0.0)
        adaptive = _boolean(data, "adaptive", path, False)
        if kappa == 0.0 and rho > 0.0 and not adaptive:
            raise ConfigError(f"{path}.kappa", "kappa = 0 with rho > 0 is not supported")
        return cls(
            rho=rho,
            kappa=kappa,
            adaptive=adaptive,
            bound=_number(data, "bound", path, 1e6, minimum=0.0, strict_min=True),
            theta_rate=_number(data, "theta_rate", path, 1.0, minimum=0.0, strict_min=True),
            per_particle=_boolean(data, "per_particle", path, False),
        )


@dataclass(frozen=True)
class IntegratorConfig:
    t_final: float = 1e4
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    checkpoints: int = 49
    max_steps: int = 1_000_000
    project: bool = False

    @classmethod
    def from_dict(cls, data: dict, path: str = "integrator"):
        _check_section(
            data,
            path,
            {"t_final", "rel_tol", "abs_tol", "checkpoints", "max_steps", "project"},
        )
        return cls(
            t_final=_number(data, "t_final", path, 1e4, minimum=0.0, strict_min=True),
            rel_tol=_number(data, "rel_tol", path, 1e-6, minimum=0.0, strict_min=True),
            abs_tol=_number(data, "abs_tol", path, 1e-9, minimum=0.0, strict_min=True),
            checkpoints=_integer(data, "checkpoints", path, 49, minimum=2),
            max_steps=_integer(data, "max_steps", path, 1_000_000, minimum=1),
            project=_boolean(data, "project", path, False),
        )


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv",)

    @classmethod
    def from_dict(cls, data: dict, path: str = "output"):
        _check_section(data, path, {"directory", "formats"})
        directory = data.get("directory", "out")
        if not isinstance(directory, str) or not directory:
            raise ConfigError(f"{path}.directory", "expected a nonempty string")
        formats = data.get("formats", ["csv"])
        if not isinstance(formats, list) or not formats:
            raise ConfigError(f"{path}.formats", "expected a nonempty list")
        for fmt in formats:
            if fmt not in {"csv", "npz"}:
                raise ConfigError(f"{path}.formats", f"unknown format {fmt!r}")
        return cls(directory=directory, formats=tuple(formats))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: dict):
        _check_section(
            data, "config", {"problem", "prior", "ensemble", "flow", "integrator", "output"}
        )
        cfg = cls(
            problem=ProblemConfig.from_dict(data.get("problem", {})),
            prior=PriorConfig.from_dict(data.get("prior", {})),
            ensemble=EnsembleConfig.from_dict(data.get("ensemble", {})),
            flow=FlowConfig.from_dict(data.get("flow", {})),
            integrator=IntegratorConfig.from_dict(data.get("integrator", {})),
            output=OutputConfig.from_dict(data.get("output", {})),
        )
        n_param = (
            cfg.problem.n_param
            if cfg.problem.kind == "linear"
            else 2**cfg.problem.refinement - 1
        )
        if cfg.ensemble.init == "basis" and cfg.ensemble.size > n_param:
            raise ConfigError(
                "ensemble.size",
                f"basis initialization needs size <= {n_param}, got {cfg.ensemble.size}",
            )
        if cfg.ensemble.size > n_param + 1:
            # a linearly independent ensemble needs its spread rank J - 1 <= n_x
            raise ConfigError(
                "ensemble.size",
                f"size must be <= {n_param + 1} for a {n_param}-dimensional problem",
            )
        return cfg

    def to_dict(self) -> dict:
        data = asdict(self)
        data["output"]["formats"] = list(self.output.formats)
        return data


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment configuration."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
