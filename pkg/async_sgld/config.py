# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Experiment configuration.

Config files are flat YAML mappings of the keys below to scalars or flow lists. Missing
keys take the potential's defaults, unknown keys are errors.
"""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union, get_type_hints

import yaml

from async_sgld.errors import ConfigError

logger = logging.getLogger(__name__)

POTENTIALS = ("quadratic", "regression", "rica")
SCHEMES = ("sim", "sync", "wcon", "wicon")

# regression and RICA defaults follow their reference protocols
POTENTIAL_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "quadratic": {
        "gamma": 0.01,
        "iterations": 20000,
        "sigma": 1.0,
        "batch": None,
        "mode_method": "gd",
    },
    "regression": {
        "gamma": 0.01,
        "iterations": 50000,
        "sigma": 0.1,
        "batch": 100000,
        "mode_method": "newton",
    },
    "rica": {
        "gamma": 0.002,
        "iterations": 50000,
        "sigma": 0.1,
        "batch": 1000,
        "mode_method": "lbfgs",
    },
}

# keys that do not change the sampled distribution or the data
_DIGEST_EXCLUDED = ("out",)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.

    Fields left as None take the potential's entry in `POTENTIAL_DEFAULTS`.
    """

    potential: str = "quadratic"
    quadratic_diag: Tuple[float, ...] = (1.0, 4.0)
    quadratic_b: Optional[Tuple[float, ...]] = None
    quadratic_grad_noise: float = 0.0
    regression_coeffs: Tuple[float, ...] = (0.5, -1.0, 1.5, -0.5, 0.25)
    regression_samples: int = 100000
    regression_noise: float = 0.1
    regression_stream: bool = False
    rica_lambda: float = 0.4
    rica_data: str = "synthetic"
    rica_path: Optional[str] = None
    rica_dim: int = 4
    rica_patch: int = 4
    rica_samples: int = 2000

    scheme: str = "sim"
    workers: int = 1
    sigma: Optional[float] = None
    gamma: Optional[float] = None
    schedule: str = "constant"
    batch: Optional[int] = None
    iterations: Optional[int] = None
    wall_clock_s: Optional[float] = None
    plateau_window: int = 500
    plateau_tol: float = 1e-4
    delay_law: str = "fixed"
    delay_mode: str = "consistent"
    tau: int = 0
    tau_cap: Optional[int] = None
    sync_noise: str = "per_worker"
    read_lock: bool = False
    theory_mode: bool = False

    seed: int = 0
    x0: Optional[Tuple[float, ...]] = None
    mode_tol: float = 1e-7
    mode_max_iters: int = 100000
    mode_method: Optional[str] = None

    metric_every: int = 50
    w2_window: int = 500
    kl_bins: int = 16
    kl_max_dim: int = 2
    record_stride: int = 1
    wall_clock: bool = True
    eps: float = 0.1
    out: str = "runs/latest"

    def __post_init__(self):
        if self.potential not in POTENTIALS:
            raise ConfigError(f"potential must be one of {POTENTIALS}, got {self.potential!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.rica_data not in ("synthetic", "cifar10"):
            raise ConfigError(f"rica_data must be synthetic or cifar10, got {self.rica_data!r}")
        if self.rica_data == "cifar10" and self.potential == "rica" and not self.rica_path:
            raise ConfigError("rica_data: cifar10 needs rica_path")
        for name in ("workers", "plateau_window", "metric_every", "w2_window", "kl_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.record_stride < 1 or self.kl_max_dim < 1:
            raise ConfigError("record_stride and kl_max_dim must be >= 1")
        if self.tau < 0 or (self.tau_cap is not None and self.tau_cap < 0):
            raise ConfigError("tau and tau_cap must be nonnegative")
        for name, allowed in (
            ("delay_law", ("fixed", "uniform")),
            ("delay_mode", ("consistent", "inconsistent")),
            ("sync_noise", ("per_worker", "per_round")),
            ("schedule", ("constant", "invsqrt", "inverse")),
            ("mode_method", (None, "gd", "newton", "lbfgs")),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.mode_tol <= 0.0:
            raise ConfigError(f"mode_tol must be positive, got {self.mode_tol}")

    def resolved(self, key: str) -> Any:
        """Value of a potential-dependent key after defaults."""
        value = getattr(self, key)
        if value is None and key in POTENTIAL_DEFAULTS[self.potential]:
            return POTENTIAL_DEFAULTS[self.potential][key]
        return value

    def as_dict(self) -> Dict[str, Any]:
        """Plain mapping with tuples turned into lists."""
        return {
            k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()
        }

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring output paths."""
        payload = {k: v for k, v in self.as_dict().items() if k not in _DIGEST_EXCLUDED}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def potential_digest(self) -> str:
        """SHA-256 over the keys that define the potential and its data."""
        prefix = f"{self.potential}_"
        payload = {k: v for k, v in self.as_dict().items() if k.startswith(prefix)}
        payload["potential"] = self.potential
        if self.potential != "quadratic":
            payload["seed"] = self.seed
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


_HINTS = get_type_hints(ExperimentConfig)


def _coerce(name: str, value: Any) -> Any:
    hint = _HINTS[name]
    optional = getattr(hint, "__origin__", None) is Union and type(None) in hint.__args__
    if optional:
        if value is None:
            return None
        hint = next(arg for arg in hint.__args__ if arg is not type(None))
    if value is None:
        raise ConfigError(f"{name} may not be empty")

    if getattr(hint, "__origin__", None) in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list of numbers, got {value!r}")
        return tuple(_number(name, v) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if hint is float:
        return _number(name, value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    raise ConfigError(f"unsupported type for {name}")


def _number(name: str, value: Any) -> float:
    # YAML 1.1 reads 1e-4 (no dot) as a string
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def config_from_mapping(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a flat mapping and build the config."""
    unknown = sorted(set(raw) - set(_HINTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{key}: nested mappings are not allowed")
    return ExperimentConfig(**{key: _coerce(key, value) for key, value in raw.items()})


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Read a config file (or start from defaults) and apply command-line overrides."""
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must hold a mapping of config keys")
        raw.update(loaded)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = config_from_mapping(raw)
    logger.debug("loaded config", extra={"digest": config.digest, "source": str(path)})
    return config


def dump_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    """Write the config as a flat YAML mapping."""
    Path(path).write_text(yaml.safe_dump(config.as_dict(), sort_keys=True))
