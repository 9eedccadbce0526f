"""
Configuration management for the cooperative sensing simulator.

This module handles:
- Loading configuration from YAML or key=value files
- Merging default, user and command-line configuration
- Providing typed configuration access
- Validating configuration values
"""

import logging
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from modules.exceptions import ConfigError, SensingError
from modules.geometry import TopologySpec
from modules.waveform import PulseSpec

logger = logging.getLogger(__name__)

Capacity = Union[int, float]

TOPOLOGIES = ("circular", "linear")
QUANTIZERS = ("klt", "uniform")
DESIGNS = ("advanced", "baseline", "both")


@dataclass
class SystemConfig:
    """System-wide configuration parameters."""
    log_level: str = "INFO"
    log_file: str = "sensing.log"
    log_max_size_mb: int = 10
    log_backup_count: int = 5


@dataclass
class ProcessingConfig:
    """Worker pool and resource telemetry configuration."""
    num_workers: int = 0
    chunk_size: int = 4
    monitor_interval_sec: float = 5.0
    monitor_history_size: int = 100
    cpu_warning_percent: float = 95.0
    memory_warning_percent: float = 90.0


@dataclass
class ExperimentConfig:
    """Monte-Carlo experiment parameters; sweep axes are lists."""
    topology: str = "circular"
    n_receivers: int = 6
    radius: float = 500.0
    spacing: float = 100.0
    standoff: float = 500.0
    target_offset: float = 300.0
    rsnr: List[float] = field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0])
    capacity: List[Capacity] = field(default_factory=lambda: [10, math.inf])
    quantizer: List[str] = field(default_factory=lambda: ["klt"])
    design: str = "both"
    trials: int = 1000
    master_seed: int = 0
    pulse_width: float = 2e-8
    sampling_period: float = 1e-8
    pulse_duration: float = 6e-8
    observation_length: float = 8e-8
    carrier_ghz: float = 3.55
    bandwidth_hz: float = 5e7
    pulse_period: float = 1e-5
    noise_variance: float = 1.0

    @property
    def designs(self) -> List[str]:
        return ["advanced", "baseline"] if self.design == "both" else [self.design]

    def topology_spec(self) -> TopologySpec:
        return TopologySpec(kind=self.topology, n_receivers=self.n_receivers, radius=self.radius,
                            spacing=self.spacing, standoff=self.standoff, target_offset=self.target_offset)

    def pulse_spec(self) -> PulseSpec:
        return PulseSpec(T=self.pulse_width, Ts=self.sampling_period, Tc=self.pulse_duration,
                         Td=self.observation_length)


EXPERIMENT_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def parse_capacity(value: Any) -> Capacity:
    """Non-negative integer bit budget, or inf for the unquantized mode."""
    if isinstance(value, str) and value.strip().lower() in ("inf", ".inf", "infinity"):
        return math.inf
    if isinstance(value, float) and math.isinf(value) and value > 0:
        return math.inf
    try:
        bits = int(value)
    except (TypeError, ValueError, OverflowError):
        raise ConfigError(f"Invalid capacity: {value!r}")
    if bits != float(value) or bits < 0:
        raise ConfigError(f"Capacity must be a non-negative integer or inf, got {value!r}")
    return bits


def _as_list(value: Any) -> List[Any]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _parse_int(key: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if isinstance(value, int):
        return value
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        number = float(text)
        if not number.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(number)


def _coerce_experiment(raw: Dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from loosely typed YAML or CLI values."""
    unknown = sorted(set(raw) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ConfigError(f"Unknown experiment keys: {', '.join(unknown)}")
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values: Dict[str, Any] = {}
    try:
        for key, value in raw.items():
            if key == "rsnr":
                values[key] = [float(v) for v in _as_list(value)]
            elif key == "capacity":
                values[key] = [parse_capacity(v) for v in _as_list(value)]
            elif key == "quantizer":
                values[key] = [str(v) for v in _as_list(value)]
            elif types[key] in (int, "int"):
                values[key] = _parse_int(key, value)
            elif types[key] in (float, "float"):
                values[key] = float(value)
            else:
                values[key] = str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid experiment value: {e}") from e
    return ExperimentConfig(**values)


def _parse_key_value(text: str, path: Path, cause: Optional[Exception] = None) -> Dict[str, str]:
    """Parse flat key=value lines; blank lines and # comments are skipped."""
    data: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            detail = f": {cause}" if cause is not None else ""
            raise ConfigError(f"Could not parse {path} line {number}: expected a YAML mapping "
                              f"or key=value{detail}")
        data[key.strip()] = value.strip()
    return data


class ConfigManager:
    """
    Manages simulator configuration loading and validation.

    Features:
    - YAML configuration loading
    - Strict key checking for the experiment section
    - Command-line overrides
    - Configuration merging
    """

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                 config_dir: Optional[str] = None) -> None:
        """
        Initialize the configuration manager.

        Args:
            config_path: Optional user YAML file overlaying the defaults
            overrides: Experiment values that take precedence over both files
            config_dir: Directory containing default_config.yaml
        """
        self.config_dir = Path(config_dir or os.path.dirname(__file__))
        self.config_path = Path(config_path) if config_path else None
        self.overrides = dict(overrides or {})
        self._load_config()

    def _load_config(self) -> None:
        """Load defaults, overlay the user file and overrides, build typed configs."""
        self._config = self._read_yaml(self.config_dir / "default_config.yaml")

        if self.config_path is not None:
            user_config = self._read_yaml(self.config_path, key_value_fallback=True)
            self._merge_configs(self._config, self._normalize_user_config(user_config))

        if self.overrides:
            self._merge_configs(self._config, {"experiment": self.overrides})

        self._create_typed_configs()
        logger.info("Configuration loaded successfully")

    @staticmethod
    def _read_yaml(path: Path, key_value_fallback: bool = False) -> Dict[str, Any]:
        """
        Read a YAML mapping, or flat key=value lines when the fallback is enabled.

        Args:
            path: Configuration file
            key_value_fallback: Accept a file that is not a YAML mapping as key=value lines

        Returns:
            Dict[str, Any]: Raw configuration
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Configuration file not found: {path}")
        text = path.read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            if key_value_fallback:
                return _parse_key_value(text, path, cause=e)
            raise ConfigError(f"Could not parse {path}: {e}") from e
        if data is None:
            return {}
        if isinstance(data, dict):
            return data
        if key_value_fallback:
            return _parse_key_value(text, path)
        raise ConfigError(f"Configuration root must be a mapping: {path}")

    @staticmethod
    def _normalize_user_config(user_config: Dict[str, Any]) -> Dict[str, Any]:
        """User files are flat experiment keys plus optional system/processing sections."""
        normalized: Dict[str, Any] = {"experiment": {}}
        for key, value in user_config.items():
            if key in ("system", "processing"):
                if not isinstance(value, dict):
                    raise ConfigError(f"Section '{key}' must be a mapping")
                normalized[key] = value
            elif key == "experiment" and isinstance(value, dict):
                normalized["experiment"].update(value)
            elif key in EXPERIMENT_KEYS:
                normalized["experiment"][key] = value
            else:
                raise ConfigError(f"Unknown configuration key: {key}")
        return normalized

    def _merge_configs(self, base: Dict, overlay: Dict) -> None:
        """
        Recursively merge two configuration dictionaries.

        Args:
            base: Base configuration to merge into
            overlay: Configuration to merge from
        """
        for key, value in overlay.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._merge_configs(base[key], value)
            else:
                base[key] = value

    def _create_typed_configs(self) -> None:
        """Create typed configuration objects from raw dictionary."""
        try:
            logging_cfg = self._config.get("system", {}).get("logging", {})
            self.system = SystemConfig(
                log_level=str(logging_cfg.get("level", "INFO")).upper(),
                log_file=str(logging_cfg.get("file") or ""),
                log_max_size_mb=int(logging_cfg.get("max_size_mb", 10)),
                log_backup_count=int(logging_cfg.get("backup_count", 5)),
            )
            processing = self._config.get("processing", {})
            monitoring = processing.get("monitoring", {})
            self.processing = ProcessingConfig(
                num_workers=int(processing.get("num_workers", 0)),
                chunk_size=int(processing.get("chunk_size", 4)),
                monitor_interval_sec=float(monitoring.get("update_interval", 5.0)),
                monitor_history_size=int(monitoring.get("history_size", 100)),
                cpu_warning_percent=float(monitoring.get("cpu_warning", 95.0)),
                memory_warning_percent=float(monitoring.get("memory_warning", 90.0)),
            )
        except (AttributeError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid system/processing configuration: {e}") from e
        self.experiment = _coerce_experiment(self._config.get("experiment", {}))

    def validate(self) -> bool:
        """
        Validate the current configuration.

        Returns:
            bool: True if configuration is valid
        """
        try:
            if self.system.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
                raise ValueError(f"Unknown log level {self.system.log_level}")
            if self.system.log_max_size_mb <= 0:
                raise ValueError("Log max size must be positive")

            if self.processing.num_workers < 0 or self.processing.chunk_size < 1:
                raise ValueError("Worker count must be non-negative and chunk size positive")

            exp = self.experiment
            if exp.topology not in TOPOLOGIES:
                raise ValueError(f"Topology must be one of {TOPOLOGIES}")
            if exp.design not in DESIGNS:
                raise ValueError(f"Design must be one of {DESIGNS}")
            if not exp.quantizer or any(q not in QUANTIZERS for q in exp.quantizer):
                raise ValueError(f"Quantizer must be one of {QUANTIZERS}")
            if exp.trials < 1:
                raise ValueError("At least one trial is required")
            if exp.n_receivers < 1:
                raise ValueError("At least one receiver is required")
            if not exp.rsnr or not exp.capacity:
                raise ValueError("RSNR and capacity lists must not be empty")
            if any(c < 0 for c in exp.capacity):
                raise ValueError("Capacities must be non-negative")
            if exp.master_seed < 0:
                raise ValueError("Master seed must be non-negative")
            if exp.noise_variance <= 0 or exp.pulse_period <= 0 or exp.bandwidth_hz <= 0:
                raise ValueError("Noise variance, pulse period and bandwidth must be positive")
            if not math.isclose(exp.sampling_period, 1.0 / (2.0 * exp.bandwidth_hz), rel_tol=1e-9):
                raise ValueError("Sampling period must equal 1/(2B)")

            # Pulse and topology parameters carry their own checks
            exp.pulse_spec()
            exp.topology_spec()
            return True

        except (ValueError, SensingError) as e:
            logger.error(f"Configuration validation failed: {str(e)}", exc_info=True)
            return False
