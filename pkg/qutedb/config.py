import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigError
from .models import CostConstants, DepthModel, DeviceModel, Policy

logger = logging.getLogger(__name__)

# Base paths
BASE_DIR = Path(os.getenv("QUTEDB_HOME", Path(__file__).parent.parent))
DATA_DIR = Path(os.getenv("QUTEDB_DATA_DIR", BASE_DIR / "data"))
DEVICES_DIR = DATA_DIR / "devices"
DB_DIR = DATA_DIR / "db"
RULES_DIR = Path(os.getenv("QUTEDB_RULES_DIR", BASE_DIR / "data" / "rules"))

CONFIG_PATH = os.getenv("QUTEDB_CONFIG")
LOG_LEVEL = os.getenv("QUTEDB_LOG_LEVEL", "WARNING")

# Shot budget used when nothing else is specified
DEFAULT_SHOTS = 2000


class Settings(BaseModel):
    """Engine configuration. Every field has a valid default."""
    default_shots: int = DEFAULT_SHOTS
    qubit_cap: int = 24
    seed: int = 0
    counting_phase_bits: int = 6
    aggregate_phase_bits: int = 6
    index_threshold_c: float = 1.0
    max_index_probes: int = 4
    deferred_band: float = 0.2
    max_shot_factor: int = 8
    reconcile_idle_rounds: int = 3
    max_reconcile_rounds: int = 32
    latency_budget_ms: Optional[float] = None
    queue_delay_ns: float = 0.0
    noise: bool = True
    max_trajectories: int = 256
    counting_trajectories: int = 16
    probe_workers: int = 1
    quantum_row_limit: int = 4096
    realization: str = "auto"
    output: str = "table"
    data_dir: Optional[Path] = None
    device_path: Optional[Path] = None
    depth_model: DepthModel = Field(default_factory=DepthModel)
    cost: CostConstants = Field(default_factory=CostConstants)

    def policy(self) -> Policy:
        return Policy(
            realization=self.realization,
            deferred_band=self.deferred_band,
            max_shot_factor=self.max_shot_factor,
            latency_budget_ms=self.latency_budget_ms,
            queue_delay_ns=self.queue_delay_ns,
            noise=self.noise,
        )


def _read_document(path: Path) -> Dict[str, Any]:
    """Read a JSON (or YAML) document into a dict"""
    try:
        content = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    try:
        data = yaml.safe_load(content) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain an object")
    return data


def load_settings(path: Optional[Path] = None, **overrides: Any) -> Settings:
    """Load settings from a file (if any) and apply keyword overrides"""
    data: Dict[str, Any] = {}
    source = path or CONFIG_PATH
    if source:
        data = _read_document(Path(source))
        logger.info(f"[Config] Loaded settings from {source}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid settings: {e}") from e


def load_device(path: Optional[Path] = None) -> DeviceModel:
    """Load a device model; the built-in desk device when no path is given"""
    if path is None:
        default = DEVICES_DIR / "default.json"
        if not default.exists():
            return DeviceModel()
        path = default
    try:
        return DeviceModel(**_read_document(Path(path)))
    except ValidationError as e:
        raise ConfigError(f"invalid device model {path}: {e}") from e


settings = load_settings() if CONFIG_PATH else Settings()
