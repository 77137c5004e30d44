# wsnsim/config.py
"""Scenario schema and the flat `key = value` config file format."""

from __future__ import annotations

import enum
import hashlib
import logging
from pathlib import Path as FsPath
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import SimulationError
from .radio import EnergyModel, airtime_ticks, tx_power_w
from .retry_policy import KmaxMode, KmaxPolicy

logger = logging.getLogger(__name__)


class ConfigInvalid(SimulationError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


class UnknownKey(ConfigInvalid):
    def __init__(self, key: str):
        super().__init__(key, "unknown config key")


class ProtocolName(str, enum.Enum):
    E2XLRADR = "e2xlradr"
    DSR = "dsr"


class MobilityKind(str, enum.Enum):
    STATIC = "static"
    RANDOM_WAYPOINT = "random_waypoint"


# --- Pydantic Schemas ---
class Scenario(BaseModel):
    """One fully resolved run configuration. Defaults reproduce the 50-node study."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    node_count: int = Field(50, gt=0)
    area_w_m: float = Field(1000.0, gt=0)
    area_h_m: float = Field(1000.0, gt=0)
    source_count: int = Field(5, gt=0)
    range_min_m: float = Field(250.0, gt=0)
    range_max_m: float = Field(350.0, gt=0)
    initial_energy_j: float = Field(0.5, gt=0)
    bitrate_bps: float = Field(250_000.0, gt=0)
    tick_seconds: float = Field(0.001, gt=0)
    packet_size_bits: int = Field(1024, gt=0)
    control_size_bits: int = Field(64, gt=0)
    traffic_rate_pps: float = Field(3.0, ge=0)
    sim_time_ticks: int = Field(70_000, gt=0)
    protocol: ProtocolName = ProtocolName.E2XLRADR
    kmax_mode: KmaxMode = Field(KmaxMode.FORMULA, alias="kmax.mode")
    kmax_floor: int = Field(1, ge=1, alias="kmax.floor")
    tf_ticks: Optional[int] = Field(None, gt=0)
    max_rrequest_retries: int = Field(5, ge=0)
    dsr_retry_limit: int = Field(3, ge=0)
    mobility_kind: MobilityKind = Field(MobilityKind.STATIC, alias="mobility.kind")
    mobility_speed_mps: float = Field(2.0, ge=0, alias="mobility.speed_mps")
    mobility_pause_ticks: int = Field(1000, ge=0, alias="mobility.pause_ticks")
    interference_threshold: int = Field(10, ge=0)
    energy_threshold_fraction: float = Field(0.2, ge=0, le=1)
    recover_depth: int = Field(2, ge=0)
    e_elec_j_per_bit: float = Field(50e-9, gt=0)
    eps_amp_j_per_bit_m2: float = Field(100e-12, gt=0)
    seed: int = Field(1, ge=0)
    # extended keys
    dsr_discovery_timeout_ticks: Optional[int] = Field(None, gt=0)
    dsr_jitter_ticks: int = Field(8, ge=0)
    lifetime_fraction: float = Field(0.30, gt=0, le=1)
    sleep_enabled: bool = True
    pmax_w: float = Field(5.0, gt=0)
    mobility_step_ticks: int = Field(100, gt=0, alias="mobility.step_ticks")
    sample_interval_ticks: int = Field(1000, gt=0)
    idle_listening: bool = True
    duty_cycle: bool = True
    duty_period_ticks: int = Field(50, gt=0)
    duty_awake_ticks: int = Field(35, gt=0)

    @model_validator(mode="after")
    def _check_consistency(self) -> "Scenario":
        if self.range_min_m > self.range_max_m:
            raise ValueError("range_min_m must not exceed range_max_m")
        if self.duty_awake_ticks > self.duty_period_ticks:
            raise ValueError("duty_awake_ticks must not exceed duty_period_ticks")
        power = tx_power_w(self.energy_model, self.bitrate_bps, self.range_max_m)
        if not 0 < power <= self.pmax_w:
            raise ValueError(
                f"transmit power {power:.4g} W needed for range_max_m exceeds pmax_w={self.pmax_w}"
            )
        return self

    # --- derived values ---
    @property
    def energy_model(self) -> EnergyModel:
        return EnergyModel(self.e_elec_j_per_bit, self.eps_amp_j_per_bit_m2)

    @property
    def listen_j_per_tick(self) -> float:
        """Draw of an awake radio that is not transmitting, per tick."""
        return self.e_elec_j_per_bit * self.bitrate_bps * self.tick_seconds

    @property
    def kmax_policy(self) -> KmaxPolicy:
        return KmaxPolicy(self.kmax_mode, self.kmax_floor)

    @property
    def control_airtime(self) -> int:
        return airtime_ticks(self.control_size_bits, self.bitrate_bps, self.tick_seconds)

    @property
    def data_airtime(self) -> int:
        return airtime_ticks(self.packet_size_bits, self.bitrate_bps, self.tick_seconds)

    @property
    def tf(self) -> int:
        if self.tf_ticks is not None:
            return self.tf_ticks
        return 3 * (self.control_airtime + self.data_airtime)

    @property
    def dsr_discovery_timeout(self) -> int:
        if self.dsr_discovery_timeout_ticks is not None:
            return self.dsr_discovery_timeout_ticks
        return 10 * self.tf

    @property
    def effective_source_count(self) -> int:
        return min(self.source_count, self.node_count)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Scenario":
        merged = {**self.to_config_dict(), **overrides}
        return build_scenario(merged)

    def to_config_dict(self) -> dict[str, Any]:
        return self.model_dump(by_alias=True, mode="json")


CONFIG_KEYS: tuple[str, ...] = tuple(
    field.alias or name for name, field in Scenario.model_fields.items()
)


def _reason(err: dict) -> tuple[str, str]:
    loc = err.get("loc") or ("config",)
    return str(loc[0]), err.get("msg", "invalid value")


def build_scenario(values: Mapping[str, Any]) -> Scenario:
    """Validate raw key/value pairs into a Scenario, raising ConfigInvalid."""
    for key in values:
        if key not in CONFIG_KEYS:
            raise UnknownKey(key)
    cleaned = {k: v for k, v in values.items() if v is not None and v != ""}
    try:
        return Scenario.model_validate(cleaned)
    except ValidationError as e:
        key, reason = _reason(e.errors()[0])
        if key not in CONFIG_KEYS:
            key = "config"
        raise ConfigInvalid(key, reason) from None


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigInvalid(f"line {lineno}", "missing key")
        if key not in CONFIG_KEYS:
            raise UnknownKey(key)
        values[key] = value
    return values


def load_config(path: Optional[str | FsPath]) -> dict[str, str]:
    if path is None:
        return {}
    text = FsPath(path).read_text(encoding="utf-8")
    values = parse_config_text(text)
    logger.debug("loaded %d keys from %s", len(values), path)
    return values


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(scenario: Scenario) -> str:
    """Serialise every key; unset optional keys are written as comments."""
    lines = ["# wsnsim scenario"]
    data = scenario.model_dump(by_alias=True)
    for key in CONFIG_KEYS:
        value = data[key]
        if value is None:
            lines.append(f"# {key} =")
        else:
            lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(render_config(scenario).encode("utf-8")).hexdigest()[:16]
