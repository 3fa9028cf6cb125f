"""Scenario parameters for the spectrum-sharing network."""

from __future__ import annotations

from dataclasses import dataclass


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration values."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    num_pus: int = 4
    num_sus: int = 6
    area_m: float = 2000.0
    pair_distance_min_m: float = 400.0
    pair_distance_max_m: float = 450.0
    pu_power_mw: float = 500.0
    su_power_mw: float = 500.0
    noise_dbm: float = -157.3
    bandwidth_hz: float = 5e6
    slot_s: float = 1e-3
    period_T: int = 10
    sense_Ts: int = 2
    # PU activity toggles every `multiple` periods; cycles through this list by PU index
    pu_period_multiples: tuple[int, ...] = (3, 4)
    pu_phases: tuple[int, ...] = (0,)
    # None: 50% square wave; n: active for n periods per cycle of `multiple` periods
    pu_active_periods: int | None = None

    def __post_init__(self):
        if self.num_pus < 1 or self.num_sus < 0:
            raise ConfigError("num_pus must be >= 1 and num_sus >= 0")
        if self.area_m <= 0:
            raise ConfigError("area_m must be positive")
        if not 0 < self.pair_distance_min_m <= self.pair_distance_max_m:
            raise ConfigError("pair_distance_min_m/pair_distance_max_m must satisfy 0 < min <= max")
        if self.pair_distance_max_m > self.area_m:
            raise ConfigError(
                f"pair_distance_max_m={self.pair_distance_max_m} does not fit inside area_m={self.area_m}"
            )
        if not 1 <= self.sense_Ts < self.period_T:
            raise ConfigError("sense_Ts must satisfy 1 <= sense_Ts < period_T")
        if any(p < 1 for p in self.pu_period_multiples) or not self.pu_period_multiples:
            raise ConfigError("pu_period_multiples entries must be >= 1")
        if not self.pu_phases:
            raise ConfigError("pu_phases must not be empty")
        if self.pu_power_mw <= 0 or self.su_power_mw <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("powers and bandwidth must be positive")

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_dbm)

    @property
    def num_users(self) -> int:
        return self.num_pus + self.num_sus

    @property
    def transmit_slots(self) -> int:
        return self.period_T - self.sense_Ts

    def pu_multiple(self, m: int) -> int:
        return self.pu_period_multiples[m % len(self.pu_period_multiples)]

    def pu_phase(self, m: int) -> int:
        return self.pu_phases[m % len(self.pu_phases)]
