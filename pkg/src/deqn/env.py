"""Multi-agent dynamic spectrum sharing environment.

Time runs in periods of ``T`` slots. In period ``k`` every SU senses one
channel during slots ``kT .. kT+Ts-1`` and, if it decided to access, transmits
on that same channel during the remaining ``T-Ts`` slots alongside every
active PU and every other accessing SU. Channels are indexed from 0 and PU
``m`` is the licensee of channel ``m``.

A flat action index packs the two decisions as ``access * M + next_channel``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import phy
from .channel import ChannelBank, ChannelModelConfig, build_geometry
from .config import ScenarioConfig

WARNING_EFFICIENCY = 1.5


@dataclass(frozen=True)
class PuSchedule:
    """Periodic PU activity.

    With ``active_periods=None`` the PU toggles every ``period_multiple``
    periods (50% duty). Otherwise it is active for the first
    ``active_periods`` periods of every ``period_multiple``-period cycle.
    """

    pu: int
    period_multiple: int
    phase: int = 0
    active_periods: Optional[int] = None

    def __post_init__(self):
        if self.period_multiple < 1:
            raise ValueError("period_multiple must be >= 1")
        if self.active_periods is not None and not 0 <= self.active_periods <= self.period_multiple:
            raise ValueError("active_periods must lie in [0, period_multiple]")


def pu_activity(schedule: PuSchedule, period_index: int) -> bool:
    if period_index < 0:
        raise ValueError("period index must be non-negative")
    k = period_index + schedule.phase
    if schedule.active_periods is None:
        return (k // schedule.period_multiple) % 2 == 0
    return k % schedule.period_multiple < schedule.active_periods


@dataclass(frozen=True)
class SuState:
    energy_feature: float
    sensed_channel_onehot: np.ndarray

    @property
    def channel(self) -> int:
        return int(np.argmax(self.sensed_channel_onehot))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(([self.energy_feature], self.sensed_channel_onehot))


@dataclass(frozen=True)
class SuAction:
    access: int
    next_sense_channel: int

    def flat(self, num_channels: int) -> int:
        return self.access * num_channels + self.next_sense_channel

    @classmethod
    def from_flat(cls, index: int, num_channels: int) -> "SuAction":
        if not 0 <= index < 2 * num_channels:
            raise ValueError(f"action index {index} outside [0, {2 * num_channels})")
        return cls(index // num_channels, index % num_channels)


@dataclass
class PeriodOutcome:
    period: int
    su_rewards: np.ndarray
    su_efficiencies: np.ndarray
    # NaN for PUs that were inactive during the period
    pu_efficiencies: np.ndarray
    warnings: np.ndarray
    # warning raised and at least one SU was transmitting on that channel
    warnings_received: np.ndarray
    pu_active: np.ndarray
    su_access: np.ndarray
    su_channels: np.ndarray
    su_next_channels: np.ndarray
    pu_throughputs: np.ndarray
    su_throughputs: np.ndarray

    @property
    def rewards(self) -> np.ndarray:
        return self.su_rewards


def reward_of(accessed: bool, pu_efficiency: Optional[float], su_efficiency: Optional[float]) -> int:
    """Reward tiers for one SU in one period.

    ``pu_efficiency`` is None when the licensed PU did not transmit; the
    protection clause is then vacuous.
    """
    if not accessed:
        return -1
    if pu_efficiency is not None and pu_efficiency < WARNING_EFFICIENCY:
        return -2
    if su_efficiency < 1.0:
        return 0
    if su_efficiency < 2.0:
        return 1
    if su_efficiency < 3.0:
        return 2
    return 3


class DssEnvironment:
    """``M`` PUs and ``N`` SUs sharing ``M`` channels.

    The energy feature is ``(log10(E) - mu) / sigma`` with ``mu``/``sigma``
    estimated per SU from ``calibration_samples`` idle sensing periods run by
    :meth:`reset`, then frozen.
    """

    def __init__(
        self,
        scenario: ScenarioConfig,
        channel: ChannelModelConfig,
        seed: int,
        schedules: Optional[Sequence[PuSchedule]] = None,
        calibration_samples: int = 300,
    ):
        self.scenario = scenario
        self.channel_config = channel
        self.seed = seed
        self.geometry = build_geometry(scenario, seed)
        self.bank = ChannelBank(self.geometry, channel)
        M, N = scenario.num_pus, scenario.num_sus
        if schedules is None:
            schedules = [
                PuSchedule(m, scenario.pu_multiple(m), scenario.pu_phase(m), scenario.pu_active_periods)
                for m in range(M)
            ]
        if len(schedules) != M:
            raise ValueError("need exactly one schedule per PU")
        self.schedules = list(schedules)
        self.calibration_samples = calibration_samples
        self.tx_power = np.array([scenario.pu_power_mw] * M + [scenario.su_power_mw] * N)
        self.noise = scenario.noise_mw
        self._rng = np.random.default_rng([seed, 0xC4A])
        self._sense_rngs = [np.random.default_rng([seed, 0x5E45, n]) for n in range(N)]
        lm = self.geometry.link_matrix
        self._lm_valid = (lm >= 0).astype(float)
        self._lm_index = np.where(lm >= 0, lm, 0)
        self.mu: Optional[np.ndarray] = None
        self.sigma: Optional[np.ndarray] = None
        self.period = 0
        self.channels = np.zeros(N, dtype=np.int64)
        self.states: list[SuState] = []

    @property
    def num_channels(self) -> int:
        return self.scenario.num_pus

    @property
    def num_actions(self) -> int:
        return 2 * self.scenario.num_pus

    @property
    def state_dim(self) -> int:
        return self.scenario.num_pus + 1

    def pu_active(self, period: int) -> np.ndarray:
        return np.array([pu_activity(s, period) for s in self.schedules])

    def sense_raw(self, su: int, channel: int, period: int) -> float:
        """Energy detected by SU ``su`` on ``channel`` in the sensing slots of ``period``."""
        M = self.num_channels
        if not 0 <= channel < M:
            raise ValueError(f"invalid channel {channel} (M={M})")
        T, Ts = self.scenario.period_T, self.scenario.sense_Ts
        t0 = period * T
        link = self.geometry.sensing_matrix[channel, su]
        gains = self.bank.gains(t0, t0 + Ts)[link]
        active = np.full(Ts, pu_activity(self.schedules[channel], period))
        res = phy.sense_energy(channel, gains, active, self.scenario.pu_power_mw, self.noise, self._sense_rngs[su])
        return res.energy

    def set_calibration(self, mu, sigma) -> None:
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)

    def energy_feature(self, su: int, energy: float) -> float:
        if self.mu is None:
            raise RuntimeError("energy normalisation not calibrated; call reset() first")
        return float((np.log10(energy) - self.mu[su]) / self.sigma[su])

    def observe(self, su: int, channel: int, period: int) -> SuState:
        if not 0 <= channel < self.num_channels:
            raise ValueError(f"invalid channel {channel} (M={self.num_channels})")
        onehot = np.zeros(self.num_channels)
        onehot[channel] = 1.0
        feature = self.energy_feature(su, self.sense_raw(su, channel, period))
        return SuState(feature, onehot)

    def calibrate(self, num_periods: int) -> None:
        """Run idle periods sensing random channels and freeze the feature scaling."""
        N = self.scenario.num_sus
        logs = np.empty((num_periods, N))
        for i in range(num_periods):
            k = self.period
            for n in range(N):
                ch = int(self._rng.integers(self.num_channels))
                logs[i, n] = np.log10(self.sense_raw(n, ch, k))
            self.period += 1
        sigma = logs.std(axis=0)
        self.set_calibration(logs.mean(axis=0), np.where(sigma > 0, sigma, 1.0))

    def reset(self, initial_channels: Optional[Sequence[int]] = None) -> list[SuState]:
        if self.mu is None:
            self.calibrate(self.calibration_samples)
        N = self.scenario.num_sus
        if initial_channels is None:
            initial_channels = self._rng.integers(self.num_channels, size=N)
        self.channels = np.asarray(initial_channels, dtype=np.int64).copy()
        self.states = [self.observe(n, int(self.channels[n]), self.period) for n in range(N)]
        return self.states

    def _efficiencies(self, period: int, active: np.ndarray, user_channel: np.ndarray) -> np.ndarray:
        T, Ts = self.scenario.period_T, self.scenario.sense_Ts
        block = self.bank.gains(period * T + Ts, (period + 1) * T)
        power = (block.real**2 + block.imag**2).T  # (S, L)
        G = power[:, self._lm_index] * self._lm_valid
        cochannel = (
            active[:, None] & active[None, :] & (user_channel[:, None] == user_channel[None, :])
        ).astype(float)
        np.fill_diagonal(cochannel, 0.0)
        sinr = phy.sinr_matrix(G, self.tx_power, cochannel, self.noise)
        return phy.efficiency_from_sinr(sinr).mean(axis=0)

    def step(self, actions: Sequence[int]) -> tuple[PeriodOutcome, list[SuState]]:
        M, N = self.scenario.num_pus, self.scenario.num_sus
        if len(actions) != N:
            raise ValueError(f"expected {N} actions, got {len(actions)}")
        k = self.period
        acts = np.asarray(actions, dtype=np.int64)
        if np.any((acts < 0) | (acts >= 2 * M)):
            raise ValueError("action index out of range")
        access = acts // M == 1
        next_ch = acts % M
        su_ch = self.channels.copy()

        pu_on = self.pu_active(k)
        active = np.concatenate([pu_on, access])
        user_channel = np.concatenate([np.arange(M), su_ch])
        eff = self._efficiencies(k, active, user_channel)

        pu_eff = np.where(pu_on, eff[:M], np.nan)
        su_eff = np.where(access, eff[M:], 0.0)
        warnings = pu_on & (eff[:M] < WARNING_EFFICIENCY)
        accessed_channels = np.zeros(M, dtype=bool)
        accessed_channels[su_ch[access]] = True
        rewards = np.array(
            [
                reward_of(bool(access[n]), float(pu_eff[su_ch[n]]) if pu_on[su_ch[n]] else None, float(su_eff[n]))
                for n in range(N)
            ],
            dtype=float,
        )
        bw = self.scenario.bandwidth_hz
        outcome = PeriodOutcome(
            period=k,
            su_rewards=rewards,
            su_efficiencies=su_eff,
            pu_efficiencies=pu_eff,
            warnings=warnings,
            warnings_received=warnings & accessed_channels,
            pu_active=pu_on,
            su_access=access,
            su_channels=su_ch,
            su_next_channels=next_ch,
            pu_throughputs=phy.throughput(np.where(pu_on, eff[:M], 0.0), bw),
            su_throughputs=phy.throughput(su_eff, bw),
        )
        self.period = k + 1
        self.channels = next_ch
        self.states = [self.observe(n, int(next_ch[n]), k + 1) for n in range(N)]
        return outcome, self.states
