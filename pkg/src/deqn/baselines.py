"""Non-recurrent comparison policies sharing the agent interface used by ``run_round``."""

from __future__ import annotations

import numpy as np

from . import esn
from .agent import AgentConfig, DeqnAgent, as_input
from .env import SuAction


def random_policy(state, rng: np.random.Generator, num_channels: int) -> SuAction:
    return SuAction.from_flat(int(rng.integers(2 * num_channels)), num_channels)


def threshold_policy(state, threshold: float, num_channels: int) -> SuAction:
    """Access iff the energy feature is strictly below ``threshold``; sense channels round-robin."""
    access = 1 if state.energy_feature < threshold else 0
    return SuAction(access, (state.channel + 1) % num_channels)


class _FixedPolicy:
    """Training-free policy; every learning hook is a no-op."""

    def __init__(self, num_channels: int, config: AgentConfig | None = None):
        self.num_channels = num_channels
        self.config = config or AgentConfig()
        self.epsilon = 0.0
        self.lr = 0.0
        self.round_index = 0

    @property
    def num_actions(self) -> int:
        return 2 * self.num_channels

    def begin_round(self, round_index: int) -> None:
        self.round_index = round_index

    def record(self, state, action, reward, next_state) -> None:
        pass

    def train(self) -> float:
        return float("nan")

    def sync_target(self) -> None:
        pass

    def end_round(self) -> None:
        pass


class RandomAgent(_FixedPolicy):
    def __init__(self, num_channels: int, seed: int = 0, config: AgentConfig | None = None):
        super().__init__(num_channels, config)
        self.rng = np.random.default_rng([seed, 0x7A4D])
        self.epsilon = 1.0

    def act(self, state) -> int:
        return random_policy(state, self.rng, self.num_channels).flat(self.num_channels)


class ThresholdAgent(_FixedPolicy):
    def __init__(self, num_channels: int, threshold: float = 0.0, config: AgentConfig | None = None):
        super().__init__(num_channels, config)
        self.threshold = threshold

    def act(self, state) -> int:
        return threshold_policy(state, self.threshold, self.num_channels).flat(self.num_channels)


class AlwaysIdleAgent(_FixedPolicy):
    """Never transmits and keeps sensing the same channel."""

    def act(self, state) -> int:
        return int(np.argmax(as_input(state)[1:]))


def memoryless_dqn_agent(input_dim: int, num_actions: int, config: AgentConfig, seed: int = 0) -> DeqnAgent:
    """DEQN with zero reservoirs: the readout sees the raw state only."""
    net = esn.init_network(0, 1, input_dim, num_actions, seed=seed)
    return DeqnAgent(net, config, seed)
