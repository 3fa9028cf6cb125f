"""Deep echo state Q-network agents in a dynamic spectrum sharing simulator."""

from .agent import AgentConfig, DeqnAgent, DivergenceError, ReplayBuffer, run_round
from .channel import ChannelModelConfig, build_geometry, generate_gain_series
from .config import ConfigError, ScenarioConfig
from .env import DssEnvironment, SuAction, SuState, reward_of
from .esn import advance, init_network, readout
from .harness import ExperimentConfig, load_config, run_experiment, run_pu_only_baseline, timing_probe

__all__ = [
    "AgentConfig",
    "ChannelModelConfig",
    "ConfigError",
    "DeqnAgent",
    "DivergenceError",
    "DssEnvironment",
    "ExperimentConfig",
    "ReplayBuffer",
    "ScenarioConfig",
    "SuAction",
    "SuState",
    "advance",
    "build_geometry",
    "generate_gain_series",
    "init_network",
    "load_config",
    "readout",
    "reward_of",
    "run_experiment",
    "run_pu_only_baseline",
    "run_round",
    "timing_probe",
]
