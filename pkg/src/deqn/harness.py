"""End-to-end experiment orchestration, metrics and measurement utilities."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import esn
from .agent import AgentConfig, DeqnAgent, Experience, RoundResult, double_q_targets, run_round
from .baselines import AlwaysIdleAgent, RandomAgent, ThresholdAgent, memoryless_dqn_agent
from .channel import ChannelModelConfig
from .config import ConfigError, ScenarioConfig
from .env import DssEnvironment
from .toy import TOY_MDP, FiniteMdp, MdpEnv, greedy_policy, value_iteration

MOVING_AVERAGE_WINDOW = 300

AGENT_KINDS = ("deqn1", "deqn2", "dqn0", "random", "threshold", "idle")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    channel: ChannelModelConfig = ChannelModelConfig()
    agent: AgentConfig = AgentConfig()
    agent_kind: tuple[str, ...] = ("deqn2",)
    total_samples: int = 60000
    seed: int = 0
    neurons: int = 32
    leak_beta: float = 0.7
    spectral_radius: float = 0.9
    sparsity: float = 0.2
    input_scale: float = 1.0
    threshold: float = 0.0
    calibration_samples: int = 300

    def __post_init__(self):
        if self.total_samples % self.agent.buffer_Z:
            raise ConfigError(
                f"total_samples={self.total_samples} is not divisible by buffer_Z={self.agent.buffer_Z}"
            )
        for kind in self.agent_kind:
            if kind not in AGENT_KINDS:
                raise ConfigError(f"agent_kind: unknown kind {kind!r} (choose from {', '.join(AGENT_KINDS)})")
        if len(self.agent_kind) not in (1, self.scenario.num_sus):
            raise ConfigError("agent_kind must list one kind or one per SU")

    @property
    def num_rounds(self) -> int:
        return self.total_samples // self.agent.buffer_Z

    def kind_of(self, su: int) -> str:
        return self.agent_kind[0] if len(self.agent_kind) == 1 else self.agent_kind[su]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "scenario": dataclasses.asdict(self.scenario),
            "channel": dataclasses.asdict(self.channel),
            "agent": dataclasses.asdict(self.agent),
            **{f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("scenario", "channel", "agent")},
        }


_TOP_LEVEL = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"scenario", "channel", "agent"}
_SECTIONS = {
    "scenario": {f.name for f in dataclasses.fields(ScenarioConfig)},
    "channel": {f.name for f in dataclasses.fields(ChannelModelConfig)} - {"seed"},
    "agent": {f.name for f in dataclasses.fields(AgentConfig)},
}


def config_from_mapping(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from flat keys; ``seed`` seeds geometry, fading, sensing and agents."""
    base = base or ExperimentConfig()
    parts = {name: {} for name in _SECTIONS}
    top = {}
    for key, value in values.items():
        if key in _TOP_LEVEL:
            top[key] = value
            continue
        for name, keys in _SECTIONS.items():
            if key in keys:
                parts[name][key] = value
                break
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key in ("pu_period_multiples", "pu_phases"):
        if key in parts["scenario"]:
            v = parts["scenario"][key]
            parts["scenario"][key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
    if "agent_kind" in top:
        v = top["agent_kind"]
        top["agent_kind"] = tuple(v) if isinstance(v, (list, tuple)) else tuple(str(v).split(","))
    try:
        scenario = dataclasses.replace(base.scenario, **parts["scenario"])
        agent = dataclasses.replace(base.agent, **parts["agent"])
        seed = int(top.get("seed", base.seed))
        channel = dataclasses.replace(base.channel, seed=seed, **parts["channel"])
        return dataclasses.replace(base, scenario=scenario, channel=channel, agent=agent, **top)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with Path(path).open() as fh:
        values = yaml.safe_load(fh) or {}
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected flat key/value pairs")
    return config_from_mapping(values)


def make_environment(config: ExperimentConfig) -> DssEnvironment:
    return DssEnvironment(
        config.scenario, config.channel, config.seed, calibration_samples=config.calibration_samples
    )


def _sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def make_agent(config: ExperimentConfig, su: int, kind: Optional[str] = None):
    kind = kind or config.kind_of(su)
    M = config.scenario.num_pus
    seed = _sub_seed(config.seed, 0xA9E, su)
    if kind == "random":
        return RandomAgent(M, seed, config.agent)
    if kind == "threshold":
        return ThresholdAgent(M, config.threshold, config.agent)
    if kind == "idle":
        return AlwaysIdleAgent(M, config.agent)
    if kind == "dqn0":
        return memoryless_dqn_agent(M + 1, 2 * M, config.agent, seed)
    layers = {"deqn1": 1, "deqn2": 2}[kind]
    net = esn.init_network(
        layers,
        config.neurons,
        M + 1,
        2 * M,
        config.spectral_radius,
        seed=_sub_seed(config.seed, 0xE5E, su),
        leak_beta=config.leak_beta,
        sparsity=config.sparsity,
        input_scale=config.input_scale,
    )
    return DeqnAgent(net, config.agent, seed)


@dataclass
class RunMetrics:
    """Per-round summaries plus the per-period series they are built from."""

    rounds: np.ndarray
    pu_throughput: np.ndarray  # mean PU system throughput per period, bits/s
    su_throughput: np.ndarray
    mean_reward: np.ndarray
    warning_frequency: np.ndarray  # (rounds, M)
    train_seconds: np.ndarray
    period_pu_throughput: np.ndarray
    period_su_throughput: np.ndarray
    period_reward: np.ndarray
    period_warnings: np.ndarray  # (periods, M) warning raised and received by some SU
    period_pu_active: np.ndarray
    mean_loss: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    first_period: int = 0

    def moving_average(self, series: np.ndarray, window: int = MOVING_AVERAGE_WINDOW) -> np.ndarray:
        return moving_average(series, window)


def moving_average(series, window: int = MOVING_AVERAGE_WINDOW) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.shape[0] < window:
        return np.empty(0)
    return np.convolve(x, np.ones(window) / window, mode="valid")


def warning_frequency(warnings_received: np.ndarray, pu_active: np.ndarray) -> np.ndarray:
    """Received warnings over active periods, per PU (0 where a PU was never active)."""
    active = pu_active.sum(axis=0)
    return np.where(active > 0, warnings_received.sum(axis=0) / np.maximum(active, 1), 0.0)


def _summaries(results: Sequence[RoundResult], M: int) -> RunMetrics:
    outcomes = [o for r in results for o in r.outcomes]
    p_pu = np.array([o.pu_throughputs.sum() for o in outcomes])
    p_su = np.array([o.su_throughputs.sum() for o in outcomes])
    p_r = np.array([o.su_rewards.mean() if o.su_rewards.size else np.nan for o in outcomes])
    p_w = np.array([o.warnings_received for o in outcomes]).reshape(len(outcomes), M)
    p_a = np.array([o.pu_active for o in outcomes]).reshape(len(outcomes), M)
    Z = len(results[0].outcomes) if results else 1
    n_r = len(results)
    shape = (n_r, Z)
    return RunMetrics(
        rounds=np.arange(n_r),
        pu_throughput=p_pu.reshape(shape).mean(axis=1),
        su_throughput=p_su.reshape(shape).mean(axis=1),
        mean_reward=p_r.reshape(shape).mean(axis=1),
        warning_frequency=np.array(
            [warning_frequency(p_w[i * Z : (i + 1) * Z], p_a[i * Z : (i + 1) * Z]) for i in range(n_r)]
        ).reshape(n_r, M),
        train_seconds=np.array([r.train_seconds for r in results]),
        period_pu_throughput=p_pu,
        period_su_throughput=p_su,
        period_reward=p_r,
        period_warnings=p_w,
        period_pu_active=p_a,
        mean_loss=np.array([r.losses for r in results], dtype=float),
        first_period=outcomes[0].period if outcomes else 0,
    )


def run_experiment(
    config: ExperimentConfig,
    out_dir=None,
    write_trace: bool = True,
    agents: Optional[list] = None,
    progress=None,
) -> RunMetrics:
    """Run ``total_samples / Z`` rounds of collection and training; optionally write CSVs."""
    env = make_environment(config)
    env.reset()
    N = config.scenario.num_sus
    if agents is None:
        agents = [make_agent(config, n) for n in range(N)]
    results = []
    for q in range(config.num_rounds):
        results.append(run_round(agents, env, q))
        if progress is not None:
            progress(q, results[-1])
    metrics = _summaries(results, config.scenario.num_pus)
    if out_dir is not None:
        write_outputs(config, metrics, results, out_dir, write_trace)
    return metrics


def run_pu_only_baseline(config: ExperimentConfig) -> np.ndarray:
    """Per-round PU system throughput with every SU silent on the same world seed."""
    env = make_environment(config)
    env.reset()
    idle = [AlwaysIdleAgent(config.scenario.num_pus, config.agent) for _ in range(config.scenario.num_sus)]
    per_period = np.empty(config.total_samples)
    for k in range(config.total_samples):
        outcome, _ = env.step([ag.act(s) for ag, s in zip(idle, env.states)])
        per_period[k] = outcome.pu_throughputs.sum()
    # same reduction order as the experiment metrics, so the two agree bit-exactly
    return per_period.reshape(config.num_rounds, config.agent.buffer_Z).mean(axis=1)


def _fmt(x) -> str:
    return repr(float(x))


def write_outputs(config: ExperimentConfig, metrics: RunMetrics, results, out_dir, write_trace=True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = config.scenario
    M, N = sc.num_pus, sc.num_sus
    period_s = sc.period_T * sc.slot_s
    Z = config.agent.buffer_Z

    with (out / "rounds.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["round", "sim_seconds", "pu_system_throughput", "su_system_throughput", "mean_reward"]
            + [f"warning_freq_pu{m}" for m in range(M)]
        )
        for q in range(len(metrics.rounds)):
            sim_t = (metrics.first_period + (q + 1) * Z) * period_s
            w.writerow(
                [q, _fmt(sim_t), _fmt(metrics.pu_throughput[q]), _fmt(metrics.su_throughput[q]), _fmt(metrics.mean_reward[q])]
                + [_fmt(v) for v in metrics.warning_frequency[q]]
            )

    ma = {
        "pu_system_throughput": moving_average(metrics.period_pu_throughput),
        "su_system_throughput": moving_average(metrics.period_su_throughput),
        "mean_reward": moving_average(metrics.period_reward),
    }
    with (out / "moving_average.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "sim_seconds", *ma])
        for i in range(len(ma["mean_reward"])):
            k = metrics.first_period + i + MOVING_AVERAGE_WINDOW - 1
            w.writerow([k, _fmt((k + 1) * period_s), *(_fmt(v[i]) for v in ma.values())])

    with (out / "training_log.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "su", "mean_loss", "epsilon", "lr", "mean_reward"])
        for r in results:
            for n in range(N):
                w.writerow([r.round_index, n, _fmt(r.losses[n]), _fmt(r.epsilons[n]), _fmt(r.learning_rates[n]), _fmt(r.mean_rewards[n])])

    if write_trace:
        with (out / "trace.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "su", "action_q", "action_z", "reward", "su_eff", "pu_eff", "warning_flags"])
            for r in results:
                for o in r.outcomes:
                    flags = "".join("1" if f else "0" for f in o.warnings)
                    for n in range(N):
                        w.writerow(
                            [
                                o.period,
                                n,
                                int(o.su_access[n]),
                                int(o.su_next_channels[n]),
                                int(o.su_rewards[n]),
                                _fmt(o.su_efficiencies[n]),
                                _fmt(o.pu_efficiencies[o.su_channels[n]]),
                                flags,
                            ]
                        )

    manifest = {
        "config": config.to_dict(),
        "num_rounds": config.num_rounds,
        "first_period": metrics.first_period,
        "moving_average_window": MOVING_AVERAGE_WINDOW,
        "files": sorted(p.name for p in out.glob("*.csv")),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass
class TimingResult:
    train_time_cached: float
    train_time_recompute: float
    mean_index: float
    iterations: int

    @property
    def speedup(self) -> float:
        return self.train_time_recompute / self.train_time_cached


def synthetic_agent(config: ExperimentConfig, mean_index: int, seed: int = 0, num_layers: int = 2):
    """A DEQN agent whose buffer holds ``Z`` consecutive experiences with mean index >= ``mean_index``.

    Returns the agent and the full input sequence from period 0, which the
    recompute variant needs.
    """
    M = config.scenario.num_pus
    Z = config.agent.buffer_Z
    net = esn.init_network(num_layers, config.neurons, M + 1, 2 * M, config.spectral_radius, seed=seed,
                           leak_beta=config.leak_beta)
    agent = DeqnAgent(net, config.agent, seed)
    rng = np.random.default_rng([seed, 0x71])
    # smallest start whose window mean is >= mean_index
    start = max(0, math.ceil(mean_index - (Z - 1) / 2))
    K = start + Z + 1
    inputs = np.zeros((K, M + 1))
    inputs[:, 0] = rng.standard_normal(K)
    inputs[np.arange(K), 1 + rng.integers(M, size=K)] = 1.0
    h = net.zero_state()
    hidden = np.empty((K, *h.shape))
    for k in range(K):
        h = esn.advance(net, h, inputs[k])
        hidden[k] = h
    for k in range(start, start + Z):
        agent.buffer.append(
            Experience(inputs[k], hidden[k], int(rng.integers(2 * M)), float(rng.integers(-2, 4)),
                       inputs[k + 1], hidden[k + 1], k)
        )
    return agent, inputs


def train_recompute(agent: DeqnAgent, inputs: np.ndarray) -> float:
    """Same updates as :meth:`DeqnAgent.train`, but every sampled experience re-runs the
    reservoir from ``h[0] = 0`` instead of using its cached hidden states."""
    cfg = agent.config
    buf = agent.buffer
    n = len(buf)
    net = agent.net
    W = net.W_out
    losses = []
    for _ in range(cfg.iterations_I):
        idx = agent.rng.integers(n, size=cfg.batch_size)
        u_k = np.empty((len(idx), net.feature_dim))
        u_k1 = np.empty_like(u_k)
        for b, i in enumerate(idx):
            k = buf.periods[i]
            h = net.zero_state()
            for t in range(k + 1):
                h = esn.advance(net, h, inputs[t])
            h1 = esn.advance(net, h, inputs[k + 1])
            u_k[b] = net.features(inputs[k], h)
            u_k1[b] = net.features(inputs[k + 1], h1)
        targets = double_q_targets(buf.rewards[idx], cfg.gamma, u_k1 @ W.T, u_k1 @ agent.W_target.T)
        W, loss = esn.train_readout_step(W, u_k, buf.actions[idx], targets, agent.lr)
        losses.append(loss)
    net.W_out = W
    return float(np.mean(losses))


def timing_probe(config: ExperimentConfig, mean_index: int = 150, iterations: Optional[int] = None, seed: int = 0) -> TimingResult:
    """Wall time of ``I`` training iterations with cached vs recomputed hidden states."""
    agent_cfg = config.agent if iterations is None else dataclasses.replace(config.agent, iterations_I=iterations)
    cfg = dataclasses.replace(config, agent=agent_cfg)
    agent, _ = synthetic_agent(cfg, mean_index, seed)
    t0 = time.perf_counter()
    agent.train()
    cached = time.perf_counter() - t0
    agent, inputs = synthetic_agent(cfg, mean_index, seed)
    t0 = time.perf_counter()
    train_recompute(agent, inputs)
    recompute = time.perf_counter() - t0
    return TimingResult(cached, recompute, float(np.mean(agent.buffer.periods[: len(agent.buffer)])), agent_cfg.iterations_I)


def toy_mdp_oracle(mdp: FiniteMdp = TOY_MDP) -> np.ndarray:
    """Tabular optimal Q values (value iteration to a 1e-10 sup-norm fixed point)."""
    return value_iteration(mdp, tol=1e-10)


def run_toy_mdp(seed: int, rounds: int = 50, num_layers: int = 1, config: AgentConfig | None = None,
                mdp: FiniteMdp = TOY_MDP, memoryless: bool = False) -> np.ndarray:
    """Train a DEQN on a finite MDP with one-hot observations and return its greedy policy."""
    config = config or AgentConfig(gamma=mdp.gamma)
    S, A = mdp.num_states, mdp.num_actions
    if memoryless:
        agent = memoryless_dqn_agent(S, A, config, seed)
    else:
        agent = DeqnAgent(esn.init_network(num_layers, 32, S, A, 0.9, seed=seed), config, seed)
    env = MdpEnv(mdp, seed)
    for q in range(rounds):
        run_round([agent], env, q)
    return greedy_policy(agent, S)
