"""DEQN agent: epsilon-greedy control, hidden-state-caching replay and double-Q training.

Evaluation and target networks share one reservoir and differ only in their
readout, so a single hidden-state stream serves both. Every stored experience
carries the reservoir states for ``s[k]`` and ``s[k+1]``; training therefore
never re-runs the reservoir and may sample experiences in any order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import esn


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    epsilon0: float = 0.3
    epsilon_decay_per_round: float = 0.0015
    lr_initial: float = 0.01
    lr_reduced: float = 0.001
    lr_switch_epsilon: float = 0.2
    batch_size: int = 32
    iterations_I: int = 200
    buffer_Z: int = 300

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon0 <= 1 or self.epsilon_decay_per_round < 0:
            raise ValueError("epsilon0 must lie in [0, 1] and the decay be non-negative")
        if self.lr_initial <= 0 or self.lr_reduced <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.iterations_I < 0 or self.buffer_Z < 1:
            raise ValueError("batch_size, buffer_Z must be >= 1 and iterations_I >= 0")

    def epsilon(self, round_index: int) -> float:
        # rounding keeps the schedule landing on exactly 0.0
        return max(0.0, round(self.epsilon0 - round_index * self.epsilon_decay_per_round, 12))

    def learning_rate(self, epsilon: float) -> float:
        return self.lr_reduced if epsilon < self.lr_switch_epsilon else self.lr_initial


@dataclass(frozen=True)
class Experience:
    state_k: np.ndarray
    hidden_k: np.ndarray
    action_k: int
    reward_k: float
    state_k1: np.ndarray
    hidden_k1: np.ndarray
    period: int = -1


class ReplayBuffer:
    """Fixed-capacity experience store backed by preallocated arrays."""

    def __init__(self, capacity: int, state_dim: int, hidden_shape: tuple[int, int]):
        self.capacity = capacity
        self.states = np.empty((capacity, state_dim))
        self.next_states = np.empty((capacity, state_dim))
        self.hidden = np.empty((capacity, *hidden_shape))
        self.next_hidden = np.empty((capacity, *hidden_shape))
        self.actions = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.periods = np.empty(capacity, dtype=np.int64)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def clear(self) -> None:
        self.size = 0

    def append(self, exp: Experience) -> None:
        if self.size >= self.capacity:
            raise OverflowError(f"replay buffer full ({self.capacity})")
        i = self.size
        self.states[i] = exp.state_k
        self.hidden[i] = exp.hidden_k
        self.actions[i] = exp.action_k
        self.rewards[i] = exp.reward_k
        self.next_states[i] = exp.state_k1
        self.next_hidden[i] = exp.hidden_k1
        self.periods[i] = exp.period
        self.size += 1

    def __getitem__(self, i: int) -> Experience:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Experience(
            self.states[i],
            self.hidden[i],
            int(self.actions[i]),
            float(self.rewards[i]),
            self.next_states[i],
            self.next_hidden[i],
            int(self.periods[i]),
        )

    @property
    def records(self) -> list[Experience]:
        return [self[i] for i in range(self.size)]

    def features(self) -> tuple[np.ndarray, np.ndarray]:
        """Readout inputs ``u[k]`` and ``u[k+1]`` for every stored experience."""
        n = self.size
        u_k = np.concatenate([self.states[:n], self.hidden[:n].reshape(n, -1)], axis=1)
        u_k1 = np.concatenate([self.next_states[:n], self.next_hidden[:n].reshape(n, -1)], axis=1)
        return u_k, u_k1


def as_input(state) -> np.ndarray:
    vec = getattr(state, "vector", state)
    return np.asarray(vec, dtype=float)


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over a Q-vector; greedy ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(q_values.shape[0]))
    return int(np.argmax(q_values))


def double_q_target(reward: float, gamma: float, o_eval_next: np.ndarray, o_target_next: np.ndarray) -> float:
    y = int(np.argmax(o_eval_next))
    return float(reward + gamma * o_target_next[y])


def double_q_targets(rewards, gamma, o_eval_next, o_target_next) -> np.ndarray:
    y = np.argmax(o_eval_next, axis=1)
    return rewards + gamma * o_target_next[np.arange(len(y)), y]


class DeqnAgent:
    def __init__(
        self,
        net: esn.DeqnNetwork,
        config: AgentConfig,
        seed: int = 0,
        keep_history: bool = False,
        verify_streams: bool = False,
    ):
        self.net = net
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng([seed, 0xA6])
        self.W_target = net.W_out.copy()
        self.buffer = self._new_buffer()
        # snapshot of the previous round's experiences, kept for inspection only
        self.last_buffer: Optional[ReplayBuffer] = None
        self.round_index = 0
        self.epsilon = config.epsilon(0)
        self.lr = config.learning_rate(self.epsilon)
        self.verify_streams = verify_streams
        # hidden state after consuming `_hidden_input`; starts at h[0] = 0
        self.hidden = net.zero_state()
        self._hidden_input: Optional[np.ndarray] = None
        self._prev_hidden = self.hidden
        self._current_hidden = self.hidden
        self._period = 0
        self.history: Optional[list[np.ndarray]] = [] if keep_history else None

    @property
    def num_actions(self) -> int:
        return self.net.output_dim

    def _new_buffer(self) -> ReplayBuffer:
        return ReplayBuffer(self.config.buffer_Z, self.net.input_dim, (self.net.num_layers, self.net.neurons))

    def begin_round(self, round_index: int) -> None:
        self.round_index = round_index
        self.epsilon = self.config.epsilon(round_index)
        self.lr = self.config.learning_rate(self.epsilon)
        self.buffer.clear()

    def _hidden_for(self, x: np.ndarray) -> np.ndarray:
        if self._hidden_input is not None and np.array_equal(self._hidden_input, x):
            h = self.hidden
            if self.verify_streams:
                # evaluation stream recomputed independently must equal the cached target stream
                h_eval = esn.advance(self.net, self._prev_hidden, x)
                if not np.array_equal(h_eval, h):
                    raise AssertionError("evaluation and target hidden streams diverged")
            return h
        h = esn.advance(self.net, self.hidden, x)
        self._prev_hidden = self.hidden
        self._commit(x, h)
        return h

    def _commit(self, x, h):
        self.hidden = h
        self._hidden_input = x
        if self.history is not None:
            self.history.append(x.copy())

    def act(self, state) -> int:
        x = as_input(state)
        h = self._hidden_for(x)
        self._current_hidden = h
        return select_action(esn.readout(self.net, x, h), self.epsilon, self.rng)

    def record(self, state, action: int, reward: float, next_state) -> None:
        x, x1 = as_input(state), as_input(next_state)
        h_k = self._current_hidden
        h_k1 = esn.advance(self.net, h_k, x1)
        self.buffer.append(Experience(x, h_k, int(action), float(reward), x1, h_k1, self._period))
        self._period += 1
        self._prev_hidden = h_k
        self._commit(x1, h_k1)

    def train(self) -> float:
        cfg = self.config
        n = len(self.buffer)
        if cfg.iterations_I == 0 or n == 0:
            return float("nan")
        u_k, u_k1 = self.buffer.features()
        actions = self.buffer.actions[:n]
        rewards = self.buffer.rewards[:n]
        losses = np.empty(cfg.iterations_I)
        W = self.net.W_out
        for it in range(cfg.iterations_I):
            idx = self.rng.integers(n, size=cfg.batch_size)
            nxt = u_k1[idx]
            targets = double_q_targets(rewards[idx], cfg.gamma, nxt @ W.T, nxt @ self.W_target.T)
            W, losses[it] = esn.train_readout_step(W, u_k[idx], actions[idx], targets, self.lr)
            if not np.isfinite(losses[it]) or not np.all(np.isfinite(W)):
                raise DivergenceError(f"non-finite loss in round {self.round_index}, iteration {it}")
        self.net.W_out = W
        return float(losses.mean())

    def sync_target(self) -> None:
        self.W_target = self.net.W_out.copy()

    def end_round(self) -> None:
        """Retire this round's experiences; the working buffer starts empty."""
        self.last_buffer = self.buffer
        self.buffer = self._new_buffer()

    def greedy_action(self, state, hidden: np.ndarray) -> int:
        return int(np.argmax(esn.readout(self.net, as_input(state), hidden)))


def sync_target(agent: DeqnAgent) -> None:
    agent.sync_target()


@dataclass
class RoundResult:
    round_index: int
    outcomes: list
    losses: list[float]
    epsilons: list[float]
    learning_rates: list[float]
    mean_rewards: np.ndarray
    train_seconds: float
    collect_seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def run_round(agents: Sequence, env, round_index: int, num_samples: Optional[int] = None) -> RoundResult:
    """Collect ``Z`` periods of experience, train every agent, sync targets and empty the buffers.

    ``env`` must expose ``states`` (current per-agent observations) and
    ``step(actions) -> (outcome, next_states)`` where ``outcome.rewards`` holds
    one reward per agent.
    """
    for ag in agents:
        ag.begin_round(round_index)
    Z = num_samples if num_samples is not None else agents[0].config.buffer_Z
    states = list(env.states)
    outcomes = []
    rewards_sum = np.zeros(len(agents))
    t0 = time.perf_counter()
    for _ in range(Z):
        actions = [ag.act(s) for ag, s in zip(agents, states)]
        outcome, next_states = env.step(actions)
        r = np.asarray(outcome.rewards, dtype=float)
        for ag, s, a, ri, s1 in zip(agents, states, actions, r, next_states):
            ag.record(s, a, ri, s1)
        rewards_sum += r
        outcomes.append(outcome)
        states = list(next_states)
    t1 = time.perf_counter()
    losses = [ag.train() for ag in agents]
    t2 = time.perf_counter()
    for ag in agents:
        ag.sync_target()
        ag.end_round()
    return RoundResult(
        round_index,
        outcomes,
        losses,
        [ag.epsilon for ag in agents],
        [ag.lr for ag in agents],
        rewards_sum / Z,
        train_seconds=t2 - t1,
        collect_seconds=t1 - t0,
    )


def save_agent(agent: DeqnAgent, path) -> None:
    net = agent.net
    meta = {
        "version": esn.CHECKPOINT_VERSION,
        "num_layers": net.num_layers,
        "neurons": net.neurons,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "leak_beta": net.layers[0].leak_beta if net.layers else None,
        "reservoir_seed": net.seed,
        "spectral_radius": net.spectral_radius,
        "sparsity": net.sparsity,
        "input_scale": net.input_scale,
        "round_index": agent.round_index,
        "epsilon": agent.epsilon,
        "lr": agent.lr,
    }
    with Path(path).open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), W_out=net.W_out, W_target=agent.W_target)


def load_agent(path, config: AgentConfig, seed: int = 0) -> DeqnAgent:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        W_out, W_target = data["W_out"].copy(), data["W_target"].copy()
    net = esn.init_network(
        meta["num_layers"],
        meta["neurons"],
        meta["input_dim"],
        meta["output_dim"],
        meta["spectral_radius"],
        meta["reservoir_seed"],
        leak_beta=meta["leak_beta"] if meta["leak_beta"] is not None else 0.7,
        sparsity=meta["sparsity"],
        input_scale=meta["input_scale"],
    )
    net.W_out = W_out
    agent = DeqnAgent(net, config, seed)
    agent.W_target = W_target
    agent.begin_round(meta["round_index"])
    return agent
