"""Small single-agent environments with known optima, plus a value-iteration oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ToyOutcome:
    rewards: np.ndarray


@dataclass(frozen=True)
class FiniteMdp:
    """``transitions[s, a, s']`` probabilities and ``rewards[s, a]``."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    @classmethod
    def deterministic(cls, next_state, rewards, gamma: float) -> "FiniteMdp":
        next_state = np.asarray(next_state)
        S, A = next_state.shape
        P = np.zeros((S, A, S))
        P[np.arange(S)[:, None], np.arange(A)[None, :], next_state] = 1.0
        return cls(P, np.asarray(rewards, dtype=float), gamma)

    @property
    def num_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_actions(self) -> int:
        return self.rewards.shape[1]


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal action values by repeated Bellman backups until the sup-norm change is below ``tol``."""
    if not 0 <= mdp.gamma < 1:
        raise ValueError("value iteration needs gamma < 1")
    Q = np.zeros_like(mdp.rewards)
    for _ in range(max_iter):
        Q_new = mdp.rewards + mdp.gamma * mdp.transitions @ Q.max(axis=1)
        if np.max(np.abs(Q_new - Q)) < tol:
            return Q_new
        Q = Q_new
    raise RuntimeError(f"value iteration did not converge in {max_iter} iterations")


# 4-state shift-register MDP: s' = (2s + a) mod 4
TOY_MDP = FiniteMdp.deterministic(
    next_state=[[0, 1], [2, 3], [0, 1], [2, 3]],
    rewards=[[0.0, 0.5], [1.0, 0.0], [0.0, 0.6], [0.8, 0.0]],
    gamma=0.9,
)


class MdpEnv:
    """Single-agent wrapper observing the one-hot state of a finite MDP."""

    def __init__(self, mdp: FiniteMdp, seed: int = 0, start_state: int = 0):
        self.mdp = mdp
        self.rng = np.random.default_rng([seed, 0x3D9])
        self.state = start_state

    def _obs(self, s: int) -> np.ndarray:
        v = np.zeros(self.mdp.num_states)
        v[s] = 1.0
        return v

    @property
    def states(self) -> list[np.ndarray]:
        return [self._obs(self.state)]

    def step(self, actions):
        (a,) = actions
        s = self.state
        r = self.mdp.rewards[s, a]
        self.state = int(self.rng.choice(self.mdp.num_states, p=self.mdp.transitions[s, a]))
        return ToyOutcome(np.array([r])), self.states


class BanditEnv:
    """Stateless multi-armed bandit with fixed per-arm rewards and a constant observation."""

    def __init__(self, arm_rewards=(0.0, 1.0)):
        self.arm_rewards = np.asarray(arm_rewards, dtype=float)

    @property
    def states(self) -> list[np.ndarray]:
        return [np.ones(1)]

    def step(self, actions):
        (a,) = actions
        return ToyOutcome(np.array([self.arm_rewards[a]])), self.states


class DelayedCueEnv:
    """Reward 1 iff the action equals the cue shown one step *earlier*.

    The current observation is independent of the rewarded answer, so a
    policy without memory earns 0.5 on average, the same as random.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng([seed, 0xC0E])
        self.prev_cue = int(self.rng.integers(2))
        self.cue = int(self.rng.integers(2))

    @property
    def states(self) -> list[np.ndarray]:
        v = np.zeros(2)
        v[self.cue] = 1.0
        return [v]

    def step(self, actions):
        (a,) = actions
        r = 1.0 if a == self.prev_cue else 0.0
        self.prev_cue, self.cue = self.cue, int(self.rng.integers(2))
        return ToyOutcome(np.array([r])), self.states


def greedy_policy(agent, num_states: int) -> np.ndarray:
    """Greedy action per one-hot state, averaging Q over the hidden states cached with that state
    during the most recent round."""
    buf = agent.last_buffer if agent.last_buffer is not None else agent.buffer
    n = len(buf)
    u_k, _ = buf.features()
    q_all = u_k @ agent.net.W_out.T
    which = np.argmax(buf.states[:n], axis=1)
    policy = np.empty(num_states, dtype=np.int64)
    for s in range(num_states):
        mask = which == s
        if mask.any():
            q = q_all[mask].mean(axis=0)
        else:
            x = np.zeros(num_states)
            x[s] = 1.0
            h_mean = buf.hidden[:n].mean(axis=0)
            q = agent.net.W_out @ agent.net.features(x, h_mean)
        policy[s] = int(np.argmax(q))
    return policy
