"""Why the reservoir matters: fading memory and a task that needs one step of recall."""

# %%
import numpy as np

from deqn import esn
from deqn.agent import AgentConfig, DeqnAgent, run_round
from deqn.baselines import memoryless_dqn_agent
from deqn.toy import DelayedCueEnv

# %% Two different starting states forget their origin under the same input stream.
net = esn.init_network(2, 32, 5, 8, spectral_radius=0.9, seed=1)
rng = np.random.default_rng(0)
a = rng.uniform(-1, 1, net.zero_state().shape)
b = rng.uniform(-1, 1, net.zero_state().shape)
for step in range(1, 201):
    x = rng.standard_normal(5)
    a, b = esn.advance(net, a, x), esn.advance(net, b, x)
    if step in (1, 10, 50, 100, 200):
        print(f"step {step:3d}: max |a-b| = {np.max(np.abs(a - b)):.2e}")

# %% Reward arrives for repeating the cue shown one step earlier.
# Without memory the best possible score is a coin flip.
config = AgentConfig(gamma=0.0, epsilon_decay_per_round=0.015)


def score(agent, seed=0):
    env = DelayedCueEnv(seed)
    for q in range(20):
        run_round([agent], env, q)
    return np.mean([run_round([agent], env, 20 + q).mean_rewards[0] for q in range(4)])


print(f"memoryless readout: {score(memoryless_dqn_agent(2, 2, config, 0)):.3f}")
print(f"one reservoir:      {score(DeqnAgent(esn.init_network(1, 32, 2, 2, seed=0), config, 0)):.3f}")
