"""A shortened spectrum-sharing run: DEQN2 against random access and the PU-only yardstick.

Uses 30 rounds instead of 200, about a seventh of the full cost; the
epsilon schedule is compressed to match.
"""

# %%
import dataclasses
from pathlib import Path

import numpy as np

from deqn.harness import ExperimentConfig, run_experiment, run_pu_only_baseline

base = ExperimentConfig(seed=0, total_samples=9000)
base = dataclasses.replace(base, agent=dataclasses.replace(base.agent, epsilon_decay_per_round=0.01))
out = Path("demo_out")

deqn = run_experiment(base, out_dir=out, write_trace=False)
rand = run_experiment(base.with_overrides(agent_kind=("random",)))
pu_only = run_pu_only_baseline(base)

# %%
print("round   reward  warn-freq  PU Mb/s  SU Mb/s")
for q in range(0, base.num_rounds, 5):
    print(
        f"{q:5d}  {deqn.mean_reward[q]:+.3f}  {deqn.warning_frequency[q].mean():9.3f}"
        f"  {deqn.pu_throughput[q] / 1e6:7.1f}  {deqn.su_throughput[q] / 1e6:7.1f}"
    )

tail = slice(-5, None)
print(f"\nrandom access mean reward   {rand.mean_reward.mean():+.3f}")
print(f"DEQN2 last-5-round reward   {deqn.mean_reward[tail].mean():+.3f}")
print(f"PU throughput vs PU-only    {deqn.pu_throughput[tail].mean() / pu_only[tail].mean():.1%}")
print(f"CSV files written to {out.resolve()}")
