"""Channel gains, SINR and the CQI ladder on the default 4-PU / 6-SU layout."""

# %%
import numpy as np

from deqn import phy
from deqn.channel import ChannelBank, ChannelModelConfig, LinkKind, build_geometry
from deqn.config import ScenarioConfig

scenario = ScenarioConfig()
channel = ChannelModelConfig(seed=0)
geo = build_geometry(scenario, rng_seed=0)

kinds = {}
for link in geo.links:
    kinds[link.kind] = kinds.get(link.kind, 0) + 1
print(f"{len(geo.links)} links")
for kind, n in kinds.items():
    print(f"  {kind.value:8s} {n}")

# %% Desired links sit 400-450 m apart; everything else is wherever the dice fell.
d = geo.distances()
desired = np.array([l.kind is LinkKind.DESIRED for l in geo.links])
print(f"desired link lengths: {d[desired].min():.0f}-{d[desired].max():.0f} m")
print(f"other links:          {d[~desired].min():.0f}-{d[~desired].max():.0f} m")

# %% A second of fading on PU 0's own link, sampled every 100 ms.
bank = ChannelBank(geo, channel)
g = bank.gains(0, 1000)
pu0 = geo.link_matrix[0, 0]
snr_db = 10 * np.log10(scenario.pu_power_mw * np.abs(g[pu0]) ** 2 / scenario.noise_mw)
print("PU0 SNR (dB):", np.round(snr_db[::100], 1))

# %% How interference from one SU moves PU 0 down the CQI ladder.
su = scenario.num_pus  # first SU
interferer = geo.link_matrix[su, 0]
sig = scenario.pu_power_mw * np.abs(g[pu0]) ** 2
intf = scenario.su_power_mw * np.abs(g[interferer]) ** 2
for label, sinr in (("alone", sig / scenario.noise_mw), ("shared", sig / (intf + scenario.noise_mw))):
    eff = phy.efficiency_from_sinr(sinr).mean()
    print(f"{label:6s} mean efficiency {eff:.3f} bit/symbol -> {phy.throughput(eff, scenario.bandwidth_hz) / 1e6:.1f} Mb/s")
