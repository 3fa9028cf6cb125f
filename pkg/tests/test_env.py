import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deqn import phy
from deqn.channel import ChannelBank, ChannelModelConfig
from deqn.config import ScenarioConfig
from deqn.env import DssEnvironment, PuSchedule, SuAction, pu_activity, reward_of


def test_square_wave_multiple_three():
    s = PuSchedule(0, 3)
    assert "".join("A" if pu_activity(s, k) else "I" for k in range(9)) == "AAAIIIAAA"


def test_square_wave_multiple_one_alternates():
    s = PuSchedule(0, 1)
    assert [pu_activity(s, k) for k in range(6)] == [True, False] * 3


def test_square_wave_multiple_four_first_block():
    s = PuSchedule(0, 4)
    assert all(pu_activity(s, k) for k in range(4)) and not pu_activity(s, 4)


def test_phase_shifts_pattern():
    assert [pu_activity(PuSchedule(0, 2, phase=1), k) for k in range(5)] == [True, False, False, True, True]


def test_pulse_schedule():
    s = PuSchedule(0, 3, active_periods=1)
    assert [pu_activity(s, k) for k in range(7)] == [True, False, False, True, False, False, True]


def test_schedule_validation():
    with pytest.raises(ValueError):
        PuSchedule(0, 0)
    with pytest.raises(ValueError):
        PuSchedule(0, 3, active_periods=4)
    with pytest.raises(ValueError):
        pu_activity(PuSchedule(0, 3), -1)


@given(m=st.integers(1, 8), k=st.integers(0, 10_000))
def test_square_wave_half_duty(m, k):
    s = PuSchedule(0, m)
    window = [pu_activity(s, j) for j in range(k - k % (2 * m), k - k % (2 * m) + 2 * m)]
    assert sum(window) == m


@given(m=st.integers(1, 8))
def test_action_bijection(m):
    seen = set()
    for a in range(2 * m):
        act = SuAction.from_flat(a, m)
        assert act.flat(m) == a and act.access in (0, 1) and 0 <= act.next_sense_channel < m
        seen.add((act.access, act.next_sense_channel))
    assert len(seen) == 2 * m
    with pytest.raises(ValueError):
        SuAction.from_flat(2 * m, m)


# hand-written tier table for the boundary grid
SU_GRID = {0.999: 0, 1.0: 1, 1.999: 1, 2.0: 2, 2.999: 2, 3.0: 3}


@pytest.mark.parametrize("su_eff,tier", SU_GRID.items())
@pytest.mark.parametrize("pu_eff", [None, 1.499, 1.5, 5.5547])
def test_reward_grid(su_eff, tier, pu_eff):
    expected = -2 if (pu_eff is not None and pu_eff < 1.5) else tier
    assert reward_of(True, pu_eff, su_eff) == expected
    assert reward_of(False, pu_eff, su_eff) == -1


@pytest.mark.parametrize("args,expected", [((True, 1.49, 5.0), -2), ((False, None, None), -1), ((True, 2.0, 2.5), 2)])
def test_reward_examples(args, expected):
    assert reward_of(*args) == expected


@given(accessed=st.booleans(), pu=st.one_of(st.none(), st.floats(0, 6)), su=st.floats(0, 6))
def test_reward_codomain(accessed, pu, su):
    assert reward_of(accessed, pu, su) in {-2, -1, 0, 1, 2, 3}


def _env(seed=0, **kw):
    return DssEnvironment(ScenarioConfig(**kw), ChannelModelConfig(seed=seed), seed)


def test_one_hot_states():
    env = _env()
    states = env.reset()
    for s in states:
        assert s.sensed_channel_onehot.sum() == 1 and set(np.unique(s.sensed_channel_onehot)) <= {0.0, 1.0}
        assert np.isfinite(s.energy_feature)
    st2 = env.observe(0, 1, env.period)
    assert st2.sensed_channel_onehot.tolist() == [0, 1, 0, 0] and st2.channel == 1
    assert st2.vector.shape == (5,)
    with pytest.raises(ValueError):
        env.observe(0, 4, env.period)


def test_energy_feature_zscore():
    env = _env()
    env.set_calibration(np.full(6, -9.0), np.full(6, 2.0))
    assert env.energy_feature(3, 1e-9) == 0.0
    assert env.energy_feature(3, 1e-7) == pytest.approx(1.0)


def test_feature_needs_calibration():
    with pytest.raises(RuntimeError):
        _env().energy_feature(0, 1.0)


def test_observe_reproducible():
    vals = []
    for _ in range(2):
        env = _env(seed=5)
        env.reset(initial_channels=[0] * 6)
        vals.append(env.observe(1, 1, env.period).energy_feature)
    assert vals[0] == vals[1]


def test_calibration_consumes_idle_periods():
    env = DssEnvironment(ScenarioConfig(), ChannelModelConfig(), 0, calibration_samples=50)
    env.reset()
    assert env.period == 50
    assert env.mu.shape == (6,) and np.all(env.sigma > 0)


def test_all_idle_rewards_and_no_su_interference():
    env = _env(seed=2)
    env.reset()
    M = env.num_channels
    for _ in range(20):
        k = env.period
        out, _ = env.step([s.channel for s in env.states])  # access=0
        assert np.all(out.su_rewards == -1)
        assert np.all(out.su_throughputs == 0) and not out.warnings_received.any()
        # independent PU-only evaluation straight from a fresh channel realisation
        bank = ChannelBank(env.geometry, env.channel_config)
        T, Ts = env.scenario.period_T, env.scenario.sense_Ts
        g = bank.gains(k * T + Ts, (k + 1) * T) if k * T + Ts >= 0 else None
        for m in range(M):
            if not out.pu_active[m]:
                assert np.isnan(out.pu_efficiencies[m]) and out.pu_throughputs[m] == 0
                continue
            link = env.geometry.link_matrix[m, m]
            sinr = env.scenario.pu_power_mw * np.abs(g[link]) ** 2 / env.scenario.noise_mw
            eff = np.mean([phy.sinr_to_efficiency(10 * np.log10(x))[1] for x in sinr])
            assert out.pu_efficiencies[m] == pytest.approx(eff, rel=1e-12)


def test_warnings_imply_active_pu():
    env = _env(seed=4)
    env.reset()
    rng = np.random.default_rng(0)
    for _ in range(200):
        out, states = env.step(rng.integers(8, size=6))
        assert not np.any(out.warnings & ~out.pu_active)
        assert np.all(out.warnings_received <= out.warnings)
        np.testing.assert_array_equal(out.warnings, out.pu_active & (np.nan_to_num(out.pu_efficiencies, nan=9) < 1.5))
        idle = ~out.su_access
        assert np.all(out.su_rewards[idle] == -1)
        assert set(out.su_rewards.tolist()) <= {-2, -1, 0, 1, 2, 3}
        assert all(s.channel == c for s, c in zip(states, out.su_next_channels))


def test_invalid_actions():
    env = _env()
    env.reset()
    with pytest.raises(ValueError):
        env.step([0] * 5)
    with pytest.raises(ValueError):
        env.step([8] + [0] * 5)


class StubBank:
    """Constant gains per link; records the slot windows requested."""

    def __init__(self, gains):
        self.g = np.asarray(gains, dtype=complex)
        self.calls = []

    def gains(self, start, stop):
        self.calls.append((start, stop))
        return np.repeat(self.g[:, None], stop - start, axis=1)


def _tiny_env(link_power, pu_on):
    """One PU, one SU with hand-set link powers keyed by (tx_user, rx_user)."""
    sc = ScenarioConfig(num_pus=1, num_sus=1)
    env = DssEnvironment(sc, ChannelModelConfig(), 0, schedules=[PuSchedule(0, 1, phase=0 if pu_on else 1)],
                         calibration_samples=4)
    g = np.full(len(env.geometry.links), 1e-30, dtype=complex)
    lm = env.geometry.link_matrix
    for (i, j), p in link_power.items():
        g[lm[i, j]] = np.sqrt(p)
    env.bank = StubBank(g)
    env.reset(initial_channels=[0])
    # keep the PU pattern aligned with the requested state in the next step
    if env.pu_active(env.period)[0] != pu_on:
        env.step([0])
    return env


def test_low_pu_efficiency_triggers_penalty_and_warning():
    n = ScenarioConfig().noise_mw
    # SINR at the PU receiver ~ 0 dB -> efficiency 0.877 < 1.5
    env = _tiny_env({(0, 0): 1e4 * n / 500, (1, 0): 1e4 * n / 500, (1, 1): 1e6 * n / 500}, pu_on=True)
    out, _ = env.step([1])  # access channel 0, sense channel 0 next
    assert out.pu_active[0] and out.pu_efficiencies[0] < 1.5
    assert out.su_rewards[0] == -2
    assert out.warnings[0] and out.warnings_received[0]


def test_strong_link_on_idle_channel_earns_three():
    n = ScenarioConfig().noise_mw
    env = _tiny_env({(0, 0): 1e4 * n / 500, (1, 1): 1e3 * n / 500}, pu_on=False)
    out, _ = env.step([1])
    sinr_db = 10 * np.log10(500 * 1e3 * n / 500 / n)
    assert phy.sinr_to_efficiency(sinr_db)[1] >= 3
    assert not out.pu_active[0] and np.isnan(out.pu_efficiencies[0])
    assert out.su_efficiencies[0] == phy.sinr_to_efficiency(sinr_db)[1]
    assert out.su_rewards[0] == 3
    assert out.su_throughputs[0] == pytest.approx(out.su_efficiencies[0] * 5e6)


def test_slot_accounting():
    env = _tiny_env({(0, 0): 1.0, (1, 1): 1.0}, pu_on=True)
    T, Ts = env.scenario.period_T, env.scenario.sense_Ts
    for _ in range(3):
        k = env.period
        env.bank.calls.clear()
        env.step([0])
        tx = [c for c in env.bank.calls if c[0] == k * T + Ts]
        sense = [c for c in env.bank.calls if c[0] == (k + 1) * T]
        assert tx == [(k * T + Ts, (k + 1) * T)] and tx[0][1] - tx[0][0] == T - Ts == 8
        assert sense == [((k + 1) * T, (k + 1) * T + Ts)] and Ts == 2


def test_environment_deterministic():
    runs = []
    for _ in range(2):
        env = _env(seed=9)
        env.reset()
        rng = np.random.default_rng(1)
        trace = []
        for _ in range(30):
            out, states = env.step(rng.integers(8, size=6))
            trace.append((out.su_rewards.copy(), out.pu_throughputs.copy(), [s.energy_feature for s in states]))
        runs.append(trace)
    for a, b in zip(*runs):
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) and a[2] == b[2]
