import csv
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deqn.channel import (
    ChannelBank,
    ChannelModelConfig,
    LinkKind,
    LinkSpec,
    build_geometry,
    expected_link_count,
    export_gains_csv,
    export_geometry_csv,
    generate_gain_series,
    path_loss,
)
from deqn.config import ConfigError, ScenarioConfig


def count_by_hand(m, n):
    desired = m + n
    su_su = n * (n - 1)
    return desired + su_su + m * n + m * n + m * n


@pytest.mark.parametrize("m,n,total", [(4, 6, 112), (1, 1, 5), (2, 3, 29)])
def test_link_count(m, n, total):
    assert count_by_hand(m, n) == total
    geo = build_geometry(ScenarioConfig(num_pus=m, num_sus=n), 0)
    assert len(geo.links) == total == expected_link_count(m, n)


def test_link_kinds_for_default_scenario():
    geo = build_geometry(ScenarioConfig(), 3)
    counts = Counter(l.kind for l in geo.links)
    assert counts == {
        LinkKind.DESIRED: 10,
        LinkKind.SU_SU_INTERFERENCE: 30,
        LinkKind.SUT_TO_PUR: 24,
        LinkKind.PUT_TO_SUR: 24,
        LinkKind.SENSING: 24,
    }
    assert [l.index for l in geo.links] == list(range(112))
    for l in geo.links:
        assert l.tx_node != l.rx_node
        if l.kind is LinkKind.SENSING:
            assert l.tx_node.startswith("PUT") and l.rx_node.startswith("SUT")
        if l.kind is LinkKind.SUT_TO_PUR:
            assert l.tx_node.startswith("SUT") and l.rx_node.startswith("PUR")
        if l.kind is LinkKind.PUT_TO_SUR:
            assert l.tx_node.startswith("PUT") and l.rx_node.startswith("SUR")


@pytest.mark.parametrize("seed", range(5))
def test_positions_and_desired_distances(seed):
    sc = ScenarioConfig()
    geo = build_geometry(sc, seed)
    for p in geo.positions.values():
        assert 0 <= p.x <= sc.area_m and 0 <= p.y <= sc.area_m
    for l in geo.links:
        if l.kind is LinkKind.DESIRED:
            assert 400 <= geo.link_distance(l) <= 450


def test_distance_band_must_fit():
    with pytest.raises(ConfigError):
        build_geometry(ScenarioConfig(area_m=250.0), 0)


def _link(index=0):
    return LinkSpec(index, "A", "B", LinkKind.DESIRED)


class _TwoPoints:
    """Minimal geometry stand-in with a fixed distance."""

    def __init__(self, d):
        self.d = d

    def link_distance(self, link):
        return self.d


def _fading(config, n, index=0, d=100.0):
    g = generate_gain_series(_link(index), _TwoPoints(d), config, n).gains
    return g / np.sqrt(path_loss(d, config))


def test_lag_one_autocorrelation():
    cfg = ChannelModelConfig(shadowing_sigma_db=0.0, fading_correlation=0.999, seed=1)
    f = _fading(cfg, 100_000)
    r1 = np.real(np.vdot(f[:-1], f[1:])) / np.real(np.vdot(f, f))
    assert r1 == pytest.approx(0.999, abs=0.01)


def test_unit_power():
    cfg = ChannelModelConfig(shadowing_sigma_db=0.0, fading_correlation=0.0, seed=2)
    p = np.abs(_fading(cfg, 100_000)) ** 2
    sigma = p.std() / np.sqrt(p.size)
    assert abs(p.mean() - 1.0) < 3 * sigma


def test_unit_power_correlated_process():
    # effective sample size shrinks by (1 - rho^2) / (1 + rho^2) for |f|^2 of an AR(1) process
    rho = 0.99
    cfg = ChannelModelConfig(shadowing_sigma_db=0.0, fading_correlation=rho, seed=4)
    p = np.abs(_fading(cfg, 400_000)) ** 2
    n_eff = p.size * (1 - rho**4) / (1 + rho**4)
    assert abs(p.mean() - 1.0) < 3 / np.sqrt(n_eff)


def test_links_are_independent():
    cfg = ChannelModelConfig(shadowing_sigma_db=0.0, fading_correlation=0.9, seed=7)
    f1 = _fading(cfg, 100_000, index=5)
    f2 = _fading(cfg, 100_000, index=6)
    xc = abs(np.vdot(f1, f2)) / np.sqrt(np.real(np.vdot(f1, f1)) * np.real(np.vdot(f2, f2)))
    assert xc < 0.05


@given(
    d1=st.floats(1.0, 5000.0),
    d2=st.floats(1.0, 5000.0),
    n=st.floats(0.5, 6.0),
)
def test_path_loss_strictly_decreasing(d1, d2, n):
    cfg = ChannelModelConfig(path_loss_exponent=n)
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    if hi / lo < 1 + 1e-9:
        return
    assert path_loss(lo, cfg) > path_loss(hi, cfg)


def test_path_loss_value():
    cfg = ChannelModelConfig()
    assert path_loss(100.0, cfg) == pytest.approx(10 ** (-(46 + 70) / 10), rel=1e-12)


def test_no_shadowing_no_fading_is_pure_path_loss():
    cfg = ChannelModelConfig(shadowing_sigma_db=0.0, fading=False)
    s = generate_gain_series(_link(), _TwoPoints(321.0), cfg, 50)
    np.testing.assert_allclose(s.power, path_loss(321.0, cfg), rtol=1e-12)


def test_gains_finite_and_positive():
    geo = build_geometry(ScenarioConfig(), 0)
    bank = ChannelBank(geo, ChannelModelConfig())
    g = bank.gains(0, 2000)
    assert np.all(np.isfinite(g)) and np.all(np.abs(g) ** 2 > 0)


def test_regeneration_is_bit_identical():
    geo = build_geometry(ScenarioConfig(), 11)
    cfg = ChannelModelConfig(seed=11)
    for link in geo.links[::17]:
        a = generate_gain_series(link, geo, cfg, 500).gains
        b = generate_gain_series(link, geo, cfg, 500).gains
        assert np.array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(cuts=st.lists(st.integers(1, 300), min_size=1, max_size=6), chunk=st.integers(1, 64))
def test_chunked_generation_matches_one_shot(cuts, chunk):
    geo = build_geometry(ScenarioConfig(num_pus=1, num_sus=2), 0)
    cfg = ChannelModelConfig(seed=3)
    total = sum(cuts)
    bank = ChannelBank(geo, cfg, chunk_slots=chunk)
    pieces, t = [], 0
    for c in cuts:
        pieces.append(bank.gains(t, t + c))
        t += c
    chunked = np.concatenate(pieces, axis=1)
    one_shot = np.stack([generate_gain_series(l, geo, cfg, total).gains for l in geo.links])
    assert np.array_equal(chunked, one_shot)


def test_bank_rejects_going_back():
    bank = ChannelBank(build_geometry(ScenarioConfig(), 0), ChannelModelConfig(), chunk_slots=16)
    bank.gains(0, 10)
    bank.gains(100, 110)
    with pytest.raises(ValueError):
        bank.gains(5, 6)


def test_series_independent_of_generation_order():
    geo = build_geometry(ScenarioConfig(), 0)
    cfg = ChannelModelConfig()
    forward = {l.index: generate_gain_series(l, geo, cfg, 64).gains for l in geo.links}
    for l in reversed(geo.links):
        assert np.array_equal(generate_gain_series(l, geo, cfg, 64).gains, forward[l.index])


def test_zero_distance_rejected():
    with pytest.raises(ValueError):
        generate_gain_series(_link(), _TwoPoints(0.0), ChannelModelConfig(), 10)
    with pytest.raises(ValueError):
        path_loss(0.0, ChannelModelConfig())


@pytest.mark.parametrize(
    "kw", [{"path_loss_exponent": 0.0}, {"shadowing_sigma_db": -1.0}, {"fading_correlation": 1.0}]
)
def test_channel_config_validation(kw):
    with pytest.raises(ConfigError):
        ChannelModelConfig(**kw)


def test_csv_exports(tmp_path):
    geo = build_geometry(ScenarioConfig(num_pus=1, num_sus=1), 0)
    cfg = ChannelModelConfig()
    export_geometry_csv(geo, tmp_path / "geo.csv")
    series = [generate_gain_series(l, geo, cfg, 3) for l in geo.links]
    export_gains_csv(series, tmp_path / "gains.csv")
    rows = list(csv.reader((tmp_path / "gains.csv").open()))
    assert rows[0] == ["link_id", "t", "re", "im"]
    assert len(rows) == 1 + 5 * 3
    first = series[0].gains[0]
    assert complex(float(rows[1][2]), float(rows[1][3])) == first
    geo_rows = list(csv.reader((tmp_path / "geo.csv").open()))
    assert len(geo_rows) == 6
