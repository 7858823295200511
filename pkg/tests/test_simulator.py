from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mass_balance_steady, mass_balance_transient

from ieq_occupancy.data import available_channels
from ieq_occupancy.simulator import (
    OccupancySchedule,
    StabilityError,
    ZoneConfig,
    generate_schedule,
    load_zone_document,
    make_preset_zones,
    simulate_trace,
    simulate_zone,
    steady_state,
    with_zero_noise,
)


def quiet_zone(**overrides) -> ZoneConfig:
    """V=30 m3 at 1 ACH with no VOC events, no daylight and zero noise."""
    base = dict(
        name="test", volume=30.0, ventilation_rate=1.0, outdoor_co2=420.0,
        co2_per_occupant=0.018, voc_event_rate=0.0, has_daylight=False,
        noise={k: 0.0 for k in ("co2", "voc", "light", "temperature", "humidity")},
    )
    base.update(overrides)
    return ZoneConfig(**base)


def constant_schedule(count, hours, step=60):
    return OccupancySchedule(days=1, step=step, occupants=np.full(int(hours * 3600 / step), count),
                             kind="conference")


# frozen from the closed-form oracle: 420 + 1e6 * 0.018 / 30
STEADY_1020 = 1020.0
# 420 + 600 * (1 - exp(-1))
TRANSIENT_1H = 799.2723


def test_frozen_values_match_oracle():
    assert mass_balance_steady(420.0, 0.018, 30.0) == pytest.approx(STEADY_1020, rel=1e-12)
    assert mass_balance_transient(420.0, 0.018, 30.0, 30.0, 1.0) == pytest.approx(TRANSIENT_1H, abs=1e-4)


# ---------------------------------------------------------------------------
# Schedules


def test_single_office_schedule_is_binary():
    s = generate_schedule("single_office", 14, seed=5)
    assert set(np.unique(s.occupants)) <= {0, 1}
    assert len(s) == 14 * 1440
    assert s.occupants.sum() > 0


def test_conference_schedule_meeting_sizes():
    s = generate_schedule("conference", 20, seed=8)
    sizes = set(np.unique(s.occupants)) - {0}
    assert sizes and min(sizes) >= 2 and max(sizes) <= 10


def test_schedule_weekends_mostly_empty():
    s = generate_schedule("single_office", 28, seed=2)
    per_day = s.occupants.reshape(28, -1).sum(axis=1)
    weekday = [(s.start.weekday() + d) % 7 < 5 for d in range(28)]
    assert per_day[weekday].mean() > 5 * per_day[~np.array(weekday)].mean()


def test_schedule_errors_and_determinism():
    with pytest.raises(ValueError):
        generate_schedule("single_office", 0, seed=1)
    with pytest.raises(ValueError):
        generate_schedule("lab", 1, seed=1)
    a = generate_schedule("conference", 3, seed=11)
    b = generate_schedule("conference", 3, seed=11)
    assert np.array_equal(a.occupants, b.occupants)
    with pytest.raises(ValueError):
        OccupancySchedule(1, 60, np.array([0, 2]), kind="single_office")


# ---------------------------------------------------------------------------
# Physics against closed forms


def test_empty_zone_stays_at_outdoor():
    trace = simulate_trace(quiet_zone(), constant_schedule(0, 6), seed=0)
    assert np.allclose(trace.co2, 420.0, rtol=0, atol=1e-9)
    assert np.allclose(trace.co2_bg, 420.0, rtol=0, atol=1e-9)
    samples = simulate_zone(quiet_zone(), constant_schedule(0, 6), seed=0)
    assert all(abs(s.co2_bg - 420.0) < 1e-9 for s in samples)


def test_steady_state_1020():
    cfg = quiet_zone()
    assert steady_state(cfg, 1)["co2"] == pytest.approx(STEADY_1020, rel=1e-12)
    trace = simulate_trace(cfg, constant_schedule(1, 10), seed=0)
    assert trace.co2[-1] == pytest.approx(STEADY_1020, rel=0.01)


def test_transient_at_one_time_constant():
    trace = simulate_trace(quiet_zone(), constant_schedule(1, 2), seed=0)
    # sample index 60 is t = 60 steps of 60 s = V/Q
    assert trace.co2[60] == pytest.approx(TRANSIENT_1H, rel=0.01)


def test_steady_state_oracle_properties():
    cfg = quiet_zone(voc_event_rate=0.5, voc_event_magnitude=2000.0)
    assert steady_state(cfg, 0) == {"co2": 420.0, "voc": cfg.outdoor_voc}
    doubled = replace(cfg, ventilation_rate=2.0)
    for gas, outdoor in (("co2", 420.0), ("voc", cfg.outdoor_voc)):
        assert steady_state(doubled, 3)[gas] - outdoor == pytest.approx(
            0.5 * (steady_state(cfg, 3)[gas] - outdoor), rel=1e-12)
    expected_voc = cfg.outdoor_voc + (cfg.voc_base_per_occupant + 0.5 * 2000.0) / 30.0
    assert steady_state(cfg, 1)["voc"] == pytest.approx(expected_voc, rel=1e-12)
    with pytest.raises(ValueError):
        steady_state(cfg, -1)


@given(st.floats(10, 200), st.floats(0.5, 6), st.integers(1, 8))
def test_constant_occupancy_converges(volume, ach, count):
    cfg = quiet_zone(volume=volume, ventilation_rate=ach, voc_base_per_occupant=800.0)
    tau_h = 1.0 / ach
    trace = simulate_trace(cfg, constant_schedule(count, 10 * tau_h), seed=0)
    oracle = steady_state(cfg, count)
    tail = slice(int(0.9 * len(trace.co2)), None)
    assert np.all(np.abs(trace.co2[tail] / oracle["co2"] - 1) < 0.01)
    assert np.all(np.abs(trace.voc[tail] / oracle["voc"] - 1) < 0.01)
    assert np.all(np.diff(trace.co2) >= -1e-9)
    assert np.all(trace.co2 >= 420.0 - 1e-9)


def test_step_halving_changes_little():
    cfg = quiet_zone(voc_base_per_occupant=800.0, inhale_cloud_boost=0.0)
    occ = generate_schedule("conference", 2, seed=4).occupants
    coarse = OccupancySchedule(2, 60, occ, kind="conference")
    fine = OccupancySchedule(2, 30, np.repeat(occ, 2), kind="conference")
    a = simulate_trace(cfg, coarse, seed=0)
    b = simulate_trace(cfg, fine, seed=0)
    for name in ("co2", "voc", "co2_bg"):
        x, y = getattr(a, name), getattr(b, name)[::2]
        assert np.sqrt(np.mean((x - y) ** 2)) / np.sqrt(np.mean(x**2)) < 0.005


def test_stability_guard():
    with pytest.raises(StabilityError):
        simulate_trace(quiet_zone(), OccupancySchedule(1, 120, np.zeros(720, int)), seed=0)
    with pytest.raises(StabilityError):
        simulate_trace(quiet_zone(ventilation_rate=100.0), constant_schedule(0, 1), seed=0)


def test_background_sensor_is_diluted_and_lagged():
    cfg = quiet_zone(bg_sensor_dilution=0.5, bg_sensor_lag=1800.0)
    trace = simulate_trace(cfg, constant_schedule(1, 12), seed=0)
    excess_zone = trace.co2 - 420.0
    excess_bg = trace.co2_bg - 420.0
    assert np.all(excess_bg <= 0.5 * excess_zone + 1e-9)
    assert excess_bg[-1] == pytest.approx(0.5 * excess_zone[-1], rel=0.01)


def test_inhale_boost_only_while_occupied():
    cfg = quiet_zone(inhale_cloud_boost=150.0)
    occ = np.r_[np.zeros(30, int), np.ones(30, int), np.zeros(30, int)]
    sched = OccupancySchedule(1, 60, occ, kind="conference")
    samples = simulate_zone(cfg, sched, seed=0)
    trace = simulate_trace(cfg, sched, seed=0)
    diff = np.array([s.co2_inhale for s in samples]) - trace.co2
    assert np.allclose(diff, 150.0 * occ, atol=1e-9)


def test_determinism_and_noise():
    cfg, sched, seed = make_preset_zones(7, days=2)[0]
    a = simulate_zone(cfg, sched, seed)
    assert a == simulate_zone(cfg, sched, seed)
    assert a != simulate_zone(cfg, sched, seed + 1)
    z = with_zero_noise(cfg)
    assert all(v == 0 for v in z.noise.values())


def test_config_validation_and_round_trip():
    cfg = quiet_zone()
    assert ZoneConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    for bad in (dict(volume=0.0), dict(ventilation_rate=-1.0), dict(bg_sensor_dilution=0.0),
                dict(lights_follow_occupancy_prob=1.5), dict(noise={"co2": -1.0}),
                dict(channels=("pm25",))):
        with pytest.raises(ValueError):
            replace(cfg, **bad)
    with pytest.raises(ValueError):
        ZoneConfig.from_dict({"name": "x", "colour": "red"})


def test_zone_document(tmp_path):
    path = tmp_path / "zones.json"
    path.write_text(json.dumps({"zones": [
        {"name": "lab", "schedule": "conference", "volume": 80.0},
        {"name": "desk", "channels": ["co2_bg", "voc"]},
    ]}))
    zones = load_zone_document(path, days=2, seed=1)
    assert [c.name for c, _, _ in zones] == ["lab", "desk"]
    assert zones[0][1].kind == "conference"
    samples = simulate_zone(*zones[1])
    assert available_channels(samples) == ("co2_bg", "voc")
    path.write_text(json.dumps({"zones": []}))
    with pytest.raises(ValueError):
        load_zone_document(path, 2, 1)


# ---------------------------------------------------------------------------
# Presets


@pytest.fixture(scope="module")
def presets():
    return {cfg.name: (cfg, simulate_zone(cfg, sched, seed)) for cfg, sched, seed in make_preset_zones(42, 7)}


def test_preset_channel_masks(presets):
    assert list(presets) == ["office_a", "office_b", "conference"]
    assert "co2_inhale" not in available_channels(presets["conference"][1])
    assert "light" not in available_channels(presets["office_b"][1])
    assert set(available_channels(presets["office_a"][1])) == {
        "co2_inhale", "co2_bg", "voc", "light", "temperature", "humidity"}
    assert not presets["conference"][0].has_daylight


def test_presets_occupied_gas_levels_higher(presets):
    for name, (_, samples) in presets.items():
        occ = np.array([s.occupied for s in samples], bool)
        assert 0 < occ.mean() < 1
        for ch in ("co2_bg", "voc"):
            v = np.array([s.value(ch) for s in samples])
            assert v[occ].mean() > v[~occ].mean(), (name, ch)


def test_office_a_emits_more_voc_than_office_b(presets):
    a = presets["office_a"][0]
    b = presets["office_b"][0]
    assert steady_state(a, 1)["voc"] > 2 * steady_state(b, 1)["voc"]
    assert math.isclose(a.outdoor_voc, b.outdoor_voc)
