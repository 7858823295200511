"""Single-zone, well-mixed indoor air simulator producing labelled sensor data.

Gas channels follow

    dC/dt = (G + Q * C_out - Q * C) / V

integrated with forward Euler at the schedule step (at most 60 s). Q is the
ventilation flow in m3/h and G the source strength in ppm*m3/h (CO2) or
ppb*m3/h (VOC).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.signal import lfilter

from .data import CHANNELS, SensorSample

MAX_STEP = 60
DEFAULT_START = datetime(2020, 1, 15, tzinfo=timezone.utc)
SCHEDULE_KINDS = ("single_office", "conference")

DEFAULT_NOISE = {"co2": 15.0, "voc": 10.0, "light": 20.0, "temperature": 0.2, "humidity": 1.0}


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class ZoneConfig:
    name: str
    volume: float = 30.0  # m3
    ventilation_rate: float = 1.0  # air changes per hour
    outdoor_co2: float = 420.0  # ppm
    outdoor_voc: float = 50.0  # ppb
    co2_per_occupant: float = 0.018  # m3/h exhaled CO2
    voc_base_per_occupant: float = 1000.0  # ppb*m3/h
    voc_event_rate: float = 0.5  # events per occupant-hour
    voc_event_magnitude: float = 2000.0  # ppb*m3 per event
    has_daylight: bool = True
    lights_follow_occupancy_prob: float = 0.8
    bg_sensor_lag: float = 1800.0  # s
    bg_sensor_dilution: float = 0.6
    inhale_cloud_boost: float = 150.0  # ppm near a seated occupant
    hvac_temp_setpoint: float = 22.0  # deg C
    noise: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    channels: tuple[str, ...] = CHANNELS
    # Secondary physics. Not observable individually, only through the channels.
    voc_ambient_event_rate: float = 0.0  # occupant-independent releases per hour
    voc_ambient_event_magnitude: float = 0.0  # ppb*m3 per release
    daylight_peak_lux: float = 600.0
    lighting_lux: float = 450.0
    hvac_cycle_amplitude: float = 0.4  # deg C
    hvac_cycle_period: float = 5400.0  # s
    occupant_heat_gain: float = 0.08  # deg C per occupant at steady state
    thermal_lag: float = 3600.0  # s
    base_humidity: float = 38.0  # %RH
    humidity_day_swing: float = 5.0  # %RH day-to-day spread
    occupant_moisture: float = 0.4  # %RH per occupant at steady state

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("volume must be positive")
        if not self.ventilation_rate > 0:
            raise ValueError("ventilation_rate must be positive")
        if not 0 <= self.lights_follow_occupancy_prob <= 1:
            raise ValueError("lights_follow_occupancy_prob must lie in [0, 1]")
        if not 0 < self.bg_sensor_dilution <= 1:
            raise ValueError("bg_sensor_dilution must lie in (0, 1]")
        if self.bg_sensor_lag < 0 or self.thermal_lag < 0:
            raise ValueError("lags must be non-negative")
        for key, sigma in self.noise.items():
            if key not in DEFAULT_NOISE:
                raise ValueError(f"unknown noise channel {key!r}")
            if sigma < 0:
                raise ValueError(f"noise sigma for {key} must be >= 0")
        for name in ("co2_per_occupant", "voc_base_per_occupant", "voc_event_rate",
                     "voc_event_magnitude", "voc_ambient_event_rate", "voc_ambient_event_magnitude"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        unknown = [c for c in self.channels if c not in CHANNELS]
        if unknown:
            raise ValueError(f"unknown channels {unknown}")

    @property
    def flow(self) -> float:
        """Ventilation flow in m3/h."""
        return self.ventilation_rate * self.volume

    def sigma(self, key: str) -> float:
        return float(self.noise.get(key, DEFAULT_NOISE[key]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ZoneConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown zone config keys: {sorted(unknown)}")
        data = dict(data)
        if "channels" in data:
            data["channels"] = tuple(data["channels"])
        if "noise" in data:
            data["noise"] = {**DEFAULT_NOISE, **data["noise"]}
        return cls(**data)


@dataclass(frozen=True)
class OccupancySchedule:
    days: int
    step: int  # s
    occupants: np.ndarray
    start: datetime = DEFAULT_START
    kind: str = "single_office"

    def __post_init__(self):
        occ = np.asarray(self.occupants, dtype=np.int64)
        if np.any(occ < 0):
            raise ValueError("occupant counts must be >= 0")
        if self.kind == "single_office" and np.any(occ > 1):
            raise ValueError("single office schedules hold at most one occupant")
        object.__setattr__(self, "occupants", occ)

    def __len__(self) -> int:
        return len(self.occupants)


# ---------------------------------------------------------------------------
# Schedules


def _mark(occ, step, day_offset, start_h, end_h, value=1):
    a = int(round((day_offset * 24 + start_h) * 3600 / step))
    b = int(round((day_offset * 24 + end_h) * 3600 / step))
    a, b = max(a, 0), min(b, len(occ))
    if b > a:
        occ[a:b] = value


def _single_office_day(rng, occ, step, day, weekend):
    if weekend:
        if rng.random() < 0.1:
            begin = rng.uniform(10, 15)
            _mark(occ, step, day, begin, begin + rng.uniform(1, 3))
        return
    if rng.random() < 0.08:
        return
    arrive = float(np.clip(rng.normal(8.75, 0.5), 7.0, 10.5))
    leave = float(np.clip(rng.normal(17.25, 0.75), 15.5, 20.0))
    _mark(occ, step, day, arrive, leave)
    if rng.random() < 0.8:
        out = float(np.clip(rng.normal(12.25, 0.3), 11.25, 13.5))
        _mark(occ, step, day, out, out + rng.uniform(0.5, 1.0), 0)
    for _ in range(rng.poisson(2.0)):
        begin = rng.uniform(arrive, leave)
        _mark(occ, step, day, begin, begin + rng.uniform(5, 45) / 60, 0)


def _conference_day(rng, occ, step, day, weekend):
    book_prob = 0.05 if weekend else 0.45
    t = 8.0
    while t < 18.0:
        if rng.random() < book_prob:
            length = rng.choice([0.5, 1.0, 1.5])
            late = rng.uniform(0, 5) / 60
            _mark(occ, step, day, t + late, t + length - 2 / 60, int(rng.integers(2, 11)))
            t += length
        else:
            t += 0.5


def generate_schedule(
    kind: Literal["single_office", "conference"],
    days: int,
    seed: int,
    step: int = MAX_STEP,
    start: datetime = DEFAULT_START,
) -> OccupancySchedule:
    """Stochastic occupant timeline.

    Single offices hold one occupant on workdays with jittered arrival and
    departure, a usual lunch gap and short absences. The conference room
    hosts 2 to 10 people in meetings booked on half-hour slots. Weekends are
    mostly empty.
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}")
    if days < 1:
        raise ValueError("days must be >= 1")
    if step < 1:
        raise ValueError("step must be >= 1 s")
    rng = np.random.default_rng(seed)
    occ = np.zeros(int(days * 86400 // step), dtype=np.int64)
    build_day = _single_office_day if kind == "single_office" else _conference_day
    for day in range(days):
        weekend = (start + timedelta(days=day)).weekday() >= 5
        build_day(rng, occ, step, day, weekend)
    return OccupancySchedule(days, step, occ, start, kind)


# ---------------------------------------------------------------------------
# Physics


def _euler(drive: np.ndarray, decay: float, x0: float) -> np.ndarray:
    """x[k+1] = decay * x[k] + drive[k], x[0] = x0."""
    out = lfilter([1.0], [1.0, -decay], drive, zi=[decay * x0])[0]
    return np.concatenate([[x0], out[:-1]])


def _first_order_lag(target: np.ndarray, tau: float, dt: float, x0: float) -> np.ndarray:
    if tau <= dt:
        return target.copy()
    k = dt / tau
    return _euler(k * target, 1.0 - k, x0)


def _mass_balance(source: np.ndarray, outdoor: float, config: ZoneConfig, dt: float) -> np.ndarray:
    h = dt / 3600.0
    q_over_v = config.ventilation_rate
    drive = h * (source + config.flow * outdoor) / config.volume
    return _euler(drive, 1.0 - h * q_over_v, outdoor)


def check_stability(config: ZoneConfig, step: float):
    if step > MAX_STEP:
        raise StabilityError(f"step {step} s exceeds the {MAX_STEP} s limit")
    if step / 3600.0 * config.ventilation_rate > 1.0:
        raise StabilityError(
            f"step {step} s too large for V/Q = {3600.0 / config.ventilation_rate:.0f} s"
        )


def steady_state(config: ZoneConfig, occupant_count: float) -> dict[str, float]:
    """Expected steady concentrations for a constant occupant count."""
    if occupant_count < 0:
        raise ValueError("occupant_count must be >= 0")
    q = config.flow
    co2 = config.outdoor_co2 + occupant_count * config.co2_per_occupant * 1e6 / q
    voc_source = occupant_count * (
        config.voc_base_per_occupant + config.voc_event_rate * config.voc_event_magnitude
    ) + config.voc_ambient_event_rate * config.voc_ambient_event_magnitude
    voc = config.outdoor_voc + voc_source / q
    return {"co2": co2, "voc": voc}


@dataclass
class ZoneTrace:
    """Noise-free internal state, one entry per schedule step."""

    co2: np.ndarray
    voc: np.ndarray
    co2_bg: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    light: np.ndarray


def simulate_trace(config: ZoneConfig, schedule: OccupancySchedule, seed: int) -> ZoneTrace:
    check_stability(config, schedule.step)
    rng = np.random.default_rng(seed)
    dt = float(schedule.step)
    occ = schedule.occupants.astype(float)
    n = len(occ)
    hours = dt / 3600.0
    t = np.arange(n) * dt
    start_hour = schedule.start.hour + schedule.start.minute / 60.0
    hour_of_day = (start_hour + t / 3600.0) % 24.0
    day_index = ((start_hour * 3600.0 + t) // 86400).astype(int)
    n_days = int(day_index[-1]) + 1 if n else 0

    co2_source = occ * config.co2_per_occupant * 1e6
    co2 = _mass_balance(co2_source, config.outdoor_co2, config, dt)

    # Poisson releases enter as one-step impulses of magnitude/dt.
    occupant_events = rng.poisson(config.voc_event_rate * occ * hours)
    ambient_events = rng.poisson(config.voc_ambient_event_rate * hours, size=n)
    voc_source = (
        occ * config.voc_base_per_occupant
        + (occupant_events * config.voc_event_magnitude
           + ambient_events * config.voc_ambient_event_magnitude) / hours
    )
    voc = _mass_balance(voc_source, config.outdoor_voc, config, dt)

    target = config.outdoor_co2 + config.bg_sensor_dilution * (co2 - config.outdoor_co2)
    co2_bg = _first_order_lag(target, config.bg_sensor_lag, dt, config.outdoor_co2)

    light = np.zeros(n)
    if config.has_daylight:
        cloudiness = rng.uniform(0.3, 1.0, size=n_days)
        sun = np.clip(np.sin(np.pi * (hour_of_day - 6.5) / 11.0), 0.0, None)
        light += config.daylight_peak_lux * cloudiness[day_index] * sun
    present = occ > 0
    starts = np.flatnonzero(present & ~np.concatenate([[False], present[:-1]]))
    ends = np.flatnonzero(present & ~np.concatenate([present[1:], [False]])) + 1
    switched_on = rng.random(len(starts)) < config.lights_follow_occupancy_prob
    for a, b, on in zip(starts, ends, switched_on):
        if on:
            light[a:b] += config.lighting_lux

    phase = rng.uniform(0, 2 * np.pi)
    occupant_heat = _first_order_lag(config.occupant_heat_gain * occ, config.thermal_lag, dt, 0.0)
    temperature = (
        config.hvac_temp_setpoint
        + config.hvac_cycle_amplitude * np.sin(2 * np.pi * t / config.hvac_cycle_period + phase)
        + occupant_heat
    )

    # Day-to-day weather drift, interpolated so humidity has no daily steps.
    daily = config.base_humidity + config.humidity_day_swing * rng.standard_normal(n_days + 1)
    weather = np.interp((start_hour * 3600.0 + t) / 86400.0, np.arange(n_days + 1), daily)
    moisture = _first_order_lag(config.occupant_moisture * occ, config.thermal_lag, dt, 0.0)
    humidity = weather + moisture

    return ZoneTrace(co2, voc, co2_bg, temperature, humidity, light)


def simulate_zone(config: ZoneConfig, schedule: OccupancySchedule, seed: int) -> list[SensorSample]:
    """Labelled samples at the schedule step; channels outside ``config.channels`` are absent."""
    trace = simulate_trace(config, schedule, seed)
    rng = np.random.default_rng([seed, 1])
    n = len(schedule)
    occ = schedule.occupants
    present = occ > 0

    def noisy(signal, key):
        return signal + config.sigma(key) * rng.standard_normal(n)

    columns = {
        "co2_inhale": np.clip(noisy(trace.co2 + config.inhale_cloud_boost * present, "co2"), 0, None),
        "co2_bg": np.clip(noisy(trace.co2_bg, "co2"), 0, None),
        "voc": np.clip(noisy(trace.voc, "voc"), 0, None),
        "light": np.clip(noisy(trace.light, "light"), 0, None),
        "temperature": noisy(trace.temperature, "temperature"),
        "humidity": np.clip(noisy(trace.humidity, "humidity"), 0, 100),
    }
    emitted = [c for c in CHANNELS if c in config.channels]
    rows = {c: columns[c].tolist() for c in emitted}
    start = schedule.start
    step = timedelta(seconds=schedule.step)
    labels = present.astype(int).tolist()
    return [
        SensorSample(start + k * step, labels[k], **{c: rows[c][k] for c in emitted})
        for k in range(n)
    ]


# ---------------------------------------------------------------------------
# Presets and config files


PRESET_ZONES = ("office_a", "office_b", "conference")


def preset_zone_configs() -> list[tuple[ZoneConfig, str]]:
    office = dict(volume=35.0, ventilation_rate=2.0, bg_sensor_lag=2400.0, bg_sensor_dilution=0.55)
    office_a = ZoneConfig(
        name="office_a",
        **office,
        voc_base_per_occupant=4500.0,
        voc_event_rate=1.0,
        voc_event_magnitude=3000.0,
        has_daylight=True,
        lights_follow_occupancy_prob=0.9,
        hvac_temp_setpoint=22.0,
    )
    office_b = ZoneConfig(
        name="office_b",
        **office,
        voc_base_per_occupant=150.0,
        voc_event_rate=0.1,
        voc_event_magnitude=600.0,
        has_daylight=True,
        lights_follow_occupancy_prob=0.6,
        hvac_temp_setpoint=21.5,
        channels=("co2_inhale", "co2_bg", "voc", "temperature", "humidity"),
    )
    conference = ZoneConfig(
        name="conference",
        volume=120.0,
        ventilation_rate=3.0,
        co2_per_occupant=0.018,
        voc_base_per_occupant=3000.0,
        voc_event_rate=0.3,
        voc_event_magnitude=3000.0,
        voc_ambient_event_rate=0.8,
        voc_ambient_event_magnitude=9000.0,
        has_daylight=False,
        lights_follow_occupancy_prob=0.95,
        bg_sensor_lag=2400.0,
        bg_sensor_dilution=0.5,
        inhale_cloud_boost=0.0,
        hvac_temp_setpoint=21.0,
        noise={**DEFAULT_NOISE, "co2": 20.0, "voc": 15.0},
        channels=("co2_bg", "voc", "light", "temperature", "humidity"),
    )
    return [(office_a, "single_office"), (office_b, "single_office"), (conference, "conference")]


def _zone_seeds(seed: int, count: int) -> list[tuple[int, int]]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [tuple(int(v) for v in c.generate_state(2, dtype=np.uint32)) for c in children]


def make_preset_zones(seed: int, days: int = 30) -> list[tuple[ZoneConfig, OccupancySchedule, int]]:
    """Office A, Office B and the conference room with their schedules.

    Returns (config, schedule, simulation seed) triples. Office A hosts a
    strong VOC emitter, Office B a weak one and has no light sensor, the
    conference room has no daylight and only a background CO2 sensor.
    """
    out = []
    for (config, kind), (sched_seed, sim_seed) in zip(preset_zone_configs(), _zone_seeds(seed, 3)):
        out.append((config, generate_schedule(kind, days, sched_seed), sim_seed))
    return out


def load_zone_document(path: str | Path, days: int, seed: int) -> list[tuple[ZoneConfig, OccupancySchedule, int]]:
    """Read zones from JSON.

    The document is ``{"zones": [{"schedule": "single_office" | "conference",
    <ZoneConfig fields>}, ...]}``.
    """
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("zones"), list) or not doc["zones"]:
        raise ValueError("config must contain a non-empty 'zones' list")
    entries = []
    for raw in doc["zones"]:
        raw = dict(raw)
        kind = raw.pop("schedule", "single_office")
        entries.append((ZoneConfig.from_dict(raw), kind))
    names = [c.name for c, _ in entries]
    if len(set(names)) != len(names):
        raise ValueError("zone names must be unique")
    seeds = _zone_seeds(seed, len(entries))
    return [
        (config, generate_schedule(kind, days, s), sim)
        for (config, kind), (s, sim) in zip(entries, seeds)
    ]


def with_zero_noise(config: ZoneConfig) -> ZoneConfig:
    return replace(config, noise={k: 0.0 for k in DEFAULT_NOISE})
