"""Deterministic synthetic smart-meter corpus for desk-scale testing.

Each building follows a daily sinusoid with weekly modulation plus
Gaussian noise. Injected anomalies come in four archetypes -- spikes,
drops, persistent shifts, and fast oscillations -- written without noise
so every labeled hour deviates from the noiseless base curve by at least
three noise standard deviations by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import DataError
from .rng import Rng

ARCHETYPES = ("spike", "drop", "persistent_shift", "oscillation")


@dataclass
class SynthConfig:
    n_buildings: int = 50
    hours: int = 500
    base_level: tuple[float, float] = (8.0, 14.0)
    daily_amplitude: tuple[float, float] = (2.5, 3.5)
    daily_peak_hour: tuple[float, float] = (14.0, 19.0)  # afternoon load peaks
    weekly_amplitude: tuple[float, float] = (0.05, 0.2)
    noise_std: float = 0.1
    noise_rho: float = 0.0  # AR(1) coefficient for autocorrelated meter noise
    anomaly_rate: float = 0.02  # fraction of corpus hours labeled anomalous
    archetype_mix: dict[str, float] = field(
        default_factory=lambda: {"spike": 0.2, "drop": 0.25, "persistent_shift": 0.3, "oscillation": 0.25}
    )
    # magnitudes are multiples of the building's load std (sigma of the
    # noisy base series, the same scale the z-score later divides by)
    spike_magnitude: tuple[float, float] = (6.0, 10.0)
    spike_duration: tuple[int, int] = (1, 3)
    drop_fraction: tuple[float, float] = (0.5, 0.8)  # of the base load
    drop_duration: tuple[int, int] = (4, 24)
    shift_magnitude: tuple[float, float] = (4.0, 8.0)
    shift_duration: tuple[int, int] = (48, 120)  # 2-5 days
    osc_magnitude: tuple[float, float] = (4.0, 8.0)
    osc_half_period: tuple[int, int] = (1, 2)  # 2-4 h full period
    osc_duration: tuple[int, int] = (12, 48)
    seed: int = 0
    start: str = "2016-01-01T00:00:00"


def building_id(cfg: SynthConfig, index: int) -> str:
    width = max(3, len(str(cfg.n_buildings - 1)))
    return f"B{index:0{width}d}"


def base_curve(cfg: SynthConfig, index: int) -> np.ndarray:
    """Noiseless base load for one building; pure function of (cfg, index).

    The daily sinusoid peaks inside cfg.daily_peak_hour, mirroring how real
    building load clusters around working-hours HVAC/occupancy cycles.
    """
    prng = Rng(cfg.seed).spawn(10_000 + index)
    level = float(prng.uniform(*cfg.base_level))
    amp_d = float(prng.uniform(*cfg.daily_amplitude))
    peak = float(prng.uniform(*cfg.daily_peak_hour))
    amp_w = float(prng.uniform(*cfg.weekly_amplitude))
    ph_w = float(prng.uniform(0.0, 2 * math.pi))
    t = np.arange(cfg.hours, dtype=np.float64)
    return (
        level
        + amp_d * np.cos(2 * math.pi * (t - peak) / 24.0)
        + amp_w * np.sin(2 * math.pi * t / 168.0 + ph_w)
    )


def _ar1_noise(cfg: SynthConfig, index: int) -> np.ndarray:
    """Stationary AR(1) Gaussian noise with marginal std cfg.noise_std."""
    white = Rng(cfg.seed).spawn(20_000 + index).normal(0.0, 1.0, (cfg.hours,)).astype(np.float64)
    rho = min(max(cfg.noise_rho, 0.0), 0.99)
    out = np.empty(cfg.hours)
    out[0] = white[0]
    scale = math.sqrt(1.0 - rho * rho)
    for t in range(1, cfg.hours):
        out[t] = rho * out[t - 1] + scale * white[t]
    return out * cfg.noise_std


_DUR = {"spike": "spike_duration", "drop": "drop_duration", "persistent_shift": "shift_duration", "oscillation": "osc_duration"}


def _place_events(cfg: SynthConfig, rng: Rng, occupied: list[np.ndarray]) -> list[tuple[str, int, int, int]]:
    """Pick non-overlapping (archetype, building, start, duration) events
    consuming each archetype's corpus-hour budget."""
    total = cfg.n_buildings * cfg.hours
    events = []
    for arch in ARCHETYPES:
        lo, hi = getattr(cfg, _DUR[arch])
        if lo > cfg.hours:
            raise DataError(f"{arch} minimum duration {lo} exceeds series length {cfg.hours}")
        budget = int(round(cfg.anomaly_rate * cfg.archetype_mix.get(arch, 0.0) * total))
        placed = 0
        misses = 0
        while placed < budget and misses < 200:
            remaining = budget - placed
            if remaining < lo:
                break
            dur = min(lo + rng.integer(hi - lo + 1), remaining)
            b = rng.integer(cfg.n_buildings)
            start = rng.integer(cfg.hours - dur + 1)
            if occupied[b][start : start + dur].any():
                misses += 1
                continue
            occupied[b][start : start + dur] = True
            events.append((arch, b, start, dur))
            placed += dur
    return events


def load_std(cfg: SynthConfig, index: int) -> float:
    """Std of the building's noisy base series, the anomaly magnitude unit."""
    return float(np.sqrt(base_curve(cfg, index).var() + cfg.noise_std**2))


def _apply_event(
    cfg: SynthConfig, rng: Rng, arch: str, base: np.ndarray, sigma: float, start: int, dur: int
) -> np.ndarray:
    """Anomalous values for one event; every hour lands >= 3 noise sigmas
    from the base curve (magnitudes themselves are in load-std units)."""
    floor = 3.0 * cfg.noise_std
    seg = base[start : start + dur]
    if arch == "spike":
        mag = float(rng.uniform(*cfg.spike_magnitude)) * sigma
        return seg + max(mag, floor)
    if arch == "drop":
        frac = float(rng.uniform(*cfg.drop_fraction))
        return seg - np.maximum(frac * np.abs(seg), floor)
    if arch == "persistent_shift":
        mag = max(float(rng.uniform(*cfg.shift_magnitude)) * sigma, floor)
        sign = 1.0 if rng.integer(2) else -1.0
        return seg + sign * mag
    if arch == "oscillation":
        mag = max(float(rng.uniform(*cfg.osc_magnitude)) * sigma, floor)
        half = cfg.osc_half_period[0] + rng.integer(cfg.osc_half_period[1] - cfg.osc_half_period[0] + 1)
        signs = np.where((np.arange(dur) // half) % 2 == 0, 1.0, -1.0)
        return seg + signs * mag
    raise DataError(f"unknown anomaly archetype {arch!r}")


def generate_corpus(cfg: SynthConfig, csv_path) -> dict:
    """Write a corpus CSV in the ingestion schema; returns a summary with
    per-archetype event counts and the labeled-hour fraction."""
    if cfg.hours < 1 or cfg.n_buildings < 1:
        raise DataError("n_buildings and hours must be positive")
    rng = Rng(cfg.seed).spawn(1)
    occupied = [np.zeros(cfg.hours, bool) for _ in range(cfg.n_buildings)]
    events = _place_events(cfg, rng, occupied) if cfg.anomaly_rate > 0 else []

    values = []
    labels = []
    for b in range(cfg.n_buildings):
        base = base_curve(cfg, b)
        values.append(base + _ar1_noise(cfg, b))
        labels.append(np.zeros(cfg.hours, np.int8))
    for arch, b, start, dur in events:
        values[b][start : start + dur] = _apply_event(
            cfg, rng, arch, base_curve(cfg, b), load_std(cfg, b), start, dur
        )
        labels[b][start : start + dur] = 1

    start_dt = datetime.fromisoformat(cfg.start)
    with open(csv_path, "w", newline="") as fh:
        fh.write("building_id,timestamp,meter_reading,anomaly\n")
        for b in range(cfg.n_buildings):
            bid = building_id(cfg, b)
            for t in range(cfg.hours):
                ts = (start_dt + timedelta(hours=t)).strftime("%Y-%m-%dT%H:%M:%S")
                fh.write(f"{bid},{ts},{values[b][t]:.6f},{labels[b][t]}\n")

    n_anom = int(sum(lab.sum() for lab in labels))
    by_arch: dict[str, int] = {a: 0 for a in ARCHETYPES}
    for arch, _, _, dur in events:
        by_arch[arch] += dur
    return {
        "buildings": cfg.n_buildings,
        "hours": cfg.hours,
        "anomalous_hours": n_anom,
        "anomalous_fraction": n_anom / (cfg.n_buildings * cfg.hours),
        "hours_by_archetype": by_arch,
        "events": len(events),
    }
