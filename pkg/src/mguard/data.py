"""Meter-data pipeline: CSV ingestion, gap imputation, per-building z-score
normalization, range squashing, sliding-window segmentation and the
train/validation/test split.

Raw readings stay float64 until windowing; window values are float32 in
[-1, 1]. Window labels: 0 normal, 1 anomalous (at least one covered hour
labeled), 2 unlabeled (no label column).
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import DataError
from .rng import Rng

LABEL_NORMAL = 0
LABEL_ANOMALOUS = 1
LABEL_UNLABELED = 2

DEFAULT_SCHEMA = {
    "building_col": "building_id",
    "timestamp_col": "timestamp",
    "reading_col": "meter_reading",
    "label_col": "anomaly",
}

STORE_MAGIC = b"MGWD"
STORE_VERSION = 1

HOUR = np.timedelta64(1, "h")


@dataclass
class BuildingSeries:
    """One building's hourly readings on a gapless UTC grid."""

    building_id: str
    start: np.datetime64  # first hour, UTC
    readings: np.ndarray  # float64
    missing: np.ndarray  # bool, True where the hour had no usable reading
    labels: np.ndarray | None = None  # int8 of {0,1}, or None when unlabeled
    mu_b: float | None = None
    sigma_b: float | None = None

    def __len__(self) -> int:
        return len(self.readings)


@dataclass
class Window:
    building_id: str
    start_index: int
    values: np.ndarray  # float32, length == window_length, in [-1, 1]
    label: int  # LABEL_NORMAL / LABEL_ANOMALOUS / LABEL_UNLABELED


@dataclass
class DatasetSplit:
    train: list[Window] = field(default_factory=list)
    validation: list[Window] = field(default_factory=list)
    test: list[Window] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Ingestion


def _parse_hour(text: str, line_no: int) -> np.datetime64:
    try:
        dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"line {line_no}: unparseable timestamp {text!r}") from None
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    if dt.minute or dt.second or dt.microsecond:
        raise DataError(f"line {line_no}: timestamp {text!r} is not on an hour boundary")
    return np.datetime64(dt, "h")


def ingest_csv(path, schema: dict | None = None) -> list[BuildingSeries]:
    """Read a meter CSV into per-building series sorted by building id.

    Hours absent between a building's first and last timestamp are inserted
    as explicit gaps for impute() to fill. Distinct source timestamps that
    land on the same UTC hour (daylight-saving folds) keep the first
    occurrence; identical duplicates are an error.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    per_building: dict[str, dict[int, tuple[float | None, int | None]]] = {}
    raw_seen: dict[tuple[str, str], int] = {}
    have_labels = False

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        cols = {name.strip(): i for i, name in enumerate(header)}
        try:
            b_i = cols[schema["building_col"]]
            t_i = cols[schema["timestamp_col"]]
            r_i = cols[schema["reading_col"]]
        except KeyError as e:
            raise DataError(f"{path}: missing required column {e.args[0]!r}") from None
        l_i = cols.get(schema.get("label_col") or "")
        have_labels = l_i is not None

        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(b_i, t_i, r_i):
                raise DataError(f"line {line_no}: expected {len(cols)} columns, got {len(row)}")
            bid = row[b_i].strip()
            raw_ts = row[t_i].strip()
            hour = _parse_hour(raw_ts, line_no)
            key = (bid, raw_ts)
            if key in raw_seen:
                raise DataError(
                    f"line {line_no}: duplicate ({bid}, {raw_ts}), first seen on line {raw_seen[key]}"
                )
            raw_seen[key] = line_no

            text = row[r_i].strip()
            if text == "":
                value: float | None = None
            else:
                try:
                    value = float(text)
                except ValueError:
                    raise DataError(f"line {line_no}: unparseable reading {text!r}") from None

            label: int | None = None
            if have_labels and l_i < len(row):
                ltext = row[l_i].strip()
                if ltext != "":
                    if ltext not in ("0", "1"):
                        raise DataError(f"line {line_no}: label must be 0 or 1, got {ltext!r}")
                    label = int(ltext)

            hours = per_building.setdefault(bid, {})
            h = int(hour.astype("int64"))
            if h not in hours:  # keep first occurrence on DST folds
                hours[h] = (value, label)

    out = []
    for bid in sorted(per_building):
        hours = per_building[bid]
        lo, hi = min(hours), max(hours)
        n = hi - lo + 1
        readings = np.zeros(n, np.float64)
        missing = np.ones(n, bool)
        labels = np.zeros(n, np.int8) if have_labels else None
        for h, (value, label) in hours.items():
            i = h - lo
            if value is not None:
                readings[i] = value
                missing[i] = False
            if labels is not None and label is not None:
                labels[i] = label
        out.append(
            BuildingSeries(
                building_id=bid,
                start=np.datetime64(lo, "h"),
                readings=readings,
                missing=missing,
                labels=labels,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Imputation and normalization


def _fill_forward(values: np.ndarray, missing: np.ndarray):
    idx = np.where(~missing, np.arange(len(values)), -1)
    np.maximum.accumulate(idx, out=idx)
    ok = idx >= 0
    out = values.copy()
    out[ok] = values[idx[ok]]
    return out, ~ok


def impute(series: BuildingSeries) -> BuildingSeries:
    """Forward fill, then backward fill. A fully missing series stays zero
    (it normalizes to zeros under the degenerate-sigma rule) and warns."""
    vals, still = _fill_forward(series.readings, series.missing)
    if still.any():
        rev, still = _fill_forward(vals[::-1], still[::-1])
        vals = rev[::-1]
        still = still[::-1]
    if still.any():
        warnings.warn(f"building {series.building_id}: every reading missing, imputing zeros")
        vals = np.zeros_like(vals)
    return BuildingSeries(
        building_id=series.building_id,
        start=series.start,
        readings=vals,
        missing=np.zeros_like(series.missing),
        labels=series.labels,
        mu_b=series.mu_b,
        sigma_b=series.sigma_b,
    )


SIGMA_FLOOR = 1e-8


def normalize(series: BuildingSeries) -> BuildingSeries:
    """Per-building z-score with the population standard deviation.

    A near-constant series (sigma below 1e-8) uses sigma := 1 so it maps to
    zeros instead of blowing up.
    """
    mu = float(series.readings.mean())
    sigma = float(series.readings.std())
    if sigma < SIGMA_FLOOR:
        sigma = 1.0
    return BuildingSeries(
        building_id=series.building_id,
        start=series.start,
        readings=(series.readings - mu) / sigma,
        missing=series.missing,
        labels=series.labels,
        mu_b=mu,
        sigma_b=sigma,
    )


def unnormalize(values: np.ndarray, mu_b: float, sigma_b: float) -> np.ndarray:
    return values * sigma_b + mu_b


def squash(values: np.ndarray, clip_c: float = 3.5) -> np.ndarray:
    """Clip z-scores to [-clip_c, clip_c] and scale into [-1, 1] so targets
    sit inside the generator's tanh range."""
    return np.clip(values, -clip_c, clip_c) / clip_c


def unsquash(values: np.ndarray, clip_c: float = 3.5) -> np.ndarray:
    return values * clip_c


# ---------------------------------------------------------------------------
# Windowing and splits


def make_windows(series: BuildingSeries, window_length: int = 60, stride: int = 1) -> list[Window]:
    """Slice a series into fixed-length windows.

    Yields floor((len - window_length)/stride) + 1 windows; a window is
    anomalous when at least one covered hour is labeled 1, unlabeled when
    the series has no labels.
    """
    n = len(series)
    if window_length < 1 or stride < 1:
        raise DataError(f"window_length and stride must be >= 1, got {window_length}, {stride}")
    if n < window_length:
        raise DataError(
            f"building {series.building_id}: series length {n} < window_length {window_length}"
        )
    values = series.readings.astype(np.float32)
    labels = series.labels
    out = []
    for start in range(0, n - window_length + 1, stride):
        if labels is None:
            label = LABEL_UNLABELED
        elif labels[start : start + window_length].any():
            label = LABEL_ANOMALOUS
        else:
            label = LABEL_NORMAL
        out.append(
            Window(
                building_id=series.building_id,
                start_index=start,
                values=values[start : start + window_length].copy(),
                label=label,
            )
        )
    return out


def split_dataset(
    train_buildings: list[BuildingSeries],
    holdout_fraction: float = 0.10,
    rng: Rng | None = None,
    window_length: int = 60,
    train_stride: int = 1,
    eval_stride: int = 60,
) -> DatasetSplit:
    """Training-building windows -> all-normal train set plus validation.

    Normal stride-1 windows are shuffled (seeded) after a canonical sort and
    split (1 - holdout_fraction)/holdout_fraction; every anomalous window,
    taken at the evaluation stride, goes to validation.
    """
    rng = rng or Rng(0)
    normal: list[Window] = []
    anomalous: list[Window] = []
    for series in sorted(train_buildings, key=lambda s: s.building_id):
        for w in make_windows(series, window_length, train_stride):
            if w.label == LABEL_NORMAL:
                normal.append(w)
        for w in make_windows(series, window_length, eval_stride):
            if w.label == LABEL_ANOMALOUS:
                anomalous.append(w)
    normal.sort(key=lambda w: (w.building_id, w.start_index))
    rng.shuffle(normal)
    n_val = int(len(normal) * holdout_fraction)
    val = normal[:n_val] + anomalous
    train = normal[n_val:]
    if not anomalous:
        warnings.warn("no anomalous windows available for validation; threshold calibration will degenerate")
    return DatasetSplit(train=train, validation=val, test=[])


# ---------------------------------------------------------------------------
# Window store (binary container)


def save_windows(path, windows: list[Window], window_length: int) -> None:
    """Write the MGWD container: magic, u32 version, u32 window_length,
    u64 count, then per window u16-prefixed building id, u64 start index,
    u8 label and float32 little-endian values."""
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<IIQ", STORE_VERSION, window_length, len(windows)))
        for w in windows:
            if len(w.values) != window_length:
                raise DataError(
                    f"window {w.building_id}:{w.start_index} has length {len(w.values)},"
                    f" store expects {window_length}"
                )
            bid = w.building_id.encode("utf-8")
            fh.write(struct.pack("<H", len(bid)))
            fh.write(bid)
            fh.write(struct.pack("<QB", w.start_index, w.label))
            fh.write(w.values.astype("<f4").tobytes())


def load_windows(path) -> tuple[list[Window], int]:
    """Read an MGWD container; returns (windows, window_length)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != STORE_MAGIC:
        raise DataError(f"{path}: bad magic {data[:4]!r}, expected {STORE_MAGIC!r}")
    if len(data) < 20:
        raise DataError(f"{path}: truncated header")
    version, window_length, count = struct.unpack_from("<IIQ", data, 4)
    if version != STORE_VERSION:
        raise DataError(f"{path}: unsupported store version {version}")
    pos = 20
    windows = []
    try:
        for _ in range(count):
            (blen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            bid = data[pos : pos + blen].decode("utf-8")
            pos += blen
            start_index, label = struct.unpack_from("<QB", data, pos)
            pos += 9
            values = np.frombuffer(data, "<f4", window_length, pos).copy()
            if len(values) != window_length:
                raise struct.error
            pos += 4 * window_length
            windows.append(Window(bid, start_index, values, label))
    except (struct.error, ValueError, UnicodeDecodeError):
        raise DataError(f"{path}: truncated or corrupt window record") from None
    return windows, window_length
