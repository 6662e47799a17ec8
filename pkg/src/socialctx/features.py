"""Ten-minute window aggregation of sensor events into per-report feature vectors."""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import (
    ACTIVITY_KINDS,
    APP_CATEGORIES,
    MODALITIES,
    BinaryLabel,
    Dataset,
    SensorEvent,
    binarize_label,
)

EARTH_RADIUS_M = 6_371_008.8

_RSSI_STATS = ("mean", "max", "min", "std")

GROUP_FEATURES: dict[str, tuple[str, ...]] = {
    "location": ("location_radius_of_gyration", "location_distance_covered", "location_altitude"),
    "bluetooth_le": ("bluetooth_le_num_devices",) + tuple(f"bluetooth_le_rssi_{s}" for s in _RSSI_STATS),
    "bluetooth_normal": ("bluetooth_normal_num_devices",) + tuple(f"bluetooth_normal_rssi_{s}" for s in _RSSI_STATS),
    "wifi": ("wifi_hotspot_devices", "wifi_connected") + tuple(f"wifi_rssi_{s}" for s in _RSSI_STATS),
    "cellular_gsm": tuple(f"cellular_gsm_signal_{s}" for s in _RSSI_STATS),
    "cellular_wcdma": tuple(f"cellular_wcdma_signal_{s}" for s in _RSSI_STATS),
    "cellular_lte": tuple(f"cellular_lte_signal_{s}" for s in _RSSI_STATS),
    "notifications": (
        "notifications_posted",
        "notifications_removed",
        "notifications_posted_unique",
        "notifications_removed_unique",
    ),
    "proximity": tuple(f"proximity_{s}" for s in _RSSI_STATS),
    "activity": tuple(f"activity_{k}" for k in ACTIVITY_KINDS),
    "steps": ("steps_counted", "steps_detected"),
    "touch": ("touch_events",),
    "screen": (
        "screen_presence_time",
        "screen_episodes",
        "screen_time_total",
        "screen_time_per_episode",
        "screen_time_max_episode",
        "screen_time_min_episode",
        "screen_time_std_episode",
    ),
    "app_usage": tuple(f"app_{c}" for c in APP_CATEGORIES),
    "time": ("hour", "weekend"),
}

SENSOR_GROUPS = MODALITIES  # every group except "time" is backed by a modality


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names with their sensor-group membership."""

    groups: tuple[str, ...]
    group_features: tuple[tuple[str, ...], ...]

    @classmethod
    def default(cls) -> "FeatureSchema":
        groups = SENSOR_GROUPS + ("time",)
        return cls(groups, tuple(GROUP_FEATURES[g] for g in groups))

    @cached_property
    def features(self) -> tuple[str, ...]:
        return tuple(f for fs in self.group_features for f in fs)

    @cached_property
    def group_of(self) -> dict[str, str]:
        return {f: g for g, fs in zip(self.groups, self.group_features) for f in fs}

    @cached_property
    def marker_groups(self) -> tuple[str, ...]:
        return tuple(g for g in self.groups if g != "time")

    @property
    def markers(self) -> tuple[str, ...]:
        return tuple(f"missing_{g}" for g in self.marker_groups)

    @cached_property
    def group_slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for g, fs in zip(self.groups, self.group_features):
            out[g] = slice(start, start + len(fs))
            start += len(fs)
        return out

    def index(self, feature: str) -> int:
        return self.features.index(feature)

    def project(self, keep_groups: Iterable[str]) -> "FeatureSchema":
        keep = set(keep_groups)
        pairs = [(g, fs) for g, fs in zip(self.groups, self.group_features) if g in keep]
        return FeatureSchema(tuple(g for g, _ in pairs), tuple(fs for _, fs in pairs))

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class FeatureVector:
    participant_id: str
    country: str
    report_timestamp: int
    label: BinaryLabel
    values: np.ndarray
    group_missing: dict[str, bool]


@dataclass
class FeatureMatrix:
    """Rows of aligned feature values with missing markers, labels and metadata.

    ``values`` holds NaN wherever a group was missing; ``group_missing`` has one
    boolean column per marker group of ``schema``.
    """

    schema: FeatureSchema
    participant_id: np.ndarray
    country: np.ndarray
    timestamp: np.ndarray
    label: np.ndarray
    values: np.ndarray
    group_missing: np.ndarray
    synthetic: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.label)
        self.participant_id = np.asarray(self.participant_id, dtype=object)
        self.country = np.asarray(self.country, dtype=object)
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float).reshape(n, len(self.schema))
        self.group_missing = np.asarray(self.group_missing, dtype=bool).reshape(n, len(self.schema.marker_groups))
        if self.synthetic is None:
            self.synthetic = np.zeros(n, dtype=bool)
        for name in ("participant_id", "country", "timestamp", "synthetic"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self) -> int:
        return len(self.label)

    @property
    def users(self) -> np.ndarray:
        return np.unique(self.participant_id)

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(
            str(self.participant_id[i]),
            str(self.country[i]),
            int(self.timestamp[i]),
            BinaryLabel(int(self.label[i])),
            self.values[i].copy(),
            dict(zip(self.schema.marker_groups, map(bool, self.group_missing[i]))),
        )

    @property
    def rows(self) -> list[FeatureVector]:
        return [self.row(i) for i in range(len(self))]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.schema,
            self.participant_id[idx],
            self.country[idx],
            self.timestamp[idx],
            self.label[idx],
            self.values[idx],
            self.group_missing[idx],
            self.synthetic[idx],
        )

    def where_country(self, countries) -> "FeatureMatrix":
        if isinstance(countries, str):
            countries = [countries]
        return self.take(np.flatnonzero(np.isin(self.country, list(countries))))

    def marker_matrix(self) -> np.ndarray:
        return self.group_missing.astype(float)

    def design(self) -> tuple[np.ndarray, list[str]]:
        """Model input: features followed by 0/1 markers."""
        return np.hstack([self.values, self.marker_matrix()]), list(self.schema.features) + list(self.schema.markers)

    # -- CSV ---------------------------------------------------------------

    META_COLUMNS = ("participant_id", "country", "report_timestamp")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(self.META_COLUMNS) + list(self.schema.features) + list(self.schema.markers) + ["label"])
            for i in range(len(self)):
                writer.writerow(
                    [self.participant_id[i], self.country[i], int(self.timestamp[i])]
                    + [_fmt(v) for v in self.values[i]]
                    + [int(m) for m in self.group_missing[i]]
                    + [int(self.label[i])]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        schema = _schema_from_header(header)
        nf, nm = len(schema), len(schema.marker_groups)
        meta = len(cls.META_COLUMNS)
        pid = [r[0] for r in rows]
        country = [r[1] for r in rows]
        ts = [int(r[2]) for r in rows]
        values = np.array([[float(v) if v != "" else np.nan for v in r[meta : meta + nf]] for r in rows]).reshape(-1, nf)
        markers = np.array([[int(v) for v in r[meta + nf : meta + nf + nm]] for r in rows], dtype=bool).reshape(-1, nm)
        label = [int(r[-1]) for r in rows]
        return cls(schema, pid, country, ts, label, values, markers)


def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


def _schema_from_header(header: Sequence[str]) -> FeatureSchema:
    default = FeatureSchema.default()
    names = header[len(FeatureMatrix.META_COLUMNS) : -1]
    feats = [n for n in names if not n.startswith("missing_")]
    groups = []
    for f in feats:
        g = default.group_of.get(f)
        if g is None:
            raise ValueError(f"unknown feature column {f!r}")
        if g not in groups:
            groups.append(g)
    schema = default.project(groups)
    if list(schema.features) != feats:
        raise ValueError("feature columns are not in schema order")
    if list(schema.markers) != [n for n in names if n.startswith("missing_")]:
        raise ValueError("marker columns do not match feature groups")
    return schema


# -- per-group aggregation --------------------------------------------------


def _stats(values: Sequence[float]) -> list[float]:
    arr = np.asarray(values, dtype=float)
    # population std; a singleton has std 0
    return [float(arr.mean()), float(arr.max()), float(arr.min()), float(arr.std())]


def haversine(lat1, lon1, lat2, lon2) -> np.ndarray:
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def screen_episodes(events: Sequence[SensorEvent], start: int, end: int) -> list[tuple[float, float, bool]]:
    """Pair on/off transitions into (start, end, user_present) episodes clipped to ``[start, end)``.

    A leading ``off`` closes an episode that was already open at the window
    start; a trailing ``on`` stays open until the window end.
    """
    episodes = []
    open_at = None
    present = False
    first = True
    for ev in events:
        state = ev.payload["screen_state"]
        if state == "on":
            if open_at is None:
                open_at = ev.timestamp
                present = bool(ev.payload.get("user_present", False))
        elif open_at is not None:
            episodes.append((open_at, ev.timestamp, present))
            open_at = None
        elif first:
            episodes.append((start, ev.timestamp, False))
        first = False
    if open_at is not None:
        episodes.append((open_at, end, present))
    return episodes


def aggregate_window(events: Sequence[SensorEvent], group: str, start: int, end: int) -> list[float] | None:
    """Aggregate one sensor group's events inside ``[start, end)``.

    Events must be time-ordered and all belong to ``group``. Returns ``None``
    when there are no events, which marks the group missing for the window.
    """
    if not events:
        return None
    span = float(end - start)
    if group == "location":
        lat = np.array([e.payload["lat"] for e in events], dtype=float)
        lon = np.array([e.payload["lon"] for e in events], dtype=float)
        alt = np.array([e.payload["altitude"] for e in events], dtype=float)
        d_center = haversine(lat, lon, lat.mean(), lon.mean())
        gyration = float(np.sqrt(np.mean(d_center**2)))
        distance = float(haversine(lat[:-1], lon[:-1], lat[1:], lon[1:]).sum()) if len(lat) > 1 else 0.0
        return [gyration, distance, float(alt.mean())]
    if group in ("bluetooth_le", "bluetooth_normal"):
        devices = {e.payload["address"] for e in events}
        return [float(len(devices))] + _stats([e.payload["rssi"] for e in events])
    if group == "wifi":
        hotspot = [e.payload["clients"] for e in events if e.payload["kind"] == "hotspot"]
        conn = [e.payload["connected"] for e in events if e.payload["kind"] == "connection"]
        rssi = [e.payload["rssi"] for e in events if e.payload["kind"] == "scan"]
        # latest reported state wins; an absent state is read as zero
        out = [float(hotspot[-1]) if hotspot else 0.0, float(conn[-1]) if conn else 0.0]
        return out + (_stats(rssi) if rssi else [np.nan] * 4)
    if group.startswith("cellular_"):
        return _stats([e.payload["rssi"] for e in events])
    if group == "notifications":
        posted = [e.payload["key"] for e in events if e.payload["action"] == "posted"]
        removed = [e.payload["key"] for e in events if e.payload["action"] == "removed"]
        return [float(len(posted)), float(len(removed)), float(len(set(posted))), float(len(set(removed)))]
    if group == "proximity":
        return _stats([e.payload["distance_cm"] for e in events])
    if group == "activity":
        shares = dict.fromkeys(ACTIVITY_KINDS, 0.0)
        for ev, nxt in zip(events, list(events[1:]) + [None]):
            stop = end if nxt is None else nxt.timestamp
            shares[ev.payload["activity_kind"]] += (stop - ev.timestamp) / span
        return [shares[k] for k in ACTIVITY_KINDS]
    if group == "steps":
        return [float(sum(e.payload["step_count"] for e in events)), float(len(events))]
    if group == "touch":
        return [float(len(events))]
    if group == "screen":
        eps = screen_episodes(events, start, end)
        lengths = [b - a for a, b, _ in eps]
        presence = float(sum(b - a for a, b, p in eps if p))
        if not lengths:
            return [presence, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        mean, mx, mn, sd = _stats(lengths)
        return [presence, float(len(lengths)), float(sum(lengths)), mean, mx, mn, sd]
    if group == "app_usage":
        durations = dict.fromkeys(APP_CATEGORIES, 0.0)
        last_end = -math.inf
        for ev in events:
            s = ev.timestamp
            if s < last_end:
                raise ValueError(f"overlapping foreground app intervals at t={s}")
            e = s + float(ev.payload["duration_s"])
            last_end = e
            durations[ev.payload["app_category"]] += min(e, end) - s
        return [durations[c] for c in APP_CATEGORIES]
    raise ValueError(f"unknown sensor group {group!r}")


def local_time_features(timestamp: int, utc_offset_minutes: int) -> tuple[float, float]:
    """(hour 0..23, weekend 0/1) in the participant's local time."""
    local = datetime.fromtimestamp(timestamp, tz=timezone.utc) + timedelta(minutes=utc_offset_minutes)
    return float(local.hour), float(local.weekday() >= 5)


def build_examples(ds: Dataset, window_seconds: int = 600, schema: FeatureSchema | None = None) -> FeatureMatrix:
    """One feature row per self-report, aggregating ``[t - w/2, t + w/2)``.

    Rows come out ordered by (participant_id, report timestamp).
    """
    if window_seconds < 60:
        raise ValueError(f"window_seconds must be >= 60, got {window_seconds}")
    schema = schema or FeatureSchema.default()
    half_lo = window_seconds // 2
    half_hi = window_seconds - half_lo
    sensor_groups = schema.marker_groups
    slices = schema.group_slices

    pids, countries, stamps, labels, value_rows, missing_rows = [], [], [], [], [], []
    for participant in ds.participants:
        pid = participant.participant_id
        reports = ds.reports_by_participant.get(pid, [])
        if not reports:
            continue
        per_mod: dict[str, list[SensorEvent]] = {g: [] for g in sensor_groups}
        for ev in ds.events_by_participant.get(pid, []):
            if ev.modality in per_mod:
                per_mod[ev.modality].append(ev)
        times = {g: [e.timestamp for e in evs] for g, evs in per_mod.items()}
        for rep in reports:
            start, end = rep.timestamp - half_lo, rep.timestamp + half_hi
            row = np.full(len(schema), np.nan)
            missing = np.zeros(len(sensor_groups), dtype=bool)
            for j, g in enumerate(sensor_groups):
                lo = bisect_left(times[g], start)
                hi = bisect_left(times[g], end)
                vals = aggregate_window(per_mod[g][lo:hi], g, start, end)
                if vals is None:
                    missing[j] = True
                else:
                    row[slices[g]] = vals
            if "time" in slices:
                row[slices["time"]] = local_time_features(rep.timestamp, participant.utc_offset_minutes)
            pids.append(pid)
            countries.append(participant.country)
            stamps.append(rep.timestamp)
            labels.append(int(binarize_label(rep)))
            value_rows.append(row)
            missing_rows.append(missing)
    n = len(labels)
    return FeatureMatrix(
        schema,
        pids,
        countries,
        stamps,
        labels,
        np.array(value_rows).reshape(n, len(schema)),
        np.array(missing_rows).reshape(n, len(sensor_groups)),
    )
