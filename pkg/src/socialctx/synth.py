"""Seeded synthetic multi-country cohorts of sensor events and hourly self-reports.

The generator works at the level of *knobs*: every knob is named after the
feature it most directly drives (``touch_events``, ``app_social``, ...). A
knob's latent shift for one report is the participant's signature offset plus
the profile's label-conditioned effect plus the signature of the routine place
the participant is at, and the modality simulators turn the shifts into raw
events. Places are personal: each participant has a few where they are
usually alone and a few where they usually are not. Counts are rate-shifted Poisson draws, continuous
readings are additively shifted Gaussians and binary states get a logit
shift.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import stats

from .data import (
    ACTIVITY_KINDS,
    APP_CATEGORIES,
    MODALITIES,
    Dataset,
    Participant,
    SelfReport,
    SensorEvent,
)

WINDOW = 600
WAKING_HOURS = range(8, 24)
STUDY_START = datetime(2020, 11, 2, tzinfo=timezone.utc)  # a Monday
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# knob name -> kind; "count" shifts a log-rate, "gauss" shifts a mean in
# reading-sd units, "prob" shifts a logit
KNOBS: dict[str, str] = {
    "location_radius_of_gyration": "gauss",
    "location_altitude": "gauss",
    "bluetooth_le_num_devices": "count",
    "bluetooth_le_rssi_mean": "gauss",
    "bluetooth_normal_num_devices": "count",
    "bluetooth_normal_rssi_mean": "gauss",
    "wifi_hotspot_devices": "count",
    "wifi_connected": "prob",
    "wifi_rssi_mean": "gauss",
    "cellular_gsm_signal_mean": "gauss",
    "cellular_wcdma_signal_mean": "gauss",
    "cellular_lte_signal_mean": "gauss",
    "notifications_posted": "count",
    "notifications_removed": "count",
    "proximity_mean": "prob",
    "steps_counted": "count",
    "steps_detected": "count",
    "touch_events": "count",
    "screen_presence_time": "prob",
    "screen_episodes": "count",
    "screen_time_per_episode": "gauss",
    **{f"activity_{k}": "prob" for k in ACTIVITY_KINDS},
    **{f"app_{c}": "prob" for c in APP_CATEGORIES},
}
KNOB_NAMES = tuple(KNOBS)
_KNOB_INDEX = {k: i for i, k in enumerate(KNOB_NAMES)}
# every place has its own radio environment and altitude; a few other
# non-app knobs vary by place too
_ENVIRONMENT_KNOBS = np.array([
    _KNOB_INDEX[k]
    for k in (
        "location_altitude",
        "wifi_rssi_mean",
        "bluetooth_le_rssi_mean",
        "bluetooth_normal_rssi_mean",
        "cellular_gsm_signal_mean",
        "cellular_wcdma_signal_mean",
        "cellular_lte_signal_mean",
    )
])
_PLACE_KNOBS = np.array([
    i for i, k in enumerate(KNOB_NAMES) if not k.startswith("app_") and i not in set(_ENVIRONMENT_KNOBS)
])

# participants with sufficient data and their alone share, per country
STUDY_COHORT = {
    "UK": (53, 0.6905),
    "Denmark": (17, 0.4963),
    "Italy": (221, 0.6478),
    "Paraguay": (24, 0.5452),
    "Mongolia": (138, 0.2452),
}

COUNTRY_SITES = {
    # lat, lon, altitude (m), utc offset (min) during the study
    "UK": (51.507, -0.128, 20.0, 0),
    "Denmark": (57.048, 9.919, 10.0, 60),
    "Italy": (46.067, 11.121, 200.0, 60),
    "Paraguay": (-25.264, -57.576, 60.0, -180),
    "Mongolia": (47.886, 106.906, 1350.0, 480),
}

# label-conditioned effects shared by the default profiles, as the
# NotAlone-minus-Alone difference; split symmetrically around zero
BASE_EFFECTS = {
    "bluetooth_le_num_devices": 0.45,
    "bluetooth_normal_num_devices": 0.35,
    "wifi_connected": -0.5,
    "notifications_posted": 0.25,
    "touch_events": -0.3,
    "screen_time_per_episode": -0.35,
    "activity_still": -0.45,
    "location_radius_of_gyration": 0.5,
    "app_news_and_magazines": -0.6,
    "app_books_and_reference": -0.6,
    "app_game_simulation": -0.5,
    "app_maps_and_navigation": 0.5,
    "app_social": 0.35,
    "proximity_mean": 0.3,
}

BASE_MISSINGNESS = {
    "location": 0.25,
    "bluetooth_le": 0.2,
    "bluetooth_normal": 0.3,
    "wifi": 0.2,
    "cellular_gsm": 0.95,
    "cellular_wcdma": 0.35,
    "cellular_lte": 0.15,
    "notifications": 0.1,
    "proximity": 0.15,
    "activity": 0.2,
    "steps": 0.3,
    "touch": 0.25,
    "screen": 0.1,
    "app_usage": 0.15,
}

_APP_BASE = {
    "communication": -0.5,
    "social": -0.8,
    "tools": -1.5,
    "video_players": -1.5,
    "music_and_audio": -1.5,
    "productivity": -1.8,
    "entertainment": -2.0,
    "photography": -2.2,
    "maps_and_navigation": -2.2,
}
_ACTIVITY_BASE = {
    "still": 0.55,
    "tilting": 0.08,
    "in_vehicle": 0.07,
    "on_bicycle": 0.02,
    "on_foot": 0.1,
    "walking": 0.1,
    "running": 0.02,
    "unknown": 0.06,
}
# routine places per participant and label, and how often the place matches it
PLACES_PER_LABEL = 2
ROUTINE_PURITY = 0.98
_COMPANY = ("friends", "relatives", "classmates", "roommates", "colleagues", "partner", "other")
_COMPANY_P = np.array([0.3, 0.15, 0.12, 0.1, 0.08, 0.15, 0.1])
_PLACES = ("home", "university", "workplace", "friends_home", "outdoors", "shop", "other")
_ACTIVITIES = ("studying", "eating", "resting", "working", "commuting", "socializing", "sport", "other")


class ConfigError(ValueError):
    """Invalid generator configuration; ``field`` is the dotted path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass
class CountryProfile:
    country: str
    n_participants: int
    alone_prevalence: float
    reports_mean: float = 150.0
    reports_spread: float = 25.0
    feature_effects: dict[str, tuple[float, float]] = field(default_factory=dict)
    missingness: dict[str, float] = field(default_factory=dict)
    user_signature_strength: float = 1.0
    utc_offset_minutes: int | None = None
    routine_strength: float | None = None  # None: follow user_signature_strength

    @property
    def routine(self) -> float:
        return self.user_signature_strength if self.routine_strength is None else self.routine_strength

    def validate(self, prefix: str = "") -> None:
        path = f"{prefix}{self.country}"
        if self.n_participants < 1:
            raise ConfigError(f"{path}.n_participants", "must be >= 1")
        if not 0.0 <= self.alone_prevalence <= 1.0:
            raise ConfigError(f"{path}.alone_prevalence", f"probability {self.alone_prevalence} outside [0, 1]")
        if self.reports_mean < 1 or self.reports_spread < 0:
            raise ConfigError(f"{path}.reports_mean", "mean must be >= 1 and spread >= 0")
        if self.user_signature_strength < 0:
            raise ConfigError(f"{path}.user_signature_strength", "must be non-negative")
        if self.routine_strength is not None and self.routine_strength < 0:
            raise ConfigError(f"{path}.routine_strength", "must be non-negative")
        for mod, p in self.missingness.items():
            if mod not in MODALITIES:
                raise ConfigError(f"{path}.missingness.{mod}", "unknown modality")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{path}.missingness.{mod}", f"probability {p} outside [0, 1]")
        for feat, eff in self.feature_effects.items():
            if feat not in KNOBS:
                raise ConfigError(f"{path}.feature_effects.{feat}", "feature cannot carry a generated effect")
            if len(eff) != 2 or not all(math.isfinite(v) for v in eff):
                raise ConfigError(f"{path}.feature_effects.{feat}", "expected two finite effects (alone, not_alone)")


@dataclass
class GeneratorConfig:
    profiles: list[CountryProfile]
    master_seed: int = 0
    study_days: int = 28

    def validate(self) -> None:
        names = [p.country for p in self.profiles]
        if len(set(names)) != len(names):
            raise ConfigError("profiles", "countries must be distinct")
        if not self.profiles:
            raise ConfigError("profiles", "at least one profile required")
        if self.study_days < 1:
            raise ConfigError("study_days", "must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        for p in self.profiles:
            p.validate("profiles.")

    def to_dict(self) -> dict:
        d = asdict(self)
        for prof in d["profiles"]:
            prof["feature_effects"] = {k: list(v) for k, v in prof["feature_effects"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        profiles = []
        for prof in d["profiles"]:
            prof = dict(prof)
            prof["feature_effects"] = {k: tuple(v) for k, v in prof.get("feature_effects", {}).items()}
            profiles.append(CountryProfile(**prof))
        return cls(profiles, int(d.get("master_seed", 0)), int(d.get("study_days", 28)))

    def profile_hash(self) -> str:
        blob = json.dumps(self.to_dict()["profiles"], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def symmetric_effects(diffs: dict[str, float], scale: float = 1.0) -> dict[str, tuple[float, float]]:
    """(alone, not_alone) pairs from NotAlone-minus-Alone differences."""
    return {k: (-scale * v / 2.0, scale * v / 2.0) for k, v in diffs.items()}


def default_paper_profiles(
    scale: float = 0.1,
    min_participants: int = 4,
    master_seed: int = 0,
    user_signature_strength: float = 1.0,
) -> GeneratorConfig:
    """Five-country config with the reference cohort's alone prevalences.

    Participant counts are the study's post-filter counts times ``scale``
    (at least ``min_participants``).
    """
    profiles = []
    for country, (n, prevalence) in STUDY_COHORT.items():
        missing = dict(BASE_MISSINGNESS)
        if country == "Mongolia":
            # roughly 60% of Mongolian sensor data was missing
            missing = {m: (p if m == "cellular_gsm" else min(0.9, p + 0.35)) for m, p in missing.items()}
        profiles.append(
            CountryProfile(
                country=country,
                n_participants=max(min_participants, round(n * scale)),
                alone_prevalence=prevalence,
                feature_effects=symmetric_effects(BASE_EFFECTS),
                missingness=missing,
                user_signature_strength=user_signature_strength,
            )
        )
    return GeneratorConfig(profiles, master_seed)


def overlapping_profiles(
    n_participants: int = 10,
    alone_prevalence: float = 0.55,
    master_seed: int = 0,
    user_signature_strength: float = 1.0,
) -> GeneratorConfig:
    """Five countries that differ only in site and time zone."""
    profiles = [
        CountryProfile(
            country=country,
            n_participants=n_participants,
            alone_prevalence=alone_prevalence,
            feature_effects=symmetric_effects(BASE_EFFECTS),
            missingness=dict(BASE_MISSINGNESS),
            user_signature_strength=user_signature_strength,
        )
        for country in STUDY_COHORT
    ]
    return GeneratorConfig(profiles, master_seed)


# knobs that each drive exactly one feature, so an injected effect shows up
# in that feature alone
SCREENING_KNOBS = {
    "UK": ("touch_events", "wifi_connected", "app_social"),
    "Denmark": ("location_altitude", "screen_presence_time", "app_communication"),
    "Italy": ("steps_counted", "app_tools", "touch_events"),
    "Paraguay": ("wifi_connected", "app_video_players", "location_altitude"),
    "Mongolia": ("screen_presence_time", "app_social", "steps_counted"),
}


def screening_profiles(
    n_participants: int = 10,
    effect: float = 1.0,
    master_seed: int = 0,
    user_signature_strength: float = 1.0,
    signals: dict[str, tuple[str, ...]] | None = None,
) -> GeneratorConfig:
    """Five countries whose label depends on exactly the given knobs.

    Participants keep their own prevalence and signature offsets, but have
    no label-linked routine places, so no other feature carries signal.
    """
    signals = SCREENING_KNOBS if signals is None else signals
    profiles = [
        CountryProfile(
            country=country,
            n_participants=n_participants,
            alone_prevalence=STUDY_COHORT.get(country, (0, 0.5))[1],
            feature_effects=symmetric_effects({k: effect for k in knobs}),
            missingness=dict(BASE_MISSINGNESS),
            user_signature_strength=user_signature_strength,
            routine_strength=0.0,
        )
        for country, knobs in signals.items()
    ]
    return GeneratorConfig(profiles, master_seed)


# -- generation ---------------------------------------------------------------


def _country_key(country: str) -> int:
    return zlib.crc32(country.encode("utf-8"))


def _rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p):
    return math.log(p / (1.0 - p))


def user_prevalence(country_prevalence: float, strength: float, index: int, phase: float) -> float:
    """Participant alone-probability from a Beta centred on the country prevalence.

    Quantiles follow a Weyl sequence over participant indices, so the cohort
    mean tracks the country prevalence while each participant's value depends
    only on its own index. Spread grows with ``strength``.
    """
    p = country_prevalence
    if strength <= 0 or p <= 0.0 or p >= 1.0:
        return p
    var = min((0.18 * strength) ** 2, 0.9 * p * (1 - p))
    kappa = p * (1 - p) / var - 1.0
    u = (phase + index * GOLDEN) % 1.0
    return float(stats.beta.ppf(u, p * kappa, (1 - p) * kappa))


@dataclass
class _User:
    pid: str
    prevalence: float
    offsets: np.ndarray
    lat: float
    lon: float
    alt: float
    app_pref: np.ndarray
    places: np.ndarray  # (2 * PLACES_PER_LABEL, n_knobs); alone places first


def _make_user(pid, profile, index, phase, rng, site) -> _User:
    offsets = np.zeros(len(KNOB_NAMES))
    s = profile.user_signature_strength
    if s > 0:
        chosen = rng.choice(len(KNOB_NAMES), size=16, replace=False)
        offsets[chosen] = rng.normal(0.0, 2.0 * s, size=16)
    else:
        rng.choice(len(KNOB_NAMES), size=16, replace=False)
        rng.normal(size=16)
    return _User(
        pid=pid,
        prevalence=user_prevalence(profile.alone_prevalence, s, index, phase),
        offsets=offsets,
        lat=site[0] + rng.normal(0, 0.03),
        lon=site[1] + rng.normal(0, 0.03),
        alt=site[2] + rng.normal(0, 15.0),
        app_pref=rng.normal(0, 0.4, size=len(APP_CATEGORIES)),
        places=_place_signatures(rng, profile.routine),
    )


def _place_signatures(rng, strength: float) -> np.ndarray:
    places = np.zeros((2 * PLACES_PER_LABEL, len(KNOB_NAMES)))
    for row in places:
        row[_ENVIRONMENT_KNOBS] = rng.normal(0.0, 3.0 * strength, size=len(_ENVIRONMENT_KNOBS))
        chosen = rng.choice(_PLACE_KNOBS, size=8, replace=False)
        row[chosen] = rng.normal(0.0, 2.5 * strength, size=8)
    return places


class _Window:
    """Event simulator for one report window."""

    def __init__(self, rng, user: _User, shifts: np.ndarray, start: int):
        self.rng = rng
        self.user = user
        self.shifts = shifts
        self.start = start
        self.events: list[tuple[int, str, dict]] = []

    def s(self, knob: str) -> float:
        return float(self.shifts[_KNOB_INDEX[knob]])

    def times(self, n: int) -> np.ndarray:
        return np.sort(self.rng.integers(self.start, self.start + WINDOW, size=n))

    def emit(self, t, modality, payload):
        self.events.append((int(t), modality, payload))

    def location(self):
        rng = self.rng
        n = 2 + rng.poisson(2)
        step = 40.0 * math.exp(0.5 * rng.normal() + self.s("location_radius_of_gyration"))
        north = rng.normal(0, 150) + np.cumsum(rng.normal(0, step, size=n))
        east = rng.normal(0, 150) + np.cumsum(rng.normal(0, step, size=n))
        lat = self.user.lat + north / 111_320.0
        lon = self.user.lon + east / (111_320.0 * math.cos(math.radians(self.user.lat)))
        alt = self.user.alt + 10.0 * self.s("location_altitude") + rng.normal(0, 10.0, size=n)
        for t, a, b, c in zip(self.times(n), lat, lon, alt):
            self.emit(t, "location", {"lat": round(float(a), 6), "lon": round(float(b), 6), "altitude": round(float(c), 1)})

    def bluetooth(self, modality):
        rng = self.rng
        n_dev = 1 + rng.poisson(3.0 * math.exp(self.s(f"{modality}_num_devices")))
        base = -75.0 + 8.0 * self.s(f"{modality}_rssi_mean")
        out = []
        for d in range(n_dev):
            level = base + rng.normal(0, 5)
            address = f"{modality[:4]}-{int(rng.integers(1 << 24)):06x}-{d}"
            for _ in range(1 + rng.poisson(0.5)):
                rssi = int(min(-20, round(level + rng.normal(0, 3))))
                out.append({"address": address, "rssi": rssi})
        for t, payload in zip(self.times(len(out)), out):
            self.emit(t, modality, payload)

    def wifi(self):
        rng = self.rng
        scans = 1 + rng.poisson(3)
        payloads = [
            {"kind": "hotspot", "clients": int(rng.poisson(0.3 * math.exp(self.s("wifi_hotspot_devices"))))},
            {"kind": "connection", "connected": bool(rng.random() < _sigmoid(_logit(0.6) + self.s("wifi_connected")))},
        ]
        base = -70.0 + 8.0 * self.s("wifi_rssi_mean")
        for k in range(scans):
            payloads.append({"kind": "scan", "bssid": f"ap{k}", "rssi": int(min(-20, round(base + rng.normal(0, 6))))})
        order = rng.permutation(len(payloads))
        for t, k in zip(self.times(len(payloads)), order):
            self.emit(t, "wifi", payloads[k])

    def cellular(self, modality):
        base = {"cellular_gsm": -85.0, "cellular_wcdma": -90.0, "cellular_lte": -100.0}[modality]
        base += 8.0 * self.s(f"{modality}_signal_mean")
        n = 1 + self.rng.poisson(2)
        for t in self.times(n):
            self.emit(t, modality, {"rssi": int(min(-40, round(base + self.rng.normal(0, 4))))})

    def notifications(self):
        rng = self.rng
        posted = 1 + rng.poisson(3.0 * math.exp(self.s("notifications_posted")))
        removed = rng.poisson(2.0 * math.exp(self.s("notifications_removed")))
        actions = ["posted"] * posted + ["removed"] * removed
        order = rng.permutation(len(actions))
        for t, k in zip(self.times(len(actions)), order):
            self.emit(t, "notifications", {"action": actions[k], "key": f"n{int(rng.integers(5))}"})

    def proximity(self):
        p_far = _sigmoid(_logit(0.7) + self.s("proximity_mean"))
        n = 1 + self.rng.poisson(3)
        for t in self.times(n):
            self.emit(t, "proximity", {"distance_cm": 5.0 if self.rng.random() < p_far else 0.0})

    def activity(self):
        logits = np.array([math.log(_ACTIVITY_BASE[k]) + self.s(f"activity_{k}") for k in ACTIVITY_KINDS])
        p = np.exp(logits - logits.max())
        p /= p.sum()
        n = 1 + self.rng.poisson(1.0)
        kinds = self.rng.choice(len(ACTIVITY_KINDS), size=n, p=p)
        for t, k in zip(self.times(n), kinds):
            self.emit(t, "activity", {"activity_kind": ACTIVITY_KINDS[k]})

    def steps(self):
        n = 1 + self.rng.poisson(2.0 * math.exp(self.s("steps_detected")))
        rate = 15.0 * math.exp(self.s("steps_counted"))
        for t in self.times(n):
            self.emit(t, "steps", {"step_count": int(self.rng.poisson(rate))})

    def touch(self):
        n = 1 + self.rng.poisson(6.0 * math.exp(self.s("touch_events")))
        for t in self.times(n):
            self.emit(t, "touch", {})

    def _sequential(self, durations, gap_mean):
        """Non-overlapping (start, duration) placements from the window start."""
        cursor = self.start + self.rng.exponential(gap_mean)
        out = []
        for d in durations:
            t = int(cursor)
            if t >= self.start + WINDOW:
                break
            out.append((t, max(1, int(round(d)))))
            cursor = t + max(1, int(round(d))) + self.rng.exponential(gap_mean)
        return out

    def screen(self):
        rng = self.rng
        n = 1 + rng.poisson(math.exp(self.s("screen_episodes")))
        mean_len = 60.0 * math.exp(0.6 * self.s("screen_time_per_episode"))
        p_present = _sigmoid(_logit(0.7) + self.s("screen_presence_time"))
        for t, d in self._sequential(rng.exponential(mean_len, size=n), 60.0):
            self.emit(t, "screen", {"screen_state": "on", "user_present": bool(rng.random() < p_present)})
            if t + d < self.start + WINDOW:
                self.emit(t + d, "screen", {"screen_state": "off"})

    def app_usage(self):
        rng = self.rng
        base = np.array([_APP_BASE.get(c, -3.5) for c in APP_CATEGORIES])
        shifts = np.array([self.s(f"app_{c}") for c in APP_CATEGORIES])
        p = _sigmoid(base + self.user.app_pref + shifts)
        used = np.flatnonzero(rng.random(len(APP_CATEGORIES)) < p)
        if used.size == 0:
            used = np.array([int(np.argmax(self.user.app_pref + base))])
        used = rng.permutation(used)
        durations = rng.exponential(45.0, size=used.size) * np.exp(0.3 * shifts[used])
        for (t, d), c in zip(self._sequential(durations, 20.0), used):
            self.emit(t, "app_usage", {"app_category": APP_CATEGORIES[c], "duration_s": d})

    def run(self, present: dict[str, bool]):
        for modality in MODALITIES:
            if not present[modality]:
                continue
            if modality in ("bluetooth_le", "bluetooth_normal"):
                self.bluetooth(modality)
            elif modality.startswith("cellular_"):
                self.cellular(modality)
            else:
                getattr(self, modality)()
        return self.events


def _effect_arrays(profile: CountryProfile) -> tuple[np.ndarray, np.ndarray]:
    alone = np.zeros(len(KNOB_NAMES))
    not_alone = np.zeros(len(KNOB_NAMES))
    for feat, (a, b) in profile.feature_effects.items():
        alone[_KNOB_INDEX[feat]] = a
        not_alone[_KNOB_INDEX[feat]] = b
    return alone, not_alone


def _participant(cfg: GeneratorConfig, profile: CountryProfile, index: int, phase: float):
    ckey = _country_key(profile.country)
    site = COUNTRY_SITES.get(profile.country, (0.0, 0.0, 0.0, 0))
    offset = profile.utc_offset_minutes if profile.utc_offset_minutes is not None else site[3]
    pid = f"{profile.country}-{index:03d}"
    rng = _rng(cfg.master_seed, ckey, index)
    user = _make_user(pid, profile, index, phase, rng, site)
    sex = ("female", "male")[int(rng.integers(2))]

    n_slots = cfg.study_days * len(WAKING_HOURS)
    n_reports = int(np.clip(round(rng.normal(profile.reports_mean, profile.reports_spread)), 1, n_slots))
    slots = np.sort(rng.choice(n_slots, size=n_reports, replace=False))
    missing_p = np.array([profile.missingness.get(m, 0.0) for m in MODALITIES])
    eff_alone, eff_not = _effect_arrays(profile)
    start_utc = int(STUDY_START.timestamp()) - 60 * offset

    events: list[SensorEvent] = []
    reports: list[SelfReport] = []
    for day in range(cfg.study_days):
        todays = slots[(slots // len(WAKING_HOURS)) == day]
        if todays.size == 0:
            continue
        drng = _rng(cfg.master_seed, ckey, index, day + 1)
        for slot in todays:
            hour = WAKING_HOURS[slot % len(WAKING_HOURS)]
            # minute offsets in [5, 55) keep consecutive windows disjoint
            t = start_utc + day * 86400 + hour * 3600 + int(drng.integers(300, 3300))
            alone = bool(drng.random() < user.prevalence)
            context = "alone" if alone else _COMPANY[drng.choice(len(_COMPANY), p=_COMPANY_P)]
            valence = int(np.clip(round(drng.normal(3.4 if not alone else 3.1, 0.9)), 1, 5))
            reports.append(
                SelfReport(
                    pid,
                    int(t),
                    context,
                    valence,
                    _PLACES[int(drng.integers(len(_PLACES)))],
                    _ACTIVITIES[int(drng.integers(len(_ACTIVITIES)))],
                )
            )
            at_matching = drng.random() < ROUTINE_PURITY
            place = int(drng.integers(PLACES_PER_LABEL)) + (PLACES_PER_LABEL if alone != at_matching else 0)
            shifts = user.offsets + user.places[place] + (eff_alone if alone else eff_not)
            present = dict(zip(MODALITIES, drng.random(len(MODALITIES)) >= missing_p))
            window = _Window(drng, user, shifts, t - WINDOW // 2)
            for ts, modality, payload in window.run(present):
                events.append(SensorEvent(pid, ts, modality, payload))
    participant = Participant(pid, profile.country, offset, sex)
    return participant, events, reports


def generate(config: GeneratorConfig) -> Dataset:
    """Deterministic synthetic dataset for ``config``.

    RNG streams derive from (master_seed, country, participant, day), so one
    participant's data never depends on how many others are generated.
    """
    config.validate()
    participants, events, reports = [], [], []
    for profile in config.profiles:
        phase = float(_rng(config.master_seed, _country_key(profile.country)).random())
        for i in range(profile.n_participants):
            p, ev, rep = _participant(config, profile, i, phase)
            participants.append(p)
            events.extend(ev)
            reports.extend(rep)
    return Dataset.build(participants, events, reports, validate=False)
