"""Domain records, dataset ingestion/emission, label binarization and participant filtering."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

MODALITIES = (
    "location",
    "bluetooth_le",
    "bluetooth_normal",
    "wifi",
    "cellular_gsm",
    "cellular_wcdma",
    "cellular_lte",
    "notifications",
    "proximity",
    "activity",
    "steps",
    "touch",
    "screen",
    "app_usage",
)

SOCIAL_CONTEXTS = (
    "alone",
    "friends",
    "relatives",
    "classmates",
    "roommates",
    "colleagues",
    "partner",
    "other",
)

ACTIVITY_KINDS = (
    "still",
    "tilting",
    "in_vehicle",
    "on_bicycle",
    "on_foot",
    "walking",
    "running",
    "unknown",
)

# Google Play store categories (apps followed by games).
APP_CATEGORIES = (
    "art_and_design",
    "auto_and_vehicles",
    "beauty",
    "books_and_reference",
    "business",
    "comics",
    "communication",
    "dating",
    "education",
    "entertainment",
    "events",
    "finance",
    "food_and_drink",
    "health_and_fitness",
    "house_and_home",
    "lifestyle",
    "maps_and_navigation",
    "medical",
    "music_and_audio",
    "news_and_magazines",
    "parenting",
    "personalization",
    "photography",
    "productivity",
    "shopping",
    "social",
    "sports",
    "tools",
    "travel_and_local",
    "video_players",
    "weather",
    "game_action",
    "game_adventure",
    "game_arcade",
    "game_board",
    "game_card",
    "game_casino",
    "game_casual",
    "game_educational",
    "game_music",
    "game_puzzle",
    "game_racing",
    "game_role_playing",
    "game_simulation",
    "game_sports",
    "game_strategy",
    "game_trivia",
    "game_word",
)

KNOWN_COUNTRIES = ("UK", "Denmark", "Italy", "Paraguay", "Mongolia")
SEXES = ("female", "male", "other")


class DataError(ValueError):
    """Malformed input data; carries the file row when known."""

    def __init__(self, message: str, row: int | None = None, path: str | Path | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{':'.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.path = path


class BinaryLabel(enum.IntEnum):
    NOT_ALONE = 0
    ALONE = 1


@dataclass(frozen=True)
class SensorEvent:
    participant_id: str
    timestamp: int
    modality: str
    payload: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SelfReport:
    participant_id: str
    timestamp: int
    social_context: str
    valence: int | None = None
    semantic_location: str | None = None
    activity: str | None = None

    def __post_init__(self):
        if self.social_context not in SOCIAL_CONTEXTS:
            raise DataError(f"unknown social_context {self.social_context!r}")
        if self.valence is not None and not 1 <= self.valence <= 5:
            raise DataError(f"valence {self.valence} outside 1..5")


@dataclass(frozen=True)
class Participant:
    participant_id: str
    country: str
    utc_offset_minutes: int = 0
    sex: str | None = None


def _check_payload(modality: str, payload: Mapping[str, Any]) -> None:
    def need(key, kind=(int, float)):
        if key not in payload:
            raise DataError(f"{modality} payload missing {key!r}")
        value = payload[key]
        numeric_bool = isinstance(value, bool) and kind is not bool
        if kind is not None and (numeric_bool or not isinstance(value, kind)):
            raise DataError(f"{modality} payload field {key!r} has bad type {type(value).__name__}")
        if isinstance(value, float) and not math.isfinite(value):
            raise DataError(f"{modality} payload field {key!r} is not finite")
        return value

    if modality == "location":
        lat, lon = need("lat"), need("lon")
        need("altitude")
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise DataError(f"location fix out of range ({lat}, {lon})")
    elif modality in ("bluetooth_le", "bluetooth_normal"):
        need("address", str)
        if need("rssi", int) > 0:
            raise DataError(f"{modality} rssi must be <= 0")
    elif modality == "wifi":
        kind = need("kind", str)
        if kind == "scan":
            need("bssid", str)
            if need("rssi", int) > 0:
                raise DataError("wifi rssi must be <= 0")
        elif kind == "connection":
            need("connected", bool)
        elif kind == "hotspot":
            if need("clients", int) < 0:
                raise DataError("wifi hotspot clients must be >= 0")
        else:
            raise DataError(f"unknown wifi event kind {kind!r}")
    elif modality.startswith("cellular_"):
        if need("rssi", int) > 0:
            raise DataError(f"{modality} rssi must be <= 0")
    elif modality == "notifications":
        if need("action", str) not in ("posted", "removed"):
            raise DataError(f"unknown notification action {payload['action']!r}")
        need("key", str)
    elif modality == "proximity":
        if need("distance_cm") < 0:
            raise DataError("proximity distance must be >= 0")
    elif modality == "activity":
        if need("activity_kind", str) not in ACTIVITY_KINDS:
            raise DataError(f"unknown activity_kind {payload['activity_kind']!r}")
    elif modality == "steps":
        if need("step_count", int) < 0:
            raise DataError("step_count must be >= 0")
    elif modality == "touch":
        pass
    elif modality == "screen":
        if need("screen_state", str) not in ("on", "off"):
            raise DataError(f"unknown screen_state {payload['screen_state']!r}")
        if "user_present" in payload and not isinstance(payload["user_present"], bool):
            raise DataError("screen user_present must be boolean")
    elif modality == "app_usage":
        if need("app_category", str) not in APP_CATEGORIES:
            raise DataError(f"unknown app_category {payload['app_category']!r}")
        if need("duration_s") <= 0:
            raise DataError("app_usage duration_s must be > 0")
    else:
        raise DataError(f"unknown modality {modality!r}")


def validate_event(event: SensorEvent) -> None:
    if event.modality not in MODALITIES:
        raise DataError(f"unknown modality {event.modality!r}")
    _check_payload(event.modality, event.payload)


@dataclass(frozen=True)
class Dataset:
    """Participants, sensor events and self-reports.

    Build through :meth:`build`, which validates references and sorts every
    participant's events and reports by timestamp.
    """

    participants: tuple[Participant, ...]
    events: tuple[SensorEvent, ...]
    reports: tuple[SelfReport, ...]

    @classmethod
    def build(
        cls,
        participants: Iterable[Participant],
        events: Iterable[SensorEvent],
        reports: Iterable[SelfReport],
        validate: bool = True,
    ) -> "Dataset":
        participants = tuple(sorted(participants, key=lambda p: p.participant_id))
        seen = Counter(p.participant_id for p in participants)
        dupes = [pid for pid, n in seen.items() if n > 1]
        if dupes:
            raise DataError(f"duplicate participant_id {dupes[0]!r}")
        known = set(seen)
        events = list(events)
        reports = list(reports)
        for i, ev in enumerate(events):
            if ev.participant_id not in known:
                raise DataError(f"event {i}: orphan participant_id {ev.participant_id!r}")
            if validate:
                validate_event(ev)
        for i, rep in enumerate(reports):
            if rep.participant_id not in known:
                raise DataError(f"report {i}: orphan participant_id {rep.participant_id!r}")
        # stable sorts keep the input order of equal timestamps
        events.sort(key=lambda e: (e.participant_id, e.timestamp))
        reports.sort(key=lambda r: (r.participant_id, r.timestamp))
        return cls(participants, tuple(events), tuple(reports))

    @cached_property
    def participant_index(self) -> dict[str, Participant]:
        return {p.participant_id: p for p in self.participants}

    @cached_property
    def events_by_participant(self) -> dict[str, list[SensorEvent]]:
        out: dict[str, list[SensorEvent]] = defaultdict(list)
        for ev in self.events:
            out[ev.participant_id].append(ev)
        return dict(out)

    @cached_property
    def reports_by_participant(self) -> dict[str, list[SelfReport]]:
        out: dict[str, list[SelfReport]] = defaultdict(list)
        for rep in self.reports:
            out[rep.participant_id].append(rep)
        return dict(out)

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.events), len(self.reports), len(self.participants)

    def countries(self) -> list[str]:
        return sorted({p.country for p in self.participants})


def binarize_label(report: SelfReport) -> BinaryLabel:
    """Alone for ``alone``; every company category maps to NotAlone."""
    return BinaryLabel.ALONE if report.social_context == "alone" else BinaryLabel.NOT_ALONE


def filter_participants(ds: Dataset, min_reports: int = 100, min_minority: int = 6) -> Dataset:
    """Keep participants with enough reports and enough minority-class labels.

    The minority class is computed per participant on the binarized label.
    Events and reports of dropped participants are removed as well.
    """
    keep = set()
    for pid, reports in ds.reports_by_participant.items():
        n_alone = sum(binarize_label(r) is BinaryLabel.ALONE for r in reports)
        minority = min(n_alone, len(reports) - n_alone)
        if len(reports) >= min_reports and minority >= min_minority:
            keep.add(pid)
    if not keep:
        logger.warning("participant filter removed every participant")
    return Dataset(
        tuple(p for p in ds.participants if p.participant_id in keep),
        tuple(e for e in ds.events if e.participant_id in keep),
        tuple(r for r in ds.reports if r.participant_id in keep),
    )


# -- file formats -----------------------------------------------------------


def parse_timestamp(value: Any) -> int:
    """Integer UTC seconds from an int, an integral float string or ISO-8601."""
    if isinstance(value, bool):
        raise ValueError(f"unparseable timestamp {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value):
            return int(value)
        raise ValueError(f"unparseable timestamp {value!r}")
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        as_float = float(text)
    except ValueError:
        as_float = None
    if as_float is not None:
        return parse_timestamp(as_float)
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ValueError(f"unparseable timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _event_from_record(rec: Mapping[str, Any], row: int, path) -> SensorEvent:
    for key in ("participant_id", "timestamp", "modality", "payload"):
        if key not in rec:
            raise DataError(f"missing column {key!r}", row, path)
    modality = rec["modality"]
    if modality not in MODALITIES:
        raise DataError(f"unknown modality {modality!r}", row, path)
    try:
        ts = parse_timestamp(rec["timestamp"])
    except ValueError as exc:
        raise DataError(str(exc), row, path) from None
    payload = rec["payload"]
    if isinstance(payload, str):
        try:
            payload = json.loads(payload) if payload.strip() else {}
        except json.JSONDecodeError as exc:
            raise DataError(f"payload is not JSON ({exc.msg})", row, path) from None
    if not isinstance(payload, dict):
        raise DataError("payload must be a JSON object", row, path)
    event = SensorEvent(str(rec["participant_id"]), ts, modality, payload)
    try:
        validate_event(event)
    except DataError as exc:
        raise DataError(str(exc), row, path) from None
    return event


def read_events(path: str | Path, fmt: str | None = None) -> list[SensorEvent]:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for row, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"invalid JSON ({exc.msg})", row, path) from None
                events.append(_event_from_record(rec, row, path))
        elif fmt == "csv":
            # row numbers count the header as row 1
            for row, rec in enumerate(csv.DictReader(fh), start=2):
                events.append(_event_from_record(rec, row, path))
        else:
            raise ValueError(f"unknown events format {fmt!r}")
    return events


def _optional(value: str | None) -> str | None:
    return None if value is None or value == "" else value


def read_reports(path: str | Path) -> list[SelfReport]:
    reports = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                ts = parse_timestamp(rec["timestamp"])
                valence = _optional(rec.get("valence"))
                reports.append(
                    SelfReport(
                        participant_id=rec["participant_id"],
                        timestamp=ts,
                        social_context=rec["social_context"],
                        valence=None if valence is None else int(valence),
                        semantic_location=_optional(rec.get("semantic_location")),
                        activity=_optional(rec.get("activity")),
                    )
                )
            except KeyError as exc:
                raise DataError(f"missing column {exc.args[0]!r}", row, path) from None
            except ValueError as exc:
                raise DataError(str(exc), row, path) from None
    return reports


def read_participants(path: str | Path) -> list[Participant]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                offset = _optional(rec.get("utc_offset_minutes"))
                sex = _optional(rec.get("sex"))
                if sex is not None and sex not in SEXES:
                    raise ValueError(f"unknown sex {sex!r}")
                out.append(
                    Participant(
                        participant_id=rec["participant_id"],
                        country=rec["country"],
                        utc_offset_minutes=0 if offset is None else int(offset),
                        sex=sex,
                    )
                )
            except KeyError as exc:
                raise DataError(f"missing column {exc.args[0]!r}", row, path) from None
            except ValueError as exc:
                raise DataError(str(exc), row, path) from None
    return out


def ingest(
    events_path: str | Path,
    reports_path: str | Path,
    participants_path: str | Path,
    format: str | None = None,
) -> Dataset:
    """Read the three dataset files into a validated, sorted :class:`Dataset`."""
    events = read_events(events_path, format)
    reports = read_reports(reports_path)
    participants = read_participants(participants_path)
    return Dataset.build(participants, events, reports, validate=False)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_events(events: Iterable[SensorEvent], path: str | Path, fmt: str = "jsonl") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for ev in events:
                fh.write(
                    _dumps(
                        {
                            "participant_id": ev.participant_id,
                            "timestamp": ev.timestamp,
                            "modality": ev.modality,
                            "payload": dict(ev.payload),
                        }
                    )
                )
                fh.write("\n")
        elif fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["participant_id", "timestamp", "modality", "payload"])
            for ev in events:
                writer.writerow([ev.participant_id, ev.timestamp, ev.modality, _dumps(dict(ev.payload))])
        else:
            raise ValueError(f"unknown events format {fmt!r}")


def write_reports(reports: Iterable[SelfReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "timestamp", "social_context", "valence", "semantic_location", "activity"])
        for r in reports:
            writer.writerow(
                [
                    r.participant_id,
                    r.timestamp,
                    r.social_context,
                    "" if r.valence is None else r.valence,
                    r.semantic_location or "",
                    r.activity or "",
                ]
            )


def write_participants(participants: Iterable[Participant], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "country", "utc_offset_minutes", "sex"])
        for p in participants:
            writer.writerow([p.participant_id, p.country, p.utc_offset_minutes, p.sex or ""])


def emit(ds: Dataset, out_dir: str | Path, fmt: str = "jsonl") -> dict[str, Path]:
    """Write ``ds`` as events/reports/participants files; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out_dir / ("events.jsonl" if fmt == "jsonl" else "events.csv"),
        "reports": out_dir / "reports.csv",
        "participants": out_dir / "participants.csv",
    }
    write_events(ds.events, paths["events"], fmt)
    write_reports(ds.reports, paths["reports"])
    write_participants(ds.participants, paths["participants"])
    return paths


def label_summary(ds: Dataset) -> list[dict[str, Any]]:
    """Per-country report counts and alone percentages."""
    buckets: dict[str, Counter] = defaultdict(Counter)
    pcount: Counter = Counter(p.country for p in ds.participants)
    for r in ds.reports:
        country = ds.participant_index[r.participant_id].country
        buckets[country][binarize_label(r)] += 1
    rows = []
    for country in sorted(buckets):
        c = buckets[country]
        n = c[BinaryLabel.ALONE] + c[BinaryLabel.NOT_ALONE]
        rows.append(
            {
                "country": country,
                "participants": pcount[country],
                "reports": n,
                "alone_pct": 100.0 * c[BinaryLabel.ALONE] / n if n else float("nan"),
            }
        )
    return rows


def dataset_to_bytes(ds: Dataset) -> bytes:
    """Canonical serialization, used for byte-level determinism checks."""
    buf = io.StringIO()
    for ev in ds.events:
        buf.write(_dumps([ev.participant_id, ev.timestamp, ev.modality, dict(ev.payload)]))
        buf.write("\n")
    for r in ds.reports:
        buf.write(_dumps([r.participant_id, r.timestamp, r.social_context, r.valence, r.semantic_location, r.activity]))
        buf.write("\n")
    for p in ds.participants:
        buf.write(_dumps([p.participant_id, p.country, p.utc_offset_minutes, p.sex]))
        buf.write("\n")
    return buf.getvalue().encode()
