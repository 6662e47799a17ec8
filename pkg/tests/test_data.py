import json
import logging

import pytest

from socialctx import data
from socialctx.data import BinaryLabel, DataError, Participant, SelfReport, SensorEvent


def _write_dataset(tmp_path, event_lines, reports=None, participants=None):
    ev = tmp_path / "events.jsonl"
    ev.write_text("".join(json.dumps(e) + "\n" for e in event_lines))
    rep = tmp_path / "reports.csv"
    rep.write_text(
        "participant_id,timestamp,social_context,valence,semantic_location,activity\n"
        + "".join(reports or ["p1,1000,alone,3,home,resting\n"])
    )
    par = tmp_path / "participants.csv"
    par.write_text("participant_id,country,utc_offset_minutes,sex\n" + "".join(participants or ["p1,UK,0,female\n"]))
    return ev, rep, par


def test_ingest_round_trip_counts(tmp_path):
    events = [
        {"participant_id": "p1", "timestamp": 1000, "modality": "touch", "payload": {}},
        {"participant_id": "p1", "timestamp": 990, "modality": "steps", "payload": {"step_count": 4}},
        {"participant_id": "p1", "timestamp": 995, "modality": "proximity", "payload": {"distance_cm": 5.0}},
    ]
    ds = data.ingest(*_write_dataset(tmp_path, events))
    assert ds.counts == (3, 1, 1)
    # unsorted input comes back sorted per participant
    assert [e.timestamp for e in ds.events] == [990, 995, 1000]


def test_unknown_modality_names_row(tmp_path):
    events = [
        {"participant_id": "p1", "timestamp": 1000, "modality": "touch", "payload": {}},
        {"participant_id": "p1", "timestamp": 1001, "modality": "sonar", "payload": {}},
    ]
    with pytest.raises(DataError, match=r"row 2.*sonar"):
        data.ingest(*_write_dataset(tmp_path, events))


def test_bad_timestamp_and_orphan(tmp_path):
    bad = [{"participant_id": "p1", "timestamp": "yesterday", "modality": "touch", "payload": {}}]
    with pytest.raises(DataError, match="row 1"):
        data.ingest(*_write_dataset(tmp_path, bad))
    orphan = [{"participant_id": "ghost", "timestamp": 5, "modality": "touch", "payload": {}}]
    with pytest.raises(DataError, match="orphan"):
        data.ingest(*_write_dataset(tmp_path, orphan))


@pytest.mark.parametrize(
    "modality,payload",
    [
        ("bluetooth_le", {"address": "a", "rssi": 3}),
        ("steps", {"step_count": -1}),
        ("wifi", {"kind": "beacon"}),
        ("screen", {"screen_state": "dim"}),
        ("app_usage", {"app_category": "social", "duration_s": 0}),
    ],
)
def test_payload_invariants(modality, payload):
    with pytest.raises(DataError):
        data.validate_event(SensorEvent("p", 0, modality, payload))


def test_boolean_payload_fields_accepted():
    data.validate_event(SensorEvent("p", 0, "wifi", {"kind": "connection", "connected": True}))
    with pytest.raises(DataError):
        data.validate_event(SensorEvent("p", 0, "steps", {"step_count": True}))


def test_duplicate_participant_rejected():
    with pytest.raises(DataError, match="duplicate"):
        data.Dataset.build([Participant("a", "UK"), Participant("a", "UK")], [], [])


def test_invalid_social_context():
    with pytest.raises(ValueError):
        SelfReport("p", 0, "aliens")


@pytest.mark.parametrize(
    "context,expected",
    [("alone", BinaryLabel.ALONE), ("partner", BinaryLabel.NOT_ALONE), ("relatives", BinaryLabel.NOT_ALONE)],
)
def test_binarize_label(context, expected):
    assert data.binarize_label(SelfReport("p", 0, context)) is expected


def _participant_reports(pid, n, n_alone):
    return [SelfReport(pid, 3600 * i, "alone" if i < n_alone else "friends") for i in range(n)]


def test_filter_participants_boundaries(caplog):
    parts = [Participant(p, "UK") for p in ("short", "edge", "few_alone")]
    reports = (
        _participant_reports("short", 99, 40)
        + _participant_reports("edge", 100, 6)
        + _participant_reports("few_alone", 500, 5)
    )
    events = [SensorEvent("short", 0, "touch", {}), SensorEvent("edge", 0, "touch", {})]
    ds = data.Dataset.build(parts, events, reports)
    kept = data.filter_participants(ds)
    assert [p.participant_id for p in kept.participants] == ["edge"]
    assert {e.participant_id for e in kept.events} == {"edge"}
    assert {r.participant_id for r in kept.reports} == {"edge"}
    with caplog.at_level(logging.WARNING):
        empty = data.filter_participants(ds, min_reports=10_000)
    assert empty.counts == (0, 0, 0)
    assert "removed every participant" in caplog.text


@pytest.mark.parametrize(
    "value,expected",
    [(5, 5), ("17", 17), ("17.0", 17), (12.0, 12), ("1970-01-01T00:01:00Z", 60), ("1970-01-01T01:00:00+01:00", 0)],
)
def test_parse_timestamp(value, expected):
    assert data.parse_timestamp(value) == expected


@pytest.mark.parametrize("value", ["12.5", "soon", True, float("nan")])
def test_parse_timestamp_rejects(value):
    with pytest.raises(ValueError):
        data.parse_timestamp(value)


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_emit_ingest_round_trip(tmp_path, default_dataset, fmt):
    small = data.Dataset.build(
        default_dataset.participants[:2],
        [e for e in default_dataset.events if e.participant_id in {p.participant_id for p in default_dataset.participants[:2]}],
        [r for r in default_dataset.reports if r.participant_id in {p.participant_id for p in default_dataset.participants[:2]}],
    )
    paths = data.emit(small, tmp_path, fmt)
    back = data.ingest(paths["events"], paths["reports"], paths["participants"])
    assert back == small
