from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialctx import data, features
from socialctx.data import Participant, SelfReport, SensorEvent
from socialctx.features import GROUP_FEATURES, FeatureSchema, aggregate_window, build_examples


def ev(t, modality, **payload):
    return SensorEvent("p", t, modality, payload)


def test_schema_group_sizes():
    schema = FeatureSchema.default()
    sizes = {g: len(fs) for g, fs in zip(schema.groups, schema.group_features)}
    assert sizes == {
        "location": 3, "bluetooth_le": 5, "bluetooth_normal": 5, "wifi": 6, "cellular_gsm": 4,
        "cellular_wcdma": 4, "cellular_lte": 4, "notifications": 4, "proximity": 4, "activity": 8,
        "steps": 2, "touch": 1, "screen": 7, "app_usage": 48, "time": 2,
    }
    assert len(schema) == 107
    assert len(schema.markers) == 14
    assert len(set(schema.features)) == len(schema)


def test_steps_sum():
    out = aggregate_window([ev(1, "steps", step_count=10), ev(2, "steps", step_count=20), ev(3, "steps", step_count=5)],
                           "steps", 0, 600)
    assert out == [35.0, 3.0]


def test_singleton_bluetooth_stats():
    out = aggregate_window([ev(5, "bluetooth_le", address="a", rssi=-60)], "bluetooth_le", 0, 600)
    assert out == [1.0, -60.0, -60.0, -60.0, 0.0]


def test_bluetooth_counts_distinct_devices():
    evs = [ev(1, "bluetooth_normal", address="a", rssi=-50), ev(2, "bluetooth_normal", address="a", rssi=-70),
           ev(3, "bluetooth_normal", address="b", rssi=-60)]
    out = aggregate_window(evs, "bluetooth_normal", 0, 600)
    assert out[:4] == [2.0, -60.0, -50.0, -70.0]
    assert out[4] == pytest.approx(np.std([-50, -70, -60]))


def test_screen_episode_example():
    evs = [ev(10, "screen", screen_state="on", user_present=True), ev(40, "screen", screen_state="off"),
           ev(100, "screen", screen_state="on"), ev(190, "screen", screen_state="off")]
    presence, count, total, mean, mx, mn, sd = aggregate_window(evs, "screen", 0, 600)
    assert (count, total, mean, mx, mn) == (2.0, 120.0, 60.0, 90.0, 30.0)
    assert sd == pytest.approx(30.0)
    assert presence == 30.0


def _episodes_by_seconds(states, start, end):
    """Brute-force oracle: screen state at every second, maximal 'on' runs."""
    on = states[0][1] == "off"  # a leading off means the screen was on at the window start
    by_time = {}
    for t, s in states:
        by_time.setdefault(t, []).append(s)
    runs, cur = [], None
    for sec in range(start, end):
        for s in by_time.get(sec, []):
            on = s == "on"
        if on and cur is None:
            cur = sec
        if not on and cur is not None:
            runs.append(sec - cur)
            cur = None
    if cur is not None:
        runs.append(end - cur)
    return runs


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 599), st.sampled_from(["on", "off"])), min_size=1, max_size=12))
def test_screen_episodes_match_interval_oracle(raw):
    raw = sorted(raw, key=lambda x: x[0])
    # drop zero-length toggles at a shared timestamp, which have no per-second meaning
    states = [r for i, r in enumerate(raw) if i + 1 == len(raw) or raw[i + 1][0] != r[0]]
    evs = [ev(t, "screen", screen_state=s) for t, s in states]
    got = features.screen_episodes(evs, 0, 600)
    lengths = [b - a for a, b, _ in got]
    expected = _episodes_by_seconds(states, 0, 600)
    assert [x for x in lengths if x > 0] == expected


def test_activity_shares_sum_to_at_most_one():
    evs = [ev(100, "activity", activity_kind="still"), ev(400, "activity", activity_kind="walking")]
    out = dict(zip(GROUP_FEATURES["activity"], aggregate_window(evs, "activity", 0, 600)))
    assert out["activity_still"] == pytest.approx(0.5)
    assert out["activity_walking"] == pytest.approx(200 / 600)
    assert sum(out.values()) <= 1.0


def test_app_usage_durations_and_overlap():
    evs = [ev(0, "app_usage", app_category="social", duration_s=30.0),
           ev(50, "app_usage", app_category="social", duration_s=20.0),
           ev(590, "app_usage", app_category="tools", duration_s=60.0)]
    out = dict(zip(GROUP_FEATURES["app_usage"], aggregate_window(evs, "app_usage", 0, 600)))
    assert out["app_social"] == 50.0
    assert out["app_tools"] == 10.0  # clipped at the window end
    with pytest.raises(ValueError, match="overlapping"):
        aggregate_window([ev(0, "app_usage", app_category="social", duration_s=30.0),
                          ev(10, "app_usage", app_category="tools", duration_s=5.0)], "app_usage", 0, 600)


def test_location_gyration_and_distance():
    # two fixes 0.01 degrees of latitude apart on one meridian
    evs = [ev(0, "location", lat=45.0, lon=9.0, altitude=100.0), ev(60, "location", lat=45.01, lon=9.0, altitude=120.0)]
    gyr, dist, alt = aggregate_window(evs, "location", 0, 600)
    d = features.haversine(45.0, 9.0, 45.01, 9.0)
    assert dist == pytest.approx(d)
    assert gyr == pytest.approx(d / 2, rel=1e-6)
    assert alt == 110.0


def test_wifi_latest_state_and_missing_scans():
    evs = [ev(1, "wifi", kind="connection", connected=False), ev(2, "wifi", kind="hotspot", clients=3),
           ev(3, "wifi", kind="connection", connected=True)]
    out = aggregate_window(evs, "wifi", 0, 600)
    assert out[:2] == [3.0, 1.0]
    assert np.isnan(out[2:]).all()


def test_empty_group_is_missing():
    assert aggregate_window([], "touch", 0, 600) is None


def _tiny_dataset(events, reports, offset=0):
    return data.Dataset.build([Participant("p", "Italy", offset)], events, reports)


def test_build_examples_windows_and_markers():
    t = 1_000_000
    events = [
        SensorEvent("p", t - 300, "touch", {}),  # included: window start is closed
        SensorEvent("p", t + 299, "touch", {}),
        SensorEvent("p", t + 300, "touch", {}),  # excluded: window end is open
        SensorEvent("p", t - 301, "touch", {}),
    ]
    reports = [SelfReport("p", t, "alone"), SelfReport("p", t + 10_000, "friends")]
    fm = build_examples(_tiny_dataset(events, reports))
    assert len(fm) == 2 and fm.values.shape == (2, 107)
    assert fm.values[0, fm.schema.index("touch_events")] == 2.0
    # second report has no events at all but still yields a row with every marker set
    assert fm.group_missing[1].all()
    assert np.isnan(fm.values[1, :-2]).all()
    assert fm.label.tolist() == [1, 0]
    wifi = fm.schema.marker_groups.index("wifi")
    assert fm.group_missing[0, wifi]


def test_local_time_features_saturday_afternoon():
    # 14:30 local on Saturday 2021-03-06 at UTC+1
    t = int(datetime(2021, 3, 6, 13, 30, tzinfo=timezone.utc).timestamp())
    assert features.local_time_features(t, 60) == (14.0, 1.0)
    fm = build_examples(_tiny_dataset([], [SelfReport("p", t, "alone")], offset=60))
    assert fm.values[0, fm.schema.index("hour")] == 14.0
    assert fm.values[0, fm.schema.index("weekend")] == 1.0


def test_window_bounds():
    with pytest.raises(ValueError):
        build_examples(_tiny_dataset([], []), window_seconds=30)
    fm = build_examples(_tiny_dataset([], [SelfReport("p", 10_000, "alone")]), window_seconds=1200)
    assert len(fm) == 1


def test_default_cohort_matrix(default_dataset, default_matrix):
    assert len(default_matrix) == len(default_dataset.reports)
    assert default_matrix.values.shape[1] == 107
    # a group is marked missing exactly when its columns are empty
    for j, g in enumerate(default_matrix.schema.marker_groups):
        cols = default_matrix.values[:, default_matrix.schema.group_slices[g]]
        assert np.array_equal(default_matrix.group_missing[:, j], np.isnan(cols).all(axis=1))


def test_csv_round_trip(tmp_path, default_matrix):
    sub = default_matrix.take(np.arange(50))
    path = tmp_path / "fm.csv"
    sub.to_csv(path)
    back = features.FeatureMatrix.from_csv(path)
    assert back.schema == sub.schema
    np.testing.assert_array_equal(back.values, sub.values)
    np.testing.assert_array_equal(back.group_missing, sub.group_missing)
    assert back.participant_id.tolist() == sub.participant_id.tolist()
    assert back.label.tolist() == sub.label.tolist()
