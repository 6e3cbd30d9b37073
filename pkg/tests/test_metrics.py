from importlib import resources

import pytest

from rxdialog.metrics import (
    EventLogError,
    ParticipantMeta,
    SessionEvent,
    aggregate,
    load_participants,
    owners_from_events,
    parse_event_log,
    rows_to_csv,
    session_metrics,
    write_event_log,
)


@pytest.fixture(scope="module")
def fixture_log(tmp_path_factory):
    ref = resources.files("rxdialog.data").joinpath("events_fixture.jsonl")
    with resources.as_file(ref) as p:
        return parse_event_log(p)


@pytest.fixture(scope="module")
def fixture_meta():
    ref = resources.files("rxdialog.data").joinpath("participants_fixture.json")
    with resources.as_file(ref) as p:
        return load_participants(p)


def test_fixture_parses_three_sessions(fixture_log):
    assert len(fixture_log.sessions) == 3
    assert fixture_log.rejects == []
    assert len(fixture_log.sessions["fx-001"]) == 10


def test_corrupt_line_goes_to_rejects(tmp_path):
    ref = resources.files("rxdialog.data").joinpath("events_fixture.jsonl")
    lines = ref.read_text(encoding="utf-8").splitlines()
    lines.insert(3, "{not json at all")
    p = tmp_path / "log.jsonl"
    p.write_text("\n".join(lines) + "\n")
    result = parse_event_log(p)
    assert len(result.sessions) == 3
    assert len(result.rejects) == 1
    assert result.rejects[0][0] == 4


def test_empty_file_parses_empty(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    result = parse_event_log(p)
    assert result.sessions == {}
    assert result.rejects == []


def test_session_duration_subtraction(fixture_log):
    m = session_metrics(fixture_log.sessions["fx-001"])
    assert m.duration_s == pytest.approx(45.0)
    assert m.n_turns == 3
    assert m.success
    assert m.drug_associated


def test_cancelled_session_not_successful(fixture_log):
    m = session_metrics(fixture_log.sessions["fx-002"])
    assert not m.success
    assert m.drug_associated


def test_turn_pairing_ignores_trailing_user_action():
    events = [
        SessionEvent("s", 0.0, "system", "session_start"),
        SessionEvent("s", 1.0, "user", "utterance", "a"),
        SessionEvent("s", 2.0, "system", "system_action", "x"),
        SessionEvent("s", 3.0, "user", "utterance", "b"),
    ]
    assert session_metrics(events).n_turns == 1


def test_consecutive_user_actions_one_turn():
    events = [
        SessionEvent("s", 1.0, "user", "utterance", "a"),
        SessionEvent("s", 2.0, "user", "button", "b"),
        SessionEvent("s", 3.0, "system", "system_action", "x"),
    ]
    assert session_metrics(events).n_turns == 1


def test_error_turn_ratio():
    events = [
        SessionEvent("s", 1.0, "user", "utterance", "a"),
        SessionEvent("s", 2.0, "system", "system_error", "boom"),
        SessionEvent("s", 3.0, "system", "system_action", "x"),
        SessionEvent("s", 4.0, "user", "utterance", "b"),
        SessionEvent("s", 5.0, "system", "system_action", "y"),
    ]
    m = session_metrics(events)
    assert m.n_errors == 1
    assert m.n_turns == 2
    assert m.error_turn_ratio == pytest.approx(0.5)


def test_aggregate_success_rates(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    rows = aggregate(fixture_log.sessions, fixture_meta, owners, group_by="none")
    assert len(rows) == 1
    assert rows[0].success_rate == pytest.approx(2 / 3)
    assert rows[0].drug_association_rate == pytest.approx(1.0)


def test_aggregate_by_category(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    rows = aggregate(fixture_log.sessions, fixture_meta, owners, group_by="category")
    by_group = {r.group: r for r in rows}
    assert by_group["physician"].success_rate == 1.0
    assert by_group["non_expert"].success_rate == 0.0


def test_aggregate_unknown_participant_rejected(fixture_log):
    owners = owners_from_events(fixture_log.sessions)
    with pytest.raises(EventLogError, match="participant"):
        aggregate(fixture_log.sessions, {}, owners)


def test_aggregate_single_session_equals_session_metrics(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    one = {"fx-001": fixture_log.sessions["fx-001"]}
    rows = aggregate(one, fixture_meta, owners, group_by="none")
    m = session_metrics(fixture_log.sessions["fx-001"])
    assert rows[0].mean_duration_s == pytest.approx(m.duration_s)
    assert rows[0].mean_turns == pytest.approx(m.n_turns)
    assert rows[0].success_rate == float(m.success)


def test_aggregate_none_is_weighted_mean_of_partition(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    total = aggregate(fixture_log.sessions, fixture_meta, owners, group_by="none")[0]
    parts = aggregate(fixture_log.sessions, fixture_meta, owners, group_by="category")
    n = sum(r.n_sessions for r in parts)
    weighted = sum(r.success_rate * r.n_sessions for r in parts) / n
    assert total.success_rate == pytest.approx(weighted)
    weighted_dur = sum(r.mean_duration_s * r.n_sessions for r in parts) / n
    assert total.mean_duration_s == pytest.approx(weighted_dur)


def test_rates_within_bounds(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    for group_by in ("none", "category", "age_band", "gender"):
        for row in aggregate(fixture_log.sessions, fixture_meta, owners, group_by):
            assert 0.0 <= row.success_rate <= 1.0
            assert 0.0 <= row.drug_association_rate <= 1.0
            assert row.mean_duration_s >= 0.0


def test_round_trip_stability(fixture_log, tmp_path):
    flat = [e for events in fixture_log.sessions.values() for e in events]
    out = tmp_path / "out.jsonl"
    write_event_log(flat, out)
    again = parse_event_log(out)
    assert again.rejects == []
    assert {k: [vars(e) for e in v] for k, v in again.sessions.items()} == \
           {k: [vars(e) for e in v] for k, v in fixture_log.sessions.items()}


def test_participant_category_validated():
    with pytest.raises(EventLogError):
        ParticipantMeta("p", "wizard")


def test_csv_emitter(fixture_log, fixture_meta):
    owners = owners_from_events(fixture_log.sessions)
    rows = aggregate(fixture_log.sessions, fixture_meta, owners, group_by="category")
    csv = rows_to_csv(rows)
    assert csv.startswith("group,n_sessions,")
    assert len(csv.strip().splitlines()) == 1 + len(rows)
