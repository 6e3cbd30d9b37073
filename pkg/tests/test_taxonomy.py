import pytest
from hypothesis import given, strategies as st

from rxdialog.taxonomy import (
    PrescriptionFrame,
    SchemaError,
    UnknownSlotError,
    frame_missing_slots,
    load_default_schema,
    load_schema,
    save_schema,
    schema_from_dict,
    schema_to_dict,
)


def test_default_schema_contract(schema):
    assert len(schema.labels) >= 39
    assert len(schema.intents) == 5
    for name in ("d-dos-val", "d-dos-up", "dos-val", "dos-uf", "inn"):
        assert schema.has_label(name)


def test_default_schema_mandatory_subset(schema):
    assert set(schema.mandatory_slots) <= set(schema.label_names)


def test_empty_label_list_rejected():
    with pytest.raises(SchemaError):
        schema_from_dict({"version": "1", "labels": [], "intents": ["a", "b"]})


def test_undeclared_mandatory_slot_rejected():
    doc = {
        "version": "1",
        "labels": [{"name": "drug", "kind": "free_text"}],
        "intents": ["a", "b"],
        "mandatory_slots": ["duration"],
        "identity_slots": ["drug"],
    }
    with pytest.raises(SchemaError, match="duration"):
        schema_from_dict(doc)


def test_duplicate_labels_rejected():
    doc = {
        "version": "1",
        "labels": [{"name": "drug", "kind": "free_text"},
                   {"name": "drug", "kind": "free_text"}],
        "intents": ["a", "b"],
        "identity_slots": ["drug"],
    }
    with pytest.raises(SchemaError, match="duplicate"):
        schema_from_dict(doc)


def test_closed_vocab_requires_domain():
    doc = {
        "version": "1",
        "labels": [{"name": "drug", "kind": "closed_vocabulary"}],
        "intents": ["a", "b"],
        "identity_slots": ["drug"],
    }
    with pytest.raises(SchemaError):
        schema_from_dict(doc)


def test_parse_error_reports_line(tmp_path):
    bad = tmp_path / "schema.json"
    bad.write_text('{\n  "version": "1",\n  broken\n}')
    with pytest.raises(SchemaError, match="line 3"):
        load_schema(bad)


def test_schema_round_trip(tmp_path, schema):
    out = tmp_path / "schema.json"
    save_schema(schema, out)
    again = load_schema(out)
    assert again == schema


def test_missing_slots_duration_only(schema):
    frame = PrescriptionFrame()
    frame.resolved_ucd = "9250332"
    frame.add("dos-val", "2")
    frame.add("dos-uf", "injections", "injection")
    frame.add("frequency", "per day")
    assert frame_missing_slots(frame, schema) == ["duration"]


def test_missing_slots_complete_frame(schema):
    frame = PrescriptionFrame()
    frame.resolved_ucd = "9100101"
    for slot, val in (("dos-val", "1"), ("dos-uf", "tablet"),
                      ("frequency", "3 times per day"), ("duration", "7 days")):
        frame.add(slot, val)
    assert frame_missing_slots(frame, schema) == []


def test_missing_slots_empty_frame_in_declaration_order(schema):
    missing = frame_missing_slots(PrescriptionFrame(), schema)
    assert missing == [n for n in schema.label_names if n in schema.mandatory_slots]


def test_missing_slots_unknown_key(schema):
    frame = PrescriptionFrame()
    frame.add("no-such-slot", "x")
    with pytest.raises(UnknownSlotError):
        frame_missing_slots(frame, schema)


def test_inn_satisfies_drug_identity(schema):
    frame = PrescriptionFrame()
    frame.add("inn", "ofloxacine")
    assert "drug" not in frame_missing_slots(frame, schema)


@given(st.permutations(["drug", "dos-val", "dos-uf", "frequency", "duration"]))
def test_missing_slots_monotone(order):
    schema = load_default_schema()
    frame = PrescriptionFrame()
    previous = frame_missing_slots(frame, schema)
    for slot in order:
        frame.add(slot, "x")
        now = frame_missing_slots(frame, schema)
        assert set(now) <= set(previous)
        previous = now
    assert previous == []


def test_dialogue_act_inventory():
    from rxdialog.taxonomy import DEFAULT_DIALOGUE_ACTS, DialogueAct

    assert len(DEFAULT_DIALOGUE_ACTS) == 13
    names = [a.name for a in DEFAULT_DIALOGUE_ACTS]
    assert len(names) == len(set(names))  # each act maps to exactly one side
    assert all(a.side in ("user", "system") for a in DEFAULT_DIALOGUE_ACTS)
    with pytest.raises(SchemaError):
        DialogueAct("bad", "nobody")


def test_confirmed_frame_has_no_missing(schema):
    # confirmed=true requires resolution and completion; engine enforces it,
    # here we check the schema-level consequence
    frame = PrescriptionFrame()
    frame.resolved_ucd = "9100101"
    for slot in ("drug", "dos-val", "dos-uf", "frequency", "duration"):
        frame.add(slot, "x")
    frame.confirmed = True
    assert frame_missing_slots(frame, schema) == []
