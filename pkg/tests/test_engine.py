import pytest

from rxdialog.engine import (
    BadChoiceError,
    Engine,
    EngineError,
    PatientStub,
    TerminalSessionError,
    button,
    check_prescription,
    choice,
    load_max_daily_doses,
    summarize,
    times_per_day,
    utterance,
)
from rxdialog.taxonomy import PrescriptionFrame


def complete_frame(db, ucd="9100101", dos_val="3", freq="per day", duration="7 days"):
    frame = PrescriptionFrame()
    frame.resolved_ucd = ucd
    frame.add("drug", db.get(ucd).brand_name.lower())
    frame.add("dos-val", dos_val)
    frame.add("dos-uf", "tablet")
    frame.add("frequency", freq)
    frame.add("duration", duration)
    return frame


# --- times_per_day / checker ---------------------------------------------------

@pytest.mark.parametrize("phrase,expected", [
    ("per day", 1),
    ("once a day", 1),
    ("twice a day", 2),
    ("3 times per day", 3),
    ("every 8 hours", 3),
    ("every 12 hours", 2),
    ("morning and evening", 2),
    ("at morning noon and night", 3),
    ("everyday", 1),
    ("whenever", None),
])
def test_times_per_day(phrase, expected):
    assert times_per_day(phrase) == expected


def test_checker_overdose_warning(db):
    # 500 mg x 10 per day = 5000 mg > 3000 mg ceiling
    frame = complete_frame(db, dos_val="10")
    warnings = check_prescription(frame, PatientStub(), db, load_max_daily_doses())
    assert len(warnings) == 1
    assert "daily dose too high" in warnings[0]


def test_checker_under_limit_passes(db):
    frame = complete_frame(db, dos_val="3")
    assert check_prescription(frame, PatientStub(), db, load_max_daily_doses()) == []


def test_checker_allergy_warning(db):
    frame = complete_frame(db)
    patient = PatientStub(allergy_inns={"paracetamol"})
    warnings = check_prescription(frame, patient, db, load_max_daily_doses())
    assert any("allergy" in w for w in warnings)


def test_checker_stub_override_takes_precedence(db):
    frame = complete_frame(db, dos_val="2")  # 1000 mg/day
    patient = PatientStub(max_daily_dose_overrides={"paracetamol": (800.0, "mg")})
    warnings = check_prescription(frame, patient, db, load_max_daily_doses())
    assert any("daily dose too high" in w for w in warnings)


def test_checker_uncheckable_frequency(db):
    frame = complete_frame(db, freq="whenever it hurts")
    warnings = check_prescription(frame, PatientStub(), db, load_max_daily_doses())
    assert any("uncheckable" in w for w in warnings)


def test_checker_requires_resolution(db):
    with pytest.raises(EngineError):
        check_prescription(PrescriptionFrame(), PatientStub(), db)


# --- summarize -------------------------------------------------------------------

def test_summary_contains_fig_elements(db):
    frame = PrescriptionFrame()
    frame.resolved_ucd = "9250332"
    frame.add("dos-val", "2")
    frame.add("dos-uf", "injection")
    frame.add("frequency", "per day")
    frame.add("duration", "7 days")
    text = summarize(frame, db)
    assert "OFLOXACINE" in text
    assert "200 mg/40 ml" in text
    assert "intravenous" in text
    assert "2 injections per day" in text
    assert "for 7 days" in text
    assert text.endswith("Do you confirm this prescription?")


def test_summary_includes_comment_verbatim(db):
    frame = complete_frame(db)
    frame.comments.append("in a big glass of water")
    assert "in a big glass of water" in summarize(frame, db)


def test_summary_incomplete_frame_rejected(db):
    frame = PrescriptionFrame()
    frame.resolved_ucd = "9100101"
    with pytest.raises(EngineError):
        summarize(frame, db)


# --- engine construction ------------------------------------------------------------

def test_engine_requires_db(nlu_models, schema):
    crf, intent_model = nlu_models
    with pytest.raises(EngineError):
        Engine(schema=schema, db=None, crf=crf, intent_model=intent_model)


def test_engine_requires_ted_model_for_ted_policy(nlu_models, schema, db):
    crf, intent_model = nlu_models
    with pytest.raises(EngineError):
        Engine(schema=schema, db=db, crf=crf, intent_model=intent_model, policy="ted")


# --- session flows ------------------------------------------------------------------

def test_session_ids_distinct(engine):
    assert engine.start_session() != engine.start_session()


def test_patient_stub_attached(engine):
    sid = engine.start_session(PatientStub(id="p-77"))
    assert engine.get_session(sid).patient.id == "p-77"
    assert engine.events(sid)[0]["payload"] == "p-77"


def test_fig_flow_rule_policy(engine, db):
    sid = engine.start_session()
    r1 = engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    assert r1.action.name == "request_slot:duration"
    r2 = engine.step(sid, utterance("For 7 days"))
    assert r2.action.name == "propose_summary"
    assert "OFLOXACINE" in r2.text
    r3 = engine.step(sid, button("confirm"))
    assert r3.action.name == "ack_validated"
    assert r3.session_terminal
    state = engine.state_view(sid)
    assert state["resolved_ucd"] == "9250332"
    assert db.get(state["resolved_ucd"]).inn == "ofloxacine"


def test_cancel_utterance_at_summary(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    r = engine.step(sid, utterance("cancel"))
    assert r.action.name == "ack_cancelled"
    assert r.session_terminal


def test_candidate_choice_flow(engine):
    sid = engine.start_session()
    r1 = engine.step(sid, utterance("doliprane 500 mg 2 tablets per day"))
    assert r1.action.name == "propose_candidates"
    assert len(r1.ui_payload["candidates"]) == 2
    r2 = engine.step(sid, choice(1))
    assert r2.action.name == "request_slot:duration"
    r3 = engine.step(sid, utterance("for 5 days"))
    assert r3.action.name == "propose_summary"
    r4 = engine.step(sid, button("confirm"))
    assert r4.action.name == "ack_validated"


def test_bad_choice_index(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("doliprane 500 mg 2 tablets per day"))
    with pytest.raises(BadChoiceError):
        engine.step(sid, choice(7))
    assert any(e["event_type"] == "system_error" for e in engine.events(sid))


def test_terminal_session_absorbs(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    engine.step(sid, button("confirm"))
    before = engine.state_view(sid)
    with pytest.raises(TerminalSessionError):
        engine.step(sid, utterance("hello"))
    assert engine.state_view(sid) == before


def test_negate_removes_mentioned_slot_and_rerequests(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    r = engine.step(sid, utterance("remove the duration"))
    assert r.action.name == "request_slot:duration"
    assert "duration" not in engine.state_view(sid)["slots"]
    r2 = engine.step(sid, utterance("for 10 days"))
    assert r2.action.name == "propose_summary"
    assert "10 days" in r2.text


def test_bare_negate_at_request_drops_awaited_slot(engine):
    # refusing a request removes the awaited slot; the policy asks again
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    r = engine.step(sid, utterance("no"))
    assert r.action.name == "request_slot:duration"
    assert "duration" not in engine.state_view(sid)["slots"]


def test_correction_replaces_last_value(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    r = engine.step(sid, utterance("no i said 3 injections"))
    assert r.action.name == "propose_summary"
    assert engine.state_view(sid)["slots"]["dos-val"] == ["3"]


def test_comment_stored_verbatim_not_parsed(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    r = engine.step(sid, button("comment", "in a big glass of water"))
    assert r.action.name == "ack_comment"
    view = engine.state_view(sid)
    assert view["comments"] == ["in a big glass of water"]
    # the comment text must not leak into extracted slots
    assert "glass" not in str(view["slots"])


def test_out_of_domain_mid_session(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    r = engine.step(sid, utterance("the coffee machine is broken"))
    assert r.action.name == "ask_repeat"


def test_greet_on_empty_smalltalk(engine):
    sid = engine.start_session()
    r = engine.step(sid, utterance("hello there"))
    assert r.action.name == "greet"


def test_restart_button_resets_frame(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, button("restart"))
    assert engine.state_view(sid)["slots"] == {}


def test_no_matching_drug_requests_restart(engine):
    # a dose no record carries, narrowed further by the drops hint -> zero hits
    sid = engine.start_session()
    r = engine.step(sid, utterance("99 mg 10 drops per day"))
    assert r.action.name == "request_restart"
    assert engine.state_view(sid)["slots"] == {}  # session reset for a fresh start


def test_warning_then_second_confirm(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("doliprane 500 mg 10 tablets per day"))
    engine.step(sid, choice(0))
    engine.step(sid, utterance("for 7 days"))
    r1 = engine.step(sid, button("confirm"))
    assert r1.action.name == "warn_checker"
    assert not r1.session_terminal
    assert r1.ui_payload["kind"] == "warning"
    assert any("daily dose too high" in w for w in r1.ui_payload["warnings"])
    r2 = engine.step(sid, button("confirm"))
    assert r2.action.name == "ack_validated"
    assert r2.session_terminal


def test_events_monotone_and_complete(engine):
    sid = engine.start_session()
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    engine.step(sid, utterance("For 7 days"))
    engine.step(sid, button("confirm"))
    events = engine.events(sid)
    assert events[0]["event_type"] == "session_start"
    ts = [e["ts"] for e in events]
    assert ts == sorted(ts)
    types = [e["event_type"] for e in events]
    assert "drug_resolved" in types
    assert types[-1] == "prescription_validated"


def test_every_step_appends_events(engine):
    sid = engine.start_session()
    n0 = len(engine.events(sid))
    engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    n1 = len(engine.events(sid))
    assert n1 > n0


def test_replay_reproduces_actions(nlu_models, db, schema):
    crf, intent_model = nlu_models
    script = [
        utterance("doliprane 500 mg 2 tablets per day"),
        choice(0),
        utterance("for 5 days"),
        button("confirm"),
    ]

    def run():
        eng = Engine(schema=schema, db=db, crf=crf, intent_model=intent_model,
                     policy="rule", clock=lambda: 0.0)
        sid = eng.start_session()
        return [eng.step(sid, inp).action.name for inp in script]

    assert run() == run()


def test_ted_engine_runs_fig_flow(ted_engine):
    sid = ted_engine.start_session()
    r1 = ted_engine.step(sid, utterance("Ofloxacine 200 mg 2 injections per day"))
    assert r1.action.name == "request_slot:duration"
    r2 = ted_engine.step(sid, utterance("For 7 days"))
    assert r2.action.name == "propose_summary"
    r3 = ted_engine.step(sid, button("confirm"))
    assert r3.action.name == "ack_validated"
