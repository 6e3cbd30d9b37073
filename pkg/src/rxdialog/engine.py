"""Session orchestration: NLU, state tracking, disambiguation, policy, NLG.

One step() call per user input.  Internally the policy may run twice: an
action_check_drug decision triggers the database lookup, after which the
policy is consulted again on the updated state to pick the user-visible
response.  A legality mask guards whichever policy backend is configured,
so no reachable state can confirm an incomplete prescription.
"""
from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from typing import Callable, Optional

from .drugdb import (
    DrugDatabase,
    NoDrugMentioned,
    canonical_unit,
    disambiguate,
    format_decimal,
    normalize_text,
)
from .nlu import CrfModel, IntentModel, nlu_parse
from .policy import (
    DialogueState,
    SystemAction,
    TedModel,
    featurize_state,
    first_legal,
    rule_policy,
    ted_select,
)
from .taxonomy import PrescriptionFrame, SlotSchema, frame_missing_slots


class EngineError(RuntimeError):
    pass


class TerminalSessionError(EngineError):
    """step() on a session that already ended."""


class UnknownSessionError(EngineError):
    pass


class BadChoiceError(EngineError):
    """Choice index outside the last proposed candidate list."""


@dataclass
class UserInput:
    kind: str  # "utterance" | "choice" | "button"
    raw: str = ""
    choice_index: Optional[int] = None
    button: Optional[str] = None  # confirm | cancel | restart | comment
    comment_text: str = ""
    client_ts: Optional[float] = None


def utterance(text: str) -> UserInput:
    return UserInput(kind="utterance", raw=text)


def choice(index: int) -> UserInput:
    return UserInput(kind="choice", raw=str(index), choice_index=index)


def button(name: str, comment_text: str = "") -> UserInput:
    return UserInput(kind="button", raw=name, button=name, comment_text=comment_text)


@dataclass
class SystemResponse:
    action: SystemAction
    text: str
    ui_payload: Optional[dict] = None
    session_terminal: bool = False

    def __post_init__(self):
        if not self.text:
            raise EngineError(f"empty response text for {self.action.name}")


@dataclass
class PatientStub:
    id: str = "anonymous"
    max_daily_dose_overrides: dict[str, tuple[float, str]] = field(default_factory=dict)
    allergy_inns: set[str] = field(default_factory=set)


# --- prescription checking ----------------------------------------------------

_EVERY_N_HOURS = re.compile(r"every (\d+) hours?")
_N_TIMES = re.compile(r"(\d+) times? (?:per|a) \w+")
_MOMENT_WORDS = ("morning", "noon", "evening", "night", "bedtime")


def times_per_day(phrase: str) -> Optional[int]:
    """How many intakes per day a frequency phrase denotes; None if unclear."""
    p = normalize_text(phrase)
    if not p:
        return None
    m = _N_TIMES.search(p)
    if m:
        return int(m.group(1))
    m = _EVERY_N_HOURS.search(p)
    if m:
        hours = int(m.group(1))
        return max(1, round(24 / hours)) if hours else None
    moments = sum(p.count(w) for w in _MOMENT_WORDS)
    if moments:
        return moments
    if "twice" in p:
        return 2
    if any(key in p for key in ("per day", "a day", "once", "daily", "everyday")):
        return 1
    return None


_TO_MG = {"mg": 1.0, "g": 1000.0, "mcg": 0.001}


def _as_mg(value: float, unit: str) -> Optional[float]:
    factor = _TO_MG.get(canonical_unit(unit))
    return value * factor if factor is not None else None


def load_max_daily_doses() -> dict[str, tuple[float, str]]:
    ref = resources.files("rxdialog.data").joinpath("max_daily_doses.json")
    with ref.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    return {inn: (float(v["value"]), v["unit"]) for inn, v in raw.items()}


def check_prescription(frame: PrescriptionFrame, patient: PatientStub,
                       db: DrugDatabase,
                       reference_doses: Optional[dict[str, tuple[float, str]]] = None
                       ) -> list[str]:
    """Mock e-prescription checker: daily-dose ceiling and allergy lookup."""
    if frame.resolved_ucd is None:
        raise EngineError("check_prescription requires a resolved drug")
    record = db.get(frame.resolved_ucd)
    if record is None:
        raise EngineError(f"resolved code {frame.resolved_ucd} not in database")
    warnings: list[str] = []

    inn = normalize_text(record.inn)
    if inn in {normalize_text(a) for a in patient.allergy_inns}:
        warnings.append(f"allergy alert: patient is allergic to {record.inn}")

    limit = patient.max_daily_dose_overrides.get(inn)
    if limit is None and reference_doses is not None:
        limit = reference_doses.get(inn)
    if limit is None:
        return warnings

    dos_val = frame.last("dos-val")
    freq = frame.last("frequency")
    if dos_val is None or freq is None:
        warnings.append("uncheckable: dose or frequency missing, daily total unknown")
        return warnings
    per_day = times_per_day(freq)
    try:
        units_per_intake = float(Decimal(dos_val))
    except (InvalidOperation, ValueError):
        per_day = None
    if per_day is None:
        warnings.append(f"uncheckable: cannot interpret frequency {freq!r}")
        return warnings

    daily_mg = _as_mg(units_per_intake * per_day * float(record.dose_value),
                      record.dose_unit)
    limit_mg = _as_mg(limit[0], limit[1])
    if daily_mg is None or limit_mg is None:
        warnings.append("uncheckable: dose units do not convert to a daily total")
        return warnings
    if daily_mg > limit_mg:
        warnings.append(
            f"daily dose too high: {format_decimal(Decimal(str(daily_mg)).normalize())} mg "
            f"of {record.inn} exceeds the {format_decimal(Decimal(str(limit_mg)).normalize())} mg"
            " per 24h ceiling")
    return warnings


def summarize(frame: PrescriptionFrame, db: DrugDatabase) -> str:
    """Deterministic prescription summary ending with the confirmation question."""
    if frame.resolved_ucd is None:
        raise EngineError("cannot summarize: no drug resolved")
    record = db.get(frame.resolved_ucd)
    if record is None:
        raise EngineError(f"resolved code {frame.resolved_ucd} not in database")
    dos_val = frame.last("dos-val")
    dos_uf = frame.last("dos-uf")
    freq = frame.last("frequency")
    duration = frame.last("duration")
    if not all((dos_val, dos_uf, freq, duration)):
        raise EngineError("cannot summarize an incomplete prescription frame")
    unit = dos_uf if dos_val == "1" or dos_uf.endswith("s") else dos_uf + "s"
    parts = [
        f"{record.label}, route of administration is {record.route},",
        f"{dos_val} {unit} {freq}",
    ]
    rhythm = frame.last("rhythm")
    if rhythm:
        parts.append(rhythm)
    parts.append(f"for {duration}.")
    text = " ".join(parts)
    for comment in frame.comments:
        text += f" Comment: {comment}."
    return text + " Do you confirm this prescription?"


# --- NLG ------------------------------------------------------------------------

_SLOT_QUESTIONS = {
    "duration": "Can you please specify a duration for this prescription?",
    "frequency": "How often should it be taken?",
    "dos-val": "What dose should be taken at each intake?",
    "dos-uf": "In what unit is each intake (tablets, drops, injections)?",
    "drug": "Which drug would you like to prescribe?",
}

_DRUG_RELEVANT_SLOTS = ("drug", "inn", "d-dos-val", "d-dos-up", "form", "route", "dos-uf")

_SLOT_MENTIONS = {
    "duration": "duration",
    "frequency": "frequency",
    "dose": "dos-val",
    "dosage": "d-dos-val",
    "strength": "d-dos-val",
    "drug": "drug",
    "unit": "dos-uf",
    "form": "form",
    "route": "route",
    "moment": "moment",
    "rhythm": "rhythm",
    "condition": "condition",
}


def render_text(action: SystemAction, state: DialogueState, db: DrugDatabase,
                warnings: Optional[list[str]] = None) -> str:
    name = action.name
    if name == "greet":
        return "Hello. Please state the prescription."
    if name == "ask_repeat":
        return "Sorry, I did not catch that. Could you state the prescription details?"
    if name == "action_check_drug":
        return "Checking the drug database."
    if name.startswith("request_slot:"):
        slot = name.split(":", 1)[1]
        return _SLOT_QUESTIONS.get(slot, f"Can you please specify the {slot.replace('-', ' ')}?")
    if name == "propose_candidates":
        lines = [f"{i + 1}. {r.label} ({r.route})" for i, r in enumerate(state.candidates)]
        return ("I found several possible drugs. Please choose one: "
                + " | ".join(lines))
    if name == "request_restart":
        return ("I could not associate a drug with this prescription. "
                "Let's restart the prescription session.")
    if name == "propose_summary":
        return summarize(state.frame, db)
    if name == "warn_checker":
        joined = " ; ".join(warnings or ["unspecified warning"])
        return (f"Warning from the prescription checker: {joined}. "
                "Do you confirm this prescription anyway?")
    if name == "ack_validated":
        return "The prescription has been validated and recorded."
    if name == "ack_cancelled":
        return "The prescription has been cancelled."
    if name == "ack_comment":
        return "Comment added to the prescription."
    return name.replace("_", " ")


# --- engine ----------------------------------------------------------------------

@dataclass
class _Session:
    state: DialogueState
    patient: PatientStub
    events: list[dict] = field(default_factory=list)
    pending_warnings: list[str] = field(default_factory=list)
    turn_index: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class Engine:
    """Shared read-only models plus per-session mutable state."""

    def __init__(self, schema: SlotSchema, db: DrugDatabase, crf: CrfModel,
                 intent_model: IntentModel, policy: str = "rule",
                 ted_model: Optional[TedModel] = None,
                 reference_doses: Optional[dict[str, tuple[float, str]]] = None,
                 clock: Callable[[], float] = time.time,
                 event_sink: Optional[Callable[[dict], None]] = None):
        if db is None or not isinstance(db, DrugDatabase):
            raise EngineError("engine requires a loaded drug database")
        if schema is None or crf is None or intent_model is None:
            raise EngineError("engine requires schema, slot model and intent model")
        if policy not in ("rule", "ted"):
            raise EngineError(f"unknown policy backend {policy!r}")
        if policy == "ted" and ted_model is None:
            raise EngineError("policy 'ted' requires a trained model")
        self.schema = schema
        self.db = db
        self.crf = crf
        self.intent_model = intent_model
        self.policy = policy
        self.ted_model = ted_model
        self.reference_doses = (reference_doses if reference_doses is not None
                                else load_max_daily_doses())
        self.clock = clock
        self.event_sink = event_sink
        self._sessions: dict[str, _Session] = {}

    # -- sessions --

    def start_session(self, patient: Optional[PatientStub] = None) -> str:
        session_id = uuid.uuid4().hex[:12]
        stub = patient or PatientStub()
        sess = _Session(state=DialogueState(), patient=stub)
        self._sessions[session_id] = sess
        self._log(session_id, sess, "system", "session_start", stub.id)
        return session_id

    def get_session(self, session_id: str) -> _Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    def events(self, session_id: str) -> list[dict]:
        return list(self.get_session(session_id).events)

    def state_view(self, session_id: str) -> dict:
        sess = self.get_session(session_id)
        state = sess.state
        return {
            "slots": {k: [v.normalized for v in vals] for k, vals in state.frame.slots.items()},
            "resolved_ucd": state.frame.resolved_ucd,
            "confirmed": state.frame.confirmed,
            "comments": list(state.frame.comments),
            "missing": frame_missing_slots(state.frame, self.schema),
            "awaiting": state.awaiting,
            "terminal": state.terminal,
            "turn_index": sess.turn_index,
        }

    def _log(self, session_id: str, sess: _Session, side: str, event_type: str,
             payload: str, ts: Optional[float] = None):
        event = {
            "session_id": session_id,
            "ts": round(float(ts if ts is not None else self.clock()), 3),
            "side": side,
            "event_type": event_type,
            "payload": payload,
        }
        if sess.events and event["ts"] < sess.events[-1]["ts"]:
            event["ts"] = sess.events[-1]["ts"]
        sess.events.append(event)
        if self.event_sink is not None:
            self.event_sink(event)

    # -- input handling --

    def step(self, session_id: str, user_input: UserInput) -> SystemResponse:
        sess = self.get_session(session_id)
        with sess.lock:
            if sess.state.terminal:
                raise TerminalSessionError(session_id)
            sess.turn_index += 1
            return self._step_locked(session_id, sess, user_input)

    def _step_locked(self, session_id: str, sess: _Session,
                     user_input: UserInput) -> SystemResponse:
        state = sess.state
        kind = user_input.kind
        if kind == "utterance":
            self._log(session_id, sess, "user", "utterance", user_input.raw,
                      ts=user_input.client_ts)
            self._apply_utterance(session_id, sess, user_input.raw)
        elif kind == "choice":
            self._log(session_id, sess, "user", "choice", user_input.raw,
                      ts=user_input.client_ts)
            self._apply_choice(session_id, sess, user_input.choice_index)
        elif kind == "button":
            self._log(session_id, sess, "user", "button", user_input.button or "",
                      ts=user_input.client_ts)
            self._apply_button(session_id, sess, user_input)
        else:
            raise EngineError(f"unknown input kind {kind!r}")

        response = self._respond(session_id, sess)
        if response.action.terminal:
            state.terminal = True
        return response

    def _apply_utterance(self, session_id: str, sess: _Session, text: str):
        state = sess.state
        result = nlu_parse(self.crf, self.intent_model, self.schema, text,
                           turn_index=sess.turn_index)
        state.last_intent = result.intent
        delta = result.frame_delta
        if result.intent == "medical_prescription":
            for slot, values in delta.slots.items():
                for v in values:
                    state.frame.add(slot, v.value, v.normalized, turn_index=sess.turn_index)
            if state.awaiting and state.frame.slots.get(state.awaiting):
                state.awaiting = None
            if state.frame.resolved_ucd is None and \
                    any(s in _DRUG_RELEVANT_SLOTS for s in delta.slots):
                state.candidates_status = None  # lookup cache no longer valid
        elif result.intent == "correct":
            for slot, values in delta.slots.items():
                for v in values:
                    state.frame.replace_last(slot, v.value, v.normalized,
                                             turn_index=sess.turn_index)
            if any(s in _DRUG_RELEVANT_SLOTS for s in delta.slots):
                state.frame.resolved_ucd = None
                state.candidates_status = None
            sess.pending_warnings = []
            state.warning_active = False
            state.warned_once = False
            if state.awaiting == "confirm":
                state.awaiting = None
        elif result.intent == "negate":
            mentioned = self._mentioned_slots(text)
            if mentioned:
                for slot in mentioned:
                    state.frame.remove(slot)
                state.awaiting = None
                state.frame.confirmed = False
            elif state.awaiting not in (None, "confirm", "choice"):
                # refusal while a slot is requested: drop the awaited slot
                state.frame.remove(state.awaiting)
                state.awaiting = None
        # intent none and confirm leave the frame untouched

    def _mentioned_slots(self, text: str) -> list[str]:
        words = normalize_text(text).split()
        out = []
        for word in words:
            slot = _SLOT_MENTIONS.get(word)
            if slot and slot not in out:
                out.append(slot)
        return out

    def _maybe_disambiguate(self, session_id: str, sess: _Session,
                            delta: PrescriptionFrame, force: bool = False):
        state = sess.state
        if state.frame.resolved_ucd is not None and not force:
            return
        if not force and not any(s in _DRUG_RELEVANT_SLOTS for s in delta.slots):
            return
        try:
            outcome = disambiguate(self.db, state.frame)
        except NoDrugMentioned:
            state.candidates = []
            state.candidates_status = "no_query"
            return
        state.candidates = outcome.candidates
        state.candidates_status = outcome.status
        if outcome.status == "unique":
            state.frame.resolved_ucd = outcome.candidates[0].ucd_code
            self._log(session_id, sess, "system", "drug_resolved",
                      outcome.candidates[0].ucd_code)

    def _apply_choice(self, session_id: str, sess: _Session, index: Optional[int]):
        state = sess.state
        if index is None or not state.candidates or not (0 <= index < len(state.candidates)):
            self._log(session_id, sess, "system", "system_error",
                      f"choice index {index} out of range")
            raise BadChoiceError(f"choice index {index} outside candidate list")
        chosen = state.candidates[index]
        state.candidates = [chosen]
        state.candidates_status = "unique"
        state.frame.resolved_ucd = chosen.ucd_code
        state.awaiting = None
        self._log(session_id, sess, "system", "drug_resolved", chosen.ucd_code)

    def _apply_button(self, session_id: str, sess: _Session, user_input: UserInput):
        state = sess.state
        name = user_input.button
        if name == "confirm":
            state.last_intent = "confirm"
        elif name == "cancel":
            state.last_intent = "negate"
        elif name == "restart":
            sess.pending_warnings = []
            self._log(session_id, sess, "system", "restart_requested", "")
            history = state.turn_history
            sess.state = DialogueState(turn_history=history)
            sess.state.last_intent = "none"
        elif name == "comment":
            state.frame.comments.append(user_input.comment_text)
            state.last_intent = "none"
        else:
            raise EngineError(f"unknown button {user_input.button!r}")

    # -- action selection and rendering --

    def _select_action(self, state: DialogueState) -> SystemAction:
        if self.policy == "ted":
            features = featurize_state(state, self.schema)
            history = [f for f, _ in state.turn_history] + [features]
            ranked = ted_select(self.ted_model, history[-state.history_window:])
            return first_legal(ranked, state, self.schema)
        return rule_policy(state, self.schema)

    def _respond(self, session_id: str, sess: _Session) -> SystemResponse:
        state = sess.state

        # comment button: acknowledge without consulting the policy
        if state.last_intent == "none" and state.frame.comments and \
                sess.events and sess.events[-1]["event_type"] == "button" and \
                sess.events[-1]["payload"] == "comment":
            action = SystemAction("ack_comment")
            self._log(session_id, sess, "system", "system_action", action.name)
            state.remember(featurize_state(state, self.schema), action.name)
            return SystemResponse(action=action, text=render_text(action, state, self.db),
                                  ui_payload=None, session_terminal=False)

        # run the checker when a confirmation decision is pending
        if state.awaiting == "confirm" and state.last_intent == "confirm":
            warnings = check_prescription(state.frame, sess.patient, self.db,
                                          self.reference_doses)
            if warnings and not state.warned_once:
                sess.pending_warnings = warnings
                state.warning_active = True
            else:
                sess.pending_warnings = []
                state.warning_active = False

        visible: Optional[SystemAction] = None
        for _ in range(3):
            features = featurize_state(state, self.schema)
            if state.awaiting == "confirm" and state.last_intent == "confirm":
                if state.warning_active and not state.warned_once:
                    action = SystemAction("warn_checker")
                else:
                    action = SystemAction("ack_validated")
            else:
                action = self._select_action(state)
            self._log(session_id, sess, "system", "system_action", action.name)
            state.remember(features, action.name)
            if action.name == "action_check_drug":
                self._maybe_disambiguate(session_id, sess, state.frame, force=True)
                continue
            visible = action
            break
        if visible is None:
            visible = SystemAction("ask_repeat")
            self._log(session_id, sess, "system", "system_action", visible.name)

        return self._finalize(session_id, sess, visible)

    def _finalize(self, session_id: str, sess: _Session,
                  action: SystemAction) -> SystemResponse:
        state = sess.state
        payload: Optional[dict] = None
        warnings = sess.pending_warnings

        if action.name == "propose_candidates":
            state.awaiting = "choice"
            payload = {"kind": "candidates", "candidates": [
                {"index": i, "ucd_code": r.ucd_code, "label": r.label, "route": r.route}
                for i, r in enumerate(state.candidates)]}
        elif action.name == "propose_summary":
            state.awaiting = "confirm"
            state.warned_once = False
            payload = {"kind": "summary", "summary": self._summary_payload(state)}
        elif action.name == "warn_checker":
            state.warned_once = True
            state.awaiting = "confirm"
            payload = {"kind": "warning", "warnings": list(warnings),
                       "summary": self._summary_payload(state)}
        elif action.name == "ack_validated":
            state.frame.confirmed = True
            payload = {"kind": "validated", "summary": self._summary_payload(state),
                       "warnings": list(warnings)}
            self._log(session_id, sess, "system", "prescription_validated",
                      state.frame.resolved_ucd or "")
        elif action.name == "ack_cancelled":
            payload = {"kind": "cancelled"}
            self._log(session_id, sess, "system", "prescription_cancelled", "")
        elif action.name == "request_restart":
            self._log(session_id, sess, "system", "restart_requested", "")
            history = state.turn_history
            sess.state = DialogueState(turn_history=history)
            sess.state.last_intent = "none"
            state = sess.state
        elif action.name.startswith("request_slot:"):
            state.awaiting = action.name.split(":", 1)[1]

        text = render_text(action, state, self.db, warnings=warnings)
        return SystemResponse(action=action, text=text, ui_payload=payload,
                              session_terminal=action.terminal)

    def _summary_payload(self, state: DialogueState) -> dict:
        record = self.db.get(state.frame.resolved_ucd) if state.frame.resolved_ucd else None
        return {
            "drug_label": record.label if record else "",
            "route": record.route if record else "",
            "dos_val": state.frame.last("dos-val"),
            "dos_uf": state.frame.last("dos-uf"),
            "frequency": state.frame.last("frequency"),
            "duration": state.frame.last("duration"),
            "comments": list(state.frame.comments),
        }
