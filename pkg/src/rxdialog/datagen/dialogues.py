"""Scenario-based generation of dialogue sessions for policy training.

Each session instantiates one scenario template (a scripted alternation of
user acts and system actions) with values from a sampled drug record.  At
every system turn the generator records the state snapshot a policy would
see at prediction time: the last user intent, slots present so far, the
internal flags and the previous system action.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from ..drugdb import DrugDatabase, format_decimal, intake_unit_for_form
from ..policy.actions import ACTION_INVENTORY, TERMINAL_ACTIONS
from ..taxonomy import SlotSchema


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioTemplate:
    name: str
    turn_script: list[dict]
    branching: Optional[list[dict]] = None

    def validate(self):
        if not self.turn_script:
            raise ScenarioError(f"{self.name}: empty script")
        if self.turn_script[0].get("side") != "user":
            raise ScenarioError(f"{self.name}: script must start with a user act")
        last = self.turn_script[-1]
        if last.get("side") != "system" or last.get("act") not in TERMINAL_ACTIONS:
            raise ScenarioError(f"{self.name}: script must end with a terminal system act")
        for entry in self.turn_script:
            if entry.get("side") == "system" and entry["act"] not in ACTION_INVENTORY:
                raise ScenarioError(f"{self.name}: unknown system action {entry['act']!r}")


def load_scenarios(path=None) -> list[ScenarioTemplate]:
    if path is None:
        ref = resources.files("rxdialog.data").joinpath("scenarios.json")
        with ref.open(encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    templates = [ScenarioTemplate(name=t["name"], turn_script=t["script"],
                                  branching=t.get("branching")) for t in raw]
    for t in templates:
        t.validate()
    return templates


FREQ_CHOICES = ("per day", "once a day", "twice a day", "2 times per day",
                "3 times per day", "every 8 hours")
DURATION_CHOICES = ("7 days", "5 days", "10 days", "1 week", "2 weeks", "1 month")
USER_INTENTS = {"inform": "medical_prescription", "confirm": "confirm",
                "negate": "negate", "correct": "correct", "smalltalk": "none",
                "choose": None}  # choice clicks keep the previous intent

SMALLTALK_LINES = ("by the way the weather is nice", "the coffee machine is broken",
                   "did you watch the game", "what a day honestly")


@dataclass
class GeneratedSession:
    session_id: str
    scenario: str
    turns: list[dict]

    @property
    def outcome(self) -> str:
        return self.turns[-1]["action"]

    def to_json(self) -> str:
        return json.dumps({"session_id": self.session_id, "scenario": self.scenario,
                           "turns": self.turns}, ensure_ascii=False)

    def to_dialogue_record(self, failure_flag: bool = False):
        """Corpus view: each user action paired with the consecutive visible
        system action (internal lookup actions collapse into the pair)."""
        from ..corpusio import DialogueRecord, DialogueTurn

        turns: list[DialogueTurn] = []
        pending_system: Optional[dict] = None
        for turn in self.turns:
            if turn["side"] == "user":
                if pending_system is not None:
                    turns.append(DialogueTurn(side="system", act=pending_system["action"]))
                    pending_system = None
                payload = {"text": turn.get("text", ""), "intent": turn["intent"]}
                if turn.get("slots"):
                    payload["slots"] = turn["slots"]
                turns.append(DialogueTurn(side="user", act=turn["act"], payload=payload))
            else:
                pending_system = turn
        if pending_system is not None:
            turns.append(DialogueTurn(side="system", act=pending_system["action"]))
        return DialogueRecord(session_id=self.session_id, turns=turns,
                              failure_flag=failure_flag)


def _fill_value(slot: str, record, rng) -> str:
    if slot == "drug":
        return record.brand_name.lower()
    if slot == "inn":
        return record.inn
    if slot == "d-dos-val":
        return format_decimal(record.dose_value)
    if slot == "d-dos-up":
        return record.dose_unit
    if slot == "dos-val":
        return str(int(rng.integers(1, 4)))
    if slot == "dos-uf":
        return intake_unit_for_form(record.form)
    if slot == "frequency":
        return FREQ_CHOICES[int(rng.integers(0, len(FREQ_CHOICES)))]
    if slot == "duration":
        return DURATION_CHOICES[int(rng.integers(0, len(DURATION_CHOICES)))]
    if slot == "form":
        return record.form
    if slot == "route":
        return record.route
    return slot  # placeholder for exotic slots


def _flags(slots_present: set[str], resolved: bool, candidates_status: Optional[str],
           awaiting: Optional[str], warning: bool, has_comment: bool,
           schema: SlotSchema) -> dict[str, bool]:
    identity_ok = resolved or any(s in slots_present for s in schema.identity_slots)
    missing = [s for s in schema.mandatory_slots
               if s not in slots_present and not (s in schema.identity_slots and identity_ok)]
    return {
        "drug_resolved": resolved,
        "candidates_multiple": candidates_status == "multiple",
        "candidates_none": candidates_status == "none",
        "frame_complete": resolved and not missing,
        "awaiting_confirm": awaiting == "confirm",
        "warning_active": warning,
        "has_comment": has_comment,
    }


def instantiate(template: ScenarioTemplate, db: DrugDatabase, schema: SlotSchema,
                rng: np.random.Generator, session_id: str) -> GeneratedSession:
    record = db.records[int(rng.integers(0, len(db.records)))]
    turns: list[dict] = []
    slots: dict[str, str] = {}
    intent = "none"
    resolved = False
    candidates_status: Optional[str] = None
    awaiting: Optional[str] = None
    warning = False
    outcome = "unique"
    prev_action: Optional[str] = None

    for entry in template.turn_script:
        if entry["side"] == "user":
            act = entry["act"]
            mapped = USER_INTENTS.get(act)
            if mapped is not None:
                intent = mapped
            if act == "inform":
                if entry.get("restart"):
                    slots.clear()
                    resolved = False
                    candidates_status = None
                outcome = entry.get("outcome", "unique")
                filled = {}
                for spec in entry.get("slots", []):
                    options = spec.split("|")
                    slot = options[int(rng.integers(0, len(options)))]
                    filled[slot] = _fill_value(slot, record, rng)
                slots.update(filled)
                awaiting = None
                text = " ".join(filled.values())
            elif act == "correct":
                filled = {}
                for slot in entry.get("slots", []):
                    filled[slot] = _fill_value(slot, record, rng)
                slots.update(filled)
                awaiting = None
                text = "no i said " + " ".join(filled.values())
            elif act == "negate":
                removed = entry.get("remove", [])
                for slot in removed:
                    slots.pop(slot, None)
                if removed:
                    awaiting = None
                    text = "remove the " + " and the ".join(removed)
                else:
                    text = "cancel"
            elif act == "confirm":
                text = "i confirm"
            elif act == "choose":
                resolved = True
                candidates_status = "unique"
                awaiting = None
                text = ""
            elif act == "smalltalk":
                text = SMALLTALK_LINES[int(rng.integers(0, len(SMALLTALK_LINES)))]
            else:
                raise ScenarioError(f"{template.name}: unknown user act {act!r}")
            turn: dict = {"side": "user", "act": act, "intent": intent, "text": text}
            if act in ("inform", "correct"):
                turn["slots"] = dict(filled)
            turns.append(turn)
        else:
            action = entry["act"]
            state = {
                "intent": intent,
                "slots_present": sorted(slots),
                "flags": _flags(set(slots), resolved, candidates_status, awaiting,
                                warning, False, schema),
                "prev_action": prev_action,
            }
            turns.append({"side": "system", "action": action, "state": state})
            # apply the action's effect on the simulated state
            if action == "action_check_drug":
                candidates_status = outcome
                resolved = outcome == "unique"
            elif action.startswith("request_slot:"):
                awaiting = action.split(":", 1)[1]
            elif action == "propose_summary":
                awaiting = "confirm"
            elif action == "warn_checker":
                warning = True
            elif action == "request_restart":
                candidates_status = None
            prev_action = action
    return GeneratedSession(session_id=session_id, scenario=template.name, turns=turns)


def generate_dialogues(templates: Sequence[ScenarioTemplate], g, db: DrugDatabase,
                       n: int, rng_seed: int = 0,
                       schema: Optional[SlotSchema] = None) -> list[GeneratedSession]:
    """Instantiate n sessions, cycling over the templates deterministically.

    The grammar argument is accepted for callers that synthesize richer user
    texts; value filling here only needs the drug database.
    """
    if n < 1:
        raise ScenarioError("n must be >= 1")
    if not templates:
        raise ScenarioError("no templates given")
    if schema is None:
        from ..taxonomy import load_default_schema
        schema = load_default_schema()
    rng = np.random.default_rng(rng_seed)
    out = []
    for i in range(n):
        template = templates[i % len(templates)]
        out.append(instantiate(template, db, schema, rng, session_id=f"dlg-{i:06d}"))
    return out


def export_sessions(sessions: Sequence[GeneratedSession], path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(s.to_json() + "\n")


def import_sessions(path) -> list[GeneratedSession]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(GeneratedSession(session_id=obj["session_id"],
                                        scenario=obj.get("scenario", ""),
                                        turns=obj["turns"]))
    return out
