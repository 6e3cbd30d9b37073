"""Deterministic rule policy and the action legality mask.

The rule policy is a decision table over the dialogue state; the legality
mask is the safety net applied to any policy backend so that no reachable
state can produce an invalid prescription flow.
"""
from __future__ import annotations

from ..taxonomy import SlotSchema, frame_missing_slots
from .actions import ACTION_INVENTORY, SystemAction, requested_slot
from .state import DialogueState


def rule_policy(state: DialogueState, schema: SlotSchema) -> SystemAction:
    frame = state.frame
    missing = frame_missing_slots(frame, schema)
    has_drug_info = frame.resolved_ucd is not None or any(
        frame.slots.get(s) for s in schema.identity_slots)

    if state.awaiting == "confirm":
        if state.last_intent == "confirm":
            # engine runs the checker around this decision; warn_checker is
            # chosen there when warnings are pending
            return SystemAction("ack_validated")
        if state.last_intent == "negate":
            return SystemAction("ack_cancelled")

    if state.last_intent == "none":
        if not frame.slots and frame.resolved_ucd is None:
            return SystemAction("greet")
        return SystemAction("ask_repeat")

    if state.candidates_status == "none":
        return SystemAction("request_restart")
    if state.candidates_status == "multiple":
        return SystemAction("propose_candidates",
                            payload={"candidates": [r.ucd_code for r in state.candidates]})

    if frame.resolved_ucd is None:
        if state.candidates_status == "no_query":
            # a lookup already ran and found nothing to query on
            return SystemAction("request_slot:drug")
        if has_drug_info or (state.last_intent == "medical_prescription" and frame.slots):
            # posology without a name can still seed an implicit lookup
            return SystemAction("action_check_drug")
        return SystemAction("request_slot:drug")

    if missing:
        return SystemAction(f"request_slot:{missing[0]}", payload={"slot": missing[0]})

    if not frame.confirmed:
        return SystemAction("propose_summary")
    return SystemAction("ack_validated")


def legal_actions(state: DialogueState, schema: SlotSchema) -> set[str]:
    """Actions permitted in this state, whatever the policy prefers."""
    frame = state.frame
    missing = frame_missing_slots(frame, schema)
    complete = frame.resolved_ucd is not None and not missing
    legal = {"ask_repeat"}

    if not frame.slots and frame.resolved_ucd is None:
        legal.add("greet")
    if frame.resolved_ucd is None and (frame.slots or state.candidates_status is None):
        legal.add("action_check_drug")
    if state.candidates_status == "multiple":
        legal.add("propose_candidates")
    if state.candidates_status == "none":
        legal.add("request_restart")
    if state.last_intent == "negate":
        legal.add("ack_cancelled")
        legal.add("request_restart")
    for action in ACTION_INVENTORY:
        slot = requested_slot(action)
        if slot is not None and not frame.slots.get(slot):
            if slot in missing or frame.resolved_ucd is not None:
                legal.add(action)
    if complete and not frame.confirmed:
        legal.add("propose_summary")
        if state.awaiting == "confirm":
            if state.last_intent == "confirm":
                legal.add("ack_validated")
                legal.add("warn_checker")
    if frame.comments:
        legal.add("ack_comment")
    return legal


def first_legal(ranked: list[str], state: DialogueState, schema: SlotSchema) -> SystemAction:
    """Highest-ranked action that passes the mask; ask_repeat as fallback."""
    legal = legal_actions(state, schema)
    for name in ranked:
        if name in legal:
            return SystemAction(name)
    return SystemAction("ask_repeat")
