"""Per-session dialogue state and its featurization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..drugdb import DrugRecord
from ..taxonomy import PrescriptionFrame, SlotSchema, frame_missing_slots
from .actions import action_words

HISTORY_WINDOW = 10


@dataclass
class DialogueState:
    frame: PrescriptionFrame = field(default_factory=PrescriptionFrame)
    last_intent: str = "none"
    candidates: list[DrugRecord] = field(default_factory=list)
    candidates_status: Optional[str] = None  # None until a lookup ran
    turn_history: list[tuple[frozenset, str]] = field(default_factory=list)
    awaiting: Optional[str] = None  # slot name, "choice" or "confirm"
    warning_active: bool = False
    warned_once: bool = False
    terminal: bool = False
    history_window: int = HISTORY_WINDOW

    def remember(self, features: frozenset, action: str):
        self.turn_history.append((features, action))
        if len(self.turn_history) > self.history_window:
            del self.turn_history[:len(self.turn_history) - self.history_window]

    def previous_action(self) -> Optional[str]:
        return self.turn_history[-1][1] if self.turn_history else None


def state_flags(state: DialogueState, schema: SlotSchema) -> dict[str, bool]:
    missing = frame_missing_slots(state.frame, schema)
    return {
        "drug_resolved": state.frame.resolved_ucd is not None,
        "candidates_multiple": state.candidates_status == "multiple",
        "candidates_none": state.candidates_status == "none",
        "frame_complete": state.frame.resolved_ucd is not None and not missing,
        "awaiting_confirm": state.awaiting == "confirm",
        "warning_active": state.warning_active,
        "has_comment": bool(state.frame.comments),
    }


def turn_features(intent: str, slots_present: Sequence[str], flags: dict[str, bool],
                  prev_action: Optional[str]) -> frozenset:
    """Feature names for one dialogue turn.

    Previous action names are split into words (action_check_drug ->
    {action, check, drug}) so related actions share features.  The
    out-of-domain intent is encoded by absence: a fresh empty state maps
    to the zero vector.
    """
    feats = set()
    if intent and intent != "none":
        feats.add(f"intent={intent}")
    feats.update(f"slot={s}" for s in slots_present)
    feats.update(f"flag={name}" for name, on in flags.items() if on)
    if prev_action:
        feats.update(f"prev={w}" for w in action_words(prev_action))
    return frozenset(feats)


def featurize_state(state: DialogueState, schema: SlotSchema) -> frozenset:
    """Features of the current turn, given everything tracked so far."""
    return turn_features(
        intent=state.last_intent,
        slots_present=sorted(s for s, vals in state.frame.slots.items() if vals),
        flags=state_flags(state, schema),
        prev_action=state.previous_action(),
    )
