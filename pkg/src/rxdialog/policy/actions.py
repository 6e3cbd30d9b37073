"""System action inventory (31 actions) shared by both policies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

REQUEST_SLOT_PREFIX = "request_slot:"

_BASE_ACTIONS = (
    "action_check_drug",
    "propose_candidates",
    "request_restart",
    "propose_summary",
    "ack_validated",
    "ack_cancelled",
    "warn_checker",
    "ask_repeat",
    "ack_comment",
    "greet",
)

_REQUESTABLE_SLOTS = (
    "drug", "d-dos-val", "d-dos-up", "dos-val", "dos-uf", "dos-up",
    "frequency", "duration", "form", "route", "rhythm", "condition",
    "moment", "meal-relation", "min-gap", "max-dose-per-24h", "as-needed",
    "quantity-to-dispense", "renewal", "start-date", "indication",
)

ACTION_INVENTORY: tuple[str, ...] = _BASE_ACTIONS + tuple(
    REQUEST_SLOT_PREFIX + s for s in _REQUESTABLE_SLOTS
)

TERMINAL_ACTIONS = ("ack_validated", "ack_cancelled")


def is_request_slot(action: str) -> bool:
    return action.startswith(REQUEST_SLOT_PREFIX)


def requested_slot(action: str) -> Optional[str]:
    if is_request_slot(action):
        return action[len(REQUEST_SLOT_PREFIX):]
    return None


def action_words(action: str) -> list[str]:
    """Bag-of-words encoding of an action name, e.g.
    action_check_drug -> [action, check, drug]."""
    out = []
    for chunk in action.replace(":", "_").replace("-", "_").split("_"):
        if chunk:
            out.append(chunk)
    return out


@dataclass
class SystemAction:
    name: str
    payload: Optional[dict] = None

    def __post_init__(self):
        if self.name not in ACTION_INVENTORY:
            raise ValueError(f"unknown system action {self.name!r}")

    @property
    def terminal(self) -> bool:
        return self.name in TERMINAL_ACTIONS
