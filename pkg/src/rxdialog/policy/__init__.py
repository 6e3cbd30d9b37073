"""Dialogue policies: decision-table rules and the learned embedding policy."""

from .actions import (
    ACTION_INVENTORY,
    REQUEST_SLOT_PREFIX,
    TERMINAL_ACTIONS,
    SystemAction,
    action_words,
    is_request_slot,
    requested_slot,
)
from .state import DialogueState, HISTORY_WINDOW, featurize_state, state_flags, turn_features
from .rules import first_legal, legal_actions, rule_policy
from .ted import (
    TedError,
    TedModel,
    TedSession,
    build_vocab,
    dialogue_loss_grads,
    new_model,
    next_action_accuracy,
    ted_loss,
    ted_select,
    ted_similarity,
    ted_train,
)


def sessions_to_ted(sessions) -> list[TedSession]:
    """Convert generated dialogue sessions into per-step training sequences."""
    out = []
    for sess in sessions:
        feats: list[frozenset] = []
        actions: list[str] = []
        for turn in sess.turns:
            if turn.get("side") != "system":
                continue
            st = turn["state"]
            feats.append(turn_features(
                intent=st["intent"],
                slots_present=st["slots_present"],
                flags=st["flags"],
                prev_action=st.get("prev_action"),
            ))
            actions.append(turn["action"])
        if feats:
            out.append(TedSession(features=feats, actions=actions))
    return out


__all__ = [
    "ACTION_INVENTORY", "REQUEST_SLOT_PREFIX", "TERMINAL_ACTIONS", "SystemAction",
    "action_words", "is_request_slot", "requested_slot",
    "DialogueState", "HISTORY_WINDOW", "featurize_state", "state_flags",
    "turn_features", "first_legal", "legal_actions", "rule_policy",
    "TedError", "TedModel", "TedSession", "build_vocab", "dialogue_loss_grads",
    "new_model", "next_action_accuracy", "sessions_to_ted", "ted_loss",
    "ted_select", "ted_similarity", "ted_train",
]
