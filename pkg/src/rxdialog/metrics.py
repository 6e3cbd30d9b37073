"""Dialogue-metric extraction from newline-delimited JSON event logs.

An event is one JSON object per line: session_id, ts (seconds, monotone
within a session), side (user|system), event_type, payload.  A dialogue
turn is one user action followed by the consecutive system action; trailing
user actions without a system response do not count as turns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

USER_EVENT_TYPES = {"utterance", "button", "choice"}
SYSTEM_EVENT_TYPES = {"system_action", "system_error", "drug_resolved",
                      "prescription_validated", "prescription_cancelled",
                      "restart_requested", "session_start"}
EVENT_TYPES = USER_EVENT_TYPES | SYSTEM_EVENT_TYPES

CATEGORIES = ("non_expert", "physician", "other_expert")


class EventLogError(ValueError):
    pass


@dataclass(frozen=True)
class SessionEvent:
    session_id: str
    ts: float
    side: str
    event_type: str
    payload: str = ""


@dataclass
class ParseResult:
    sessions: dict[str, list[SessionEvent]]
    rejects: list[tuple[int, str]]  # (line number, reason)


def _event_from_obj(obj: dict) -> SessionEvent:
    try:
        event = SessionEvent(
            session_id=str(obj["session_id"]),
            ts=float(obj["ts"]),
            side=str(obj["side"]),
            event_type=str(obj["event_type"]),
            payload=str(obj.get("payload", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EventLogError(f"bad event field: {exc}") from exc
    if event.side not in ("user", "system"):
        raise EventLogError(f"bad side {event.side!r}")
    if not event.event_type:
        raise EventLogError("empty event_type")
    return event


def parse_event_log(path) -> ParseResult:
    """Group events by session, time-ordered; malformed lines are collected."""
    sessions: dict[str, list[SessionEvent]] = {}
    rejects: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise EventLogError("event line is not a JSON object")
                event = _event_from_obj(obj)
            except (json.JSONDecodeError, EventLogError) as exc:
                rejects.append((lineno, str(exc)))
                continue
            sessions.setdefault(event.session_id, []).append(event)
    for sid, events in sessions.items():
        events.sort(key=lambda e: e.ts)
    return ParseResult(sessions=sessions, rejects=rejects)


def write_event_log(events: Iterable[SessionEvent], path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps({
                "session_id": e.session_id, "ts": e.ts, "side": e.side,
                "event_type": e.event_type, "payload": e.payload,
            }, ensure_ascii=False) + "\n")


@dataclass
class SessionMetrics:
    duration_s: float
    n_turns: int
    n_events: int
    success: bool
    drug_associated: bool
    n_errors: int
    n_restarts: int
    error_turn_ratio: float

    def __post_init__(self):
        if self.duration_s < 0:
            raise EventLogError("negative session duration")


def session_metrics(events: Sequence[SessionEvent]) -> SessionMetrics:
    if not events:
        raise EventLogError("empty event list")
    duration = events[-1].ts - events[0].ts
    n_turns = 0
    pending_user = False
    for e in events:
        if e.event_type in USER_EVENT_TYPES:
            pending_user = True
        elif e.event_type == "system_action" and pending_user:
            n_turns += 1
            pending_user = False
    n_errors = sum(e.event_type == "system_error" for e in events)
    n_restarts = sum(e.event_type == "restart_requested" for e in events)
    return SessionMetrics(
        duration_s=duration,
        n_turns=n_turns,
        n_events=len(events),
        success=any(e.event_type == "prescription_validated" for e in events),
        drug_associated=any(e.event_type == "drug_resolved" for e in events),
        n_errors=n_errors,
        n_restarts=n_restarts,
        error_turn_ratio=n_errors / n_turns if n_turns else 0.0,
    )


@dataclass(frozen=True)
class ParticipantMeta:
    participant_id: str
    category: str
    age_band: str = ""
    gender: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise EventLogError(f"unknown participant category {self.category!r}")


@dataclass
class GroupRow:
    group: str
    n_sessions: int
    mean_duration_s: float
    mean_turns: float
    mean_events: float
    success_rate: float
    drug_association_rate: float
    mean_errors: float
    mean_restarts: float


def aggregate(sessions: dict[str, Sequence[SessionEvent]],
              meta: dict[str, ParticipantMeta],
              session_owner: dict[str, str],
              group_by: str = "none") -> list[GroupRow]:
    """Per-group means over session metrics.

    session_owner maps session_id to participant_id; group_by is one of
    category, age_band, gender, none.
    """
    if group_by not in ("category", "age_band", "gender", "none"):
        raise EventLogError(f"unknown group_by {group_by!r}")
    grouped: dict[str, list[SessionMetrics]] = {}
    for sid, events in sessions.items():
        pid = session_owner.get(sid)
        if pid is None or pid not in meta:
            raise EventLogError(f"session {sid} has no known participant")
        participant = meta[pid]
        key = "all" if group_by == "none" else getattr(participant, group_by)
        grouped.setdefault(key, []).append(session_metrics(events))

    rows = []
    for group in sorted(grouped):
        ms = grouped[group]
        n = len(ms)
        rows.append(GroupRow(
            group=group,
            n_sessions=n,
            mean_duration_s=sum(m.duration_s for m in ms) / n,
            mean_turns=sum(m.n_turns for m in ms) / n,
            mean_events=sum(m.n_events for m in ms) / n,
            success_rate=sum(m.success for m in ms) / n,
            drug_association_rate=sum(m.drug_associated for m in ms) / n,
            mean_errors=sum(m.n_errors for m in ms) / n,
            mean_restarts=sum(m.n_restarts for m in ms) / n,
        ))
    return rows


def rows_to_csv(rows: Sequence[GroupRow]) -> str:
    header = ("group,n_sessions,mean_duration_s,mean_turns,mean_events,"
              "success_rate,drug_association_rate,mean_errors,mean_restarts")
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.group},{r.n_sessions},{r.mean_duration_s:.3f},{r.mean_turns:.3f},"
            f"{r.mean_events:.3f},{r.success_rate:.4f},{r.drug_association_rate:.4f},"
            f"{r.mean_errors:.3f},{r.mean_restarts:.3f}")
    return "\n".join(lines) + "\n"


def owners_from_events(sessions: dict[str, Sequence[SessionEvent]]) -> dict[str, str]:
    """session_id -> participant_id, read from each session_start payload."""
    owners = {}
    for sid, events in sessions.items():
        for e in events:
            if e.event_type == "session_start":
                owners[sid] = e.payload
                break
    return owners


def load_participants(path) -> dict[str, ParticipantMeta]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for pid, info in raw.items():
        out[pid] = ParticipantMeta(participant_id=pid, category=info["category"],
                                   age_band=info.get("age_band", ""),
                                   gender=info.get("gender", ""))
    return out
