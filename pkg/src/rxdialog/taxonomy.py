"""Prescription-semantics schema: slot labels, intents, dialogue acts, frames.

The schema is a data artifact (a JSON document, see docs/schema.md), not code.
Everything downstream -- NLU label sets, grammar validation, frame completion
logic -- is driven by the loaded schema, so the slot inventory can be revised
without touching code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional


class SchemaError(ValueError):
    """Raised when a schema document violates the schema contract."""


class UnknownSlotError(KeyError):
    """Raised when a frame references a slot label absent from the schema."""


SLOT_KINDS = ("numeric", "closed_vocabulary", "free_text")


@dataclass(frozen=True)
class SlotLabelDef:
    """One slot label: its name, value kind and optional closed vocabulary."""

    name: str
    kind: str
    value_domain: Optional[tuple[str, ...]] = None
    unit_like: bool = False

    def __post_init__(self):
        if not self.name:
            raise SchemaError("slot label name must be non-empty")
        if self.kind not in SLOT_KINDS:
            raise SchemaError(f"slot {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "closed_vocabulary" and not self.value_domain:
            raise SchemaError(
                f"slot {self.name!r}: closed_vocabulary requires a non-empty value_domain"
            )


@dataclass(frozen=True)
class DialogueAct:
    name: str
    side: str  # "user" | "system"
    payload_slots: tuple[str, ...] = ()

    def __post_init__(self):
        if self.side not in ("user", "system"):
            raise SchemaError(f"dialogue act {self.name!r}: side must be user or system")


@dataclass(frozen=True)
class SlotSchema:
    """Immutable slot/intent inventory plus the mandatory-slot contract."""

    labels: tuple[SlotLabelDef, ...]
    intents: tuple[str, ...]
    mandatory_slots: tuple[str, ...]
    version: str
    identity_slots: tuple[str, ...] = ("drug", "inn")

    def __post_init__(self):
        names = [d.name for d in self.labels]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate slot labels: {', '.join(dupes)}")
        known = set(names)
        for slot in self.mandatory_slots:
            if slot not in known:
                raise SchemaError(f"mandatory slot {slot!r} is not a defined label")
        for slot in self.identity_slots:
            if slot not in known:
                raise SchemaError(f"identity slot {slot!r} is not a defined label")
        if len(self.intents) != len(set(self.intents)):
            raise SchemaError("duplicate intent names")

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.labels)

    def label(self, name: str) -> SlotLabelDef:
        for d in self.labels:
            if d.name == name:
                return d
        raise UnknownSlotError(name)

    def has_label(self, name: str) -> bool:
        return any(d.name == name for d in self.labels)

    def bio_labels(self) -> tuple[str, ...]:
        """Full BIO tag set implied by the slot inventory, O first."""
        tags = ["O"]
        for d in self.labels:
            tags.append(f"B-{d.name}")
            tags.append(f"I-{d.name}")
        return tuple(tags)


@dataclass
class SlotValue:
    """One extracted value: raw surface string, normalized form, source turn."""

    value: str
    normalized: str
    turn_index: int = 0


@dataclass
class PrescriptionFrame:
    """The structured prescription under construction."""

    slots: dict[str, list[SlotValue]] = field(default_factory=dict)
    resolved_ucd: Optional[str] = None
    confirmed: bool = False
    comments: list[str] = field(default_factory=list)

    def add(self, slot: str, value: str, normalized: Optional[str] = None, turn_index: int = 0):
        self.slots.setdefault(slot, []).append(
            SlotValue(value=value, normalized=normalized if normalized is not None else value,
                      turn_index=turn_index)
        )

    def first(self, slot: str) -> Optional[str]:
        vals = self.slots.get(slot)
        return vals[0].normalized if vals else None

    def last(self, slot: str) -> Optional[str]:
        vals = self.slots.get(slot)
        return vals[-1].normalized if vals else None

    def values(self, slot: str) -> list[str]:
        return [v.normalized for v in self.slots.get(slot, [])]

    def remove(self, slot: str):
        self.slots.pop(slot, None)

    def replace_last(self, slot: str, value: str, normalized: Optional[str] = None,
                     turn_index: int = 0):
        """Correction semantics: overwrite the most recently filled instance."""
        vals = self.slots.get(slot)
        new = SlotValue(value=value, normalized=normalized if normalized is not None else value,
                        turn_index=turn_index)
        if vals:
            vals[-1] = new
        else:
            self.slots[slot] = [new]

    def copy(self) -> "PrescriptionFrame":
        return PrescriptionFrame(
            slots={k: list(v) for k, v in self.slots.items()},
            resolved_ucd=self.resolved_ucd,
            confirmed=self.confirmed,
            comments=list(self.comments),
        )


def _check_frame_keys(frame: PrescriptionFrame, schema: SlotSchema):
    for key in frame.slots:
        if not schema.has_label(key):
            raise UnknownSlotError(key)


def frame_missing_slots(frame: PrescriptionFrame, schema: SlotSchema) -> list[str]:
    """Mandatory slots absent from the frame, in schema declaration order.

    Any identity slot (or an already-resolved drug code) satisfies the
    drug-identity requirement, whichever identity slot the mandatory list names.
    """
    _check_frame_keys(frame, schema)
    identity_ok = frame.resolved_ucd is not None or any(
        frame.slots.get(s) for s in schema.identity_slots
    )
    missing = []
    for name in schema.label_names:  # declaration order
        if name not in schema.mandatory_slots:
            continue
        if frame.slots.get(name):
            continue
        if name in schema.identity_slots and identity_ok:
            continue
        missing.append(name)
    return missing


def frame_is_complete(frame: PrescriptionFrame, schema: SlotSchema) -> bool:
    return frame.resolved_ucd is not None and not frame_missing_slots(frame, schema)


def _parse_label_entry(entry: dict, lineno_hint: str) -> SlotLabelDef:
    try:
        domain = entry.get("value_domain")
        return SlotLabelDef(
            name=entry["name"],
            kind=entry["kind"],
            value_domain=tuple(domain) if domain else None,
            unit_like=bool(entry.get("unit_like", False)),
        )
    except KeyError as exc:
        raise SchemaError(f"{lineno_hint}: label entry missing key {exc}") from exc


def load_schema(path) -> SlotSchema:
    """Load and validate a schema document (JSON, see docs/schema.md)."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    return schema_from_dict(doc)


def schema_from_dict(doc: dict) -> SlotSchema:
    labels = [_parse_label_entry(e, f"label #{i}") for i, e in enumerate(doc.get("labels", []))]
    if not labels:
        raise SchemaError("schema declares no slot labels")
    intents = tuple(doc.get("intents", []))
    if not intents:
        raise SchemaError("schema declares no intents")
    return SlotSchema(
        labels=tuple(labels),
        intents=intents,
        mandatory_slots=tuple(doc.get("mandatory_slots", [])),
        version=str(doc.get("version", "0")),
        identity_slots=tuple(doc.get("identity_slots", ("drug", "inn"))),
    )


def schema_to_dict(schema: SlotSchema) -> dict:
    return {
        "version": schema.version,
        "labels": [
            {
                "name": d.name,
                "kind": d.kind,
                **({"value_domain": list(d.value_domain)} if d.value_domain else {}),
                "unit_like": d.unit_like,
            }
            for d in schema.labels
        ],
        "intents": list(schema.intents),
        "mandatory_slots": list(schema.mandatory_slots),
        "identity_slots": list(schema.identity_slots),
    }


def save_schema(schema: SlotSchema, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_dict(schema), fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def default_schema_path():
    return resources.files("rxdialog.data").joinpath("schema.json")


def load_default_schema() -> SlotSchema:
    with resources.files("rxdialog.data").joinpath("schema.json").open(encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


# The thirteen dialogue acts of the shipped act inventory (a reconstruction;
# deployments may extend it).  User acts carry intent-level meaning, system
# acts mirror the engine's action families.
DEFAULT_DIALOGUE_ACTS: tuple[DialogueAct, ...] = (
    DialogueAct("inform_prescription", "user", ("drug", "inn", "dos-val", "dos-uf")),
    DialogueAct("inform_slot", "user"),
    DialogueAct("confirm", "user"),
    DialogueAct("negate", "user"),
    DialogueAct("correct", "user"),
    DialogueAct("choose_candidate", "user"),
    DialogueAct("add_comment", "user"),
    DialogueAct("out_of_domain", "user"),
    DialogueAct("check_drug", "system"),
    DialogueAct("request_slot", "system"),
    DialogueAct("propose_candidates", "system"),
    DialogueAct("propose_summary", "system"),
    DialogueAct("close_session", "system"),
)
