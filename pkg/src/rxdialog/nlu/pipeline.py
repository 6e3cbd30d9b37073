"""End-to-end utterance understanding: tokens -> slots + intent -> frame fragment."""
from __future__ import annotations

from dataclasses import dataclass, field
from ..drugdb import canonical_unit
from ..taxonomy import PrescriptionFrame, SlotSchema
from .crf import CrfModel, crf_decode
from .intent import IntentModel, intent_predict
from .tokens import spans_from_bio, tokenize


@dataclass
class NluResult:
    intent: str
    intent_confidence: float
    frame_delta: PrescriptionFrame = field(default_factory=PrescriptionFrame)


def normalize_slot_value(schema: SlotSchema, slot: str, value: str) -> str:
    """Slot-aware value normalization (decimal commas, unit synonyms)."""
    from ..drugdb import normalize_text

    norm = normalize_text(value)
    if schema.has_label(slot):
        d = schema.label(slot)
        if d.kind == "numeric":
            return norm.replace(",", ".")
        if d.unit_like:
            return canonical_unit(_singular(norm))
    return norm


def _singular(word: str) -> str:
    if word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        return word[:-1]
    return word


def frame_from_spans(spans: list[tuple[str, str]], schema: SlotSchema,
                     turn_index: int = 0) -> PrescriptionFrame:
    """Fill a frame fragment; spans with unknown slots or numeric-slot values
    that do not parse as non-negative decimals are dropped."""
    from decimal import Decimal, InvalidOperation

    frame = PrescriptionFrame()
    for slot, value in spans:
        if not schema.has_label(slot):
            continue
        normalized = normalize_slot_value(schema, slot, value)
        if schema.label(slot).kind == "numeric":
            try:
                if Decimal(normalized) < 0:
                    continue
            except InvalidOperation:
                continue
        frame.add(slot, value, normalized, turn_index=turn_index)
    return frame


def nlu_parse(crf: CrfModel, intent_model: IntentModel, schema: SlotSchema,
              utterance: str, turn_index: int = 0) -> NluResult:
    """tokenize -> Viterbi slot decode -> span decode, plus intent prediction."""
    tokens = tokenize(utterance)
    if not tokens:
        return NluResult(intent="none", intent_confidence=1.0)
    labels, _ = crf_decode(crf, tokens)
    spans = spans_from_bio(tokens, labels, source=utterance)
    intent, confidence = intent_predict(intent_model, tokens)
    return NluResult(
        intent=intent,
        intent_confidence=confidence,
        frame_delta=frame_from_spans(spans, schema, turn_index=turn_index),
    )
