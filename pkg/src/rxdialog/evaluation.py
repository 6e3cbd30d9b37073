"""Evaluation metrics for NLU models: span-level P/R/F1 and intent accuracy.

Macro averages run over ALL schema labels; labels with zero support and zero
predictions contribute zero, keeping rare slots as important as common ones.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .nlu import AnnotatedUtterance, CrfModel, IntentModel, crf_decode, intent_predict
from .taxonomy import SlotSchema


def _spans_with_positions(labels: Sequence[str]) -> set[tuple[str, int, int]]:
    spans = set()
    i = 0
    while i < len(labels):
        if labels[i].startswith("B-"):
            slot = labels[i][2:]
            j = i + 1
            while j < len(labels) and labels[j] == f"I-{slot}":
                j += 1
            spans.add((slot, i, j))
            i = j
        else:
            i += 1
    return spans


@dataclass
class PrfRow:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class SlotEvalReport:
    per_label: dict[str, PrfRow]
    micro: PrfRow
    macro: PrfRow


def _prf(tp: int, n_pred: int, n_gold: int) -> PrfRow:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return PrfRow(precision=p, recall=r, f1=f1, support=n_gold)


def evaluate_slots(model: CrfModel, data: Sequence[AnnotatedUtterance],
                   schema: Optional[SlotSchema] = None) -> SlotEvalReport:
    tp: Counter = Counter()
    n_pred: Counter = Counter()
    n_gold: Counter = Counter()
    for utt in data:
        predicted, _ = crf_decode(model, utt.tokens)
        gold = _spans_with_positions(utt.bio_labels)
        pred = _spans_with_positions(predicted)
        for slot, _, _ in gold:
            n_gold[slot] += 1
        for slot, _, _ in pred:
            n_pred[slot] += 1
        for span in gold & pred:
            tp[span[0]] += 1

    labels = list(schema.label_names) if schema is not None else sorted(
        set(n_gold) | set(n_pred))
    per_label = {lab: _prf(tp[lab], n_pred[lab], n_gold[lab]) for lab in labels}
    micro = _prf(sum(tp.values()), sum(n_pred.values()), sum(n_gold.values()))
    macro = PrfRow(
        precision=sum(r.precision for r in per_label.values()) / len(per_label),
        recall=sum(r.recall for r in per_label.values()) / len(per_label),
        f1=sum(r.f1 for r in per_label.values()) / len(per_label),
        support=sum(r.support for r in per_label.values()),
    )
    return SlotEvalReport(per_label=per_label, micro=micro, macro=macro)


def intent_accuracy(model: IntentModel, data: Sequence[AnnotatedUtterance]) -> float:
    if not data:
        return 0.0
    hits = 0
    for utt in data:
        pred, _ = intent_predict(model, utt.tokens)
        hits += pred == utt.intent
    return hits / len(data)


def report_dict(slot_report: SlotEvalReport, acc: float) -> dict:
    return {
        "intent_accuracy": acc,
        "slot_micro": {"precision": slot_report.micro.precision,
                       "recall": slot_report.micro.recall,
                       "f1": slot_report.micro.f1},
        "slot_macro": {"precision": slot_report.macro.precision,
                       "recall": slot_report.macro.recall,
                       "f1": slot_report.macro.f1},
        "per_label": {lab: {"precision": r.precision, "recall": r.recall,
                            "f1": r.f1, "support": r.support}
                      for lab, r in slot_report.per_label.items()},
    }
