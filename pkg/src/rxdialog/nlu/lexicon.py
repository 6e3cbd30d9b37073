"""Gazetteer/regex baseline tagger.

Deterministic tagging from the drug database (brand/INN names), the unit
tables, and a handful of surface patterns for durations, frequencies and
moments.  Used to pre-annotate raw text and as a fallback when no trained
model is available.
"""
from __future__ import annotations

from typing import Optional, Sequence

from ..drugdb import DrugDatabase, UNIT_SYNONYMS, INTAKE_UNIT_FORM_HINTS, normalize_text
from ..taxonomy import SlotSchema
from .tokens import Token

STRENGTH_UNIT_WORDS = {w for syns in UNIT_SYNONYMS.values() for s in syns for w in s.split()}
INTAKE_UNIT_WORDS = set(INTAKE_UNIT_FORM_HINTS)

TIME_UNITS = {"day", "days", "week", "weeks", "month", "months", "hour", "hours", "year", "years"}
MOMENT_WORDS = {"morning", "noon", "evening", "night", "bedtime"}
ROUTE_WORDS = {"oral", "orally", "intravenous", "intramuscular", "subcutaneous",
               "ocular", "cutaneous", "nasal", "rectal", "inhaled"}
FORM_WORDS = {"syrup", "cream", "ointment", "suppository"}


def _name_phrases(db: Optional[DrugDatabase]) -> list[tuple[list[str], str]]:
    """Normalized name word sequences, longest first, with their slot."""
    if db is None:
        return []
    phrases = []
    for rec in db.records:
        brand = normalize_text(rec.brand_name).split()
        if brand:
            phrases.append((brand, "drug"))
        inn = normalize_text(rec.inn).split()
        if inn:
            phrases.append((inn, "inn"))
    phrases.sort(key=lambda p: -len(p[0]))
    # dedupe keeping the longest-first order
    seen = set()
    out = []
    for words, slot in phrases:
        key = (tuple(words), slot)
        if key not in seen:
            seen.add(key)
            out.append((words, slot))
    return out


def lexicon_tag(tokens: Sequence[Token], db: Optional[DrugDatabase] = None,
                schema: Optional[SlotSchema] = None) -> list[str]:
    """Tag tokens with gazetteer and pattern rules; always yields valid BIO."""
    n = len(tokens)
    labels = ["O"] * n
    words = [t.normalized for t in tokens]
    taken = [False] * n

    def claim(i: int, j: int, slot: str):
        labels[i] = f"B-{slot}"
        for p in range(i + 1, j):
            labels[p] = f"I-{slot}"
        for p in range(i, j):
            taken[p] = True

    # drug / INN names, longest match first
    for phrase, slot in _name_phrases(db):
        L = len(phrase)
        for i in range(0, n - L + 1):
            if any(taken[i:i + L]):
                continue
            if words[i:i + L] == phrase:
                claim(i, i + L, slot)

    i = 0
    while i < n:
        if taken[i]:
            i += 1
            continue
        w = words[i]
        nxt = words[i + 1] if i + 1 < n else ""
        nxt_free = i + 1 < n and not taken[i + 1]

        # "for 7 days" / "7 days": duration = number + time unit
        if tokens[i].is_numeric and nxt_free and nxt in TIME_UNITS:
            claim(i, i + 2, "duration")
            i += 2
            continue
        # "3 times per day" / "3 times a day": frequency
        if tokens[i].is_numeric and nxt_free and nxt == "times":
            j = i + 2
            if j + 1 < n and words[j] in {"per", "a"} and words[j + 1] in TIME_UNITS:
                j += 2
            claim(i, j, "frequency")
            i = j
            continue
        # number + strength unit -> drug dosage ("200 mg")
        if tokens[i].is_numeric and nxt_free and nxt in STRENGTH_UNIT_WORDS:
            claim(i, i + 1, "d-dos-val")
            claim(i + 1, i + 2, "d-dos-up")
            i += 2
            continue
        # number + intake unit -> posology ("2 injections", "10 drops")
        if tokens[i].is_numeric and nxt_free and nxt in INTAKE_UNIT_WORDS:
            claim(i, i + 1, "dos-val")
            claim(i + 1, i + 2, "dos-uf")
            i += 2
            continue
        # "per day" / "every day" style frequency without a count
        if w in {"per", "every"} and nxt_free and nxt in TIME_UNITS:
            claim(i, i + 2, "frequency")
            i += 2
            continue
        if w in MOMENT_WORDS:
            claim(i, i + 1, "moment")
            i += 1
            continue
        if w in ROUTE_WORDS:
            claim(i, i + 1, "route")
            i += 1
            continue
        if w in FORM_WORDS or (w in {"tablets", "tablet", "capsules", "capsule"}
                               and (i == 0 or not tokens[i - 1].is_numeric)):
            claim(i, i + 1, "form")
            i += 1
            continue
        i += 1

    if schema is not None:
        known = set(schema.label_names)
        labels = [lab if lab == "O" or lab[2:] in known else "O" for lab in labels]
    return labels
