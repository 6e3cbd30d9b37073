"""Tokenization and token-aligned annotations (the CoNLL unit)."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..drugdb import normalize_text

# Numbers (decimal comma or point) or letter runs; "200mg" splits at the
# digit/letter boundary, punctuation separates and is dropped.
_TOKEN_RE = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d_]+", re.UNICODE)
_NUMERIC_RE = re.compile(r"^\d+(?:[.,]\d+)*$")


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    normalized: str
    is_numeric: bool


def tokenize(utterance: str) -> list[Token]:
    tokens = []
    for m in _TOKEN_RE.finditer(utterance):
        text = m.group(0)
        tokens.append(Token(
            text=text,
            start=m.start(),
            end=m.end(),
            normalized=normalize_text(text),
            is_numeric=bool(_NUMERIC_RE.match(text)),
        ))
    return tokens


class BioError(ValueError):
    """Raised for label sequences violating the BIO transition rules."""


def bio_slot(label: str) -> Optional[str]:
    """Slot name of a B-/I- tag, None for O or plain labels."""
    if label.startswith(("B-", "I-")):
        return label[2:]
    return None


def validate_bio(labels: list[str]) -> None:
    prev = "O"
    for i, label in enumerate(labels):
        if label.startswith("I-"):
            slot = label[2:]
            if not (prev == f"B-{slot}" or prev == f"I-{slot}"):
                raise BioError(f"position {i}: {label} cannot follow {prev}")
        prev = label


def spans_from_bio(tokens: list[Token], labels: list[str],
                   source: Optional[str] = None) -> list[tuple[str, str]]:
    """Decode BIO labels into (slot, surface value) spans.

    When the source utterance is given, values are the exact substrings;
    otherwise token texts are joined with single spaces.
    """
    if len(tokens) != len(labels):
        raise BioError(f"{len(labels)} labels for {len(tokens)} tokens")
    validate_bio(labels)
    spans: list[tuple[str, str]] = []
    i = 0
    while i < len(labels):
        if labels[i].startswith("B-"):
            slot = labels[i][2:]
            j = i + 1
            while j < len(labels) and labels[j] == f"I-{slot}":
                j += 1
            if source is not None:
                value = source[tokens[i].start:tokens[j - 1].end]
            else:
                value = " ".join(t.text for t in tokens[i:j])
            spans.append((slot, value))
            i = j
        else:
            i += 1
    return spans


@dataclass
class AnnotatedUtterance:
    """Token sequence with per-token BIO slot labels and an utterance intent."""

    tokens: list[Token]
    bio_labels: list[str]
    intent: str
    utterance_id: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.bio_labels):
            raise BioError(
                f"{self.utterance_id or '<utt>'}: {len(self.bio_labels)} labels "
                f"for {len(self.tokens)} tokens")
        validate_bio(self.bio_labels)

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def spans(self) -> list[tuple[str, str]]:
        return spans_from_bio(self.tokens, self.bio_labels)

    def same_content(self, other: "AnnotatedUtterance") -> bool:
        """Equality on token texts, labels, intent and id (offsets ignored)."""
        return (
            [t.text for t in self.tokens] == [t.text for t in other.tokens]
            and self.bio_labels == other.bio_labels
            and self.intent == other.intent
            and self.utterance_id == other.utterance_id
        )


def utterance_from_tokens(words: list[str], labels: list[str], intent: str,
                          utterance_id: str = "") -> AnnotatedUtterance:
    """Build an utterance from word strings, recomputing canonical offsets."""
    text = " ".join(words)
    pos = 0
    tokens = []
    for w in words:
        start = text.index(w, pos)
        end = start + len(w)
        tokens.append(Token(text=w, start=start, end=end,
                            normalized=normalize_text(w),
                            is_numeric=bool(_NUMERIC_RE.match(w))))
        pos = end
    return AnnotatedUtterance(tokens=tokens, bio_labels=list(labels), intent=intent,
                              utterance_id=utterance_id)
