"""Corpus formats: token-aligned CoNLL files and JSON-lines dialogue records.

CoNLL layout (docs/conll.md): one token per line, token and BIO label
separated by a tab, one comment line `# intent = <name>` (and optionally
`# id = <id>`) per utterance, utterances separated by blank lines.  The
importer accepts a column override for corpora with extra columns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .nlu.tokens import AnnotatedUtterance, BioError, utterance_from_tokens


class CorpusFormatError(ValueError):
    """Malformed corpus file; message carries the file location."""


@dataclass
class ConllDocument:
    utterances: list[AnnotatedUtterance]
    schema_version: str = "1.0"
    source_tag: str = ""

    def same_content(self, other: "ConllDocument") -> bool:
        return (
            len(self.utterances) == len(other.utterances)
            and all(a.same_content(b) for a, b in zip(self.utterances, other.utterances))
            and self.schema_version == other.schema_version
            and self.source_tag == other.source_tag
        )


def export_conll(doc: ConllDocument, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema_version = {doc.schema_version}\n")
        if doc.source_tag:
            fh.write(f"# source = {doc.source_tag}\n")
        fh.write("\n")
        for utt in doc.utterances:
            if utt.utterance_id:
                fh.write(f"# id = {utt.utterance_id}\n")
            fh.write(f"# intent = {utt.intent}\n")
            for tok, lab in zip(utt.tokens, utt.bio_labels):
                fh.write(f"{tok.text}\t{lab}\n")
            fh.write("\n")


def import_conll(path, columns: tuple[int, int] = (0, 1),
                 n_columns: Optional[int] = None) -> ConllDocument:
    """Read a CoNLL file; columns picks (token, label) positions.

    n_columns, when given, enforces the expected column count per line
    (mismatches are reported with their line number).
    """
    tok_col, lab_col = columns
    utterances: list[AnnotatedUtterance] = []
    words: list[str] = []
    labels: list[str] = []
    intent = "none"
    utt_id = ""
    schema_version = "1.0"
    source_tag = ""

    def flush(lineno):
        nonlocal words, labels, intent, utt_id
        if not words:
            return
        try:
            utterances.append(utterance_from_tokens(words, labels, intent, utt_id))
        except BioError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
        words, labels = [], []
        intent, utt_id = "none", ""

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    key, value = key.strip(), value.strip()
                    if key == "intent":
                        intent = value
                    elif key == "id":
                        utt_id = value
                    elif key == "schema_version":
                        schema_version = value
                    elif key == "source":
                        source_tag = value
                continue
            parts = line.split("\t")
            expected = n_columns if n_columns is not None else max(tok_col, lab_col) + 1
            if len(parts) < expected:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected >= {expected} tab-separated columns, "
                    f"got {len(parts)}")
            word, label = parts[tok_col], parts[lab_col]
            if label != "O" and not label.startswith(("B-", "I-")):
                raise CorpusFormatError(f"{path}:{lineno}: bad BIO label {label!r}")
            if label.startswith("I-"):
                prev = labels[-1] if labels else "O"
                slot = label[2:]
                if prev not in (f"B-{slot}", f"I-{slot}"):
                    raise CorpusFormatError(
                        f"{path}:{lineno}: invalid BIO transition {prev} -> {label}")
            words.append(word)
            labels.append(label)
        flush(lineno="<eof>")
    return ConllDocument(utterances=utterances, schema_version=schema_version,
                         source_tag=source_tag)


# --- dialogue records ---------------------------------------------------------

@dataclass
class DialogueTurn:
    side: str  # "user" | "system"
    act: str  # user act/intent or system action name
    utterance_id: Optional[str] = None
    payload: Optional[dict] = None


@dataclass
class DialogueRecord:
    session_id: str
    turns: list[DialogueTurn]
    failure_flag: bool = False

    def validate(self):
        if not self.turns:
            raise CorpusFormatError(f"{self.session_id}: empty dialogue")
        if self.turns[0].side != "user":
            raise CorpusFormatError(f"{self.session_id}: dialogue must start with a user turn")
        for a, b in zip(self.turns, self.turns[1:]):
            if a.side == b.side:
                raise CorpusFormatError(
                    f"{self.session_id}: consecutive {a.side} turns break the pairing")
        if self.turns[-1].side != "system":
            raise CorpusFormatError(f"{self.session_id}: dialogue must end with a system turn")


def export_dialogues(records: Iterable[DialogueRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            rec.validate()
            fh.write(json.dumps({
                "session_id": rec.session_id,
                "failure_flag": rec.failure_flag,
                "turns": [
                    {k: v for k, v in (("side", t.side), ("act", t.act),
                                       ("utterance_id", t.utterance_id),
                                       ("payload", t.payload)) if v is not None}
                    for t in rec.turns
                ],
            }, ensure_ascii=False) + "\n")


def import_dialogues(path) -> list[DialogueRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            try:
                rec = DialogueRecord(
                    session_id=obj["session_id"],
                    failure_flag=bool(obj.get("failure_flag", False)),
                    turns=[DialogueTurn(side=t["side"], act=t["act"],
                                        utterance_id=t.get("utterance_id"),
                                        payload=t.get("payload"))
                           for t in obj["turns"]],
                )
            except (KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: missing field {exc}") from exc
            try:
                rec.validate()
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return records
