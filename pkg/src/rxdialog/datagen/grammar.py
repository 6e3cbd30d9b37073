"""Feature-based context-free grammar over prescription utterances.

DSL (one rule per line, see docs/grammar.md):

    %start PRESCRIPTION SMALLTALK        declare start symbols
    %intent PRESCRIPTION medical_prescription
    %slot duration DURATION_PHRASE       fragment used to boost a slot
    NT -> SYM SYM | SYM                  alternatives split on |

Symbols are nonterminals (bare names) or terminals written keyword@label=value;
label O means outside any slot, value defaults to the normalized keyword.
Multi-word keywords are quoted: 'per day'@frequency.  $field placeholders are
bound to the drug record sampled for the whole derivation ($brand, $inn,
$strength, $strength_unit, $form, $route, $intake_unit), which keeps form,
route and intake unit mutually coherent.  The built-in count agreement
pluralizes $intake_unit after a count other than one.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..drugdb import DrugDatabase, DrugRecord, format_decimal, intake_unit_for_form, normalize_text
from ..nlu.tokens import AnnotatedUtterance, Token, tokenize, utterance_from_tokens


class GrammarError(ValueError):
    pass


class DepthLimitExceeded(GrammarError):
    pass


PLACEHOLDER_FIELDS = ("brand", "inn", "strength", "strength_unit", "form",
                      "route", "intake_unit")


@dataclass(frozen=True)
class Terminal:
    """keyword/slot-label/slot-value triplet; keyword may be a $placeholder."""

    keyword: str
    slot_label: str
    slot_value: str

    @property
    def placeholder(self) -> Optional[str]:
        if self.keyword.startswith("$"):
            return self.keyword[1:]
        return None


@dataclass(frozen=True)
class NonTerminal:
    name: str


Symbol = Terminal | NonTerminal
Production = tuple[Symbol, ...]


_TERMINAL_RE = re.compile(r"^(?P<kw>'[^']*'|[^@\s]+)@(?P<label>[\w.-]+)(?:=(?P<value>\S+))?$")
_NT_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")


def _parse_symbol(text: str, where: str) -> Symbol:
    if "@" in text:
        m = _TERMINAL_RE.match(text)
        if not m:
            raise GrammarError(f"{where}: malformed terminal {text!r}")
        kw = m.group("kw")
        if kw.startswith("'"):
            kw = kw[1:-1]
        label = m.group("label")
        value = m.group("value")
        if value is None:
            value = normalize_text(kw) if not kw.startswith("$") else kw
        return Terminal(keyword=kw, slot_label=label, slot_value=value)
    if not _NT_RE.match(text):
        raise GrammarError(f"{where}: {text!r} is neither NONTERMINAL nor keyword@label")
    return NonTerminal(text)


@dataclass
class Grammar:
    rules: dict[str, list[Production]]
    start_symbols: list[str]
    intents: dict[str, str] = field(default_factory=dict)  # start NT -> intent
    slot_fragments: dict[str, str] = field(default_factory=dict)  # slot -> NT
    feature_constraints: list[tuple[str, str]] = field(
        default_factory=lambda: [("count-unit", "$intake_unit pluralizes after count != 1")])
    max_depth: int = 40

    def __post_init__(self):
        self._emits_cache: Optional[dict[str, frozenset[str]]] = None

    def validate(self):
        if not self.rules:
            raise GrammarError("grammar has no rules")
        for nt, prods in self.rules.items():
            if not prods:
                raise GrammarError(f"nonterminal {nt} has zero productions")
            for prod in prods:
                if not prod:
                    raise GrammarError(f"{nt}: empty production not allowed")
                for sym in prod:
                    if isinstance(sym, NonTerminal) and sym.name not in self.rules:
                        raise GrammarError(f"{nt}: undefined nonterminal {sym.name}")
        for s in self.start_symbols:
            if s not in self.rules:
                raise GrammarError(f"start symbol {s} is not defined")
        for slot, nt in self.slot_fragments.items():
            if nt not in self.rules:
                raise GrammarError(f"%slot {slot}: undefined nonterminal {nt}")
        self._check_productive()

    def _check_productive(self):
        """Depth probe: every nonterminal must derive a finite string."""
        productive: set[str] = set()
        changed = True
        while changed:
            changed = False
            for nt, prods in self.rules.items():
                if nt in productive:
                    continue
                for prod in prods:
                    if all(isinstance(s, Terminal) or s.name in productive for s in prod):
                        productive.add(nt)
                        changed = True
                        break
        dead = set(self.rules) - productive
        if dead:
            raise GrammarError(
                f"unbounded recursion: no finite derivation for {', '.join(sorted(dead))}")

    def emits(self, nt: str) -> frozenset[str]:
        """Slot labels derivable from a nonterminal (excluding O)."""
        if self._emits_cache is None:
            cache: dict[str, set[str]] = {name: set() for name in self.rules}
            changed = True
            while changed:
                changed = False
                for name, prods in self.rules.items():
                    for prod in prods:
                        for sym in prod:
                            add = ({sym.slot_label} - {"O"}) if isinstance(sym, Terminal) \
                                else cache[sym.name]
                            if not add <= cache[name]:
                                cache[name] |= add
                                changed = True
            self._emits_cache = {k: frozenset(v) for k, v in cache.items()}
        return self._emits_cache[nt]

    def reachable_slots(self) -> frozenset[str]:
        out: set[str] = set()
        for s in self.start_symbols:
            out |= self.emits(s)
        for nt in self.slot_fragments.values():
            out |= self.emits(nt)
        return frozenset(out)

    def fragment_for(self, slot: str) -> str:
        """Nonterminal used as top-level expansion when boosting a slot."""
        if slot in self.slot_fragments:
            return self.slot_fragments[slot]
        candidates = [nt for nt in self.rules if slot in self.emits(nt)]
        if not candidates:
            raise GrammarError(f"slot {slot} is unreachable in this grammar")
        # most specific fragment: fewest co-emitted slots, stable name order
        return min(candidates, key=lambda nt: (len(self.emits(nt)), nt))

    def tier_counts(self) -> dict[str, int]:
        """Production counts per tier: high-level, intermediate, terminal."""
        high = inter = term = 0
        for nt, prods in self.rules.items():
            for prod in prods:
                if nt in self.start_symbols:
                    high += 1
                elif all(isinstance(s, Terminal) for s in prod):
                    term += 1
                else:
                    inter += 1
        return {"high": high, "intermediate": inter, "terminal": term}

    def intent_for(self, start: str) -> str:
        return self.intents.get(start, "medical_prescription")


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read(), source=str(path))


def parse_grammar(text: str, source: str = "<grammar>") -> Grammar:
    rules: dict[str, list[Production]] = {}
    starts: list[str] = []
    intents: dict[str, str] = {}
    slot_fragments: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if line.startswith("%start"):
            starts.extend(line.split()[1:])
            continue
        if line.startswith("%intent"):
            parts = line.split()
            if len(parts) != 3:
                raise GrammarError(f"{where}: %intent expects NT INTENT")
            intents[parts[1]] = parts[2]
            continue
        if line.startswith("%slot"):
            parts = line.split()
            if len(parts) != 3:
                raise GrammarError(f"{where}: %slot expects SLOT NT")
            slot_fragments[parts[1]] = parts[2]
            continue
        if "->" not in line:
            raise GrammarError(f"{where}: expected 'NT -> production'")
        lhs, rhs = line.split("->", 1)
        lhs = lhs.strip()
        if not _NT_RE.match(lhs):
            raise GrammarError(f"{where}: bad nonterminal name {lhs!r}")
        prods = rules.setdefault(lhs, [])
        for alt in _split_alternatives(rhs, where):
            symbols = tuple(_parse_symbol(tok, where) for tok in alt)
            prods.append(symbols)
    g = Grammar(rules=rules, start_symbols=starts, intents=intents,
                slot_fragments=slot_fragments)
    g.validate()
    return g


def _split_alternatives(rhs: str, where: str) -> Iterable[list[str]]:
    """Split on | and whitespace, keeping quoted keywords intact."""
    alts: list[list[str]] = [[]]
    for tok in re.findall(r"'[^']*'@\S+|'[^']*'|\||\S+", rhs.strip()):
        if tok == "|":
            alts.append([])
        else:
            alts[-1].append(tok)
    for alt in alts:
        if not alt:
            raise GrammarError(f"{where}: empty alternative")
    return alts


# --- expansion ----------------------------------------------------------------

_NUM_ONE = {"1", "one"}


def _pluralize(word: str) -> str:
    if word.endswith("y"):
        return word[:-1] + "ies"
    if word.endswith(("s", "x", "ch", "sh")):
        return word + "es"
    return word + "s"


def _record_surface(record: DrugRecord, fld: str) -> tuple[str, str]:
    """(surface text, normalized slot value) for a placeholder field."""
    if fld == "brand":
        v = record.brand_name
        return v.lower(), normalize_text(v)
    if fld == "inn":
        v = record.inn
        return v.lower(), normalize_text(v)
    if fld == "strength":
        v = format_decimal(record.dose_value)
        return v, v
    if fld == "strength_unit":
        return record.dose_unit, normalize_text(record.dose_unit)
    if fld == "form":
        return record.form, normalize_text(record.form)
    if fld == "route":
        return record.route, normalize_text(record.route)
    if fld == "intake_unit":
        unit = intake_unit_for_form(record.form)
        return unit, unit
    raise GrammarError(f"unknown placeholder ${fld}")


class _Expander:
    def __init__(self, grammar: Grammar, db: DrugDatabase, rng: np.random.Generator,
                 require_slot: Optional[str] = None):
        self.g = grammar
        self.db = db
        self.rng = rng
        self.require = require_slot
        self.emitted: set[str] = set()
        self.words: list[str] = []
        self.labels: list[str] = []
        self.last_count: Optional[str] = None
        if not db.records:
            raise GrammarError("cannot expand against an empty drug database")
        self.record = db.records[int(rng.integers(0, len(db.records)))]

    def run(self, start: str) -> tuple[list[str], list[str]]:
        self._expand(NonTerminal(start), depth=0)
        return self.words, self.labels

    def _needs(self) -> bool:
        return self.require is not None and self.require not in self.emitted

    def _expand(self, sym: Symbol, depth: int):
        if depth > self.g.max_depth:
            raise DepthLimitExceeded(f"depth limit {self.g.max_depth} exceeded")
        if isinstance(sym, Terminal):
            self._emit(sym)
            return
        prods = self.g.rules[sym.name]
        if self._needs():
            # constrained walk: stay on productions that can still reach the
            # required slot; children are filtered recursively the same way
            viable = [p for p in prods if self._prod_can_emit(p, self.require)]
            if viable:
                prods = viable
        prod = prods[int(self.rng.integers(0, len(prods)))]
        for child in prod:
            self._expand(child, depth + 1)

    def _sym_can_emit(self, sym: Symbol, slot: Optional[str]) -> bool:
        if slot is None:
            return False
        if isinstance(sym, Terminal):
            return sym.slot_label == slot
        return slot in self.g.emits(sym.name)

    def _prod_can_emit(self, prod: Production, slot: str) -> bool:
        return any(self._sym_can_emit(s, slot) for s in prod)

    def _emit(self, term: Terminal):
        fld = term.placeholder
        if fld is not None:
            surface, value = _record_surface(self.record, fld)
            if fld == "intake_unit" and self.last_count is not None \
                    and self.last_count not in _NUM_ONE:
                surface = _pluralize(surface)
        else:
            surface, value = term.keyword, term.slot_value
        toks = tokenize(surface)
        if not toks:
            raise GrammarError(f"terminal {term.keyword!r} produces no tokens")
        label = term.slot_label
        for i, tok in enumerate(toks):
            self.words.append(tok.text)
            if label == "O":
                self.labels.append("O")
            else:
                self.labels.append(("B-" if i == 0 else "I-") + label)
        if toks[-1].is_numeric:
            self.last_count = toks[-1].text
        elif label != "O":
            self.last_count = None
        if label != "O":
            self.emitted.add(label)


def expand(g: Grammar, start: str, db: DrugDatabase, rng_seed: int,
           require_slot: Optional[str] = None,
           rng: Optional[np.random.Generator] = None) -> AnnotatedUtterance:
    """Sample one derivation; identical seeds give identical utterances."""
    if start not in g.rules:
        raise GrammarError(f"start symbol {start} is not defined")
    local_rng = rng if rng is not None else np.random.default_rng(rng_seed)
    ex = _Expander(g, db, local_rng, require_slot=require_slot)
    words, labels = ex.run(start)
    return utterance_from_tokens(
        words, labels, g.intent_for(start),
        utterance_id=f"gen-{start.lower()}-{rng_seed}")


# --- membership oracle ---------------------------------------------------------

class GrammarParser:
    """Chart recognizer over token+label sequences for the same grammar.

    Placeholders match any value the database can supply for that field
    (with the plural agreement variants), so every expander output is in
    the recognized language.
    """

    def __init__(self, g: Grammar, db: DrugDatabase):
        self.g = g
        self.db = db
        self._surface_cache: dict[str, list[list[Token]]] = {}

    def _placeholder_surfaces(self, fld: str) -> list[list[Token]]:
        if fld in self._surface_cache:
            return self._surface_cache[fld]
        out: list[list[Token]] = []
        seen = set()

        def add(text: str):
            toks = tokenize(text)
            key = tuple(t.normalized for t in toks)
            if toks and key not in seen:
                seen.add(key)
                out.append(toks)

        for rec in self.db.records:
            if fld == "brand":
                add(rec.brand_name)
            elif fld == "inn":
                add(rec.inn)
            elif fld == "strength":
                add(format_decimal(rec.dose_value))
            elif fld == "strength_unit":
                add(rec.dose_unit)
            elif fld == "form":
                add(rec.form)
            elif fld == "route":
                add(rec.route)
            elif fld == "intake_unit":
                unit = intake_unit_for_form(rec.form)
                add(unit)
                add(_pluralize(unit))
        self._surface_cache[fld] = out
        return out

    def accepts(self, utt: AnnotatedUtterance, start: str) -> bool:
        words = [t.normalized for t in utt.tokens]
        labels = utt.bio_labels
        n = len(words)
        memo: dict[tuple, frozenset[int]] = {}

        def match_terminal(term: Terminal, pos: int) -> frozenset[int]:
            fld = term.placeholder
            surfaces = self._placeholder_surfaces(fld) if fld else [tokenize(term.keyword)]
            ends = set()
            for toks in surfaces:
                L = len(toks)
                if pos + L > n:
                    continue
                if [t.normalized for t in toks] != words[pos:pos + L]:
                    continue
                want = (["O"] * L if term.slot_label == "O"
                        else [f"B-{term.slot_label}"] + [f"I-{term.slot_label}"] * (L - 1))
                if labels[pos:pos + L] == want:
                    ends.add(pos + L)
            return frozenset(ends)

        def match(sym: Symbol, pos: int) -> frozenset[int]:
            key = (sym, pos)
            if key in memo:
                return memo[key]
            if isinstance(sym, Terminal):
                res = match_terminal(sym, pos)
            else:
                acc: set[int] = set()
                for prod in self.g.rules[sym.name]:
                    fronts = {pos}
                    for child in prod:
                        nxt: set[int] = set()
                        for p in fronts:
                            nxt |= match(child, p)
                        fronts = nxt
                        if not fronts:
                            break
                    acc |= fronts
                res = frozenset(acc)
            memo[key] = res
            return res

        return n in match(NonTerminal(start), 0)

    def accepts_any_start(self, utt: AnnotatedUtterance) -> bool:
        starts = list(self.g.start_symbols) + sorted(set(self.g.slot_fragments.values()))
        return any(self.accepts(utt, s) for s in starts)
