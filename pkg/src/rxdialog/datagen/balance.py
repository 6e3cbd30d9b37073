"""Class-balance-driven corpus generation.

The loop recomputes the slot-span distribution over seed plus generated
utterances, picks the most underrepresented reachable slot, and expands that
slot's fragment nonterminal as a top-level rule until every reachable slot
meets the minimum count (or the generation budget runs out).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..drugdb import DrugDatabase
from ..nlu.tokens import AnnotatedUtterance
from .grammar import Grammar, expand


def slot_distribution(corpus: Sequence[AnnotatedUtterance]) -> dict[str, int]:
    """Exact span counts (number of B- tags) per slot label."""
    counts: Counter[str] = Counter()
    for utt in corpus:
        for lab in utt.bio_labels:
            if lab.startswith("B-"):
                counts[lab[2:]] += 1
    return dict(counts)


@dataclass
class BalanceReport:
    generated: list[AnnotatedUtterance]
    final_counts: dict[str, int]
    reachable: frozenset[str]
    unreachable_slots: list[str]
    exhausted_budget: bool = False

    @property
    def max_min_ratio(self) -> float:
        vals = [self.final_counts.get(s, 0) for s in self.reachable]
        if not vals or min(vals) == 0:
            return float("inf") if vals else 0.0
        return max(vals) / min(vals)


def generate_balanced(g: Grammar, seed_corpus: Sequence[AnnotatedUtterance],
                      db: DrugDatabase, target: Optional[dict] = None,
                      rng_seed: int = 0,
                      schema=None) -> BalanceReport:
    """Generate utterances until every reachable slot has >= min_count spans.

    Returns only the generated set; final_counts covers seed plus generated.
    """
    params = {"min_count_per_slot": 120, "max_total": 10000}
    if target:
        params.update(target)
    min_count = params["min_count_per_slot"]
    max_total = params["max_total"]

    reachable = set(g.reachable_slots())
    unreachable: list[str] = []
    if schema is not None:
        unreachable = [n for n in schema.label_names if n not in reachable]

    counts = Counter(slot_distribution(seed_corpus))
    for slot in reachable:
        counts.setdefault(slot, 0)

    order = {s: i for i, s in enumerate(schema.label_names)} if schema is not None else {}
    rng = np.random.default_rng(rng_seed)
    generated: list[AnnotatedUtterance] = []
    exhausted = False
    serial = 0
    while True:
        deficient = [s for s in reachable if counts[s] < min_count]
        if not deficient:
            break
        if len(generated) >= max_total:
            exhausted = True
            break
        slot = min(deficient, key=lambda s: (counts[s], order.get(s, 0), s))
        start = g.fragment_for(slot)
        utt = expand(g, start, db, rng_seed=serial, require_slot=slot, rng=rng)
        utt.utterance_id = f"bal-{serial:05d}-{slot}"
        serial += 1
        generated.append(utt)
        for lab in utt.bio_labels:
            if lab.startswith("B-"):
                counts[lab[2:]] += 1

    final = {s: c for s, c in counts.items() if c > 0 or s in reachable}
    return BalanceReport(generated=generated, final_counts=final,
                         reachable=frozenset(reachable),
                         unreachable_slots=unreachable, exhausted_budget=exhausted)
