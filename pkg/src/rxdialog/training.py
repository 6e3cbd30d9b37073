"""End-to-end training corpus assembly and model training entry points.

The NLU corpus mixes three generated sources: the balanced prescription set
(seed corpus + balancing loop output), dialogue-act utterances (confirm,
negate, correct) and an out-of-domain small-talk pool for the none intent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import (
    Grammar,
    expand,
    generate_balanced,
    load_default_grammar,
    load_seed_corpus,
)
from .drugdb import DrugDatabase
from .nlu import (
    AnnotatedUtterance,
    CrfModel,
    Featurizer,
    IntentModel,
    crf_train,
    gazetteers_from_db,
    intent_train,
)
from .taxonomy import SlotSchema

SMALLTALK_POOL_SIZE = 1400
ACT_SAMPLES_EACH = 400


@dataclass
class NluCorpus:
    train: list[AnnotatedUtterance]
    test: list[AnnotatedUtterance]


def generate_intent_pool(g: Grammar, db: DrugDatabase, start: str, n: int,
                         rng: np.random.Generator) -> list[AnnotatedUtterance]:
    out = []
    for i in range(n):
        utt = expand(g, start, db, rng_seed=i, rng=rng)
        utt.utterance_id = f"{start.lower()}-{i:05d}"
        out.append(utt)
    return out


def build_nlu_corpus(db: DrugDatabase, schema: SlotSchema,
                     g: Optional[Grammar] = None,
                     seed_corpus: Optional[list[AnnotatedUtterance]] = None,
                     min_count_per_slot: int = 120,
                     smalltalk: int = SMALLTALK_POOL_SIZE,
                     act_samples: int = ACT_SAMPLES_EACH,
                     test_fraction: float = 0.1,
                     rng_seed: int = 0) -> NluCorpus:
    """Assemble and split the full NLU training corpus, deterministically."""
    g = g or load_default_grammar()
    seed_corpus = seed_corpus if seed_corpus is not None else load_seed_corpus()
    rng = np.random.default_rng(rng_seed)

    balanced = generate_balanced(g, seed_corpus, db,
                                 {"min_count_per_slot": min_count_per_slot,
                                  "max_total": 10000},
                                 rng_seed=rng_seed, schema=schema)
    corpus: list[AnnotatedUtterance] = list(seed_corpus) + balanced.generated
    for start, n in (("CONFIRM", act_samples), ("NEGATE", act_samples),
                     ("CORRECT", act_samples), ("SMALLTALK", smalltalk)):
        corpus.extend(generate_intent_pool(g, db, start, n, rng))

    order = rng.permutation(len(corpus))
    n_test = max(1, int(round(test_fraction * len(corpus))))
    test_idx = set(order[:n_test].tolist())
    train = [corpus[i] for i in range(len(corpus)) if i not in test_idx]
    test = [corpus[i] for i in sorted(test_idx)]
    return NluCorpus(train=train, test=test)


def train_nlu(corpus: NluCorpus, db: DrugDatabase, schema: SlotSchema,
              crf_hp: Optional[dict] = None,
              intent_hp: Optional[dict] = None) -> tuple[CrfModel, IntentModel]:
    featurizer = Featurizer(gazetteers=gazetteers_from_db(db))
    crf = crf_train(corpus.train, crf_hp, featurizer=featurizer,
                    labels=schema.bio_labels())
    intent_model = intent_train(corpus.train, intent_hp)
    return crf, intent_model
