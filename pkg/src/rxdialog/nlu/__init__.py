"""Utterance understanding: tokenizer, CRF slot tagger, intent classifier."""

from .tokens import (
    AnnotatedUtterance,
    BioError,
    Token,
    bio_slot,
    spans_from_bio,
    tokenize,
    utterance_from_tokens,
    validate_bio,
)
from .crf import (
    CrfError,
    CrfGradient,
    CrfModel,
    Featurizer,
    crf_decode,
    crf_loglik_grad,
    crf_train,
    gazetteers_from_db,
    log_partition,
    marginals,
    regularized_nll,
    sequence_score,
    smoothed,
)
from .intent import IntentError, IntentModel, intent_predict, intent_train
from .lexicon import lexicon_tag
from .pipeline import NluResult, frame_from_spans, nlu_parse, normalize_slot_value

__all__ = [
    "AnnotatedUtterance", "BioError", "Token", "bio_slot", "spans_from_bio",
    "tokenize", "utterance_from_tokens", "validate_bio",
    "CrfError", "CrfGradient", "CrfModel", "Featurizer", "crf_decode",
    "crf_loglik_grad", "crf_train", "gazetteers_from_db", "log_partition",
    "marginals", "regularized_nll", "sequence_score", "smoothed",
    "IntentError", "IntentModel", "intent_predict", "intent_train",
    "lexicon_tag",
    "NluResult", "frame_from_spans", "nlu_parse", "normalize_slot_value",
]
