"""Linear-chain CRF slot tagger: feature extraction, forward-backward, Viterbi.

Weights live in two dense arrays, emission (feature x label) and transition
(label x label), addressed through a string feature vocabulary.  All
sequence-level quantities are computed in log space.  Label bigrams that
would break the BIO scheme (I-x after anything but B-x/I-x, I-x at start)
are structurally excluded from both decoding and the partition function;
labels that do not look like BIO tags are unconstrained.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .tokens import AnnotatedUtterance, Token

NEG_INF = -1e30  # effective -inf that stays NaN-free through arithmetic

FEATURE_EXTRACTOR_VERSION = "wx2-affix2-gaz1"


class CrfError(ValueError):
    pass


def _logsumexp(a: np.ndarray, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(over="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(-1)[0])
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class Featurizer:
    """Per-position feature templates with optional gazetteer flags.

    Gazetteers map a flag name to a frozenset of normalized single words
    (e.g. drug names from the database, dose-unit words).
    """

    gazetteers: tuple[tuple[str, frozenset[str]], ...] = ()
    window: int = 2
    version: str = FEATURE_EXTRACTOR_VERSION

    def extract(self, tokens: Sequence[Token], t: int) -> list[str]:
        tok = tokens[t]
        feats = [
            "bias",
            f"w={tok.normalized}",
            f"lower={tok.text.lower()}",
            f"num={tok.is_numeric}",
            f"pre2={tok.normalized[:2]}",
            f"suf2={tok.normalized[-2:]}",
        ]
        for off in range(-self.window, self.window + 1):
            if off == 0:
                continue
            j = t + off
            if 0 <= j < len(tokens):
                feats.append(f"w[{off}]={tokens[j].normalized}")
            else:
                feats.append(f"w[{off}]=<pad>")
        for name, words in self.gazetteers:
            if tok.normalized in words:
                feats.append(f"gaz={name}")
            j = t - 1
            if j >= 0 and tokens[j].normalized in words:
                feats.append(f"gaz[-1]={name}")
        return feats


def gazetteers_from_db(db) -> tuple[tuple[str, frozenset[str]], ...]:
    """Gazetteer flags derived from a DrugDatabase: name words and unit words."""
    from ..drugdb import UNIT_SYNONYMS, INTAKE_UNIT_FORM_HINTS

    name_words = set()
    for key in db.all_names():
        name_words.update(key.split())
    strength_units = set()
    for syns in UNIT_SYNONYMS.values():
        for s in syns:
            strength_units.update(s.split())
    intake_units = set(INTAKE_UNIT_FORM_HINTS)
    return (
        ("drugname", frozenset(name_words)),
        ("strength-unit", frozenset(strength_units)),
        ("intake-unit", frozenset(intake_units)),
    )


def _bio_mask(labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """(start_ok[K], trans_ok[K,K]) boolean masks for the BIO scheme."""
    k = len(labels)
    start_ok = np.ones(k, dtype=bool)
    trans_ok = np.ones((k, k), dtype=bool)
    for j, lab in enumerate(labels):
        if lab.startswith("I-"):
            slot = lab[2:]
            start_ok[j] = False
            for i, prev in enumerate(labels):
                if prev != f"B-{slot}" and prev != f"I-{slot}":
                    trans_ok[i, j] = False
    return start_ok, trans_ok


@dataclass
class CrfModel:
    """Trained tagger: ordered labels, feature vocabulary, weight arrays."""

    labels: tuple[str, ...]
    feature_index: dict[str, int]
    emission: np.ndarray  # (n_features, n_labels)
    transition: np.ndarray  # (n_labels, n_labels)
    featurizer: Featurizer = field(default_factory=Featurizer)
    training_log: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.labels) == 0:
            raise CrfError("label set must be non-empty")
        if not np.all(np.isfinite(self.emission)) or not np.all(np.isfinite(self.transition)):
            raise CrfError("weights must be finite")
        self._label_ix = {lab: i for i, lab in enumerate(self.labels)}
        self._start_ok, self._trans_ok = _bio_mask(self.labels)

    @classmethod
    def from_weights(cls, labels: Sequence[str],
                     feature_weights: dict[tuple[str, str], float],
                     transition_weights: dict[tuple[str, str], float],
                     featurizer: Optional[Featurizer] = None) -> "CrfModel":
        """Build a model from explicit sparse weight maps (tests, toy models)."""
        labels = tuple(labels)
        ix = {lab: i for i, lab in enumerate(labels)}
        feats = sorted({f for f, _ in feature_weights})
        findex = {f: i for i, f in enumerate(feats)}
        emission = np.zeros((max(len(feats), 1), len(labels)))
        for (f, lab), w in feature_weights.items():
            emission[findex[f], ix[lab]] = w
        transition = np.zeros((len(labels), len(labels)))
        for (a, b), w in transition_weights.items():
            transition[ix[a], ix[b]] = w
        return cls(labels=labels, feature_index=findex, emission=emission,
                   transition=transition, featurizer=featurizer or Featurizer())

    @property
    def feature_weights(self) -> dict[tuple[str, str], float]:
        """Sparse view of the emission weights (materialized on demand)."""
        out = {}
        for f, fi in self.feature_index.items():
            for li, lab in enumerate(self.labels):
                w = self.emission[fi, li]
                if w != 0.0:
                    out[(f, lab)] = float(w)
        return out

    @property
    def transition_weights(self) -> dict[tuple[str, str], float]:
        out = {}
        for i, a in enumerate(self.labels):
            for j, b in enumerate(self.labels):
                if self.transition[i, j] != 0.0:
                    out[(a, b)] = float(self.transition[i, j])
        return out

    def label_index(self, label: str) -> int:
        try:
            return self._label_ix[label]
        except KeyError:
            raise CrfError(f"label {label!r} not in model label set") from None

    def feature_ids(self, tokens: Sequence[Token], t: int) -> np.ndarray:
        ids = [self.feature_index[f] for f in self.featurizer.extract(tokens, t)
               if f in self.feature_index]
        return np.asarray(ids, dtype=np.intp)

    def emissions_for(self, tokens: Sequence[Token]) -> np.ndarray:
        """(T, K) emission score matrix for a token sequence."""
        mat = np.zeros((len(tokens), len(self.labels)))
        for t in range(len(tokens)):
            ids = self.feature_ids(tokens, t)
            if len(ids):
                mat[t] = self.emission[ids].sum(axis=0)
        return mat

    def masked_transition(self) -> np.ndarray:
        mt = self.transition.copy()
        mt[~self._trans_ok] = NEG_INF
        return mt

    def masked_start(self, emissions_row: np.ndarray) -> np.ndarray:
        row = emissions_row.copy()
        row[~self._start_ok] = NEG_INF
        return row

    def save(self, path):
        payload = {
            "labels": list(self.labels),
            "features": sorted(self.feature_index, key=self.feature_index.get),
            "emission": self.emission.tolist(),
            "transition": self.transition.tolist(),
            "gazetteers": [[name, sorted(words)] for name, words in self.featurizer.gazetteers],
            "window": self.featurizer.window,
            "featurizer_version": self.featurizer.version,
            "training_log": self.training_log,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("RXNLU1\n")
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "CrfModel":
        with open(path, encoding="utf-8") as fh:
            magic = fh.readline().strip()
            if magic != "RXNLU1":
                raise CrfError(f"{path}: bad magic {magic!r}, expected RXNLU1")
            payload = json.load(fh)
        featurizer = Featurizer(
            gazetteers=tuple((name, frozenset(words)) for name, words in payload["gazetteers"]),
            window=payload["window"],
            version=payload["featurizer_version"],
        )
        return cls(
            labels=tuple(payload["labels"]),
            feature_index={f: i for i, f in enumerate(payload["features"])},
            emission=np.asarray(payload["emission"], dtype=float),
            transition=np.asarray(payload["transition"], dtype=float),
            featurizer=featurizer,
            training_log=list(payload.get("training_log", [])),
        )


def crf_decode(model: CrfModel, tokens: Sequence[Token]) -> tuple[list[str], float]:
    """Viterbi argmax label sequence; ties resolved by label order."""
    if not tokens:
        return [], 0.0
    emissions = model.emissions_for(tokens)
    k = len(model.labels)
    trans = model.masked_transition()
    score = model.masked_start(emissions[0])
    backptr = np.zeros((len(tokens), k), dtype=np.intp)
    for t in range(1, len(tokens)):
        cand = score[:, None] + trans  # (prev, cur)
        backptr[t] = np.argmax(cand, axis=0)  # first index wins ties
        score = cand[backptr[t], np.arange(k)] + emissions[t]
    best_last = int(np.argmax(score))
    best_score = float(score[best_last])
    path = [best_last]
    for t in range(len(tokens) - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return [model.labels[i] for i in path], best_score


def sequence_score(model: CrfModel, tokens: Sequence[Token], labels: Sequence[str]) -> float:
    """Unnormalized log score of one labeling (NEG_INF if mask-invalid)."""
    emissions = model.emissions_for(tokens)
    ids = [model.label_index(lab) for lab in labels]
    if not ids:
        return 0.0
    if not model._start_ok[ids[0]]:
        return NEG_INF
    total = emissions[0, ids[0]]
    for t in range(1, len(ids)):
        if not model._trans_ok[ids[t - 1], ids[t]]:
            return NEG_INF
        total += model.transition[ids[t - 1], ids[t]] + emissions[t, ids[t]]
    return float(total)


def log_partition(model: CrfModel, tokens: Sequence[Token]) -> float:
    """log Z via the forward recursion (0.0 for the empty sequence)."""
    if not tokens:
        return 0.0
    emissions = model.emissions_for(tokens)
    alpha = model.masked_start(emissions[0])
    trans = model.masked_transition()
    for t in range(1, len(tokens)):
        alpha = _logsumexp(alpha[:, None] + trans, axis=0) + emissions[t]
    return float(_logsumexp(alpha))


@dataclass
class CrfGradient:
    """Gradient of the log-likelihood w.r.t. both weight arrays."""

    emission: np.ndarray
    transition: np.ndarray

    def as_dict(self, model: CrfModel) -> dict:
        """Sparse (feature, label) / (label, label) view of nonzero entries."""
        out = {}
        feats = sorted(model.feature_index, key=model.feature_index.get)
        nz = np.argwhere(self.emission != 0.0)
        for fi, li in nz:
            out[(feats[fi], model.labels[li])] = float(self.emission[fi, li])
        nz = np.argwhere(self.transition != 0.0)
        for i, j in nz:
            out[("->", model.labels[i], model.labels[j])] = float(self.transition[i, j])
        return out


def _emissions_from_ids(model: CrfModel, feat_ids: list[np.ndarray]) -> np.ndarray:
    mat = np.zeros((len(feat_ids), len(model.labels)))
    for t, ids in enumerate(feat_ids):
        if len(ids):
            mat[t] = model.emission[ids].sum(axis=0)
    return mat


def _alpha_beta(model: CrfModel, emissions: np.ndarray):
    T, k = emissions.shape
    trans = model.masked_transition()
    alpha = np.zeros((T, k))
    alpha[0] = model.masked_start(emissions[0])
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    beta = np.zeros((T, k))
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return alpha, beta, float(_logsumexp(alpha[-1])), trans


def _grad_cached(model: CrfModel, feat_ids: list[np.ndarray], gold: list[int],
                 grad_e: np.ndarray, grad_t: np.ndarray) -> float:
    """Accumulate one example's gradient into grad_e/grad_t, return loglik."""
    emissions = _emissions_from_ids(model, feat_ids)
    alpha, beta, log_z, trans = _alpha_beta(model, emissions)
    T = len(feat_ids)
    with np.errstate(over="ignore"):
        for t in range(T):
            delta = -np.exp(alpha[t] + beta[t] - log_z)
            delta[gold[t]] += 1.0
            if len(feat_ids[t]):
                np.add.at(grad_e, feat_ids[t], delta)
        for t in range(1, T):
            pair = np.exp(alpha[t - 1][:, None] + trans
                          + (emissions[t] + beta[t])[None, :] - log_z)
            grad_t -= pair
            grad_t[gold[t - 1], gold[t]] += 1.0
    score = emissions[0, gold[0]]
    for t in range(1, T):
        score += model.transition[gold[t - 1], gold[t]] + emissions[t, gold[t]]
    return float(score - log_z)


def crf_loglik_grad(model: CrfModel, example: AnnotatedUtterance) -> tuple[float, CrfGradient]:
    """Exact log-likelihood and gradient via forward-backward."""
    grad_e = np.zeros_like(model.emission)
    grad_t = np.zeros_like(model.transition)
    if not example.tokens:
        return 0.0, CrfGradient(grad_e, grad_t)
    feat_ids = [model.feature_ids(example.tokens, t) for t in range(len(example.tokens))]
    gold = [model.label_index(lab) for lab in example.bio_labels]
    ll = _grad_cached(model, feat_ids, gold, grad_e, grad_t)
    return ll, CrfGradient(grad_e, grad_t)


def marginals(model: CrfModel, tokens: Sequence[Token]) -> np.ndarray:
    """(T, K) per-position label posteriors; rows sum to 1."""
    if not tokens:
        return np.zeros((0, len(model.labels)))
    emissions = model.emissions_for(tokens)
    trans = model.masked_transition()
    T, k = emissions.shape
    alpha = np.zeros((T, k))
    alpha[0] = model.masked_start(emissions[0])
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    beta = np.zeros((T, k))
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = _logsumexp(alpha[-1])
    with np.errstate(over="ignore"):
        return np.exp(alpha + beta - log_z)


def _build_vocab(data: Iterable[AnnotatedUtterance], featurizer: Featurizer) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for utt in data:
        for t in range(len(utt.tokens)):
            for f in featurizer.extract(utt.tokens, t):
                if f not in vocab:
                    vocab[f] = len(vocab)
    return vocab


DEFAULT_HP = {"l2": 0.1, "epochs": 30, "lr": 0.1, "seed": 0, "batch": 16, "lr_decay": 0.05}


def crf_train(data: list[AnnotatedUtterance], hp: Optional[dict] = None,
              featurizer: Optional[Featurizer] = None,
              labels: Optional[Sequence[str]] = None) -> CrfModel:
    """Mini-batch gradient ascent on the L2-regularized log-likelihood.

    The returned model's training_log holds the per-epoch regularized NLL
    over the full training set (computed after each epoch's updates).
    """
    if not data:
        raise CrfError("empty training set")
    params = dict(DEFAULT_HP)
    if hp:
        params.update(hp)
    featurizer = featurizer or Featurizer()

    if labels is None:
        seen = {"O"}
        for utt in data:
            seen.update(utt.bio_labels)
        labels = ["O"] + sorted(seen - {"O"})
    label_set = set(labels)
    for utt in data:
        bad = set(utt.bio_labels) - label_set
        if bad:
            raise CrfError(f"{utt.utterance_id or '<utt>'}: labels {sorted(bad)} "
                           "outside the declared label set")

    vocab = _build_vocab(data, featurizer)
    model = CrfModel(
        labels=tuple(labels),
        feature_index=vocab,
        emission=np.zeros((max(len(vocab), 1), len(labels))),
        transition=np.zeros((len(labels), len(labels))),
        featurizer=featurizer,
    )

    # Feature extraction is the hot path; do it once per example.
    cache = []
    for utt in data:
        feat_ids = [model.feature_ids(utt.tokens, t) for t in range(len(utt.tokens))]
        gold = [model.label_index(lab) for lab in utt.bio_labels]
        cache.append((feat_ids, gold))

    rng = np.random.default_rng(params["seed"])
    n = len(data)
    l2 = params["l2"]
    batch_size = params["batch"]
    for epoch in range(params["epochs"]):
        lr = params["lr"] / (1.0 + params["lr_decay"] * epoch)
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            ge = np.zeros_like(model.emission)
            gt = np.zeros_like(model.transition)
            for i in idx:
                feat_ids, gold = cache[i]
                if gold:
                    _grad_cached(model, feat_ids, gold, ge, gt)
            scale = 1.0 / len(idx)
            # the penalty's gradient is split across batches so one epoch
            # applies the full l2 * w decay exactly once
            decay = l2 * len(idx) / n
            model.emission += lr * (ge * scale - decay * model.emission)
            model.transition += lr * (gt * scale - decay * model.transition)
        model.training_log.append(_cached_nll(model, cache, l2))
    return model


def _penalty(model: CrfModel, l2: float, n: int) -> float:
    return 0.5 * l2 / n * (float(np.sum(model.emission ** 2))
                           + float(np.sum(model.transition ** 2)))


def _cached_nll(model: CrfModel, cache, l2: float) -> float:
    total = 0.0
    for feat_ids, gold in cache:
        if not gold:
            continue
        emissions = _emissions_from_ids(model, feat_ids)
        _, _, log_z, _ = _alpha_beta(model, emissions)
        score = emissions[0, gold[0]]
        for t in range(1, len(gold)):
            score += model.transition[gold[t - 1], gold[t]] + emissions[t, gold[t]]
        total += float(score) - log_z
    return -(total / len(cache)) + _penalty(model, l2, len(cache))


def regularized_nll(model: CrfModel, data: list[AnnotatedUtterance], l2: float) -> float:
    """Mean negative log-likelihood plus the (per-example) L2 penalty."""
    total = 0.0
    for utt in data:
        total += sequence_score(model, utt.tokens, utt.bio_labels) - log_partition(model, utt.tokens)
    return -(total / len(data)) + _penalty(model, l2, len(data))


def smoothed(values: Sequence[float], window: int = 3) -> list[float]:
    """Trailing-window moving average used for the loss-monotonicity check."""
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(sum(values[lo:i + 1]) / (i + 1 - lo))
    return out
