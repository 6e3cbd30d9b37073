"""Utterance intent classification: multinomial logistic regression over
bag-of-ngram features (unigrams + bigrams of normalized tokens)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .tokens import AnnotatedUtterance, Token


class IntentError(ValueError):
    pass


def intent_features(tokens: Sequence[Token]) -> list[str]:
    feats = ["bias"]
    words = [t.normalized for t in tokens]
    feats.extend(f"u:{w}" for w in words)
    feats.extend(f"b:{a}_{b}" for a, b in zip(words, words[1:]))
    if not words:
        feats.append("empty")
    if words and words[0].isdigit():
        feats.append("starts-numeric")
    return feats


@dataclass
class IntentModel:
    intents: tuple[str, ...]
    feature_index: dict[str, int]
    class_weights: np.ndarray  # (n_features, n_intents)

    def __post_init__(self):
        if not np.all(np.isfinite(self.class_weights)):
            raise IntentError("weights must be finite")

    def scores(self, tokens: Sequence[Token]) -> np.ndarray:
        z = np.zeros(len(self.intents))
        for f in intent_features(tokens):
            fi = self.feature_index.get(f)
            if fi is not None:
                z += self.class_weights[fi]
        return z

    def save(self, path):
        payload = {
            "intents": list(self.intents),
            "features": sorted(self.feature_index, key=self.feature_index.get),
            "weights": self.class_weights.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("RXNLU1\n")
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "IntentModel":
        with open(path, encoding="utf-8") as fh:
            magic = fh.readline().strip()
            if magic != "RXNLU1":
                raise IntentError(f"{path}: bad magic {magic!r}")
            payload = json.load(fh)
        return cls(
            intents=tuple(payload["intents"]),
            feature_index={f: i for i, f in enumerate(payload["features"])},
            class_weights=np.asarray(payload["weights"], dtype=float),
        )


DEFAULT_HP = {"l2": 1e-4, "epochs": 30, "lr": 0.5, "seed": 0, "batch": 32}


def intent_train(data: list[AnnotatedUtterance], hp: Optional[dict] = None) -> IntentModel:
    if not data:
        raise IntentError("empty training set")
    intents = sorted({u.intent for u in data})
    if len(intents) < 2:
        raise IntentError("training set covers a single intent class")
    params = dict(DEFAULT_HP)
    if hp:
        params.update(hp)

    vocab: dict[str, int] = {}
    rows = []
    for utt in data:
        ids = []
        for f in intent_features(utt.tokens):
            if f not in vocab:
                vocab[f] = len(vocab)
            ids.append(vocab[f])
        rows.append((np.asarray(sorted(set(ids)), dtype=np.intp), intents.index(utt.intent)))

    W = np.zeros((len(vocab), len(intents)))
    rng = np.random.default_rng(params["seed"])
    n = len(rows)
    for epoch in range(params["epochs"]):
        lr = params["lr"] / (1.0 + 0.1 * epoch)
        order = rng.permutation(n)
        for lo in range(0, n, params["batch"]):
            idx = order[lo:lo + params["batch"]]
            grad = np.zeros_like(W)
            for i in idx:
                ids, gold = rows[i]
                z = W[ids].sum(axis=0)
                z -= z.max()
                p = np.exp(z)
                p /= p.sum()
                delta = -p
                delta[gold] += 1.0
                np.add.at(grad, ids, delta)
            W += lr * (grad / len(idx) - params["l2"] * W)
    return IntentModel(intents=tuple(intents), feature_index=vocab, class_weights=W)


def intent_predict(model: IntentModel, tokens: Sequence[Token]) -> tuple[str, float]:
    """Argmax intent with its softmax probability."""
    z = model.scores(tokens)
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    best = int(np.argmax(p))
    return model.intents[best], float(p[best])
