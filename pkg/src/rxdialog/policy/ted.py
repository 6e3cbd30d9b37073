"""Learned dialogue policy: attention over turn-feature embeddings, actions
scored by dot product in a shared 20-dimensional embedding space.

Architecture (legacy sizes kept deliberately small): feature embeddings of
width 128 summed per turn plus learned position embeddings, one causal
self-attention layer with 4 heads, a linear projection to the 20-d dialogue
embedding, and an action embedding table.  Training minimizes, per time
step, -(S+ - log(e^{S+} + sum e^{S-})) over sampled negative actions,
averaged over the steps of each dialogue; gradients are computed
analytically (hand-derived backprop, verified against finite differences).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .actions import ACTION_INVENTORY

D_MODEL = 128
N_HEADS = 4
D_HEAD = D_MODEL // N_HEADS
EMBED_DIM = 20


class TedError(ValueError):
    pass


def ted_loss(s_plus: float, s_negatives: Sequence[float]) -> float:
    """Per-step loss: -(S+ - log(e^{S+} + sum e^{S-})), max-shift stabilized.

    Equals log(1 + sum e^{S- - S+}): always >= 0, and exactly 0 with no
    negatives.
    """
    scores = [float(s_plus)] + [float(s) for s in s_negatives]
    m = max(scores)
    lse = m + math.log(sum(math.exp(s - m) for s in scores))
    return -(float(s_plus) - lse)


# lr 0.3: plain SGD at smaller rates cannot reach usable next-action
# accuracy within the 20-epoch budget on scenario-scale data
DEFAULT_CONFIG = {
    "epochs": 20,
    "batch_start": 32,
    "batch_end": 64,
    "lr": 0.3,
    "clip_norm": 5.0,
    "dropout": 0.1,
    "history": 10,
    "n_negatives": 10,
    "seed": 0,
}


@dataclass
class TedModel:
    vocab: dict[str, int]
    actions: tuple[str, ...]
    embed: np.ndarray  # (V, 128) feature embeddings
    pos: np.ndarray  # (H, 128) position embeddings
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray  # (128, 128) each
    wd: np.ndarray  # (128, 20) dialogue projection
    action_embed: np.ndarray  # (n_actions, 20)
    config: dict = field(default_factory=lambda: dict(DEFAULT_CONFIG))
    training_log: list[float] = field(default_factory=list)

    def __post_init__(self):
        for name in ("embed", "pos", "wq", "wk", "wv", "wo", "wd", "action_embed"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise TedError(f"non-finite weights in {name}")
        self._action_ix = {a: i for i, a in enumerate(self.actions)}

    @property
    def history(self) -> int:
        return int(self.config.get("history", 10))

    def action_index(self, action: str) -> int:
        try:
            return self._action_ix[action]
        except KeyError:
            raise TedError(f"unknown action name {action!r}") from None

    def params(self) -> dict[str, np.ndarray]:
        return {"embed": self.embed, "pos": self.pos, "wq": self.wq, "wk": self.wk,
                "wv": self.wv, "wo": self.wo, "wd": self.wd,
                "action_embed": self.action_embed}

    def save(self, path):
        payload = {
            "vocab": sorted(self.vocab, key=self.vocab.get),
            "actions": list(self.actions),
            "config": self.config,
            "training_log": self.training_log,
            "arrays": {k: v.tolist() for k, v in self.params().items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("RXTED1\n")
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "TedModel":
        with open(path, encoding="utf-8") as fh:
            magic = fh.readline().strip()
            if magic != "RXTED1":
                raise TedError(f"{path}: bad magic {magic!r}, expected RXTED1")
            payload = json.load(fh)
        arrays = {k: np.asarray(v, dtype=float) for k, v in payload["arrays"].items()}
        return cls(
            vocab={f: i for i, f in enumerate(payload["vocab"])},
            actions=tuple(payload["actions"]),
            config=dict(payload["config"]),
            training_log=list(payload.get("training_log", [])),
            embed=arrays["embed"], pos=arrays["pos"], wq=arrays["wq"],
            wk=arrays["wk"], wv=arrays["wv"], wo=arrays["wo"], wd=arrays["wd"],
            action_embed=arrays["action_embed"],
        )


def new_model(vocab: dict[str, int], actions: Sequence[str] = ACTION_INVENTORY,
              config: Optional[dict] = None, seed: int = 0) -> TedModel:
    cfg = dict(DEFAULT_CONFIG)
    if config:
        cfg.update(config)
    rng = np.random.default_rng(seed)
    v = max(len(vocab), 1)
    h = int(cfg["history"])

    def mat(n, m, scale):
        return rng.normal(0.0, scale, size=(n, m))

    return TedModel(
        vocab=dict(vocab),
        actions=tuple(actions),
        embed=mat(v, D_MODEL, 0.1),
        pos=mat(h, D_MODEL, 0.1),
        wq=mat(D_MODEL, D_MODEL, 1.0 / math.sqrt(D_MODEL)),
        wk=mat(D_MODEL, D_MODEL, 1.0 / math.sqrt(D_MODEL)),
        wv=mat(D_MODEL, D_MODEL, 1.0 / math.sqrt(D_MODEL)),
        wo=mat(D_MODEL, D_MODEL, 1.0 / math.sqrt(D_MODEL)),
        wd=mat(D_MODEL, EMBED_DIM, 1.0 / math.sqrt(D_MODEL)),
        action_embed=mat(len(actions), EMBED_DIM, 0.1),
        config=cfg,
    )


def _feature_matrix(model: TedModel, history: Sequence[frozenset]) -> list[np.ndarray]:
    """Active vocabulary indices per history step (unknown features dropped)."""
    rows = []
    for feats in history:
        ids = sorted(model.vocab[f] for f in feats if f in model.vocab)
        rows.append(np.asarray(ids, dtype=np.intp))
    return rows


@dataclass
class _Forward:
    """Intermediate activations kept for the backward pass."""

    ids: list[np.ndarray]
    X: np.ndarray
    drop_mask: Optional[np.ndarray]
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    attn: list[np.ndarray]  # per head (T, T) softmax weights
    M: np.ndarray  # concatenated heads (T, 128)
    Z: np.ndarray  # residual output (T, 128)
    Hd: np.ndarray  # dialogue embeddings (T, 20)


def _forward(model: TedModel, history: Sequence[frozenset],
             drop_mask: Optional[np.ndarray] = None) -> _Forward:
    if not history:
        raise TedError("history must contain at least one turn")
    if len(history) > model.history:
        history = history[-model.history:]
    ids = _feature_matrix(model, history)
    T = len(ids)
    X = np.zeros((T, D_MODEL))
    for t, row in enumerate(ids):
        if len(row):
            X[t] = model.embed[row].sum(axis=0)
        X[t] += model.pos[t]
    if drop_mask is not None:
        X = X * drop_mask
    Q, K, V = X @ model.wq, X @ model.wk, X @ model.wv
    scale = 1.0 / math.sqrt(D_HEAD)
    attn = []
    M = np.zeros((T, D_MODEL))
    causal = np.tril(np.ones((T, T), dtype=bool))
    for h in range(N_HEADS):
        sl = slice(h * D_HEAD, (h + 1) * D_HEAD)
        s = (Q[:, sl] @ K[:, sl].T) * scale
        s = np.where(causal, s, -np.inf)
        s = s - s.max(axis=1, keepdims=True)
        w = np.exp(s)
        w /= w.sum(axis=1, keepdims=True)
        attn.append(w)
        M[:, sl] = w @ V[:, sl]
    Z = X + M @ model.wo
    Hd = Z @ model.wd
    return _Forward(ids=ids, X=X, drop_mask=drop_mask, Q=Q, K=K, V=V,
                    attn=attn, M=M, Z=Z, Hd=Hd)


def ted_similarity(model: TedModel, history: Sequence[frozenset]) -> tuple[np.ndarray, dict[str, float]]:
    """Dialogue embedding of the last step and its score for every action."""
    fwd = _forward(model, history)
    h_dialogue = fwd.Hd[-1]
    scores = model.action_embed @ h_dialogue
    return h_dialogue, {a: float(scores[i]) for i, a in enumerate(model.actions)}


def ted_select(model: TedModel, history: Sequence[frozenset]) -> list[str]:
    """Actions ranked by descending similarity; name order breaks ties."""
    _, scores = ted_similarity(model, history)
    return [a for a, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]


def _zero_grads(model: TedModel) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params().items()}


def _backward(model: TedModel, fwd: _Forward, dHd: np.ndarray,
              grads: dict[str, np.ndarray]):
    """Accumulate gradients for one dialogue given dLoss/dHd."""
    X, Q, K, V, M, Z = fwd.X, fwd.Q, fwd.K, fwd.V, fwd.M, fwd.Z
    grads["wd"] += Z.T @ dHd
    dZ = dHd @ model.wd.T
    dX = dZ.copy()
    dM = dZ @ model.wo.T
    grads["wo"] += M.T @ dZ
    scale = 1.0 / math.sqrt(D_HEAD)
    dQ = np.zeros_like(Q)
    dK = np.zeros_like(K)
    dV = np.zeros_like(V)
    for h in range(N_HEADS):
        sl = slice(h * D_HEAD, (h + 1) * D_HEAD)
        w = fwd.attn[h]
        dMh = dM[:, sl]
        dV[:, sl] += w.T @ dMh
        dw = dMh @ V[:, sl].T
        ds = w * (dw - (dw * w).sum(axis=1, keepdims=True))
        dQ[:, sl] += (ds @ K[:, sl]) * scale
        dK[:, sl] += (ds.T @ Q[:, sl]) * scale
    grads["wq"] += X.T @ dQ
    grads["wk"] += X.T @ dK
    grads["wv"] += X.T @ dV
    dX += dQ @ model.wq.T + dK @ model.wk.T + dV @ model.wv.T
    if fwd.drop_mask is not None:
        dX = dX * fwd.drop_mask
    grads["pos"][:len(fwd.ids)] += dX
    for t, row in enumerate(fwd.ids):
        if len(row):
            np.add.at(grads["embed"], row, dX[t])


def dialogue_loss_grads(model: TedModel, history: Sequence[frozenset],
                        gold_actions: Sequence[Optional[str]],
                        negatives: Sequence[Sequence[int]],
                        grads: Optional[dict[str, np.ndarray]] = None,
                        drop_mask: Optional[np.ndarray] = None) -> float:
    """Loss (averaged over supervised steps) and, optionally, gradients.

    gold_actions aligns with history; None marks steps without supervision.
    negatives[t] holds sampled negative action indices for step t.
    """
    fwd = _forward(model, history, drop_mask=drop_mask)
    T = fwd.Hd.shape[0]
    supervised = [t for t in range(T) if gold_actions[t] is not None]
    if not supervised:
        return 0.0
    dHd = np.zeros_like(fwd.Hd)
    dA = np.zeros_like(model.action_embed) if grads is not None else None
    total = 0.0
    inv = 1.0 / len(supervised)
    for t in supervised:
        gold_ix = model.action_index(gold_actions[t])
        neg_ix = [i for i in negatives[t] if i != gold_ix]
        chosen = [gold_ix] + list(neg_ix)
        h = fwd.Hd[t]
        scores = model.action_embed[chosen] @ h
        m = scores.max()
        p = np.exp(scores - m)
        p /= p.sum()
        total += -(scores[0] - (m + math.log(np.exp(scores - m).sum())))
        if grads is not None:
            dscores = p.copy()
            dscores[0] -= 1.0
            dscores *= inv
            dHd[t] += dscores @ model.action_embed[chosen]
            np.add.at(dA, chosen, np.outer(dscores, h))
    if grads is not None:
        grads["action_embed"] += dA
        _backward(model, fwd, dHd, grads)
    return total * inv


def _clip(grads: dict[str, np.ndarray], max_norm: float):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor


@dataclass
class TedSession:
    """One training dialogue: per-step features and gold system actions."""

    features: list[frozenset]
    actions: list[Optional[str]]

    def __post_init__(self):
        if len(self.features) != len(self.actions):
            raise TedError("features and actions must align")


def build_vocab(sessions: Sequence[TedSession]) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for sess in sessions:
        for feats in sess.features:
            for f in sorted(feats):
                if f not in vocab:
                    vocab[f] = len(vocab)
    return vocab


def ted_train(sessions: Sequence[TedSession], config: Optional[dict] = None) -> TedModel:
    """Mini-batch gradient descent; batch size grows linearly over epochs."""
    if not sessions:
        raise TedError("no training sessions")
    cfg = dict(DEFAULT_CONFIG)
    if config:
        cfg.update(config)
    for sess in sessions:
        for a in sess.actions:
            if a is not None and a not in ACTION_INVENTORY:
                raise TedError(f"unknown action name {a!r} in training session")

    vocab = build_vocab(sessions)
    model = new_model(vocab, config=cfg, seed=cfg["seed"])
    rng = np.random.default_rng(cfg["seed"])
    n = len(sessions)
    n_act = len(model.actions)
    k_neg = min(cfg["n_negatives"], n_act - 1)
    epochs = int(cfg["epochs"])
    for epoch in range(epochs):
        frac = epoch / max(epochs - 1, 1)
        batch = int(round(cfg["batch_start"] + frac * (cfg["batch_end"] - cfg["batch_start"])))
        order = rng.permutation(n)
        epoch_loss = 0.0
        quantum = 0
        for lo in range(0, n, batch):
            idx = order[lo:lo + batch]
            grads = _zero_grads(model)
            batch_loss = 0.0
            for i in idx:
                sess = sessions[i]
                hist = sess.features[-model.history:]
                acts = sess.actions[-model.history:]
                negs = []
                for a in acts:
                    if a is None:
                        negs.append([])
                        continue
                    gold_ix = model.action_index(a)
                    pool = [j for j in range(n_act) if j != gold_ix]
                    pick = rng.choice(len(pool), size=k_neg, replace=False)
                    negs.append([pool[j] for j in pick])
                mask = None
                if cfg["dropout"] > 0:
                    keep = 1.0 - cfg["dropout"]
                    mask = (rng.random((len(hist), D_MODEL)) < keep) / keep
                batch_loss += dialogue_loss_grads(model, hist, acts, negs,
                                                  grads=grads, drop_mask=mask)
            for g in grads.values():
                g /= len(idx)
            _clip(grads, cfg["clip_norm"])
            for name, p in model.params().items():
                p -= cfg["lr"] * grads[name]
            epoch_loss += batch_loss
            quantum += len(idx)
        model.training_log.append(epoch_loss / max(quantum, 1))
    return model


def next_action_accuracy(model: TedModel, sessions: Sequence[TedSession]) -> float:
    """Fraction of supervised steps whose top-ranked action is the gold one."""
    hits = total = 0
    for sess in sessions:
        feats = sess.features[-model.history:]
        acts = sess.actions[-model.history:]
        fwd = _forward(model, feats)
        for t, gold in enumerate(acts):
            if gold is None:
                continue
            scores = model.action_embed @ fwd.Hd[t]
            pred = model.actions[int(np.argmax(scores))]
            total += 1
            hits += pred == gold
    return hits / total if total else 0.0
