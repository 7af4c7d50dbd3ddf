"""Feature attribution: which tokens of a single input drove a prediction.

Two methods over the same interface: plain gradient saliency ("G") and a
Riemann-midpoint path integral from a padding baseline ("IG"). Note that
with a mean-pooling encoder any scalar of the pooled vector has identical
gradients at every non-pad position, so G is position-uniform for the
bundled model; IG is the method that actually resolves positions here.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import PAD, RESERVED_TOKENS, Dataset, Instance
from .model import (EmbeddingScore, ModelSnapshot, forward_from_embeddings,
                    grads_to_embeddings, instance_embeddings, predict)


@dataclass(frozen=True)
class TokenSaliency:
    """Per-position scores for one serialized input."""

    instance_id: str
    method: str
    target_class: int
    tokens: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.scores):
            raise ValueError("token/score length mismatch")

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "method": self.method,
                "target_class": self.target_class,
                "tokens": list(self.tokens), "scores": list(self.scores)}


@dataclass(frozen=True)
class TokenFrequencyTable:
    """How often each token made an instance-level top-k across a dataset."""

    method: str
    k: int
    n_instances: int
    exclusions: tuple[str, ...]
    entries: tuple[tuple[str, int], ...]  # (token, count), sorted

    def to_dict(self) -> dict:
        return {"method": self.method, "k": self.k,
                "n_instances": self.n_instances,
                "exclusions": list(self.exclusions),
                "entries": [[t, c] for t, c in self.entries]}

    def top_tokens(self, m: int) -> list[str]:
        return [t for t, _ in self.entries[:m]]


def _target_logit_grads(snapshot: ModelSnapshot, emb: np.ndarray,
                        mask: np.ndarray, target_class: int) -> np.ndarray:
    """d(logit_target)/d(embeddings) for a stack of embedding blocks."""
    parts = forward_from_embeddings(snapshot, emb, mask)
    d_rep = np.broadcast_to(snapshot.head_w[target_class], parts["rep"].shape)
    return grads_to_embeddings(snapshot, parts["rep"], d_rep, mask)


def grad_saliency(snapshot: ModelSnapshot, instance: Instance,
                  target_class: int | None = None) -> TokenSaliency:
    """Mean over embedding dims of d(target logit)/d(token embedding)."""
    pred, _, _ = predict(snapshot, instance)
    target = pred if target_class is None else target_class
    emb, mask, ids = instance_embeddings(snapshot, instance)
    g = _target_logit_grads(snapshot, emb[None], mask, target)[0]
    scores = g.mean(axis=1)
    return TokenSaliency(instance.id, "G", target, snapshot.vocab.decode(ids),
                         tuple(float(s) for s in scores))


def integrated_gradients(snapshot: ModelSnapshot, instance: Instance,
                         target_class: int | None = None, steps: int = 128,
                         baseline: np.ndarray | None = None) -> TokenSaliency:
    """Path-integral attribution of the target logit from a baseline input.

    The baseline defaults to the padding embedding at every position (the
    zero vector for a freshly trained model). Midpoint Riemann sum over
    `steps` points; attributions then sum to F(x) - F(baseline) up to the
    integration error, exactly for a linear model at any step count.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    pred, _, _ = predict(snapshot, instance)
    target = pred if target_class is None else target_class
    emb, mask, ids = instance_embeddings(snapshot, instance)
    if baseline is None:
        base = np.tile(snapshot.embeddings[PAD], (len(ids), 1))
    else:
        base = np.broadcast_to(baseline, emb.shape).astype(np.float64)
    alphas = (np.arange(steps) + 0.5) / steps
    path = base[None] + alphas[:, None, None] * (emb - base)[None]
    grads = _target_logit_grads(snapshot, path, mask, target)
    scores = ((emb - base) * grads.mean(axis=0)).sum(axis=1)
    return TokenSaliency(instance.id, "IG", target, snapshot.vocab.decode(ids),
                         tuple(float(s) for s in scores))


def ig_completeness_gap(snapshot: ModelSnapshot, instance: Instance,
                        saliency: TokenSaliency,
                        baseline: np.ndarray | None = None) -> tuple[float, float]:
    """(sum of attributions - (F(x) - F(baseline)), F delta) for diagnostics."""
    emb, mask, _ = instance_embeddings(snapshot, instance)
    if baseline is None:
        base = np.tile(snapshot.embeddings[PAD], (emb.shape[0], 1))
    else:
        base = np.broadcast_to(baseline, emb.shape).astype(np.float64)
    f_x = forward_from_embeddings(snapshot, emb, mask)["logits"][saliency.target_class]
    f_b = forward_from_embeddings(snapshot, base, mask)["logits"][saliency.target_class]
    delta = float(f_x - f_b)
    return float(sum(saliency.scores) - delta), delta


def score_with_embedding_score(snapshot: ModelSnapshot, instance: Instance,
                               score: EmbeddingScore, method: str,
                               use_ig: bool, steps: int = 128) -> TokenSaliency:
    """Token scores of an arbitrary differentiable scalar (G or IG flavor)."""
    emb, mask, ids = instance_embeddings(snapshot, instance)
    if not use_ig:
        g = score.grads(emb[None], mask)[0]
        values = g.mean(axis=1)
    else:
        if steps < 1:
            raise ValueError("steps must be >= 1")
        base = np.tile(snapshot.embeddings[PAD], (len(ids), 1))
        alphas = (np.arange(steps) + 0.5) / steps
        path = base[None] + alphas[:, None, None] * (emb - base)[None]
        grads = score.grads(path, mask)
        values = ((emb - base) * grads.mean(axis=0)).sum(axis=1)
    return TokenSaliency(instance.id, method, -1, snapshot.vocab.decode(ids),
                         tuple(float(v) for v in values))


def rank_positions(scores: tuple[float, ...] | list[float],
                   descending: bool = True,
                   by_magnitude: bool = False) -> list[int]:
    """Position indices ordered by score; ties break toward lower positions."""
    vals = [abs(s) for s in scores] if by_magnitude else list(scores)
    key = (lambda i: (-vals[i], i)) if descending else (lambda i: (vals[i], i))
    return sorted(range(len(vals)), key=key)


def top_k(saliency: TokenSaliency, k: int, exclusions: tuple[str, ...] = (),
          by_magnitude: bool = False, descending: bool = True) -> list[str]:
    """Highest-scoring distinct tokens, reserved markers and exclusions removed.

    k larger than the number of candidates returns them all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    banned = set(exclusions) | set(RESERVED_TOKENS)
    out: list[str] = []
    for pos in rank_positions(saliency.scores, descending, by_magnitude):
        tok = saliency.tokens[pos]
        if tok in banned or tok in out:
            continue
        out.append(tok)
        if len(out) == k:
            break
    return out


def aggregate_over_set(snapshot: ModelSnapshot, dataset: Dataset,
                       method: str = "IG", k: int = 5,
                       exclusions: tuple[str, ...] = (), steps: int = 128,
                       by_magnitude: bool = False) -> TokenFrequencyTable:
    """Count, across a dataset, how often each token enters an instance top-k.

    Saliency targets each instance's predicted class. The table is sorted by
    descending count with lexicographic tie-breaks, so it is invariant to
    instance order.
    """
    if method not in ("G", "IG"):
        raise ValueError(f"unknown feature method {method!r}")
    counts: Counter[str] = Counter()
    for inst in dataset:
        if method == "G":
            sal = grad_saliency(snapshot, inst)
        else:
            sal = integrated_gradients(snapshot, inst, steps=steps)
        counts.update(set(top_k(sal, k, exclusions, by_magnitude)))
    entries = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return TokenFrequencyTable(method, k, len(dataset), tuple(exclusions), entries)
