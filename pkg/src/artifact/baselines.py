"""Corpus-statistic baselines that need no trained model.

Both work on raw token occurrence counts over a training set and rank
tokens by how strongly they associate with a label. They are the cheap
first pass that attribution methods are compared against.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .corpus import N_RESERVED, Dataset


@dataclass(frozen=True)
class TokenLabelStat:
    token: str
    label: str
    value: float
    n_token: int        # occurrences of the token overall
    n_token_label: int  # occurrences under this label

    def to_dict(self) -> dict:
        return {"token": self.token, "label": self.label, "value": self.value,
                "n_token": self.n_token, "n_token_label": self.n_token_label}


def _occurrence_counts(train: Dataset) -> tuple[Counter[str], dict[str, Counter[str]]]:
    """(total occurrences per token, per-label occurrences per token)."""
    total: Counter[str] = Counter()
    per_label: dict[str, Counter[str]] = {name: Counter() for name in train.class_names}
    for inst in train:
        label = train.class_names[inst.label]
        for tid in inst.input_ids():
            if tid < N_RESERVED:
                continue  # padding/separator bookkeeping is not corpus content
            tok = train.vocab.token_of(tid)
            total[tok] += 1
            per_label[label][tok] += 1
    return total, per_label


def pmi(train: Dataset, smoothing_k: float = 100.0) -> dict[str, list[TokenLabelStat]]:
    """Smoothed pointwise mutual information log p(t|l)/p(t) per label.

    Add-k smoothing over the observed vocabulary tames rare tokens; note it
    also flattens the score across tokens exclusive to one label, so ties
    break by descending within-label count, then token. Returns one ranked
    list per class name.
    """
    if smoothing_k < 0:
        raise ValueError("smoothing_k must be >= 0")
    if len(train) == 0:
        raise ValueError("empty training set")
    total, per_label = _occurrence_counts(train)
    if not total:
        raise ValueError("training set has no content tokens")
    v = len(total)
    n_all = sum(total.values())
    out: dict[str, list[TokenLabelStat]] = {}
    for label, counts in per_label.items():
        n_label = sum(counts.values())
        stats = []
        for tok, n_tok in total.items():
            p_tok = (n_tok + smoothing_k) / (n_all + smoothing_k * v)
            p_tok_label = (counts[tok] + smoothing_k) / (n_label + smoothing_k * v)
            stats.append(TokenLabelStat(tok, label, math.log(p_tok_label / p_tok),
                                        n_tok, counts[tok]))
        stats.sort(key=lambda s: (-s.value, -s.n_token_label, s.token))
        out[label] = stats
    return out


def competency(train: Dataset) -> list[TokenLabelStat]:
    """z-statistic of each token's majority label against the uniform rate.

    For a token with n occurrences, of which n_l carry its most frequent
    label, z = (n_l/n - p0) / sqrt(p0 (1 - p0) / n) with p0 = 1/num_classes.
    A token appearing 100 times, always under one of two labels, scores 10.
    Ranked descending; ties break by total count, then token.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    total, per_label = _occurrence_counts(train)
    if not total:
        raise ValueError("training set has no content tokens")
    p0 = 1.0 / len(train.class_names)
    stats = []
    for tok, n_tok in total.items():
        best_label = max(train.class_names,
                         key=lambda l: (per_label[l][tok], -train.class_names.index(l)))
        n_best = per_label[best_label][tok]
        z = (n_best / n_tok - p0) / math.sqrt(p0 * (1.0 - p0) / n_tok)
        stats.append(TokenLabelStat(tok, best_label, z, n_tok, n_best))
    stats.sort(key=lambda s: (-s.value, -s.n_token, s.token))
    return stats
