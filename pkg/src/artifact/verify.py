"""Verification by controlled input edits.

Attribution can only nominate suspects; these utilities test them. Masking
a nominated token across a dataset and counting prediction flips, or editing
one input and diffing the prediction, turns a candidate artifact into a
measured causal effect. Detection metrics (hits@k, overlap rate) score
nominated token lists against a known ground truth, with exact chance-level
baselines to compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import (N_RESERVED, Dataset, Instance, instance_from_text,
                     mask_position, mask_token)
from .feature_attr import TokenSaliency, grad_saliency, rank_positions
from .model import ModelSnapshot, predict
from .tfa import TrainFeatureSaliency


@dataclass(frozen=True)
class FlipRecord:
    instance_id: str
    pred_before: int
    pred_after: int
    prob_before: float  # probability of the original prediction, before
    prob_after: float   # same class, after the edit

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "pred_before": self.pred_before,
                "pred_after": self.pred_after, "prob_before": self.prob_before,
                "prob_after": self.prob_after}


@dataclass(frozen=True)
class FlipReport:
    """Effect of masking a token (or random positions) across a dataset."""

    token: str            # "<random>" for the chance-level mode
    n_affected: int
    flip_fraction: float
    mean_delta: float     # mean drop in the originally predicted class's prob
    records: tuple[FlipRecord, ...]
    trials: int | None
    seed: int | None

    def to_dict(self) -> dict:
        return {"token": self.token, "n_affected": self.n_affected,
                "flip_fraction": self.flip_fraction, "mean_delta": self.mean_delta,
                "records": [r.to_dict() for r in self.records],
                "trials": self.trials, "seed": self.seed}


def mask_flip_rate(snapshot: ModelSnapshot, dataset: Dataset,
                   token: str | None = None, random_trials: int | None = None,
                   seed: int = 0) -> FlipReport:
    """Mask and re-predict; report how often the argmax changes.

    Token mode masks every occurrence of the token in each instance that
    contains it. Random mode (token=None, random_trials=T) instead masks one
    uniformly chosen content position per instance per trial and averages
    the flip fraction over trials; this is the chance level a real artifact
    has to beat.
    """
    if (token is None) == (random_trials is None):
        raise ValueError("pass exactly one of token= or random_trials=")

    if token is not None:
        records = []
        flips = 0
        deltas = []
        for inst in dataset:
            masked = mask_token(inst, token, dataset.vocab)
            if masked is inst:
                continue
            pred_b, probs_b, _ = predict(snapshot, inst)
            pred_a, probs_a, _ = predict(snapshot, masked)
            flips += int(pred_a != pred_b)
            deltas.append(float(probs_b[pred_b] - probs_a[pred_b]))
            records.append(FlipRecord(inst.id, pred_b, pred_a,
                                      float(probs_b[pred_b]), float(probs_a[pred_b])))
        n = len(records)
        return FlipReport(token, n, flips / n if n else 0.0,
                          float(np.mean(deltas)) if deltas else 0.0,
                          tuple(records), None, None)

    if random_trials < 1:
        raise ValueError("random_trials must be >= 1")
    rng = np.random.default_rng(seed)
    eligible = []
    for inst in dataset:
        positions = [i for i, tid in enumerate(inst.input_ids()) if tid >= N_RESERVED]
        if positions:
            eligible.append((inst, positions))
    if not eligible:
        return FlipReport("<random>", 0, 0.0, 0.0, (), random_trials, seed)
    fractions = []
    deltas = []
    for _ in range(random_trials):
        flips = 0
        for inst, positions in eligible:
            pos = positions[int(rng.integers(len(positions)))]
            masked = mask_position(inst, pos)
            pred_b, probs_b, _ = predict(snapshot, inst)
            pred_a, probs_a, _ = predict(snapshot, masked)
            flips += int(pred_a != pred_b)
            deltas.append(float(probs_b[pred_b] - probs_a[pred_b]))
        fractions.append(flips / len(eligible))
    return FlipReport("<random>", len(eligible), float(np.mean(fractions)),
                      float(np.mean(deltas)), (), random_trials, seed)


@dataclass(frozen=True)
class EditResult:
    """Prediction diff between an original input and a manual rewrite."""

    pred_before: int
    pred_after: int
    probs_before: tuple[float, ...]
    probs_after: tuple[float, ...]
    delta_prob: float  # change in the originally predicted class's probability
    flipped: bool
    saliency_after: TokenSaliency

    def to_dict(self) -> dict:
        return {"pred_before": self.pred_before, "pred_after": self.pred_after,
                "probs_before": list(self.probs_before),
                "probs_after": list(self.probs_after),
                "delta_prob": self.delta_prob, "flipped": self.flipped,
                "saliency_after": self.saliency_after.to_dict()}


def edit_and_compare(snapshot: ModelSnapshot, original: str, edited: str,
                     original_b: str | None = None,
                     edited_b: str | None = None) -> EditResult:
    """Predict both versions of a text and report the difference.

    An edited text that tokenizes to nothing is an error. Editing the text
    into itself yields a zero delta by construction.
    """
    before = instance_from_text(snapshot.vocab, original, original_b, "original")
    after = instance_from_text(snapshot.vocab, edited, edited_b, "edited")
    pred_b, probs_b, _ = predict(snapshot, before)
    pred_a, probs_a, _ = predict(snapshot, after)
    sal = grad_saliency(snapshot, after, pred_a)
    return EditResult(pred_b, pred_a,
                      tuple(float(p) for p in probs_b),
                      tuple(float(p) for p in probs_a),
                      float(probs_a[pred_b] - probs_b[pred_b]),
                      pred_a != pred_b, sal)


@dataclass(frozen=True)
class DetectionReport:
    metric: str
    value: float
    k: int
    n: int          # how many reports/instances entered the average
    detail: dict

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value, "k": self.k,
                "n": self.n, "detail": dict(self.detail)}


def hits_at_k(token_lists: list[list[str]], truth_tokens: set[str] | frozenset[str],
              k: int) -> DetectionReport:
    """Fraction of ranked token lists whose first k entries hit the truth set."""
    if not token_lists:
        raise ValueError("no token lists to score")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for toks in token_lists
               if any(t in truth_tokens for t in toks[:k]))
    return DetectionReport("hits_at_k", hits / len(token_lists), k,
                           len(token_lists),
                           {"truth_tokens": sorted(truth_tokens)})


def expected_random_hits(n_candidates: int, n_truth: int, k: int) -> float:
    """Chance level for hits@k when k tokens are drawn without replacement
    from n_candidates of which n_truth are correct."""
    if n_candidates < 1 or n_truth < 0 or n_truth > n_candidates or k < 1:
        raise ValueError("bad hypergeometric parameters")
    k = min(k, n_candidates)
    if n_truth == 0:
        return 0.0
    return 1.0 - math.comb(n_candidates - n_truth, k) / math.comb(n_candidates, k)


def overlap_rate(saliencies: list[TrainFeatureSaliency],
                 train: Dataset) -> DetectionReport:
    """How often the top-scored training token occurs in both segments.

    Each saliency must belong to a premise/hypothesis style pair from train;
    unpaired instances are an error. Reserved positions are skipped when
    picking the top token.
    """
    if not saliencies:
        raise ValueError("no saliencies to score")
    hits = 0
    for sal in saliencies:
        inst = train.by_id(sal.train_id)
        if not inst.is_pair:
            raise ValueError(f"instance {inst.id!r} is not a pair")
        ids = inst.input_ids()
        set_a = set(inst.segment_a)
        set_b = set(inst.segment_b)
        top_tid = None
        for pos in rank_positions(sal.scores, descending=True):
            if ids[pos] >= N_RESERVED:
                top_tid = ids[pos]
                break
        if top_tid is not None and top_tid in set_a and top_tid in set_b:
            hits += 1
    return DetectionReport("overlap_rate", hits / len(saliencies), 1,
                           len(saliencies), {})


def expected_random_overlap(instances: list[Instance]) -> float:
    """Chance level for overlap_rate: pick a uniformly random content token.

    For each pair, the probability that a random content position holds a
    token present in both segments; averaged over instances.
    """
    if not instances:
        raise ValueError("no instances")
    vals = []
    for inst in instances:
        if not inst.is_pair:
            raise ValueError(f"instance {inst.id!r} is not a pair")
        ids = [tid for tid in inst.input_ids() if tid >= N_RESERVED]
        if not ids:
            continue
        both = set(inst.segment_a) & set(inst.segment_b)
        vals.append(sum(1 for tid in ids if tid in both) / len(ids))
    if not vals:
        raise ValueError("no content tokens")
    return float(np.mean(vals))
