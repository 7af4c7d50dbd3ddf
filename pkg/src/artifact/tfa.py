"""Training-feature attribution: token-level scores inside training instances.

An instance-attribution score s(test, train) is a differentiable scalar of
the training instance's embedding block, so the feature-attribution toolbox
applies to it directly: the gradient (G) or a path integral (IG) of s with
respect to the training instance's token embeddings says which training
tokens carry the influence. Consumption layers on top: per-pair heatmaps,
aggregated token analysis over the most/least influential slices of the
training set, and a bag-of-words logistic discriminator separating those
slices.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import N_RESERVED, PAD, RESERVED_TOKENS, Dataset, Instance
from .feature_attr import (TokenSaliency, grad_saliency, integrated_gradients,
                           rank_positions)
from .instance_attr import INSTANCE_METHODS, InfluenceRanking, rank
from .model import (EmbeddingScore, HeadHessianContext, ModelSnapshot,
                    build_head_hessian, forward, forward_from_embeddings,
                    grads_to_embeddings, head_grad, instance_embeddings,
                    predict)

FEATURE_METHODS = ("G", "IG", "uniform")
HEATMAP_SCHEMA_VERSION = 1


def _one_hot(label: int, c: int) -> np.ndarray:
    y = np.zeros(c)
    y[label] = 1.0
    return y


class _HeadScore:
    """Shared plumbing for scalars that factor through the head gradient."""

    def __init__(self, snapshot: ModelSnapshot, label: int):
        self.snapshot = snapshot
        self.label = label
        self.c = snapshot.config.num_classes
        self.h = snapshot.config.rep_dim

    def _parts(self, emb: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = forward_from_embeddings(self.snapshot, emb, mask)
        delta = out["probs"] - _one_hot(self.label, self.c)[None, :]
        return out["rep"], out["probs"], delta

    def _head_grads(self, rep: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """(S, p) per-step flat head gradients."""
        gw = np.einsum("sc,sh->sch", delta, rep).reshape(rep.shape[0], -1)
        return np.concatenate([gw, delta], axis=1)

    def _dir_grad(self, w: np.ndarray, rep: np.ndarray, probs: np.ndarray,
                  delta: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Gradient of w^T g(emb) w.r.t. emb for constant direction(s) w.

        w is (p,) shared across steps or (S, p) per step. g is the head
        gradient of this training instance's loss.
        """
        c, h = self.c, self.h
        if w.ndim == 1:
            w_mat = w[:c * h].reshape(c, h)
            w_b = w[c * h:]
            t = rep @ w_mat.T + w_b[None, :]
            cross = delta @ w_mat
        else:
            w_mat = w[:, :c * h].reshape(-1, c, h)
            w_b = w[:, c * h:]
            t = np.einsum("sch,sh->sc", w_mat, rep) + w_b
            cross = np.einsum("sc,sch->sh", delta, w_mat)
        # d(delta)/d(rep) routed through the softmax: P t with P = diag(p) - pp^T
        pt = probs * (t - (probs * t).sum(axis=1, keepdims=True))
        d_rep = pt @ self.snapshot.head_w + cross
        return grads_to_embeddings(self.snapshot, rep, d_rep, mask)


class IfScore(_HeadScore):
    """s(emb) = v^T g(emb) with v = (H + damping I)^-1 grad_test."""

    def __init__(self, snapshot: ModelSnapshot, ctx: HeadHessianContext,
                 g_test: np.ndarray, label: int):
        super().__init__(snapshot, label)
        self.v = ctx.solve(g_test)

    def values(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep, _, delta = self._parts(emb, mask)
        return self._head_grads(rep, delta) @ self.v

    def grads(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep, probs, delta = self._parts(emb, mask)
        return self._dir_grad(self.v, rep, probs, delta, mask)


class RifScore(_HeadScore):
    """IF normalized by the training gradient's inverse-Hessian norm."""

    def __init__(self, snapshot: ModelSnapshot, ctx: HeadHessianContext,
                 g_test: np.ndarray, label: int, variant: str = "theta"):
        if variant not in ("theta", "ell"):
            raise ValueError(f"unknown RIF variant {variant!r}")
        super().__init__(snapshot, label)
        self.ctx = ctx
        self.variant = variant
        self.v = ctx.solve(g_test)

    def _norms(self, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (solved (S,p), squared norm (S,)) for the active variant."""
        solved = self.ctx.solve(g.T).T
        if self.variant == "theta":
            sq = np.maximum(np.einsum("sp,sp->s", g, solved), 0.0)
        else:
            sq = np.einsum("sp,sp->s", solved, solved)
        return solved, sq

    def values(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep, _, delta = self._parts(emb, mask)
        g = self._head_grads(rep, delta)
        num = g @ self.v
        _, sq = self._norms(g)
        denom = np.sqrt(sq)
        return np.divide(num, denom, out=np.zeros_like(num), where=denom > 0.0)

    def grads(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep, probs, delta = self._parts(emb, mask)
        g = self._head_grads(rep, delta)
        num = g @ self.v
        solved, sq = self._norms(g)
        ok = sq > 1e-300
        inv_norm = np.where(ok, 1.0 / np.sqrt(np.where(ok, sq, 1.0)), 0.0)
        term1 = self._dir_grad(self.v, rep, probs, delta, mask) * inv_norm[:, None, None]
        if self.variant == "theta":
            w_dir = solved                     # d(g^T H^-1 g) = 2 D(H^-1 g)
        else:
            w_dir = self.ctx.solve(solved.T).T  # d(||H^-1 g||^2) = 2 D(H^-2 g)
        term2 = self._dir_grad(w_dir, rep, probs, delta, mask)
        coeff = np.where(ok, num * inv_norm ** 3, 0.0)
        return term1 - coeff[:, None, None] * term2


class EucScore:
    """s(emb) = -||rep_test - rep(emb)||_2; gradient is 0 at coincidence."""

    def __init__(self, snapshot: ModelSnapshot, rep_test: np.ndarray):
        self.snapshot = snapshot
        self.rep_test = rep_test

    def values(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep = forward_from_embeddings(self.snapshot, emb, mask)["rep"]
        return -np.linalg.norm(rep - self.rep_test[None, :], axis=1)

    def grads(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        rep = forward_from_embeddings(self.snapshot, emb, mask)["rep"]
        diff = self.rep_test[None, :] - rep
        dist = np.linalg.norm(diff, axis=1)
        ok = dist > 0.0
        d_rep = np.where(ok[:, None], diff / np.where(ok, dist, 1.0)[:, None], 0.0)
        return grads_to_embeddings(self.snapshot, rep, d_rep, mask)


def make_score(snapshot: ModelSnapshot, test: Instance, train: Dataset,
               instance_method: str, label: int,
               hessian: HeadHessianContext | None = None,
               variant: str = "theta") -> EmbeddingScore:
    """Build the differentiable instance-attribution scalar for one pair.

    label is the training instance's label (IF/RIF score it through the
    training loss); EUC ignores it.
    """
    if instance_method not in INSTANCE_METHODS:
        raise ValueError(f"unknown instance method {instance_method!r}")
    if instance_method == "EUC":
        return EucScore(snapshot, forward(snapshot, test).rep)
    ctx = hessian if hessian is not None else build_head_hessian(snapshot, train)
    if ctx.snapshot_hash != snapshot.snapshot_hash:
        raise ValueError("Hessian context was built for a different snapshot")
    g_test = head_grad(snapshot, test)
    if instance_method == "IF":
        return IfScore(snapshot, ctx, g_test, label)
    return RifScore(snapshot, ctx, g_test, label, variant)


@dataclass(frozen=True)
class TrainFeatureSaliency:
    """Token scores inside one training instance for one test prediction."""

    test_id: str
    train_id: str
    method: str            # e.g. "RIF+IG"
    variant: str
    tokens: tuple[str, ...]
    scores: tuple[float, ...]
    score_value: float     # s at the actual embeddings
    baseline_value: float  # s at the padding baseline (IG only, else 0.0)

    def to_dict(self) -> dict:
        return {"test_id": self.test_id, "train_id": self.train_id,
                "method": self.method, "variant": self.variant,
                "tokens": list(self.tokens), "scores": list(self.scores),
                "score_value": self.score_value,
                "baseline_value": self.baseline_value}


def tfa_grad(snapshot: ModelSnapshot, test: Instance, train_inst: Instance,
             train: Dataset, instance_method: str = "RIF",
             hessian: HeadHessianContext | None = None,
             variant: str = "theta") -> TrainFeatureSaliency:
    """Plain-gradient token scores of the instance-attribution scalar.

    With a mean-pooling encoder these are equal at every non-pad position
    (the pooled gradient is spread uniformly); kept for architectures and
    sanity checks where that is not the case. Use tfa_ig for position
    resolution.
    """
    score = make_score(snapshot, test, train, instance_method,
                       train_inst.label, hessian, variant)
    emb, mask, ids = instance_embeddings(snapshot, train_inst)
    g = score.grads(emb[None], mask)[0]
    value = float(score.values(emb[None], mask)[0])
    scores = g.mean(axis=1)
    return TrainFeatureSaliency(
        test.id, train_inst.id, f"{instance_method}+G",
        variant if instance_method == "RIF" else "",
        snapshot.vocab.decode(ids), tuple(float(s) for s in scores),
        value, 0.0)


def tfa_ig(snapshot: ModelSnapshot, test: Instance, train_inst: Instance,
           train: Dataset, instance_method: str = "RIF", steps: int = 128,
           hessian: HeadHessianContext | None = None,
           variant: str = "theta") -> TrainFeatureSaliency:
    """Path-integral token scores of the instance-attribution scalar.

    Midpoint rule from the padding baseline; attributions sum to
    s(emb) - s(baseline) up to integration error.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    score = make_score(snapshot, test, train, instance_method,
                       train_inst.label, hessian, variant)
    emb, mask, ids = instance_embeddings(snapshot, train_inst)
    base = np.tile(snapshot.embeddings[PAD], (len(ids), 1))
    alphas = (np.arange(steps) + 0.5) / steps
    path = base[None] + alphas[:, None, None] * (emb - base)[None]
    grads = score.grads(path, mask)
    scores = ((emb - base) * grads.mean(axis=0)).sum(axis=1)
    endpoints = score.values(np.stack([emb, base]), mask)
    return TrainFeatureSaliency(
        test.id, train_inst.id, f"{instance_method}+IG",
        variant if instance_method == "RIF" else "",
        snapshot.vocab.decode(ids), tuple(float(s) for s in scores),
        float(endpoints[0]), float(endpoints[1]))


def train_feature_saliency(snapshot: ModelSnapshot, test: Instance,
                           train_inst: Instance, train: Dataset,
                           instance_method: str, feature_method: str,
                           steps: int = 128,
                           hessian: HeadHessianContext | None = None,
                           variant: str = "theta") -> TrainFeatureSaliency:
    if feature_method == "G":
        return tfa_grad(snapshot, test, train_inst, train, instance_method,
                        hessian, variant)
    if feature_method == "IG":
        return tfa_ig(snapshot, test, train_inst, train, instance_method,
                      steps, hessian, variant)
    raise ValueError(f"unknown feature method {feature_method!r}")


@dataclass(frozen=True)
class AggregateReport:
    """Token frequency tables over the most and least influential slices."""

    test_id: str
    instance_method: str
    feature_method: str
    variant: str
    k_pct: float
    top_m: int
    exclusions: tuple[str, ...]
    n_train: int
    n_per_side: int
    top_ids: tuple[str, ...]
    bottom_ids: tuple[str, ...]
    top_entries: tuple[tuple[str, int], ...]
    bottom_entries: tuple[tuple[str, int], ...]

    def params_key(self) -> tuple:
        return (self.instance_method, self.feature_method, self.variant,
                self.k_pct, self.top_m, self.exclusions)

    def pooled_entries(self) -> tuple[tuple[str, int], ...]:
        counts: Counter[str] = Counter(dict(self.top_entries))
        counts.update(dict(self.bottom_entries))
        return tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id, "instance_method": self.instance_method,
            "feature_method": self.feature_method, "variant": self.variant,
            "k_pct": self.k_pct, "top_m": self.top_m,
            "exclusions": list(self.exclusions), "n_train": self.n_train,
            "n_per_side": self.n_per_side,
            "top_ids": list(self.top_ids), "bottom_ids": list(self.bottom_ids),
            "top_entries": [[t, c] for t, c in self.top_entries],
            "bottom_entries": [[t, c] for t, c in self.bottom_entries],
        }


def _extract_tokens(saliency: TrainFeatureSaliency, top_m: int,
                    banned: set[str], ascending: bool) -> list[str]:
    order = rank_positions(saliency.scores, descending=not ascending)
    out: list[str] = []
    for pos in order:
        tok = saliency.tokens[pos]
        if tok in banned or tok in out:
            continue
        out.append(tok)
        if len(out) == top_m:
            break
    return out


def aggregated_token_analysis(snapshot: ModelSnapshot, test: Instance,
                              train: Dataset, instance_method: str = "RIF",
                              feature_method: str = "IG", k_pct: float = 10.0,
                              top_m: int = 1,
                              exclusions: tuple[str, ...] = (),
                              hessian: HeadHessianContext | None = None,
                              steps: int = 128, variant: str = "theta",
                              ranking: InfluenceRanking | None = None) -> AggregateReport:
    """Which tokens recur inside the extreme slices of the influence ranking.

    Takes the top k_pct and bottom k_pct of training instances by influence
    on this test point; inside each, ranks tokens by the training-feature
    saliency and extracts the top_m (most positive in the top slice, most
    negative in the bottom slice), then counts extractions per token.
    feature_method "uniform" skips token ranking and counts every distinct
    token of the slice, which reduces to pure instance attribution.
    """
    if not 0.0 < k_pct <= 50.0:
        raise ValueError("k_pct must lie in (0, 50]")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    if feature_method not in FEATURE_METHODS:
        raise ValueError(f"unknown feature method {feature_method!r}")
    if len(train) < 4:
        raise ValueError("need at least two training instances per side (>= 4 total)")
    if instance_method in ("IF", "RIF") and hessian is None:
        hessian = build_head_hessian(snapshot, train)
    if ranking is None:
        ranking = rank(snapshot, test, train, instance_method, hessian, variant)
    elif ranking.method != instance_method:
        raise ValueError("supplied ranking was computed with a different method")
    n = len(train)
    n_side = max(1, int(n * k_pct / 100.0))
    ordered = ranking.ids()
    top_ids = tuple(ordered[:n_side])
    bottom_ids = tuple(ordered[-n_side:][::-1])  # most negative first
    banned = set(exclusions) | set(RESERVED_TOKENS)

    def side_counts(ids: tuple[str, ...], ascending: bool) -> Counter[str]:
        counts: Counter[str] = Counter()
        for tid in ids:
            inst = train.by_id(tid)
            if feature_method == "uniform":
                toks = {t for t in train.tokens_of(inst) if t not in banned}
                counts.update(toks)
                continue
            sal = train_feature_saliency(snapshot, test, inst, train,
                                         instance_method, feature_method,
                                         steps, hessian, variant)
            counts.update(_extract_tokens(sal, top_m, banned, ascending))
        return counts

    top_counts = side_counts(top_ids, ascending=False)
    bottom_counts = side_counts(bottom_ids, ascending=True)

    def sort_entries(c: Counter[str]) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(c.items(), key=lambda kv: (-kv[1], kv[0])))

    return AggregateReport(
        test.id, instance_method, feature_method,
        variant if instance_method == "RIF" else "",
        float(k_pct), top_m, tuple(exclusions), n, n_side,
        top_ids, bottom_ids, sort_entries(top_counts), sort_entries(bottom_counts))


def corpus_aggregate(reports: Sequence[AggregateReport]) -> AggregateReport:
    """Merge per-test aggregate reports produced with identical parameters."""
    if not reports:
        raise ValueError("nothing to aggregate")
    key = reports[0].params_key()
    for r in reports[1:]:
        if r.params_key() != key:
            raise ValueError("cannot merge aggregate reports with different parameters")
    top: Counter[str] = Counter()
    bottom: Counter[str] = Counter()
    for r in reports:
        top.update(dict(r.top_entries))
        bottom.update(dict(r.bottom_entries))

    def sort_entries(c: Counter[str]) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(c.items(), key=lambda kv: (-kv[1], kv[0])))

    first = reports[0]
    return AggregateReport(
        "corpus", first.instance_method, first.feature_method, first.variant,
        first.k_pct, first.top_m, first.exclusions,
        first.n_train, first.n_per_side, (), (),
        sort_entries(top), sort_entries(bottom))


@dataclass(frozen=True)
class DiscriminatorReport:
    """Bag-of-words logistic probe separating most- from least-influential."""

    test_id: str
    instance_method: str
    variant: str
    n_top: int
    n_bottom: int
    l2: float
    top_ids: tuple[str, ...]
    bottom_ids: tuple[str, ...]
    token_weights: tuple[tuple[str, float], ...]  # sorted by weight, desc
    bias: float
    diagnostics: dict

    def to_dict(self) -> dict:
        return {"test_id": self.test_id, "instance_method": self.instance_method,
                "variant": self.variant, "n_top": self.n_top,
                "n_bottom": self.n_bottom, "l2": self.l2,
                "top_ids": list(self.top_ids), "bottom_ids": list(self.bottom_ids),
                "token_weights": [[t, w] for t, w in self.token_weights],
                "bias": self.bias, "diagnostics": dict(self.diagnostics)}


def _fit_logistic(x: np.ndarray, y: np.ndarray, l2: float,
                  tol: float = 1e-6, max_iter: int = 100) -> tuple[np.ndarray, float, dict]:
    """Newton logistic regression; bias unregularized; monotone by line search."""
    n, f = x.shape
    w = np.zeros(f)
    b = 0.0

    def objective(wv: np.ndarray, bv: float) -> float:
        z = x @ wv + bv
        # log(1 + exp(-yz)) in a stable form, y in {0, 1}
        ll = np.logaddexp(0.0, z) - y * z
        return float(ll.mean() + 0.5 * l2 * wv @ wv)

    obj0 = objective(w, b)
    info = {"objective_at_zero": obj0, "converged": False, "n_iter": 0}
    for it in range(1, max_iter + 1):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        resid = p - y
        grad_w = x.T @ resid / n + l2 * w
        grad_b = float(resid.mean())
        grad_inf = max(np.abs(grad_w).max(initial=0.0), abs(grad_b))
        info.update(n_iter=it - 1, grad_inf=grad_inf, objective=objective(w, b))
        if grad_inf <= tol:
            info["converged"] = True
            return w, b, info
        s = np.maximum(p * (1.0 - p), 1e-12)
        h_ww = (x.T * s) @ x / n + l2 * np.eye(f)
        h_wb = x.T @ s / n
        h_bb = float(s.mean())
        hess = np.block([[h_ww, h_wb[:, None]], [h_wb[None, :], np.array([[h_bb]])]])
        grad = np.concatenate([grad_w, [grad_b]])
        step = np.linalg.solve(hess + 1e-12 * np.eye(f + 1), grad)
        t, base = 1.0, objective(w, b)
        for _ in range(50):
            cand_w, cand_b = w - t * step[:f], b - t * float(step[f])
            if objective(cand_w, cand_b) <= base:
                w, b = cand_w, cand_b
                break
            t *= 0.5
        else:  # no descent step found; gradient is numerically flat
            break
    z = x @ w + b
    p = 1.0 / (1.0 + np.exp(-z))
    grad_w = x.T @ (p - y) / n + l2 * w
    grad_inf = max(np.abs(grad_w).max(initial=0.0), abs(float((p - y).mean())))
    info.update(grad_inf=grad_inf, objective=objective(w, b),
                converged=grad_inf <= tol)
    return w, b, info


def lr_discriminator(snapshot: ModelSnapshot, test: Instance, train: Dataset,
                     instance_method: str = "RIF", n_top: int = 10,
                     n_bottom: int = 10, l2: float = 1e-2,
                     hessian: HeadHessianContext | None = None,
                     variant: str = "theta",
                     exclusions: tuple[str, ...] = (),
                     ranking: InfluenceRanking | None = None) -> DiscriminatorReport:
    """Fit a token-presence probe: most influential (1) vs least (0).

    Large positive weights mark tokens whose presence predicts membership in
    the influential slice. With l2 <= 0 and linearly separable slices the
    optimum does not exist; that raises with advice to set l2 > 0.
    """
    if n_top < 1 or n_bottom < 1:
        raise ValueError("n_top and n_bottom must be >= 1")
    if n_top + n_bottom > len(train):
        raise ValueError("n_top + n_bottom exceeds the training set")
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    if ranking is None:
        ranking = rank(snapshot, test, train, instance_method, hessian, variant)
    ordered = ranking.ids()
    top_ids = tuple(ordered[:n_top])
    bottom_ids = tuple(ordered[-n_bottom:][::-1])

    banned_ids = set(range(N_RESERVED)) | {
        train.vocab.id_of(t) for t in exclusions}
    feat_ids = sorted(set(
        tid for iid in top_ids + bottom_ids
        for tid in train.by_id(iid).input_ids()) - banned_ids)
    if not feat_ids:
        raise ValueError("no usable token features in the selected slices")
    col = {tid: j for j, tid in enumerate(feat_ids)}
    rows = []
    for iid in top_ids + bottom_ids:
        row = np.zeros(len(feat_ids))
        for tid in train.by_id(iid).input_ids():
            if tid in col:
                row[col[tid]] = 1.0
        rows.append(row)
    x = np.stack(rows)
    y = np.concatenate([np.ones(n_top), np.zeros(n_bottom)])

    w, b, info = _fit_logistic(x, y, l2)
    if l2 <= 0.0:
        # With no regularizer a separable problem has no finite optimum; the
        # iterates run off to infinity while the mean loss sinks toward 0
        # (below log(2)/n means every sample is classified almost surely).
        separated = info["objective"] < 0.5 * np.log(2.0) / len(y)
        if separated or not info["converged"]:
            raise ValueError(
                "slices are linearly separable so the unregularized optimum "
                "diverges; set l2 > 0")
    tokens = [train.vocab.token_of(tid) for tid in feat_ids]
    order = sorted(range(len(tokens)), key=lambda j: (-w[j], tokens[j]))
    weights = tuple((tokens[j], float(w[j])) for j in order)
    return DiscriminatorReport(
        test.id, instance_method,
        variant if instance_method == "RIF" else "",
        n_top, n_bottom, float(l2), top_ids, bottom_ids, weights, float(b), info)


@dataclass(frozen=True)
class HeatmapPayload:
    """Wire format for side-by-side test/train token heatmaps."""

    schema_version: int
    snapshot_hash: str
    instance_method: str
    feature_method: str
    variant: str
    k: int
    steps: int
    test: dict
    top: tuple[dict, ...]
    bottom: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "snapshot_hash": self.snapshot_hash,
            "instance_method": self.instance_method,
            "feature_method": self.feature_method,
            "variant": self.variant, "k": self.k, "steps": self.steps,
            "test": dict(self.test),
            "top": [dict(e) for e in self.top],
            "bottom": [dict(e) for e in self.bottom],
        }


def _normalized(scores: Sequence[float]) -> list[float]:
    peak = max((abs(s) for s in scores), default=0.0)
    if peak == 0.0:
        return [0.0 for _ in scores]
    return [float(s) / peak for s in scores]


def heatmap(snapshot: ModelSnapshot, test: Instance, train: Dataset,
            instance_method: str = "RIF", feature_method: str = "IG",
            k: int = 5, hessian: HeadHessianContext | None = None,
            steps: int = 128, variant: str = "theta") -> HeatmapPayload:
    """Heatmap payload for the k most and k least influential train instances.

    Scores are reported raw and normalized per instance (largest magnitude
    maps to +/-1). k beyond the training set size is clamped, not an error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if feature_method not in ("G", "IG"):
        raise ValueError("heatmaps need a token-resolving feature method (G or IG)")
    ranking = rank(snapshot, test, train, instance_method, hessian, variant)
    if instance_method in ("IF", "RIF") and hessian is None:
        hessian = build_head_hessian(snapshot, train)
    count = min(k, len(train))
    ordered = ranking.ids()
    score_of = ranking.scores()

    pred, probs, _ = predict(snapshot, test)
    if feature_method == "G":
        test_sal = grad_saliency(snapshot, test, pred)
    else:
        test_sal = integrated_gradients(snapshot, test, pred, steps=steps)
    test_block = {
        "id": test.id, "tokens": list(test_sal.tokens), "label": test.label,
        "predicted": pred, "probabilities": [float(p) for p in probs],
        "scores_raw": list(test_sal.scores),
        "scores_norm": _normalized(test_sal.scores),
    }

    def block(train_id: str, rank_pos: int) -> dict:
        inst = train.by_id(train_id)
        sal = train_feature_saliency(snapshot, test, inst, train,
                                     instance_method, feature_method,
                                     steps, hessian, variant)
        return {
            "train_id": train_id, "rank": rank_pos,
            "influence": float(score_of[train_id]), "label": inst.label,
            "tokens": list(sal.tokens),
            "scores_raw": list(sal.scores),
            "scores_norm": _normalized(sal.scores),
        }

    top = tuple(block(tid, i + 1) for i, tid in enumerate(ordered[:count]))
    bottom = tuple(block(tid, len(ordered) - i)
                   for i, tid in enumerate(reversed(ordered[-count:])))
    return HeatmapPayload(
        HEATMAP_SCHEMA_VERSION, snapshot.snapshot_hash, instance_method,
        feature_method, variant if instance_method == "RIF" else "",
        count, steps, test_block, top, bottom)


HEATMAP_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "snapshot_hash", "instance_method",
                 "feature_method", "k", "steps", "test", "top", "bottom"],
    "properties": {
        "schema_version": {"const": HEATMAP_SCHEMA_VERSION},
        "snapshot_hash": {"type": "string", "minLength": 8},
        "instance_method": {"enum": list(INSTANCE_METHODS)},
        "feature_method": {"enum": ["G", "IG"]},
        "variant": {"type": "string"},
        "k": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "test": {
            "type": "object",
            "required": ["id", "tokens", "predicted", "probabilities",
                         "scores_raw", "scores_norm"],
            "properties": {
                "id": {"type": "string"},
                "tokens": {"type": "array", "items": {"type": "string"}},
                "label": {"type": ["integer", "null"]},
                "predicted": {"type": "integer", "minimum": 0},
                "probabilities": {"type": "array", "items": {"type": "number"}},
                "scores_raw": {"type": "array", "items": {"type": "number"}},
                "scores_norm": {"type": "array",
                                "items": {"type": "number", "minimum": -1.0,
                                          "maximum": 1.0}},
            },
        },
        "top": {"type": "array", "items": {"$ref": "#/$defs/train_block"}},
        "bottom": {"type": "array", "items": {"$ref": "#/$defs/train_block"}},
    },
    "$defs": {
        "train_block": {
            "type": "object",
            "required": ["train_id", "rank", "influence", "label", "tokens",
                         "scores_raw", "scores_norm"],
            "properties": {
                "train_id": {"type": "string"},
                "rank": {"type": "integer", "minimum": 1},
                "influence": {"type": "number"},
                "label": {"type": "integer", "minimum": 0},
                "tokens": {"type": "array", "items": {"type": "string"}},
                "scores_raw": {"type": "array", "items": {"type": "number"}},
                "scores_norm": {"type": "array",
                                "items": {"type": "number", "minimum": -1.0,
                                          "maximum": 1.0}},
            },
        },
    },
}
