"""Instance attribution: which training examples drove one test prediction.

Three scorers share a sign convention of "larger = more responsible for the
prediction being what it is":

* influence_if  - damped-Hessian influence restricted to the head params;
                  positive means removing the training point would raise the
                  test loss (it was helping).
* rif           - the same numerator normalized by the train gradient's
                  norm under the inverse Hessian metric, which removes the
                  outsized scores of high-loss outliers.
* euc           - negative Euclidean distance between head-input
                  representations (a pure similarity retriever).

The Hessian uses the training set only and is factored once per ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Instance
from .model import (HeadHessianContext, ModelSnapshot, batch_forward,
                    build_head_hessian, forward, head_grad, head_grads_batch)

INSTANCE_METHODS = ("IF", "RIF", "EUC")


@dataclass(frozen=True)
class InfluenceRanking:
    """Full ordering of a training set for one test instance."""

    test_id: str
    method: str
    variant: str  # "theta" | "ell" for RIF, "" otherwise
    snapshot_hash: str
    entries: tuple[tuple[str, float], ...]  # (train_id, score), best first

    def scores(self) -> dict[str, float]:
        return dict(self.entries)

    def ids(self) -> list[str]:
        return [tid for tid, _ in self.entries]

    def to_dict(self) -> dict:
        return {"test_id": self.test_id, "method": self.method,
                "variant": self.variant, "snapshot_hash": self.snapshot_hash,
                "entries": [[t, s] for t, s in self.entries]}


def _ensure_ctx(snapshot: ModelSnapshot, train: Dataset,
                hessian: HeadHessianContext | None) -> HeadHessianContext:
    if hessian is None:
        return build_head_hessian(snapshot, train)
    if hessian.snapshot_hash != snapshot.snapshot_hash:
        raise ValueError("Hessian context was built for a different snapshot")
    return hessian


def influence_if(snapshot: ModelSnapshot, test: Instance, train_inst: Instance,
                 train: Dataset, hessian: HeadHessianContext | None = None) -> float:
    """grad_test^T (H + damping I)^-1 grad_train over head parameters."""
    ctx = _ensure_ctx(snapshot, train, hessian)
    g_test = head_grad(snapshot, test)
    g_train = head_grad(snapshot, train_inst)
    return float(g_test @ ctx.solve(g_train))


def rif(snapshot: ModelSnapshot, test: Instance, train_inst: Instance,
        train: Dataset, hessian: HeadHessianContext | None = None,
        variant: str = "theta") -> float:
    """Influence normalized by the training gradient's own scale.

    variant "theta" divides by ||H^-1/2 grad_train|| (norm in the parameter
    metric); variant "ell" divides by ||H^-1 grad_train||. A zero-gradient
    training point scores exactly 0.
    """
    if variant not in ("theta", "ell"):
        raise ValueError(f"unknown RIF variant {variant!r}")
    ctx = _ensure_ctx(snapshot, train, hessian)
    g_test = head_grad(snapshot, test)
    g_train = head_grad(snapshot, train_inst)
    solved = ctx.solve(g_train)
    num = float(g_test @ solved)
    if variant == "theta":
        denom = float(np.sqrt(max(g_train @ solved, 0.0)))
    else:
        denom = float(np.linalg.norm(solved))
    return num / denom if denom > 0.0 else 0.0


def euc(snapshot: ModelSnapshot, test: Instance, train_inst: Instance) -> float:
    """Negative L2 distance between head-input representations."""
    rep_t = forward(snapshot, test).rep
    rep_i = forward(snapshot, train_inst).rep
    return -float(np.linalg.norm(rep_t - rep_i))


def rank(snapshot: ModelSnapshot, test: Instance, train: Dataset,
         method: str = "RIF", hessian: HeadHessianContext | None = None,
         variant: str = "theta") -> InfluenceRanking:
    """Score every training instance and order best-first.

    Ties break toward the lower train id so rankings are reproducible.
    The Hessian (for IF/RIF) is factored once and reused across the sweep.
    """
    if method not in INSTANCE_METHODS:
        raise ValueError(f"unknown instance method {method!r}")
    if len(train) == 0:
        raise ValueError("cannot rank an empty training set")

    ids = [inst.id for inst in train]
    if method == "EUC":
        rep_t = forward(snapshot, test).rep
        reps = batch_forward(snapshot, list(train))["rep"]
        scores = -np.linalg.norm(reps - rep_t[None, :], axis=1)
        variant = ""
    else:
        ctx = _ensure_ctx(snapshot, train, hessian)
        g_test = head_grad(snapshot, test)
        grads = head_grads_batch(snapshot, train)          # (N, p)
        solved = ctx.solve(grads.T)                         # (p, N)
        nums = g_test @ solved
        if method == "IF":
            scores = nums
            variant = ""
        else:
            if variant not in ("theta", "ell"):
                raise ValueError(f"unknown RIF variant {variant!r}")
            if variant == "theta":
                denoms = np.sqrt(np.maximum(np.einsum("np,pn->n", grads, solved), 0.0))
            else:
                denoms = np.linalg.norm(solved, axis=0)
            scores = np.divide(nums, denoms, out=np.zeros_like(nums),
                               where=denoms > 0.0)

    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    entries = tuple((ids[i], float(scores[i])) for i in order)
    return InfluenceRanking(test.id, method, variant, snapshot.snapshot_hash, entries)
