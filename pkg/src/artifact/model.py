"""Bag-of-embeddings text classifier with exact analytic derivatives.

Architecture: token embeddings are mean-pooled over non-padding positions,
optionally passed through one tanh layer, then through a linear head and
softmax. Everything is float64 numpy; training, prediction, per-position
embedding gradients, and the damped head Hessian solve used by instance
attribution all live here.

The classifier is deliberately small and framework-free so that every
derivative consumed elsewhere in the package can be checked against finite
differences to tight tolerances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .corpus import PAD, Dataset, Instance, Vocab
from .reporting import sha256_bytes, sha256_text

CHECKPOINT_FORMAT = "bag-classifier-checkpoint"
CHECKPOINT_VERSION = 1


class ModelError(RuntimeError):
    pass


class TrainingDiverged(ModelError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int
    hidden_dim: int = 0  # 0 disables the tanh layer; the head then sees the pooled vector
    num_classes: int = 2
    l2_reg: float = 0.0
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    damping: float = 0.01

    def __post_init__(self) -> None:
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.hidden_dim < 0:
            raise ValueError("hidden_dim must be >= 0")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")
        if self.damping <= 0:
            raise ValueError("damping must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad epochs/batch_size")

    @property
    def rep_dim(self) -> int:
        return self.hidden_dim if self.hidden_dim > 0 else self.embedding_dim

    @property
    def head_param_count(self) -> int:
        return self.num_classes * self.rep_dim + self.num_classes

    def to_dict(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim, "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes, "l2_reg": self.l2_reg,
            "learning_rate": self.learning_rate, "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
            "damping": self.damping,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ModelSnapshot:
    """Immutable trained (or initialized) parameters plus provenance."""

    config: ModelConfig
    vocab: Vocab
    embeddings: np.ndarray           # (V, d)
    hidden_w: np.ndarray | None      # (h, d) or None
    hidden_b: np.ndarray | None      # (h,)
    head_w: np.ndarray               # (C, rep_dim)
    head_b: np.ndarray               # (C,)
    metrics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        cfg = self.config
        if self.embeddings.shape != (len(self.vocab), cfg.embedding_dim):
            raise ValueError("embedding matrix shape does not match vocab/config")
        if self.head_w.shape != (cfg.num_classes, cfg.rep_dim):
            raise ValueError("head shape does not match config")
        if self.head_b.shape != (cfg.num_classes,):
            raise ValueError("head bias shape does not match config")
        if (self.hidden_w is None) != (cfg.hidden_dim == 0):
            raise ValueError("hidden layer presence does not match config")
        for arr in (self.embeddings, self.head_w, self.head_b, self.hidden_w, self.hidden_b):
            if arr is not None:
                arr.setflags(write=False)

    @cached_property
    def snapshot_hash(self) -> str:
        parts = [json.dumps(self.config.to_dict(), sort_keys=True), self.vocab.content_hash]
        for arr in (self.embeddings, self.hidden_w, self.hidden_b, self.head_w, self.head_b):
            parts.append("none" if arr is None else
                         sha256_bytes(np.ascontiguousarray(arr).tobytes()))
        return sha256_text("\x00".join(parts))

    @property
    def vocab_hash(self) -> str:
        return self.vocab.content_hash

    def head_theta(self) -> np.ndarray:
        """Flat head parameters: row-major head_w, then head_b."""
        return np.concatenate([self.head_w.ravel(), self.head_b])

    def with_head(self, theta: np.ndarray) -> "ModelSnapshot":
        c, h = self.config.num_classes, self.config.rep_dim
        if theta.shape != (c * h + c,):
            raise ValueError("flat head has wrong length")
        return replace(self, head_w=theta[:c * h].reshape(c, h).copy(),
                       head_b=theta[c * h:].copy(), metrics=dict(self.metrics))


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate activations for one serialized input."""

    token_ids: tuple[int, ...]
    mask: np.ndarray          # (n,) float, 0 at PAD positions
    embeddings: np.ndarray    # (n, d)
    pooled: np.ndarray        # (d,)
    rep: np.ndarray           # (rep_dim,) head input
    logits: np.ndarray        # (C,)
    probs: np.ndarray         # (C,)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_from_embeddings(snapshot: ModelSnapshot, emb: np.ndarray,
                            mask: np.ndarray) -> dict[str, np.ndarray]:
    """Forward pass from an explicit embedding block.

    emb is (n, d) or (S, n, d) with one shared (n,) mask; S-stacked inputs
    are used by path-integral attribution. Returns pooled, rep, logits, probs
    with matching leading shape.
    """
    single = emb.ndim == 2
    e = emb[None] if single else emb
    m = mask.astype(np.float64)
    n_eff = m.sum()
    if n_eff > 0:
        pooled = np.einsum("snd,n->sd", e, m) / n_eff
    else:
        pooled = np.zeros((e.shape[0], e.shape[2]))
    if snapshot.hidden_w is not None:
        rep = np.tanh(pooled @ snapshot.hidden_w.T + snapshot.hidden_b)
    else:
        rep = pooled
    logits = rep @ snapshot.head_w.T + snapshot.head_b
    probs = _softmax(logits)
    out = {"pooled": pooled, "rep": rep, "logits": logits, "probs": probs}
    return {k: v[0] for k, v in out.items()} if single else out


def grads_to_embeddings(snapshot: ModelSnapshot, rep: np.ndarray,
                        d_rep: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Push d(scalar)/d(rep) back to per-position embedding gradients.

    rep and d_rep are (rep_dim,) or (S, rep_dim); the result matches with a
    trailing (n, d). Mean pooling spreads the pooled gradient by mask/n_eff.
    """
    single = rep.ndim == 1
    a = rep[None] if single else rep
    da = d_rep[None] if single else d_rep
    if snapshot.hidden_w is not None:
        d_pooled = ((1.0 - a ** 2) * da) @ snapshot.hidden_w
    else:
        d_pooled = da
    m = mask.astype(np.float64)
    n_eff = m.sum()
    coeff = m / n_eff if n_eff > 0 else m
    out = coeff[None, :, None] * d_pooled[:, None, :]
    return out[0] if single else out


class EmbeddingScore(Protocol):
    """A differentiable scalar of one input's embedding block.

    Implementations provide batched evaluation over S stacked embedding
    blocks sharing a padding mask; feature and training-feature attribution
    consume this interface for both plain gradients and path integrals.
    """

    def values(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """(S, n, d) -> (S,)"""
        ...

    def grads(self, emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """(S, n, d) -> (S, n, d)"""
        ...


def instance_embeddings(snapshot: ModelSnapshot, instance: Instance
                        ) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    ids = instance.input_ids()
    emb = snapshot.embeddings[list(ids)].astype(np.float64)
    mask = np.array([tid != PAD for tid in ids], dtype=np.float64)
    return emb, mask, ids


def forward(snapshot: ModelSnapshot, instance: Instance) -> ForwardTrace:
    emb, mask, ids = instance_embeddings(snapshot, instance)
    parts = forward_from_embeddings(snapshot, emb, mask)
    return ForwardTrace(ids, mask, emb, parts["pooled"], parts["rep"],
                        parts["logits"], parts["probs"])


def predict(snapshot: ModelSnapshot, instance: Instance
            ) -> tuple[int, np.ndarray, ForwardTrace]:
    """Returns (argmax class, probabilities, trace); ties pick the lowest index."""
    trace = forward(snapshot, instance)
    return int(np.argmax(trace.probs)), trace.probs, trace


def _pad_batch(instances: list[Instance] | tuple[Instance, ...]
               ) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad serialized ids to a rectangle; returns (ids, mask)."""
    seqs = [inst.input_ids() for inst in instances]
    n = max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    return ids, (ids != PAD).astype(np.float64)


def batch_forward(snapshot: ModelSnapshot, instances: list[Instance] | tuple[Instance, ...]
                  ) -> dict[str, np.ndarray]:
    """Vectorized forward over instances of varying length."""
    ids, mask = _pad_batch(instances)
    emb = snapshot.embeddings[ids]
    n_eff = np.maximum(mask.sum(axis=1), 1.0)
    pooled = np.einsum("bnd,bn->bd", emb, mask) / n_eff[:, None]
    if snapshot.hidden_w is not None:
        rep = np.tanh(pooled @ snapshot.hidden_w.T + snapshot.hidden_b)
    else:
        rep = pooled
    logits = rep @ snapshot.head_w.T + snapshot.head_b
    return {"ids": ids, "mask": mask, "pooled": pooled, "rep": rep,
            "logits": logits, "probs": _softmax(logits)}


def grad_embeddings(snapshot: ModelSnapshot, instance: Instance,
                    scalar: str | EmbeddingScore = "logit",
                    target_class: int | None = None) -> np.ndarray:
    """Exact per-position gradient of a scalar w.r.t. the input embeddings.

    scalar is "logit" (target_class, default the predicted class), "loss"
    (cross-entropy at the instance's own label), or any EmbeddingScore.
    Result is (n, d) over the serialized token positions.
    """
    emb, mask, _ = instance_embeddings(snapshot, instance)
    if not isinstance(scalar, str):
        g = scalar.grads(emb[None], mask)[0]
        if not np.all(np.isfinite(g)):
            raise ModelError("non-finite attribution gradient")
        return g
    parts = forward_from_embeddings(snapshot, emb, mask)
    c = snapshot.config.num_classes
    if scalar == "logit":
        target = int(np.argmax(parts["probs"])) if target_class is None else target_class
        if not 0 <= target < c:
            raise ValueError(f"target class {target} out of range")
        d_logits = np.zeros(c)
        d_logits[target] = 1.0
    elif scalar == "loss":
        d_logits = parts["probs"].copy()
        d_logits[instance.label] -= 1.0
    else:
        raise ValueError(f"unknown scalar {scalar!r}")
    d_rep = d_logits @ snapshot.head_w
    g = grads_to_embeddings(snapshot, parts["rep"], d_rep, mask)
    if not np.all(np.isfinite(g)):
        raise ModelError("non-finite attribution gradient")
    return g


def head_grad(snapshot: ModelSnapshot, instance: Instance) -> np.ndarray:
    """Gradient of this instance's cross-entropy loss w.r.t. flat head params."""
    trace = forward(snapshot, instance)
    delta = trace.probs.copy()
    delta[instance.label] -= 1.0
    return np.concatenate([np.outer(delta, trace.rep).ravel(), delta])


def head_grads_batch(snapshot: ModelSnapshot, dataset: Dataset | list[Instance]
                     ) -> np.ndarray:
    """(N, p) loss gradients w.r.t. the flat head, one row per instance."""
    instances = list(dataset)
    parts = batch_forward(snapshot, instances)
    delta = parts["probs"].copy()
    labels = [inst.label for inst in instances]
    delta[np.arange(len(instances)), labels] -= 1.0
    gw = np.einsum("bc,bh->bch", delta, parts["rep"]).reshape(len(instances), -1)
    return np.concatenate([gw, delta], axis=1)


def _aug_permutation(c: int, h: int) -> np.ndarray:
    """Map [vec(head_w); head_b] positions to the (class, rep+1) layout."""
    perm = np.empty(c * h + c, dtype=np.int64)
    for ci in range(c):
        perm[ci * h:(ci + 1) * h] = ci * (h + 1) + np.arange(h)
        perm[c * h + ci] = ci * (h + 1) + h
    return perm


@dataclass(frozen=True)
class HeadHessianContext:
    """Factored damped head Hessian of the training objective.

    matrix holds mean per-instance CE Hessians plus l2_reg on the diagonal;
    the Cholesky factor includes the extra damping term so solves are always
    well-posed.
    """

    matrix: np.ndarray
    damping: float
    snapshot_hash: str
    _factor: tuple = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def solve(self, v: np.ndarray) -> np.ndarray:
        """(H + damping*I)^-1 v, for v of shape (p,) or (p, k)."""
        return cho_solve(self._factor, v)

    def inv_quad(self, g: np.ndarray) -> float:
        """g^T (H + damping*I)^-1 g, guaranteed >= 0."""
        return float(max(g @ self.solve(g), 0.0))


def build_head_hessian(snapshot: ModelSnapshot, train: Dataset,
                       damping: float | None = None) -> HeadHessianContext:
    """Assemble and factor the damped head Hessian from the training set."""
    if len(train) == 0:
        raise ModelError("cannot build a Hessian from an empty training set")
    damping = snapshot.config.damping if damping is None else damping
    if damping <= 0:
        raise ModelError("damping must be > 0")
    parts = batch_forward(snapshot, list(train))
    probs, rep = parts["probs"], parts["rep"]
    n, c = probs.shape
    h = rep.shape[1]
    aug = np.concatenate([rep, np.ones((n, 1))], axis=1)            # (n, h+1)
    p_mat = probs[:, :, None] * np.eye(c)[None] - np.einsum("nc,nk->nck", probs, probs)
    h_aug = np.einsum("nck,ni,nj->cikj", p_mat, aug, aug) / n       # (c,h+1,c,h+1)
    h_aug = h_aug.reshape(c * (h + 1), c * (h + 1))
    perm = _aug_permutation(c, h)
    hess = h_aug[np.ix_(perm, perm)]
    hess = 0.5 * (hess + hess.T) + snapshot.config.l2_reg * np.eye(len(perm))
    if not np.all(np.isfinite(hess)):
        raise ModelError("non-finite head Hessian")
    factor = cho_factor(hess + damping * np.eye(len(perm)), lower=True)
    ctx = HeadHessianContext(hess, damping, snapshot.snapshot_hash)
    object.__setattr__(ctx, "_factor", factor)
    return ctx


def head_hessian_solve(snapshot: ModelSnapshot, train: Dataset, v: np.ndarray,
                       damping: float | None = None) -> np.ndarray:
    return build_head_hessian(snapshot, train, damping).solve(v)


def _objective(snapshot: ModelSnapshot, instances: list[Instance]) -> float:
    parts = batch_forward(snapshot, instances)
    labels = [inst.label for inst in instances]
    probs = parts["probs"][np.arange(len(instances)), labels]
    ce = float(-np.log(np.maximum(probs, 1e-300)).mean())
    theta = snapshot.head_theta()
    return ce + 0.5 * snapshot.config.l2_reg * float(theta @ theta)


def evaluate(snapshot: ModelSnapshot, dataset: Dataset) -> dict[str, float]:
    parts = batch_forward(snapshot, list(dataset))
    labels = np.array([inst.label for inst in dataset])
    pred = parts["probs"].argmax(axis=1)
    probs = parts["probs"][np.arange(len(labels)), labels]
    return {"accuracy": float((pred == labels).mean()),
            "loss": float(-np.log(np.maximum(probs, 1e-300)).mean())}


def train(dataset: Dataset, config: ModelConfig,
          val_dataset: Dataset | None = None,
          pretrained: dict[str, np.ndarray] | None = None,
          freeze_embeddings: bool | None = None) -> ModelSnapshot:
    """Mini-batch gradient descent on mean cross-entropy plus head L2.

    Deterministic for a fixed seed. epochs=0 returns the initialization.
    Raises TrainingDiverged (naming the epoch) if the loss goes non-finite.
    """
    if len(dataset) == 0:
        raise ModelError("cannot train on an empty dataset")
    if config.num_classes != len(dataset.class_names):
        raise ModelError("config num_classes does not match dataset classes")
    rng = np.random.default_rng(config.seed)
    v, d, h, c = len(dataset.vocab), config.embedding_dim, config.hidden_dim, config.num_classes

    emb = rng.normal(0.0, 0.1, size=(v, d))
    emb[:4] = 0.0  # reserved rows start at the origin; PAD never trains
    if pretrained:
        for token, vec in pretrained.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (d,):
                raise ModelError(f"pretrained vector for {token!r} has dim {vec.shape}")
            tid = dataset.vocab.id_of(token)
            emb[tid] = vec
    frozen = bool(pretrained) if freeze_embeddings is None else freeze_embeddings

    if h > 0:
        hid_w = rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d))
        hid_b = np.zeros(h)
        head_w = rng.normal(0.0, 1.0 / np.sqrt(h), size=(c, h))
    else:
        hid_w = hid_b = None
        head_w = rng.normal(0.0, 1.0 / np.sqrt(d), size=(c, d))
    head_b = np.zeros(c)

    ids_all, mask_all = _pad_batch(list(dataset))
    labels_all = np.array([inst.label for inst in dataset])
    n = len(dataset)
    lr, lam = config.learning_rate, config.l2_reg

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            sel = order[start:start + config.batch_size]
            ids, mask, labels = ids_all[sel], mask_all[sel], labels_all[sel]
            b = len(sel)
            e = emb[ids]
            n_eff = np.maximum(mask.sum(axis=1), 1.0)
            pooled = np.einsum("bnd,bn->bd", e, mask) / n_eff[:, None]
            if h > 0:
                act = np.tanh(pooled @ hid_w.T + hid_b)
            else:
                act = pooled
            logits = act @ head_w.T + head_b
            probs = _softmax(logits)
            batch_ce = -np.log(np.maximum(probs[np.arange(b), labels], 1e-300)).sum()
            epoch_loss += batch_ce

            delta = probs.copy()
            delta[np.arange(b), labels] -= 1.0
            delta /= b
            g_head_w = delta.T @ act + lam * head_w
            g_head_b = delta.sum(axis=0) + lam * head_b
            d_act = delta @ head_w
            if h > 0:
                d_z = (1.0 - act ** 2) * d_act
                g_hid_w = d_z.T @ pooled
                g_hid_b = d_z.sum(axis=0)
                d_pooled = d_z @ hid_w
            else:
                d_pooled = d_act

            head_w -= lr * g_head_w
            head_b -= lr * g_head_b
            if h > 0:
                hid_w -= lr * g_hid_w
                hid_b -= lr * g_hid_b
            if not frozen:
                contrib = (mask / n_eff[:, None])[:, :, None] * d_pooled[:, None, :]
                g_emb = np.zeros_like(emb)
                np.add.at(g_emb, ids, contrib)
                emb -= lr * g_emb
                emb[PAD] = 0.0

        mean_loss = epoch_loss / n
        # Beyond ~100 nats the softmax is saturated on wrong answers, which
        # only happens when the step size has blown the weights up.
        if not np.isfinite(mean_loss) or mean_loss > 100.0:
            raise TrainingDiverged(f"training diverged at epoch {epoch} (loss={mean_loss:.3g})")

    snapshot = ModelSnapshot(config, dataset.vocab, emb, hid_w, hid_b,
                             head_w, head_b, metrics={})
    metrics = {"train_" + k: v for k, v in evaluate(snapshot, dataset).items()}
    if val_dataset is not None:
        metrics.update({"val_" + k: v for k, v in evaluate(snapshot, val_dataset).items()})
    metrics["epochs_run"] = float(config.epochs)
    return replace(snapshot, metrics=metrics)


def refit_head(snapshot: ModelSnapshot, dataset: Dataset,
               instances: list[Instance] | None = None,
               tol: float = 1e-10, max_iter: int = 200) -> ModelSnapshot:
    """Newton-optimize the head on (a subset of) a dataset, body fixed.

    The head objective (mean CE + l2_reg) is convex, so with l2_reg > 0 this
    converges to the unique optimum regardless of the starting point. Used
    for leave-one-out oracles and for serving a fully converged head.
    """
    insts = list(dataset) if instances is None else list(instances)
    if not insts:
        raise ModelError("refit_head needs at least one instance")
    lam = snapshot.config.l2_reg
    current = snapshot
    for _ in range(max_iter):
        theta = current.head_theta()
        grad = head_grads_batch(current, insts).mean(axis=0) + lam * theta
        if np.abs(grad).max() <= tol:
            return current
        sub = Dataset(tuple(insts), dataset.class_names, dataset.vocab, dataset.role)
        ctx = build_head_hessian(current, sub, damping=max(lam * 1e-6, 1e-10))
        step = ctx.solve(grad)
        # Backtracking keeps Newton monotone even in poorly conditioned cases.
        t, base = 1.0, _objective(current, insts)
        for _ in range(40):
            cand = current.with_head(theta - t * step)
            if _objective(cand, insts) <= base:
                current = cand
                break
            t *= 0.5
        else:
            raise ModelError("head refit line search failed")
    grad = head_grads_batch(current, insts).mean(axis=0) + lam * current.head_theta()
    if np.abs(grad).max() > 1e-6:
        raise ModelError("head refit did not converge; use l2_reg > 0")
    return current


def load_embeddings_tsv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse "token<TAB>v1 v2 ... vd" lines into a token->vector map."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                token, values = line.rstrip("\n").split("\t", 1)
                vec = np.array([float(x) for x in values.split()], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: bad embedding line") from exc
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{line_no}: inconsistent dimension")
            table[token] = vec
    if not table:
        raise ValueError(f"{path}: no embeddings")
    return table


def save_checkpoint(snapshot: ModelSnapshot, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": snapshot.config.to_dict(),
        "vocab_hash": snapshot.vocab_hash,
        "metrics": snapshot.metrics,
        "params": {
            "embeddings": snapshot.embeddings.tolist(),
            "hidden_w": None if snapshot.hidden_w is None else snapshot.hidden_w.tolist(),
            "hidden_b": None if snapshot.hidden_b is None else snapshot.hidden_b.tolist(),
            "head_w": snapshot.head_w.tolist(),
            "head_b": snapshot.head_b.tolist(),
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_checkpoint(path: str | Path, vocab: Vocab) -> ModelSnapshot:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ModelError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if payload["vocab_hash"] != vocab.content_hash:
        raise ModelError(
            f"{path}: checkpoint was built for a different vocabulary "
            f"({payload['vocab_hash'][:12]} != {vocab.content_hash[:12]})")
    config = ModelConfig.from_dict(payload["config"])
    params = payload["params"]

    def arr(key: str) -> np.ndarray | None:
        return None if params[key] is None else np.array(params[key], dtype=np.float64)

    return ModelSnapshot(config, vocab, arr("embeddings"), arr("hidden_w"),
                         arr("hidden_b"), arr("head_w"), arr("head_b"),
                         metrics=payload.get("metrics", {}))
