from __future__ import annotations

import numpy as np
import pytest

from artifact.corpus import Dataset, Instance, Vocab
from artifact.model import ModelConfig, train
from artifact.synth import planted_sentiment_corpus


def finite_diff_embedding_grad(value_fn, emb: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar over an (n, d) embedding block."""
    grad = np.zeros_like(emb)
    for j in range(emb.shape[0]):
        for k in range(emb.shape[1]):
            plus = emb.copy()
            plus[j, k] += step
            minus = emb.copy()
            minus[j, k] -= step
            grad[j, k] = (value_fn(plus) - value_fn(minus)) / (2.0 * step)
    return grad


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    denom = max(float(np.abs(exact).max()), 1e-8)
    return float(np.abs(approx - exact).max()) / denom


def tiny_vocab() -> Vocab:
    return Vocab(("good", "bad", "movie", "plot", "fine", "dull", "odd", "key"))


def make_instance(vocab: Vocab, words: list[str], label: int, inst_id: str = "x",
                  words_b: list[str] | None = None) -> Instance:
    return Instance(inst_id, vocab.encode(words),
                    vocab.encode(words_b) if words_b is not None else None,
                    label, " ".join(words))


def tiny_dataset(vocab: Vocab | None = None, n: int = 12, seed: int = 3) -> Dataset:
    vocab = vocab or tiny_vocab()
    rng = np.random.default_rng(seed)
    pools = (["bad", "dull", "odd"], ["good", "fine", "key"])
    insts = []
    for i in range(n):
        label = i % 2
        words = [pools[label][int(rng.integers(3))] for _ in range(int(rng.integers(3, 6)))]
        words.append("movie" if rng.random() < 0.5 else "plot")
        insts.append(make_instance(vocab, words, label, f"i{i}"))
    return Dataset(tuple(insts), ("neg", "pos"), vocab, "train")


@pytest.fixture(scope="session")
def hidden_snapshot():
    """Small trained model with a tanh layer, for derivative checks."""
    ds = tiny_dataset(n=16)
    cfg = ModelConfig(embedding_dim=6, hidden_dim=5, num_classes=2,
                      l2_reg=0.01, learning_rate=0.3, epochs=40,
                      batch_size=8, seed=7)
    return train(ds, cfg), ds


@pytest.fixture(scope="session")
def planted_setup():
    """Shared planted-token corpus plus a trained linear model."""
    train_ds, val_ds, test_ds = planted_sentiment_corpus(
        n_train=160, n_val=40, n_test=80, seed=11)
    cfg = ModelConfig(embedding_dim=10, hidden_dim=0, num_classes=2,
                      l2_reg=0.003, learning_rate=0.5, epochs=120,
                      batch_size=32, seed=5)
    snapshot = train(train_ds, cfg, val_dataset=val_ds)
    return snapshot, train_ds, val_ds, test_ds
