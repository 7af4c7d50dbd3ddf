from __future__ import annotations

import numpy as np
import pytest

from artifact.corpus import PAD, Instance, Vocab
from artifact.model import (ModelConfig, ModelSnapshot, TrainingDiverged,
                            build_head_hessian, forward,
                            forward_from_embeddings, grad_embeddings,
                            head_grad, head_grads_batch, head_hessian_solve,
                            load_checkpoint, load_embeddings_tsv, predict,
                            refit_head, save_checkpoint, train)
from conftest import (finite_diff_embedding_grad, make_instance, rel_err,
                      tiny_dataset, tiny_vocab)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(embedding_dim=0)
        with pytest.raises(ValueError):
            ModelConfig(embedding_dim=4, num_classes=1)
        with pytest.raises(ValueError):
            ModelConfig(embedding_dim=4, damping=0.0)
        with pytest.raises(ValueError):
            ModelConfig(embedding_dim=4, l2_reg=-1.0)

    def test_rep_dim_tracks_hidden(self):
        assert ModelConfig(embedding_dim=7).rep_dim == 7
        assert ModelConfig(embedding_dim=7, hidden_dim=3).rep_dim == 3


class TestTraining:
    def test_zero_epochs_is_initialization_and_reserved_rows_zero(self):
        ds = tiny_dataset()
        cfg = ModelConfig(embedding_dim=5, epochs=0, seed=1)
        snap = train(ds, cfg)
        assert np.all(snap.embeddings[:4] == 0.0)

    def test_bit_identical_for_same_seed(self):
        ds = tiny_dataset()
        cfg = ModelConfig(embedding_dim=5, epochs=8, seed=42, learning_rate=0.2)
        s1, s2 = train(ds, cfg), train(ds, cfg)
        assert s1.snapshot_hash == s2.snapshot_hash
        assert np.array_equal(s1.embeddings, s2.embeddings)

    def test_seed_changes_parameters(self):
        ds = tiny_dataset()
        base = dict(embedding_dim=5, epochs=8, learning_rate=0.2)
        s1 = train(ds, ModelConfig(seed=1, **base))
        s2 = train(ds, ModelConfig(seed=2, **base))
        assert s1.snapshot_hash != s2.snapshot_hash

    def test_learns_the_toy_task(self):
        ds = tiny_dataset(n=24)
        cfg = ModelConfig(embedding_dim=8, epochs=60, learning_rate=0.5,
                          l2_reg=0.01, seed=0)
        snap = train(ds, cfg)
        assert snap.metrics["train_accuracy"] >= 0.9

    def test_divergence_raises_with_epoch(self):
        # contradictory labels + huge steps: the loss cannot settle
        v = tiny_vocab()
        insts = tuple(make_instance(v, ["good", "movie"], i % 2, f"c{i}")
                      for i in range(8))
        from artifact.corpus import Dataset
        ds = Dataset(insts, ("neg", "pos"), v)
        cfg = ModelConfig(embedding_dim=5, epochs=200, learning_rate=1e5,
                          batch_size=1, seed=0)
        with pytest.raises(TrainingDiverged, match="epoch"):
            train(ds, cfg)

    def test_class_count_mismatch(self):
        ds = tiny_dataset()
        with pytest.raises(Exception, match="classes"):
            train(ds, ModelConfig(embedding_dim=4, num_classes=3))

    def test_pretrained_embeddings_are_used_and_frozen(self):
        ds = tiny_dataset()
        vec = np.arange(5, dtype=float)
        snap = train(ds, ModelConfig(embedding_dim=5, epochs=5, seed=0),
                     pretrained={"good": vec})
        assert np.array_equal(snap.embeddings[ds.vocab.id_of("good")], vec)

    def test_embeddings_tsv_parsing(self, tmp_path):
        p = tmp_path / "emb.tsv"
        p.write_text("good\t1 2 3\nbad\t4 5 6\n")
        table = load_embeddings_tsv(p)
        assert np.array_equal(table["bad"], [4.0, 5.0, 6.0])
        p.write_text("good\t1 2 3\nbad\t4 5\n")
        with pytest.raises(ValueError, match="dimension"):
            load_embeddings_tsv(p)


class TestForward:
    def test_probs_sum_to_one(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        for inst in list(ds)[:5]:
            trace = forward(snap, inst)
            assert abs(trace.probs.sum() - 1.0) <= 1e-9

    def test_mean_pool_matches_manual(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        inst = ds[0]
        trace = forward(snap, inst)
        ids = inst.input_ids()
        manual = np.mean([snap.embeddings[t] for t in ids if t != PAD], axis=0)
        np.testing.assert_allclose(trace.pooled, manual, atol=1e-12)

    def test_all_pad_gives_bias_only_logits(self):
        ds = tiny_dataset()
        cfg = ModelConfig(embedding_dim=4, hidden_dim=0, epochs=3, seed=0)
        snap = train(ds, cfg)
        inst = Instance("padpad", (PAD, PAD), None, 0, "")
        trace = forward(snap, inst)
        np.testing.assert_allclose(trace.logits, snap.head_b, atol=1e-15)

    def test_predict_recomputes_softmax_consistently(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        pred, probs, trace = predict(snap, ds[1])
        z = trace.logits - trace.logits.max()
        again = np.exp(z) / np.exp(z).sum()
        assert np.abs(again - probs).max() <= 1e-12
        assert pred == int(np.argmax(probs))

    def test_argmax_tie_prefers_lower_class(self):
        v = tiny_vocab()
        cfg = ModelConfig(embedding_dim=2, num_classes=2, epochs=0, seed=0)
        emb = np.zeros((len(v), 2))
        snap = ModelSnapshot(cfg, v, emb, None, None,
                             np.zeros((2, 2)), np.zeros(2))
        pred, probs, _ = predict(snap, make_instance(v, ["good"], 0))
        assert probs[0] == probs[1]
        assert pred == 0


class TestEmbeddingGradients:
    def _fd_check(self, snap, inst, scalar, target=None):
        g = grad_embeddings(snap, inst, scalar, target)
        ids = inst.input_ids()
        mask = np.array([t != PAD for t in ids], dtype=float)

        def value(emb):
            parts = forward_from_embeddings(snap, emb, mask)
            if scalar == "logit":
                t = target if target is not None else int(np.argmax(parts["probs"]))
                return float(parts["logits"][t])
            return float(-np.log(parts["probs"][inst.label]))

        emb0 = snap.embeddings[list(ids)].astype(float)
        fd = finite_diff_embedding_grad(value, emb0)
        assert rel_err(fd, g) <= 1e-4

    def test_logit_gradient_matches_fd(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        self._fd_check(snap, ds[0], "logit", 1)
        self._fd_check(snap, ds[3], "logit", 0)

    def test_loss_gradient_matches_fd(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        self._fd_check(snap, ds[2], "loss")

    def test_positions_share_the_pooled_gradient(self, hidden_snapshot):
        # mean pooling spreads d/dr uniformly: every non-pad row is equal
        snap, ds = hidden_snapshot
        g = grad_embeddings(snap, ds[0], "logit", 1)
        assert np.abs(g - g[0]).max() <= 1e-12

    def test_duplicate_token_positions_get_equal_scores(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        v = ds.vocab
        inst = make_instance(v, ["good", "bad", "good"], 1, "dup")
        g = grad_embeddings(snap, inst, "logit", 1)
        np.testing.assert_allclose(g[0], g[2], atol=1e-15)

    def test_scaling_inverse_in_length(self, hidden_snapshot):
        # same content twice as long -> per-position gradient halves (1/n factor)
        snap, _ = hidden_snapshot
        v = tiny_vocab()
        short = make_instance(v, ["good", "bad"], 1, "s")
        long = make_instance(v, ["good", "bad", "good", "bad"], 1, "l")
        gs = grad_embeddings(snap, short, "logit", 1)
        gl = grad_embeddings(snap, long, "logit", 1)
        np.testing.assert_allclose(gs[0] / 2.0, gl[0], atol=1e-12)

    def test_unknown_scalar_rejected(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        with pytest.raises(ValueError):
            grad_embeddings(snap, ds[0], "entropy")


class TestHeadGradients:
    def test_head_grad_matches_fd(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        inst = ds[4]
        g = head_grad(snap, inst)
        theta0 = snap.head_theta()
        step = 1e-5
        fd = np.zeros_like(theta0)
        for i in range(len(theta0)):
            tp, tm = theta0.copy(), theta0.copy()
            tp[i] += step
            tm[i] -= step
            lp = -np.log(forward(snap.with_head(tp), inst).probs[inst.label])
            lm = -np.log(forward(snap.with_head(tm), inst).probs[inst.label])
            fd[i] = (lp - lm) / (2 * step)
        assert rel_err(fd, g) <= 1e-4

    def test_batch_matches_single(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        batch = head_grads_batch(snap, ds)
        for i, inst in enumerate(ds):
            np.testing.assert_allclose(batch[i], head_grad(snap, inst), atol=1e-12)


class TestHeadHessian:
    def test_solve_residual_small(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        ctx = build_head_hessian(snap, ds)
        rng = np.random.default_rng(0)
        v = rng.normal(size=ctx.matrix.shape[0])
        x = ctx.solve(v)
        residual = (ctx.matrix + ctx.damping * np.eye(len(v))) @ x - v
        assert np.abs(residual).max() <= 1e-8

    def test_zero_maps_to_zero(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        v = np.zeros(snap.config.head_param_count)
        x = head_hessian_solve(snap, ds, v)
        assert np.all(x == 0.0)

    def test_identity_like_hessian(self, hidden_snapshot):
        # With an artificial H ~ I the solve is division by (1 + damping).
        snap, ds = hidden_snapshot
        ctx = build_head_hessian(snap, ds)
        eye_ctx = type(ctx)(np.eye(ctx.matrix.shape[0]), 0.5, snap.snapshot_hash)
        from scipy.linalg import cho_factor
        object.__setattr__(eye_ctx, "_factor",
                           cho_factor(np.eye(ctx.matrix.shape[0]) * 1.5, lower=True))
        v = np.arange(1.0, ctx.matrix.shape[0] + 1.0)
        np.testing.assert_allclose(eye_ctx.solve(v), v / 1.5, atol=1e-12)

    def test_hessian_matches_fd_of_gradient(self, hidden_snapshot):
        # H should be the Jacobian of the mean head gradient plus l2.
        snap, ds = hidden_snapshot
        ctx = build_head_hessian(snap, ds)
        theta0 = snap.head_theta()
        p = len(theta0)
        step = 1e-6
        fd = np.zeros((p, p))
        for i in range(p):
            tp, tm = theta0.copy(), theta0.copy()
            tp[i] += step
            tm[i] -= step
            gp = head_grads_batch(snap.with_head(tp), ds).mean(axis=0)
            gm = head_grads_batch(snap.with_head(tm), ds).mean(axis=0)
            fd[:, i] = (gp - gm) / (2 * step)
        fd += snap.config.l2_reg * np.eye(p)
        assert rel_err(fd, ctx.matrix) <= 1e-4

    def test_mismatched_snapshot_rejected(self, hidden_snapshot):
        snap, ds = hidden_snapshot
        ctx = build_head_hessian(snap, ds)
        other = snap.with_head(snap.head_theta() + 1.0)
        from artifact.instance_attr import influence_if
        with pytest.raises(ValueError, match="different snapshot"):
            influence_if(other, ds[0], ds[1], ds, hessian=ctx)


class TestRefitHead:
    def test_reaches_stationarity(self):
        ds = tiny_dataset(n=20)
        cfg = ModelConfig(embedding_dim=6, hidden_dim=0, epochs=5,
                          learning_rate=0.3, l2_reg=0.05, seed=2)
        snap = refit_head(train(ds, cfg), ds)
        grad = head_grads_batch(snap, ds).mean(axis=0) + cfg.l2_reg * snap.head_theta()
        assert np.abs(grad).max() <= 1e-8


class TestCheckpoint:
    def test_roundtrip_preserves_everything(self, tmp_path, hidden_snapshot):
        snap, ds = hidden_snapshot
        p = tmp_path / "model.json"
        save_checkpoint(snap, p)
        loaded = load_checkpoint(p, ds.vocab)
        assert loaded.snapshot_hash == snap.snapshot_hash
        np.testing.assert_array_equal(loaded.embeddings, snap.embeddings)

    def test_vocab_hash_mismatch_rejected(self, tmp_path, hidden_snapshot):
        snap, _ = hidden_snapshot
        p = tmp_path / "model.json"
        save_checkpoint(snap, p)
        with pytest.raises(Exception, match="different vocab"):
            load_checkpoint(p, Vocab(("not", "the", "same")))
