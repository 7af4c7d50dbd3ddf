"""Shipping gate: every release criterion as one pass/fail test.

Each test prints one ACCEPTANCE line with its measured numbers, pins its
tolerances inline, and asserts its wall-clock budget. Run with -s to see
the lines for passing tests; `pytest -v` shows the per-criterion verdicts.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from collections import Counter

import numpy as np
import pytest
from scipy.stats import spearmanr

from artifact.baselines import competency, pmi
from artifact.config import config_from_dict
from artifact.corpus import (N_RESERVED, Dataset, Instance, Vocab, save_jsonl)
from artifact.feature_attr import (ig_completeness_gap, integrated_gradients,
                                   grad_saliency, top_k)
from artifact.instance_attr import euc, rank
from artifact.model import (ModelConfig, build_head_hessian, forward,
                            forward_from_embeddings, grad_embeddings,
                            head_grad, head_grads_batch, instance_embeddings,
                            refit_head, train)
from artifact.pipeline import discover
from artifact.synth import pair_overlap_corpus, planted_sentiment_corpus
from artifact.tfa import aggregated_token_analysis, tfa_ig
from artifact.verify import (expected_random_hits, expected_random_overlap,
                             hits_at_k, mask_flip_rate, overlap_rate)

from conftest import finite_diff_embedding_grad, rel_err

PLANTED = "dragon"


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def planted_run():
    """100-test planted corpus and the model that learned its shortcut."""
    train_ds, val_ds, test_ds = planted_sentiment_corpus(
        n_train=160, n_val=40, n_test=100, planted=PLANTED, seed=11)
    cfg = ModelConfig(embedding_dim=10, hidden_dim=0, num_classes=2,
                      l2_reg=0.003, learning_rate=0.5, epochs=120,
                      batch_size=32, seed=5)
    snapshot = train(train_ds, cfg, val_dataset=val_ds)
    return snapshot, train_ds, val_ds, test_ds


def test_gradient_fidelity_fd(hidden_snapshot):
    """Criterion 1: analytic gradients match central differences, < 10 s."""
    t0 = time.monotonic()
    snapshot, dataset = hidden_snapshot
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(20):
        inst = dataset[int(rng.integers(len(dataset)))]
        scalar = "logit" if trial % 2 == 0 else "loss"
        target = int(rng.integers(snapshot.config.num_classes))
        _, mask, _ = instance_embeddings(snapshot, inst)

        def value_fn(emb):
            parts = forward_from_embeddings(snapshot, emb, mask)
            if scalar == "logit":
                return float(parts["logits"][target])
            return float(-np.log(parts["probs"][inst.label]))

        emb, _, _ = instance_embeddings(snapshot, inst)
        fd = finite_diff_embedding_grad(value_fn, emb, step=1e-5)
        analytic = grad_embeddings(snapshot, inst, scalar, target_class=target)
        worst = max(worst, rel_err(analytic, fd))

    # head-parameter gradients against the same oracle
    theta0 = snapshot.head_theta()
    for inst in list(dataset)[:5]:
        def head_value(theta):
            probs = forward(snapshot.with_head(theta), inst).probs
            return float(-np.log(probs[inst.label]))

        fd = np.zeros_like(theta0)
        for j in range(len(theta0)):
            up, down = theta0.copy(), theta0.copy()
            up[j] += 1e-5
            down[j] -= 1e-5
            fd[j] = (head_value(up) - head_value(down)) / 2e-5
        worst = max(worst, rel_err(head_grad(snapshot, inst), fd))

    elapsed = time.monotonic() - t0
    ok = worst <= 1e-4 and elapsed < 10.0
    _verdict("1 gradient-fidelity", ok,
             f"max rel err {worst:.2e} <= 1e-4, {elapsed:.2f}s < 10s")


def test_ig_completeness(hidden_snapshot, planted_run):
    """Criterion 2: attributions sum to the endpoint difference, < 30 s."""
    t0 = time.monotonic()
    snapshot, dataset = hidden_snapshot
    worst_ratio = 0.0
    for inst in list(dataset)[:5]:
        sal = integrated_gradients(snapshot, inst, steps=128)
        gap, delta = ig_completeness_gap(snapshot, inst, sal)
        worst_ratio = max(worst_ratio,
                          abs(gap) / (1e-3 * abs(delta) + 1e-6))

    # same bound for path-integrated train-token scores of each
    # instance-attribution scalar, hidden and linear models both
    lin_snapshot, lin_train, _, lin_test = planted_run
    setups = [(snapshot, dataset, dataset[0], dataset[1]),
              (lin_snapshot, lin_train, lin_test[0], lin_train[0])]
    for snap, train_ds, test_inst, train_inst in setups:
        ctx = build_head_hessian(snap, train_ds)
        for method in ("IF", "RIF", "EUC"):
            sal = tfa_ig(snap, test_inst, train_inst, train_ds, method,
                         steps=128, hessian=ctx)
            gap = abs(sum(sal.scores) - (sal.score_value - sal.baseline_value))
            denom = 1e-3 * abs(sal.score_value - sal.baseline_value) + 1e-6
            worst_ratio = max(worst_ratio, gap / denom)

    elapsed = time.monotonic() - t0
    ok = worst_ratio <= 1.0 and elapsed < 30.0
    _verdict("2 ig-completeness", ok,
             f"worst gap at {worst_ratio:.3f} of bound, {elapsed:.2f}s < 30s")


def test_influence_matches_loo_retraining():
    """Criterion 3: influence tracks true leave-one-out deltas, < 2 min."""
    t0 = time.monotonic()
    rng = np.random.default_rng(42)
    words = [f"w{i}" for i in range(30)]
    vocab = Vocab(tuple(words))

    def make(n, seed, role):
        r = np.random.default_rng(seed)
        out = []
        for i in range(n):
            label = i % 2
            toks = []
            for _ in range(int(r.integers(5, 9))):
                pool = ([w for j, w in enumerate(words) if j % 2 == label]
                        if r.random() < 0.55 else words)
                toks.append(pool[int(r.integers(len(pool)))])
            out.append(Instance(f"{role}-{i}", vocab.encode(toks), None,
                                label, " ".join(toks)))
        return Dataset(tuple(out), ("a", "b"), vocab, role)

    train_ds, test_ds = make(40, 1, "train"), make(10, 2, "test")
    pre = {w: rng.normal(0.0, 1.0, 8) for w in words}
    cfg = ModelConfig(embedding_dim=8, hidden_dim=0, num_classes=2,
                      l2_reg=0.1, learning_rate=0.5, epochs=0, batch_size=16,
                      seed=0, damping=1e-3)
    snapshot = refit_head(train(train_ds, cfg, pretrained=pre), train_ds)
    ctx = build_head_hessian(snapshot, train_ds)

    def loss_on(snap, inst):
        return float(-np.log(max(forward(snap, inst).probs[inst.label], 1e-300)))

    loo = []
    for i in range(len(train_ds)):
        keep = tuple(x for j, x in enumerate(train_ds) if j != i)
        loo.append(refit_head(snapshot, Dataset(keep, ("a", "b"), vocab, "train")))

    grads = head_grads_batch(snapshot, train_ds)
    solved = np.array([ctx.solve(g) for g in grads])
    rhos = []
    for t_inst in test_ds:
        base = loss_on(snapshot, t_inst)
        deltas = [loss_on(s, t_inst) - base for s in loo]
        scores = solved @ head_grad(snapshot, t_inst)
        rhos.append(spearmanr(scores, deltas).statistic)

    mean_rho = float(np.mean(rhos))
    elapsed = time.monotonic() - t0
    ok = mean_rho >= 0.8 and elapsed < 120.0
    _verdict("3 influence-loo-fidelity", ok,
             f"mean Spearman {mean_rho:.3f} >= 0.8 over 10 test points, "
             f"{elapsed:.2f}s < 2min")


def test_synthetic_artifact_recovery(planted_run):
    """Criterion 4: the planted token surfaces in top-5 tables, < 5 min."""
    t0 = time.monotonic()
    snapshot, train_ds, _, test_ds = planted_run
    ctx = build_head_hessian(snapshot, train_ds)

    tfa_hits = {}
    for method in ("EUC", "RIF", "IF"):
        lists = []
        for inst in test_ds:
            report = aggregated_token_analysis(
                snapshot, inst, train_ds, instance_method=method,
                feature_method="IG", k_pct=10.0, top_m=1, hessian=ctx,
                steps=32)
            # both extreme slices: the artifact carriers surface as
            # counter-evidence when the test point is predicted other-class
            lists.append([t for t, _ in report.pooled_entries()[:5]])
        tfa_hits[f"{method}+IG"] = hits_at_k(lists, {PLANTED}, 5).value

    fa_hits = {}
    for method in ("IG", "G"):
        lists = []
        for inst in test_ds:
            sal = (integrated_gradients(snapshot, inst, steps=32)
                   if method == "IG" else grad_saliency(snapshot, inst))
            lists.append(top_k(sal, 5))
        fa_hits[method] = hits_at_k(lists, {PLANTED}, 5).value

    n_content = len(train_ds.vocab) - N_RESERVED
    random_rate = expected_random_hits(n_content, 1, 5)
    best_tfa = max(tfa_hits.values())
    best_fa = max(fa_hits.values())

    elapsed = time.monotonic() - t0
    ok = (best_tfa >= 0.8 and best_tfa >= best_fa and best_fa > random_rate
          and elapsed < 300.0)
    _verdict("4 artifact-recovery", ok,
             f"tfa {tfa_hits}, fa {fa_hits}, random {random_rate:.3f}; "
             f"best tfa {best_tfa:.2f} >= 0.8 and >= best fa {best_fa:.2f} "
             f"> random, {elapsed:.1f}s < 5min")


def test_mask_flip_sensitivity(planted_run):
    """Criterion 5: masking the artifact flips >= 10x chance, < 1 min."""
    t0 = time.monotonic()
    snapshot, _, _, test_ds = planted_run
    planted = mask_flip_rate(snapshot, test_ds, token=PLANTED)
    chance = mask_flip_rate(snapshot, test_ds, random_trials=10, seed=0)
    elapsed = time.monotonic() - t0
    ok = (planted.flip_fraction >= 10.0 * chance.flip_fraction
          and planted.n_affected == len(test_ds) and elapsed < 60.0)
    _verdict("5 mask-flip-sensitivity", ok,
             f"planted {planted.flip_fraction:.3f} vs random "
             f"{chance.flip_fraction:.4f} (>= 10x), {elapsed:.1f}s < 1min")


def test_pair_overlap_rate():
    """Criterion 6: top TFA tokens recur across both segments, < 3 min."""
    t0 = time.monotonic()
    train_ds, test_ds = pair_overlap_corpus(n_train=120, n_test=40, seed=9)
    cfg = ModelConfig(embedding_dim=10, hidden_dim=0, num_classes=2,
                      l2_reg=0.01, learning_rate=0.5, epochs=80,
                      batch_size=32, seed=2)
    snapshot = train(train_ds, cfg)
    ctx = build_head_hessian(snapshot, train_ds)

    sals = []
    for t_inst in test_ds:
        top_id = rank(snapshot, t_inst, train_ds, "EUC").ids()[0]
        sals.append(tfa_ig(snapshot, t_inst, train_ds.by_id(top_id),
                           train_ds, "EUC", steps=16, hessian=ctx))
    report = overlap_rate(sals, train_ds)
    random_rate = expected_random_overlap(train_ds)

    elapsed = time.monotonic() - t0
    ok = report.value >= 2.0 * random_rate and elapsed < 180.0
    _verdict("6 pair-overlap", ok,
             f"overlap {report.value:.3f} >= 2x random {random_rate:.3f}, "
             f"{elapsed:.1f}s < 3min")


def test_baseline_rankings_match_oracle(planted_run):
    """Criterion 7: PMI and the z-score table agree with brute counting."""
    _, train_ds, _, _ = planted_run

    # oracle: plain dict counting, no shared code with the implementations
    total: Counter[str] = Counter()
    per_label: dict[str, Counter[str]] = {c: Counter() for c in train_ds.class_names}
    for inst in train_ds:
        toks = [train_ds.vocab.token_of(t) for t in inst.input_ids()
                if t >= N_RESERVED]
        total.update(toks)
        per_label[train_ds.class_names[inst.label]].update(toks)

    smoothing, v = 100.0, len(total)
    n_all = sum(total.values())
    n_pos = sum(per_label["positive"].values())
    oracle_pmi = sorted(
        ((math.log(((per_label["positive"][t] + smoothing) / (n_pos + smoothing * v))
                   / ((c + smoothing) / (n_all + smoothing * v))), t)
         for t, c in total.items()),
        key=lambda s: (-s[0], -per_label["positive"][s[1]], s[1]))

    pmi_table = pmi(train_ds)["positive"]
    same_order = [s.token for s in pmi_table] == [t for _, t in oracle_pmi]
    values_match = all(abs(s.value - val) <= 1e-12
                       for s, (val, _) in zip(pmi_table, oracle_pmi))

    comp_table = competency(train_ds)
    top = comp_table[0]
    n_tok = total[PLANTED]
    n_best = max(per_label[c][PLANTED] for c in train_ds.class_names)
    oracle_z = ((n_best / n_tok) - 0.5) / math.sqrt(0.25 / n_tok)

    ok = (pmi_table[0].token == PLANTED and same_order and values_match
          and top.token == PLANTED and top.label == "positive"
          and abs(top.value - oracle_z) <= 1e-12)
    _verdict("7 baseline-sanity", ok,
             f"pmi #1 {pmi_table[0].token!r}, competency #1 {top.token!r} "
             f"(z {top.value:.2f}), full tables match counting oracle")


def test_report_determinism(tmp_path):
    """Criterion 8: fixed config reproduces reports byte for byte."""
    tr, va, _ = planted_sentiment_corpus(n_train=80, n_val=20, n_test=10,
                                         seed=11)
    save_jsonl(tr, tmp_path / "train.jsonl")
    save_jsonl(va, tmp_path / "val.jsonl")
    cfg = config_from_dict({
        "train_path": str(tmp_path / "train.jsonl"),
        "val_path": str(tmp_path / "val.jsonl"),
        "checkpoint": str(tmp_path / "ckpt.json"),
        "report_dir": str(tmp_path / "reports"),
        "model": {"embedding_dim": 10, "l2_reg": 0.003, "learning_rate": 0.5,
                  "epochs": 120, "batch_size": 32, "seed": 5},
        "steps": 8, "n_heatmaps": 3})

    def digests():
        files = sorted((tmp_path / "reports").glob("*.json"))
        files.append(tmp_path / "ckpt.json")
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in files}

    discover(cfg)
    first = digests()
    discover(cfg)                       # warm: reuses the checkpoint bundle
    warm = digests()
    for name in ("ckpt.json", "ckpt.json.vocab", "ckpt.json.classes"):
        (tmp_path / name).unlink()
    discover(cfg)                       # cold: retrains from scratch
    cold = digests()

    ok = first == warm == cold and "dossier.json" in first
    _verdict("8 determinism", ok,
             f"{len(first)} report files byte-identical across warm and "
             f"cold reruns")


def test_invariance_suite(hidden_snapshot):
    """Criterion 9: scaling and metric properties hold on random fixtures."""
    snapshot, dataset = hidden_snapshot
    ctx = build_head_hessian(snapshot, dataset)
    rng = np.random.default_rng(7)
    grads = head_grads_batch(snapshot, dataset)
    solved = np.array([ctx.solve(g) for g in grads])
    theta_norms = np.sqrt(np.einsum("ij,ij->i", grads, solved))
    ell_norms = np.linalg.norm(solved, axis=1)

    checks = []
    for _ in range(25):
        g_test = head_grad(snapshot, dataset[int(rng.integers(len(dataset)))])
        g_test = g_test + rng.normal(0, 1e-3, g_test.shape)  # break ties
        c = float(rng.uniform(0.05, 40.0))
        base_if = solved @ g_test
        base_rif = base_if / theta_norms
        # positive scaling of the test gradient leaves both orderings alone
        checks.append(np.array_equal(np.argsort(-(solved @ (c * g_test))),
                                     np.argsort(-base_if)))
        checks.append(np.array_equal(
            np.argsort(-((solved @ (c * g_test)) / theta_norms)),
            np.argsort(-base_rif)))
        # positive scaling of a train gradient leaves RIF scores alone
        i = int(rng.integers(len(grads)))
        scaled = ctx.solve(c * grads[i])
        rif_theta_scaled = (g_test @ scaled) / np.sqrt(c * grads[i] @ scaled)
        rif_ell_scaled = (g_test @ scaled) / np.linalg.norm(scaled)
        checks.append(np.isclose(rif_theta_scaled,
                                 (g_test @ solved[i]) / theta_norms[i],
                                 rtol=1e-9, atol=0))
        checks.append(np.isclose(rif_ell_scaled,
                                 (g_test @ solved[i]) / ell_norms[i],
                                 rtol=1e-9, atol=0))

    for _ in range(25):
        a = dataset[int(rng.integers(len(dataset)))]
        b = dataset[int(rng.integers(len(dataset)))]
        checks.append(euc(snapshot, a, b) == euc(snapshot, b, a))
        checks.append(euc(snapshot, a, a) == 0.0)
        rep_a = forward(snapshot, a).rep
        rep_b = forward(snapshot, b).rep
        if not np.array_equal(rep_a, rep_b):
            checks.append(euc(snapshot, a, b) < 0.0)

    ok = all(checks)
    _verdict("9 invariance-suite", ok,
             f"{len(checks)} randomized property checks "
             f"(IF/RIF scaling, EUC metric axioms)")
