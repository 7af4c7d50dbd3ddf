"""Orchestration: train-or-load, aggregate every ranking view, verify.

The discover() entry point chains the whole workflow: fit (or load) a
model, pull the worst-mispredicted validation instances as heatmaps, build
token tables from feature attribution, train-feature attribution, and the
counting baselines, then mask-and-repredict the pooled candidate tokens and
bundle all of it, with provenance hashes, into one JSON dossier.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .baselines import competency, pmi
from .config import RunConfig
from .corpus import Dataset, Instance, Vocab, load_jsonl
from .feature_attr import TokenFrequencyTable, aggregate_over_set
from .model import (HeadHessianContext, ModelSnapshot, build_head_hessian,
                    forward, load_checkpoint, save_checkpoint, train)
from .reporting import read_report, report_envelope, write_report
from .tfa import aggregated_token_analysis, corpus_aggregate, heatmap
from .verify import FlipReport, mask_flip_rate

DOSSIER_KIND = "discovery_dossier"
AGGREGATE_KIND = "aggregate_tables"


# -- checkpoint bundle -------------------------------------------------------
#
# A checkpoint alone cannot be reopened: decode needs the vocabulary and the
# label index needs the class-name order. Both ride along as sibling files.

def bundle_paths(checkpoint: str | Path) -> tuple[Path, Path, Path]:
    p = Path(checkpoint)
    return p, p.with_name(p.name + ".vocab"), p.with_name(p.name + ".classes")


def save_bundle(snapshot: ModelSnapshot, class_names: tuple[str, ...],
                checkpoint: str | Path) -> Path:
    ckpt, vocab_path, classes_path = bundle_paths(checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(snapshot, ckpt)
    snapshot.vocab.save(vocab_path)
    classes_path.write_text("".join(c + "\n" for c in class_names),
                            encoding="utf-8")
    return ckpt


def load_bundle(checkpoint: str | Path) -> tuple[ModelSnapshot, tuple[str, ...]]:
    ckpt, vocab_path, classes_path = bundle_paths(checkpoint)
    for p in (ckpt, vocab_path, classes_path):
        if not p.exists():
            raise FileNotFoundError(f"checkpoint bundle incomplete: missing {p}")
    vocab = Vocab.load(vocab_path)
    class_names = tuple(classes_path.read_text(encoding="utf-8").splitlines())
    return load_checkpoint(ckpt, vocab), class_names


@dataclass(frozen=True)
class RunContext:
    """Everything a pipeline command needs in memory."""

    config: RunConfig
    snapshot: ModelSnapshot
    train: Dataset
    val: Dataset | None
    test: Dataset | None

    def dataset_hashes(self) -> dict[str, str]:
        out = {"train": self.train.content_hash}
        if self.val is not None:
            out["validation"] = self.val.content_hash
        if self.test is not None:
            out["test"] = self.test.content_hash
        return out

    def study_set(self) -> Dataset:
        """The split attribution aggregates run over: validation if present."""
        if self.val is not None:
            return self.val
        if self.test is not None:
            return self.test
        return self.train


def build_context(cfg: RunConfig, need_snapshot: bool = True,
                  force_train: bool = False) -> RunContext:
    """Load datasets per config; load the checkpoint or train a fresh model.

    A missing checkpoint path (or file) with a train set present means
    "train now"; the freshly trained bundle is saved when a checkpoint path
    was configured so later commands reuse it. force_train retrains even
    when a checkpoint exists (without touching it until training succeeds).
    """
    cfg.require("train_path")
    snapshot: ModelSnapshot | None = None
    class_names: tuple[str, ...] | None = None

    use_checkpoint = (need_snapshot and not force_train and cfg.checkpoint
                      and Path(cfg.checkpoint).exists())
    if use_checkpoint:
        snapshot, class_names = load_bundle(cfg.checkpoint)
        train_ds = load_jsonl(cfg.train_path, vocab=snapshot.vocab,
                              class_names=class_names, role="train")
    else:
        train_ds = load_jsonl(cfg.train_path, role="train")
        class_names = train_ds.class_names

    val_ds = test_ds = None
    if cfg.val_path:
        val_ds = load_jsonl(cfg.val_path, vocab=train_ds.vocab,
                            class_names=class_names, role="validation")
    if cfg.test_path:
        test_ds = load_jsonl(cfg.test_path, vocab=train_ds.vocab,
                             class_names=class_names, role="test")

    if need_snapshot and snapshot is None:
        snapshot = train(train_ds, cfg.model, val_dataset=val_ds)
        if cfg.checkpoint:
            save_bundle(snapshot, class_names, cfg.checkpoint)

    return RunContext(cfg, snapshot, train_ds, val_ds, test_ds)


# -- discovery steps ---------------------------------------------------------

def worst_mispredicted(snapshot: ModelSnapshot, dataset: Dataset,
                       n: int) -> list[Instance]:
    """The n instances the model is most confidently wrong about.

    Sorted by probability assigned to the true class, ascending; ties break
    on instance id so the selection is order-independent.
    """
    scored = []
    for inst in dataset:
        p_true = float(forward(snapshot, inst).probs[inst.label])
        scored.append((p_true, inst.id, inst))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [inst for _, _, inst in scored[:n]]


def candidate_tokens(tables: dict[str, list[str]], n_candidates: int,
                     exclusions: tuple[str, ...] = ()) -> list[dict[str, Any]]:
    """Pool per-method token lists into one ranked candidate slate.

    A token's standing is (number of methods that nominated it, its best
    rank across methods); ties break lexicographically. Excluded tokens
    never enter.
    """
    banned = set(exclusions)
    standing: dict[str, tuple[int, int]] = {}
    nominated_by: dict[str, list[str]] = {}
    for method in sorted(tables):
        for pos, tok in enumerate(tables[method]):
            if tok in banned:
                continue
            count, best = standing.get(tok, (0, len(tables[method])))
            standing[tok] = (count + 1, min(best, pos))
            nominated_by.setdefault(tok, []).append(method)
    ranked = sorted(standing,
                    key=lambda t: (-standing[t][0], standing[t][1], t))
    return [{"token": t, "methods": nominated_by[t],
             "n_methods": standing[t][0], "best_rank": standing[t][1]}
            for t in ranked[:n_candidates]]


def _flip_summary(rep: FlipReport) -> dict[str, Any]:
    return {"token": rep.token, "n_affected": rep.n_affected,
            "flip_fraction": rep.flip_fraction, "mean_delta": rep.mean_delta,
            "trials": rep.trials, "seed": rep.seed}


def aggregate_tables(ctx: RunContext,
                     hessian: HeadHessianContext | None = None
                     ) -> dict[str, Any]:
    """Every ranked-token table the dashboard shows, as one JSON body."""
    cfg = ctx.config
    snapshot = ctx.snapshot
    study = ctx.study_set()
    hessian = hessian or build_head_hessian(snapshot, ctx.train)

    fa_method = cfg.feature_method if cfg.feature_method in ("G", "IG") else "IG"
    fa_table: TokenFrequencyTable = aggregate_over_set(
        snapshot, study, method=fa_method, k=cfg.k,
        exclusions=cfg.exclusions, steps=cfg.steps)

    per_test = [
        aggregated_token_analysis(
            snapshot, inst, ctx.train, instance_method=cfg.instance_method,
            feature_method=cfg.feature_method, k_pct=cfg.k_pct,
            top_m=cfg.top_m, exclusions=cfg.exclusions, hessian=hessian,
            steps=cfg.steps, variant=cfg.variant)
        for inst in study
    ]
    tfa_table = corpus_aggregate(per_test)

    pmi_tables = pmi(ctx.train)
    comp_table = competency(ctx.train)

    return {
        "study_role": study.role,
        "n_study": len(study),
        "feature": fa_table.to_dict(),
        "tfa": tfa_table.to_dict(),
        "pmi": {label: [s.to_dict() for s in stats[:50]]
                for label, stats in pmi_tables.items()},
        "competency": [s.to_dict() for s in comp_table[:50]],
    }


def _top_tokens_per_method(tables: dict[str, Any], k: int) -> dict[str, list[str]]:
    per_method = {
        "feature": [t for t, _ in tables["feature"]["entries"][:k]],
        "tfa_top": [t for t, _ in tables["tfa"]["top_entries"][:k]],
        "tfa_bottom": [t for t, _ in tables["tfa"]["bottom_entries"][:k]],
        "competency": [s["token"] for s in tables["competency"][:k]],
    }
    for label, stats in tables["pmi"].items():
        per_method[f"pmi_{label}"] = [s["token"] for s in stats[:k]]
    return per_method


def discover(cfg: RunConfig) -> dict[str, Any]:
    """Run the four-step discovery workflow and write its dossier.

    Returns the dossier dict; files land under cfg.report_dir. The whole
    run is deterministic for a fixed config, so re-running reproduces the
    dossier byte for byte.
    """
    ctx = build_context(cfg)
    snapshot = ctx.snapshot
    hessian = build_head_hessian(snapshot, ctx.train)
    study = ctx.study_set()

    heatmap_feature = cfg.feature_method if cfg.feature_method in ("G", "IG") else "IG"
    worst = worst_mispredicted(snapshot, study, cfg.n_heatmaps)
    heatmaps = [
        heatmap(snapshot, inst, ctx.train, instance_method=cfg.instance_method,
                feature_method=heatmap_feature, k=cfg.k, hessian=hessian,
                steps=cfg.steps, variant=cfg.variant).to_dict()
        for inst in worst
    ]

    tables = aggregate_tables(ctx, hessian=hessian)
    slate = candidate_tokens(_top_tokens_per_method(tables, cfg.k),
                             cfg.n_candidates, cfg.exclusions)

    random_baseline = mask_flip_rate(snapshot, study,
                                     random_trials=cfg.flip_trials,
                                     seed=cfg.seed)
    verified = []
    for cand in slate:
        rep = mask_flip_rate(snapshot, study, token=cand["token"])
        verified.append({**cand, "flip": _flip_summary(rep)})
    verified.sort(key=lambda c: (-c["flip"]["flip_fraction"],
                                 -c["flip"]["mean_delta"], c["token"]))

    body = {
        "metrics": snapshot.metrics,
        "worst_mispredicted_ids": [inst.id for inst in worst],
        "heatmaps": heatmaps,
        "tables": tables,
        "candidates": verified,
        "random_flip_baseline": _flip_summary(random_baseline),
    }
    dossier = report_envelope(DOSSIER_KIND, snapshot.snapshot_hash,
                              ctx.dataset_hashes(), cfg.to_dict(), body)

    report_dir = Path(cfg.report_dir)
    write_report(report_dir / "dossier.json", dossier)
    write_report(report_dir / "aggregate.json",
                 report_envelope(AGGREGATE_KIND, snapshot.snapshot_hash,
                                 ctx.dataset_hashes(), cfg.to_dict(), tables))
    return dossier


def load_aggregate_report(report_dir: str | Path) -> dict[str, Any] | None:
    """The aggregate bundle a previous run left behind, if any."""
    path = Path(report_dir) / "aggregate.json"
    if not path.exists():
        return None
    report = read_report(path)
    if not isinstance(report, dict) or report.get("kind") != AGGREGATE_KIND:
        raise ValueError(f"{path}: not an aggregate report")
    return report
