"""Command-line front end: every pipeline stage as a subcommand.

Each subcommand assembles a RunConfig from an optional --config JSON file
plus flag overrides, runs one stage, writes canonical JSON reports under
the report directory, and prints a short human summary. Failures exit
nonzero with a single machine-readable JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import competency, pmi
from .config import (FEATURE_METHOD_CHOICES, INSTANCE_METHOD_CHOICES,
                     VARIANT_CHOICES, ConfigError, RunConfig, load_config)
from .corpus import (ArtifactSpec, Dataset, Instance, instance_from_text,
                     load_jsonl, save_jsonl)
from .feature_attr import grad_saliency, integrated_gradients, top_k
from .instance_attr import rank
from .model import ModelError, TrainingDiverged, build_head_hessian, predict
from .pipeline import (AGGREGATE_KIND, RunContext, aggregate_tables,
                       build_context, discover)
from .reporting import report_envelope, write_report
from .tfa import heatmap, lr_discriminator, train_feature_saliency
from .verify import edit_and_compare, mask_flip_rate

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _fail(code: str, message: str, exit_code: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return exit_code


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "-" for c in name) or "x"


# -- argument plumbing -------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of RunConfig keys")
    p.add_argument("--train", dest="train_path", help="training JSONL")
    p.add_argument("--val", dest="val_path", help="validation JSONL")
    p.add_argument("--test", dest="test_path", help="test JSONL")
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--report-dir", dest="report_dir", help="where reports go")
    p.add_argument("--feature-method", choices=FEATURE_METHOD_CHOICES)
    p.add_argument("--instance-method", choices=INSTANCE_METHOD_CHOICES)
    p.add_argument("--variant", choices=VARIANT_CHOICES)
    p.add_argument("--k", type=int)
    p.add_argument("--k-pct", dest="k_pct", type=float)
    p.add_argument("--top-m", dest="top_m", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--exclude", action="append", metavar="TOKEN",
                   help="token to leave out of aggregates (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-heatmaps", dest="n_heatmaps", type=int)
    p.add_argument("--n-candidates", dest="n_candidates", type=int)
    p.add_argument("--flip-trials", dest="flip_trials", type=int)
    p.add_argument("--port", type=int)
    # model fields (seed kept separate from the pipeline seed on purpose)
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--l2-reg", dest="l2_reg", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--model-seed", dest="model_seed", type=int)
    p.add_argument("--damping", type=float)


_RUN_FLAGS = ("train_path", "val_path", "test_path", "checkpoint",
              "report_dir", "feature_method", "instance_method", "variant",
              "k", "k_pct", "top_m", "steps", "seed", "n_heatmaps",
              "n_candidates", "flip_trials", "port")
_MODEL_FLAGS = ("embedding_dim", "hidden_dim", "num_classes", "l2_reg",
                "learning_rate", "epochs", "batch_size", "damping")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name) for name in _RUN_FLAGS}
    if args.exclude is not None:
        overrides["exclusions"] = tuple(args.exclude)
    model_overrides = {name: getattr(args, name) for name in _MODEL_FLAGS}
    model_overrides["seed"] = args.model_seed
    return load_config(args.config, overrides, model_overrides)


def _add_query_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--id", help="instance id to look up")
    p.add_argument("--on", choices=("train", "val", "test"), default="test",
                   help="which split --id refers to (default test)")
    p.add_argument("--text", help="free text instead of --id")
    p.add_argument("--text-b", dest="text_b", help="second segment for pairs")


def _pick_instance(ctx: RunContext, args: argparse.Namespace) -> Instance:
    if (args.id is None) == (args.text is None):
        raise ConfigError("pass exactly one of --id or --text")
    if args.text is not None:
        return instance_from_text(ctx.snapshot.vocab, args.text, args.text_b,
                                  "query")
    split = {"train": ctx.train, "val": ctx.val, "test": ctx.test}[args.on]
    if split is None:
        raise ConfigError(f"no {args.on} split configured, cannot resolve --id")
    try:
        return split.by_id(args.id)
    except KeyError:
        raise ConfigError(f"no instance {args.id!r} in the {args.on} split")


def _split_for(ctx: RunContext, name: str) -> Dataset:
    split = {"train": ctx.train, "val": ctx.val, "test": ctx.test}[name]
    if split is None:
        raise ConfigError(f"no {name} split configured")
    return split


def _write(ctx: RunContext, name: str, kind: str, extra_params: dict,
           body: dict) -> Path:
    env = report_envelope(kind, ctx.snapshot.snapshot_hash,
                          ctx.dataset_hashes(),
                          {**ctx.config.params(), **extra_params}, body)
    return write_report(Path(ctx.config.report_dir) / name, env)


# -- subcommands -------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if not cfg.checkpoint:
        cfg = replace(cfg, checkpoint=str(Path(cfg.report_dir) / "checkpoint.json"))
    ctx = build_context(cfg, force_train=True)  # saves the bundle itself
    _write(ctx, "train_report.json", "training",
           {"model": cfg.model.to_dict()},
           {"metrics": ctx.snapshot.metrics,
            "checkpoint": str(cfg.checkpoint),
            "vocab_size": len(ctx.snapshot.vocab)})
    m = ctx.snapshot.metrics
    print(f"checkpoint {cfg.checkpoint}")
    print(f"train_accuracy {m.get('train_accuracy'):.4f} "
          f"train_loss {m.get('train_loss'):.4f}")
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    cfg.require("train_path")
    dataset = load_jsonl(cfg.train_path, role="train")
    from .corpus import inject  # local import keeps the module list tidy
    spec = ArtifactSpec(
        kind=args.kind,
        trigger_label="all" if args.trigger_label == "all" else int(args.trigger_label),
        artifact_tokens=tuple(args.tokens.split(",")),
        injection_rate=args.rate,
        position_rule=args.position_rule,
        seed=args.inject_seed,
        target_tokens=tuple(args.targets.split(",")) if args.targets else None)
    injected, log = inject(dataset, spec)
    out = Path(args.out)
    save_jsonl(injected, out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log")
    log.save(log_path)
    print(f"wrote {out} ({len(injected)} instances, "
          f"{len(log.records)} injections) and {log_path}")
    return 0


def cmd_attribute(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    inst = _pick_instance(ctx, args)
    method = cfg.feature_method
    if method not in ("G", "IG"):
        raise ConfigError("attribute needs feature_method G or IG")
    target = args.target_class
    if method == "G":
        sal = grad_saliency(ctx.snapshot, inst, target)
    else:
        sal = integrated_gradients(ctx.snapshot, inst, target, steps=cfg.steps)
    leaders = top_k(sal, cfg.k, cfg.exclusions)
    pred, probs, _ = predict(ctx.snapshot, inst)
    path = _write(ctx, f"attribute_{_safe(inst.id)}.json", "feature_attribution",
                  {"target_class": target},
                  {"saliency": sal.to_dict(), "top_tokens": leaders,
                   "predicted": pred,
                   "probabilities": [float(p) for p in probs]})
    print(f"{path}")
    print(f"top tokens: {', '.join(leaders)}")
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    inst = _pick_instance(ctx, args)
    ranking = rank(ctx.snapshot, inst, ctx.train, cfg.instance_method,
                   variant=cfg.variant)
    path = _write(ctx, f"rank_{_safe(inst.id)}.json", "instance_attribution",
                  {}, {"ranking": ranking.to_dict()})
    head = ", ".join(f"{tid} ({score:+.4f})" for tid, score in ranking.entries[:5])
    print(f"{path}")
    print(f"most influential: {head}")
    return 0


def cmd_tfa(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    inst = _pick_instance(ctx, args)
    hessian = build_head_hessian(ctx.snapshot, ctx.train)
    if args.train_id is not None:
        train_inst = ctx.train.by_id(args.train_id)
        sal = train_feature_saliency(
            ctx.snapshot, inst, train_inst, ctx.train,
            instance_method=cfg.instance_method,
            feature_method=cfg.feature_method, hessian=hessian,
            steps=cfg.steps, variant=cfg.variant)
        path = _write(ctx, f"tfa_{_safe(inst.id)}_{_safe(args.train_id)}.json",
                      "train_feature_saliency", {}, {"saliency": sal.to_dict()})
        print(f"{path}")
        return 0
    feature = cfg.feature_method if cfg.feature_method in ("G", "IG") else "IG"
    payload = heatmap(ctx.snapshot, inst, ctx.train,
                      instance_method=cfg.instance_method,
                      feature_method=feature, k=cfg.k, hessian=hessian,
                      steps=cfg.steps, variant=cfg.variant)
    path = write_report(Path(cfg.report_dir) / f"heatmap_{_safe(inst.id)}.json",
                        payload.to_dict())
    print(f"{path}")
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    tables = aggregate_tables(ctx)
    path = _write(ctx, "aggregate.json", AGGREGATE_KIND, {}, tables)
    top = [t for t, _ in tables["tfa"]["top_entries"][:cfg.k]]
    print(f"{path}")
    print(f"tfa top tokens: {', '.join(top) if top else '(none)'}")
    return 0


def cmd_discriminate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    inst = _pick_instance(ctx, args)
    report = lr_discriminator(ctx.snapshot, inst, ctx.train,
                              instance_method=cfg.instance_method,
                              n_top=args.n_top, n_bottom=args.n_bottom,
                              l2=args.l2, variant=cfg.variant,
                              exclusions=cfg.exclusions)
    path = _write(ctx, f"discriminator_{_safe(inst.id)}.json",
                  "slice_discriminator",
                  {"n_top": args.n_top, "n_bottom": args.n_bottom, "l2": args.l2},
                  {"report": report.to_dict()})
    head = ", ".join(f"{t} ({w:+.3f})" for t, w in report.token_weights[:5])
    print(f"{path}")
    print(f"strongest slice markers: {head}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    cfg.require("train_path")
    train_ds = load_jsonl(cfg.train_path, role="train")
    if args.stat == "pmi":
        tables = pmi(train_ds, smoothing_k=args.smoothing_k)
        body = {label: [s.to_dict() for s in stats]
                for label, stats in tables.items()}
        name = "baseline_pmi.json"
    else:
        body = {"all": [s.to_dict() for s in competency(train_ds)]}
        name = "baseline_competency.json"
    env = report_envelope(f"baseline_{args.stat}", "",
                          {"train": train_ds.content_hash},
                          {"smoothing_k": args.smoothing_k}, body)
    path = write_report(Path(cfg.report_dir) / name, env)
    first = next(iter(body.values()))
    lead = ", ".join(s["token"] for s in first[:5])
    print(f"{path}")
    print(f"leaders: {lead}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    if args.check == "mask":
        target = _split_for(ctx, args.on)
        if (args.token is None) == (args.random_trials is None):
            raise ConfigError("pass exactly one of --token or --random-trials")
        rep = mask_flip_rate(ctx.snapshot, target, token=args.token,
                             random_trials=args.random_trials, seed=cfg.seed)
        label = _safe(args.token) if args.token else "random"
        path = _write(ctx, f"verify_mask_{label}.json", "mask_verification",
                      {"on": args.on}, {"flip": rep.to_dict()})
        print(f"{path}")
        print(f"flip_fraction {rep.flip_fraction:.4f} over "
              f"{rep.n_affected} affected instances")
        return 0
    result = edit_and_compare(ctx.snapshot, args.original, args.edited,
                              args.original_b, args.edited_b)
    path = _write(ctx, "verify_edit.json", "edit_verification", {},
                  {"edit": result.to_dict()})
    print(f"{path}")
    print(f"delta_prob {result.delta_prob:+.4f} "
          f"({'flipped' if result.flipped else 'stable'})")
    return 0


def cmd_discover(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    dossier = discover(cfg)
    print(f"{Path(cfg.report_dir) / 'dossier.json'}")
    random_rate = dossier["body"]["random_flip_baseline"]["flip_fraction"]
    print(f"random flip baseline {random_rate:.4f}")
    for cand in dossier["body"]["candidates"][:5]:
        flip = cand["flip"]
        print(f"  {cand['token']}: flip {flip['flip_fraction']:.4f} "
              f"on {flip['n_affected']} instances "
              f"(nominated by {', '.join(cand['methods'])})")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    cfg = _config_from_args(args)
    ctx = build_context(cfg)
    study = ctx.val if ctx.val is not None else ctx.test
    app = create_app(ctx.snapshot, ctx.train, study=study,
                     report_dir=cfg.report_dir, ui_dir=args.ui_dir)
    print(f"serving snapshot {ctx.snapshot.snapshot_hash[:12]} "
          f"on {args.host}:{cfg.port}")
    uvicorn.run(app, host=args.host, port=cfg.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Find and verify spurious token-label correlations in "
                    "text-classification training data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.set_defaults(handler=handler)
        return p

    add("train", cmd_train, "fit the classifier and save a checkpoint bundle")

    p = add("inject", cmd_inject, "plant a synthetic artifact into a JSONL file")
    p.add_argument("--kind", required=True,
                   choices=("insert_token", "replace_from_set",
                            "conditional_pronoun_swap"))
    p.add_argument("--tokens", required=True,
                   help="comma-separated artifact tokens")
    p.add_argument("--trigger-label", dest="trigger_label", default="all",
                   help="class index or 'all'")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--position-rule", dest="position_rule",
                   default="before_random_noun_like",
                   choices=("before_random_noun_like", "append", "random"))
    p.add_argument("--inject-seed", dest="inject_seed", type=int, default=0)
    p.add_argument("--targets", help="comma-separated tokens to replace")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--log", help="injection log path (default <out>.log)")

    p = add("attribute", cmd_attribute, "token saliency for one input")
    _add_query_flags(p)
    p.add_argument("--target-class", dest="target_class", type=int)

    p = add("rank", cmd_rank, "order training instances by influence")
    _add_query_flags(p)

    p = add("tfa", cmd_tfa, "token saliency inside influential train instances")
    _add_query_flags(p)
    p.add_argument("--train-id", dest="train_id",
                   help="score this train instance instead of the top-k payload")

    add("aggregate", cmd_aggregate, "token tables across the study split")

    p = add("discriminate", cmd_discriminate,
            "logistic probe separating most- from least-influential slices")
    _add_query_flags(p)
    p.add_argument("--n-top", dest="n_top", type=int, default=10)
    p.add_argument("--n-bottom", dest="n_bottom", type=int, default=10)
    p.add_argument("--l2", type=float, default=1e-2)

    p = add("baseline", cmd_baseline, "counting statistics over the train set")
    p.add_argument("stat", choices=("pmi", "competency"))
    p.add_argument("--smoothing-k", dest="smoothing_k", type=float, default=100.0)

    p = add("verify", cmd_verify, "mask-and-repredict or compare an edit")
    p.add_argument("check", choices=("mask", "edit"))
    p.add_argument("--on", choices=("train", "val", "test"), default="val")
    p.add_argument("--token", help="mask: token to remove everywhere")
    p.add_argument("--random-trials", dest="random_trials", type=int,
                   help="mask: chance-level baseline instead of a token")
    p.add_argument("--original", help="edit: text before")
    p.add_argument("--edited", help="edit: text after")
    p.add_argument("--original-b", dest="original_b")
    p.add_argument("--edited-b", dest="edited_b")

    add("discover", cmd_discover, "run the full discovery workflow")

    p = add("serve", cmd_serve, "expose the snapshot over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", dest="ui_dir",
                   help="static directory to mount at /ui")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        return _fail("config", str(exc), USAGE_EXIT)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), USAGE_EXIT)
    except TrainingDiverged as exc:
        return _fail("training_diverged", str(exc), RUNTIME_EXIT)
    except ModelError as exc:
        return _fail("model", str(exc), RUNTIME_EXIT)
    except (ValueError, KeyError, OSError) as exc:
        return _fail("runtime", str(exc), RUNTIME_EXIT)


if __name__ == "__main__":
    sys.exit(main())
