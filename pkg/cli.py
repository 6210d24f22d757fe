"""
Granularity 파이프라인 CLI

    python cli.py <subcommand> [options]

subcommand: pool, cluster, aggregate, controller-train, controller-predict,
pipeline, sweep, train, gen-scene, report

종료 코드: 0 성공, 2 입력 오류, 3 설정 오류, 4 수치 실패.
산출물(JSON/CSV/tensor)은 같은 입력·seed 면 byte 단위로 같다. 로그와 시간
측정은 stderr 와 ``<out>.timings.json`` 으로만 나간다.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import load_dotenv

import controller as ctl
import pipeline as pl
from clustering import cluster
from config import get_default_jobs, get_log_level, load_config, parse_profile_spec
from corpus import (
    make_synthetic_corpus,
    parse_token_list,
    read_corpus,
    tokenize_question,
    write_corpus,
)
from errors import AdataError, InvalidConfig
from gradcheck import check_gradient
from objective import HeadHyper, loss_and_grad
from pooling import build_kernel, pool_features, pool_saliency
from report_logic import load_report, load_sweep, render_markdown
from scenes import generate_scene, make_labeled_scenes
from tensor_io import (
    ROLE_FEATURES,
    ROLE_SALIENCY,
    TensorContainer,
    features_container,
    load_features,
    load_saliency,
    load_text_embedding,
    saliency_container,
    tokens_container,
    write_tensor,
)
from tensors import GranularityProfile, SaliencyMap, normalize_saliency

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 4
EXIT_INPUT = 2


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------
def write_json(data, path: str | Path | None) -> None:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def write_timings(timings: dict, out: str | Path | None) -> None:
    if out is None:
        return
    path = Path(out)
    path.with_name(path.name + ".timings.json").write_text(
        json.dumps(timings, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _question(args) -> list[int] | None:
    if getattr(args, "tokens", None):
        return parse_token_list(args.tokens)
    if getattr(args, "question", None):
        return tokenize_question(args.question)
    return None


def _embedding(args):
    if getattr(args, "embedding", None):
        return load_text_embedding(args.embedding)
    return None


def _controller(args, config):
    if getattr(args, "controller", None):
        return ctl.load_params(args.controller)
    return pl.controller_for(config)


def _profile(text: str | None, config) -> GranularityProfile | None:
    """'2' → config.profiles[2], '4:5:0' → 명시적 triple."""
    if text is None:
        return None
    if ":" in text:
        return parse_profile_spec(text)
    try:
        index = int(text)
    except ValueError:
        raise InvalidConfig(f"profile {text!r} is neither an index nor a:b:g") from None
    if not 0 <= index < len(config.profiles):
        raise InvalidConfig(
            f"profile index {index} outside 0..{len(config.profiles) - 1}"
        )
    return config.profiles[index]


def _saliency(path) -> SaliencyMap:
    return normalize_saliency(load_saliency(path))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------
def cmd_pool(args, config) -> int:
    features = load_features(args.features)
    kernel = build_kernel(features.side, args.alpha)
    pooled_f = pool_features(features, kernel)
    write_tensor(features_container(pooled_f, "pooled", config.seed), args.out)
    if args.saliency:
        pooled = pool_saliency(_saliency(args.saliency), kernel)
        out = args.saliency_out or f"{args.out}.saliency"
        write_tensor(saliency_container(pooled, "pooled", config.seed), out)
    return EXIT_OK


def cmd_cluster(args, config) -> int:
    features = load_features(args.features)
    saliency = _saliency(args.saliency)
    kernel = build_kernel(features.side, args.alpha)
    result = cluster(
        pool_features(features, kernel),
        pool_saliency(saliency, kernel),
        args.clusters,
        lambda_f=config.lambda_f,
        seed=config.seed,
        max_iter=config.max_iter,
        tol=config.tol,
        restarts=config.restarts,
        saliency_weight=config.saliency_weight,
    )
    write_json(
        {
            "n_clusters": result.n_clusters,
            "assignments": [int(a) for a in result.assignments],
            "objective_trace": [float(x) for x in result.objective_trace],
            "final_objective": float(result.final_objective),
            "restart": result.restart,
            "restart_objectives": [float(x) for x in result.restart_objectives],
            "centroids": [
                {
                    "a_center": c.a_center.tolist(),
                    "f_center": c.f_center.tolist(),
                    "members": list(c.members),
                }
                for c in result.centroids
            ],
            "seed": config.seed,
            "lambda_f": config.lambda_f,
        },
        args.out,
    )
    return EXIT_OK


def cmd_aggregate(args, config) -> int:
    params = _controller(args, config)
    embedding = _embedding(args)
    if embedding is None:
        embedding = ctl.encode_text_surrogate(
            _question(args), params.text_dim, params.embed_seed
        )
    h = ctl.aggregate(embedding, params)
    write_json(
        {
            "descriptor": [float(x) for x in h],
            "source": embedding.source,
            "n_tokens": len(embedding),
        },
        args.out,
    )
    return EXIT_OK


def cmd_controller_train(args, config) -> int:
    if args.corpus:
        corpus = read_corpus(args.corpus)
    else:
        corpus = make_synthetic_corpus(
            len(config.profiles), config.items_per_class, config.seed
        )
    if args.write_corpus:
        write_corpus(corpus, args.write_corpus)
    profiles = tuple(config.profiles)[: corpus.n_profiles]
    init = ctl.init_params(
        profiles,
        config.text_dim,
        config.descriptor_dim,
        config.hidden_dim,
        seed=config.seed,
    )
    hyper = ctl.ControllerHyper(
        lr=config.controller_lr, epochs=config.controller_epochs, seed=config.seed
    )
    result = ctl.train(corpus, init, hyper)
    ctl.save_params(result.params, args.out)

    summary = {
        "items": len(corpus),
        "epochs": hyper.epochs,
        "lr": hyper.lr,
        "final_loss": result.loss_trace[-1] if result.loss_trace else None,
        "train_accuracy": ctl.accuracy(result.params, corpus),
    }
    if args.holdout:
        held = make_synthetic_corpus(corpus.n_profiles, args.holdout, config.seed + 1)
        summary["holdout_accuracy"] = ctl.accuracy(result.params, held)
    if args.loss_csv:
        trace = pd.DataFrame(
            {"epoch": range(len(result.loss_trace)), "loss": result.loss_trace}
        )
        trace.to_csv(
            args.loss_csv, index=False, float_format="%.12g", lineterminator="\n"
        )
    if args.gradcheck:
        inputs = ctl.corpus_inputs(corpus, result.params)
        labels = corpus.labels()
        _, grads = ctl.batch_loss_and_grad(result.params, inputs, labels)
        check = check_gradient(
            lambda v: ctl.batch_loss_and_grad(result.params.with_vector(v), inputs, labels)[0],
            ctl.grad_vector(grads),
            result.params.to_vector(),
            seed=config.seed,
        )
        summary["gradcheck_max_rel_error"] = check.max_rel_error
        logger.warning("[CLI] controller gradcheck max rel error %.3e", check.max_rel_error)
    write_json(summary, args.summary)
    return EXIT_OK


def cmd_controller_predict(args, config) -> int:
    params = _controller(args, config)
    dist, _ = ctl.predict_question(_question(args), params, _embedding(args))
    write_json(
        {
            "distribution": dist.to_dict(),
            "profile_index": ctl.select_index(dist),
            "selected_profile": ctl.select(dist).to_dict(),
            "expected_profile": [float(x) for x in ctl.expected_profile(dist)],
        },
        args.out,
    )
    return EXIT_OK


def cmd_pipeline(args, config) -> int:
    fixed = _profile(args.fixed_profile, config)
    params = None
    if fixed is None:
        params = _controller(args, config)
    result = pl.run_pipeline(
        config,
        load_features(args.features),
        _saliency(args.saliency),
        _question(args),
        controller_params=params,
        text_embedding=_embedding(args),
        fixed_profile=fixed,
        include_semantic=False if args.no_semantic else None,
    )
    write_json(result.report, args.out)
    write_timings(result.timings, args.out)
    if args.tokens_out:
        write_tensor(tokens_container(result.sequence, "f_mix", config.seed), args.tokens_out)
    return EXIT_OK


def _split(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def cmd_sweep(args, config) -> int:
    scenes = [
        generate_scene(
            args.blobs,
            args.side,
            config.feature_dim,
            args.separation,
            seed=config.seed + i,
            spread=args.spread,
        )
        for i in range(args.scenes)
    ]
    try:
        alphas = [int(a) for a in _split(args.alphas)]
    except ValueError:
        raise InvalidConfig(f"alphas {args.alphas!r} must be integers") from None
    table, runtimes = pl.sweep(
        config,
        alphas,
        _split(args.betas),
        scenes,
        jobs=args.jobs or get_default_jobs(),
        baseline=not args.no_baseline,
    )
    pl.write_sweep_csv(table, args.out)
    write_timings(runtimes, args.out)
    return EXIT_OK


def cmd_train(args, config) -> int:
    question = _question(args) or tokenize_question(pl.SWEEP_QUESTION)
    params = _controller(args, config)
    profile = _profile(args.profile, config)
    if profile is None:
        dist, _ = ctl.predict_question(question, params)
        profile = ctl.select(dist)
    scenes = make_labeled_scenes(args.scenes, args.side, config.feature_dim, config.seed)
    result, samples, bank = pl.train_on_scenes(config, scenes, question, profile, params)
    pl.write_sweep_csv(pl.loss_trace_frame(result), args.out)
    if args.gradcheck:
        hyper = HeadHyper(
            lr=config.head_lr,
            steps=config.head_steps,
            lambda_d=config.lambda_d,
            lambda_t=config.lambda_t,
            lam=config.lam,
        )
        frozen = bank.maps[profile.gamma]
        _, grad = loss_and_grad(result.heads, samples, frozen, hyper)
        check = check_gradient(
            lambda v: loss_and_grad(result.heads.with_vector(v), samples, frozen, hyper)[0].total,
            grad,
            result.heads.to_vector(),
            seed=config.seed,
        )
        logger.warning("[CLI] head gradcheck max rel error %.3e", check.max_rel_error)
    return EXIT_OK


def cmd_gen_scene(args, config) -> int:
    scene = generate_scene(
        args.blobs,
        args.side,
        config.feature_dim,
        args.separation,
        seed=config.seed,
        spread=args.spread,
    )
    prefix = args.out_prefix
    write_tensor(
        TensorContainer(scene.features.data, "scene", ROLE_FEATURES, config.seed),
        f"{prefix}.features.adt",
    )
    write_tensor(
        TensorContainer(scene.saliency.data, "scene", ROLE_SALIENCY, config.seed),
        f"{prefix}.saliency.adt",
    )
    write_json(
        {
            "planted": scene.planted.tolist(),
            "centers": scene.centers.tolist(),
            "seed": config.seed,
            "blobs": args.blobs,
        },
        f"{prefix}.labels.json",
    )
    return EXIT_OK


def cmd_report(args, config) -> int:
    reports = {Path(p).name: load_report(p) for p in args.reports or []}
    sweep = load_sweep(args.sweep) if args.sweep else None
    text = render_markdown(reports, sweep)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def _add_question_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--question", help="free-text question (tokenized onto the vocabulary)")
    p.add_argument("--tokens", help="comma-separated token ids")
    p.add_argument("--embedding", help="external text embedding container")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="base seed (default: $ADATA_SEED or 0)")
    common.add_argument("--restarts", type=int, help="clustering restarts")
    common.add_argument("--lambda-f", type=float, dest="lambda_f")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--tol", type=float)
    common.add_argument("--k-rule", dest="k_rule", help="half_beta or fixed:<k>")
    common.add_argument(
        "--pool-pixel-stream",
        action="store_true",
        default=None,
        dest="pool_pixel_stream",
        help="pixel tokens enter F_mix at pooled resolution",
    )
    common.add_argument("--train-projector", action="store_true", default=None, dest="train_projector")
    common.add_argument("--epochs", type=int, dest="controller_epochs")
    common.add_argument("--lr", type=float, help="learning rate of the subcommand's training loop")
    common.add_argument("--steps", type=int, dest="head_steps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="adata", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool", parents=[common], help="block-average pool a feature grid")
    p.add_argument("--features", required=True)
    p.add_argument("--saliency")
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--saliency-out", dest="saliency_out")
    p.set_defaults(handler=cmd_pool)

    p = sub.add_parser("cluster", parents=[common], help="relation-aware k-means")
    p.add_argument("--features", required=True)
    p.add_argument("--saliency", required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("aggregate", parents=[common], help="text descriptor h")
    _add_question_args(p)
    p.add_argument("--controller", help="controller params JSON")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser("controller-train", parents=[common], help="train the controller")
    p.add_argument("--corpus", help="corpus file; synthetic corpus when omitted")
    p.add_argument("--write-corpus", dest="write_corpus")
    p.add_argument("--holdout", type=int, default=0, help="held-out items per class")
    p.add_argument("--loss-csv", dest="loss_csv")
    p.add_argument("--gradcheck", action="store_true")
    p.add_argument("--out", required=True, help="params JSON")
    p.add_argument("--summary", help="summary JSON (stdout when omitted)")
    p.set_defaults(handler=cmd_controller_train)

    p = sub.add_parser("controller-predict", parents=[common], help="profile distribution")
    _add_question_args(p)
    p.add_argument("--controller")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_controller_predict)

    p = sub.add_parser("pipeline", parents=[common], help="full token pipeline")
    p.add_argument("--features", required=True)
    p.add_argument("--saliency", required=True)
    _add_question_args(p)
    p.add_argument("--controller")
    p.add_argument("--fixed-profile", dest="fixed_profile", help="index or alpha:beta:gamma")
    p.add_argument("--no-semantic", action="store_true", dest="no_semantic")
    p.add_argument("--out")
    p.add_argument("--tokens-out", dest="tokens_out")
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("sweep", parents=[common], help="(alpha, beta) ablation grid")
    p.add_argument("--alphas", default="1,2,4")
    p.add_argument("--betas", default="3,5,N")
    p.add_argument("--scenes", type=int, default=3)
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--side", type=int, default=16)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-baseline", action="store_true", dest="no_baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("train", parents=[common], help="train objective heads on scenes")
    _add_question_args(p)
    p.add_argument("--controller")
    p.add_argument("--profile", help="index or alpha:beta:gamma (controller choice by default)")
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--side", type=int, default=16)
    p.add_argument("--gradcheck", action="store_true")
    p.add_argument("--out", required=True, help="loss trace CSV")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("gen-scene", parents=[common], help="planted-blob scene")
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--side", type=int, default=16)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(handler=cmd_gen_scene)

    p = sub.add_parser("report", parents=[common], help="markdown summary")
    p.add_argument("--reports", nargs="*")
    p.add_argument("--sweep")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_report)
    return parser


def _config_from_args(args):
    overrides = {
        "seed": args.seed,
        "restarts": args.restarts,
        "lambda_f": args.lambda_f,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "k_rule": args.k_rule,
        "pool_pixel_stream": args.pool_pixel_stream,
        "train_projector": args.train_projector,
        "controller_epochs": args.controller_epochs,
        "head_steps": args.head_steps,
    }
    if args.lr is not None:
        key = "controller_lr" if args.command.startswith("controller") else "head_lr"
        overrides[key] = args.lr
    return load_config(args.config, **overrides)


def configure_logging(verbose: bool) -> None:
    level = "INFO" if verbose else get_log_level()
    if level not in logging.getLevelNamesMapping():
        raise InvalidConfig(f"ADATA_LOG_LEVEL={level!r} is not a logging level")
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.verbose)
        config = _config_from_args(args)
        return args.handler(args, config)
    except AdataError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: harness.FileNotFound: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
