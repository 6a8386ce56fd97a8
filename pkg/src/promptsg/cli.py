"""Command-line entry points: gen-data, train, eval, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .discovery import build_object_heatmap
from .metrics import EvalConfig, make_heatmap_discoverer, render_report_table, robustness_protocol
from .model import ModelConfig, load_checkpoint
from .service import ServiceConfig, create_app
from .synthdata import SceneConfig, generate_dataset, load_split
from .training import TrainConfig, parse_train_config, train


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate a synthetic clip dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=250)
    p.add_argument("--ratio", type=float, default=0.8, help="train split fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--entities", type=int, default=3)
    p.add_argument("--object-classes", type=int, default=5, help="including null")
    p.add_argument("--predicate-classes", type=int, default=4, help="including null")
    p.add_argument("--noise", type=float, default=0.02)


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", type=Path, required=True, help="dataset root or split directory")
    p.add_argument("--out", type=Path, required=True, help="checkpoint output path")
    p.add_argument("--config", type=Path, default=None, help="key=value training config file")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--log", type=Path, default=None, help="ndjson metrics log path")


def _add_eval(sub):
    p = sub.add_parser("eval", help="run the repeated-runs evaluation protocol")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset root or split directory")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--prompt", choices=("point", "box", "mask", "all"), default="point")
    p.add_argument("--iou-mode", choices=("tube", "frame_avg"), default="tube")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--strategy",
        choices=("learned", "heuristic"),
        default="learned",
        help="object discovery: the trained module or the dataset-heatmap baseline",
    )
    p.add_argument("--json", type=Path, default=None, help="write the full report here")


def _add_serve(sub):
    p = sub.add_parser("serve", help="serve the interactive HTTP API")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")


def _split_dir(data: Path, split: str) -> Path:
    return data / split if (data / split).is_dir() else data


def _cmd_gen_data(args) -> int:
    config = SceneConfig(
        seed=args.seed,
        frames=args.frames,
        height=args.size,
        width=args.size,
        num_entities=args.entities,
        object_class_count=args.object_classes,
        predicate_class_count=args.predicate_classes,
        noise_sigma=args.noise,
    )
    train_dir, eval_dir = generate_dataset(config, args.count, args.ratio, args.out)
    print(f"wrote {train_dir} and {eval_dir}")
    return 0


def _cmd_train(args) -> int:
    text = args.config.read_text() if args.config else ""
    config, model_overrides = parse_train_config(text)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    clips = load_split(_split_dir(args.data, "train"))
    result = train(clips, config, ModelConfig(**model_overrides), args.out, args.log)
    status = "diverged" if result.diverged else "done"
    print(
        f"{status}: {result.steps} steps in {result.elapsed_seconds:.1f}s, "
        f"final loss {result.final_loss:.4f}, checkpoint {result.checkpoint_path}"
    )
    return 1 if result.diverged else 0


def _cmd_eval(args) -> int:
    model, _vocab, _extra = load_checkpoint(args.ckpt)
    clips = load_split(_split_dir(args.data, "eval"))

    discoverer_factory = None
    if args.strategy == "heuristic":
        train_clips = load_split(_split_dir(args.data, "train"))
        grid = train_clips[0].height // 4
        heatmap = build_object_heatmap(train_clips, grid, train_clips[0].width // 4, 4)
        num_queries = model.config.num_queries
        token_dim = model.config.channels

        def discoverer_factory(rng: np.random.Generator):
            return make_heatmap_discoverer(heatmap, num_queries, rng, token_dim)

    kinds = ("point", "box", "mask") if args.prompt == "all" else (args.prompt,)
    reports = []
    for kind in kinds:
        config = EvalConfig(
            k=args.k,
            tau=args.tau,
            runs=args.runs,
            iou_mode=args.iou_mode,
            seed=args.seed,
            prompt_kind=kind,
        )
        reports.append(
            robustness_protocol(model, clips, config, discoverer_factory=discoverer_factory)
        )
    print(render_report_table(reports))
    if args.json:
        args.json.write_text(json.dumps([r.to_json() for r in reports], indent=2))
        print(f"report written to {args.json}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    model, vocabulary, _extra = load_checkpoint(args.ckpt)
    app = create_app(model, vocabulary, ServiceConfig())
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv: list[str] | None = None) -> int:
    torch.set_num_threads(1)  # small ops lose to inter-op overhead otherwise
    parser = argparse.ArgumentParser(prog="promptsg")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_data(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
