"""Command-line entry point: ``taskpls <subcommand> --config run.json ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .. import storage
from ..denoiser import denoise, trace_to_csv
from ..errors import DivergenceError, InvalidParameterError, ManifestMismatchError
from ..errors import IllConditionedCovarianceError
from .config import ExperimentConfig, default_config, resolve_output_dir
from .pipeline import cmd_evaluate, cmd_generate, cmd_render, cmd_sweep, cmd_template, run_all


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif getattr(args, "task", None):
        cfg = default_config(args.task)
    else:
        raise InvalidParameterError("pass --config <path> (or --task for built-in defaults)")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if getattr(args, "output", None):
        cfg = dataclasses.replace(cfg, output_dir=args.output)
    return cfg


def _denoise_overrides(cfg: ExperimentConfig, args):
    alpha = args.alpha if args.alpha is not None else cfg.alphas[0]
    beta = args.beta if args.beta is not None else cfg.betas[0]
    gamma = args.gamma if args.gamma is not None else cfg.gammas[0]
    return cfg.denoise_config(alpha, beta, gamma)


def _add_common(p, config_required=False):
    p.add_argument("--config", type=Path, required=config_required, help="experiment JSON config")
    p.add_argument("--task", choices=["mvn_lumpy", "binary_texture"], help="use built-in defaults")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--output", default=None, help="override output_dir")


def _add_weights(p):
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskpls", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write a default config for a task")
    p.add_argument("task", choices=["mvn_lumpy", "binary_texture"])
    p.add_argument("path", type=Path)

    p = sub.add_parser("generate", help="write training and test ensembles")
    _add_common(p)

    p = sub.add_parser("template", help="estimate the Hotelling template")
    _add_common(p)
    p.add_argument("--ensemble", type=Path, default=None)

    p = sub.add_parser("denoise", help="denoise a single ensemble item")
    _add_common(p)
    _add_weights(p)
    p.add_argument("--ensemble", type=Path, default=None)
    p.add_argument("--template", type=Path, default=None)
    p.add_argument("--item", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--trace-every", type=int, default=10)

    p = sub.add_parser("sweep", help="denoise the test set over the alpha/beta/gamma grid")
    _add_common(p)
    p.add_argument("--ensemble", type=Path, default=None)
    p.add_argument("--template", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("render", help="export PNG panels and difference maps")
    p.add_argument("--run", type=Path, default=None, help="run directory")
    _add_common(p)

    p = sub.add_parser("evaluate", help="ROC/AUC of a template on an ensemble")
    _add_common(p)
    _add_weights(p)
    p.add_argument("--ensemble", type=Path, default=None)
    p.add_argument("--template", type=Path, default=None)
    p.add_argument("--raw", action="store_true", help="score the noisy images without denoising")
    p.add_argument("--out", type=Path, default=None, help="output stem for CSV/JSON")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("run", help="generate, template, sweep and render in one go")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return _dispatch(args)
    except (InvalidParameterError, ManifestMismatchError, IllConditionedCovarianceError,
            DivergenceError, FileNotFoundError) as exc:
        print(f"taskpls {args.command}: error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "init-config":
        default_config(args.task).save(args.path)
        print(args.path)
        return 0
    if args.command == "render" and args.run is not None:
        for path in cmd_render(args.run):
            print(path)
        return 0

    cfg = _load_config(args)
    run_dir = resolve_output_dir(cfg)
    if args.command == "generate":
        print(cmd_generate(cfg))
    elif args.command == "template":
        print(cmd_template(cfg, args.ensemble))
    elif args.command == "sweep":
        print(cmd_sweep(cfg, args.ensemble, args.template, jobs=args.jobs))
    elif args.command == "render":
        for path in cmd_render(run_dir):
            print(path)
    elif args.command == "run":
        print(run_all(cfg, jobs=args.jobs))
    elif args.command == "evaluate":
        ensemble = args.ensemble or run_dir / "test"
        template = args.template or run_dir / "template.json"
        dcfg = None if args.raw else _denoise_overrides(cfg, args)
        stem = args.out or run_dir / "evaluate" / ("raw" if dcfg is None else "denoised")
        roc = cmd_evaluate(ensemble, template, stem, dcfg, cfg.batch_size, args.jobs)
        print(f"auc={roc.auc:.6f} std_err={roc.auc_std_err:.6f}")
    elif args.command == "denoise":
        ensemble = storage.load_ensemble(args.ensemble or run_dir / "test")
        template = storage.load_template(args.template or run_dir / "template.json")
        if not 0 <= args.item < len(ensemble):
            raise InvalidParameterError(f"item {args.item} out of range")
        dcfg = _denoise_overrides(cfg, args)
        g = ensemble.noisy[args.item]
        result = denoise(g, template, dcfg, trace_every=args.trace_every)
        out = args.out or run_dir / "denoise" / f"item{args.item:05d}"
        out.mkdir(parents=True, exist_ok=True)
        storage.write_raster(out / "estimate.f64", result.estimate)
        storage.write_json(out / "estimate.json", {
            "format_version": storage.FORMAT_VERSION,
            "height": int(g.shape[0]),
            "width": int(g.shape[1]),
            "item": args.item,
            "config": dataclasses.asdict(dcfg),
            "terms_final": list(result.terms_final),
        })
        trace_to_csv(result, out / "trace.csv")
        storage.export_png(out / "estimate.png", result.estimate)
        print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
