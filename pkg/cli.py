"""
Depth Estimation CLI
Command line entry point for training, evaluation, prediction, corruption, checks and the API server
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from core.gradcheck import available_checks, run_gradcheck
from core.model import DepthEstimationModel
from data.checkpoint import load_checkpoint, save_checkpoint
from data.corrupt import corrupt_to_directory, parse_kinds, parse_severities
from data.netpbm import RGB_MAXVAL, read_ppm, write_pgm16
from data.synthetic import load_dataset, synth_dataset, write_dataset
from training.ablation import ablation_study
from training.metrics import EvalConfig, format_report_lines, format_report_summary
from training.robustness import robustness_sweep
from training.trainer import evaluate, train
from utils.config import load_config
from utils.errors import ConfigError, DepthEstimationError
from utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)


def _parse_ints(text: str, expected: Optional[int] = None) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")
    if expected is not None and len(values) != expected:
        raise ConfigError(f"expected {expected} integers, got {text!r}")
    return values


def _load_model(config: Optional[str], ckpt: str) -> DepthEstimationModel:
    model = DepthEstimationModel(load_config(config).model)
    load_checkpoint(model, ckpt)
    return model


def _eval_config(model: DepthEstimationModel, crop: Optional[str]) -> EvalConfig:
    return EvalConfig(max_depth=model.config.max_depth,
                      center_crop=tuple(_parse_ints(crop, 4)) if crop else None)


def cmd_train(args) -> int:
    run = load_config(args.config)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = replace(run.train, **overrides).validate()
    dataset = load_dataset(args.data)
    model = DepthEstimationModel(run.model, seed=cfg.seed)
    result = train(model, dataset, cfg)
    save_checkpoint(result.model, args.out, result.optimizer)
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        print(f"epoch {epoch} loss {loss:.6g}")
    if result.epoch_metrics:
        print(format_report_summary(result.epoch_metrics[-1]))
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args.config, args.ckpt)
    report = evaluate(model, load_dataset(args.data), _eval_config(model, args.crop),
                      resize_mode=args.resize_mode, weighting=args.weighting)
    lines = format_report_lines(report)
    print("\n".join(lines))
    if args.report:
        Path(args.report).write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"Wrote report to {args.report}")
    return 0


def cmd_predict(args) -> int:
    model = _load_model(args.config, args.ckpt)
    rgb = read_ppm(args.rgb).astype(np.float32) / np.float32(RGB_MAXVAL)
    depth = model.predict(rgb, resize_mode=args.resize_mode)
    write_pgm16(args.out, depth)
    logger.info(f"Wrote {depth.shape[1]}x{depth.shape[0]} depth to {args.out}")
    return 0


def cmd_corrupt(args) -> int:
    dataset = load_dataset(args.data)
    stems = [f"{i:05d}" for i in range(len(dataset))]
    written = corrupt_to_directory([s.rgb for s in dataset], stems, parse_kinds(args.kinds),
                                   parse_severities(args.severities), args.seed, args.out)
    print(f"wrote {len(written)} images to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.op, args.trials, args.seed)
    for r in results:
        print(f"{r.op:18s} max_rel_err={r.max_rel_err:.3e} tol={r.tolerance:.0e} {'ok' if r.passed else 'FAIL'}")
    failed = [r.op for r in results if not r.passed]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_params(args) -> int:
    model_config = load_config(args.config).model
    if args.no_sff:
        model_config = replace(model_config, with_sff=False)
    summary = DepthEstimationModel(model_config).parameter_summary()
    print(f"encoder {summary['encoder']}")
    print(f"decoder {summary['decoder']}{' (no SFF)' if args.no_sff else ''}")
    print(f"total {summary['total']}")
    return 0


def cmd_robustness(args) -> int:
    model = _load_model(args.config, args.ckpt)
    table = robustness_sweep(model, load_dataset(args.data), parse_kinds(args.kinds),
                             parse_severities(args.severities), args.seed, _eval_config(model, None),
                             args.resize_mode)
    print("kind\tseverity\t" + "\t".join(["delta1", "delta2", "delta3", "abs_rel", "rmse", "log10",
                                             "sq_rel", "rmse_log", "n_pixels"]))
    for row in table.rows:
        severity = "avg" if row.severity is None else str(row.severity)
        print(f"{row.kind}\t{severity}\t{format_report_summary(row.report)}")
    return 0


def cmd_ablation(args) -> int:
    run = load_config(args.config)
    cfg = run.train if args.epochs is None else replace(run.train, epochs=args.epochs).validate()
    results = ablation_study(load_dataset(args.data), run.model, cfg, seeds=_parse_ints(args.seeds))
    for result in results:
        print(f"{result.setting.name}\t{format_report_summary(result.mean)}")
    return 0


def cmd_synth(args) -> int:
    samples = synth_dataset(args.seed, args.n, args.height, args.width)
    manifest = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples, manifest {manifest}")
    return 0


def cmd_serve(args) -> int:
    from app import main as serve_main

    serve_main(args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depth", description="Global-local path depth estimation")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a model and write a checkpoint")
    p.add_argument("--config", help="Config file or preset:<name> (default: full)")
    p.add_argument("--data", required=True, help="Manifest path or synth:seed,n,H,W")
    p.add_argument("--out", required=True, help="Checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--crop", help="left,upper,width,height")
    p.add_argument("--report", help="Write the metric lines to this file")
    p.add_argument("--resize-mode", choices=["up", "down"], default="up")
    p.add_argument("--weighting", choices=["image", "pixel"], default="image")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="Predict depth for one PPM image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--rgb", required=True)
    p.add_argument("--out", required=True, help="16-bit PGM in millimeters")
    p.add_argument("--resize-mode", choices=["up", "down"], default="up")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("corrupt", help="Write corrupted copies of a dataset's images")
    p.add_argument("--data", required=True)
    p.add_argument("--kinds", default="all", help="all or k1,k2,...")
    p.add_argument("--severities", default="1..5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient checks")
    p.add_argument("--op", default="all", choices=["all"] + available_checks())
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="Parameter counts")
    p.add_argument("--config")
    p.add_argument("--no-sff", action="store_true")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("robustness", help="Metrics under every corruption and severity")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--kinds", default="all")
    p.add_argument("--severities", default="1..5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resize-mode", choices=["up", "down"], default="up")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("ablation", help="Compare CutDepth settings across seeds")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("synth", help="Write a synthetic RGB-D dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="Run the HTTP API")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except DepthEstimationError as e:
        print(f"error [{e.code}]: {e.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
