"""Command-line driver: staged runs, the shrinkage demo, sweeps, and plots.

Exit codes: 0 on success, 2 for configuration problems (bad YAML, bad
values, missing config file), 3 when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .configs import ConfigError, ExperimentConfig, apply_env_overrides, parse_config
from .pipeline import RunManifest, StageError, run_lcurve, run_pipeline
from .plots import plot_file


def _load_config(path: str) -> ExperimentConfig:
    try:
        cfg = parse_config(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return apply_env_overrides(cfg)


def _print_manifest(man: RunManifest) -> None:
    for stage in man.stages:
        seconds = man.stage_seconds.get(stage)
        timing = f"{seconds:.1f}s" if seconds is not None else "cached"
        print(f"  {stage}: {timing}")
    print(f"run complete: {len(man.files)} artifacts, config {man.config_hash[:12]}")


def _print_summary(outdir: Path) -> None:
    summary_path = outdir / "summary.json"
    if summary_path.exists():
        doc = json.loads(summary_path.read_text())
        keys = ("method", "map_r2", "mean_w1", "active_count", "n_params", "n_samples")
        parts = [f"{k}={doc[k]}" for k in keys if k in doc]
        print("summary: " + "  ".join(parts))


def _cmd_stage(stage: str):
    def run(args) -> int:
        cfg = _load_config(args.config)
        if stage == "sample" and args.method is not None:
            cfg = replace(cfg, method=replace(cfg.method, kind=args.method))
        man = run_pipeline(cfg, only=stage)
        seconds = man.stage_seconds.get(stage, 0.0)
        print(f"{stage}: done in {seconds:.1f}s -> {cfg.output_dir}")
        if stage == "evaluate":
            _print_summary(Path(cfg.output_dir))
        return 0

    return run


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    man = run_pipeline(cfg, resume=not args.no_resume)
    _print_manifest(man)
    _print_summary(Path(cfg.output_dir))
    return 0


def _cmd_lcurve(args) -> int:
    cfg = _load_config(args.config)
    points, lam_star = run_lcurve(cfg, args.lambdas)
    for pt in points:
        print(f"  lambda={pt.lam:g}  r2={pt.test_r2:.4f}  active={pt.active_count}")
    print(f"selected lambda*={lam_star:g} -> {Path(cfg.output_dir) / 'lcurve.csv'}")
    return 0


def _cmd_demo_l1(args) -> int:
    from .configs import config_from_dict

    cfg = apply_env_overrides(
        config_from_dict(
            {
                "problem": "gaussian-demo",
                "output_dir": args.output_dir,
                "regularizer": {"p": 1, "lambda": args.l1},
                "method": {
                    "kind": "svgd",
                    "particles": args.particles,
                    "iterations": args.iterations,
                    "lr": 0.05,
                    "spread": 1.0,
                    "seed": args.seed,
                },
            }
        )
    )
    man = run_pipeline(cfg)
    _print_manifest(man)
    outdir = Path(cfg.output_dir)
    header_and_rows = (outdir / "table.csv").read_text().splitlines()
    print("posterior per coordinate (vs a seeded reference chain):")
    for line in header_and_rows:
        print("  " + line)
    return 0


def _cmd_plot(args) -> int:
    out = args.output or str(Path(args.table).with_suffix(".svg"))
    try:
        kind = plot_file(args.table, out, kind=args.kind)
    except OSError as exc:
        raise ConfigError(f"cannot read table {args.table!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"wrote {kind} plot -> {out}")
    return 0


def _lambda_list(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("need at least one weight")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steinuq",
        description="Uncertainty quantification for sparsified neural potential models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in ("generate", "train-map", "sparsify", "sample", "evaluate"):
        sp = sub.add_parser(stage, help=f"run only the {stage} stage")
        sp.add_argument("config", help="path to the experiment YAML")
        if stage == "sample":
            sp.add_argument(
                "--method",
                choices=("svgd", "psvgd", "hmc"),
                default=None,
                help="override the sampling method from the config",
            )
        sp.set_defaults(func=_cmd_stage(stage))

    sp = sub.add_parser("run", help="run every stage (resumes completed work)")
    sp.add_argument("config", help="path to the experiment YAML")
    sp.add_argument("--no-resume", action="store_true", help="recompute all stages")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("lcurve", help="sweep the regularization weight at fixed budget")
    sp.add_argument("config", help="path to the experiment YAML")
    sp.add_argument(
        "--lambdas",
        type=_lambda_list,
        default=[0.01, 0.1, 1.0, 10.0],
        help="comma-separated weights (default: 0.01,0.1,1,10)",
    )
    sp.set_defaults(func=_cmd_lcurve)

    sp = sub.add_parser("demo-l1", help="run the Gaussian shrinkage demo")
    sp.add_argument("--l1", type=float, default=1.0, help="shrinkage weight (default 1.0)")
    sp.add_argument("--particles", type=int, default=50)
    sp.add_argument("--iterations", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=3)
    sp.add_argument("--output-dir", default="runs/demo-l1")
    sp.set_defaults(func=_cmd_demo_l1)

    sp = sub.add_parser("plot", help="render a run table to SVG")
    sp.add_argument("table", help="path to table.csv or lcurve.csv")
    sp.add_argument("-o", "--output", default=None, help="output SVG path")
    sp.add_argument("--kind", choices=("line", "band"), default=None)
    sp.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
