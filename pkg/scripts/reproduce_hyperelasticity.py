#!/usr/bin/env python3
"""Run the hyperelastic reference experiments and compare the posteriors.

Produces the sparse-support run plus the two dense baselines, then prints
push-forward W1 and fit quality side by side.  Expects to be run from the
repository (configs are resolved relative to this file).
"""

import argparse
import json
from pathlib import Path

from steinuq.configs import apply_env_overrides, parse_config
from steinuq.pipeline import run_pipeline
from steinuq.plots import plot_file

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
VARIANTS = ("gent_l0", "gent_l2", "gent_psvgd")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS,
        help="which reference runs to execute",
    )
    parser.add_argument("--no-resume", action="store_true")
    args = parser.parse_args()

    results = {}
    for name in args.variants:
        cfg = apply_env_overrides(parse_config(CONFIG_DIR / f"{name}.yaml"))
        print(f"== {name} -> {cfg.output_dir}")
        man = run_pipeline(cfg, resume=not args.no_resume)
        for stage in man.stages:
            seconds = man.stage_seconds.get(stage, 0.0)
            print(f"   {stage}: {seconds:.1f}s")
        outdir = Path(cfg.output_dir)
        results[name] = json.loads((outdir / "summary.json").read_text())
        plot_file(outdir / "table.csv", outdir / "table.svg")

    print()
    print(f"{'run':<12} {'method':<8} {'active':>6} {'map R2':>8} {'mean W1':>9}")
    for name, summary in results.items():
        print(
            f"{name:<12} {summary['method']:<8} {summary['active_count']:>6} "
            f"{summary['map_r2']:>8.4f} {summary['mean_w1']:>9.4f}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
