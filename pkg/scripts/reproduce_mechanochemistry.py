#!/usr/bin/env python3
"""Run the coupled stress/chemistry reference experiment.

After the run, evaluates the learned chemical potential on the zero-strain
slice to show the double-well sign structure: positive on the way into the
first well, negative on the way out of the second.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from steinuq.configs import apply_env_overrides, parse_config
from steinuq.pipeline import build_spec, run_pipeline
from steinuq.plots import plot_file
from steinuq.potentials import load_model, mechchem_observables

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--no-resume", action="store_true")
    args = parser.parse_args()

    cfg = apply_env_overrides(parse_config(CONFIG_DIR / "mechchem_l0.yaml"))
    print(f"== mechchem_l0 -> {cfg.output_dir}")
    man = run_pipeline(cfg, resume=not args.no_resume)
    for stage in man.stages:
        print(f"   {stage}: {man.stage_seconds.get(stage, 0.0):.1f}s")

    outdir = Path(cfg.output_dir)
    summary = json.loads((outdir / "summary.json").read_text())
    print(
        f"active {summary['active_count']}/{summary['n_params']}  "
        f"map R2 {summary['map_r2']:.4f}  mean W1 {summary['mean_w1']:.4f}"
    )
    plot_file(outdir / "table.csv", outdir / "table.svg")

    spec = build_spec(cfg)
    pv, _ = load_model(outdir / "map_model.json")
    E0 = np.zeros((2, 2))
    cs = np.linspace(0.0, 1.0, 11)
    mus = [mechchem_observables(spec, pv.values, E0, c)[1] for c in cs]
    print("chemical potential on the zero-strain slice:")
    for c, mu in zip(cs, mus):
        print(f"   c={c:.1f}  mu={mu:+.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
