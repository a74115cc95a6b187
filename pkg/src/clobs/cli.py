"""Command-line interface.

    clobs run --preset noise-free --seed 3 --out results/
    clobs run --config my_run.json
    clobs sweep --preset noise-1e-2 --seeds 5 --out sweep/
    clobs verify
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .acceptance import run_all
from .harness import PRESET_NAMES, RunConfig, preset, run


def _add_run_parser(sub):
    p = sub.add_parser("run", help="execute one simulation run")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESET_NAMES, help="bundled parameter set")
    src.add_argument("--config", type=Path, help="JSON run configuration file")
    p.add_argument("--seed", type=int, default=0, help="measurement-noise seed")
    p.add_argument("--duration", type=float, default=60.0, help="simulated seconds")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--integrator", choices=("rk4", "euler"), default="rk4",
                   help="plant integrator (rk4 keeps window integrals second-order)")
    return p


def _build_config(args) -> RunConfig:
    if args.config is not None:
        with open(args.config) as fh:
            cfg = RunConfig.from_dict(json.load(fh))
        if args.out is not None:
            cfg.output_dir = args.out
        return cfg
    return preset(
        args.preset,
        seed=args.seed,
        duration=args.duration,
        output_dir=args.out,
        integrator=args.integrator,
    )


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    result = run(cfg)
    summary = result.summary.to_dict()
    for key in ("rank_time", "final_theta_error", "final_p_error", "final_q_error",
                "theta_decay_slope", "lambda_min_final", "seed"):
        print(f"{key}: {summary[key]}")
    print(summary["gain_condition_report"])
    if cfg.output_dir is not None:
        print(f"outputs written to {cfg.output_dir}")
    return 0


def _cmd_sweep(args) -> int:
    out_root = args.out
    per_seed = []
    for seed in range(args.seeds):
        out_dir = None if out_root is None else out_root / f"seed_{seed}"
        cfg = preset(args.preset, seed=seed, duration=args.duration, output_dir=out_dir)
        result = run(cfg)
        per_seed.append(
            {
                "seed": seed,
                "final_theta_error": result.summary.final_theta_error,
                "rms_theta_final10": result.aggregates.rms_theta_final10,
                "lambda_min_final": result.summary.lambda_min_final,
                "rank_time": result.summary.rank_time,
            }
        )
        print(f"seed {seed}: final |theta_err| {result.summary.final_theta_error:.4e}, "
              f"final-10s RMS {result.aggregates.rms_theta_final10:.4e}")
    rms = [entry["rms_theta_final10"] for entry in per_seed]
    aggregate = {
        "preset": args.preset,
        "seeds": args.seeds,
        "median_rms_theta_final10": float(np.median(rms)),
        "per_seed": per_seed,
    }
    print(f"median final-10s RMS over {args.seeds} seeds: "
          f"{aggregate['median_rms_theta_final10']:.4e}")
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        with open(out_root / "sweep_summary.json", "w") as fh:
            json.dump(aggregate, fh, indent=2)
            fh.write("\n")
        print(f"sweep summary written to {out_root / 'sweep_summary.json'}")
    return 0


def _cmd_verify(_args) -> int:
    results = run_all()
    for item in results:
        print(item.line())
    failed = [item for item in results if not item.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clobs",
        description="Concurrent-learning output-feedback parameter and state estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)

    sweep = sub.add_parser("sweep", help="run one preset across several noise seeds")
    sweep.add_argument("--preset", choices=PRESET_NAMES, required=True)
    sweep.add_argument("--seeds", type=int, required=True, help="number of seeds (0..K-1)")
    sweep.add_argument("--duration", type=float, default=60.0)
    sweep.add_argument("--out", type=Path, default=None)

    sub.add_parser("verify", help="run the acceptance criteria and report pass/fail")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
