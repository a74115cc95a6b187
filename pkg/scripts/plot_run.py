#!/usr/bin/env python3
"""Render static plots from a run's trajectory.csv.

Usage:
    python scripts/plot_run.py RESULTS_DIR [--out PLOTS_DIR]

Produces line plots of the parameter/state estimation errors, the stack's
minimum eigenvalue, and the energy traces. Convenience only; nothing in the
package depends on it.
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("run_dir", type=Path, help="directory holding trajectory.csv")
    parser.add_argument("--out", type=Path, default=None, help="plot output directory")
    args = parser.parse_args()
    out_dir = args.out or args.run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = args.run_dir / "trajectory.csv"
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    col = {name: i for i, name in enumerate(header)}
    t = rows[:, col["t"]]

    panels = [
        ("errors.png", [
            ("theta_err", "parameter error"),
            ("p_err", "position error"),
            ("q_err", "velocity error"),
        ], "log"),
        ("states.png", [
            ("p1", "p1"), ("p2", "p2"), ("p_hat1", "p_hat1"), ("p_hat2", "p_hat2"),
        ], "linear"),
        ("velocities.png", [
            ("q1", "q1"), ("q2", "q2"), ("q_hat1", "q_hat1"), ("q_hat2", "q_hat2"),
        ], "linear"),
        ("excitation.png", [("lambda_min", "stack lambda_min")], "linear"),
        ("energy.png", [("v_r", "V_r"), ("v_theta", "V_theta"), ("v", "V")], "log"),
    ]
    for fname, series, scale in panels:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for name, label in series:
            values = rows[:, col[name]]
            if scale == "log":
                values = np.maximum(np.abs(values), 1e-16)
            ax.plot(t, values, label=label, linewidth=1.0)
        ax.set_xlabel("time [s]")
        ax.set_yscale(scale)
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / fname, dpi=130)
        plt.close(fig)
        print(f"wrote {out_dir / fname}")


if __name__ == "__main__":
    main()
