"""Delimited output and figure rendering for simulation runs.

CSV layout is fixed: one metrics file per policy with the per-epoch RMSE and
bound columns, plus a trajectory file from a representative episode.  The
manifest echoes the full configuration so a run can be reproduced exactly.
Figures are rendered to PNG next to the data.
"""

from __future__ import annotations

import csv
import json
import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .scenario import EpisodeTrace, PolicyAggregate, ScenarioConfig, config_to_dict

METRICS_COLUMNS = (
    "epoch", "rmse_pos", "rmse_tau", "rmse_phi", "rmse_theta", "rmse_mu",
    "cpcrb_tau", "cpcrb_phi", "cpcrb_theta", "cpcrb_mu",
    "logdet_cpcrb_T", "failures",
)

TRAJECTORY_COLUMNS = (
    "epoch", "uav_x", "uav_y", "uav_z", "gu_x", "gu_y", "gu_z",
    "gu_est_x", "gu_est_y", "gu_est_z",
)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def write_metrics_csv(path: str, agg: PolicyAggregate) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for i, epoch in enumerate(agg.epochs):
            writer.writerow([
                _fmt(epoch),
                _fmt(agg.rmse_pos[i]),
                _fmt(agg.rmse_tau[i]),
                _fmt(agg.rmse_phi[i]),
                _fmt(agg.rmse_theta[i]),
                _fmt(agg.rmse_mu[i]),
                _fmt(agg.cpcrb_tau[i]),
                _fmt(agg.cpcrb_phi[i]),
                _fmt(agg.cpcrb_theta[i]),
                _fmt(agg.cpcrb_mu[i]),
                _fmt(agg.logdet_cpcrb_T[i]),
                _fmt(agg.failures),
            ])


def write_trajectory_csv(path: str, trace: EpisodeTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        n = len(trace.uav_world)
        for i in range(n):
            writer.writerow(
                [_fmt(i + 1)]
                + [_fmt(v) for v in trace.uav_world[i]]
                + [_fmt(v) for v in trace.gu_world[i]]
                + [_fmt(v) for v in trace.gu_world_est[i]]
            )


def write_manifest(path: str, cfg: ScenarioConfig, **extra) -> None:
    """Atomic JSON manifest: config echo, seed, version and run stats."""
    payload = {
        "version": __version__,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    payload.update(extra)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def render_policy_figure(path: str, agg: PolicyAggregate) -> None:
    """Three panels: world trajectory, delay RMSE vs bound, angle RMSE vs
    bound.  Bound curves are plotted as root-CPCRB so units match the RMSE."""
    trace = agg.sample_trace
    fig, axes = plt.subplots(1, 3, figsize=(13.5, 4.0))

    ax = axes[0]
    ax.plot(trace.gu_world[:, 0], trace.gu_world[:, 1], "k-", lw=1.5, label="target path")
    ax.plot(trace.uav_world[:, 0], trace.uav_world[:, 1], "b-", lw=1.5, label="platform path")
    ax.scatter(
        trace.gu_world_est[:, 0], trace.gu_world_est[:, 1],
        s=6, c="tab:red", alpha=0.5, label="target estimates",
    )
    ax.plot(trace.gu_world[0, 0], trace.gu_world[0, 1], "k^", ms=8)
    ax.plot(trace.uav_world[0, 0], trace.uav_world[0, 1], "bs", ms=8)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{agg.policy} trajectory (run 0)")
    ax.legend(fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(alpha=0.3)

    ax = axes[1]
    ax.semilogy(agg.epochs, agg.rmse_tau, "b-", label="delay RMSE")
    ax.semilogy(agg.epochs, np.sqrt(agg.cpcrb_tau), "b--", label="root bound")
    ax.set_xlabel("epoch")
    ax.set_ylabel("delay [s]")
    ax.set_title("delay estimation")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)

    ax = axes[2]
    ax.semilogy(agg.epochs, agg.rmse_phi, "g-", label="azimuth RMSE")
    ax.semilogy(agg.epochs, np.sqrt(agg.cpcrb_phi), "g--", label="azimuth root bound")
    ax.semilogy(agg.epochs, agg.rmse_theta, "m-", label="polar RMSE")
    ax.semilogy(agg.epochs, np.sqrt(agg.cpcrb_theta), "m--", label="polar root bound")
    ax.set_xlabel("epoch")
    ax.set_ylabel("angle [rad]")
    ax.set_title("angle estimation")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)

    fig.suptitle(f"policy: {agg.policy}  ({agg.n_runs} runs, {agg.failures} failed)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_policy_outputs(out_dir: str, agg: PolicyAggregate, figures: bool = True) -> list:
    """Write the metrics + trajectory CSVs (and a PNG) for one policy."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    metrics = os.path.join(out_dir, f"metrics_{agg.policy}.csv")
    write_metrics_csv(metrics, agg)
    written.append(metrics)
    trajectory = os.path.join(out_dir, f"trajectory_{agg.policy}.csv")
    write_trajectory_csv(trajectory, agg.sample_trace)
    written.append(trajectory)
    if figures:
        png = os.path.join(out_dir, f"fig_{agg.policy}.png")
        render_policy_figure(png, agg)
        written.append(png)
    return written
