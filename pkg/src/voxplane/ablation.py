"""Cluster-count scaling benchmark for the plane fitter."""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from .plane_fit import RansacParams, fit_planes

COLUMNS = ("clusters", "trials", "mean_points", "parallel_ms", "serial_ms", "ratio")


def synthetic_clusters(rng, k: int, min_points=10000, max_points=30000,
                       outlier_fraction=0.2, noise_sigma=0.002) -> dict:
    """``k`` noisy planar patches with uniform outliers, sizes drawn in ``[min, max]``."""
    out = {}
    for c in range(k):
        m = int(rng.integers(min_points, max_points + 1))
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        u = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        center = rng.uniform(-1.0, 1.0, 3)
        n_out = int(round(outlier_fraction * m))
        ab = rng.uniform(-0.5, 0.5, (m - n_out, 2))
        pts = center + ab[:, :1] * u + ab[:, 1:] * v + rng.normal(0.0, noise_sigma, (m - n_out, 1)) * n
        outliers = center + rng.uniform(-0.5, 0.5, (n_out, 3))
        out[c] = np.ascontiguousarray(np.vstack([pts, outliers]))
    return out


def run_ablation(cfg: dict, out_dir=None, figures: bool = True, trials: int | None = None) -> list:
    """Mean fit time with and without cluster-level parallelism per cluster count.

    Returns the CSV rows; with ``out_dir`` writes ``scaling.csv`` (and a plot).
    """
    ab = cfg["ablation"]
    trials = int(ab["trials"] if trials is None else trials)
    counts = [int(k) for k in ab["cluster_counts"]]
    params = RansacParams(int(cfg["ransac"]["iterations"]), float(cfg["ransac"]["inlier_eps"]),
                          int(cfg["seed"]))
    rows = []
    if trials > 0:
        rng = np.random.default_rng(int(cfg["seed"]))
        warm = synthetic_clusters(rng, 2, 200, 300)
        fit_planes(warm, params, True)
        fit_planes(warm, params, False)
        for k in counts:
            par, ser, pts = [], [], []
            for t in range(trials):
                data = synthetic_clusters(rng, k, ab["min_points"], ab["max_points"],
                                          ab["outlier_fraction"], ab["noise_sigma"])
                pts.append(sum(len(p) for p in data.values()))
                # alternate which mode runs first to cancel drift
                for mode in ((True, False) if t % 2 == 0 else (False, True)):
                    t0 = time.perf_counter()
                    fit_planes(data, params, cluster_parallel=mode)
                    dt = 1e3 * (time.perf_counter() - t0)
                    (par if mode else ser).append(dt)
            p, s = float(np.mean(par)), float(np.mean(ser))
            rows.append({"clusters": k, "trials": trials, "mean_points": float(np.mean(pts)),
                         "parallel_ms": p, "serial_ms": s, "ratio": p / s})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scaling.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in rows:
                w.writerow([f"{r[c]:.4f}" if isinstance(r[c], float) else r[c] for c in COLUMNS])
        if figures and rows:
            from .plotting import scaling_figure
            scaling_figure(rows, out / "figures" / "scaling.png")
    return rows
