"""Matplotlib figures written to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes stable between runs
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def polygon_figure(polygons, truth, path, title="Detected planes (top view)") -> Path:
    fig, ax = plt.subplots(figsize=(6, 6))
    for t in truth:
        v = np.vstack([t.vertices3d, t.vertices3d[:1]])
        ax.plot(v[:, 0], v[:, 1], "k--", lw=1.0)
    cmap = plt.get_cmap("viridis")
    zs = [float(np.mean(p.vertices3d[:, 2])) for p in polygons]
    lo, hi = (min(zs), max(zs)) if zs else (0.0, 1.0)
    for p, z in zip(polygons, zs):
        c = cmap(0.5 if hi == lo else (z - lo) / (hi - lo))
        ax.fill(p.vertices3d[:, 0], p.vertices3d[:, 1], color=c, alpha=0.45)
        ax.plot(*np.vstack([p.vertices3d, p.vertices3d[:1]])[:, :2].T, color=c, lw=1.2)
        cx, cy = p.vertices3d[:, :2].mean(0)
        ax.annotate(f"{p.cluster_label}\nz={z:.2f}", (cx, cy), ha="center", fontsize=7)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    return _save(fig, path)


def timing_figure(timing, path) -> Path:
    keys = [k for k in timing.rows[0] if k.endswith("_ms") and k != "total_ms"]
    frames = [r["frame"] for r in timing.rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    bottom = np.zeros(len(frames))
    for k in keys:
        vals = np.array([r[k] for r in timing.rows])
        ax.bar(frames, vals, bottom=bottom, label=k[:-3], width=1.0)
        bottom += vals
    ax.set_xlabel("frame")
    ax.set_ylabel("time [ms]")
    ax.legend(fontsize=8)
    ax.set_title("Per-stage processing time")
    return _save(fig, path)


def scaling_figure(rows, path) -> Path:
    k = [r["clusters"] for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    a1.plot(k, [r["parallel_ms"] for r in rows], "o-", label="cluster-parallel")
    a1.plot(k, [r["serial_ms"] for r in rows], "s-", label="per-cluster launches")
    a1.set_xscale("log", base=2)
    a1.set_xlabel("clusters")
    a1.set_ylabel("mean time [ms]")
    a1.legend()
    a2.plot(k, [r["ratio"] for r in rows], "o-")
    a2.axhline(1.0, color="k", lw=0.8, ls=":")
    a2.set_xscale("log", base=2)
    a2.set_xlabel("clusters")
    a2.set_ylabel("parallel / serial")
    fig.tight_layout()
    return _save(fig, path)
