"""Figure rendering for the report paths.

Each CLI report writes a matplotlib figure next to its delimited output:
DoLP-vs-angle curves for simulation sweeps, an image grid for detection
maps, and grouped bars for region metrics.  Figures are rendered with the
Agg backend so the toolkit stays headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .detection import DetectionMap  # noqa: E402


def save_sweep_figure(rows, path, title: str = "DoLP vs observation angle") -> Path:
    """Plot sweep rows (material, alpha, psi_deg, dolp) as one curve per series."""
    path = Path(path)
    series: dict[tuple[str, float], list[tuple[float, float]]] = {}
    for material, alpha, psi_deg, dolp in rows:
        series.setdefault((material, alpha), []).append((psi_deg, dolp))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for (material, alpha), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p for p, _ in pts], [d for _, d in pts],
                label=f"{material}, alpha={alpha:g}")
    ax.set_xlabel("observation angle (deg)")
    ax.set_ylabel("DoLP")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _map_title(meta: dict) -> str:
    method = meta.get("method", "map")
    if method == "fft_phase":
        return f"phase k={meta.get('k')} ({meta.get('frequency_hz', 0.0):.3g} Hz)"
    if method == "pca":
        return f"PC{meta.get('component')}"
    if method == "first_frame":
        return "first frame"
    return method


def save_maps_figure(maps: list[DetectionMap], path) -> Path:
    """Render detection maps side by side with provenance titles."""
    path = Path(path)
    n = len(maps)
    cols = min(n, 3)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.0 * rows),
                             squeeze=False)
    for ax in axes.flat:
        ax.set_axis_off()
    for ax, det in zip(axes.flat, maps):
        im = ax.imshow(det.image, cmap="viridis")
        ax.set_title(_map_title(det.meta), fontsize=9)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_metrics_figure(rows, path) -> Path:
    """Bar chart of CNR per label pair, grouped by map id.

    ``rows`` are (map_id, pair_label, cnr) triples.
    """
    path = Path(path)
    by_pair: dict[str, dict[str, float]] = {}
    map_ids: list[str] = []
    for map_id, pair, value in rows:
        if map_id not in map_ids:
            map_ids.append(map_id)
        by_pair.setdefault(pair, {})[map_id] = value
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(by_pair)), 4.0))
    width = 0.8 / max(len(map_ids), 1)
    for i, map_id in enumerate(map_ids):
        xs = [j + i * width for j in range(len(by_pair))]
        ys = [by_pair[p].get(map_id, 0.0) for p in by_pair]
        ax.bar(xs, ys, width=width, label=map_id)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(by_pair))])
    ax.set_xticklabels(list(by_pair), rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("CNR")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
