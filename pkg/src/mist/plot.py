"""Minimal deterministic SVG scatter plots for 2-D datasets."""
from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def scatter_svg(points, labels, title: str = "", size: int = 480, radius: float = 1.6) -> str:
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("scatter plots need 2-D features; this command is for the synthetic 2-D datasets only")
    if labels.shape[0] != points.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {points.shape[0]} points")
    pad = 30
    legend_w = 90
    lo = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - lo, 1e-12)
    scale = (size - 2 * pad) / span.max()
    w = size + legend_w
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{size}" viewBox="0 0 {w} {size}">',
           f'<rect width="{w}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="{pad}" y="{pad - 10}" font-family="sans-serif" font-size="14">{title}</text>')
    classes = np.unique(labels)
    for c in classes:
        color = PALETTE[int(c) % len(PALETTE)]
        out.append(f'<g fill="{color}" fill-opacity="0.7">')
        for x, y in points[labels == c]:
            cx = pad + (x - lo[0]) * scale
            cy = size - pad - (y - lo[1]) * scale
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}"/>')
        out.append("</g>")
    for k, c in enumerate(classes):
        color = PALETTE[int(c) % len(PALETTE)]
        y = pad + 20 * k
        out.append(f'<rect x="{size + 10}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{size + 26}" y="{y}" font-family="sans-serif" font-size="12">cluster {int(c)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
