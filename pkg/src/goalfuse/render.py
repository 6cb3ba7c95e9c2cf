"""Composite PNG rendering of a prediction (map, heatmap, path, objects)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image, ImageDraw

from .scene import Heatmap, Scene, world_to_pixel
from .trajectory import Trajectory

_BG_WALKABLE = 220
_BG_OBSTACLE = 40
_HEATMAP_RGB = (255, 215, 0)
_HEATMAP_MAX_ALPHA = 0.62
_COLOR_LOW = np.array([40, 80, 230], dtype=np.float64)   # blue = unlikely
_COLOR_HIGH = np.array([230, 60, 40], dtype=np.float64)  # red = likely


def _rank_scale(probs: Mapping[str, float]) -> dict[str, float]:
    """Rank positions in [0, 1] (ties share their average position)."""
    labels = sorted(probs, key=lambda l: (probs[l], l))
    n = len(labels)
    if n == 1:
        return {labels[0]: 0.5}
    scale: dict[str, float] = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and probs[labels[j + 1]] == probs[labels[i]]:
            j += 1
        mid = (i + j) / 2 / (n - 1)
        for k in range(i, j + 1):
            scale[labels[k]] = mid
        i = j + 1
    return scale


def render_prediction(
    scene: Scene,
    traj: Trajectory,
    heatmap: Heatmap,
    probs: Mapping[str, float],
    out: str | Path,
) -> None:
    """Write the figure-style composite: grayscale map, yellow target-area
    overlay, green trajectory, start/current dots, objects colored
    blue (low rank) to red (high rank). Deterministic bytes per input."""
    geom = scene.geometry
    if heatmap.geometry != geom:
        raise ValueError("heatmap geometry does not match the scene")
    h, w = geom.height_px, geom.width_px

    rgb = np.full((h, w, 3), _BG_OBSTACLE, dtype=np.float64)
    rgb[scene.map.walkable] = _BG_WALKABLE

    peak = float(heatmap.values.max())
    if peak > 0:
        alpha = (heatmap.values / peak * _HEATMAP_MAX_ALPHA)[..., None]
        rgb = rgb * (1.0 - alpha) + np.asarray(_HEATMAP_RGB, dtype=np.float64) * alpha

    scale = _rank_scale(probs)
    for obj in scene.objects:
        s = scale.get(obj.label)
        if s is None:
            continue
        color = _COLOR_LOW + (_COLOR_HIGH - _COLOR_LOW) * s
        rows, cols = obj.rows_cols
        rgb[rows, cols] = color

    img = Image.fromarray(np.round(rgb).astype(np.uint8), mode="RGB").convert("RGBA")
    draw = ImageDraw.Draw(img)
    pixels = [world_to_pixel(geom, (x, y)) for x, y in traj.xy]
    xy = [(c, r) for r, c in pixels]
    if len(xy) >= 2:
        draw.line(xy, fill=(40, 200, 70, 255), width=2)
    sr, sc = pixels[0]
    cr, cc = pixels[-1]
    draw.ellipse((sc - 3, sr - 3, sc + 3, sr + 3), fill=(230, 40, 40, 255))
    draw.ellipse((cc - 3, cr - 3, cc + 3, cr + 3), fill=(30, 170, 60, 255))
    img.save(Path(out), format="PNG")
