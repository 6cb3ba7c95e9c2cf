"""Observed 2D paths: progress distance, resampling, headings, rasterization.

The raster stack is the fixed 181-channel image the goal predictor consumes:
channels [0, 90) hold Gaussian splats of the past positions (oldest first),
channels [90, 180) hold splats at a 0.3 m look-ahead point along each
sample's heading, and channel 180 is the binary walkable map.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ValidationError
from .scene import GridGeometry, SceneMap, world_to_pixel

EPOCHS = 90
POSITION_CHANNELS = slice(0, EPOCHS)
HEADING_CHANNELS = slice(EPOCHS, 2 * EPOCHS)
MAP_CHANNEL = 2 * EPOCHS
N_CHANNELS = 2 * EPOCHS + 1

HEADING_LOOKAHEAD_M = 0.3
STATIONARY_EPS_M = 1e-6
DEFAULT_SIGMA_PX = 3.0


@dataclass(frozen=True)
class Trajectory:
    """Timestamped world-coordinate path: columns (t seconds, x m, y m)."""

    samples: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        pts = np.asarray(self.samples, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError("trajectory samples must be an (n, 3) array")
        if pts.shape[0] < 2:
            raise ValidationError("trajectory needs at least 2 samples")
        if not (np.diff(pts[:, 0]) > 0).all():
            raise ValidationError("trajectory timestamps must strictly increase")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "samples", pts)

    @property
    def t(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def xy(self) -> np.ndarray:
        return self.samples[:, 1:]

    def __len__(self) -> int:
        return self.samples.shape[0]


def from_points(points) -> Trajectory:
    return Trajectory(samples=np.asarray(points, dtype=np.float64))


def load_trajectory(path: str | Path) -> Trajectory:
    """Read a `t,x,y` CSV (UTF-8, LF or CRLF)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "x", "y"]:
            raise ValidationError(f"{path}: expected header 't,x,y', got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return Trajectory(samples=np.asarray(rows, dtype=np.float64))


def save_trajectory(traj: Trajectory, path: str | Path) -> None:
    path = Path(path)
    lines = ["t,x,y"]
    for t, x, y in traj.samples:
        lines.append(f"{float(t)!r},{float(x)!r},{float(y)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def progress_distance(traj: Trajectory) -> float:
    """Cumulative Euclidean path length over consecutive samples, in meters."""
    deltas = np.diff(traj.xy, axis=0)
    return float(np.hypot(deltas[:, 0], deltas[:, 1]).sum())


def resample_to_epochs(traj: Trajectory, n: int = EPOCHS) -> Trajectory:
    """Resample to exactly n samples, uniform in time, linearly interpolated."""
    if n < 2:
        raise ContractError(f"need at least 2 epochs, got {n}")
    times = np.linspace(traj.t[0], traj.t[-1], n)
    x = np.interp(times, traj.t, traj.samples[:, 1])
    y = np.interp(times, traj.t, traj.samples[:, 2])
    # endpoints are preserved exactly
    x[0], y[0] = traj.samples[0, 1], traj.samples[0, 2]
    x[-1], y[-1] = traj.samples[-1, 1], traj.samples[-1, 2]
    return Trajectory(samples=np.column_stack((times, x, y)))


def headings(traj: Trajectory) -> np.ndarray:
    """Per-sample heading angle in radians.

    Sample i points along the segment to sample i+1; the final sample and
    stationary segments copy the previous heading (0 before any motion).
    """
    xy = traj.xy
    out = np.zeros(len(traj))
    prev = 0.0
    for i in range(len(traj) - 1):
        dx, dy = xy[i + 1] - xy[i]
        if math.hypot(dx, dy) >= STATIONARY_EPS_M:
            prev = math.atan2(dy, dx)
        out[i] = prev
    out[-1] = prev
    return out


@dataclass(frozen=True)
class RasterStack:
    """181 x H x W float32 input stack for the goal predictor."""

    geometry: GridGeometry
    channels: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float32)
        expected = (N_CHANNELS, self.geometry.height_px, self.geometry.width_px)
        if ch.shape != expected:
            raise ValidationError(
                f"raster stack shape {ch.shape} must be {expected}"
            )
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)


def gaussian_splat(
    shape: tuple[int, int],
    center: tuple[int, int],
    sigma_px: float,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Unnormalized isotropic Gaussian with peak 1.0 at ``center``.

    Truncated at radius 3 sigma (cells strictly beyond stay 0). Writes into
    ``out`` when given, else allocates a float32 grid.
    """
    H, W = shape
    if out is None:
        out = np.zeros((H, W), dtype=np.float32)
    r0, c0 = center
    radius = 3.0 * sigma_px
    rad = int(math.floor(radius))
    rlo, rhi = max(0, r0 - rad), min(H - 1, r0 + rad)
    clo, chi = max(0, c0 - rad), min(W - 1, c0 + rad)
    if rlo > rhi or clo > chi:
        return out
    rr = np.arange(rlo, rhi + 1) - r0
    cc = np.arange(clo, chi + 1) - c0
    d2 = rr[:, None] ** 2 + cc[None, :] ** 2
    patch = np.exp(-d2 / (2.0 * sigma_px * sigma_px))
    patch[d2 > radius * radius] = 0.0
    out[rlo : rhi + 1, clo : chi + 1] = patch.astype(np.float32)
    return out


def rasterize(
    traj: Trajectory,
    scene_map: SceneMap,
    sigma_px: float = DEFAULT_SIGMA_PX,
) -> RasterStack:
    """Rasterize a 90-epoch trajectory into the 181-channel input stack."""
    if len(traj) != EPOCHS:
        raise ContractError(
            f"rasterize expects exactly {EPOCHS} epochs, got {len(traj)}; "
            "resample_to_epochs first"
        )
    geom = scene_map.geometry
    H, W = geom.height_px, geom.width_px
    stack = np.zeros((N_CHANNELS, H, W), dtype=np.float32)
    angles = headings(traj)
    for k in range(EPOCHS):
        x, y = traj.xy[k]
        gaussian_splat((H, W), world_to_pixel(geom, (x, y)), sigma_px,
                       out=stack[k])
        ahead = (
            x + HEADING_LOOKAHEAD_M * math.cos(angles[k]),
            y + HEADING_LOOKAHEAD_M * math.sin(angles[k]),
        )
        gaussian_splat((H, W), world_to_pixel(geom, ahead), sigma_px,
                       out=stack[EPOCHS + k])
    stack[MAP_CHANNEL] = scene_map.walkable.astype(np.float32)
    return RasterStack(geometry=geom, channels=stack)
