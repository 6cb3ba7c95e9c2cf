"""Target-area heatmap predictors and heatmap -> object probabilities.

Two prediction routes share one contract:

  * ``unet_forward``: inference through a five-level U-Net whose weights
    arrive in a TRLW container (see :mod:`goalfuse.weights`).
  * ``geometric_predict``: a deterministic path-efficiency model scoring
    each walkable cell by how much detour the observed path would imply if
    that cell were the goal. People rarely backtrack, so low detour means
    high likelihood.

Architecture schema (fixed; containers with other shapes are rejected):
five encoder levels of two 3x3 convs + ReLU with a 2x2 max-pool after each,
then five decoder levels of bilinear 2x upsampling, skip concatenation from
the matching encoder level and two 3x3 convs + ReLU, then a 1x1 conv and a
sigmoid. Grid sides must be divisible by 32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    SchemaError,
)
from .fusion import ObjectProbabilityMap, Telemetry, normalized
from .scene import (
    Heatmap,
    Scene,
    distance_field,
    object_overlap_mass,
    snap_to_walkable,
    world_to_pixel,
)
from .trajectory import (
    DEFAULT_SIGMA_PX,
    RasterStack,
    Trajectory,
    progress_distance,
    rasterize,
    resample_to_epochs,
)
from .weights import WeightContainer


@dataclass(frozen=True)
class UNetSpec:
    """Channel plan of the goal-prediction network."""

    encoder_channels: tuple[int, ...] = (256, 256, 512, 512, 512)
    decoder_channels: tuple[int, ...] = (512, 512, 512, 256, 256)
    in_channels: int = 181
    out_channels: int = 1

    def __post_init__(self):
        if len(self.encoder_channels) != 5 or len(self.decoder_channels) != 5:
            raise ContractError("encoder/decoder channel lists must have length 5")
        if self.in_channels != 181:
            raise ContractError(f"in_channels must be 181, got {self.in_channels}")


def schema(spec: UNetSpec = UNetSpec()) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (tensor name, shape) pairs the forward pass requires."""
    enc = spec.encoder_channels
    dec = spec.decoder_channels
    out: list[tuple[str, tuple[int, ...]]] = []
    in_ch = spec.in_channels
    for i, ch in enumerate(enc, start=1):
        out.append((f"enc{i}.conv1.weight", (ch, in_ch, 3, 3)))
        out.append((f"enc{i}.conv1.bias", (ch,)))
        out.append((f"enc{i}.conv2.weight", (ch, ch, 3, 3)))
        out.append((f"enc{i}.conv2.bias", (ch,)))
        in_ch = ch
    carry = enc[-1]  # pooled bottom features
    for i, ch in enumerate(dec, start=1):
        skip = enc[5 - i]
        out.append((f"dec{i}.conv1.weight", (ch, carry + skip, 3, 3)))
        out.append((f"dec{i}.conv1.bias", (ch,)))
        out.append((f"dec{i}.conv2.weight", (ch, ch, 3, 3)))
        out.append((f"dec{i}.conv2.bias", (ch,)))
        carry = ch
    out.append(("head.weight", (spec.out_channels, dec[-1], 1, 1)))
    out.append(("head.bias", (spec.out_channels,)))
    return out


def validate_schema(weights: WeightContainer, spec: UNetSpec = UNetSpec()) -> None:
    """Raise SchemaError unless the container holds exactly the schema tensors."""
    wanted = schema(spec)
    for name, shape in wanted:
        if name not in weights:
            raise SchemaError(f"missing tensor {name!r}")
        got = weights[name].shape
        if tuple(got) != shape:
            raise SchemaError(
                f"tensor {name!r} has shape {tuple(got)}, expected {shape}"
            )
    extra = set(weights.tensors) - {name for name, _ in wanted}
    if extra:
        raise SchemaError(f"unexpected tensors {sorted(extra)}")


def make_random_weights(
    seed: int,
    spec: UNetSpec = UNetSpec(),
    low: float = -0.05,
    high: float = 0.05,
) -> WeightContainer:
    """Schema-complete container with seeded uniform values (for testing)."""
    rng = np.random.default_rng(seed)
    tensors = {
        name: rng.uniform(low, high, size=shape).astype(np.float32)
        for name, shape in schema(spec)
    }
    return WeightContainer(tensors=tensors)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1, via 9 accumulated GEMMs."""
    c, h, width = x.shape
    o = w.shape[0]
    xp = np.zeros((c, h + 2, width + 2), dtype=np.float32)
    xp[:, 1:-1, 1:-1] = x
    # contiguous per-tap weight matrices keep the matmuls on the BLAS path
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    out = np.zeros((o, h * width), dtype=np.float32)
    for dr in range(3):
        for dc in range(3):
            tap = np.ascontiguousarray(xp[:, dr : dr + h, dc : dc + width])
            out += taps[dr, dc] @ tap.reshape(c, h * width)
    out += b[:, None]
    return out.reshape(o, h, width)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def _upsample_axis(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # bilinear 2x, align_corners=False: src = max(0, (dst + 0.5)/2 - 0.5)
    dst = np.arange(2 * n, dtype=np.float32)
    src = np.maximum(0.0, (dst + 0.5) / 2.0 - 0.5)
    lo = np.floor(src).astype(np.int64)
    lo = np.minimum(lo, n - 1)
    hi = np.minimum(lo + 1, n - 1)
    frac = (src - lo).astype(np.float32)
    return lo, hi, frac


def _upsample2_bilinear(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    rlo, rhi, rf = _upsample_axis(h)
    clo, chi, cf = _upsample_axis(w)
    rows = x[:, rlo, :] * (1.0 - rf)[None, :, None] + x[:, rhi, :] * rf[None, :, None]
    out = rows[:, :, clo] * (1.0 - cf)[None, None, :] + rows[:, :, chi] * cf[None, None, :]
    return out.astype(np.float32, copy=False)


def unet_forward(
    spec: UNetSpec,
    weights: WeightContainer,
    stack: RasterStack,
) -> Heatmap:
    """Run the network on a raster stack; deterministic per (weights, input)."""
    validate_schema(weights, spec)
    geom = stack.geometry
    h, w = geom.height_px, geom.width_px
    if h % 32 != 0 or w % 32 != 0:
        raise DimensionError(f"grid {h}x{w} must be divisible by 32")
    if stack.channels.shape[0] != spec.in_channels:
        raise DimensionError(
            f"stack has {stack.channels.shape[0]} channels, expected "
            f"{spec.in_channels}"
        )

    def block(prefix: str, x: np.ndarray) -> np.ndarray:
        x = np.maximum(
            _conv3x3(x, weights[f"{prefix}.conv1.weight"], weights[f"{prefix}.conv1.bias"]),
            0.0,
        )
        return np.maximum(
            _conv3x3(x, weights[f"{prefix}.conv2.weight"], weights[f"{prefix}.conv2.bias"]),
            0.0,
        )

    x = stack.channels
    skips = []
    for i in range(1, 6):
        x = block(f"enc{i}", x)
        skips.append(x)
        x = _maxpool2(x)
    for i in range(1, 6):
        x = _upsample2_bilinear(x)
        x = np.concatenate((x, skips[5 - i]), axis=0)
        x = block(f"dec{i}", x)
    head_w = weights["head.weight"][:, :, 0, 0]
    head_b = weights["head.bias"]
    z = (head_w @ x.reshape(x.shape[0], h * w) + head_b[:, None]).reshape(h, w)
    values = 1.0 / (1.0 + np.exp(-z.astype(np.float64)))
    return Heatmap(geometry=geom, values=values)


def _endpoint_pixels(scene: Scene, traj: Trajectory) -> tuple:
    geom = scene.geometry
    start_px = snap_to_walkable(scene.map, world_to_pixel(geom, tuple(traj.xy[0])))
    cur_px = snap_to_walkable(scene.map, world_to_pixel(geom, tuple(traj.xy[-1])))
    return start_px, cur_px


def _efficiency_field(
    scene: Scene,
    d_start: np.ndarray,
    d_cur: np.ndarray,
    l_obs: float,
    beta: float,
) -> Heatmap:
    reachable = np.isfinite(d_start) & np.isfinite(d_cur)
    detour = np.zeros_like(d_start)
    np.subtract(d_cur, d_start, out=detour, where=reachable)
    detour += l_obs
    np.maximum(detour, 0.0, out=detour)
    values = np.zeros_like(d_start)
    np.exp(-beta * detour, out=values, where=reachable)
    values[~scene.map.walkable] = 0.0
    if values.max() <= 0:
        raise DegenerateInputError(
            "trajectory endpoints are not mutually reachable on this map"
        )
    return Heatmap(geometry=scene.geometry, values=values)


def geometric_predict(
    scene: Scene,
    traj: Trajectory,
    beta: float = 1.0,
) -> Heatmap:
    """Score each walkable cell by the detour the observed path implies.

    value(g) = exp(-beta * max(0, L_obs + D(current, g) - D(start, g)))
    with D the geodesic distance; non-walkable and unreachable cells get 0.
    """
    if not (beta > 0):
        raise ContractError(f"beta must be positive, got {beta}")
    start_px, cur_px = _endpoint_pixels(scene, traj)
    return _efficiency_field(
        scene,
        distance_field(scene.map, start_px),
        distance_field(scene.map, cur_px),
        progress_distance(traj),
        beta,
    )


def object_probabilities(
    heatmap: Heatmap,
    scene: Scene,
    telemetry: Telemetry | None = None,
) -> ObjectProbabilityMap:
    """Normalize per-object overlap mass into a probability map.

    Zero total mass over all objects falls back to uniform (flagged).
    """
    if heatmap.geometry != scene.geometry:
        raise DimensionError("heatmap geometry does not match scene geometry")
    masses = {
        obj.label: object_overlap_mass(heatmap, obj) for obj in scene.objects
    }
    if sum(masses.values()) <= 0 and telemetry is not None:
        telemetry.flag("object_mass_uniform_fallback")
    return normalized(masses)


class GoalPredictor(Protocol):
    """Anything that maps (scene, trajectory) to a target-area heatmap."""

    def predict(self, scene: Scene, traj: Trajectory) -> Heatmap: ...

    def describe(self) -> str: ...


class GeometricGoalPredictor:
    """Stateless in results, but memoizes distance fields per (map, pixel).

    Evaluating one trajectory at several progress prefixes shares the start
    field, which dominates the cost on 256 x 256 grids.
    """

    def __init__(self, beta: float = 1.0):
        if not (beta > 0):
            raise ContractError(f"beta must be positive, got {beta}")
        self.beta = beta
        self._fields: dict[tuple[int, tuple[int, int]], np.ndarray] = {}
        self._maps: list = []  # keeps id() keys valid for the cache lifetime

    def _field(self, scene_map, pixel) -> np.ndarray:
        key = (id(scene_map), pixel)
        if key not in self._fields:
            self._fields[key] = distance_field(scene_map, pixel)
            self._maps.append(scene_map)
        return self._fields[key]

    def predict(self, scene: Scene, traj: Trajectory) -> Heatmap:
        start_px, cur_px = _endpoint_pixels(scene, traj)
        return _efficiency_field(
            scene,
            self._field(scene.map, start_px),
            self._field(scene.map, cur_px),
            progress_distance(traj),
            self.beta,
        )

    def describe(self) -> str:
        return f"geometric(beta={self.beta})"


class UniformGoalPredictor:
    """Flat field; object probabilities become proportional to mask area."""

    def predict(self, scene: Scene, traj: Trajectory) -> Heatmap:
        geom = scene.geometry
        return Heatmap(
            geometry=geom,
            values=np.ones((geom.height_px, geom.width_px)),
        )

    def describe(self) -> str:
        return "uniform"


class UnetGoalPredictor:
    def __init__(
        self,
        weights: WeightContainer,
        spec: UNetSpec = UNetSpec(),
        sigma_px: float = DEFAULT_SIGMA_PX,
    ):
        validate_schema(weights, spec)
        self.weights = weights
        self.spec = spec
        self.sigma_px = sigma_px

    def predict(self, scene: Scene, traj: Trajectory) -> Heatmap:
        stack = rasterize(resample_to_epochs(traj), scene.map, sigma_px=self.sigma_px)
        return unet_forward(self.spec, self.weights, stack)

    def describe(self) -> str:
        return f"unet(sigma_px={self.sigma_px})"
