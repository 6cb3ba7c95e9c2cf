"""House scene geometry: walkable grids, object masks, world<->pixel mapping.

Conventions (fixed once, used everywhere):
  * world frame: x runs along columns, y along rows, origin at pixel (0, 0)
  * pixel coordinates are (row, col)
  * out-of-extent world points clamp to the border pixel
  * geodesics are 8-connected; an axial step costs one meters-per-pixel,
    a diagonal step sqrt(2) times that
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ContractError,
    DimensionError,
    SceneFormatError,
    ValidationError,
)

SQRT2 = math.sqrt(2.0)

# 8-connected neighborhood: (drow, dcol, is_diagonal)
_NEIGHBORS = (
    (-1, -1, True), (-1, 0, False), (-1, 1, True),
    (0, -1, False), (0, 1, False),
    (1, -1, True), (1, 0, False), (1, 1, True),
)


@dataclass(frozen=True)
class GridGeometry:
    """A square pixel grid covering a square patch of world space."""

    width_px: int = 256
    height_px: int = 256
    extent_m: float = 10.0

    def __post_init__(self):
        if self.width_px != self.height_px:
            raise ValidationError(
                f"grid must be square, got {self.width_px}x{self.height_px}"
            )
        if self.width_px < 2:
            raise ValidationError("grid needs at least 2 pixels per side")
        if not (self.extent_m > 0):
            raise ValidationError(f"extent_m must be positive, got {self.extent_m}")

    @property
    def meters_per_pixel(self) -> float:
        return self.extent_m / self.width_px


def world_to_pixel(geom: GridGeometry, point: tuple[float, float]) -> tuple[int, int]:
    """Map a world point (x, y) in meters to a (row, col) pixel.

    (0, 0) maps to pixel (0, 0) and (extent, extent) to the far corner;
    out-of-extent points clamp to the border.
    """
    x, y = point
    col = int(math.floor(x / geom.extent_m * (geom.width_px - 1)))
    row = int(math.floor(y / geom.extent_m * (geom.height_px - 1)))
    col = min(max(col, 0), geom.width_px - 1)
    row = min(max(row, 0), geom.height_px - 1)
    return row, col


def pixel_to_world(geom: GridGeometry, pixel: tuple[int, int]) -> tuple[float, float]:
    """Inverse of :func:`world_to_pixel` up to one pixel of quantization.

    Returns the midpoint of the pixel's quantization interval so the
    round-trip back to pixels is robust to floating-point rounding.
    """
    row, col = pixel
    x = (col + 0.5) / (geom.width_px - 1) * geom.extent_m
    y = (row + 0.5) / (geom.height_px - 1) * geom.extent_m
    return min(x, geom.extent_m), min(y, geom.extent_m)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SceneMap:
    """Binary walkable grid: True = walkable, False = obstacle."""

    geometry: GridGeometry
    walkable: np.ndarray  # (H, W) bool

    def __post_init__(self):
        walk = np.asarray(self.walkable)
        if walk.dtype != np.bool_:
            uniq = np.unique(walk)
            if not np.isin(uniq, (0, 1)).all():
                raise ValidationError("walkable grid must be binary")
            walk = walk.astype(bool)
        if walk.shape != (self.geometry.height_px, self.geometry.width_px):
            raise DimensionError(
                f"walkable grid shape {walk.shape} does not match geometry "
                f"{self.geometry.height_px}x{self.geometry.width_px}"
            )
        if not walk.any():
            raise ValidationError("scene map has no walkable cells")
        object.__setattr__(self, "walkable", _freeze(walk.copy()))

    def in_bounds(self, pixel: tuple[int, int]) -> bool:
        r, c = pixel
        return 0 <= r < self.geometry.height_px and 0 <= c < self.geometry.width_px


@dataclass(frozen=True)
class ObjectRegion:
    """A labeled pixel region, stored as sorted flat row-major indices."""

    label: str
    pixels: np.ndarray  # (N,) int64 flat indices, sorted unique
    color_rgb: tuple[int, int, int]
    geometry: GridGeometry

    def __post_init__(self):
        px = np.unique(np.asarray(self.pixels, dtype=np.int64))
        if px.size == 0:
            raise ValidationError(f"object {self.label!r} has an empty mask")
        n_cells = self.geometry.width_px * self.geometry.height_px
        if px[0] < 0 or px[-1] >= n_cells:
            raise ValidationError(
                f"object {self.label!r} has mask pixels outside the grid"
            )
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def rows_cols(self) -> tuple[np.ndarray, np.ndarray]:
        return np.divmod(self.pixels, self.geometry.width_px)

    def centroid_pixel(self) -> tuple[int, int]:
        rows, cols = self.rows_cols
        return int(round(rows.mean())), int(round(cols.mean()))


@dataclass(frozen=True)
class Scene:
    """A named scene map plus its ordered object regions."""

    name: str
    map: SceneMap
    objects: tuple[ObjectRegion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if len(self.objects) < 1:
            raise ValidationError(f"scene {self.name!r} has no objects")
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValidationError(f"duplicate object labels: {dupes}")

    @property
    def geometry(self) -> GridGeometry:
        return self.map.geometry

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(o.label for o in self.objects)

    def object(self, label: str) -> ObjectRegion:
        for obj in self.objects:
            if obj.label == label:
                return obj
        raise KeyError(label)


@dataclass(frozen=True)
class Heatmap:
    """Non-negative H x W field over a grid (target-area distribution)."""

    geometry: GridGeometry
    values: np.ndarray  # (H, W) float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.geometry.height_px, self.geometry.width_px):
            raise DimensionError(
                f"heatmap shape {vals.shape} does not match geometry"
            )
        if (vals < 0).any():
            raise ValidationError("heatmap values must be non-negative")
        object.__setattr__(self, "values", _freeze(vals))


# ---------------------------------------------------------------------------
# run-length encoding over row-major flat indices


def decode_rle(rle: list[int], n_cells: int) -> np.ndarray:
    """Decode [start0, len0, start1, len1, ...] into sorted flat indices."""
    if len(rle) % 2 != 0:
        raise ValidationError("mask_rle must hold (start, length) pairs")
    chunks = []
    for i in range(0, len(rle), 2):
        start, length = int(rle[i]), int(rle[i + 1])
        if start < 0 or length < 1:
            raise ValidationError(
                f"mask_rle pair ({start}, {length}) must be non-negative start "
                "and positive length"
            )
        if start + length > n_cells:
            raise ValidationError(
                f"mask_rle run ({start}, {length}) exceeds grid size {n_cells}"
            )
        chunks.append(np.arange(start, start + length, dtype=np.int64))
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


def encode_rle(pixels: np.ndarray) -> list[int]:
    """Inverse of :func:`decode_rle` for sorted unique flat indices."""
    px = np.unique(np.asarray(pixels, dtype=np.int64))
    if px.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(px) != 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [px.size - 1]))
    out: list[int] = []
    for s, e in zip(starts, ends):
        out.extend((int(px[s]), int(e - s + 1)))
    return out


# ---------------------------------------------------------------------------
# scene descriptor I/O


def _require(doc: dict, fieldname: str, kind, where: str):
    if fieldname not in doc:
        raise SceneFormatError(f"{where}: missing field {fieldname!r}")
    value = doc[fieldname]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SceneFormatError(f"{where}: field {fieldname!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SceneFormatError(
            f"{where}: field {fieldname!r} must be {kind.__name__}"
        )
    return value


def load_scene(path: str | Path) -> Scene:
    """Load a scene descriptor (JSON + walkable PNG) from disk.

    The walkable PNG is 8-bit grayscale; values >= 128 count as walkable.
    Object order is preserved from the file.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{path}: descriptor must be a JSON object")

    name = _require(doc, "name", str, str(path))
    geo_doc = _require(doc, "geometry", dict, str(path))
    geometry = GridGeometry(
        width_px=_require(geo_doc, "width_px", int, "geometry"),
        height_px=_require(geo_doc, "height_px", int, "geometry"),
        extent_m=_require(geo_doc, "extent_m", float, "geometry"),
    )

    png_rel = _require(doc, "walkable_png", str, str(path))
    png_path = path.parent / png_rel
    if not png_path.exists():
        raise SceneFormatError(f"{path}: walkable_png {png_rel!r} not found")
    img = np.asarray(Image.open(png_path).convert("L"))
    if img.shape != (geometry.height_px, geometry.width_px):
        raise SceneFormatError(
            f"{path}: walkable_png shape {img.shape} does not match geometry"
        )
    scene_map = SceneMap(geometry=geometry, walkable=img >= 128)

    objects_doc = _require(doc, "objects", list, str(path))
    n_cells = geometry.width_px * geometry.height_px
    objects = []
    for i, obj_doc in enumerate(objects_doc):
        where = f"objects[{i}]"
        if not isinstance(obj_doc, dict):
            raise SceneFormatError(f"{where}: must be a JSON object")
        label = _require(obj_doc, "label", str, where)
        color = _require(obj_doc, "color_rgb", list, where)
        if len(color) != 3 or not all(isinstance(v, int) for v in color):
            raise SceneFormatError(f"{where}: color_rgb must be three integers")
        rle = _require(obj_doc, "mask_rle", list, where)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in rle):
            raise SceneFormatError(f"{where}: mask_rle must be integers")
        objects.append(
            ObjectRegion(
                label=label,
                pixels=decode_rle(rle, n_cells),
                color_rgb=tuple(color),
                geometry=geometry,
            )
        )
    return Scene(name=name, map=scene_map, objects=tuple(objects))


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene descriptor JSON next to its walkable PNG."""
    path = Path(path)
    png_name = path.stem + "_walkable.png"
    img = Image.fromarray((scene.map.walkable * 255).astype(np.uint8), mode="L")
    img.save(path.parent / png_name)
    doc = {
        "name": scene.name,
        "geometry": {
            "width_px": scene.geometry.width_px,
            "height_px": scene.geometry.height_px,
            "extent_m": scene.geometry.extent_m,
        },
        "walkable_png": png_name,
        "objects": [
            {
                "label": o.label,
                "color_rgb": list(o.color_rgb),
                "mask_rle": encode_rle(o.pixels),
            }
            for o in scene.objects
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# geodesics

def distance_field(scene_map: SceneMap, source: tuple[int, int]) -> np.ndarray:
    """Geodesic distance in meters from ``source`` to every cell.

    Unreachable and non-walkable cells get +inf.  Distances are exact sums
    of step costs: internally each cell tracks its (axial, diagonal) step
    counts and the distance is (n_axial + sqrt(2) * n_diagonal) * mpp, so
    two runs and independent implementations agree bit for bit.
    """
    walk = scene_map.walkable
    H, W = walk.shape
    r0, c0 = source
    if not scene_map.in_bounds(source):
        raise ContractError(f"source {source} out of bounds")
    key = np.full((H, W), np.inf)
    if not walk[r0, c0]:
        return key
    key[r0, c0] = 0.0
    heap: list[tuple[float, int, int, int, int]] = [(0.0, 0, 0, r0, c0)]
    while heap:
        k, ax, dg, r, c = heapq.heappop(heap)
        if k > key[r, c]:
            continue
        for dr, dc, diag in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < H and 0 <= nc < W) or not walk[nr, nc]:
                continue
            nax, ndg = ax + (not diag), dg + diag
            nk = nax + SQRT2 * ndg
            if nk < key[nr, nc]:
                key[nr, nc] = nk
                heapq.heappush(heap, (nk, nax, ndg, nr, nc))
    return key * scene_map.geometry.meters_per_pixel


def geodesic_distance(
    scene_map: SceneMap, a: tuple[int, int], b: tuple[int, int]
) -> float:
    """Shortest 8-connected walkable path length in meters, inf if unreachable."""
    if not scene_map.in_bounds(a) or not scene_map.in_bounds(b):
        raise ContractError(f"endpoints {a}, {b} must be in bounds")
    if not scene_map.walkable[a] or not scene_map.walkable[b]:
        return math.inf
    if a == b:
        return 0.0
    return float(distance_field(scene_map, a)[b])


def shortest_path(
    scene_map: SceneMap,
    start: tuple[int, int],
    targets: set[tuple[int, int]],
) -> list[tuple[int, int]] | None:
    """Shortest 8-connected path from start to the nearest target cell.

    Returns the pixel path including both endpoints, or None when no target
    is reachable.  Deterministic: ties resolve by heap entry order.
    """
    walk = scene_map.walkable
    H, W = walk.shape
    if not walk[start]:
        return None
    if start in targets:
        return [start]
    key = np.full((H, W), np.inf)
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    key[start] = 0.0
    heap: list[tuple[float, int, int, int, int]] = [(0.0, 0, 0, *start)]
    while heap:
        k, ax, dg, r, c = heapq.heappop(heap)
        if k > key[r, c]:
            continue
        if (r, c) in targets:
            path = [(r, c)]
            while path[-1] != start:
                path.append(parent[path[-1]])
            return path[::-1]
        for dr, dc, diag in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < H and 0 <= nc < W) or not walk[nr, nc]:
                continue
            nax, ndg = ax + (not diag), dg + diag
            nk = nax + SQRT2 * ndg
            if nk < key[nr, nc]:
                key[nr, nc] = nk
                parent[(nr, nc)] = (r, c)
                heapq.heappush(heap, (nk, nax, ndg, nr, nc))
    return None


def snap_to_walkable(scene_map: SceneMap, pixel: tuple[int, int]) -> tuple[int, int]:
    """Nearest walkable cell by Euclidean pixel distance (row-major tie-break)."""
    r, c = pixel
    if scene_map.in_bounds(pixel) and scene_map.walkable[pixel]:
        return pixel
    rows, cols = np.nonzero(scene_map.walkable)
    d2 = (rows - r) ** 2 + (cols - c) ** 2
    i = int(np.argmin(d2))
    return int(rows[i]), int(cols[i])


def object_overlap_mass(heatmap: Heatmap, region: ObjectRegion) -> float:
    """Sum of heatmap values over the region's mask pixels."""
    if heatmap.geometry != region.geometry:
        raise DimensionError(
            f"heatmap geometry {heatmap.geometry} does not match region "
            f"{region.label!r} geometry {region.geometry}"
        )
    return float(heatmap.values.ravel()[region.pixels].sum())
