import numpy as np
import pytest

from goalfuse.scene import (
    GridGeometry,
    ObjectRegion,
    Scene,
    SceneMap,
)


def make_map(walkable: np.ndarray, extent_m: float = 10.0) -> SceneMap:
    h, w = walkable.shape
    return SceneMap(
        geometry=GridGeometry(width_px=w, height_px=h, extent_m=extent_m),
        walkable=walkable.astype(bool),
    )


def rect_region(geom, label, r0, r1, c0, c1, color=(200, 60, 60)) -> ObjectRegion:
    rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
    return ObjectRegion(
        label=label,
        pixels=(rr * geom.width_px + cc).ravel(),
        color_rgb=color,
        geometry=geom,
    )


@pytest.fixture
def empty_map_16() -> SceneMap:
    return make_map(np.ones((16, 16), dtype=bool))


@pytest.fixture
def corridor_scene() -> Scene:
    """Straight 10 m corridor along +x with four objects on its north edge.

    Object masks lie on walkable corridor cells at increasing x, so a
    rightward walk discriminates them progressively.
    """
    walk = np.zeros((256, 256), dtype=bool)
    walk[118:138, 2:254] = True
    scene_map = make_map(walk)
    geom = scene_map.geometry
    objects = []
    for label, c0 in [("basin", 60), ("crate", 120), ("locker", 180), ("stand", 238)]:
        objects.append(rect_region(geom, label, 119, 124, c0, c0 + 12))
    return Scene(name="corridor", map=scene_map, objects=tuple(objects))


@pytest.fixture(scope="session")
def bundled_dataset(tmp_path_factory):
    """The seed-7 synthetic dataset used by the trend acceptance criteria."""
    from goalfuse.datagen import generate_dataset
    from goalfuse.evaluation import load_manifest

    root = tmp_path_factory.mktemp("bundled")
    manifest = generate_dataset(root, seed=7)
    return load_manifest(manifest)
