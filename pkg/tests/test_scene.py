import json
import math

import numpy as np
import pytest
from PIL import Image

from goalfuse.errors import (
    ContractError,
    DimensionError,
    SceneFormatError,
    ValidationError,
)
from goalfuse.scene import (
    GridGeometry,
    Heatmap,
    ObjectRegion,
    Scene,
    SceneMap,
    decode_rle,
    distance_field,
    encode_rle,
    geodesic_distance,
    load_scene,
    object_overlap_mass,
    pixel_to_world,
    save_scene,
    shortest_path,
    snap_to_walkable,
    world_to_pixel,
)

from .conftest import make_map, rect_region
from .oracles import all_pairs_geodesics, relaxation_geodesics


class TestGridGeometry:
    def test_defaults(self):
        geom = GridGeometry()
        assert (geom.width_px, geom.height_px, geom.extent_m) == (256, 256, 10.0)
        assert geom.meters_per_pixel == 10.0 / 256

    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            GridGeometry(width_px=128, height_px=256)

    def test_rejects_non_positive_extent(self):
        with pytest.raises(ValidationError):
            GridGeometry(extent_m=0.0)


class TestWorldToPixel:
    def test_origin(self):
        assert world_to_pixel(GridGeometry(), (0.0, 0.0)) == (0, 0)

    def test_center(self):
        # hand oracle: floor(5.0 / 10.0 * 255) = 127 on each axis
        assert world_to_pixel(GridGeometry(), (5.0, 5.0)) == (127, 127)

    def test_far_corner(self):
        assert world_to_pixel(GridGeometry(), (10.0, 10.0)) == (255, 255)

    def test_clamps_out_of_extent(self):
        # x = 11 m clamps to the last column, y = -1 m to row 0
        assert world_to_pixel(GridGeometry(), (11.0, -1.0)) == (0, 255)

    def test_monotone_in_each_axis(self):
        geom = GridGeometry()
        xs = np.linspace(-1, 11, 300)
        cols = [world_to_pixel(geom, (x, 5.0))[1] for x in xs]
        rows = [world_to_pixel(geom, (5.0, y))[0] for y in xs]
        assert cols == sorted(cols)
        assert rows == sorted(rows)

    def test_round_trip_within_pixel_spacing(self):
        geom = GridGeometry()
        rng = np.random.default_rng(11)
        spacing = geom.extent_m / (geom.width_px - 1)
        for x, y in rng.uniform(-2, 12, size=(500, 2)):
            r, c = world_to_pixel(geom, (x, y))
            bx, by = pixel_to_world(geom, (r, c))
            cx = min(max(x, 0.0), geom.extent_m)
            cy = min(max(y, 0.0), geom.extent_m)
            assert abs(bx - cx) <= spacing + 1e-12
            assert abs(by - cy) <= spacing + 1e-12


class TestSceneTypes:
    def test_scene_map_needs_walkable_cell(self):
        with pytest.raises(ValidationError):
            make_map(np.zeros((8, 8), dtype=bool))

    def test_scene_map_rejects_non_binary(self):
        geom = GridGeometry(8, 8, 1.0)
        with pytest.raises(ValidationError):
            SceneMap(geometry=geom, walkable=np.full((8, 8), 2, dtype=np.uint8))

    def test_object_mask_must_be_in_bounds(self):
        geom = GridGeometry(8, 8, 1.0)
        with pytest.raises(ValidationError):
            ObjectRegion("lamp", np.array([100]), (1, 2, 3), geom)

    def test_object_mask_non_empty(self):
        geom = GridGeometry(8, 8, 1.0)
        with pytest.raises(ValidationError):
            ObjectRegion("lamp", np.array([], dtype=np.int64), (1, 2, 3), geom)

    def test_duplicate_labels_rejected(self):
        scene_map = make_map(np.ones((8, 8), dtype=bool), extent_m=1.0)
        geom = scene_map.geometry
        a = rect_region(geom, "sink", 0, 1, 0, 1)
        b = rect_region(geom, "sink", 2, 3, 2, 3)
        with pytest.raises(ValidationError, match="sink"):
            Scene(name="x", map=scene_map, objects=(a, b))

    def test_heatmap_rejects_negative(self):
        geom = GridGeometry(8, 8, 1.0)
        with pytest.raises(ValidationError):
            Heatmap(geometry=geom, values=np.full((8, 8), -1.0))


class TestRle:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            pixels = np.unique(rng.integers(0, 400, size=rng.integers(1, 60)))
            assert np.array_equal(decode_rle(encode_rle(pixels), 400), pixels)

    def test_odd_length_rejected(self):
        with pytest.raises(ValidationError):
            decode_rle([0, 5, 9], 100)

    def test_out_of_bounds_run_rejected(self):
        with pytest.raises(ValidationError):
            decode_rle([95, 10], 100)


class TestSceneIO:
    def _write_scene(self, tmp_path, doc, walkable=None):
        if walkable is None:
            walkable = np.ones((16, 16), dtype=np.uint8) * 255
        Image.fromarray(walkable, mode="L").save(tmp_path / "walk.png")
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(doc))
        return path

    def _valid_doc(self):
        return {
            "name": "scene_L",
            "geometry": {"width_px": 16, "height_px": 16, "extent_m": 10.0},
            "walkable_png": "walk.png",
            "objects": [
                {"label": "sink", "color_rgb": [0, 200, 10], "mask_rle": [0, 4]},
                {"label": "table", "color_rgb": [9, 9, 9], "mask_rle": [20, 2, 36, 2]},
                {"label": "couch", "color_rgb": [1, 2, 3], "mask_rle": [60, 6]},
                {"label": "lamp", "color_rgb": [5, 5, 5], "mask_rle": [255, 1]},
            ],
        }

    def test_load_valid_scene(self, tmp_path):
        path = self._write_scene(tmp_path, self._valid_doc())
        scene = load_scene(path)
        assert scene.name == "scene_L"
        assert scene.labels == ("sink", "table", "couch", "lamp")
        assert scene.map.walkable.all()
        assert scene.object("table").pixels.tolist() == [20, 21, 36, 37]

    def test_duplicate_label_error(self, tmp_path):
        doc = self._valid_doc()
        doc["objects"][1]["label"] = "sink"
        path = self._write_scene(tmp_path, doc)
        with pytest.raises(ValidationError, match="sink"):
            load_scene(path)

    def test_out_of_bounds_mask_error(self, tmp_path):
        doc = self._valid_doc()
        doc["objects"][0]["mask_rle"] = [250, 10]
        path = self._write_scene(tmp_path, doc)
        with pytest.raises(ValidationError):
            load_scene(path)

    def test_zero_walkable_error(self, tmp_path):
        walk = np.zeros((16, 16), dtype=np.uint8)
        path = self._write_scene(tmp_path, self._valid_doc(), walkable=walk)
        with pytest.raises(ValidationError):
            load_scene(path)

    def test_missing_field_names_it(self, tmp_path):
        doc = self._valid_doc()
        del doc["geometry"]
        path = self._write_scene(tmp_path, doc)
        with pytest.raises(SceneFormatError, match="geometry"):
            load_scene(path)

    def test_grayscale_threshold_at_128(self, tmp_path):
        walk = np.full((16, 16), 127, dtype=np.uint8)
        walk[0, :] = 128
        path = self._write_scene(tmp_path, self._valid_doc(), walkable=walk)
        scene = load_scene(path)
        assert scene.map.walkable.sum() == 16
        assert scene.map.walkable[0].all()

    def test_save_load_round_trip(self, tmp_path):
        path = self._write_scene(tmp_path, self._valid_doc())
        scene = load_scene(path)
        save_scene(scene, tmp_path / "copy.json")
        again = load_scene(tmp_path / "copy.json")
        assert again.labels == scene.labels
        assert np.array_equal(again.map.walkable, scene.map.walkable)
        for a, b in zip(scene.objects, again.objects):
            assert np.array_equal(a.pixels, b.pixels)


class TestGeodesics:
    def test_identity(self, empty_map_16):
        assert geodesic_distance(empty_map_16, (3, 3), (3, 3)) == 0.0

    def test_straight_line_scaled(self):
        scene_map = make_map(np.ones((16, 16), dtype=bool), extent_m=10.0)
        # 5 axial steps at 10/16 m each
        assert geodesic_distance(scene_map, (0, 0), (0, 5)) == 5 * (10.0 / 16)

    def test_diagonal_costs_sqrt2(self, empty_map_16):
        mpp = empty_map_16.geometry.meters_per_pixel
        got = geodesic_distance(empty_map_16, (0, 0), (4, 4))
        assert got == (0 + math.sqrt(2.0) * 4) * mpp

    def test_non_walkable_endpoint_unreachable(self):
        walk = np.ones((16, 16), dtype=bool)
        walk[8:12, 8:12] = False
        scene_map = make_map(walk)
        assert math.isinf(geodesic_distance(scene_map, (0, 0), (9, 9)))

    def test_walled_off_region_unreachable(self):
        walk = np.ones((16, 16), dtype=bool)
        walk[:, 8] = False
        scene_map = make_map(walk)
        assert math.isinf(geodesic_distance(scene_map, (3, 3), (3, 12)))

    def test_out_of_bounds_rejected(self, empty_map_16):
        with pytest.raises(ContractError):
            geodesic_distance(empty_map_16, (0, 0), (99, 0))

    def test_matches_relaxation_oracle_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(6):
            h = int(rng.integers(6, 15))
            walk = rng.random((h, h)) > 0.25
            walk[0, 0] = True
            scene_map = make_map(walk, extent_m=float(rng.uniform(2, 20)))
            mpp = scene_map.geometry.meters_per_pixel
            src = (0, 0)
            expected = relaxation_geodesics(walk, mpp, src)
            got = distance_field(scene_map, src)
            assert np.array_equal(got, expected)

    def test_symmetry_identity_triangle(self):
        rng = np.random.default_rng(7)
        walk = rng.random((20, 20)) > 0.2
        scene_map = make_map(walk)
        cells = [tuple(map(int, rc)) for rc in np.argwhere(walk)]
        sample = [cells[i] for i in rng.choice(len(cells), size=12, replace=False)]
        fields = {a: distance_field(scene_map, a) for a in sample}
        for a in sample:
            assert fields[a][a] == 0.0
            for b in sample:
                assert fields[a][b] == fields[b][a]
                for c in sample:
                    if np.isfinite(fields[a][b]) and np.isfinite(fields[b][c]):
                        assert fields[a][c] <= fields[a][b] + fields[b][c] + 1e-9

    def test_shortest_path_endpoints_and_length(self, empty_map_16):
        path = shortest_path(empty_map_16, (0, 0), {(5, 5)})
        assert path[0] == (0, 0) and path[-1] == (5, 5)
        assert len(path) == 6  # five diagonal steps

    def test_snap_to_walkable_deterministic(self):
        walk = np.zeros((8, 8), dtype=bool)
        walk[0, 3] = True
        walk[3, 0] = True
        scene_map = make_map(walk)
        # equidistant candidates resolve in row-major order
        assert snap_to_walkable(scene_map, (0, 0)) == (0, 3)


class TestObjectOverlapMass:
    def test_uniform_heatmap_counts_pixels(self):
        geom = GridGeometry(16, 16, 10.0)
        region = rect_region(geom, "mat", 2, 5, 2, 6)  # 12 pixels
        heat = Heatmap(geometry=geom, values=np.ones((16, 16)))
        assert object_overlap_mass(heat, region) == 12.0

    def test_zero_heatmap(self):
        geom = GridGeometry(16, 16, 10.0)
        region = rect_region(geom, "mat", 2, 5, 2, 6)
        heat = Heatmap(geometry=geom, values=np.zeros((16, 16)))
        assert object_overlap_mass(heat, region) == 0.0

    def test_single_spike(self):
        geom = GridGeometry(16, 16, 10.0)
        region = rect_region(geom, "mat", 2, 5, 2, 6)
        values = np.zeros((16, 16))
        values[3, 4] = 0.7
        heat = Heatmap(geometry=geom, values=values)
        assert object_overlap_mass(heat, region) == pytest.approx(0.7, abs=1e-15)

    def test_geometry_mismatch(self):
        region = rect_region(GridGeometry(16, 16, 10.0), "mat", 2, 5, 2, 6)
        heat = Heatmap(geometry=GridGeometry(8, 8, 10.0), values=np.ones((8, 8)))
        with pytest.raises(DimensionError):
            object_overlap_mass(heat, region)

    def test_additive_over_disjoint_regions(self):
        geom = GridGeometry(16, 16, 10.0)
        rng = np.random.default_rng(5)
        values = rng.random((16, 16))
        heat = Heatmap(geometry=geom, values=values)
        r1 = rect_region(geom, "a", 0, 4, 0, 4)
        r2 = rect_region(geom, "b", 8, 12, 8, 12)
        union = ObjectRegion(
            "ab", np.concatenate((r1.pixels, r2.pixels)), (0, 0, 0), geom
        )
        total = object_overlap_mass(heat, r1) + object_overlap_mass(heat, r2)
        assert object_overlap_mass(heat, union) == pytest.approx(total, abs=1e-12)
