import zlib

import numpy as np
import pytest

from selfenc.data import SQUARE
from selfenc.encoder import AffineTransform, SelfEncoderConfig, fit, transfer_weights, with_overrides
from selfenc.linalg import ShapeError
from selfenc.viz import (
    GridSpec,
    RegionMap,
    agreement,
    assign,
    read_ppm,
    region_map,
    render,
    to_rgb,
    transported_map,
)

SHEAR = AffineTransform(np.array([[1.5, 0.5], [0.5, 1.5]]), np.zeros(2))


@pytest.fixture(scope="module")
def square_model():
    cfg = with_overrides(SelfEncoderConfig(output_normalization="softmax"), initial_lr=0.05)
    return fit(SQUARE, cfg)


class TestGrid:
    def test_invalid(self):
        with pytest.raises(ValueError):
            GridSpec(1.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            GridSpec(0.0, 1.0, 0.0, 1.0, width=1)

    def test_centres(self):
        g = GridSpec(0.0, 4.0, 0.0, 2.0, width=4, height=2)
        c = g.pixel_centers()
        np.testing.assert_allclose(c[0], [0.5, 1.5])
        np.testing.assert_allclose(c[-1], [3.5, 0.5])

    def test_around_pads(self):
        g = GridSpec.around(SQUARE)
        assert (g.x_min, g.x_max, g.y_min, g.y_max) == pytest.approx((-1.4, 1.4, -1.4, 1.4))


class TestRegionMap:
    def test_single_point(self):
        m = region_map([[0.3, 0.2]], "euclidean", GridSpec(-1, 1, -1, 1, 20, 20))
        assert np.all(m.regions == 0)

    def test_square_quadrants(self):
        m = region_map(SQUARE, "euclidean", GridSpec.around(SQUARE, width=100, height=100))
        r = m.regions
        # SQUARE order: (1,1), (1,-1), (-1,1), (-1,-1); row 0 is the top
        assert np.all(r[:50, 50:] == 0)
        assert np.all(r[50:, 50:] == 1)
        assert np.all(r[:50, :50] == 2)
        assert np.all(r[50:, :50] == 3)

    def test_bisector_oracle(self, nprng):
        for _ in range(5):
            p = nprng.normal(size=(2, 2))
            grid = GridSpec(-3, 3, -3, 3, 60, 50)
            m = region_map(p, "euclidean", grid)
            c = grid.pixel_centers()
            d0 = ((c - p[0]) ** 2).sum(axis=1)
            d1 = ((c - p[1]) ** 2).sum(axis=1)
            np.testing.assert_array_equal(m.regions.ravel(), np.where(d1 < d0, 1, 0))

    def test_brute_force_oracle(self, nprng):
        p = nprng.normal(size=(6, 2))
        grid = GridSpec(-2, 2, -2, 2, 30, 30)
        m = region_map(p, "euclidean", grid)
        for (r, col), c in zip(np.ndindex(30, 30), grid.pixel_centers()):
            d = [sum((a - b) ** 2 for a, b in zip(c, q)) for q in p]
            assert m.regions[r, col] == d.index(min(d))

    def test_non_planar(self):
        with pytest.raises(ShapeError):
            region_map(np.zeros((3, 3)), "euclidean", GridSpec(0, 1, 0, 1))

    def test_model_must_match_points(self, square_model):
        with pytest.raises(ValueError):
            assign(SQUARE[:3], square_model, SQUARE)

    def test_entries_are_anchor_indices(self, square_model):
        m = region_map(SQUARE, square_model, GridSpec.around(SQUARE, width=40, height=40))
        assert set(np.unique(m.regions)) <= set(range(4))


class TestTransport:
    def test_shear_exact(self, square_model):
        m = region_map(SQUARE, square_model, GridSpec.around(SQUARE, width=120, height=120))
        moved = transported_map(m, transfer_weights(square_model, SHEAR), SHEAR)
        np.testing.assert_array_equal(moved.regions, m.regions)

    def test_random_transform_exact(self, nprng):
        p = nprng.normal(size=(5, 2))
        model = fit(p, with_overrides(SelfEncoderConfig(), max_epochs=200))
        m = region_map(p, model, GridSpec.around(p, width=80, height=80))
        t = AffineTransform(nprng.normal(size=(2, 2)) + 2 * np.eye(2), nprng.normal(size=2))
        moved = transported_map(m, transfer_weights(model, t), t)
        np.testing.assert_array_equal(moved.regions, m.regions)

    def test_euclidean_not_transported(self):
        # a shear does move Euclidean cells for a non-symmetric point set
        p = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        m = region_map(p, "euclidean", GridSpec.around(p, width=80, height=80))
        moved = transported_map(m, "euclidean", SHEAR)
        assert np.any(moved.regions != m.regions)


class TestAgreement:
    def test_identical(self):
        m = region_map(SQUARE, "euclidean", GridSpec.around(SQUARE, width=50, height=50))
        assert agreement(m, m) == 1.0
        assert agreement(m, m, slack=2) == 1.0

    def test_slack_ignores_boundary_shift(self):
        g = GridSpec(-1, 1, -1, 1, 40, 40)
        a = region_map([[-1.0, 0.0], [1.0, 0.0]], "euclidean", g)
        b = region_map([[-1.0, 0.0], [1.05, 0.0]], "euclidean", g)
        assert agreement(a, b) < 1.0
        assert agreement(a, b, slack=1) == 1.0

    def test_shape_mismatch(self):
        a = region_map(SQUARE, "euclidean", GridSpec(-1, 1, -1, 1, 10, 10))
        b = region_map(SQUARE, "euclidean", GridSpec(-1, 1, -1, 1, 12, 10))
        with pytest.raises(ShapeError):
            agreement(a, b)


class TestRender:
    def _two_region_map(self):
        g = GridSpec(0, 1, 0, 1, 2, 2)
        anchors = np.array([[-5.0, -5.0], [-6.0, -6.0]])  # off-grid so no dots are drawn
        return RegionMap(np.array([[0, 1], [1, 0]]), g, anchors)

    def test_ppm_two_colours(self, tmp_path):
        path = render(self._two_region_map(), tmp_path / "m.ppm")
        raw = path.read_bytes()
        assert raw.startswith(b"P6\n2 2\n255\n")
        img = read_ppm(path)
        assert img.shape == (2, 2, 3)
        assert len({tuple(px) for px in img.reshape(-1, 3)}) == 2

    def test_deterministic(self, tmp_path):
        m = region_map(SQUARE, "euclidean", GridSpec.around(SQUARE, width=64, height=64))
        for ext in ("ppm", "svg"):
            a = render(m, tmp_path / f"a.{ext}").read_bytes()
            b = render(m, tmp_path / f"b.{ext}").read_bytes()
            assert a == b

    def test_anchor_dots(self):
        m = region_map(SQUARE, "euclidean", GridSpec.around(SQUARE, width=64, height=64))
        img = to_rgb(m)
        r, c = m.grid.pixel_of(SQUARE[0])
        assert tuple(img[r, c]) == (0, 0, 0)

    def test_svg_embeds_same_pixels(self, tmp_path):
        import base64
        import re

        m = self._two_region_map()
        text = render(m, tmp_path / "m.svg").read_text()
        assert text.startswith("<?xml") and "<svg" in text
        png = base64.b64decode(re.search(r"base64,([^\"]+)", text).group(1))
        assert png.startswith(b"\x89PNG")
        # IDAT payload holds filter byte 0 then the RGB row, per row
        start = png.index(b"IDAT") + 4
        length = int.from_bytes(png[start - 8 : start - 4], "big")
        raw = zlib.decompress(png[start : start + length])
        rows = [raw[i * 7 + 1 : i * 7 + 7] for i in range(2)]
        assert b"".join(rows) == to_rgb(m).tobytes()

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            render(self._two_region_map(), tmp_path / "m.png")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError, match="cannot write"):
            render(self._two_region_map(), tmp_path / "missing-dir" / "m.ppm")
