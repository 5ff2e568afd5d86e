import numpy as np
import pytest

from attwarp.aggregation import EPS_MASS
from attwarp.warp import (
    HORIZONTAL,
    VERTICAL,
    AxisCdf,
    AxisProfile,
    BoundingBox,
    PiecewiseLinearMap,
    WarpField,
    build_warp,
    cdf,
    compose_fields,
    field_from_attention,
    marginals,
    warp_box_forward,
    warp_box_inverse,
    warp_image,
)
from oracles import bisect_inverse_cdf, interval_mass_fraction

rng = np.random.default_rng(2024)


def field_from_profiles(mx, my):
    return build_warp(
        cdf(AxisProfile(np.asarray(mx, dtype=np.float64), HORIZONTAL)),
        cdf(AxisProfile(np.asarray(my, dtype=np.float64), VERTICAL)),
    )


class TestMarginals:
    def test_hand_summed(self):
        mx, my = marginals(np.array([[1.0, 3.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(mx.values, [3.0, 5.0])
        np.testing.assert_array_equal(my.values, [4.0, 4.0])

    def test_uniform(self):
        mx, my = marginals(np.full((4, 6), 2.0))
        np.testing.assert_allclose(mx.values, 8.0)
        np.testing.assert_allclose(my.values, 12.0)

    def test_one_hot(self):
        a = np.zeros((8, 8))
        a[2, 5] = 7.0
        mx, my = marginals(a)
        np.testing.assert_array_equal(mx.values, 7.0 * np.eye(8)[5])
        np.testing.assert_array_equal(my.values, 7.0 * np.eye(8)[2])

    def test_mass_is_conserved(self):
        a = rng.random((13, 17))
        mx, my = marginals(a)
        assert mx.values.sum() == pytest.approx(a.sum(), rel=1e-6)
        assert my.values.sum() == pytest.approx(a.sum(), rel=1e-6)


class TestCdf:
    def test_prefix_sums(self):
        c = cdf(AxisProfile(np.array([3.0, 5.0]), HORIZONTAL), mass_floor=0.0)
        np.testing.assert_allclose(c.cumulative, [0.375, 1.0])

    def test_uniform_is_linear(self):
        n = 10
        c = cdf(AxisProfile(np.ones(n), HORIZONTAL), mass_floor=0.0)
        np.testing.assert_allclose(c.cumulative, (np.arange(n) + 1) / n)

    def test_floor_closed_form(self):
        eps = EPS_MASS
        c = cdf(AxisProfile(np.array([0.0, 0.0, 1.0]), VERTICAL))
        expected = np.array([eps, 2 * eps, 1.0 + 3 * eps]) / (1.0 + 3 * eps)
        expected[-1] = 1.0
        np.testing.assert_allclose(c.cumulative, expected, rtol=1e-6)

    def test_ends_at_one(self):
        for _ in range(20):
            c = cdf(AxisProfile(rng.random(rng.integers(1, 40)), HORIZONTAL))
            assert c.cumulative[-1] == 1.0
            assert np.all(np.diff(c.cumulative) >= 0)


class TestPiecewiseLinearMap:
    def test_plateau_inverts_to_left_endpoint(self):
        m = PiecewiseLinearMap(np.array([0.0, 0.5, 0.5, 1.0]), np.array([0.0, 1.0, 2.0, 3.0]))
        assert m(0.5) == 1.0

    def test_clamps_outside_knots(self):
        m = PiecewiseLinearMap(np.array([0.0, 1.0]), np.array([2.0, 5.0]))
        assert m(-1.0) == 2.0
        assert m(9.0) == 5.0

    def test_compose_matches_pointwise(self):
        inner = PiecewiseLinearMap(np.array([0.0, 1.0, 4.0]), np.array([0.0, 3.0, 4.0]))
        outer = PiecewiseLinearMap(np.array([0.0, 2.0, 4.0]), np.array([0.0, 1.0, 4.0]))
        comp = outer.compose(inner)
        ts = np.linspace(0, 4, 200)
        np.testing.assert_allclose(comp(ts), outer(inner(ts)), atol=1e-12)


class TestBuildWarp:
    def test_uniform_gives_identity(self):
        f = field_from_profiles(np.ones(6), np.ones(4))
        np.testing.assert_allclose(f.fx_grid, np.arange(6), atol=1e-9)
        np.testing.assert_allclose(f.fy_grid, np.arange(4), atol=1e-9)

    def test_front_loaded_cdf_concentrates_output(self):
        cx = AxisCdf(np.array([0.5, 0.75, 0.875, 1.0]), HORIZONTAL)
        cy = AxisCdf(np.array([0.25, 0.5, 0.75, 1.0]), VERTICAL)
        f = build_warp(cx, cy)
        assert f.fx(0.0) == 0.0
        assert f.fx(2.0) == pytest.approx(1.0)

    def test_inverse_agrees_with_bisection(self):
        for _ in range(50):
            n = int(rng.integers(2, 64))
            profile = rng.uniform(0.05, 1.0, n)
            f = field_from_profiles(profile, np.ones(3))
            cum = np.cumsum(profile + EPS_MASS)
            cum /= cum[-1]
            for u in rng.uniform(0, n, 8):
                got = f.fx(u)
                ref = bisect_inverse_cdf(cum, u / n)
                assert abs(got - ref) < 1e-6

    def test_forward_inverse_round_trip(self):
        profile_x = rng.uniform(0.1, 2.0, 20)
        profile_y = rng.uniform(0.1, 2.0, 15)
        f = field_from_profiles(profile_x, profile_y)
        xs = rng.uniform(0, 20, 1000)
        ys = rng.uniform(0, 15, 1000)
        assert np.abs(f.fx(f.inverse_x(xs)) - xs).max() < 0.5
        assert np.abs(f.fy(f.inverse_y(ys)) - ys).max() < 0.5

    def test_axis_maps_are_monotone(self):
        f = field_from_profiles(rng.uniform(0, 1, 30), rng.uniform(0, 1, 30))
        u = np.linspace(0, 30, 400)
        assert np.all(np.diff(f.fx(u)) >= 0)
        assert np.all(np.diff(f.fy(u)) >= 0)

    def test_grid_samples_stay_in_pixel_range(self):
        f = field_from_profiles(rng.uniform(0, 1, 9), rng.uniform(0, 1, 7))
        assert f.fx_grid[0] >= 0 and f.fx_grid[-1] <= 8
        assert f.fy_grid[0] >= 0 and f.fy_grid[-1] <= 6


class TestWarpImage:
    def test_identity_field_returns_input(self):
        img = rng.random((10, 12, 3))
        out = warp_image(img, WarpField.identity(12, 10))
        np.testing.assert_array_equal(out.pixels, img)

    def test_uniform_attention_is_identity(self):
        img = rng.random((16, 16, 3))
        out = warp_image(img, field_from_attention(np.ones((16, 16))))
        assert np.abs(out.pixels - img).max() <= 1.0 / 255.0

    def test_center_hotspot_expands(self):
        n = 32
        a = np.zeros((n, n))
        a[n // 2, n // 2] = 1.0
        f = field_from_attention(a)
        # extent of the hot pixel's input cell in output space, per axis
        ext_x = f.inverse_x(n // 2 + 1.0) - f.inverse_x(float(n // 2))
        ext_y = f.inverse_y(n // 2 + 1.0) - f.inverse_y(float(n // 2))
        assert ext_x >= 0.25 * n
        assert ext_y >= 0.25 * n

    def test_rectilinearity_row_and_column_structure(self):
        # warping a rank-1 image keeps it rank-1: rows stay rows, columns stay columns
        col = rng.random((20, 1))
        row = rng.random((1, 24))
        img = col @ row
        f = field_from_attention(rng.random((20, 24)) + 0.1)
        out = warp_image(img, f).pixels
        wc = np.interp(np.clip(f.fy_grid, 0, 19), np.arange(20), col[:, 0])
        wr = np.interp(np.clip(f.fx_grid, 0, 23), np.arange(24), row[0])
        np.testing.assert_allclose(out, np.outer(wc, wr), atol=1e-10)

    def test_preserves_dims_and_channels(self):
        img = rng.random((9, 14, 3))
        out = warp_image(img, field_from_attention(rng.random((9, 14))))
        assert out.pixels.shape == (9, 14, 3)

    def test_monotone_order_preservation(self):
        f = field_from_attention(rng.random((12, 12)) + 0.05)
        cols = np.sort(rng.uniform(0, 12, 10))
        warped = f.inverse_x(cols)
        assert np.all(np.diff(warped) >= 0)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError, match="field is"):
            warp_image(rng.random((4, 4, 3)), WarpField.identity(5, 5))


class TestBoxes:
    def test_from_pixels_adds_one_to_max_corner(self):
        b = BoundingBox.from_pixels(4, 4, 8, 8)
        assert (b.x_min, b.y_min, b.x_max, b.y_max) == (4.0, 4.0, 9.0, 9.0)

    def test_identity_keeps_box(self):
        f = WarpField.identity(32, 32)
        b = BoundingBox(3, 4, 10, 12)
        assert warp_box_forward(b, f) == b
        assert warp_box_inverse(b, f) == b

    def test_full_image_box_is_fixed_point(self):
        for _ in range(10):
            f = field_from_attention(rng.random((16, 24)))
            full = BoundingBox(0, 0, 24, 16)
            out = warp_box_forward(full, f)
            assert out == full

    def test_mass_to_extent(self):
        profile = rng.uniform(0.05, 1.0, 40)
        f = field_from_profiles(profile, np.ones(10))
        a, b = 7.25, 23.5
        frac = interval_mass_fraction(profile + EPS_MASS, a, b)
        warped = warp_box_forward(BoundingBox(a, 0, b, 10), f)
        assert warped.width == pytest.approx(40 * frac, abs=1.0)

    def test_round_trip_random_boxes(self):
        f = field_from_attention(rng.uniform(0.05, 1.0, (30, 40)))
        for _ in range(100):
            x0, x1 = np.sort(rng.uniform(0, 40, 2))
            y0, y1 = np.sort(rng.uniform(0, 30, 2))
            b = BoundingBox(x0, y0, x1, y1)
            back = warp_box_inverse(warp_box_forward(b, f), f)
            err = max(
                abs(back.x_min - b.x_min),
                abs(back.x_max - b.x_max),
                abs(back.y_min - b.y_min),
                abs(back.y_max - b.y_max),
            )
            assert err <= 1.0

    def test_forward_of_known_box_recovers(self):
        f = field_from_attention(rng.uniform(0.1, 1.0, (32, 32)))
        b = BoundingBox.from_pixels(10, 10, 20, 20)
        back = warp_box_inverse(warp_box_forward(b, f), f)
        for got, want in [(back.x_min, 10), (back.y_min, 10), (back.x_max, 21), (back.y_max, 21)]:
            assert abs(got - want) <= 1.0

    def test_zero_area_box_allowed(self):
        f = field_from_attention(rng.random((8, 8)))
        b = BoundingBox(3.0, 2.0, 3.0, 5.0)
        out = warp_box_forward(b, f)
        assert out.width == 0.0

    def test_inverted_box_rejected(self):
        with pytest.raises(ValueError, match="inverted"):
            BoundingBox(5, 0, 1, 3)


class TestComposition:
    def test_two_step_composition_matches_sequential_maps(self):
        f1 = field_from_attention(rng.uniform(0.05, 1.0, (20, 20)))
        f2 = field_from_attention(rng.uniform(0.05, 1.0, (20, 20)))
        comp = compose_fields(f1, f2)
        probes = rng.uniform(0, 20, 1000)
        np.testing.assert_allclose(comp.fx(probes), f1.fx(f2.fx(probes)), atol=0.5)
        np.testing.assert_allclose(comp.fy(probes), f1.fy(f2.fy(probes)), atol=0.5)

    def test_composition_is_exact_not_just_close(self):
        f1 = field_from_attention(rng.uniform(0.05, 1.0, (12, 12)))
        f2 = field_from_attention(rng.uniform(0.05, 1.0, (12, 12)))
        comp = compose_fields(f1, f2)
        probes = rng.uniform(0, 12, 500)
        np.testing.assert_allclose(comp.fx(probes), f1.fx(f2.fx(probes)), atol=1e-9)

    def test_composed_maps_stay_monotone(self):
        f = WarpField.identity(10, 10)
        for _ in range(4):
            f = compose_fields(f, field_from_attention(rng.random((10, 10))))
        u = np.linspace(0, 10, 300)
        assert np.all(np.diff(f.fx(u)) >= 0)


class TestSerialization:
    def test_json_round_trip_preserves_maps(self):
        f = field_from_attention(rng.uniform(0.05, 1.0, (9, 13)))
        back = WarpField.from_json_dict(f.to_json_dict())
        u = rng.uniform(0, 13, 200)
        np.testing.assert_allclose(back.fx(u), f.fx(u), atol=1e-12)
        np.testing.assert_array_equal(back.fx_grid, f.fx_grid)

    def test_json_has_contract_keys(self):
        f = field_from_attention(rng.random((4, 6)))
        d = f.to_json_dict()
        assert d["width"] == 6 and d["height"] == 4
        assert len(d["fx"]) == 6 and len(d["fy"]) == 4

    def test_fx_only_payload_still_loads(self):
        f = field_from_attention(rng.uniform(0.1, 1.0, (6, 6)))
        d = {k: f.to_json_dict()[k] for k in ("width", "height", "fx", "fy")}
        back = WarpField.from_json_dict(d)
        np.testing.assert_allclose(back.fx_grid, f.fx_grid, atol=1e-12)
