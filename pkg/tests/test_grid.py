import numpy as np
import pytest
from mpmath import mp

from rainstore.grid import (
    Field,
    GridError,
    downscale_maxpool,
    latitude_weights,
    make_grid,
    regrid_bilinear,
)

from oracles import bilinear_regrid_reference, maxpool_reference


class TestMakeGrid:
    def test_benchmark_resolution(self):
        g = make_grid(5.625)
        assert (g.n_lat, g.n_lon) == (32, 64)
        assert g.lat_centers[0] == pytest.approx(90 - 5.625 / 2)
        assert g.lat_centers[-1] == pytest.approx(-90 + 5.625 / 2)
        assert g.lon_centers[0] == pytest.approx(5.625 / 2)

    def test_coarse_two_rows(self):
        g = make_grid(90.0)
        assert list(g.lat_centers) == [45.0, -45.0]

    def test_native_fine_resolution(self):
        g = make_grid(0.25)
        assert (g.n_lat, g.n_lon) == (720, 1440)

    def test_non_divisor_names_dimension(self):
        with pytest.raises(GridError, match="latitude"):
            make_grid(7.0)
        with pytest.raises(GridError, match="latitude"):
            make_grid(360.0 / 7)  # divides the longitude span only

    def test_centers_monotone_no_poles(self):
        g = make_grid(11.25)
        assert (np.diff(g.lat_centers) < 0).all()
        assert (np.diff(g.lon_centers) > 0).all()
        assert (np.abs(g.lat_centers) < 90).all()
        assert g.lon_centers[-1] < 360


class TestLatitudeWeights:
    def test_single_row(self):
        g = make_grid(90.0)
        # symmetric pair of rows: equal cosines normalize to 1
        assert latitude_weights(g) == pytest.approx([1.0, 1.0], abs=1e-15)

    def test_three_row_cosine_oracle(self):
        # 60-degree grid rows sit at +60, 0, -60; oracle is high-precision
        # cos(lat) / mean(cos)
        mp.dps = 50
        g = make_grid(60.0)
        assert list(g.lat_centers) == [60.0, 0.0, -60.0]
        cosines = [mp.cos(mp.radians(v)) for v in (60.0, 0.0, -60.0)]
        mean = sum(cosines) / 3
        expected = [float(c / mean) for c in cosines]
        assert latitude_weights(g) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("res", [5.625, 11.25, 90.0, 2.8125])
    def test_mean_is_one(self, res):
        w = latitude_weights(make_grid(res))
        assert abs(w.mean() - 1.0) < 1e-12
        assert (w > 0).all()

    def test_deterministic(self):
        a = latitude_weights(make_grid(5.625))
        b = latitude_weights(make_grid(5.625))
        assert a.tobytes() == b.tobytes()


class TestRegridBilinear:
    def test_constant_field(self):
        src = make_grid(5.625)
        dst = make_grid(22.5)
        f = Field(src, np.full((src.n_lat, src.n_lon), 2.5))
        out = regrid_bilinear(f, dst)
        assert np.allclose(out.values, 2.5, atol=1e-12)

    def test_midpoint_of_lon_linear_row(self):
        src = make_grid(90.0)  # 2x4, lon centers 45/135/225/315
        values = np.tile(np.array([1.0, 3.0, 5.0, 7.0]), (2, 1))
        dst = make_grid(36.0)  # lon centers 18, 54, 90, ...; 90 lies midway
        out = regrid_bilinear(Field(src, values), dst)
        j = list(dst.lon_centers).index(90.0)
        assert out.values[:, j] == pytest.approx((1.0 + 3.0) / 2)

    def test_matches_reference_downsampling(self, rng):
        src = make_grid(2.8125)
        dst = make_grid(11.25)
        values = rng.normal(size=(src.n_lat, src.n_lon))
        out = regrid_bilinear(Field(src, values), dst)
        ref = bilinear_regrid_reference(src.lat_centers, src.lon_centers,
                                        values, dst.lat_centers, dst.lon_centers)
        assert np.allclose(out.values, ref, rtol=1e-6, atol=1e-9)

    def test_matches_reference_upsampling(self, rng):
        src = make_grid(22.5)
        dst = make_grid(5.625)
        values = rng.normal(size=(src.n_lat, src.n_lon)) * 40
        out = regrid_bilinear(Field(src, values), dst)
        ref = bilinear_regrid_reference(src.lat_centers, src.lon_centers,
                                        values, dst.lat_centers, dst.lon_centers)
        assert np.allclose(out.values, ref, rtol=1e-6, atol=1e-9)

    def test_no_overshoot(self, rng):
        src = make_grid(11.25)
        dst = make_grid(3.75)
        values = rng.uniform(-5, 5, size=(src.n_lat, src.n_lon))
        out = regrid_bilinear(Field(src, values), dst)
        assert out.values.min() >= values.min() - 1e-12
        assert out.values.max() <= values.max() + 1e-12

    def test_nan_propagates(self):
        src = make_grid(45.0)
        values = np.ones((src.n_lat, src.n_lon))
        values[1, 2] = np.nan
        out = regrid_bilinear(Field(src, values), make_grid(22.5))
        assert np.isnan(out.values).any()
        # cells far from the NaN source stay finite
        assert np.isfinite(out.values).any()

    def test_shape_mismatch_rejected(self):
        src = make_grid(45.0)
        with pytest.raises(GridError):
            Field(src, np.ones((3, 3)))


class TestDownscaleMaxpool:
    def test_constant(self):
        g = make_grid(22.5)
        out = downscale_maxpool(Field(g, np.full((g.n_lat, g.n_lon), 4.0)), 2)
        assert (out.values == 4.0).all()
        assert out.grid.res_deg == 45.0

    def test_two_by_two_block(self):
        g = make_grid(90.0)  # 2x4
        values = np.array([[1.0, 5.0, 2.0, 0.0], [3.0, 2.0, 7.0, 1.0]])
        out = downscale_maxpool(Field(g, values), 2)
        assert out.values.tolist() == [[5.0, 7.0]]

    def test_matches_reference_and_keeps_global_max(self, rng):
        g = make_grid(11.25)
        values = rng.normal(size=(g.n_lat, g.n_lon))
        values[rng.random(values.shape) < 0.05] = np.nan
        out = downscale_maxpool(Field(g, values), 4)
        ref = maxpool_reference(values, 4)
        assert np.array_equal(out.values, ref, equal_nan=True)
        assert np.nanmax(out.values) == np.nanmax(values)

    def test_factor_one_identity(self, rng):
        g = make_grid(45.0)
        values = rng.normal(size=(g.n_lat, g.n_lon))
        out = downscale_maxpool(Field(g, values), 1)
        assert np.array_equal(out.values, values)

    def test_non_divisible_rejected(self):
        g = make_grid(60.0)  # 3 lat rows
        with pytest.raises(GridError):
            downscale_maxpool(Field(g, np.zeros((g.n_lat, g.n_lon))), 2)

    def test_all_nan_block_stays_nan(self):
        g = make_grid(90.0)
        values = np.full((2, 4), np.nan)
        values[0, 2] = 1.0
        out = downscale_maxpool(Field(g, values), 2)
        assert np.isnan(out.values[0, 0])
        assert out.values[0, 1] == 1.0
