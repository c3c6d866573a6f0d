import math

import numpy as np
import pytest

from twolayer.spectral import (
    GridError,
    ScalarField,
    SymbolError,
    VectorField,
    apply_symbol,
    differential,
    dot_dealiased,
    l2_norm,
    make_grid,
    product_dealiased,
    read_binary,
    read_csv,
    sobolev_norm,
    write_binary,
    write_csv,
)

from conftest import banded


class TestGrid:
    def test_wavenumbers_64(self):
        grid = make_grid(1, [2 * np.pi], [64])
        k = np.sort(np.round(grid.wavenumbers[0]).astype(int))
        assert list(k) == list(range(-32, 32))

    def test_tensor_grid(self):
        grid = make_grid(2, [2 * np.pi, 2 * np.pi], [32, 32])
        assert grid.shape == (32, 32)
        assert grid.mesh.shape == (2, 32, 32)

    def test_spacing_for_longer_box(self):
        grid = make_grid(1, [4 * np.pi], [64])
        assert np.diff(np.sort(grid.wavenumbers[0]))[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("points", [[7], [6], [33]])
    def test_rejects_bad_point_counts(self, points):
        with pytest.raises(GridError):
            make_grid(1, points=points)

    def test_rejects_dimension(self):
        with pytest.raises(GridError):
            make_grid(3)

    def test_symmetric_wavenumbers(self, grid2):
        for k in grid2.wavenumbers:
            inner = k[np.abs(k) < np.max(np.abs(k))]
            assert set(np.round(inner, 9)) == set(np.round(-inner, 9))

    def test_defaults(self):
        assert make_grid(1).shape == (128,)
        assert make_grid(2).shape == (48, 48)
        assert make_grid(1).lengths == (2 * np.pi,)


class TestFields:
    def test_round_trip(self, grid2, rng):
        f = rng.normal(size=grid2.shape)
        back = grid2.ifft(grid2.fft(f))
        assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))

    def test_parseval(self, grid1, rng):
        f = grid1.scalar(rng.normal(size=grid1.shape))
        assert sobolev_norm(f, 0) == pytest.approx(l2_norm(f), rel=1e-12)

    def test_mean_is_zero_mode(self, grid1):
        x = grid1.mesh[0]
        f = grid1.scalar(2.5 + np.cos(3 * x))
        assert f.mean == pytest.approx(2.5)
        assert f.hat[0].real / grid1.size == pytest.approx(2.5)

    def test_shape_checked(self, grid1):
        with pytest.raises(GridError):
            ScalarField(grid1, np.zeros(64))
        with pytest.raises(GridError):
            VectorField(grid1, np.zeros((2, 128)))

    def test_grid_mismatch(self, grid1):
        other = make_grid(1, points=[64])
        with pytest.raises(GridError):
            grid1.scalar(1.0) + other.scalar(1.0)

    def test_arithmetic(self, grid1):
        x = grid1.mesh[0]
        f = grid1.scalar(np.cos(x))
        g = (2 * f - f) / 2 + 1
        assert np.allclose(g.values, 0.5 * np.cos(x) + 1)


class TestSymbols:
    def test_identity(self, grid1, rng):
        f = banded(grid1, rng)
        assert np.allclose(apply_symbol(f, 1.0).values, f.values, atol=1e-14)

    def test_abs_k_on_cosine(self, grid1):
        x = grid1.mesh[0]
        out = apply_symbol(grid1.scalar(np.cos(x)), grid1.kabs)
        assert np.allclose(out.values, np.cos(x), atol=1e-13)

    def test_derivative_of_cosine(self, grid1):
        x = grid1.mesh[0]
        out = apply_symbol(grid1.scalar(np.cos(x)), lambda k: 1j * k[0], odd=True)
        assert np.allclose(out.values, -np.sin(x), atol=1e-13)

    def test_non_finite_rejected(self, grid1):
        with np.errstate(divide="ignore"), pytest.raises(SymbolError):
            apply_symbol(grid1.scalar(1.0), 1.0 / grid1.kabs)

    def test_linearity(self, grid2, rng):
        f, g = banded(grid2, rng), banded(grid2, rng)
        m = np.tanh(grid2.kabs)
        lhs = apply_symbol(f * 2.0 + g * (-3.0), m)
        rhs = apply_symbol(f, m) * 2.0 + apply_symbol(g, m) * (-3.0)
        assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-12 * np.max(np.abs(lhs.values))

    def test_nyquist_zeroed_by_odd_symbol(self):
        grid = make_grid(1, points=[16])
        f = grid.scalar(np.cos(8 * grid.mesh[0]))
        out = differential(f, "grad")
        assert np.max(np.abs(out.values)) < 1e-13


class TestDifferentials:
    def test_grad_of_constant(self, grid2):
        out = differential(grid2.scalar(3.0), "grad")
        assert np.max(np.abs(out.values)) < 1e-13

    def test_div_grad_is_laplacian(self, grid2, rng):
        f = banded(grid2, rng)
        a = differential(differential(f, "grad"), "div")
        b = differential(f, "laplacian")
        assert np.max(np.abs(a.hat - b.hat)) <= 1e-12 * np.max(np.abs(b.hat))

    def test_laplacian_of_cos2x(self, grid1):
        x = grid1.mesh[0]
        out = differential(grid1.scalar(np.cos(2 * x)), "laplacian")
        assert np.allclose(out.values, -4 * np.cos(2 * x), atol=1e-12)

    def test_rank_checked(self, grid1):
        with pytest.raises(TypeError):
            differential(grid1.vector(0.0), "grad")
        with pytest.raises(TypeError):
            differential(grid1.scalar(0.0), "div")

    def test_derivatives_have_zero_mean(self, grid2, rng):
        f = banded(grid2, rng) + 4.0
        assert np.max(np.abs(differential(f, "grad").mean)) < 1e-14
        assert abs(differential(f, "laplacian").mean) < 1e-13


class TestProducts:
    def test_unit_factor_truncates(self, grid1, rng):
        g = grid1.scalar(rng.normal(size=grid1.shape))
        out = product_dealiased(grid1.scalar(1.0), g)
        expected = np.where(grid1.dealias, g.hat, 0.0)
        assert np.allclose(out.hat, expected, atol=1e-10)

    def test_cos_squared(self):
        grid = make_grid(1, points=[64])
        x = grid.mesh[0]
        f = grid.scalar(np.cos(x))
        out = product_dealiased(f, f)
        assert np.allclose(out.values, 0.5 + 0.5 * np.cos(2 * x), atol=1e-14)

    def test_no_energy_above_band(self, grid2, rng):
        f = grid2.scalar(rng.normal(size=grid2.shape))
        g = grid2.scalar(rng.normal(size=grid2.shape))
        out = product_dealiased(f, g)
        assert np.max(np.abs(out.hat[~grid2.dealias])) < 1e-10

    def test_scalar_times_vector(self, grid2):
        x, y = grid2.mesh
        s = grid2.scalar(np.cos(x))
        v = grid2.vector(np.array([np.ones_like(x), np.sin(y)]))
        out = product_dealiased(s, v)
        assert isinstance(out, VectorField)
        assert np.allclose(out.values[0], np.cos(x), atol=1e-13)
        assert np.allclose(out.values[1], np.cos(x) * np.sin(y), atol=1e-13)

    def test_dot(self, grid2):
        x, y = grid2.mesh
        v = grid2.vector(np.array([np.cos(x), np.sin(y)]))
        out = dot_dealiased(v, v)
        assert np.allclose(out.values, np.cos(x) ** 2 + np.sin(y) ** 2, atol=1e-13)


class TestSobolev:
    def test_zero(self, grid1):
        assert sobolev_norm(grid1.scalar(0.0), 2) == 0.0

    def test_constant(self, grid2):
        assert sobolev_norm(grid2.scalar(-3.0), 0) == pytest.approx(3.0 * 2 * np.pi, rel=1e-14)

    def test_cosine_ratio(self, grid1):
        f = grid1.scalar(np.cos(grid1.mesh[0]))
        assert sobolev_norm(f, 1) / sobolev_norm(f, 0) == pytest.approx(math.sqrt(2), rel=1e-13)


class TestSerialization:
    def test_csv_round_trip(self, tmp_path, grid2, rng):
        f = banded(grid2, rng)
        write_csv(f, tmp_path / "f.csv")
        back = read_csv(tmp_path / "f.csv", grid2)
        assert np.array_equal(back.values, f.values)

    def test_binary_round_trip(self, tmp_path, grid2, rng):
        v = grid2.vector(np.array([banded(grid2, rng).values, banded(grid2, rng).values]))
        write_binary(v, tmp_path / "v.bin")
        back = read_binary(tmp_path / "v.bin")
        assert back.grid == grid2
        assert np.array_equal(back.values, v.values)

    def test_binary_header(self, tmp_path, grid1):
        write_binary(grid1.scalar(1.0), tmp_path / "f.bin")
        raw = (tmp_path / "f.bin").read_bytes()
        assert raw[:4] == b"TWLF"
        assert len(raw) == 16 + 4 + 8 + 8 * 128
