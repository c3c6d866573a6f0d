import math

import numpy as np
import pytest

from twolayer.dispersion import linear_omega2
from twolayer.models import (
    MODEL_KINDS,
    ModelId,
    ModelState,
    coeffs_bb,
    coeffs_bfd,
    residual,
    rhs,
    rhs_bb,
    rhs_bfd,
    rhs_ilw_bo,
    rhs_rbo,
    rhs_swsw,
    simulate,
    step_rk4,
    swsw_flux,
    v_to_vbeta,
    vbeta_to_v,
)
from twolayer.operators import ParameterError, RegimeParams
from twolayer.spectral import dealiased_array_product, gradient_array, l2_norm, make_grid

from conftest import banded

MODELS = {
    "FDFD": (ModelId("FDFD"), RegimeParams(0.8, 1.0, 0.1, 1.0)),
    "BFD": (ModelId("BFD", alpha1=1.0, alpha2=-1.0, beta=1 / 3), RegimeParams.from_lower(0.8, 0.1, 1.0, 0.1)),
    "BB": (ModelId("BB", alpha1=1.0, alpha2=0.0, beta=0.2), RegimeParams(0.8, 1.0, 0.1, 0.1)),
    "SWSW": (ModelId("SWSW"), RegimeParams(0.8, 1.0, 0.5, 0.01)),
    "SWFD": (ModelId("SWFD"), RegimeParams.from_lower(0.8, 0.001, 1.0, 0.5)),
    "ILW": (ModelId("ILW", alpha=1.0), RegimeParams.from_lower(0.8, 0.01, 1.0, 0.1)),
    "BOSYS": (ModelId("BOSYS", alpha=1.0), RegimeParams.from_lower(0.8, 0.01, 400.0, 0.1)),
    "RBO": (ModelId("RBO", alpha=1.0), RegimeParams(0.8, 0.1, 0.1, 0.01)),
}


def random_state(grid, rng, scalar_only=False, amplitude=0.3):
    zeta = banded(grid, rng, 5)
    zeta = zeta * (amplitude / zeta.sup())
    if scalar_only:
        return ModelState(zeta)
    v = np.array([banded(grid, rng, 5).values for _ in range(grid.dim)])
    return ModelState(zeta, grid.vector(0.3 * v / np.max(np.abs(v))))


class TestCoefficients:
    def test_bfd_reference_generators(self):
        assert coeffs_bfd(0, 0, 0).as_tuple() == pytest.approx((1 / 3, 0, 0, 0), abs=1e-16)
        assert coeffs_bfd(1, 0, 0).as_tuple() == pytest.approx((0, 1 / 3, 0, 0), abs=1e-16)
        assert coeffs_bfd(0, 1, 1 / 3).as_tuple() == pytest.approx((0, 0, 1 / 3, 0), abs=1e-16)

    @pytest.mark.parametrize("gens", [(-0.1, 0, 0), (0, 1.5, 0.1), (0, 0, -0.2)])
    def test_generator_constraints(self, gens):
        with pytest.raises(ParameterError):
            coeffs_bfd(*gens)
        with pytest.raises(ParameterError):
            coeffs_bb(0.5, 1.0, *gens)

    def test_bb_needs_positive_depth_ratio(self):
        with pytest.raises(ParameterError):
            coeffs_bb(0.5, 0.0, 0, 0, 0)

    def test_bb_surface_reduction(self):
        assert coeffs_bb(0, 1, 0, 0, 0).as_tuple() == pytest.approx((1 / 3, 0, 0, 0), abs=1e-16)
        a1, a2, beta = 0.7, -0.4, 0.25
        surface = ((1 - a1 - 3 * beta) / 3, a1 / 3, beta * a2, beta * (1 - a2))
        assert coeffs_bb(0, 1, a1, a2, beta).as_tuple() == pytest.approx(surface, abs=1e-15)

    def test_bb_reference_generators(self):
        g, d = 0.8, 0.6
        a = coeffs_bb(g, d, 0, 0, 0).a
        assert a == pytest.approx((1 + g * d) / (3 * d * (g + d) ** 2), rel=1e-14)


class TestModelId:
    def test_parameters_required(self):
        with pytest.raises(ParameterError):
            ModelId("BB")
        with pytest.raises(ParameterError):
            ModelId("ILW")
        with pytest.raises(ParameterError):
            ModelId("SWSW", alpha=1.0)
        with pytest.raises(ParameterError):
            ModelId("KDV")

    def test_case_insensitive(self):
        assert ModelId("swfd").kind == "SWFD"


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_zero_state(kind, grid1):
    model, params = MODELS[kind]
    state = ModelState(grid1.scalar(0.0), None if model.scalar_only else grid1.vector(0.0))
    out = rhs(model, params, state)
    assert np.max(np.abs(out.zeta.values)) == 0.0
    if out.v is not None:
        assert np.max(np.abs(out.v.values)) == 0.0


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_mean_tendency_vanishes(kind, grid1, rng):
    model, params = MODELS[kind]
    state = random_state(grid1, rng, model.scalar_only)
    out = rhs(model, params, state)
    assert abs(out.zeta.mean) < 1e-14
    if out.v is not None:
        assert np.max(np.abs(out.v.mean)) < 1e-14


@pytest.mark.parametrize("kind", ["FDFD", "BFD", "BB", "SWSW", "SWFD", "ILW", "BOSYS"])
def test_mean_tendency_vanishes_2d(kind, grid2, rng):
    model, params = MODELS[kind]
    out = rhs(model, params, random_state(grid2, rng))
    assert abs(out.zeta.mean) < 1e-14
    assert np.max(np.abs(out.v.mean)) < 1e-14


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_linear_part_survives_dealiasing(kind):
    # mode 7 lies above the 2/3 band on 16 points but well inside it on 64
    def tendency(points):
        grid = make_grid(1, points=[points])
        x = grid.mesh[0]
        state = ModelState(grid.scalar(1e-9 * np.cos(7 * x)),
                           None if model.scalar_only else grid.vector(1e-9 * np.cos(7 * x + 0.3)))
        out = rhs(model, params, state)
        return out.zeta.hat[7], (None if out.v is None else out.v.hat[0][7])

    model, params = MODELS[kind]
    coarse, fine = tendency(16), tendency(64)
    scale = 16 / 64   # unnormalized transform
    assert coarse[0] == pytest.approx(fine[0] * scale, rel=1e-6)
    if coarse[1] is not None:
        assert coarse[1] == pytest.approx(fine[1] * scale, rel=1e-6)


@pytest.mark.parametrize("kind", ["FDFD", "BFD", "BB", "SWSW", "SWFD", "ILW"])
def test_residual_of_rhs_is_zero(kind, grid1, rng):
    model, params = MODELS[kind]
    state = random_state(grid1, rng)
    r = residual(model, params, state, rhs(model, params, state))
    assert l2_norm(r.zeta) < 1e-12 and l2_norm(r.v) < 1e-12


def test_vbeta_round_trip(grid1, rng):
    v = grid1.vector(banded(grid1, rng).values[None])
    back = vbeta_to_v(0.1, 0.3, v_to_vbeta(0.1, 0.3, v))
    assert np.allclose(back.values, v.values, atol=1e-13)


def test_bfd_depends_only_on_coefficients(grid1, rng):
    params = MODELS["BFD"][1]
    state = random_state(grid1, rng)
    a = rhs_bfd(params, state, 0.5, 0.0, 0.0)
    b = rhs_bfd(params, state, 0.5, -2.0, 0.0)
    assert np.array_equal(a.zeta.values, b.zeta.values)
    assert np.array_equal(a.v.values, b.v.values)


def test_bb_linear_when_gamma_is_delta_squared(grid1, rng):
    params = RegimeParams(0.49, 0.7, 0.3, 0.1)
    state = random_state(grid1, rng)
    one = rhs_bb(params, state, 1.0, 0.0, 0.2)
    two = rhs_bb(params, state.axpy(1.0, state), 1.0, 0.0, 0.2)
    assert np.allclose(two.zeta.values, 2 * one.zeta.values, atol=1e-13)
    assert np.allclose(two.v.values, 2 * one.v.values, atol=1e-13)


def test_bb_surface_boussinesq(grid1, rng):
    eps, mu = 0.2, 0.1
    params = RegimeParams(0.0, 1.0, eps, mu)
    state = random_state(grid1, rng)
    out = rhs_bb(params, state, 0.0, 0.0, 0.0)
    z, v = state.zeta.values, state.v.values[0]
    k = grid1.k[0]
    dx = lambda a: grid1.ifft(np.where(grid1.nyquist, 0, 1j * k * grid1.fft(a)))
    flux = v + eps * dealiased_array_product(grid1, z, v)
    zeta_t = -dx(flux) - (mu / 3) * dx(dx(dx(v)))
    v_t = -dx(z + 0.5 * eps * dealiased_array_product(grid1, v, v))
    assert np.allclose(out.zeta.values, zeta_t, atol=1e-12)
    assert np.allclose(out.v.values[0], v_t, atol=1e-12)


class TestSWSW:
    def test_closed_form_matches_series(self, grid1, rng):
        params = RegimeParams(0.5, 0.8, 0.8, 0.01)
        state = random_state(grid1, rng, amplitude=0.5)
        a = swsw_flux(params, state.zeta, state.v, "series").values
        b = swsw_flux(params, state.zeta, state.v, "closed").values
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))

    def test_closed_form_is_one_dimensional(self, grid2, rng):
        state = random_state(grid2, rng)
        with pytest.raises(ValueError):
            swsw_flux(MODELS["SWSW"][1], state.zeta, state.v, "closed")

    def test_surface_shallow_water(self, grid1, rng):
        eps = 0.3
        params = RegimeParams(0.0, 1.0, eps, 0.01)
        state = random_state(grid1, rng)
        out = rhs_swsw(params, state)
        z, v = state.zeta.values, state.v.values[0]
        dx = lambda a: gradient_array(grid1, a)[0]
        zeta_t = -dx(v + eps * dealiased_array_product(grid1, z, v))
        v_t = -dx(z + 0.5 * eps * dealiased_array_product(grid1, v, v))
        assert np.allclose(out.zeta.values, zeta_t, atol=1e-11)
        assert np.allclose(out.v.values[0], v_t, atol=1e-11)


class TestBenjaminOno:
    def test_deep_lower_layer(self, grid1, rng):
        params = RegimeParams.from_lower(0.8, 0.01, 400.0, 0.1)
        state = random_state(grid1, rng)
        a = rhs_ilw_bo(params, 1.0, state)
        b = rhs_ilw_bo(params, 1.0, state, infinite_depth=True)
        scale = l2_norm(b.zeta) + l2_norm(b.v)
        assert (l2_norm(a.zeta - b.zeta) + l2_norm(a.v - b.v)) <= 1e-8 * scale

    def test_classical_equation(self, grid1, rng):
        params = RegimeParams(0.6, 0.1, 0.2, 0.04)
        zeta = random_state(grid1, rng, scalar_only=True).zeta
        out = rhs_rbo(params, ModelState(zeta), alpha=0.0)
        c = math.sqrt(0.4 / 0.6)
        k = grid1.k[0]
        zh = np.where(grid1.nyquist, 0, grid1.fft(zeta.values))
        z2 = np.where(grid1.nyquist, 0, grid1.fft(dealiased_array_product(grid1, zeta.values, zeta.values)))
        hat = -(c * 1j * k * zh - 0.75 * 0.2 * c * 1j * k * z2
                - (0.2 / (2 * 0.6)) * c * 1j * k * np.abs(k) * zh)
        assert np.allclose(out.zeta.values, grid1.ifft(hat), atol=1e-13)

    def test_zero(self, grid1):
        out = rhs_rbo(MODELS["RBO"][1], ModelState(grid1.scalar(0.0)), 0.5)
        assert np.max(np.abs(out.zeta.values)) == 0.0

    def test_restrictions(self, grid1, grid2):
        with pytest.raises(ParameterError):
            rhs_rbo(RegimeParams(1.0, 1.0, 0.1, 0.01), ModelState(grid1.scalar(0.0)), 0.0)
        with pytest.raises(ParameterError):
            rhs_rbo(MODELS["RBO"][1], ModelState(grid2.scalar(0.0)), 0.0)
        with pytest.raises(ParameterError):
            rhs_ilw_bo(RegimeParams(0.0, 1.0, 0.1, 0.01), 1.0,
                       ModelState(grid1.scalar(0.0), grid1.vector(0.0)))


class TestTimeStepping:
    def test_zero_state(self, grid1):
        model, params = MODELS["BB"]
        out = step_rk4(model, params, ModelState(grid1.scalar(0.0), grid1.vector(0.0)), 0.1)
        assert np.max(np.abs(out.zeta.values)) == 0.0

    def test_fourth_order(self, rng):
        grid = make_grid(1, points=[64])
        model, params = MODELS["BB"]
        state = random_state(grid, rng)
        t_end = 0.5

        def run(n):
            s = state
            for _ in range(n):
                s = step_rk4(model, params, s, t_end / n)
            return s.zeta.values

        ref = run(320)
        steps = np.array([10, 20, 40, 80])
        errs = [np.max(np.abs(run(n) - ref)) for n in steps]
        order = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
        assert order >= 3.8

    def test_linear_exact_propagation(self, grid1, rng):
        model = ModelId("FDFD")
        params = RegimeParams(0.6, 1.0, 0.0, 0.5)
        zeta0 = banded(grid1, rng, 6)
        record = simulate(model, params, ModelState(zeta0, grid1.vector(0.0)), dt=0.01, t_end=2.0)
        omega = np.sqrt(linear_omega2(model, params, grid1.kabs).omega2)
        exact = grid1.ifft(zeta0.hat * np.cos(omega * 2.0))
        assert np.max(np.abs(record.snapshots[-1][1].zeta.values - exact)) < 1e-8


class TestSimulate:
    def test_record(self, tmp_path, grid1, rng):
        model, params = MODELS["SWSW"]
        rec = simulate(model, params, random_state(grid1, rng, amplitude=0.1), dt=0.01,
                       t_end=0.1, output_every=5)
        assert rec.ok and rec.config["steps"] == 10
        assert [round(t, 9) for t, _ in rec.snapshots] == [0.0, 0.05, 0.1]
        assert {"mean_zeta", "h1_min", "h2_min", "l2_v"} <= set(rec.diagnostics[0])
        rec.save(tmp_path / "run")
        assert (tmp_path / "run" / "snapshots" / "0002_v.bin").exists()
        assert (tmp_path / "run" / "diagnostics.csv").read_text().startswith("time,")

    def test_depth_floor_abort(self, grid1):
        model, params = MODELS["SWSW"]
        zeta = grid1.scalar(0.9 * np.cos(grid1.mesh[0]))
        rec = simulate(model, params, ModelState(zeta, grid1.vector(0.0)), dt=0.01, t_end=0.1,
                       depth_floor=0.6)
        assert rec.status == "aborted-depth" and "floor" in rec.message

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_abort(self, grid1):
        model = ModelId("BB", alpha1=0.0, alpha2=0.0, beta=0.0)
        params = RegimeParams(0.8, 1.0, 0.0, 0.1)
        zeta = grid1.scalar(1e-3 * np.cos(40 * grid1.mesh[0]))
        rec = simulate(model, params, ModelState(zeta, grid1.vector(0.0)), dt=0.5, t_end=500.0,
                       check_cfl=False)
        assert rec.status == "aborted-nonfinite"

    def test_cfl_warning(self, grid1):
        model, params = MODELS["FDFD"]
        state = ModelState(grid1.scalar(0.0), grid1.vector(0.0))
        rec = simulate(model, params, state, dt=2.0, t_end=2.0)
        assert rec.warnings and "stability" in rec.warnings[0]

    def test_bad_times(self, grid1):
        model, params = MODELS["FDFD"]
        state = ModelState(grid1.scalar(0.0), grid1.vector(0.0))
        with pytest.raises(ValueError):
            simulate(model, params, state, dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            simulate(model, params, state, dt=0.3, t_end=1.0)
