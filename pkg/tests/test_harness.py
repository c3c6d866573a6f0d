import json

import numpy as np
import pytest

from twolayer import harness
from twolayer.harness import (
    TARGETS,
    consistency_residual,
    convergence_study,
    fit_order,
    gaussian_hump,
    longwave_fields,
    random_fields,
    regime_table_check,
    validate_ties,
    worker_count,
)
from twolayer.models import ModelId
from twolayer.operators import RegimeParams
from twolayer.spectral import make_grid


@pytest.fixture(scope="module")
def grid128():
    return make_grid(1, points=[128])


class TestFitOrder:
    def test_exact_power_law(self):
        x = np.array([0.2, 0.1, 0.05, 0.025])
        slope, band = fit_order(x, 3.0 * x**1.5)
        assert slope == pytest.approx(1.5, abs=1e-12)
        assert band[0] == pytest.approx(1.5, abs=1e-9) and band[1] == pytest.approx(1.5, abs=1e-9)

    def test_band_contains_slope(self):
        x = np.array([0.2, 0.1, 0.05, 0.025, 0.0125])
        noise = np.array([1.05, 0.97, 1.02, 0.99, 1.01])
        slope, (lo, hi) = fit_order(x, x**2 * noise)
        assert lo < slope < hi and abs(slope - 2) < 0.05


class TestTies:
    def test_few_points_rejected(self):
        t = TARGETS["PROP2"]
        with pytest.raises(ValueError, match="at least 4"):
            validate_ties(t, [t.make_params(e, 0.9) for e in (0.2, 0.1, 0.05)])

    def test_broken_ilw_tie_named(self):
        t = TARGETS["THM6"]
        params = [RegimeParams.from_lower(0.9, mu=m, mu2=1.0, eps=0.1) for m in (0.1, 0.05, 0.025, 0.0125)]
        with pytest.raises(ValueError, match="THM6.*ties"):
            validate_ties(t, params)

    def test_repeated_values_rejected(self):
        t = TARGETS["PROP2"]
        with pytest.raises(ValueError, match="repeated"):
            validate_ties(t, [t.make_params(e, 0.9) for e in (0.2, 0.1, 0.1, 0.05)])

    @pytest.mark.parametrize("name", sorted(TARGETS))
    def test_default_sweeps_honour_ties(self, name):
        t = TARGETS[name]
        validate_ties(t, [t.make_params(v, 0.9) for v in t.values])

    def test_unknown_target(self):
        with pytest.raises(ValueError, match="unknown target"):
            convergence_study("THM9")


class TestRegimeTable:
    @pytest.mark.parametrize("eps,mu,delta,expected", [
        (0.05, 0.05, 1.0, "BB"),
        (0.8, 0.01, 1.0, "SWSW"),
        (0.05, 0.0025, 0.05, "ILW"),
        (0.1, 1.0, 1.0, "FDFD"),
        (0.8, 1.0, 1.0, "FULL"),
    ])
    def test_cells(self, eps, mu, delta, expected):
        assert regime_table_check(RegimeParams(0.9, delta, eps, mu)) == expected

    def test_deep_lower_layer(self):
        assert regime_table_check(RegimeParams.from_lower(0.9, mu=0.0025, mu2=400.0, eps=0.05)) == "BO"

    def test_boussinesq_full_dispersion(self):
        assert regime_table_check(RegimeParams.from_lower(0.9, mu=0.01, mu2=1.0, eps=0.01)) == "BFD"


class TestCorpus:
    def test_longwave_normalised(self, grid128):
        zeta, psi = longwave_fields(grid128)
        assert zeta.sup() == pytest.approx(0.5) and abs(zeta.mean) < 1e-15 and abs(psi.mean) < 1e-15

    def test_random_fields_deterministic(self, grid128):
        a = random_fields(grid128, seed=3)
        b = random_fields(grid128, seed=3)
        c = random_fields(grid128, seed=4)
        assert np.array_equal(a[0].values, b[0].values)
        assert not np.array_equal(a[0].values, c[0].values)
        n = np.nonzero(np.abs(a[0].hat) > 1e-12 * np.abs(a[0].hat).max())[0]
        assert n.max() <= 8

    def test_hump(self, grid128):
        h = gaussian_hump(grid128, width=0.5, amplitude=0.3)
        assert h.sup() == pytest.approx(0.3) and abs(h.mean) < 1e-15


class TestConsistencyResidual:
    def test_trivial_state(self, grid128):
        zeta, psi = grid128.scalar(0.0), grid128.scalar(2.5)
        r = consistency_residual(ModelId("FDFD"), RegimeParams(0.9, 1.0, 0.1, 1.0), zeta, psi)
        assert r.total < 1e-13

    @pytest.mark.parametrize("model,params", [
        (ModelId("FDFD"), RegimeParams(0.9, 1.0, 0.1, 1.0)),
        (ModelId("SWSW"), RegimeParams(0.9, 1.0, 0.8, 0.05)),
    ])
    def test_invariant_under_constant_potential(self, grid128, model, params):
        zeta, psi = longwave_fields(grid128)
        a = consistency_residual(model, params, zeta, psi)
        b = consistency_residual(model, params, zeta, psi + 3.0)
        assert b.r_zeta == pytest.approx(a.r_zeta, rel=1e-9, abs=1e-14)
        assert b.r_v == pytest.approx(a.r_v, rel=1e-9, abs=1e-14)

    def test_no_oracle_for_deep_models(self, grid128):
        zeta, psi = longwave_fields(grid128)
        with pytest.raises(ValueError):
            consistency_residual(ModelId("RBO", alpha=1.0), RegimeParams(0.9, 0.1, 0.1, 0.01), zeta, psi)

    def test_fdfd_order_in_eps(self, grid128):
        zeta, psi = longwave_fields(grid128)
        eps = (0.2, 0.1, 0.05, 0.025)
        err = [consistency_residual(ModelId("FDFD"), RegimeParams(0.9, 1.0, e, 1.0), zeta, psi).total
               for e in eps]
        assert fit_order(eps, err)[0] >= 1.8

    def test_swsw_order_in_mu(self, grid128):
        zeta, psi = longwave_fields(grid128)
        mus = (0.1, 0.05, 0.025, 0.0125)
        err = [consistency_residual(ModelId("SWSW"), RegimeParams(0.9, 1.0, 0.8, m), zeta, psi).total
               for m in mus]
        assert fit_order(mus, err)[0] >= 0.9


class TestConvergenceStudy:
    @pytest.mark.parametrize("name,minimum", [("PROP2", 1.8), ("THM2", 1.3), ("CORO1", 0.9)])
    def test_examples(self, name, minimum):
        record = convergence_study(name)
        assert record.passed and record.ok
        assert record.fitted_order >= minimum
        assert record.order_band[0] <= record.fitted_order <= record.order_band[1]
        assert record.config["bound"] == harness.BOUNDS[name]

    def test_deterministic(self):
        a = convergence_study("PROP2", workers=1)
        b = convergence_study("PROP2", workers=3)
        assert a.fitted_order == b.fitted_order
        assert [r["error"] for r in a.samples] == [r["error"] for r in b.samples]

    def test_record_saved(self, tmp_path):
        record = convergence_study("PROP2", workers=1)
        out = record.save(tmp_path / "run")
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["kind"] == "convergence" and meta["passed"] is True
        lines = (out / "samples.csv").read_text().splitlines()
        assert lines[0].startswith("eps,error") and len(lines) == 5

    def test_failure_reported(self):
        # an impossible threshold: the same sweep with a custom target
        t = TARGETS["PROP2"]
        strict = harness.Target(**{**t.__dict__, "name": "PROP2", "threshold": 5.0})
        saved = harness.TARGETS["PROP2"]
        harness.TARGETS["PROP2"] = strict
        try:
            record = convergence_study("PROP2", workers=1)
        finally:
            harness.TARGETS["PROP2"] = saved
        assert not record.passed and record.status == "failed" and "below" in record.message


class TestWorkers:
    def test_env(self, monkeypatch):
        monkeypatch.setenv(harness.WORKERS_ENV, "3")
        assert worker_count() == 3

    @pytest.mark.parametrize("raw", ["0", "-2", "many"])
    def test_bad_env(self, monkeypatch, raw):
        monkeypatch.setenv(harness.WORKERS_ENV, raw)
        with pytest.raises(ValueError, match=harness.WORKERS_ENV):
            worker_count()

    def test_default(self, monkeypatch):
        monkeypatch.delenv(harness.WORKERS_ENV, raising=False)
        assert worker_count() >= 1
