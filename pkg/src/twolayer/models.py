"""Asymptotic two-layer model systems and their time integration.

Every model is written in the form::

    M_zeta(D) zeta_t + E_zeta(zeta, v) = 0
    M_v(D)    v_t    + E_v(zeta, v)    = 0

with Fourier multipliers ``M`` (identity unless the model carries BBM-type
terms).  The right-hand side is ``-M^{-1} E``; the same split gives the
equation residual used by the consistency harness.

Models
------
FDFD   full dispersion in both layers, small amplitude
BFD    Boussinesq upper layer / full-dispersion lower layer (unknown v_beta)
BB     Boussinesq in both layers (unknown v_beta)
SWSW   shallow water in both layers, large amplitude
SWFD   shallow upper layer, full-dispersion lower layer
ILW    intermediate long wave system (parameter alpha)
BOSYS  Benjamin-Ono system, infinitely deep lower layer (parameter alpha)
RBO    regularised unidirectional Benjamin-Ono equation, 1-D (parameter alpha)

For BFD/BB the state stores ``v_beta = (1 - mu beta Lap)^{-1} v``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .operators import (
    ContractionError,
    ParameterError,
    RegimeParams,
    bilinear_b,
    coth_symbol,
    depth_bounds,
    projector_pi,
    q_frak,
    tanh_symbol,
    unit_direction,
)
from .records import RunRecord
from .spectral import (
    ScalarField,
    VectorField,
    apply_symbol,
    dealiased_array_product,
    divergence_array,
    gradient_array,
    l2_norm,
)

log = logging.getLogger(__name__)

MODEL_KINDS = ("FDFD", "BFD", "BB", "SWSW", "SWFD", "ILW", "BOSYS", "RBO")
_GENERATOR_MODELS = ("BFD", "BB")
_ALPHA_MODELS = ("ILW", "BOSYS", "RBO")


# ---------------------------------------------------------------------------
# Coefficients and identifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoussinesqCoeffs:
    """Dispersion coefficients ``(a, b, c, d)`` of a Boussinesq family."""

    a: float
    b: float
    c: float
    d: float

    def as_tuple(self) -> tuple:
        return (self.a, self.b, self.c, self.d)


def _check_generators(alpha1: float, alpha2: float, beta: float) -> None:
    if alpha1 < 0 or beta < 0 or alpha2 > 1:
        raise ParameterError(
            f"generators need alpha1 >= 0, beta >= 0, alpha2 <= 1 "
            f"(got alpha1={alpha1}, alpha2={alpha2}, beta={beta})")


def coeffs_bfd(alpha1: float, alpha2: float, beta: float) -> BoussinesqCoeffs:
    """Coefficients of the Boussinesq/full-dispersion family."""
    _check_generators(alpha1, alpha2, beta)
    return BoussinesqCoeffs(
        a=(1 - alpha1 - 3 * beta) / 3,
        b=alpha1 / 3,
        c=beta * alpha2,
        d=beta * (1 - alpha2),
    )


def coeffs_bb(gamma: float, delta: float, alpha1: float, alpha2: float,
              beta: float) -> BoussinesqCoeffs:
    """Coefficients of the Boussinesq/Boussinesq family."""
    _check_generators(alpha1, alpha2, beta)
    if delta <= 0 or gamma < 0:
        raise ParameterError("need delta > 0 and gamma >= 0")
    gd = gamma + delta
    return BoussinesqCoeffs(
        a=((1 - alpha1) * (1 + gamma * delta) - 3 * delta * beta * gd) / (3 * delta * gd**2),
        b=alpha1 * (1 + gamma * delta) / (3 * delta * gd),
        c=beta * alpha2,
        d=beta * (1 - alpha2),
    )


@dataclass(frozen=True)
class ModelId:
    """Model kind plus its family parameters."""

    kind: str
    alpha: float | None = None
    alpha1: float | None = None
    alpha2: float | None = None
    beta: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model {self.kind!r}; expected one of {MODEL_KINDS}")
        gens = (self.alpha1, self.alpha2, self.beta)
        if kind in _GENERATOR_MODELS:
            if any(g is None for g in gens):
                raise ParameterError(f"{kind} needs alpha1, alpha2 and beta")
            _check_generators(*gens)
        elif any(g is not None for g in gens):
            raise ParameterError(f"{kind} takes no alpha1/alpha2/beta")
        if kind in _ALPHA_MODELS:
            if self.alpha is None:
                raise ParameterError(f"{kind} needs alpha")
        elif self.alpha is not None:
            raise ParameterError(f"{kind} takes no alpha")

    @property
    def uses_vbeta(self) -> bool:
        return self.kind in _GENERATOR_MODELS

    @property
    def scalar_only(self) -> bool:
        return self.kind == "RBO"

    def coeffs(self, params: RegimeParams) -> BoussinesqCoeffs:
        if self.kind == "BFD":
            return coeffs_bfd(self.alpha1, self.alpha2, self.beta)
        if self.kind == "BB":
            return coeffs_bb(params.gamma, params.delta, self.alpha1, self.alpha2, self.beta)
        raise ParameterError(f"{self.kind} has no Boussinesq coefficients")

    def label(self) -> str:
        if self.kind in _GENERATOR_MODELS:
            return f"{self.kind}(alpha1={self.alpha1}, alpha2={self.alpha2}, beta={self.beta})"
        if self.kind in _ALPHA_MODELS:
            return f"{self.kind}(alpha={self.alpha})"
        return self.kind


@dataclass(frozen=True, eq=False)
class ModelState:
    """Interface elevation and shear velocity (``None`` for scalar models)."""

    zeta: ScalarField
    v: VectorField | None = None

    def axpy(self, scale: float, other: "ModelState") -> "ModelState":
        v = None if self.v is None else self.v + other.v * scale
        return ModelState(self.zeta + other.zeta * scale, v)

    def is_finite(self) -> bool:
        ok = bool(np.all(np.isfinite(self.zeta.values)))
        return ok and (self.v is None or bool(np.all(np.isfinite(self.v.values))))


def v_to_vbeta(mu: float, beta: float, v: VectorField) -> VectorField:
    """``(1 - mu beta Lap)^{-1} v``."""
    return apply_symbol(v, 1.0 / (1.0 + mu * beta * v.grid.k2))


def vbeta_to_v(mu: float, beta: float, vbeta: VectorField) -> VectorField:
    """``(1 - mu beta Lap) v_beta``."""
    return apply_symbol(vbeta, 1.0 + mu * beta * vbeta.grid.k2)


# ---------------------------------------------------------------------------
# Small helpers on raw arrays
# ---------------------------------------------------------------------------

def _grad(grid, a):
    return gradient_array(grid, a)


def _div(grid, a):
    return divergence_array(grid, a)


def _mul(grid, a, b):
    return dealiased_array_product(grid, a, b)


def _h1_times(grid, eps, z, a):
    """``(1 - eps z) a`` with the linear part kept outside the de-aliasing mask."""
    return a - eps * _mul(grid, z[None], a)


def _sym(grid, a, symbol):
    return grid.ifft(grid.fft(a) * symbol)


def _dir_div(grid, a):
    """``(grad/|D|) . a`` for a vector array."""
    return grid.ifft(np.sum(unit_direction(grid) * grid.fft(a), axis=0))


def _sq(grid, a):
    """``|a|^2`` (de-aliased) for a vector array, ``a^2`` for a scalar."""
    if a.ndim == grid.dim:
        return _mul(grid, a, a)
    return np.sum(_mul(grid, a, a), axis=0)


def _ratio(grid, num, den, limit):
    safe = np.where(grid.zero_mode, 1.0, den)
    return np.where(grid.zero_mode, limit, num / safe)


def _require_positive_gamma(model: ModelId, params: RegimeParams):
    if params.gamma <= 0:
        raise ParameterError(f"{model.kind} requires gamma > 0")


# ---------------------------------------------------------------------------
# Model terms: (M_zeta symbol, E_zeta array, M_v symbol, E_v array)
# ---------------------------------------------------------------------------

def _terms_fdfd(model, p, zeta, v):
    grid = zeta.grid
    g, eps, eps2, rmu = p.gamma, p.eps, p.eps2, math.sqrt(p.mu)
    t = tanh_symbol(grid, p.mu)
    t2 = tanh_symbol(grid, p.mu2)
    den = g * t2 + t
    s = _ratio(grid, t * t2, den, 0.0)
    r = _ratio(grid, t2, den, 1.0 / (g + p.delta))
    r1 = _ratio(grid, t, den, p.delta / (g + p.delta))
    z, vv = zeta.values, v.values
    sv = _sym(grid, vv, s)
    rv = _sym(grid, vv, r)
    dsv = _dir_div(grid, sv)
    b = bilinear_b(p, zeta, VectorField(grid, rv)).values
    e_zeta = (dsv / rmu
              + (eps2 / rmu) * _dir_div(grid, _sym(grid, b, s))
              - eps * _div(grid, _mul(grid, z[None], rv))
              + eps * _sym(grid, _mul(grid, z, dsv), grid.kabs * t))
    potential = ((1 - g) * z
                 + 0.5 * eps * (_sq(grid, _sym(grid, vv, r1)) - g * _sq(grid, rv))
                 + eps * 0.5 * (g - 1) * _sq(grid, dsv))
    return None, e_zeta, None, _grad(grid, potential)


def _terms_bfd(model, p, zeta, v):
    _require_positive_gamma(model, p)
    grid = zeta.grid
    g, eps, mu, rmu = p.gamma, p.eps, p.mu, math.sqrt(p.mu)
    co = model.coeffs(p)
    lam = coth_symbol(grid, p.mu2)
    z, vv = zeta.values, v.values
    divv = _div(grid, vv)
    disp = (mu / g) * (-co.a * grid.k2 + lam**2 / g**2)
    e_zeta = (_div(grid, _h1_times(grid, eps, z, vv)) / g
              - (rmu / g**2) * _sym(grid, divv, lam)
              + _sym(grid, divv, disp))
    potential = ((1 - g) * z - eps / (2 * g) * _sq(grid, vv)
                 - mu * co.c * (1 - g) * _sym(grid, z, grid.k2))
    m_zeta = 1 + mu * co.b * grid.k2
    m_v = 1 + mu * co.d * grid.k2
    return m_zeta, e_zeta, m_v, _grad(grid, potential)


def _terms_bb(model, p, zeta, v):
    grid = zeta.grid
    g, d, eps, mu = p.gamma, p.delta, p.eps, p.mu
    co = model.coeffs(p)
    z, vv = zeta.values, v.values
    nl = (d**2 - g) / (g + d) ** 2
    e_zeta = (_div(grid, vv) / (g + d)
              + eps * nl * _div(grid, _mul(grid, z[None], vv))
              - mu * co.a * _sym(grid, _div(grid, vv), grid.k2))
    potential = ((1 - g) * z + 0.5 * eps * nl * _sq(grid, vv)
                 - mu * co.c * (1 - g) * _sym(grid, z, grid.k2))
    m_zeta = 1 + mu * co.b * grid.k2
    m_v = 1 + mu * co.d * grid.k2
    return m_zeta, e_zeta, m_v, _grad(grid, potential)


def swsw_flux(p: RegimeParams, zeta: ScalarField, v: VectorField, method: str = "auto") -> VectorField:
    """``Q[kappa zeta](h2 v)`` with ``kappa = (gamma - 1) eps delta / (gamma + delta)``.

    ``method="series"`` sums the Neumann series.  ``method="closed"`` (1-D
    only) uses ``1 + kappa zeta = (delta h1 + gamma h2)/(gamma + delta)``, so
    the solution is ``(gamma + delta)(h2 v + C)/(delta h1 + gamma h2)`` with
    the constant ``C`` fixed by the zero-mean condition on the torus.
    ``"auto"`` picks the closed form in 1-D.
    """
    grid = zeta.grid
    if method == "auto":
        method = "closed" if grid.dim == 1 else "series"
    kappa = (p.gamma - 1) * p.eps * p.delta / (p.gamma + p.delta)
    h2v = v.values + p.eps2 * _mul(grid, zeta.values[None], v.values)
    if method == "series":
        return q_frak(zeta * kappa, VectorField(grid, h2v))
    if method != "closed" or grid.dim != 1:
        raise ValueError("closed-form SW/SW flux is one-dimensional; use method='series'")
    sup = abs(kappa) * zeta.sup()
    if sup >= 1:
        raise ContractionError(f"sup|kappa*zeta| = {sup:.3g} is not below 1")
    den = 1 + kappa * zeta.values
    const = -np.mean(h2v[0] / den) / np.mean(1 / den)
    return VectorField(grid, ((h2v[0] + const) / den)[None])


def _terms_swsw(model, p, zeta, v, method="auto"):
    grid = zeta.grid
    g, d, eps = p.gamma, p.delta, p.eps
    z, vv = zeta.values, v.values
    q = swsw_flux(p, zeta, v, method).values
    e_zeta = _div(grid, _h1_times(grid, eps, z, q)) / (g + d)
    upper = vv - (g / (g + d)) * q
    potential = (1 - g) * z + 0.5 * eps * (_sq(grid, upper) - g / (g + d) ** 2 * _sq(grid, q))
    return None, e_zeta, None, _grad(grid, potential)


def _terms_swfd(model, p, zeta, v):
    _require_positive_gamma(model, p)
    grid = zeta.grid
    g, eps, rmu = p.gamma, p.eps, math.sqrt(p.mu)
    z, vv = zeta.values, v.values
    h1v = _h1_times(grid, eps, z, vv)
    lp = _sym(grid, projector_pi(VectorField(grid, h1v)).values, coth_symbol(grid, p.mu2))
    e_zeta = _div(grid, h1v) / g - (rmu / g**2) * _div(grid, _h1_times(grid, eps, z, lp))
    cross = np.sum(_mul(grid, vv, lp), axis=0)
    potential = (1 - g) * z - eps / (2 * g) * (_sq(grid, vv) - 2 * (rmu / g) * cross)
    return None, e_zeta, None, _grad(grid, potential)


def _terms_ilw(model, p, zeta, v, infinite_depth=False):
    _require_positive_gamma(model, p)
    grid = zeta.grid
    g, eps, rmu, alpha = p.gamma, p.eps, math.sqrt(p.mu), model.alpha
    lam = coth_symbol(grid, p.mu2, infinite_depth)
    z, vv = zeta.values, v.values
    e_zeta = (_div(grid, _h1_times(grid, eps, z, vv)) / g
              - (1 - alpha) * (rmu / g**2) * _sym(grid, _div(grid, vv), lam))
    potential = (1 - g) * z - eps / (2 * g) * _sq(grid, vv)
    m_zeta = 1 + rmu * (alpha / g) * lam
    return m_zeta, e_zeta, None, _grad(grid, potential)


def _terms_bosys(model, p, zeta, v):
    return _terms_ilw(model, p, zeta, v, infinite_depth=True)


def rbo_speed(params: RegimeParams) -> float:
    return math.sqrt((1 - params.gamma) / params.gamma)


def _terms_rbo(model, p, zeta, v):
    _require_positive_gamma(model, p)
    grid = zeta.grid
    if grid.dim != 1:
        raise ParameterError("RBO is a one-dimensional equation")
    if p.gamma >= 1:
        raise ParameterError("RBO needs gamma < 1")
    g, eps, rmu, alpha = p.gamma, p.eps, math.sqrt(p.mu), model.alpha
    c = rbo_speed(p)
    z = zeta.values
    dx = lambda a: _grad(grid, a)[0]
    e_zeta = (c * dx(z) - 0.75 * eps * c * dx(_mul(grid, z, z))
              - (rmu / (2 * g)) * c * (1 - 2 * alpha) * dx(_sym(grid, z, grid.kabs)))
    m_zeta = 1 + rmu * (alpha / g) * grid.kabs
    return m_zeta, e_zeta, None, None


_TERMS = {
    "FDFD": _terms_fdfd,
    "BFD": _terms_bfd,
    "BB": _terms_bb,
    "SWSW": _terms_swsw,
    "SWFD": _terms_swfd,
    "ILW": _terms_ilw,
    "BOSYS": _terms_bosys,
    "RBO": _terms_rbo,
}


def model_terms(model: ModelId, params: RegimeParams, state: ModelState) -> tuple:
    if not model.scalar_only and state.v is None:
        raise ParameterError(f"{model.kind} needs a velocity field")
    return _TERMS[model.kind](model, params, state.zeta, state.v)


def rhs(model: ModelId, params: RegimeParams, state: ModelState) -> ModelState:
    """Time derivative of ``state`` under ``model``."""
    m_zeta, e_zeta, m_v, e_v = model_terms(model, params, state)
    grid = state.zeta.grid
    zeta_t = -e_zeta if m_zeta is None else -_sym(grid, e_zeta, 1.0 / m_zeta)
    v_t = None
    if e_v is not None:
        v_t = -e_v if m_v is None else -_sym(grid, e_v, 1.0 / m_v)
        v_t = VectorField(grid, v_t)
    return ModelState(ScalarField(grid, zeta_t), v_t)


def residual(model: ModelId, params: RegimeParams, state: ModelState,
             derivative: ModelState) -> ModelState:
    """Left-hand sides of the model equations with prescribed time derivatives."""
    m_zeta, e_zeta, m_v, e_v = model_terms(model, params, state)
    grid = state.zeta.grid
    zt = derivative.zeta.values
    r_zeta = e_zeta + (zt if m_zeta is None else _sym(grid, zt, m_zeta))
    r_v = None
    if e_v is not None:
        vt = derivative.v.values
        r_v = VectorField(grid, e_v + (vt if m_v is None else _sym(grid, vt, m_v)))
    return ModelState(ScalarField(grid, r_zeta), r_v)


def rhs_fdfd(params, state):
    return rhs(ModelId("FDFD"), params, state)


def rhs_bfd(params, state, alpha1, alpha2, beta):
    return rhs(ModelId("BFD", alpha1=alpha1, alpha2=alpha2, beta=beta), params, state)


def rhs_bb(params, state, alpha1, alpha2, beta):
    return rhs(ModelId("BB", alpha1=alpha1, alpha2=alpha2, beta=beta), params, state)


def rhs_swsw(params, state):
    return rhs(ModelId("SWSW"), params, state)


def rhs_swfd(params, state):
    return rhs(ModelId("SWFD"), params, state)


def rhs_ilw(params, state, alpha):
    return rhs(ModelId("ILW", alpha=alpha), params, state)


def rhs_bosys(params, state, alpha):
    return rhs(ModelId("BOSYS", alpha=alpha), params, state)


def rhs_ilw_bo(params, alpha, state, infinite_depth=False):
    """ILW system, or the Benjamin-Ono system when ``infinite_depth``."""
    return rhs(ModelId("BOSYS" if infinite_depth else "ILW", alpha=alpha), params, state)


def rhs_rbo(params, state, alpha):
    return rhs(ModelId("RBO", alpha=alpha), params, state)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

def step_rk4(model: ModelId, params: RegimeParams, state: ModelState, dt: float) -> ModelState:
    """One classical fourth-order Runge-Kutta step."""
    f = lambda s: rhs(model, params, s)
    k1 = f(state)
    k2 = f(state.axpy(dt / 2, k1))
    k3 = f(state.axpy(dt / 2, k2))
    k4 = f(state.axpy(dt, k3))
    out = state.axpy(dt / 6, k1).axpy(dt / 3, k2).axpy(dt / 3, k3).axpy(dt / 6, k4)
    return out


RK4_STABILITY = 2.0 * math.sqrt(2.0)


def _diagnostics(params: RegimeParams, time: float, state: ModelState) -> dict:
    bounds = depth_bounds(params, state.zeta)
    row = {
        "time": time,
        "mean_zeta": state.zeta.mean,
        "l2_zeta": l2_norm(state.zeta),
        "max_abs_zeta": state.zeta.sup(),
        "h1_min": bounds.h1_min,
        "h2_min": bounds.h2_min,
    }
    if state.v is not None:
        for i, m in enumerate(state.v.mean):
            row[f"mean_v{i}"] = float(m)
        row["l2_v"] = l2_norm(state.v)
    return row


def simulate(model: ModelId, params: RegimeParams, initial: ModelState, dt: float,
             t_end: float, output_every: int = 0, depth_floor: float = 0.0,
             check_cfl: bool = True) -> RunRecord:
    """Integrate ``model`` from ``initial`` to ``t_end`` with fixed-step RK4.

    Aborts (status ``aborted-depth``) when a layer depth drops to
    ``depth_floor`` and (status ``aborted-nonfinite``) on NaN/Inf.  Warns when
    ``dt`` exceeds the linear RK4 stability estimate.  ``output_every`` steps
    between snapshots (0: only first and last).
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    grid = initial.zeta.grid
    nsteps = int(round(t_end / dt))
    if not math.isclose(nsteps * dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t_end must be an integer multiple of dt")
    config = {
        "model": model.label(),
        "params": {"gamma": params.gamma, "delta": params.delta, "eps": params.eps, "mu": params.mu},
        "grid": {"dim": grid.dim, "points": list(grid.shape), "lengths": list(grid.lengths)},
        "dt": dt, "t_end": t_end, "steps": nsteps, "output_every": output_every,
        "depth_floor": depth_floor,
    }
    record = RunRecord(kind="simulation", config=config)
    if check_cfl:
        from .dispersion import max_linear_frequency
        omega = max_linear_frequency(model, params, grid)
        if omega * dt > RK4_STABILITY:
            msg = f"dt*max|omega| = {omega * dt:.3g} exceeds the RK4 stability limit {RK4_STABILITY:.3g}"
            log.warning(msg)
            record.warnings.append(msg)
    state = initial
    record.diagnostics.append(_diagnostics(params, 0.0, state))
    record.snapshots.append((0.0, state))
    for n in range(1, nsteps + 1):
        state = step_rk4(model, params, state, dt)
        time = n * dt
        if not state.is_finite():
            record.status = "aborted-nonfinite"
            record.message = f"non-finite values at step {n} (t={time:.6g})"
            record.snapshots.append((time, state))
            return record
        bounds = depth_bounds(params, state.zeta)
        thin = bounds.h1_min <= depth_floor or (
            model.kind not in ("BOSYS", "RBO") and bounds.h2_min <= depth_floor)
        if thin:
            record.status = "aborted-depth"
            record.message = (f"layer depth reached the floor {depth_floor} at step {n} "
                              f"(h1_min={bounds.h1_min:.4g}, h2_min={bounds.h2_min:.4g})")
            record.diagnostics.append(_diagnostics(params, time, state))
            record.snapshots.append((time, state))
            return record
        if (output_every and n % output_every == 0) or n == nsteps:
            record.diagnostics.append(_diagnostics(params, time, state))
            record.snapshots.append((time, state))
    return record


__all__ = [
    "MODEL_KINDS", "BoussinesqCoeffs", "ModelId", "ModelState", "coeffs_bfd", "coeffs_bb",
    "rhs", "residual", "step_rk4", "simulate", "v_to_vbeta", "vbeta_to_v", "ContractionError",
]
