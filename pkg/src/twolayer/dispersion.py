"""Linear dispersion relations and their numerical measurement.

Closed forms (``omega^2`` as a function of ``|k|``)::

    full   (1-gamma) |k|/sqrt(mu) T T_d / (T + gamma T_d),
           T = tanh(sqrt(mu)|k|), T_d = tanh(sqrt(mu2)|k|)
    BFD    (1-gamma)/gamma k^2 (1 - mu c k^2)
           [1 - sqrt(mu)/gamma L - mu k^2 (a - coth^2/gamma^2)] / ((1+mu b k^2)(1+mu d k^2))
    BB     k^2 (1/(gamma+delta) - mu a k^2)(1-gamma)(1 - mu c k^2) / ((1+mu b k^2)(1+mu d k^2))
    SWSW   (1-gamma) k^2 / (gamma + delta)
    SWFD   (1-gamma)/gamma k^2 (1 - sqrt(mu)/gamma L)
    ILW    (1-gamma)/gamma k^2 (1 - (1-alpha) sqrt(mu)/gamma L) / (1 + alpha sqrt(mu)/gamma L)
    RBO    omega = c k (1 - sqrt(mu)/(2 gamma) (1-2 alpha)|k|) / (1 + alpha sqrt(mu)/gamma |k|)

with ``L = |k| coth(sqrt(mu2)|k|)`` (``L = |k|`` for the infinite-depth
Benjamin-Ono system).  A mode is well posed when ``omega^2 >= 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import RK4_STABILITY, BoussinesqCoeffs, ModelId, ModelState, rbo_speed, step_rk4
from .operators import RegimeParams
from .spectral import SpectralGrid, make_grid


@dataclass
class DispersionSample:
    """``omega^2`` at wavenumber(s) ``k`` and the well-posedness flag."""

    k: np.ndarray
    omega2: np.ndarray
    wellposed: np.ndarray


def _sample(k, omega2) -> DispersionSample:
    k = np.asarray(k, dtype=float)
    omega2 = np.asarray(omega2, dtype=float)
    return DispersionSample(k, omega2, omega2 >= 0)


def _coth_k(k, mu2, infinite_depth=False):
    """``|k| coth(sqrt(mu2)|k|)`` with limit ``1/sqrt(mu2)`` at 0."""
    k = np.abs(np.asarray(k, float))
    if infinite_depth:
        return k
    r = math.sqrt(mu2)
    safe = np.where(k == 0, 1.0, k)
    return np.where(k == 0, 1.0 / r, safe / np.tanh(r * safe))


def omega2_full(params: RegimeParams, k) -> DispersionSample:
    """Linear dispersion of the full two-layer system."""
    k = np.abs(np.asarray(k, float))
    rmu = math.sqrt(params.mu)
    t = np.tanh(rmu * k)
    td = np.tanh(math.sqrt(params.mu2) * k)
    safe = np.where(k == 0, 1.0, t + params.gamma * td)
    w2 = np.where(k == 0, 0.0, (1 - params.gamma) * k / rmu * t * td / safe)
    return _sample(k, w2)


def omega2_bfd(params: RegimeParams, coeffs: BoussinesqCoeffs, k) -> DispersionSample:
    k = np.abs(np.asarray(k, float))
    g, mu = params.gamma, params.mu
    a, b, c, d = coeffs.as_tuple()
    lam = _coth_k(k, params.mu2)
    bracket = 1 - math.sqrt(mu) / g * lam - mu * (a * k**2 - lam**2 / g**2)
    w2 = (1 - g) / g * k**2 * (1 - mu * c * k**2) * bracket / ((1 + mu * b * k**2) * (1 + mu * d * k**2))
    return _sample(k, w2)


def omega2_bb(params: RegimeParams, coeffs: BoussinesqCoeffs, k) -> DispersionSample:
    k = np.abs(np.asarray(k, float))
    g, dl, mu = params.gamma, params.delta, params.mu
    a, b, c, d = coeffs.as_tuple()
    w2 = (k**2 * (1 / (g + dl) - mu * a * k**2) * (1 - g) * (1 - mu * c * k**2)
          / ((1 + mu * b * k**2) * (1 + mu * d * k**2)))
    return _sample(k, w2)


def omega2_swsw(params: RegimeParams, k) -> DispersionSample:
    k = np.abs(np.asarray(k, float))
    return _sample(k, (1 - params.gamma) * k**2 / (params.gamma + params.delta))


def omega2_swfd(params: RegimeParams, k) -> DispersionSample:
    k = np.abs(np.asarray(k, float))
    g = params.gamma
    lam = _coth_k(k, params.mu2)
    return _sample(k, (1 - g) / g * k**2 * (1 - math.sqrt(params.mu) / g * lam))


def omega2_ilw(params: RegimeParams, alpha: float, k, infinite_depth: bool = False) -> DispersionSample:
    k = np.abs(np.asarray(k, float))
    g, rmu = params.gamma, math.sqrt(params.mu)
    lam = _coth_k(k, params.mu2, infinite_depth)
    w2 = (1 - g) / g * k**2 * (1 - (1 - alpha) * rmu / g * lam) / (1 + alpha * rmu / g * lam)
    return _sample(k, w2)


def omega_rbo(params: RegimeParams, alpha: float, k) -> np.ndarray:
    """Signed frequency of the unidirectional equation for ``exp(i(kx - omega t))``."""
    k = np.asarray(k, float)
    g, rmu = params.gamma, math.sqrt(params.mu)
    c = rbo_speed(params)
    return (c * k - rmu / (2 * g) * c * (1 - 2 * alpha) * k * np.abs(k)) / (1 + alpha * rmu / g * np.abs(k))


def linear_omega2(model: ModelId, params: RegimeParams, k) -> DispersionSample:
    """Closed-form ``omega^2`` of any model."""
    kind = model.kind
    if kind == "FDFD":
        return omega2_full(params, k)
    if kind == "BFD":
        return omega2_bfd(params, model.coeffs(params), k)
    if kind == "BB":
        return omega2_bb(params, model.coeffs(params), k)
    if kind == "SWSW":
        return omega2_swsw(params, k)
    if kind == "SWFD":
        return omega2_swfd(params, k)
    if kind == "ILW":
        return omega2_ilw(params, model.alpha, k)
    if kind == "BOSYS":
        return omega2_ilw(params, model.alpha, k, infinite_depth=True)
    if kind == "RBO":
        return _sample(np.abs(np.asarray(k, float)), omega_rbo(params, model.alpha, k) ** 2)
    raise ValueError(kind)


def max_linear_frequency(model: ModelId, params: RegimeParams, grid: SpectralGrid) -> float:
    """Largest ``sqrt|omega^2|`` over the resolved wavenumbers."""
    w2 = linear_omega2(model, params, grid.kabs.ravel()).omega2
    return float(np.sqrt(np.max(np.abs(w2))))


def find_illposed(model: ModelId, params: RegimeParams, kmax: float = 200.0,
                  samples: int = 4000) -> np.ndarray:
    """Wavenumbers in ``(0, kmax]`` with ``omega^2 < 0``."""
    k = np.linspace(kmax / samples, kmax, samples)
    s = linear_omega2(model, params, k)
    return k[~s.wellposed]


def write_dispersion_csv(sample: DispersionSample, target) -> None:
    """Write ``k, omega2, wellposed`` rows to a path or an open text stream."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            write_dispersion_csv(sample, fh)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["k", "omega2", "wellposed"])
    for k, w2, ok in zip(np.ravel(sample.k), np.ravel(sample.omega2), np.ravel(sample.wellposed)):
        writer.writerow([repr(float(k)), repr(float(w2)), int(bool(ok))])


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

@dataclass
class MeasuredDispersion:
    """Frequency (or growth rate) extracted from a tiny-amplitude run."""

    k: float
    omega: float          # oscillation frequency (0 when the mode grows)
    growth: float         # exponential growth rate (0 when the mode oscillates)
    fit_residual: float

    @property
    def omega2(self) -> float:
        return self.omega**2 - self.growth**2


def recurrence_frequency(series: np.ndarray, dt: float) -> tuple:
    """Fit ``x[n+1] + x[n-1] = 2 lam x[n]``; return ``(omega, growth, residual)``.

    Any combination of ``exp(+-i omega t)`` (or ``exp(+-sigma t)``) satisfies the
    recurrence exactly with ``lam = cos(omega dt)`` (``cosh(sigma dt)``).
    """
    x = np.asarray(series)
    mid, outer = x[1:-1], x[2:] + x[:-2]
    lam = float(np.real(np.vdot(mid, outer)) / (2 * np.real(np.vdot(mid, mid))))
    resid = float(np.linalg.norm(outer - 2 * lam * mid) / np.linalg.norm(outer))
    if lam <= 1.0:
        return math.acos(max(lam, -1.0)) / dt, 0.0, resid
    return 0.0, math.acosh(lam) / dt, resid


def measured_dispersion(model: ModelId, params: RegimeParams, k: float,
                        amplitude: float = 1e-6, periods: float = 20.0,
                        steps_per_period: int = 64, points: int = 16) -> MeasuredDispersion:
    """Run a single small-amplitude mode and extract its frequency.

    The grid period is ``2 pi / k`` so the mode is the first harmonic.  The
    step size comes from the closed-form frequency estimate; for a growing
    mode the run covers ``periods`` e-folding times instead.  When higher
    harmonics of the box grow faster than the measured mode, transform
    round-off from them swamps it; use the coarsest box and few e-foldings
    for such parameters.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    grid = make_grid(1, [2 * math.pi / k], [points])
    w2 = float(linear_omega2(model, params, k).omega2)
    rate = max(math.sqrt(abs(w2)), 1e-8)
    span = (2 * math.pi if w2 >= 0 else 1.0) / rate     # one period or one e-folding time
    # the step must also resolve the stiffest resolved mode of the box
    dt = min(span / steps_per_period, 0.5 * RK4_STABILITY / max_linear_frequency(model, params, grid))
    nsteps = int(math.ceil(periods * span / dt - 1e-9))
    zeta = grid.scalar(amplitude * np.cos(k * grid.mesh[0]))
    v = None if model.scalar_only else grid.vector(0.0)
    state = ModelState(zeta, v)
    series = np.empty(nsteps + 1, dtype=complex)
    series[0] = zeta.hat[1]
    for n in range(1, nsteps + 1):
        state = step_rk4(model, params, state, dt)
        series[n] = state.zeta.hat[1]
    omega, growth, resid = recurrence_frequency(series, dt)
    return MeasuredDispersion(k, omega, growth, resid)


def oracle_linear_omega2(params: RegimeParams, k: int, points: int = 32,
                         amplitude: float = 1e-6) -> float:
    """``omega^2`` of the full system from the oracle right-hand side.

    Probes the linearisation with ``psi1 = A cos(kx)`` (which gives ``zeta_t``)
    and ``zeta = A cos(kx)`` (which gives ``v_t``), converting ``v`` back to
    ``psi1`` through the flat interface operator.
    """
    from .oracle import evaluate_oracle, full_rhs

    grid = make_grid(1, [2 * math.pi], [points])
    x = grid.mesh[0]
    zero = grid.scalar(0.0)
    probe = grid.scalar(amplitude * np.cos(k * x))
    zeta_t, _ = full_rhs(params, zero, probe, evaluate_oracle(params, zero, probe))
    a_zp = zeta_t.hat[k] / probe.hat[k]            # zeta_t per unit psi1
    _, v_t = full_rhs(params, probe, zero, evaluate_oracle(params, probe, zero))
    t = math.tanh(math.sqrt(params.mu) * k)
    t2 = math.tanh(math.sqrt(params.mu2) * k)
    # v = -(T/T2 + gamma) grad psi1  =>  psi1_t = v_t / (-(T/T2 + gamma) i k)
    psi_t_hat = v_t.hat[0][k] / (-(t / t2 + params.gamma) * 1j * k)
    a_pz = psi_t_hat / probe.hat[k]                # psi1_t per unit zeta
    return float(np.real(-a_zp * a_pz))
