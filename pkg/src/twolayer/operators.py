"""Nonlocal wave operators and their asymptotic expansions.

Nondimensional two-layer setting: upper layer of unit depth under a rigid
lid, lower layer of depth ``1/delta``.  ``gamma`` is the density ratio,
``eps`` the interface amplitude over the upper depth and ``mu`` the
shallowness of the upper layer.  The lower-layer parameters are
``eps2 = eps * delta`` and ``mu2 = mu / delta**2``.

Every Fourier symbol with a removable singularity at ``k = 0`` is replaced
there by its analytic limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    apply_symbol,
    dealiased_array_product,
    divergence_array,
    gradient_array,
    l2_norm,
    product_dealiased,
)


class ParameterError(ValueError):
    """Regime parameters outside their admissible range."""


class ContractionError(RuntimeError):
    """Neumann series for the gradient-projection inverse fails to contract."""


@dataclass(frozen=True)
class RegimeParams:
    """Dimensionless parameters of the two-layer system."""

    gamma: float
    delta: float
    eps: float
    mu: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.gamma, self.delta, self.eps, self.mu)):
            raise ParameterError("parameters must be finite")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.delta <= 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")
        if not 0 <= self.eps <= 1:
            raise ParameterError(f"eps must lie in [0, 1], got {self.eps}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")

    @property
    def eps2(self) -> float:
        return self.eps * self.delta

    @property
    def mu2(self) -> float:
        return self.mu / self.delta**2

    def replace(self, **changes) -> "RegimeParams":
        data = dict(gamma=self.gamma, delta=self.delta, eps=self.eps, mu=self.mu)
        data.update(changes)
        return RegimeParams(**data)

    @classmethod
    def from_lower(cls, gamma: float, mu: float, mu2: float, eps: float) -> "RegimeParams":
        """Build from ``mu`` and ``mu2`` (the depth ratio follows)."""
        return cls(gamma=gamma, delta=math.sqrt(mu / mu2), eps=eps, mu=mu)


@dataclass(frozen=True)
class DepthBounds:
    """Minimum layer depths ``h1 = 1 - eps*zeta`` and ``h2 = 1 + eps2*zeta``."""

    h1_min: float
    h2_min: float

    def satisfies(self, floor1: float, floor2: float) -> bool:
        return self.h1_min >= floor1 and self.h2_min >= floor2


def depth_bounds(params: RegimeParams, zeta: ScalarField) -> DepthBounds:
    return DepthBounds(
        h1_min=float(np.min(1 - params.eps * zeta.values)),
        h2_min=float(np.min(1 + params.eps2 * zeta.values)),
    )


def upper_depth(params: RegimeParams, zeta: ScalarField) -> ScalarField:
    return 1.0 - params.eps * zeta


def lower_depth(params: RegimeParams, zeta: ScalarField) -> ScalarField:
    return 1.0 + params.eps2 * zeta


# ---------------------------------------------------------------------------
# Symbols
# ---------------------------------------------------------------------------

def _with_limit(kabs: np.ndarray, func, limit: float) -> np.ndarray:
    """Evaluate ``func(kabs)`` away from 0 and ``limit`` at ``k = 0``."""
    safe = np.where(kabs == 0, 1.0, kabs)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = func(safe)
    return np.where(kabs == 0, limit, out)


def tanh_symbol(grid: SpectralGrid, mu: float) -> np.ndarray:
    """``tanh(sqrt(mu) |k|)``."""
    return np.tanh(math.sqrt(mu) * grid.kabs)


def t0_symbol(grid: SpectralGrid, mu: float) -> np.ndarray:
    """``tanh(sqrt(mu)|k|)/|k|`` with value ``sqrt(mu)`` at ``k = 0``."""
    rmu = math.sqrt(mu)
    return _with_limit(grid.kabs, lambda k: np.tanh(rmu * k) / k, rmu)


def coth_symbol(grid: SpectralGrid, mu2: float, infinite_depth: bool = False) -> np.ndarray:
    """``|k| coth(sqrt(mu2)|k|)`` with value ``1/sqrt(mu2)`` at ``k = 0``.

    With ``infinite_depth`` the symbol degenerates to ``|k|``.
    """
    if infinite_depth:
        return grid.kabs.copy()
    r = math.sqrt(mu2)
    return _with_limit(grid.kabs, lambda k: k / np.tanh(r * k), 1.0 / r)


def coth_unit_symbol(grid: SpectralGrid, mu2: float, infinite_depth: bool = False) -> np.ndarray:
    """``coth(sqrt(mu2)|k|)`` (unbounded at ``k = 0``; callers multiply by ``|k|``)."""
    if infinite_depth:
        return np.ones_like(grid.kabs)
    r = math.sqrt(mu2)
    return _with_limit(grid.kabs, lambda k: 1.0 / np.tanh(r * k), np.inf)


def tanh_ratio_symbol(grid: SpectralGrid, params: RegimeParams) -> np.ndarray:
    """``tanh(sqrt(mu)|k|)/tanh(sqrt(mu2)|k|)`` with value ``delta`` at ``k = 0``."""
    rmu, rmu2 = math.sqrt(params.mu), math.sqrt(params.mu2)
    return _with_limit(grid.kabs, lambda k: np.tanh(rmu * k) / np.tanh(rmu2 * k), params.delta)


def unit_direction(grid: SpectralGrid) -> np.ndarray:
    """``i k/|k|`` (symbol of ``grad/|D|``), zero at ``k = 0`` and on Nyquist."""
    kabs = np.where(grid.zero_mode, 1.0, grid.kabs)
    out = 1j * grid.k / kabs
    return np.where(grid.zero_mode | grid.nyquist, 0.0, out)


# ---------------------------------------------------------------------------
# Multiplier operators on fields
# ---------------------------------------------------------------------------

def t_mu(mu: float, f):
    """``tanh(sqrt(mu)|D|) f``."""
    return apply_symbol(f, tanh_symbol(f.grid, mu))


def lambda_coth(mu2: float, f, infinite_depth: bool = False):
    """``|D| coth(sqrt(mu2)|D|) f``."""
    return apply_symbol(f, coth_symbol(f.grid, mu2, infinite_depth))


def t0_mu(mu: float, f):
    """``tanh(sqrt(mu)|D|)/|D| f``."""
    return apply_symbol(f, t0_symbol(f.grid, mu))


def projector_pi(w: VectorField) -> VectorField:
    """Orthogonal projection onto gradient fields, ``-grad grad^T / |D|^2``.

    Maps constants to zero, so the output always has zero mean.  Nyquist
    modes are zeroed as well: the cross terms ``k_i k_j`` are odd in each
    component and have no real-valued representation there.
    """
    grid = w.grid
    coeffs = w.hat
    kabs2 = np.where(grid.zero_mode, 1.0, grid.k2)
    kdotw = np.sum(grid.k * coeffs, axis=0)
    out = grid.k * kdotw[None] / kabs2
    out = np.where(grid.zero_mode | grid.nyquist, 0.0, out)
    return VectorField(grid, grid.ifft(out))


def t1_mu(mu: float, zeta: ScalarField, w: VectorField) -> VectorField:
    """``T1[zeta] W = -grad T0 ( zeta * T0 div W )`` with a de-aliased product."""
    grid = w.grid
    t0 = t0_symbol(grid, mu)
    inner = apply_symbol(ScalarField(grid, divergence_array(grid, w.values)), t0)
    prod = product_dealiased(zeta, inner)
    outer = apply_symbol(prod, t0)
    return VectorField(grid, -gradient_array(grid, outer.values))


def q_frak(eps2_zeta: ScalarField, w: VectorField, tol: float = 1e-12,
           max_terms: int = 200, guard: float = 0.9) -> VectorField:
    """Solve ``Pi V = V``, ``div((1 + eps2_zeta) V) = div W`` by a Neumann series.

    Sums ``sum_n (-Pi(eps2_zeta Pi .))^n Pi W`` until a term has L2 norm below
    ``tol``.  Raises :class:`ContractionError` if ``sup|eps2_zeta| > guard``,
    if the terms stop decreasing, or if ``max_terms`` is reached.
    """
    sup = eps2_zeta.sup()
    if sup > guard:
        raise ContractionError(
            f"sup|eps2*zeta| = {sup:.3g} exceeds the contraction guard {guard}")
    grid = w.grid
    term = projector_pi(w)
    total = term.values.copy()
    previous = l2_norm(term)
    if previous < tol:
        return VectorField(grid, total)
    for _ in range(max_terms):
        prod = dealiased_array_product(grid, eps2_zeta.values[None], term.values)
        term = -projector_pi(VectorField(grid, prod))
        total += term.values
        size = l2_norm(term)
        if size < tol:
            return VectorField(grid, total)
        if size >= previous:
            raise ContractionError("Neumann series terms stopped decreasing")
        previous = size
    raise ContractionError(f"Neumann series did not reach tol={tol} in {max_terms} terms")


def bilinear_b(params: RegimeParams, zeta: ScalarField, grad_psi1: VectorField) -> VectorField:
    """First-order (in ``eps2``) correction of the interface operator.

    ``B(zeta, W) = sqrt(mu2) |D|/tanh(sqrt(mu2)|D|) Pi[zeta (1 + T/T2) W]
    + sqrt(mu2) grad[(1 + T/T2)(zeta T0 div W)]`` where ``T = tanh(sqrt(mu)|D|)``
    and ``T2 = tanh(sqrt(mu2)|D|)``.
    """
    grid = zeta.grid
    rmu2 = math.sqrt(params.mu2)
    one_plus_ratio = 1.0 + tanh_ratio_symbol(grid, params)
    # first term
    w1 = apply_symbol(grad_psi1, one_plus_ratio)
    w1 = projector_pi(product_dealiased(zeta, w1))
    term1 = apply_symbol(w1, rmu2 * coth_symbol(grid, params.mu2))
    # second term
    lap_part = apply_symbol(ScalarField(grid, divergence_array(grid, grad_psi1.values)),
                            t0_symbol(grid, params.mu))
    inner = apply_symbol(product_dealiased(zeta, lap_part), one_plus_ratio)
    term2 = VectorField(grid, rmu2 * gradient_array(grid, inner.values))
    return term1 + term2


# ---------------------------------------------------------------------------
# Expansions of the vertically integrated velocity
# ---------------------------------------------------------------------------

def expand_v_small_amplitude(params: RegimeParams, zeta: ScalarField,
                             grad_psi: VectorField) -> VectorField:
    """``T0 grad psi + eps sqrt(mu) (-zeta grad psi + T1[zeta] grad psi)``."""
    grid = zeta.grid
    lead = apply_symbol(grad_psi, t0_symbol(grid, params.mu))
    corr = -product_dealiased(zeta, grad_psi) + t1_mu(params.mu, zeta, grad_psi)
    return lead + corr * (params.eps * math.sqrt(params.mu))


def expand_v_shallow(params: RegimeParams, zeta: ScalarField, grad_psi: VectorField,
                     order: int = 1) -> VectorField:
    """Shallow-water expansion of ``sqrt(mu) V``.

    ``order=1``: ``mu (1 - eps zeta) grad psi``.
    ``order=2``: adds ``mu^2/3 Lap grad psi``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    out = _upper_depth_times(params, zeta, grad_psi) * params.mu
    if order == 2:
        out = out + apply_symbol(grad_psi, -zeta.grid.k2) * (params.mu**2 / 3.0)
    return out


# ---------------------------------------------------------------------------
# Expansions of the interface operator
# ---------------------------------------------------------------------------

H_REGIMES = ("FDFD", "BFD", "BB", "SWSW", "SWSA", "ILW", "BO")


def _upper_depth_times(params: RegimeParams, zeta: ScalarField, field):
    """``(1 - eps zeta) field``; only the quadratic part goes through the de-aliasing mask."""
    return field - product_dealiased(zeta, field) * params.eps


def expand_h(regime: str, params: RegimeParams, zeta: ScalarField,
             grad_psi1: VectorField) -> VectorField:
    """Regime-specific approximation of ``grad psi2`` in terms of ``grad psi1``.

    ``regime`` is one of ``FDFD, BFD, BB, SWSW, SWSA, ILW, BO``.
    """
    regime = regime.upper()
    grid = zeta.grid
    p = params
    rmu = math.sqrt(p.mu)
    if regime == "FDFD":
        lead = apply_symbol(grad_psi1, -tanh_ratio_symbol(grid, p))
        return lead + bilinear_b(p, zeta, grad_psi1) * p.eps2
    if regime == "BFD":
        lap = apply_symbol(grad_psi1, -grid.k2)
        inner = -grad_psi1 - lap * (p.mu / 3.0) + projector_pi(product_dealiased(zeta, grad_psi1)) * p.eps
        return apply_symbol(inner, rmu * coth_symbol(grid, p.mu2))
    if regime == "BB":
        lap = apply_symbol(grad_psi1, -grid.k2)
        nonlin = projector_pi(product_dealiased(zeta, grad_psi1))
        return (grad_psi1 * (-p.delta)
                - lap * (p.delta / 3.0 * p.mu * (1.0 - 1.0 / p.delta**2))
                + nonlin * (p.eps2 * (1.0 + p.delta)))
    if regime == "SWSW":
        return q_frak(zeta * p.eps2, _upper_depth_times(p, zeta, grad_psi1)) * (-p.delta)
    if regime == "SWSA":
        inner = projector_pi(_upper_depth_times(p, zeta, grad_psi1))
        return apply_symbol(inner, -rmu * coth_symbol(grid, p.mu2))
    if regime == "ILW":
        return apply_symbol(grad_psi1, -rmu * coth_symbol(grid, p.mu2))
    if regime == "BO":
        return apply_symbol(grad_psi1, -rmu * grid.kabs)
    raise ValueError(f"unknown regime {regime!r}; expected one of {H_REGIMES}")
