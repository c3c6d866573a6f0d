"""Reference solver for the two-layer elliptic problems.

Both fluid layers are mapped onto the flat strip ``-1 <= s <= 0`` and the
resulting variable-coefficient problem ``div_mu (M grad_mu u) = 0`` (with
``grad_mu = (sqrt(mu) grad_X, d_s)``) is discretised with Fourier
collocation in ``X`` and Chebyshev-Gauss-Lobatto collocation in ``s``.  The
dense collocation operator is applied matrix-free and inverted by GMRES,
left-preconditioned with the exact inverse of the horizontally averaged
(constant coefficient) operator, which is block diagonal in Fourier space.

Upper layer ``-1 + eps*zeta < z < 0`` with ``z = h1 * s``::

    M = [[h1 I,                 sqrt(mu) eps s grad zeta],
         [sqrt(mu) eps s grad zeta^T, (1 + mu eps^2 s^2 |grad zeta|^2)/h1]]

    u = psi1 at s = -1,   conormal flux 0 at s = 0.

The conormal flux at ``s = -1`` is the Dirichlet-Neumann operator ``G`` and
the integral of the horizontal flux over the strip is the integrated
velocity ``V``.

Lower layer, rescaled to unit depth and flattened with ``h2 = 1 + eps2*zeta``::

    M = [[h2 I,                           -sqrt(mu2) eps2 (s+1) grad zeta],
         [-sqrt(mu2) eps2 (s+1) grad zeta^T, (1 + mu2 eps2^2 (s+1)^2 |grad zeta|^2)/h2]]

    conormal flux G/delta at s = 0,   0 at s = -1,   zero-mean gauge.

The interface operator is the gradient of the upper trace, ``H = grad u(s=0)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .operators import RegimeParams, t0_symbol, tanh_ratio_symbol
from .spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    apply_symbol,
    divergence_array,
    gradient_array,
    write_binary_array,
)

log = logging.getLogger(__name__)

DEFAULT_LEVELS = {1: 32, 2: 24}
COMPATIBILITY_THRESHOLD = 1e-8


class OracleError(RuntimeError):
    """The strip solve failed to converge."""


def chebyshev_nodes(n: int) -> np.ndarray:
    """Gauss-Lobatto nodes ``cos(pi j / n)``, ``j = 0..n`` (descending)."""
    return np.cos(np.pi * np.arange(n + 1) / n)


def chebyshev_matrix(n: int) -> np.ndarray:
    """Collocation derivative matrix on the Gauss-Lobatto nodes of [-1, 1]."""
    x = chebyshev_nodes(n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    return d - np.diag(d.sum(axis=1))


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on the Gauss-Lobatto nodes of [-1, 1]."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2.0 * v / n
    return w


@dataclass(frozen=True)
class StripGrid:
    """Horizontal periodic grid times ``nz + 1`` Chebyshev levels on ``[-1, 0]``.

    Level 0 is the top ``s = 0`` and level ``nz`` the bottom ``s = -1``.  An even
    ``nz`` makes the discrete Neumann problem exactly compatible.
    """

    horizontal: SpectralGrid
    nz: int

    def __post_init__(self):
        if self.nz < 8 or self.nz % 2:
            raise ValueError(f"nz must be even and >= 8, got {self.nz}")

    @property
    def levels(self) -> int:
        return self.nz + 1

    @cached_property
    def s(self) -> np.ndarray:
        return 0.5 * (chebyshev_nodes(self.nz) - 1.0)

    @cached_property
    def ds(self) -> np.ndarray:
        return 2.0 * chebyshev_matrix(self.nz)

    @cached_property
    def weights(self) -> np.ndarray:
        return 0.5 * clenshaw_curtis_weights(self.nz)


def default_strip(grid: SpectralGrid, nz: int | None = None) -> StripGrid:
    return StripGrid(grid, DEFAULT_LEVELS[grid.dim] if nz is None else nz)


@dataclass
class OracleSolution:
    """Result of one strip solve."""

    phi: np.ndarray                  # (levels, *points) potential on the flat strip
    trace_grad: VectorField          # horizontal gradient of the trace at the data boundary
    neumann_data: ScalarField        # conormal flux on the interface side
    residual_norm: float             # preconditioned relative residual
    iterations: int = 0
    compatibility_defect: float = 0.0
    strip: StripGrid | None = None
    horizontal_flux: np.ndarray | None = field(default=None, repr=False)

    def write(self, path: str | Path, metadata: dict | None = None) -> None:
        """Binary dump of ``phi`` (levels as components) plus a JSON sidecar."""
        path = Path(path)
        write_binary_array(path, self.strip.horizontal, self.phi)
        meta = {
            "levels": self.strip.levels,
            "s_nodes": self.strip.s.tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "compatibility_defect": self.compatibility_defect,
        }
        meta.update(metadata or {})
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


# ---------------------------------------------------------------------------
# Generic strip solver
# ---------------------------------------------------------------------------

@dataclass
class _StripProblem:
    strip: StripGrid
    sqrt_mu: float
    hxx: np.ndarray          # (*points)
    mxs: np.ndarray          # (dim, levels, *points)
    mss: np.ndarray          # (levels, *points)
    top: str                 # "dirichlet" | "neumann"
    bottom: str
    gauge: bool = False

    @property
    def grid(self) -> SpectralGrid:
        return self.strip.horizontal

    def _strip_nyquist(self, u: np.ndarray) -> tuple:
        grid = self.grid
        coeffs = grid.fft(u)
        nyq = np.where(grid.nyquist, coeffs, 0.0)
        return grid.ifft(coeffs - nyq), grid.ifft(nyq)

    def fluxes(self, u: np.ndarray) -> tuple:
        ds = self.strip.ds
        us = np.tensordot(ds, u, axes=(1, 0))
        gx = self.sqrt_mu * gradient_array(self.grid, u)
        fx = self.hxx * gx + self.mxs * us[None]
        fs = np.sum(self.mxs * gx, axis=0) + self.mss * us
        return fx, fs

    def apply(self, u: np.ndarray) -> np.ndarray:
        smooth, nyq = self._strip_nyquist(u)
        fx, fs = self.fluxes(smooth)
        r = self.sqrt_mu * divergence_array(self.grid, fx) + np.tensordot(self.strip.ds, fs, axes=(1, 0))
        r[0] = fs[0] if self.top == "neumann" else smooth[0]
        r[-1] = fs[-1] if self.bottom == "neumann" else smooth[-1]
        if self.gauge:
            w = self.strip.weights
            r[-1] += -np.mean(r[-1]) + np.dot(w, np.mean(smooth.reshape(smooth.shape[0], -1), axis=1))
        r, _ = self._strip_nyquist(r)
        return r + nyq

    @cached_property
    def _blocks(self) -> np.ndarray:
        """Inverses of the averaged operator, one block per half-spectrum mode."""
        strip, grid = self.strip, self.grid
        n = strip.levels
        ds = strip.ds
        hbar = float(np.mean(self.hxx))
        axes = tuple(range(1, self.mss.ndim))
        mbar = np.mean(self.mss, axis=axes)
        base = ds @ (mbar[:, None] * ds)
        k2 = (self.sqrt_mu**2) * grid.k2.ravel()
        nyq = grid.nyquist.ravel()
        zero = grid.zero_mode.ravel()
        blocks = np.empty((k2.size, n, n))
        eye = np.eye(n)
        for idx, kk in enumerate(k2):
            if nyq[idx]:
                blocks[idx] = eye
                continue
            a = base - kk * hbar * eye
            a[0] = mbar[0] * ds[0] if self.top == "neumann" else eye[0]
            a[-1] = mbar[-1] * ds[-1] if self.bottom == "neumann" else eye[-1]
            if self.gauge and zero[idx]:
                a[-1] = strip.weights
            blocks[idx] = np.linalg.inv(a)
        return blocks

    def precondition(self, r: np.ndarray) -> np.ndarray:
        grid = self.grid
        coeffs = grid.fft(r)
        n = r.shape[0]
        flat = coeffs.reshape(n, -1)
        out = np.einsum("mij,jm->im", self._blocks, flat)
        return grid.ifft(out.reshape(coeffs.shape))

    def solve(self, rhs: np.ndarray, tol: float = 1e-13, maxiter: int = 400) -> tuple:
        shape = rhs.shape
        size = rhs.size
        rhs, _ = self._strip_nyquist(rhs)
        op = LinearOperator((size, size), dtype=float,
                            matvec=lambda x: self.precondition(self.apply(x.reshape(shape))).ravel())
        b = self.precondition(rhs).ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros(shape), 0.0, 0
        count = [0]

        def _count(_):
            count[0] += 1

        x, info = gmres(op, b, rtol=tol, atol=0.0, restart=80, maxiter=maxiter,
                        callback=_count, callback_type="pr_norm")
        resid = float(np.linalg.norm(op.matvec(x) - b) / bnorm)
        if info != 0 and resid > 100 * tol:
            raise OracleError(f"strip solve did not converge (info={info}, residual={resid:.2e})")
        return x.reshape(shape), resid, count[0]


# ---------------------------------------------------------------------------
# Layer problems
# ---------------------------------------------------------------------------

def _check_inputs(params: RegimeParams, zeta: ScalarField, psi1: ScalarField):
    if zeta.grid != psi1.grid:
        raise ValueError("zeta and psi1 live on different grids")
    h1 = 1 - params.eps * zeta.values
    h2 = 1 + params.eps2 * zeta.values
    if np.min(h1) <= 0 or np.min(h2) <= 0:
        raise ValueError("a layer depth is non-positive; the strip map is singular")


def solve_upper(params: RegimeParams, zeta: ScalarField, psi1: ScalarField,
                strip: StripGrid | None = None, tol: float = 1e-13) -> OracleSolution:
    """Potential of the upper layer with Dirichlet data ``psi1`` at the interface."""
    _check_inputs(params, zeta, psi1)
    grid = zeta.grid
    strip = strip or default_strip(grid)
    eps, rmu = params.eps, math.sqrt(params.mu)
    s = strip.s.reshape((-1,) + (1,) * grid.dim)
    gz = gradient_array(grid, zeta.values)
    h1 = 1 - eps * zeta.values
    mxs = rmu * eps * s[None] * gz[:, None]
    mss = (1 + params.mu * eps**2 * s**2 * np.sum(gz**2, axis=0)[None]) / h1[None]
    problem = _StripProblem(strip, rmu, h1, mxs, mss, top="neumann", bottom="dirichlet")
    rhs = np.zeros((strip.levels,) + grid.shape)
    rhs[-1] = psi1.values
    phi, resid, its = problem.solve(rhs, tol)
    fx, fs = problem.fluxes(phi)
    return OracleSolution(
        phi=phi,
        trace_grad=VectorField(grid, gradient_array(grid, phi[-1])),
        neumann_data=ScalarField(grid, fs[-1]),
        residual_norm=resid,
        iterations=its,
        strip=strip,
        horizontal_flux=fx,
    )


def solve_lower(params: RegimeParams, zeta: ScalarField, g: ScalarField,
                strip: StripGrid | None = None, tol: float = 1e-13) -> OracleSolution:
    """Potential of the lower layer with conormal flux ``g / delta`` at the interface."""
    grid = zeta.grid
    strip = strip or default_strip(grid)
    eps2, rmu2 = params.eps2, math.sqrt(params.mu2)
    s1 = (strip.s + 1.0).reshape((-1,) + (1,) * grid.dim)
    gz = gradient_array(grid, zeta.values)
    h2 = 1 + eps2 * zeta.values
    mxs = -rmu2 * eps2 * s1[None] * gz[:, None]
    mss = (1 + params.mu2 * eps2**2 * s1**2 * np.sum(gz**2, axis=0)[None]) / h2[None]
    problem = _StripProblem(strip, rmu2, h2, mxs, mss, top="neumann", bottom="neumann", gauge=True)
    data = g.values / params.delta
    mean = float(np.mean(data))
    scale = float(np.sqrt(np.mean(data**2)))
    defect = abs(mean) / scale if scale > 0 else 0.0
    if defect > COMPATIBILITY_THRESHOLD:
        log.warning("Neumann data mean is %.2e of its norm; upstream G may be inaccurate", defect)
    rhs = np.zeros((strip.levels,) + grid.shape)
    rhs[0] = data - mean
    phi, resid, its = problem.solve(rhs, tol)
    return OracleSolution(
        phi=phi,
        trace_grad=VectorField(grid, gradient_array(grid, phi[0])),
        neumann_data=ScalarField(grid, data - mean),
        residual_norm=resid,
        iterations=its,
        compatibility_defect=defect,
        strip=strip,
    )


@dataclass
class OracleEvaluation:
    """All interface quantities derived from one pair of strip solves."""

    params: RegimeParams
    zeta: ScalarField
    psi1: ScalarField
    g: ScalarField          # G^mu[eps zeta] psi1
    v: VectorField          # vertically integrated upper velocity
    h: VectorField          # interface operator, grad psi2
    upper: OracleSolution
    lower: OracleSolution


def evaluate_oracle(params: RegimeParams, zeta: ScalarField, psi1: ScalarField,
                    strip: StripGrid | None = None, tol: float = 1e-13) -> OracleEvaluation:
    upper = solve_upper(params, zeta, psi1, strip, tol)
    g = upper.neumann_data
    strip = upper.strip
    v = VectorField(zeta.grid, np.tensordot(strip.weights, upper.horizontal_flux, axes=(0, 1)))
    lower = solve_lower(params, zeta, g, strip, tol)
    return OracleEvaluation(params, zeta, psi1, g, v, lower.trace_grad, upper, lower)


def oracle_g(params, zeta, psi1, strip=None) -> ScalarField:
    """Dirichlet-Neumann operator ``G^mu[eps zeta] psi1`` of the upper layer."""
    return solve_upper(params, zeta, psi1, strip).neumann_data


def oracle_v(params, zeta, psi1, strip=None) -> VectorField:
    """Vertically integrated horizontal velocity of the upper layer."""
    upper = solve_upper(params, zeta, psi1, strip)
    return VectorField(zeta.grid, np.tensordot(upper.strip.weights, upper.horizontal_flux, axes=(0, 1)))


def oracle_h(params, zeta, psi1, strip=None) -> VectorField:
    """Interface operator ``H psi1 = grad psi2``."""
    return evaluate_oracle(params, zeta, psi1, strip).h


# ---------------------------------------------------------------------------
# Full system
# ---------------------------------------------------------------------------

def nonlinear_n(params: RegimeParams, zeta: ScalarField, psi1: ScalarField,
                evaluation: OracleEvaluation | None = None) -> ScalarField:
    """Quadratic surface term evaluated at the interface elevation ``eps*zeta``."""
    ev = evaluation or evaluate_oracle(params, zeta, psi1)
    grid = zeta.grid
    mu, eps = params.mu, params.eps
    gz = eps * gradient_array(grid, zeta.values)
    gpsi = gradient_array(grid, psi1.values)
    w = ev.g.values / mu
    upper = w + np.sum(gz * gpsi, axis=0)
    lower = w + np.sum(gz * ev.h.values, axis=0)
    out = mu * (params.gamma * upper**2 - lower**2) / (2 * (1 + mu * np.sum(gz**2, axis=0)))
    return ScalarField(grid, out)


def v_from_psi(params: RegimeParams, zeta: ScalarField, psi1: ScalarField,
               evaluation: OracleEvaluation | None = None) -> VectorField:
    """Shear velocity ``v = H psi1 - gamma grad psi1``."""
    ev = evaluation or evaluate_oracle(params, zeta, psi1)
    return ev.h - VectorField(zeta.grid, gradient_array(zeta.grid, psi1.values)) * params.gamma


def full_rhs(params: RegimeParams, zeta: ScalarField, psi1: ScalarField,
             evaluation: OracleEvaluation | None = None) -> tuple:
    """Time derivatives ``(zeta_t, v_t)`` of the full two-layer system."""
    ev = evaluation or evaluate_oracle(params, zeta, psi1)
    grid = zeta.grid
    eps = params.eps
    zeta_t = ev.g / params.mu
    gpsi = gradient_array(grid, psi1.values)
    bern = np.sum(ev.h.values**2, axis=0) - params.gamma * np.sum(gpsi**2, axis=0)
    nn = nonlinear_n(params, zeta, psi1, ev)
    potential = (1 - params.gamma) * zeta.values + 0.5 * eps * bern + eps * nn.values
    v_t = VectorField(grid, -gradient_array(grid, potential))
    return zeta_t, v_t


# ---------------------------------------------------------------------------
# Flat-interface closed forms
# ---------------------------------------------------------------------------

def flat_g(params: RegimeParams, psi1: ScalarField) -> ScalarField:
    """``-sqrt(mu)|D| tanh(sqrt(mu)|D|) psi1``."""
    grid = psi1.grid
    return apply_symbol(psi1, -math.sqrt(params.mu) * grid.kabs * np.tanh(math.sqrt(params.mu) * grid.kabs))


def flat_h(params: RegimeParams, psi1: ScalarField) -> VectorField:
    """``-tanh(sqrt(mu)|D|)/tanh(sqrt(mu2)|D|) grad psi1``."""
    grid = psi1.grid
    gpsi = VectorField(grid, gradient_array(grid, psi1.values))
    return apply_symbol(gpsi, -tanh_ratio_symbol(grid, params))


def flat_v(params: RegimeParams, psi1: ScalarField) -> VectorField:
    """``T0 grad psi1``."""
    grid = psi1.grid
    gpsi = VectorField(grid, gradient_array(grid, psi1.values))
    return apply_symbol(gpsi, t0_symbol(grid, params.mu))
