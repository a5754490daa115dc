"""Model parameters, double-well potentials, energies and mass ledgers.

The free energy splits into a bulk part (quartic well F plus Dirichlet
energy over the square) and a surface part (quartic well G plus Dirichlet
energy over the perimeter loop).  The modified energy augments the total
by kinetic-like terms built from inverse Laplacians of the rate fields;
it is the quantity the hyperbolic relaxation dissipates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from . import operators as ops
from .grid import Grid

if TYPE_CHECKING:  # pragma: no cover
    from .scheme import State


@dataclass(frozen=True)
class ModelParams:
    """Physical and scheme parameters.

    M1, M2 are the bulk/surface mobilities, beta1, beta2 the hyperbolic
    relaxation coefficients, eps and delta the interface widths of the
    bulk and surface wells, s1, s2 the linear stabilizers and tau the time
    step.
    """

    M1: float = 0.001
    M2: float = 0.001
    beta1: float = 0.0
    beta2: float = 0.0
    eps: float = 0.02
    delta: float = 0.02
    s1: float = 5000.0
    s2: float = 5000.0
    tau: float = 1e-4

    def __post_init__(self):
        for name in ("M1", "M2", "eps", "delta", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("beta1", "beta2", "s1", "s2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")

    @classmethod
    def with_defaults(cls, h: float, **overrides) -> "ModelParams":
        """Default parameters tied to the mesh width: eps = delta = 2h and
        stabilizers 2/eps^2, 2/delta^2 unless overridden."""
        eps = overrides.pop("eps", 2.0 * h)
        delta = overrides.pop("delta", 2.0 * h)
        s1 = overrides.pop("s1", 2.0 / eps**2)
        s2 = overrides.pop("s2", 2.0 / delta**2)
        return cls(eps=eps, delta=delta, s1=s1, s2=s2, **overrides)


# ---- potentials --------------------------------------------------------


def F_val(phi, eps: float):
    """Bulk double-well potential (phi^2 - 1)^2 / (4 eps^2)."""
    phi = np.asarray(phi, dtype=float)
    return (phi * phi - 1.0) ** 2 / (4.0 * eps * eps)


def f_val(phi, eps: float):
    """Derivative of F: (phi^3 - phi) / eps^2."""
    phi = np.asarray(phi, dtype=float)
    return (phi**3 - phi) / (eps * eps)


def G_val(psi, delta: float):
    """Surface double-well potential (psi^2 - 1)^2 / (4 delta^2)."""
    psi = np.asarray(psi, dtype=float)
    return (psi * psi - 1.0) ** 2 / (4.0 * delta * delta)


def g_val(psi, delta: float):
    """Derivative of G: (psi^3 - psi) / delta^2."""
    psi = np.asarray(psi, dtype=float)
    return (psi**3 - psi) / (delta * delta)


# ---- quadratures and masses -------------------------------------------


@lru_cache(maxsize=8)
def _bulk_weights(n: int) -> np.ndarray:
    """Conservation-compatible quadrature weights on the interior grid.

    One-dimensional weights h*(3/2, 1, ..., 1, 3/2) per direction, so the
    total weight is exactly 1.  This is the unique interior quadrature
    whose weighted sum of the coupled scheme's bulk update telescopes
    against the one-sided Neumann closure rows, making the bulk mass an
    exact invariant of the discretization (up to solver tolerance).
    """
    h = 1.0 / n
    u = np.ones(n - 1)
    u[0] = u[-1] = 1.5
    w = h * h * np.outer(u, u).ravel()
    w.setflags(write=False)
    return w


def bulk_quadrature_weights(grid: Grid) -> np.ndarray:
    """Per-node weights of the conserved bulk-mass quadrature."""
    return _bulk_weights(grid.n)


def bulk_mass(phi: np.ndarray, grid: Grid) -> float:
    """Quadrature of the bulk order parameter over the square.

    Bulk and surface masses are separately conserved quantities of the
    model (no mass exchange across the boundary), so the bulk ledger is a
    functional of the interior values alone; see bulk_quadrature_weights.
    """
    phi = ops._check_bulk(phi, grid)
    return float(_bulk_weights(grid.n) @ phi)


def surface_mass(psi: np.ndarray, grid: Grid) -> float:
    """h * sum of the loop values (rectangle rule on the closed chain)."""
    psi = ops._check_loop(psi, grid)
    return grid.h * float(psi.sum())


@lru_cache(maxsize=8)
def _trapezoid_weights(n: int) -> np.ndarray:
    """Full-grid trapezoid weights: 1 interior, 1/2 edges, 1/4 corners."""
    w = np.ones((n + 1, n + 1))
    w[0, :] *= 0.5
    w[-1, :] *= 0.5
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    w.setflags(write=False)
    return w


def total_energy(
    phi: np.ndarray, psi: np.ndarray, grid: Grid, params: ModelParams
) -> tuple[float, float, float]:
    """Bulk, surface and total free energies.

    The potential terms use the full-grid trapezoid rule (boundary values
    from psi), matching the edge-based gradient quadratures.
    """
    full = ops.to_full_grid(phi, psi, grid)
    h = grid.h
    e_bulk = h * h * float((_trapezoid_weights(grid.n) * F_val(full, params.eps)).sum())
    e_bulk += ops.dirichlet_energy_bulk(phi, psi, grid)
    e_surf = h * float(G_val(psi, params.delta).sum())
    e_surf += ops.dirichlet_energy_loop(psi, grid)
    return e_bulk, e_surf, e_bulk + e_surf


def modified_energy(state: "State", grid: Grid, params: ModelParams, tol: float = 1e-10) -> float:
    """Total energy plus the hyperbolic kinetic terms.

    Adds (beta1/2M1)*|grad inv-lap Phi|^2 and (beta2/2M2)*|grad-loop
    inv-lap Psi|^2, with the inverse Laplacians from the zero-mean Poisson
    solves.  Reduces exactly to the total energy when beta1 = beta2 = 0.
    """
    _, _, e_total = total_energy(state.phi, state.psi, grid, params)
    e = e_total
    if params.beta1 > 0.0:
        p = ops.solve_poisson_neumann_zeromean(state.Phi, grid, tol)
        e += params.beta1 / (2.0 * params.M1) * ops.grad_norm_sq_interior(p, grid)
    if params.beta2 > 0.0:
        q = ops.solve_poisson_loop_zeromean(state.Psi, grid, tol)
        e += params.beta2 / (2.0 * params.M2) * ops.grad_norm_sq_loop(q, grid)
    return e
