"""
Stationary Solver
Solves the discrete p-Laplace Dirichlet problem

    -Delta_p u* = 0 in the interior,   u* = g on the boundary

by minimising the discrete Dirichlet energy directly: diagonally
preconditioned gradient descent with Armijo backtracking, started from the
boundary interpolant of g.
"""

import logging
from dataclasses import dataclass

import numpy as np

from energy import dirichlet_energy_values
from grid import Field, interpolate_boundary, require_same_grid
from operators import cell_gradient, energy_gradient_values, require_exponent, require_on_grid

logger = logging.getLogger(__name__)

# ── Configuration ─────────────────────────────────────────────────────────────
PRECONDITIONER_EPS = 1e-12
ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60
# Float round-off of a stored u*; the numerical floor never drops below this.
ROUNDOFF_FLOOR = 1e-12
FLOOR_FACTOR = 10.0
LOG_EVERY = 5000


class StationaryNotConverged(RuntimeError):
    """max_iter reached (or the line search stalled) above the requested tolerance."""

    def __init__(self, result, tol):
        super().__init__(
            f"stationary solve stopped after {result.iterations} iterations "
            f"with residual {result.residual:.3e} > tol {tol:.1e}"
        )
        self.result = result
        self.tol = tol


class BoundaryMismatchError(ValueError):
    """Competitor does not share the boundary values of u*."""


@dataclass(frozen=True, eq=False)
class StationaryResult:
    u_star: Field
    residual: float
    iterations: int
    energy: float
    converged: bool = True

    @property
    def floor(self):
        """Level below which measured errors reflect solver accuracy, not dynamics."""
        return FLOOR_FACTOR * max(self.residual, ROUNDOFF_FLOOR)

    def metadata(self, p, tol):
        return {
            "p": float(p),
            "tol": float(tol),
            "residual": self.residual,
            "iterations": self.iterations,
            "energy": self.energy,
            "converged": self.converged,
        }


def energy_gradient(grid, u, p):
    """dE_h/du_i at interior nodes, 0 on the boundary (= -weight * p_laplacian)."""
    p = require_exponent(p)
    require_on_grid(grid, u)
    return Field(grid, energy_gradient_values(grid, u.values, p))


def _diagonal(grid, values, p):
    """(p-1) |grad u|^{p-2} averaged to nodes, plus eps, times the stencil diagonal."""
    cells = np.sqrt(np.sum(cell_gradient(grid, values) ** 2, axis=-1))
    coefficient = (p - 1.0) * cells ** (p - 2.0)
    nodal = np.zeros(grid.shape)
    if grid.dim == 1:
        (h,) = grid.spacing
        nodal[1:-1] = 0.5 * (coefficient[:-1] + coefficient[1:])
        stencil = 2.0 / h ** 2
    else:
        h1, h2 = grid.spacing
        nodal[1:-1, 1:-1] = 0.25 * (
            coefficient[:-1, :-1] + coefficient[1:, :-1] + coefficient[:-1, 1:] + coefficient[1:, 1:]
        )
        stencil = 1.0 / h1 ** 2 + 1.0 / h2 ** 2
    return grid.cell_weight * stencil * (nodal + PRECONDITIONER_EPS)


def solve_stationary(grid, g, p, tol=1e-10, max_iter=200000):
    """
    Minimise the discrete Dirichlet energy with boundary values g.

    Args:
        grid (Grid): the discretised domain
        g (Field): boundary data (interior values are ignored)
        p (float): exponent >= 2
        tol (float): target max-norm of the interior energy gradient
        max_iter (int): iteration budget

    Returns:
        StationaryResult

    Raises:
        StationaryNotConverged: carrying the best iterate when tol is not reached
    """
    p = require_exponent(p)
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol:g}")
    require_on_grid(grid, g)

    interior = grid.interior_mask
    u = np.array(interpolate_boundary(g).values)
    energy = dirichlet_energy_values(grid, u, p)
    grad = energy_gradient_values(grid, u, p)
    residual = float(np.max(np.abs(grad)))
    iterations = 0

    while residual > tol and iterations < max_iter:
        direction = np.zeros_like(u)
        direction[interior] = -grad[interior] / _diagonal(grid, u, p)[interior]
        slope = float(np.sum(grad * direction))
        slack = 1e-15 * (1.0 + abs(energy))

        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = u + step * direction
            trial_energy = dirichlet_energy_values(grid, trial, p)
            if trial_energy <= energy + ARMIJO_C1 * step * slope + slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.debug("⚠️  line search stalled at residual %.3e", residual)
            break

        u, energy = trial, trial_energy
        grad = energy_gradient_values(grid, u, p)
        residual = float(np.max(np.abs(grad)))
        iterations += 1
        if iterations % LOG_EVERY == 0:
            logger.debug("   iter %d: energy %.12e residual %.3e", iterations, energy, residual)

    result = StationaryResult(
        u_star=Field(grid, u),
        residual=residual,
        iterations=iterations,
        energy=energy,
        converged=residual <= tol,
    )
    if not result.converged:
        raise StationaryNotConverged(result, tol)
    logger.debug("✅ stationary solve: %d iterations, residual %.3e", iterations, residual)
    return result


def minimality_gap(grid, u_star, v, p):
    """E(v) - E(u*) for an admissible competitor v (same boundary values)."""
    p = require_exponent(p)
    require_same_grid(u_star, v)
    require_on_grid(grid, u_star)
    mask = grid.boundary_mask
    scale = 1e-12 * (1.0 + float(np.max(np.abs(u_star.values))))
    if np.max(np.abs(v.values[mask] - u_star.values[mask])) > scale:
        raise BoundaryMismatchError("competitor must share the boundary values of u*")
    return dirichlet_energy_values(grid, v.values, p) - dirichlet_energy_values(grid, u_star.values, p)
