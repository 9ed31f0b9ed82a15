"""
Operators Module
Discrete gradient, p-Laplacian and norms on a Grid, plus the vector
inequalities used by the decay argument as computable gap functions.

The discrete p-Laplacian is the negative gradient of the discrete Dirichlet
energy divided by the interior quadrature weight, so the energy identities
hold exactly on the grid:

    E_h(u) = (1/p) * sum_cells  w_c |grad_c u|^p
    p_laplacian(u)_i = -(dE_h/du_i) / w_i      (interior nodes, 0 on the boundary)

1D gradients live on edges (forward differences). 2D gradients live on cells,
each component the average of the two parallel edge differences of the cell.
"""

from collections import namedtuple
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from grid import Field, GridMismatchError


def require_exponent(p, minimum=2.0):
    """Validate an exponent; the lab only covers the degenerate range p >= 2."""
    p = float(p)
    if not np.isfinite(p) or p < minimum:
        raise ValueError(f"exponent p must be >= {minimum:g}, got {p:g}")
    return p


# ── Gradient ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class GradientField:
    grid: object
    vectors: np.ndarray = dataclass_field(repr=False)

    def __post_init__(self):
        expected = self.grid.cell_shape + (self.grid.dim,)
        vectors = np.array(self.vectors, dtype=float)
        if vectors.shape != expected:
            raise ValueError(f"gradient field shape {vectors.shape} does not match grid cells {expected}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def magnitude(self):
        return np.sqrt(np.sum(self.vectors ** 2, axis=-1))


def cell_gradient(grid, values):
    """Raw gradient array of shape cell_shape + (dim,)."""
    if grid.dim == 1:
        (h,) = grid.spacing
        return (np.diff(values) / h)[:, None]
    h1, h2 = grid.spacing
    dx = np.diff(values, axis=0)
    dy = np.diff(values, axis=1)
    gx = (dx[:, :-1] + dx[:, 1:]) / (2.0 * h1)
    gy = (dy[:-1, :] + dy[1:, :]) / (2.0 * h2)
    return np.stack((gx, gy), axis=-1)


def gradient(grid, u):
    require_on_grid(grid, u)
    return GradientField(grid, cell_gradient(grid, u.values))


def require_on_grid(grid, *fields):
    for f in fields:
        if f.grid != grid:
            raise GridMismatchError(
                f"field grid {f.grid.descriptor()} does not match {grid.descriptor()}"
            )


# ── p-Laplacian ────────────────────────────────────────────────────────────────

def _flux(values, p):
    """|g|^{p-2} g per gradient location, with |g|."""
    magnitude = np.sqrt(np.sum(values ** 2, axis=-1))
    if p == 2.0:
        return values, magnitude
    return magnitude[..., None] ** (p - 2.0) * values, magnitude


def energy_and_gradient_values(grid, values, p):
    """(E_h(u), dE_h/du) from one pass over the gradients; dE_h/du is 0 on the boundary."""
    out = np.zeros_like(values)
    if grid.dim == 1:
        (h,) = grid.spacing
        slope = np.diff(values) / h
        magnitude = np.abs(slope)
        flux = slope if p == 2.0 else magnitude ** (p - 2.0) * slope
        out[1:-1] = flux[:-1] - flux[1:]
    else:
        h1, h2 = grid.spacing
        flux, magnitude = _flux(cell_gradient(grid, values), p)
        a = 0.5 * h2 * flux[..., 0]
        b = 0.5 * h1 * flux[..., 1]
        out[:-1, :-1] += -a - b
        out[1:, :-1] += a - b
        out[:-1, 1:] += -a + b
        out[1:, 1:] += a + b
        out[grid.boundary_mask] = 0.0
    energy = float(grid.cell_weight * np.sum(magnitude ** p) / p)
    return energy, out


def energy_gradient_values(grid, values, p):
    """dE_h/du_i at interior nodes (0 on the boundary) as a raw array."""
    return energy_and_gradient_values(grid, values, p)[1]


def laplacian_values(grid, values, p):
    """Raw-array p-Laplacian: -dE_h/du / interior weight, boundary 0."""
    return -energy_gradient_values(grid, values, p) / grid.cell_weight


def p_laplacian(grid, u, p):
    """
    Discrete Delta_p u at interior nodes (boundary entries are 0).

    For p = 2 in 1D this is the three-point stencil (u[i-1] - 2u[i] + u[i+1]) / h^2.
    """
    p = require_exponent(p)
    require_on_grid(grid, u)
    return Field(grid, laplacian_values(grid, u.values, p))


# ── Norms ──────────────────────────────────────────────────────────────────────

def lp_norm(grid, u, p):
    """Trapezoid-weighted (sum w_i |u_i|^p)^(1/p)."""
    p = require_exponent(p, minimum=1.0)
    require_on_grid(grid, u)
    return float(np.sum(grid.node_weights * np.abs(u.values) ** p) ** (1.0 / p))


def w1p_seminorm_values(grid, values, p):
    magnitude = np.sqrt(np.sum(cell_gradient(grid, values) ** 2, axis=-1))
    return float((grid.cell_weight * np.sum(magnitude ** p)) ** (1.0 / p))


def w1p_seminorm(grid, u, p):
    """||grad u||_{L^p}; a norm on zero-trace differences such as u - u*."""
    p = require_exponent(p)
    require_on_grid(grid, u)
    return w1p_seminorm_values(grid, u.values, p)


def sup_norm(u):
    return float(np.max(np.abs(u.values)))


# ── Vector inequalities ────────────────────────────────────────────────────────

def _pair(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"vector dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def _duality_map(v, p):
    """|v|^{p-2} v, with the p = 2 case exactly v."""
    if p == 2.0:
        return v
    return np.linalg.norm(v) ** (p - 2.0) * v


def ineq_a1_gap(a, b, p):
    """<|a|^{p-2}a - |b|^{p-2}b, a - b> - 2^{2-p} |a - b|^p, nonnegative for p >= 2."""
    p = require_exponent(p)
    a, b = _pair(a, b)
    inner = float(np.dot(_duality_map(a, p) - _duality_map(b, p), a - b))
    return inner - 2.0 ** (2.0 - p) * float(np.linalg.norm(a - b)) ** p


def default_a2_constant(p):
    return 2.0 ** (1.0 - require_exponent(p))


def ineq_a2_gap(a, b, p, c=None):
    """|b|^p - |a|^p - p<|a|^{p-2}a, b - a> - c|b - a|^p, nonnegative for admissible c."""
    p = require_exponent(p)
    c = default_a2_constant(p) if c is None else float(c)
    if not 0.0 < c <= 1.0:
        raise ValueError(f"constant c must lie in (0, 1], got {c:g}")
    a, b = _pair(a, b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    linear = p * float(np.dot(_duality_map(a, p), b - a))
    return norm_b ** p - norm_a ** p - linear - c * float(np.linalg.norm(b - a)) ** p


A3Check = namedtuple("A3Check", ["lhs", "rhs", "ratio"])


def ineq_a3_check(grid, f, g, p, M, constant=1.0):
    """
    Diagnostic for  int | |f|^p - |g|^p |  <=  c * M^{p-1} * ||f - g||_p.

    Returns (lhs, rhs, ratio) with rhs = constant * M^{p-1} ||f-g||_p and
    ratio = lhs / (M^{p-1} ||f-g||_p) (0 when f == g). The ratio never exceeds
    p * 2^{p-1} on a grid.
    """
    p = require_exponent(p)
    if f.grid != grid or g.grid != grid:
        raise ValueError("gradient fields must live on the given grid")
    weight = grid.cell_weight
    mag_f, mag_g = f.magnitude, g.magnitude
    norm_f = (weight * np.sum(mag_f ** p)) ** (1.0 / p)
    norm_g = (weight * np.sum(mag_g ** p)) ** (1.0 / p)
    tol = 1e-12 * (1.0 + M)
    if norm_f > M + tol or norm_g > M + tol:
        raise ValueError(f"||f||_p = {norm_f:g}, ||g||_p = {norm_g:g} exceed M = {M:g}")

    lhs = float(weight * np.sum(np.abs(mag_f ** p - mag_g ** p)))
    diff = np.sqrt(np.sum((f.vectors - g.vectors) ** 2, axis=-1))
    scale = float(M ** (p - 1.0) * (weight * np.sum(diff ** p)) ** (1.0 / p))
    ratio = lhs / scale if scale > 0.0 else 0.0
    return A3Check(lhs=lhs, rhs=constant * scale, ratio=ratio)
