"""
Grid Module
Tensor-product discretisation of the domain (an interval or a rectangle),
nodal fields living on it and Dirichlet boundary handling.

Node order is row-major (numpy C order) with `ij` indexing, so a 2D field of
shape (n1, n2) has values[i, j] at (i*h1, j*h2).
"""

from dataclasses import dataclass, field as dataclass_field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two fields that must share a grid do not."""


# ── Grid ───────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    dim: int
    nodes_per_axis: tuple
    axis_lengths: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.nodes_per_axis) != self.dim or len(self.axis_lengths) != self.dim:
            raise ValueError(
                f"expected {self.dim} entries for nodes_per_axis and axis_lengths, "
                f"got {list(self.nodes_per_axis)} and {list(self.axis_lengths)}"
            )
        for n in self.nodes_per_axis:
            if int(n) != n or n < 3:
                raise ValueError(f"every axis needs at least 3 nodes (one interior), got {n}")
        for length in self.axis_lengths:
            if not np.isfinite(length) or length <= 0:
                raise ValueError(f"axis lengths must be positive, got {length}")

    @property
    def shape(self):
        return tuple(int(n) for n in self.nodes_per_axis)

    @property
    def node_count(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        """h_k = L_k / (n_k - 1); derived, never stored."""
        return tuple(float(L) / (int(n) - 1) for n, L in zip(self.nodes_per_axis, self.axis_lengths))

    @property
    def h_min(self):
        return min(self.spacing)

    @property
    def cell_shape(self):
        return tuple(n - 1 for n in self.shape)

    @property
    def cell_weight(self):
        """Quadrature weight of one gradient location (edge length or cell area)."""
        return float(np.prod(self.spacing))

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if self.dim == 1:
            mask[0] = mask[-1] = True
        else:
            mask[0, :] = mask[-1, :] = True
            mask[:, 0] = mask[:, -1] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_mask(self):
        mask = ~self.boundary_mask
        mask.setflags(write=False)
        return mask

    @property
    def interior_count(self):
        return int(self.interior_mask.sum())

    @cached_property
    def node_weights(self):
        """Trapezoid weights: product of 1D trapezoid weights (half on the boundary)."""
        axis_weights = []
        for n, h in zip(self.shape, self.spacing):
            w = np.full(n, h)
            w[0] = w[-1] = 0.5 * h
            axis_weights.append(w)
        weights = axis_weights[0] if self.dim == 1 else np.multiply.outer(*axis_weights)
        weights.setflags(write=False)
        return weights

    def coordinates(self):
        axes = [np.linspace(0.0, float(L), n) for n, L in zip(self.shape, self.axis_lengths)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def descriptor(self):
        return {
            "dim": self.dim,
            "nodes_per_axis": list(self.shape),
            "axis_lengths": [float(L) for L in self.axis_lengths],
        }


def build_grid(dim, nodes_per_axis, axis_lengths):
    """
    Build a uniform tensor grid on (0, L1) [x (0, L2)].

    Args:
        dim (int): 1 or 2
        nodes_per_axis (sequence[int]): nodes per axis, each >= 3
        axis_lengths (sequence[float]): positive axis lengths

    Returns:
        Grid
    """
    return Grid(
        dim=int(dim),
        nodes_per_axis=tuple(int(n) for n in nodes_per_axis),
        axis_lengths=tuple(float(L) for L in axis_lengths),
    )


def grid_from_descriptor(descriptor):
    return build_grid(descriptor["dim"], descriptor["nodes_per_axis"], descriptor["axis_lengths"])


# ── Field ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = dataclass_field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.node_count:
            raise ValueError(
                f"field has {values.size} values but the grid has {self.grid.node_count} nodes"
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite (no NaN or infinity)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values):
        return Field(self.grid, values)

    def __add__(self, other):
        require_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        require_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def scaled(self, factor):
        return Field(self.grid, factor * self.values)


def require_same_grid(*fields):
    first = fields[0].grid
    for other in fields[1:]:
        if other.grid != first:
            raise GridMismatchError(
                f"fields live on different grids: {first.descriptor()} vs {other.grid.descriptor()}"
            )


def zeros(grid):
    return Field(grid, np.zeros(grid.shape))


def sample(grid, fn):
    """Evaluate fn(*coordinates) on every node."""
    values = np.broadcast_to(fn(*grid.coordinates()), grid.shape)
    return Field(grid, values)


def apply_dirichlet(field, g):
    """Return a field equal to g on boundary nodes and to `field` in the interior."""
    require_same_grid(field, g)
    mask = field.grid.boundary_mask
    return Field(field.grid, np.where(mask, g.values, field.values))


def interpolate_boundary(g):
    """
    Boundary-consistent interpolant of g into the interior.

    1D: the straight line through the two end values.
    2D: the transfinite (Coons) blend of the four edges, exact for affine
    and bilinear data.
    """
    grid = g.grid
    values = g.values
    if grid.dim == 1:
        xi = np.linspace(0.0, 1.0, grid.shape[0])
        return Field(grid, (1.0 - xi) * values[0] + xi * values[-1])

    n1, n2 = grid.shape
    xi = np.linspace(0.0, 1.0, n1)[:, None]
    eta = np.linspace(0.0, 1.0, n2)[None, :]
    left, right = values[0, :][None, :], values[-1, :][None, :]
    bottom, top = values[:, 0][:, None], values[:, -1][:, None]
    corners = (
        (1 - xi) * (1 - eta) * values[0, 0]
        + xi * (1 - eta) * values[-1, 0]
        + (1 - xi) * eta * values[0, -1]
        + xi * eta * values[-1, -1]
    )
    blend = (1 - xi) * left + xi * right + (1 - eta) * bottom + eta * top - corners
    return apply_dirichlet(Field(grid, blend), g)


# ── Serialisation ──────────────────────────────────────────────────────────────

def field_to_json(field):
    return {
        "grid": field.grid.descriptor(),
        "values": [float(v) for v in field.values.ravel()],
    }


def field_from_json(payload):
    grid = grid_from_descriptor(payload["grid"])
    return Field(grid, np.asarray(payload["values"], dtype=float))
