"""Uniform grids on [-1, 1]^N with a mask for the open unit ball.

Fields are sampled on every node of the square. Nodes strictly inside the
unit ball form the *interior mask*; the remaining nodes form the collar that
carries boundary data for the solver.

Finite differences
------------------
Gradients use second-order central differences. Along an axis where one
neighbour leaves the interior mask, the second-order one-sided formula pointing
into the mask is used instead. Hessians use the standard three-point pure
stencil and the four-point cross for mixed derivatives. All stencils are exact
on polynomials of degree <= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError

__all__ = [
    "GridSpec",
    "BallRegion",
    "ScalarField",
    "VectorField",
    "gradient",
    "gradient_field",
    "hessian",
    "hessian_field",
    "region_mask",
    "oscillation",
    "infimum",
    "supremum",
    "lq_integral_mean",
    "unit_ball_volume",
]

# Mask membership tolerance, relative to the radius.
_MEMBER_TOL = 1e-12

# Per-axis gradient stencil selectors.
CENTRAL, FORWARD, BACKWARD = 0, 1, -1


def unit_ball_volume(dim):
    """Lebesgue measure of the unit ball in R^dim."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class GridSpec:
    """Uniform Cartesian grid of ``points_per_axis**dimension`` nodes on [-1, 1]^N."""

    points_per_axis: int
    dimension: int = 2

    def __post_init__(self):
        n, dim = self.points_per_axis, self.dimension
        if int(dim) != dim or dim < 1:
            raise DomainError(f"dimension must be a positive integer, got {dim!r}")
        if int(n) != n or n < 9 or n % 2 == 0:
            raise DomainError(f"points_per_axis must be an odd integer >= 9, got {n!r}")

    @property
    def spacing(self):
        return 2.0 / (self.points_per_axis - 1)

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dimension

    @property
    def center_index(self):
        return ((self.points_per_axis - 1) // 2,) * self.dimension

    @cached_property
    def axis(self):
        n = self.points_per_axis
        m = (n - 1) // 2
        # Integer offsets keep the origin and the symmetry exact.
        return (np.arange(n) - m) * self.spacing

    @cached_property
    def coords(self):
        """Node coordinates, shape ``shape + (N,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.flags.writeable = False
        return out

    @cached_property
    def radius(self):
        out = np.linalg.norm(self.coords, axis=-1)
        out.flags.writeable = False
        return out

    @cached_property
    def interior_mask(self):
        """Nodes strictly inside B_1; they always have a full 3^N stencil."""
        out = self.radius < 1.0 - _MEMBER_TOL
        out.flags.writeable = False
        return out

    @property
    def cell_volume(self):
        return self.spacing ** self.dimension

    def node_at(self, point):
        """Index of the node at ``point`` (must coincide with a node)."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dimension,):
            raise DomainError(f"point must have shape ({self.dimension},)")
        idx = (self.points_per_axis - 1) // 2 + point / self.spacing
        rounded = np.rint(idx)
        if np.max(np.abs(idx - rounded)) > 1e-9:
            raise DomainError(f"{point} is not a grid node")
        return tuple(int(i) for i in rounded)


@dataclass(frozen=True)
class BallRegion:
    """Closed ball used to restrict statistics; membership is by node centre."""

    center: tuple
    radius: float

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        if not self.radius > 0 or self.radius > 1:
            raise DomainError(f"radius must lie in (0, 1], got {self.radius}")
        if not all(math.isfinite(c) for c in center):
            raise DomainError("region center must be finite")

    @classmethod
    def centered(cls, radius, dimension=2):
        return cls((0.0,) * dimension, radius)


def _check_values(grid, values, trailing=()):
    values = np.asarray(values, dtype=float)
    expected = grid.shape + tuple(trailing)
    if values.shape != expected:
        raise DomainError(f"values have shape {values.shape}, expected {expected}")
    values = values.copy()
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class ScalarField:
    """Immutable samples of a real function on every node of ``grid``."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _check_values(self.grid, self.values)
        if not np.all(np.isfinite(values[self.grid.interior_mask])):
            raise DomainError("field values must be finite on the interior mask")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(coords)``; ``coords`` has shape ``grid.shape + (N,)``."""
        values = np.broadcast_to(np.asarray(fn(grid.coords), dtype=float), grid.shape)
        return cls(grid, values)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def interior_mask(self):
        return self.grid.interior_mask

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _raw(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _raw(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _raw(other))

    __rmul__ = __mul__

    def sup_norm(self, interior_only=True):
        vals = self.values[self.grid.interior_mask] if interior_only else self.values
        return float(np.max(np.abs(vals)))


def _raw(other):
    return other.values if isinstance(other, (ScalarField, VectorField)) else other


@dataclass(frozen=True)
class VectorField:
    """Immutable N-vector samples, shape ``grid.shape + (N,)``."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _check_values(self.grid, self.values, (self.grid.dimension,))
        if not np.all(np.isfinite(values[self.grid.interior_mask])):
            raise DomainError("field values must be finite on the interior mask")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, fn):
        values = np.broadcast_to(np.asarray(fn(grid.coords), dtype=float),
                                 grid.shape + (grid.dimension,))
        return cls(grid, values)

    @property
    def interior_mask(self):
        return self.grid.interior_mask

    def norm(self):
        return ScalarField(self.grid, np.linalg.norm(self.values, axis=-1))

    def component(self, k):
        return ScalarField(self.grid, self.values[..., k])


# ---------------------------------------------------------------------------
# discrete calculus


def _shift(a, offset, axis, fill):
    """``out[i] = a[i + offset]`` along ``axis``; out-of-range entries get ``fill``."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    if abs(offset) >= n:
        return out
    dst = [slice(None)] * a.ndim
    src = [slice(None)] * a.ndim
    if offset >= 0:
        dst[axis] = slice(0, n - offset)
        src[axis] = slice(offset, n)
    else:
        dst[axis] = slice(-offset, n)
        src[axis] = slice(0, n + offset)
    out[tuple(dst)] = a[tuple(src)]
    return out


def gradient_modes(grid):
    """Per-axis stencil selector (CENTRAL/FORWARD/BACKWARD), shape ``(N,) + shape``."""
    mask = grid.interior_mask
    modes = np.zeros((grid.dimension,) + grid.shape, dtype=np.int8)
    for k in range(grid.dimension):
        plus1 = _shift(mask, 1, k, False)
        plus2 = _shift(mask, 2, k, False)
        minus1 = _shift(mask, -1, k, False)
        minus2 = _shift(mask, -2, k, False)
        fwd = mask & ~minus1 & plus1 & plus2
        bwd = mask & ~plus1 & minus1 & minus2
        modes[k][fwd] = FORWARD
        modes[k][bwd] = BACKWARD
    return modes


def gradient_array(grid, values, modes=None):
    """Gradient of raw node values on the interior mask (zero on the collar)."""
    h = grid.spacing
    mask = grid.interior_mask
    if modes is None:
        modes = gradient_modes(grid)
    out = np.zeros(grid.shape + (grid.dimension,))
    for k in range(grid.dimension):
        v0 = values
        vp1, vp2 = _shift(values, 1, k, 0.0), _shift(values, 2, k, 0.0)
        vm1, vm2 = _shift(values, -1, k, 0.0), _shift(values, -2, k, 0.0)
        central = (vp1 - vm1) / (2 * h)
        forward = (-3 * v0 + 4 * vp1 - vp2) / (2 * h)
        backward = (3 * v0 - 4 * vm1 + vm2) / (2 * h)
        g = np.where(modes[k] == FORWARD, forward,
                     np.where(modes[k] == BACKWARD, backward, central))
        out[..., k] = np.where(mask, g, 0.0)
    return out


def hessian_array(grid, values):
    """Hessian of raw node values on the interior mask (zero on the collar)."""
    h2 = grid.spacing ** 2
    dim = grid.dimension
    mask = grid.interior_mask
    out = np.zeros(grid.shape + (dim, dim))
    for k in range(dim):
        pure = (_shift(values, 1, k, 0.0) - 2 * values + _shift(values, -1, k, 0.0)) / h2
        out[..., k, k] = np.where(mask, pure, 0.0)
        for m in range(k + 1, dim):
            pp = _shift(_shift(values, 1, k, 0.0), 1, m, 0.0)
            pm = _shift(_shift(values, 1, k, 0.0), -1, m, 0.0)
            mp = _shift(_shift(values, -1, k, 0.0), 1, m, 0.0)
            mm = _shift(_shift(values, -1, k, 0.0), -1, m, 0.0)
            mixed = np.where(mask, (pp - pm - mp + mm) / (4 * h2), 0.0)
            out[..., k, m] = mixed
            out[..., m, k] = mixed
    return out


def _require_interior(grid, node):
    node = tuple(int(i) for i in node)
    if len(node) != grid.dimension or any(i < 0 or i >= grid.points_per_axis for i in node):
        raise DomainError(f"node {node} is not on the grid")
    if not grid.interior_mask[node]:
        raise DomainError(f"node {node} is outside the interior mask")
    return node


def _offset(node, axis, step):
    idx = list(node)
    idx[axis] += step
    return tuple(idx)


def gradient(u, node):
    """Finite-difference gradient of ``u`` at an interior node, shape (N,)."""
    grid = u.grid
    node = _require_interior(grid, node)
    mask, v, h = grid.interior_mask, u.values, grid.spacing
    out = np.empty(grid.dimension)
    for k in range(grid.dimension):
        p1, m1 = _offset(node, k, 1), _offset(node, k, -1)
        # Interior nodes never touch the square's edge, so +-1 is in range;
        # +-2 is only read when the +-1 neighbour is masked.
        if not mask[m1] and mask[p1] and mask[_offset(node, k, 2)]:
            out[k] = (-3 * v[node] + 4 * v[p1] - v[_offset(node, k, 2)]) / (2 * h)
        elif not mask[p1] and mask[m1] and mask[_offset(node, k, -2)]:
            out[k] = (3 * v[node] - 4 * v[m1] + v[_offset(node, k, -2)]) / (2 * h)
        else:
            out[k] = (v[p1] - v[m1]) / (2 * h)
    return out


def hessian(u, node):
    """Finite-difference Hessian of ``u`` at an interior node, symmetric (N, N)."""
    grid = u.grid
    node = _require_interior(grid, node)
    v, h2 = u.values, grid.spacing ** 2
    dim = grid.dimension
    out = np.empty((dim, dim))
    for k in range(dim):
        out[k, k] = (v[_offset(node, k, 1)] - 2 * v[node] + v[_offset(node, k, -1)]) / h2
        for m in range(k + 1, dim):
            pp = v[_offset(_offset(node, k, 1), m, 1)]
            pm = v[_offset(_offset(node, k, 1), m, -1)]
            mp = v[_offset(_offset(node, k, -1), m, 1)]
            mm = v[_offset(_offset(node, k, -1), m, -1)]
            out[k, m] = out[m, k] = (pp - pm - mp + mm) / (4 * h2)
    return out


def gradient_field(u):
    """Gradient of ``u`` on the whole interior mask as a VectorField."""
    return VectorField(u.grid, gradient_array(u.grid, u.values))


def hessian_field(u):
    """Hessian array of ``u``, shape ``shape + (N, N)``, zero on the collar."""
    return hessian_array(u.grid, u.values)


# ---------------------------------------------------------------------------
# region statistics


def region_mask(grid, region):
    """Interior-mask nodes whose centres lie in the closed ball ``region``."""
    center = np.asarray(region.center, dtype=float)
    if center.shape != (grid.dimension,):
        raise DomainError(f"region center must have {grid.dimension} components")
    if np.linalg.norm(center) + region.radius > 1.0 + grid.spacing + _MEMBER_TOL:
        raise DomainError("region exceeds the padded domain")
    dist = np.linalg.norm(grid.coords - center, axis=-1)
    return grid.interior_mask & (dist <= region.radius * (1 + _MEMBER_TOL))


def _region_values(u, region):
    sel = region_mask(u.grid, region)
    if not sel.any():
        raise DomainError(f"region {region} contains no interior nodes")
    return u.values[sel]


def supremum(u, region):
    return float(np.max(_region_values(u, region)))


def infimum(u, region):
    return float(np.min(_region_values(u, region)))


def oscillation(u, region):
    """max - min of ``u`` over the masked nodes in ``region``."""
    vals = _region_values(u, region)
    return float(np.max(vals) - np.min(vals))


def lq_integral_mean(u, region, qexp):
    """Riemann-sum approximation of ``(int_region |u|^q dx)^(1/q)``."""
    if not qexp > 0:
        raise DomainError(f"integrability exponent must be positive, got {qexp}")
    vals = np.abs(_region_values(u, region))
    total = float(np.sum(vals ** qexp)) * u.grid.cell_volume
    return total ** (1.0 / qexp)
