"""The regularized, shifted normalized p(x)-Laplacian.

For a gradient shift ``q`` and regularization ``eps`` the elliptic value is::

    L u = tr(A(x, Du + q) D^2 u),
    A(x, eta) = I + (p(x) - 2) eta (x) eta / (|eta|^2 + eps^2).

``operator_values``/``apply_operator`` return ``L u`` itself; the equation
residual ``-L u - [f + c (u0 - u)]`` carries the minus sign, so a residual
that is nonnegative everywhere means ``u`` is a supersolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularityError
from .grid import ScalarField, gradient, gradient_array, hessian, hessian_array

__all__ = [
    "ExponentField",
    "RegularizationParams",
    "EquationSpec",
    "diffusion_matrix",
    "apply_operator",
    "operator_values",
    "residual",
    "residual_values",
]

_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class ExponentField:
    """Samples of the variable exponent together with certified bounds.

    ``p_min``, ``p_max`` and the Lipschitz constant ``p_L`` are declared by the
    caller (usually one of the family constructors) and checked against the
    samples on construction.
    """

    samples: ScalarField
    p_min: float
    p_max: float
    p_L: float

    def __post_init__(self):
        if not self.p_min > 1:
            raise DomainError(f"p_min must exceed 1, got {self.p_min}")
        if self.p_max < self.p_min or self.p_L < 0:
            raise DomainError("need p_max >= p_min and p_L >= 0")
        vals = self.samples.values[self.samples.interior_mask]
        slack = _BOUND_TOL * max(1.0, self.p_max)
        if vals.min() < self.p_min - slack or vals.max() > self.p_max + slack:
            raise DomainError("exponent samples violate the declared bounds")
        if not self._lipschitz_ok():
            raise DomainError("exponent samples violate the declared Lipschitz constant")

    def _lipschitz_ok(self, pairs=2000):
        grid = self.samples.grid
        pts = grid.coords[grid.interior_mask]
        vals = self.samples.values[grid.interior_mask]
        rng = np.random.default_rng(0)
        i = rng.integers(0, len(pts), pairs)
        j = rng.integers(0, len(pts), pairs)
        dist = np.linalg.norm(pts[i] - pts[j], axis=-1)
        jump = np.abs(vals[i] - vals[j])
        return bool(np.all(jump <= self.p_L * dist + _BOUND_TOL * max(1.0, self.p_max)))

    @property
    def grid(self):
        return self.samples.grid

    @property
    def values(self):
        return self.samples.values

    @property
    def ellipticity(self):
        """(lambda, Lambda) for every A(x, eta) built from this exponent."""
        return min(1.0, self.p_min - 1.0), max(1.0, self.p_max - 1.0)

    @classmethod
    def constant(cls, grid, p):
        return cls(ScalarField.constant(grid, p), p, p, 0.0)

    @classmethod
    def linear(cls, grid, a, b):
        """p(x) = a + b x_1; bounds taken over the square [-1, 1]^N."""
        samples = ScalarField.from_function(grid, lambda x: a + b * x[..., 0])
        return cls(samples, a - abs(b), a + abs(b), abs(b))

    @classmethod
    def sinusoidal(cls, grid, a, b, freq=1.0, phase=0.0):
        """p(x) = a + b sin(freq * pi * x_1 + phase)."""
        samples = ScalarField.from_function(
            grid, lambda x: a + b * np.sin(freq * np.pi * x[..., 0] + phase))
        return cls(samples, a - abs(b), a + abs(b), abs(b) * abs(freq) * np.pi)


@dataclass(frozen=True)
class RegularizationParams:
    epsilon: float
    shift: tuple = field(default=None)

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.shift is not None:
            object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))

    def shift_vector(self, dim):
        if self.shift is None:
            return np.zeros(dim)
        q = np.asarray(self.shift, dtype=float)
        if q.shape != (dim,):
            raise DomainError(f"shift must have {dim} components")
        return q


@dataclass(frozen=True)
class EquationSpec:
    """``-L u = f + c (u0 - u)`` with ``c`` in {0, 1} and anchor ``u0``."""

    exponent: ExponentField
    reg: RegularizationParams
    source: ScalarField
    zeroth_order: int = 0
    anchor: ScalarField = None

    def __post_init__(self):
        if self.zeroth_order not in (0, 1):
            raise DomainError("zeroth_order must be 0 or 1")
        if self.zeroth_order == 1 and self.anchor is None:
            raise DomainError("an anchor field is required when zeroth_order = 1")
        grid = self.exponent.grid
        for f in (self.source, self.anchor):
            if f is not None and f.grid != grid:
                raise DomainError("all fields of an equation must share one grid")
        self.reg.shift_vector(grid.dimension)

    @property
    def grid(self):
        return self.exponent.grid

    def with_epsilon(self, epsilon):
        reg = RegularizationParams(epsilon, self.reg.shift)
        return EquationSpec(self.exponent, reg, self.source, self.zeroth_order, self.anchor)


def diffusion_matrix(p_at_x, eta, epsilon):
    """A(x, eta) = I + (p - 2) eta (x) eta / (|eta|^2 + eps^2)."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    denom = float(eta @ eta) + float(epsilon) ** 2
    if denom == 0.0:
        raise SingularityError("diffusion matrix undefined for eta = 0 and epsilon = 0")
    return np.eye(eta.size) + (p_at_x - 2.0) * np.outer(eta, eta) / denom


def apply_operator(u, eq, node):
    """Elliptic value ``tr(A(x, Du + q) D^2 u)`` at one interior node."""
    if u.grid != eq.grid:
        raise DomainError("field and equation live on different grids")
    node = tuple(node)
    eta = gradient(u, node) + eq.reg.shift_vector(u.grid.dimension)
    A = diffusion_matrix(eq.exponent.values[node], eta, eq.reg.epsilon)
    return float(np.trace(A @ hessian(u, node)))


def _operator_parts(grid, values, eq, modes=None):
    """Gradient-shift, Hessian and ``s = |eta|^2 + eps^2`` on the mask."""
    mask = grid.interior_mask
    eta = gradient_array(grid, values, modes)[mask] + eq.reg.shift_vector(grid.dimension)
    hess = hessian_array(grid, values)[mask]
    s = np.einsum("ij,ij->i", eta, eta) + eq.reg.epsilon ** 2
    if np.any(s == 0.0):
        raise SingularityError("|Du + q|^2 + eps^2 vanishes at an interior node")
    return eta, hess, s


def operator_values(u, eq, modes=None):
    """``L u`` at every interior node, flattened in mask order."""
    values = u.values if isinstance(u, ScalarField) else u
    grid = eq.grid
    eta, hess, s = _operator_parts(grid, values, eq, modes)
    p = eq.exponent.values[grid.interior_mask]
    trace = np.einsum("ikk->i", hess)
    proj = np.einsum("ij,ijk,ik->i", eta, hess, eta)
    return trace + (p - 2.0) * proj / s


def residual_values(u, eq, modes=None):
    """``-L u - [f + c (u0 - u)]`` on interior nodes, flattened in mask order."""
    values = u.values if isinstance(u, ScalarField) else u
    grid = eq.grid
    mask = grid.interior_mask
    rhs = eq.source.values[mask]
    if eq.zeroth_order:
        rhs = rhs + eq.anchor.values[mask] - values[mask]
    return -operator_values(values, eq, modes) - rhs


def residual(u, eq):
    """Equation residual as a ScalarField (zero on the collar)."""
    if u.grid != eq.grid:
        raise DomainError("field and equation live on different grids")
    out = np.zeros(u.grid.shape)
    out[u.grid.interior_mask] = residual_values(u, eq)
    return ScalarField(u.grid, out)
