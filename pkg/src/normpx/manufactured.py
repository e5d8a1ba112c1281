"""Manufactured test problems with hand-coded exact derivatives.

Each family provides ``u*``, ``Du*`` and ``D^2 u*`` in closed form; the source
is obtained by pushing those derivatives through the continuous operator, so
the discrete solution can be compared against ``u*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .grid import ScalarField
from .operator import EquationSpec, RegularizationParams
from .solver import DirichletProblem

__all__ = ["ExactSolution", "FAMILIES", "exact_solution", "manufactured_problem",
           "continuous_operator", "richardson_check"]


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form u, Du, D^2u acting on points of shape (..., N)."""

    family: str
    value: Callable
    gradient: Callable
    hessian: Callable
    singular_point: tuple = None

    def field(self, grid):
        return ScalarField.from_function(grid, self.value)


def _affine(dim, slope=None, offset=0.0):
    b = np.ones(dim) if slope is None else np.asarray(slope, dtype=float)
    if b.shape != (dim,):
        raise DomainError(f"slope must have {dim} components")
    return ExactSolution(
        "affine",
        lambda x: x @ b + offset,
        lambda x: np.broadcast_to(b, x.shape).copy(),
        lambda x: np.zeros(x.shape + (dim,)),
    )


def _quadratic(dim, matrix=None, slope=None, offset=0.0):
    """u = x.Qx/2 + b.x + a; the default Q = I gives |x|^2/2."""
    Q = np.eye(dim) if matrix is None else np.asarray(matrix, dtype=float)
    if Q.shape != (dim, dim):
        raise DomainError(f"matrix must be {dim}x{dim}")
    Q = 0.5 * (Q + Q.T)
    b = np.zeros(dim) if slope is None else np.asarray(slope, dtype=float)
    return ExactSolution(
        "quadratic",
        lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + x @ b + offset,
        lambda x: x @ Q + b,
        lambda x: np.broadcast_to(Q, x.shape + (dim,)).copy(),
    )


def _radial_power(dim, beta=1.5, center=None, scale=1.0):
    """u = scale |x - c|^beta, beta > 1. The default centre avoids grid nodes."""
    if not beta > 1:
        raise DomainError("radial-power family needs beta > 1")
    c = np.asarray(center if center is not None else [0.1234, 0.0567, 0.0311][:dim], dtype=float)
    if c.shape != (dim,):
        raise DomainError(f"center must have {dim} components")

    def value(x):
        return scale * np.linalg.norm(x - c, axis=-1) ** beta

    def grad(x):
        y = x - c
        r = np.linalg.norm(y, axis=-1)[..., None]
        return scale * beta * r ** (beta - 2) * y

    def hess(x):
        y = x - c
        r = np.linalg.norm(y, axis=-1)[..., None, None]
        outer = np.einsum("...i,...j->...ij", y, y)
        return scale * beta * r ** (beta - 2) * (np.eye(dim) + (beta - 2) * outer / r ** 2)

    return ExactSolution("radial-power", value, grad, hess, tuple(c))


def _smooth_bump(dim, amplitude=1.0, center=None, width=0.5):
    """u = amplitude exp(-|x - c|^2 / width^2)."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if c.shape != (dim,):
        raise DomainError(f"center must have {dim} components")
    w2 = float(width) ** 2

    def value(x):
        return amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / w2)

    def grad(x):
        return (-2.0 / w2) * (x - c) * value(x)[..., None]

    def hess(x):
        y = x - c
        outer = np.einsum("...i,...j->...ij", y, y)
        return value(x)[..., None, None] * (4.0 * outer / w2 ** 2 - 2.0 * np.eye(dim) / w2)

    return ExactSolution("smooth-bump", value, grad, hess)


FAMILIES = {
    "affine": _affine,
    "quadratic": _quadratic,
    "radial-power": _radial_power,
    "smooth-bump": _smooth_bump,
}


def exact_solution(family, dim=2, **params):
    try:
        make = FAMILIES[family]
    except KeyError:
        raise DomainError(f"unknown manufactured family {family!r}; "
                          f"expected one of {sorted(FAMILIES)}") from None
    return make(dim, **params)


def continuous_operator(exact, points, p_values, epsilon, shift=None):
    """``tr(A(x, Du* + q) D^2 u*)`` from closed-form derivatives."""
    dim = points.shape[-1]
    q = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)
    eta = exact.gradient(points) + q
    H = exact.hessian(points)
    s = np.sum(eta ** 2, axis=-1) + epsilon ** 2
    proj = np.einsum("...i,...ij,...j->...", eta, H, eta)
    trace = np.trace(H, axis1=-2, axis2=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = proj / s
    # at eta = 0 with eps = 0 the direction term has a limit only if H = lambda I
    flat = s == 0
    if np.any(flat):
        lam = trace[flat] / dim
        dev = np.abs(H[flat] - lam[:, None, None] * np.eye(dim)).max(axis=(-2, -1))
        iso = dev <= 1e-12 * np.maximum(1.0, np.abs(lam))
        ratio[flat] = np.where(iso, lam, np.nan)
    return trace + (p_values - 2.0) * ratio


def manufactured_problem(family, exponent, epsilon, shift=None, zeroth_order=0,
                         anchor=None, **params):
    """Dirichlet problem whose discrete solution approximates a known ``u*``.

    The source is ``f = -L u* - c (u0 - u*)`` evaluated node by node; ``u0``
    defaults to ``u*`` itself so that the zeroth-order term vanishes. Boundary
    data on the collar is ``u*``.

    Returns
    -------
    (DirichletProblem, ExactSolution)
    """
    grid = exponent.grid
    exact = exact_solution(family, grid.dimension, **params)
    u_star = exact.field(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = -continuous_operator(exact, grid.coords, exponent.values, epsilon, shift)
    if zeroth_order:
        anchor = u_star if anchor is None else anchor
        f = f - (anchor.values - u_star.values)
    if not np.all(np.isfinite(f[grid.interior_mask])):
        raise DomainError(f"{family} source is not finite on the grid; move its singular point")
    f = np.where(np.isfinite(f), f, 0.0)
    eq = EquationSpec(exponent, RegularizationParams(epsilon, shift), ScalarField(grid, f),
                      zeroth_order, anchor if zeroth_order else None)
    return DirichletProblem(eq, u_star), exact


def _richardson(stencil, h):
    """Extrapolate an O(h^2) difference quotient to O(h^4)."""
    return (4 * stencil(h / 2) - stencil(h)) / 3


def richardson_check(exact, points, h=1e-3):
    """Max discrepancies (gradient, hessian) against finite differences of ``u``.

    Only ``exact.value`` feeds the differences, so the hand-coded gradient and
    Hessian are each checked against an independent route.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = points.shape[1]
    u = exact.value
    eye = np.eye(dim)
    worst_grad = worst_hess = 0.0
    for x in points:
        g = exact.gradient(x)
        H = exact.hessian(x)
        for k in range(dim):
            ek = eye[k]
            d1 = _richardson(lambda s: (u(x + s * ek) - u(x - s * ek)) / (2 * s), h)
            d2 = _richardson(lambda s: (u(x + s * ek) - 2 * u(x) + u(x - s * ek)) / s ** 2, h)
            worst_grad = max(worst_grad, abs(d1 - g[k]))
            worst_hess = max(worst_hess, abs(d2 - H[k, k]))
            for m in range(k + 1, dim):
                em = eye[m]
                cross = _richardson(
                    lambda s: (u(x + s * (ek + em)) - u(x + s * (ek - em))
                               - u(x - s * (ek - em)) + u(x - s * (ek + em))) / (4 * s ** 2), h)
                worst_hess = max(worst_hess, abs(cross - H[k, m]), abs(cross - H[m, k]))
    return worst_grad, worst_hess
