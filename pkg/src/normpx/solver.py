"""Damped Newton solver for the discrete Dirichlet problem.

Unknowns are the values on interior-mask nodes; every collar node keeps the
boundary data ``g``. Newton steps are solved with a sparse LU factorization.
When the backtracking line search stalls, frozen-coefficient (Picard)
iterations take over until the residual has dropped, then Newton resumes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContinuationError, ConvergenceError, DomainError, SolverError
from .grid import BACKWARD, CENTRAL, FORWARD, ScalarField, gradient_array, gradient_modes, hessian_array
from .operator import EquationSpec, residual_values

__all__ = [
    "DirichletProblem",
    "SolveOptions",
    "SolveReport",
    "EpsilonSweep",
    "solve_dirichlet",
    "continuation_in_epsilon",
    "jacobian_fd",
    "jacobian_analytic",
]

log = logging.getLogger(__name__)

_ARMIJO = 1e-4
_MIN_STEP = 1e-6
_PICARD_BURST = 25


@dataclass(frozen=True)
class DirichletProblem:
    eq: EquationSpec
    boundary: ScalarField

    def __post_init__(self):
        if self.boundary.grid != self.eq.grid:
            raise DomainError("boundary data and equation live on different grids")
        collar = ~self.grid.interior_mask
        if not np.all(np.isfinite(self.boundary.values[collar])):
            raise DomainError("boundary data must be finite on the collar")

    @property
    def grid(self):
        return self.eq.grid

    def with_epsilon(self, epsilon):
        return DirichletProblem(self.eq.with_epsilon(epsilon), self.boundary)

    def with_boundary(self, boundary):
        return DirichletProblem(self.eq, boundary)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-9
    max_newton: int = 50
    max_picard: int = 500
    damping: float = 0.5
    jacobian: str = "finite-difference"

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if not 0 < self.damping < 1:
            raise DomainError("damping must lie in (0, 1)")
        if self.jacobian not in ("finite-difference", "analytic"):
            raise DomainError(f"unknown jacobian kind {self.jacobian!r}")


@dataclass(frozen=True)
class SolveReport:
    solution: ScalarField
    iterations: int
    residual_norm: float
    converged: bool
    history: tuple = field(default=())
    newton_steps: int = 0
    picard_steps: int = 0


@dataclass(frozen=True)
class EpsilonSweep:
    epsilons: tuple
    solutions: tuple
    cauchy_gaps: tuple
    reports: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# sparse assembly


class _Layout:
    """Index bookkeeping for interior unknowns on one grid."""

    def __init__(self, grid):
        self.grid = grid
        self.mask = grid.interior_mask
        self.size = int(self.mask.sum())
        index = np.full(grid.shape, -1, dtype=np.int64)
        index[self.mask] = np.arange(self.size)
        self.index = index
        self.nodes = np.argwhere(self.mask)
        self.modes = gradient_modes(grid)
        dim = grid.dimension
        offsets = set(itertools.product((-1, 0, 1), repeat=dim))
        for k in range(dim):
            for step in (-2, 2):
                e = [0] * dim
                e[k] = step
                offsets.add(tuple(e))
        self.offsets = sorted(offsets)
        self._neighbors = {o: self._neighbor_index(o) for o in self.offsets}

    def _neighbor_index(self, offset):
        """Unknown index of node + offset for each interior node (-1 if collar)."""
        target = self.nodes + np.asarray(offset)
        n = self.grid.points_per_axis
        ok = np.all((target >= 0) & (target < n), axis=1)
        out = np.full(self.size, -1, dtype=np.int64)
        out[ok] = self.index[tuple(target[ok].T)]
        return out

    def assemble(self, coeffs):
        """CSR matrix from ``{offset: coefficient per row}``; collar columns drop out."""
        rows, cols, vals = [], [], []
        row_ids = np.arange(self.size)
        for offset, coef in coeffs.items():
            nb = self._neighbors[offset]
            keep = (nb >= 0) & (coef != 0.0)
            rows.append(row_ids[keep])
            cols.append(nb[keep])
            vals.append(coef[keep])
        rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def full(self, interior, boundary):
        out = np.array(boundary, dtype=float, copy=True)
        out[self.mask] = interior
        return out


def _unit(dim, k, step=1):
    e = [0] * dim
    e[k] = step
    return tuple(e)


def _add(coeffs, offset, value):
    if offset in coeffs:
        coeffs[offset] = coeffs[offset] + value
    else:
        coeffs[offset] = np.array(value, dtype=float, copy=True)


def _hessian_coeffs(layout, A):
    """Stencil weights of ``tr(A D^2 u)`` for per-row matrices ``A``."""
    dim = layout.grid.dimension
    h2 = layout.grid.spacing ** 2
    zero = tuple([0] * dim)
    coeffs = {}
    for k in range(dim):
        akk = A[:, k, k] / h2
        _add(coeffs, _unit(dim, k, 1), akk)
        _add(coeffs, _unit(dim, k, -1), akk)
        _add(coeffs, zero, -2 * akk)
        for m in range(k + 1, dim):
            w = 2 * A[:, k, m] / (4 * h2)
            for sk, sm in itertools.product((1, -1), repeat=2):
                off = [0] * dim
                off[k], off[m] = sk, sm
                _add(coeffs, tuple(off), sk * sm * w)
    return coeffs


def _gradient_coeffs(layout, weights, axis):
    """Stencil weights of ``weights * d/dx_axis`` under the grid's one-sided rule."""
    dim = layout.grid.dimension
    h = layout.grid.spacing
    mode = layout.modes[axis][layout.mask]
    zero = tuple([0] * dim)
    c = weights / (2 * h)
    central = mode == CENTRAL
    forward = mode == FORWARD
    backward = mode == BACKWARD
    coeffs = {}
    _add(coeffs, _unit(dim, axis, 1), np.where(central, c, 0) + np.where(forward, 4 * c, 0))
    _add(coeffs, _unit(dim, axis, -1), np.where(central, -c, 0) + np.where(backward, -4 * c, 0))
    _add(coeffs, _unit(dim, axis, 2), np.where(forward, -c, 0))
    _add(coeffs, _unit(dim, axis, -2), np.where(backward, c, 0))
    _add(coeffs, zero, np.where(forward, -3 * c, 0) + np.where(backward, 3 * c, 0))
    return coeffs


def _frozen_matrix(layout, eq, values):
    """A(x, Du + q) evaluated at ``values`` on interior nodes, shape (m, N, N)."""
    grid = layout.grid
    eta = gradient_array(grid, values, layout.modes)[layout.mask] + eq.reg.shift_vector(grid.dimension)
    s = np.einsum("ij,ij->i", eta, eta) + eq.reg.epsilon ** 2
    p = eq.exponent.values[layout.mask]
    A = np.einsum("ij,ik->ijk", eta, eta) * ((p - 2.0) / s)[:, None, None]
    A += np.eye(grid.dimension)
    return A, eta, s, p


def jacobian_analytic(layout, eq, values):
    """Exact derivative of the discrete residual with respect to interior values."""
    grid = layout.grid
    A, eta, s, p = _frozen_matrix(layout, eq, values)
    hess = hessian_array(grid, values)[layout.mask]
    proj = np.einsum("ij,ijk,ik->i", eta, hess, eta)
    # d/d eta of (p-2) <H eta, eta> / s
    dT = (p - 2.0)[:, None] * (2 * np.einsum("ijk,ik->ij", hess, eta) / s[:, None]
                               - 2 * eta * (proj / s ** 2)[:, None])
    coeffs = _hessian_coeffs(layout, A)
    for k in range(grid.dimension):
        for off, c in _gradient_coeffs(layout, dT[:, k], k).items():
            _add(coeffs, off, c)
    for off in coeffs:
        coeffs[off] = -coeffs[off]
    zero = tuple([0] * grid.dimension)
    if eq.zeroth_order:
        _add(coeffs, zero, np.ones(layout.size))
    return layout.assemble(coeffs)


def _coloring(layout):
    """Color classes such that no two nodes of one class share a stencil row."""
    period = 5  # stencil offsets span at most +-2 per axis
    nodes = layout.nodes
    color = np.zeros(layout.size, dtype=np.int64)
    for k in range(layout.grid.dimension):
        color = color * period + (nodes[:, k] % period)
    return color


def jacobian_fd(layout, eq, values, base=None):
    """Forward-difference Jacobian using a structured graph coloring."""
    if base is None:
        base = residual_values(values, eq, layout.modes)
    color = _coloring(layout)
    interior = values[layout.mask]
    step = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(interior))
    row_ids = np.arange(layout.size)
    rows, cols, vals = [], [], []
    for c in np.unique(color):
        members = color == c
        pert = interior.copy()
        pert[members] += step[members]
        trial = layout.full(pert, values)
        dR = residual_values(trial, eq, layout.modes) - base
        for offset in layout.offsets:
            nb = layout._neighbors[offset]
            hit = nb >= 0
            hit[hit] = members[nb[hit]]
            rows.append(row_ids[hit])
            cols.append(nb[hit])
            vals.append(dR[hit] / step[nb[hit]])
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    keep = vals != 0.0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(layout.size, layout.size))


def _picard_step(layout, eq, values):
    """Solve the linear problem with A frozen at ``values``; returns new full values."""
    A = _frozen_matrix(layout, eq, values)[0]
    coeffs = _hessian_coeffs(layout, A)
    K = -layout.assemble(coeffs)
    rhs = eq.source.values[layout.mask].copy()
    if eq.zeroth_order:
        K = K + sp.identity(layout.size, format="csr")
        rhs += eq.anchor.values[layout.mask]
    # collar contributions move to the right-hand side
    collar_only = np.array(values, copy=True)
    collar_only[layout.mask] = 0.0
    rhs += np.einsum("ijk,ijk->i", A, hessian_array(layout.grid, collar_only)[layout.mask])
    return layout.full(_lu_solve(K, rhs), values)


def _lu_solve(matrix, rhs):
    try:
        lu = spla.splu(matrix.tocsc())
        out = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"singular linear system: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise SolverError("linear solve produced non-finite values")
    return out


def _sup(r):
    return float(np.max(np.abs(r))) if r.size else 0.0


def solve_dirichlet(problem, opts=None, initial=None):
    """Solve ``problem`` to residual sup-norm ``opts.tol``.

    ``initial`` (a ScalarField) supplies interior starting values; by default
    the boundary data itself is used as the initial guess.

    Raises
    ------
    ConvergenceError
        Iteration budgets are exhausted; ``exc.report`` holds the best iterate.
    SolverError
        A linear system is singular.
    """
    opts = opts or SolveOptions()
    eq = problem.eq
    if not eq.reg.epsilon > 0:
        raise DomainError("the regularized problem needs epsilon > 0")
    layout = _Layout(problem.grid)
    g = problem.boundary.values
    start = g if initial is None else initial.values
    values = layout.full(start[layout.mask], g)

    r = residual_values(values, eq, layout.modes)
    norm = _sup(r)
    history = [norm]
    best = (norm, values)
    newton = picard = 0

    def report(converged):
        best_norm, best_values = best
        return SolveReport(ScalarField(problem.grid, best_values), newton + picard,
                           best_norm, converged, tuple(history), newton, picard)

    while norm > opts.tol:
        if newton >= opts.max_newton:
            raise ConvergenceError(
                f"no convergence after {newton} Newton and {picard} Picard steps "
                f"(residual {best[0]:.3e})", report(False))
        newton += 1
        if opts.jacobian == "analytic":
            J = jacobian_analytic(layout, eq, values)
        else:
            J = jacobian_fd(layout, eq, values, r)
        delta = _lu_solve(J, -r)
        merit = float(np.linalg.norm(r))
        t = 1.0
        accepted = False
        while t >= _MIN_STEP:
            trial = values.copy()
            trial[layout.mask] += t * delta
            r_trial = residual_values(trial, eq, layout.modes)
            if np.linalg.norm(r_trial) <= (1 - _ARMIJO * t) * merit:
                accepted = True
                break
            t *= opts.damping
        if accepted:
            values, r = trial, r_trial
        else:
            log.debug("line search stalled at residual %.3e; Picard fallback", norm)
            target = 0.5 * norm
            for _ in range(_PICARD_BURST):
                if picard >= opts.max_picard:
                    raise ConvergenceError("Picard budget exhausted", report(False))
                picard += 1
                values = _picard_step(layout, eq, values)
                r = residual_values(values, eq, layout.modes)
                history.append(_sup(r))
                if history[-1] <= max(target, opts.tol):
                    break
            norm = _sup(r)
            if norm < best[0]:
                best = (norm, values)
            continue
        norm = _sup(r)
        history.append(norm)
        if norm < best[0]:
            best = (norm, values)
        log.debug("newton %d: step %.3g residual %.3e", newton, t, norm)
    return report(True)


def continuation_in_epsilon(problem, schedule, opts=None, initial=None):
    """Solve along a strictly decreasing epsilon schedule with warm starts."""
    schedule = tuple(float(e) for e in schedule)
    if not schedule:
        raise DomainError("epsilon schedule is empty")
    if any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("epsilon schedule must be positive and strictly decreasing")
    opts = opts or SolveOptions()
    reports, guess = [], initial
    for i, eps in enumerate(schedule):
        try:
            rep = solve_dirichlet(problem.with_epsilon(eps), opts, guess)
        except SolverError as exc:
            raise ContinuationError(f"solve failed at index {i} (eps={eps}): {exc}",
                                    i, eps, exc.report) from exc
        reports.append(rep)
        guess = rep.solution
    sols = tuple(r.solution for r in reports)
    gaps = tuple(float(np.max(np.abs(a.values - b.values))) for a, b in zip(sols, sols[1:]))
    return EpsilonSweep(schedule, sols, gaps, tuple(reports))
