import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

import normpx.solver as solver_mod
from normpx.errors import ContinuationError, ConvergenceError, DomainError, SolverError
from normpx.grid import GridSpec, ScalarField
from normpx.manufactured import manufactured_problem
from normpx.operator import EquationSpec, ExponentField, RegularizationParams, residual
from normpx.solver import (DirichletProblem, SolveOptions, _Layout, continuation_in_epsilon,
                           jacobian_analytic, jacobian_fd, solve_dirichlet)


def affine(grid, b=(0.5, -0.25), a=1.0):
    b = np.asarray(b)
    return ScalarField.from_function(grid, lambda x: x @ b + a)


def ramp(grid):
    return ScalarField.from_function(
        grid, lambda x: np.sign(x[..., 0]) * np.minimum(1, 2 * np.abs(x[..., 0])))


def make_problem(grid, eps=0.1, source=None, boundary=None, c=0, anchor=None, exponent=None,
                 shift=None):
    exponent = exponent or ExponentField.linear(grid, 2.5, 0.4)
    source = source if source is not None else ScalarField.constant(grid, 0.0)
    boundary = boundary if boundary is not None else affine(grid)
    if c and anchor is None:
        anchor = boundary
    eq = EquationSpec(exponent, RegularizationParams(eps, shift), source, c, anchor)
    return DirichletProblem(eq, boundary)


class TestOptions:
    def test_defaults(self):
        o = SolveOptions()
        assert (o.tol, o.max_newton, o.max_picard, o.damping, o.jacobian) == (
            1e-9, 50, 500, 0.5, "finite-difference")

    @pytest.mark.parametrize("kw", [{"tol": 0}, {"damping": 1.0}, {"damping": 0.0},
                                    {"jacobian": "exact"}])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            SolveOptions(**kw)


class TestJacobians:
    @pytest.mark.parametrize("c,shift", [(0, None), (1, (0.3, -0.2))])
    def test_fd_matches_analytic(self, c, shift):
        g = GridSpec(17)
        rng = np.random.default_rng(5)
        pb = make_problem(g, 0.2, ramp(g), c=c, shift=shift,
                          exponent=ExponentField.sinusoidal(g, 2.5, 0.4))
        values = affine(g).values + 0.1 * rng.normal(size=g.shape)
        layout = _Layout(g)
        Ja = jacobian_analytic(layout, pb.eq, values).toarray()
        Jf = jacobian_fd(layout, pb.eq, values).toarray()
        assert np.max(np.abs(Ja - Jf)) <= 1e-5 * np.max(np.abs(Ja))

    def test_sparsity_within_stencil(self):
        g = GridSpec(17)
        layout = _Layout(g)
        pb = make_problem(g, 0.2, ramp(g))
        J = jacobian_fd(layout, pb.eq, affine(g).values + g.radius ** 2)
        rows, cols = J.nonzero()
        d = np.abs(layout.nodes[rows] - layout.nodes[cols])
        assert np.all(d.max(axis=1) <= 2)


class TestSolve:
    def test_affine_is_exact(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.05)
        rep = solve_dirichlet(pb)
        assert rep.converged and rep.residual_norm <= 1e-9
        assert np.max(np.abs(rep.solution.values - affine(g).values)) <= 1e-9

    def test_affine_from_cold_start(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.05)
        rep = solve_dirichlet(pb, initial=ScalarField.constant(g, 0.0))
        assert rep.iterations > 0 and rep.converged
        assert np.max(np.abs(rep.solution.values - affine(g).values)) <= 1e-8

    def test_affine_proper_equation(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.05, c=1)
        rep = solve_dirichlet(pb, initial=ScalarField.constant(g, 3.0))
        assert np.max(np.abs(rep.solution.values - affine(g).values)) <= 1e-8

    @pytest.mark.parametrize("jacobian", ["finite-difference", "analytic"])
    def test_manufactured_quadratic(self, jacobian):
        g = GridSpec(65)
        pb, exact = manufactured_problem("quadratic", ExponentField.constant(g, 3.0), 0.1)
        rep = solve_dirichlet(pb, SolveOptions(jacobian=jacobian),
                              initial=ScalarField.constant(g, 0.0))
        assert np.max(np.abs(rep.solution.values - exact.field(g).values)) <= 1e-8

    def test_boundary_kept_exactly(self):
        g = GridSpec(33)
        bd = ScalarField.from_function(g, lambda x: np.cos(3 * x[..., 0]) + x[..., 1] ** 3)
        rep = solve_dirichlet(make_problem(g, 0.1, ramp(g), boundary=bd))
        collar = ~g.interior_mask
        assert np.array_equal(rep.solution.values[collar], bd.values[collar])
        assert residual(rep.solution, make_problem(g, 0.1, ramp(g), boundary=bd).eq).sup_norm() <= 1e-9

    def test_history_and_counts(self):
        g = GridSpec(33)
        rep = solve_dirichlet(make_problem(g, 0.1, ramp(g)))
        assert rep.history[-1] == rep.residual_norm
        assert rep.iterations == rep.newton_steps + rep.picard_steps == len(rep.history) - 1
        assert all(b < a for a, b in zip(rep.history, rep.history[1:]))

    def test_deterministic(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.05, ramp(g))
        a, b = solve_dirichlet(pb), solve_dirichlet(pb)
        assert np.array_equal(a.solution.values, b.solution.values)
        assert a.history == b.history

    def test_three_dimensional_quadratic(self):
        g = GridSpec(9, 3)
        pb, exact = manufactured_problem("quadratic", ExponentField.constant(g, 2.5), 0.2,
                                         matrix=np.diag([1.0, 2.0, -0.5]))
        rep = solve_dirichlet(pb, initial=ScalarField.constant(g, 0.0))
        assert np.max(np.abs(rep.solution.values - exact.field(g).values)) <= 1e-8

    def test_requires_positive_epsilon(self):
        g = GridSpec(17)
        with pytest.raises(DomainError):
            solve_dirichlet(make_problem(g, 0.0))

    def test_non_convergence_carries_best_iterate(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.05, ramp(g))
        with pytest.raises(ConvergenceError) as info:
            solve_dirichlet(pb, SolveOptions(max_newton=1))
        rep = info.value.report
        assert rep is not None and not rep.converged
        assert rep.residual_norm == min(rep.history)

    def test_picard_fallback(self, monkeypatch):
        # a line search that can never accept forces every step through Picard
        monkeypatch.setattr(solver_mod, "_MIN_STEP", 10.0)
        g = GridSpec(33)
        pb = make_problem(g, 0.2, ramp(g))
        rep = solve_dirichlet(pb, SolveOptions(tol=1e-8))
        assert rep.converged and rep.picard_steps > 0
        ref = solve_dirichlet(pb, SolveOptions(tol=1e-8))
        assert np.max(np.abs(rep.solution.values - ref.solution.values)) <= 1e-7

    def test_picard_exact_for_laplacian(self):
        g = GridSpec(17)
        pb = make_problem(g, 0.1, ScalarField.constant(g, 1.0), exponent=ExponentField.constant(g, 2.0))
        values = solver_mod._picard_step(_Layout(g), pb.eq, pb.boundary.values)
        assert residual(ScalarField(g, values), pb.eq).sup_norm() <= 1e-10

    def test_singular_jacobian(self, monkeypatch):
        g = GridSpec(17)
        monkeypatch.setattr(solver_mod, "jacobian_fd",
                            lambda layout, *a, **k: sp.csr_matrix((layout.size, layout.size)))
        with pytest.raises(SolverError):
            solve_dirichlet(make_problem(g, 0.1, ramp(g)))

    def test_grid_mismatch(self):
        g = GridSpec(17)
        eq = make_problem(g).eq
        with pytest.raises(DomainError):
            DirichletProblem(eq, ScalarField.constant(GridSpec(9), 0.0))


class TestContinuation:
    def test_affine_gaps_vanish(self):
        g = GridSpec(33)
        sw = continuation_in_epsilon(make_problem(g), [0.2, 0.1, 0.05])
        assert len(sw.solutions) == 3 and max(sw.cauchy_gaps) <= 2e-9

    def test_manufactured_quadratic_gaps_decrease(self):
        g = GridSpec(33)
        pb, _ = manufactured_problem("quadratic", ExponentField.linear(g, 2.5, 0.4), 0.2,
                                     slope=[0.3, 0.0])
        sw = continuation_in_epsilon(pb, [0.2, 0.1, 0.05, 0.025])
        gaps = sw.cauchy_gaps
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_warm_equals_cold(self):
        g = GridSpec(33)
        pb = make_problem(g, 0.1, ramp(g))
        sw = continuation_in_epsilon(pb, [0.2, 0.1, 0.05])
        cold = solve_dirichlet(pb.with_epsilon(0.05))
        assert np.max(np.abs(sw.solutions[-1].values - cold.solution.values)) <= 2e-9

    @pytest.mark.parametrize("schedule", [[], [0.1, 0.1], [0.1, 0.2], [0.1, 0.0], [-0.1]])
    def test_bad_schedule(self, schedule):
        with pytest.raises(DomainError):
            continuation_in_epsilon(make_problem(GridSpec(17)), schedule)

    def test_failure_reports_index(self, monkeypatch):
        real = solver_mod.solve_dirichlet

        def flaky(problem, opts=None, initial=None):
            if problem.eq.reg.epsilon < 0.08:
                raise ConvergenceError("forced")
            return real(problem, opts, initial)

        monkeypatch.setattr(solver_mod, "solve_dirichlet", flaky)
        with pytest.raises(ContinuationError) as info:
            continuation_in_epsilon(make_problem(GridSpec(17)), [0.2, 0.1, 0.05])
        assert info.value.index == 2 and info.value.epsilon == 0.05


def test_convergence_order_small_grids():
    errs = []
    for n in (17, 33, 65):
        g = GridSpec(n)
        pb, exact = manufactured_problem("smooth-bump", ExponentField.sinusoidal(g, 2.5, 0.4), 0.1)
        u = solve_dirichlet(pb).solution
        errs.append(np.max(np.abs(u.values - exact.field(g).values)[g.interior_mask]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.5)


@settings(max_examples=8)
@given(st.integers(0, 2 ** 32 - 1))
def test_boundary_monotonicity_proper_equation(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(17)
    g1 = affine(g, rng.normal(size=2), rng.normal())
    bump = ScalarField.from_function(
        g, lambda x: rng.uniform(0, 2) * np.exp(-np.sum((x - rng.normal(size=2)) ** 2, -1)))
    eps = float(rng.uniform(0.02, 0.3))
    u1 = solve_dirichlet(make_problem(g, eps, ramp(g), boundary=g1, c=1, anchor=g1)).solution
    u2 = solve_dirichlet(make_problem(g, eps, ramp(g), boundary=g1 + bump, c=1, anchor=g1)).solution
    assert np.all(u1.values <= u2.values + 1e-8)
