import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import normpx.regularity as reg
from normpx.errors import DomainError
from normpx.grid import BallRegion, GridSpec, ScalarField, VectorField, gradient_field, unit_ball_volume
from normpx.regularity import (affine_decay, fit_holder_exponent, geometric_rate, holder_exponent_from,
                               holder_seminorm, imposc_constants, lipschitz_proof_constants,
                               morrey_condition, oscillation_decay, weak_harnack_check)


@pytest.fixture(scope="module")
def g65():
    return GridSpec(65)


def brute_seminorm(field, region, alpha):
    from normpx.grid import region_mask
    sel = region_mask(field.grid, region)
    pts = field.grid.coords[sel]
    vals = field.values[sel]
    vals = vals[:, None] if vals.ndim == 1 else vals
    best = 0.0
    for i in range(len(pts)):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        dv = np.linalg.norm(vals[i + 1:] - vals[i], axis=1)
        if d.size:
            best = max(best, float(np.max(dv / d ** alpha)))
    return best


class TestHolderSeminorm:
    def test_constant_is_zero(self, g65):
        assert holder_seminorm(ScalarField.constant(g65, 2.0), BallRegion.centered(0.5), 0.3) == 0.0

    def test_affine_lipschitz(self, g65):
        b = np.array([3.0, -4.0])
        u = ScalarField.from_function(g65, lambda x: x @ b)
        assert holder_seminorm(u, BallRegion.centered(0.5), 1.0) == pytest.approx(5.0, rel=0.01)

    def test_affine_half_exponent(self, g65):
        b = np.array([1.0, 1.0])
        u = ScalarField.from_function(g65, lambda x: x @ b)
        val = holder_seminorm(u, BallRegion.centered(0.5), 0.5)
        assert val == pytest.approx(np.linalg.norm(b), rel=0.02)

    def test_matches_bruteforce(self):
        g = GridSpec(33)
        rng = np.random.default_rng(0)
        F = VectorField(g, rng.normal(size=g.shape + (2,)))
        region = BallRegion((0.1, 0.2), 0.4)
        for alpha in (1.0, 0.5, 0.2):
            assert holder_seminorm(F, region, alpha) == brute_seminorm(F, region, alpha)

    def test_threads_do_not_change_result(self, monkeypatch):
        g = GridSpec(65)
        u = ScalarField.from_function(g, lambda x: np.sin(5 * x[..., 0]) * x[..., 1])
        region = BallRegion.centered(0.9)
        monkeypatch.setattr(reg, "_PAIR_BLOCK", 20_000)
        monkeypatch.setenv("NORMPX_THREADS", "1")
        one = holder_seminorm(u, region, 0.7)
        monkeypatch.setenv("NORMPX_THREADS", "4")
        assert holder_seminorm(u, region, 0.7) == one

    def test_needs_two_nodes(self, g65):
        u = ScalarField.constant(g65, 1.0)
        with pytest.raises(DomainError):
            holder_seminorm(u, BallRegion.centered(0.5 * g65.spacing), 1.0)

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_alpha_range(self, g65, alpha):
        with pytest.raises(DomainError):
            holder_seminorm(ScalarField.constant(g65, 1.0), BallRegion.centered(0.5), alpha)

    @settings(max_examples=20)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_nondecreasing_in_alpha_on_small_ball(self, seed, a1, a2):
        # every pair distance is at most 1, so d^alpha shrinks as alpha grows
        g = GridSpec(17)
        u = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape))
        region = BallRegion.centered(0.5)
        lo, hi = sorted((a1, a2))
        assert holder_seminorm(u, region, lo) <= holder_seminorm(u, region, hi)


class TestFitHolder:
    def test_square_root_profile(self):
        g = GridSpec(129)
        u = ScalarField.from_function(g, lambda x: 2.0 * np.linalg.norm(x, axis=-1) ** 0.5)
        rep = fit_holder_exponent(u, BallRegion.centered(0.5))
        assert rep.alpha == pytest.approx(0.5, abs=0.05)
        assert rep.seminorm == pytest.approx(2.0, rel=0.05)

    def test_affine(self, g65):
        u = ScalarField.from_function(g65, lambda x: 2 * x[..., 0] + x[..., 1])
        rep = fit_holder_exponent(u, BallRegion.centered(0.5))
        assert rep.alpha == pytest.approx(1.0, abs=0.05) and not rep.degenerate

    def test_constant_is_degenerate(self, g65):
        rep = fit_holder_exponent(ScalarField.constant(g65, 3.0), BallRegion.centered(0.5))
        assert rep.degenerate and rep.alpha == 1.0 and rep.seminorm == 0.0

    def test_gradient_of_quadratic(self, g65):
        u = ScalarField.from_function(g65, lambda x: 0.5 * np.sum(x ** 2, -1))
        rep = fit_holder_exponent(gradient_field(u), BallRegion.centered(0.5))
        assert rep.alpha == pytest.approx(1.0, abs=0.05)

    def test_candidate_grid_clamps(self, g65):
        u = ScalarField.from_function(g65, lambda x: 2 * x[..., 0])
        rep = fit_holder_exponent(u, BallRegion.centered(0.5), alphas=[0.25, 0.5, 0.75])
        assert rep.alpha == 0.75 and rep.nearest_candidate == 0.75
        with pytest.raises(DomainError):
            fit_holder_exponent(u, BallRegion.centered(0.5), alphas=[0.0, 0.5])

    def test_subsampling_flag(self):
        g = GridSpec(257)
        u = ScalarField.from_function(g, lambda x: x[..., 0])
        rep = fit_holder_exponent(u, BallRegion.centered(0.5))
        assert rep.subsampled and rep.nodes_used <= reg.MAX_PAIR_NODES
        small = fit_holder_exponent(u, BallRegion.centered(0.1))
        assert not small.subsampled

    def test_subsample_is_coarse_grid(self):
        # thinning the fine grid by two lands exactly on the coarse grid
        fine, coarse = GridSpec(257), GridSpec(129)
        region = BallRegion.centered(0.5)
        fn = lambda x: np.sin(3 * x[..., 0]) + x[..., 1] ** 2
        a = fit_holder_exponent(ScalarField.from_function(fine, fn), region)
        b = fit_holder_exponent(ScalarField.from_function(coarse, fn), region, max_nodes=None)
        assert a.nodes_used == b.nodes_used
        assert a.alpha == pytest.approx(b.alpha, abs=1e-12)

    def test_rows(self, g65):
        rep = fit_holder_exponent(ScalarField.from_function(g65, lambda x: x[..., 0]),
                                  BallRegion.centered(0.5))
        row = rep.rows()[0]
        assert set(row) >= {"alpha", "seminorm", "fit_residual", "degenerate", "subsampled"}


class TestDecay:
    def test_synthetic_geometric(self):
        rate, resid = geometric_rate([0.5 ** k for k in range(8)])
        assert rate == pytest.approx(0.5, abs=1e-6) and resid < 1e-10

    def test_noise_floor_discarded(self):
        rate, _ = geometric_rate([1.0, 0.25, 0.0625, 0.0, 1e-15])
        assert rate == pytest.approx(0.25, abs=1e-12)

    def test_affine_gradient_oscillation_zero(self, g65):
        du = gradient_field(ScalarField.from_function(g65, lambda x: 2 * x[..., 0] - x[..., 1]))
        centered = VectorField(g65, du.values - np.array([2.0, -1.0]))
        rep = oscillation_decay(centered, (0.0, 0.0), 0.5, 4)
        assert max(rep.values) <= 1e-12
        rep_u = oscillation_decay(du.component(0), (0.0, 0.0), 0.5, 4)
        assert max(rep_u.values) <= 1e-12

    def test_gradient_of_quadratic_rate(self, g65):
        du = gradient_field(ScalarField.from_function(g65, lambda x: 0.5 * np.sum(x ** 2, -1)))
        rep = oscillation_decay(du, (0.0, 0.0), 0.5, 4)
        assert rep.fitted_rate == pytest.approx(0.5, abs=0.01) and rep.kind == "geometric"

    def test_affine_decay_of_affine(self, g65):
        u = ScalarField.from_function(g65, lambda x: 3 * x[..., 0] + 2)
        assert max(affine_decay(u, (0.0, 0.0), 0.5, 4).values) <= 1e-12

    def test_affine_decay_quadratic(self):
        g = GridSpec(129)
        u = ScalarField.from_function(g, lambda x: 0.5 * np.sum(x ** 2, -1))
        rep = affine_decay(u, (0.0, 0.0), 0.5, 5)
        for v, r in zip(rep.values[1:], rep.radii[1:]):
            assert v == pytest.approx(0.5 * r ** 2, rel=0.05)
        assert rep.fitted_rate == pytest.approx(2.0, abs=0.02)
        assert rep.alpha_hat == pytest.approx(1.0, abs=0.02)

    def test_truncation_warns(self):
        g = GridSpec(17)
        u = ScalarField.from_function(g, lambda x: x[..., 0] ** 2)
        with pytest.warns(RuntimeWarning):
            rep = oscillation_decay(u, (0.0, 0.0), 0.5, 10)
        assert rep.truncated and len(rep.values) < 11

    def test_off_centre_balls(self, g65):
        u = ScalarField.from_function(g65, lambda x: x[..., 0] ** 2)
        rep = oscillation_decay(u, (0.25, 0.0), 0.5, 3, radius0=0.5)
        assert rep.radii[0] == 0.5 and rep.center == (0.25, 0.0)

    def test_bad_tau(self, g65):
        with pytest.raises(DomainError):
            oscillation_decay(ScalarField.constant(g65, 0.0), (0.0, 0.0), 1.0, 2)

    @settings(max_examples=20)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 0.8))
    def test_affine_decay_below_oscillation(self, seed, tau):
        g = GridSpec(33)
        u = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            a = affine_decay(u, (0.0, 0.0), tau, 4)
            o = oscillation_decay(u, (0.0, 0.0), tau, 4)
        for va, vo in zip(a.values, o.values):
            assert va <= vo


class TestHarnack:
    def test_constant_one(self):
        g = GridSpec(129)
        chk = weak_harnack_check(ScalarField.constant(g, 1.0), ScalarField.constant(g, 0.0), 0.1, 2.0)
        assert chk.inf_term == 1.0 and chk.f_term == 0.0
        assert chk.fitted_C == pytest.approx(math.pi ** 0.5, rel=0.05)

    def test_zero(self):
        g = GridSpec(33)
        z = ScalarField.constant(g, 0.0)
        chk = weak_harnack_check(z, z, 0.1, 1.0)
        assert chk.lhs == 0.0 and chk.fitted_C == 0.0

    def test_source_term(self):
        g = GridSpec(65)
        f = ScalarField.constant(g, -2.0)
        chk = weak_harnack_check(ScalarField.constant(g, 1.0), f, 0.1, 1.0)
        radius = 4 * math.sqrt(2) * 0.1
        assert chk.f_term == pytest.approx(0.1 * (2.0 ** 2 * math.pi * radius ** 2) ** 0.5, rel=0.05)

    def test_tau_limit(self):
        g = GridSpec(33)
        one = ScalarField.constant(g, 1.0)
        with pytest.raises(DomainError):
            weak_harnack_check(one, one, 1 / (4 * math.sqrt(2)), 1.0)

    def test_negative_u(self):
        g = GridSpec(33)
        with pytest.raises(DomainError):
            weak_harnack_check(ScalarField.constant(g, -1e-6), ScalarField.constant(g, 0.0), 0.1, 1.0)


class TestMorrey:
    def test_equal_gradient(self, g65):
        F = VectorField(g65, np.broadcast_to([0.6, 0.8], g65.shape + (2,)))
        assert morrey_condition(F, (0.6, 0.8), 0.1) == 0.0

    def test_everywhere(self, g65):
        F = VectorField(g65, np.broadcast_to([1.0 + 2 * 0.3, 0.0], g65.shape + (2,)))
        frac = morrey_condition(F, (1.0, 0.0), 0.3)
        n_in = g65.interior_mask.sum()
        assert frac == n_in * g65.cell_volume / unit_ball_volume(2)
        assert frac == pytest.approx(1.0, abs=0.02)

    def test_quadratic_lens(self):
        g = GridSpec(257)
        du = gradient_field(ScalarField.from_function(g, lambda x: 0.5 * np.sum(x ** 2, -1)))
        # Monte Carlo oracle over the unit disc
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, (2_000_000, 2))
        pts = pts[np.sum(pts ** 2, 1) < 1][:1_000_000]
        mc = float(np.mean(np.linalg.norm(pts - [1.0, 0.0], axis=1) > 0.5))
        r1, r2, d = 1.0, 0.5, 1.0
        lens = (r1 ** 2 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
                + r2 ** 2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
                - 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)))
        assert mc == pytest.approx(1 - lens / math.pi, abs=0.002)
        assert morrey_condition(du, (1.0, 0.0), 0.5) == pytest.approx(mc, abs=0.02)

    def test_direction_must_be_unit(self, g65):
        F = VectorField(g65, np.zeros(g65.shape + (2,)))
        with pytest.raises(DomainError):
            morrey_condition(F, (1.0, 1.0), 0.1)


class TestConstants:
    def test_imposc_example(self):
        c = imposc_constants(1.0, 1.0, 2, 0.1, 0.5, 0.0)
        assert c.theta == pytest.approx(0.5 * math.pi * 0.1 * 0.5, abs=1e-12)
        assert c.theta == pytest.approx(0.0785, abs=1e-4)
        assert c.tau == pytest.approx(0.0885, abs=1e-3)
        assert c.tau == pytest.approx(math.sqrt(math.pi ** 0.5 * 0.05 / (8 * math.sqrt(2))), rel=1e-14)

    def test_imposc_large_source(self):
        taus = [imposc_constants(1, 1, 2, 0.1, 0.5, f).tau for f in (0, 1, 10, 1e3, 1e6, 1e12)]
        assert all(b < a for a, b in zip(taus, taus[1:]))
        assert taus[-1] < 1e-6

    def test_imposc_theta_limit(self):
        ball = unit_ball_volume(2)
        c = imposc_constants(2 / ball, 1.0, 2, 1.0, 1 - 1e-12, 0.0)
        assert c.theta == pytest.approx(1.0, abs=1e-9)

    def test_imposc_cap(self):
        c = imposc_constants(100.0, 1.0, 3, 0.9, 0.9, 0.0)
        assert c.tau == 1 / (4 * math.sqrt(3)) < c.tau_uncapped

    @pytest.mark.parametrize("args", [(0, 1, 2, 0.1, 0.5, 0), (1, 1, 2, 0.1, 1.0, 0),
                                      (1, 1, 2, -0.1, 0.5, 0), (1, 1, 2, 0.1, 0.5, -1)])
    def test_imposc_bad_inputs(self, args):
        with pytest.raises(DomainError):
            imposc_constants(*args)

    @given(st.floats(0.1, 10), st.floats(0.5, 4), st.integers(1, 5), st.floats(0.01, 1),
           st.floats(0.01, 0.98), st.floats(0, 100), st.floats(1.001, 1.5))
    def test_imposc_monotone(self, C1, q, N, mu, l, fs, k):
        base = imposc_constants(C1, q, N, mu, l, fs)
        assert base.tau <= 1 / (4 * math.sqrt(N))
        for bumped in (imposc_constants(C1 * k, q, N, mu, l, fs),
                       imposc_constants(C1, q, N, min(mu * k, 1.0), l, fs),
                       imposc_constants(C1, q, N, mu, min(l * k, 0.99), fs)):
            assert bumped.theta >= base.theta and bumped.tau_uncapped >= base.tau_uncapped

    @pytest.mark.parametrize("gamma,tau,alpha", [(0.5, 0.25, 0.5), (0.3, 0.3, 1.0),
                                                 (0.9, 0.1, math.log(0.9) / math.log(0.1))])
    def test_holder_exponent_from(self, gamma, tau, alpha):
        assert holder_exponent_from(gamma, tau) == pytest.approx(alpha, rel=1e-14)

    def test_holder_exponent_small_example(self):
        assert holder_exponent_from(0.9, 0.1) == pytest.approx(0.0458, abs=1e-4)

    @pytest.mark.parametrize("gamma,tau", [(1.0, 0.5), (0.5, 0.0), (0.0, 0.5), (0.5, 1.2)])
    def test_holder_exponent_bad(self, gamma, tau):
        with pytest.raises(DomainError):
            holder_exponent_from(gamma, tau)

    def test_lipschitz_half(self):
        c = lipschitz_proof_constants(0.5, 1.0, 1.0, 1.0)
        assert c.gamma == 1.25
        assert c.kappa0 == pytest.approx(0.1682, abs=1e-4)
        assert c.c3 == pytest.approx(0.0526, abs=1e-4)
        assert c.radius == pytest.approx(0.5 * (6 / c.c3) ** (1 / (0.25 - 1)), rel=1e-14)
        assert c.m_scale == pytest.approx(8 / c.radius ** 2, rel=1e-14)

    def test_lipschitz_zero_oscillation(self):
        c = lipschitz_proof_constants(0.3, 2.0, 0.5, 0.0)
        assert c.m_scale == 0.0 and c.lipschitz_lower == 1.0

    @given(st.floats(0.001, 0.999))
    def test_lipschitz_gamma_range(self, beta):
        assert 1 < lipschitz_proof_constants(beta, 1, 1, 1).gamma < 1.5

    @pytest.mark.parametrize("args", [(0.0, 1, 1, 1), (1.0, 1, 1, 1), (0.5, 0, 1, 1), (0.5, 1, 1, -1)])
    def test_lipschitz_bad(self, args):
        with pytest.raises(DomainError):
            lipschitz_proof_constants(*args)
