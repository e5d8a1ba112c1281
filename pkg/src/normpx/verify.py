"""Sampled property suites that run without solving any PDE.

Each suite draws its inputs from a child of one ``numpy`` seed sequence, so a
given seed always reproduces the same samples (the ``digest`` of every suite
records them). Constants are compared against an extended-precision
re-evaluation written directly in ``mpmath``.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass

import mpmath
import numpy as np

from . import proofkit, regularity
from .grid import GridSpec, ScalarField, gradient_array, hessian_array
from .operator import EquationSpec, ExponentField, RegularizationParams, operator_values

__all__ = ["SuiteResult", "SUITES", "run_verification",
           "hp_imposc_constants", "hp_lipschitz_constants"]

DEFAULT_SEED = 20240917


@dataclass(frozen=True)
class SuiteResult:
    name: str
    samples: int
    violations: int
    worst: float
    passed: bool
    digest: str
    seconds: float = 0.0

    def row(self):
        return {"suite": self.name, "samples": self.samples, "violations": self.violations,
                "worst": self.worst, "passed": int(self.passed), "digest": self.digest}


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def _log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


# ---------------------------------------------------------------------------
# extended-precision oracle


def hp_imposc_constants(C1, qexp, N, mu, l, f_sup, dps=40):
    """(tau, theta) evaluated in ``mpmath`` at ``dps`` digits."""
    with mpmath.workdps(dps):
        C1, q, mu, l, fs = (mpmath.mpf(v) for v in (C1, qexp, mu, l, f_sup))
        n = mpmath.mpf(int(N))
        ball = mpmath.power(mpmath.pi, n / 2) / mpmath.gamma(n / 2 + 1)
        mu_q = mpmath.power(mu, 1 / q)
        theta = C1 * mpmath.power(ball, 1 / q) * mu_q * l / 2
        inner = C1 * mpmath.power(ball, 1 / q - 1 / n) * mu_q * l / (8 * mpmath.sqrt(n) * (fs + 1))
        tau = mpmath.mpf(min(1 / (4 * mpmath.sqrt(n)), mpmath.sqrt(inner)))
        return float(tau), float(theta)


def hp_lipschitz_constants(beta, C1, C2, osc_u, dps=40):
    """(gamma, kappa0, c3, radius, m_scale, lipschitz_lower) in ``mpmath``."""
    with mpmath.workdps(dps):
        beta, C1, C2, osc = (mpmath.mpf(v) for v in (beta, C1, C2, osc_u))
        half = beta / 2
        gamma = half + 1
        kappa = 1 / (gamma * mpmath.power(2, gamma + 1))
        c3 = beta / mpmath.power(2, half + 3)
        radius = mpmath.power(6 * C2 / (C1 * c3), 1 / (half - 1)) / 2
        m = 8 * osc / radius ** 2
        lower = max(2 * C2 * mpmath.sqrt(m) / (C1 * c3), m + 1)
        return tuple(float(v) for v in (gamma, kappa, c3, radius, m, lower))


def _rel_err(got, want):
    return abs(got - want) / max(abs(want), 1e-300) if want != 0 else abs(got)


# ---------------------------------------------------------------------------
# suites


def suite_normalized_difference(rng, samples=1_000_000, dim=2, chunk=250_000):
    """Normalized-difference bound and both intermediate inequalities."""
    violations = 0
    worst = -math.inf
    h = hashlib.sha256()
    for start in range(0, samples, chunk):
        m = min(chunk, samples - start)
        a = _log_uniform(rng, 1e-6, 1e6, (m, dim)) * rng.choice([-1.0, 1.0], (m, dim))
        b = _log_uniform(rng, 1e-6, 1e6, (m, dim)) * rng.choice([-1.0, 1.0], (m, dim))
        eps = _log_uniform(rng, 1e-6, 1e6, m)
        h.update(a.tobytes()); h.update(b.tobytes()); h.update(eps.tobytes())
        t = proofkit.normalized_difference_terms(a, b, eps)
        for lhs, rhs in ((t["lhs"], t["rhs"]), (t["lhs"], t["middle"]), (t["ds"], t["dab"])):
            bad = ~proofkit._holds(lhs, rhs)
            violations += int(bad.sum())
            worst = max(worst, float(np.max((lhs - rhs) / np.maximum(1.0, rhs))))
    return samples, violations, worst, h.hexdigest()[:16]


def suite_phi(rng, gammas=1000, grid_points=1000):
    """phi'(2) = 3/4, phi' in [3/4, 1] and phi'' < 0 on (0, 2]."""
    gam = rng.uniform(1.0, 2.0, gammas)
    gam = gam[(gam > 1) & (gam < 2)]
    s = np.linspace(2.0 / grid_points, 2.0, grid_points)
    violations = 0
    worst = 0.0
    for g in gam:
        end = proofkit.phi_prime(2.0, g)
        dev = abs(end - 0.75)
        worst = max(worst, dev)
        violations += dev > 1e-14
        d1 = proofkit.phi_prime(s, g)
        d2 = proofkit.phi_second(s, g)
        violations += int(np.sum((d1 < 0.75 - 1e-14) | (d1 > 1 + 1e-14)))
        violations += int(np.sum(d2 >= 0))
        violations += proofkit.phi(0.0, g) != 0.0
        violations += int(np.sum(np.diff(proofkit.phi(s, g)) <= 0))
    return len(gam) * grid_points, int(violations), worst, _digest(gam, s)


def suite_exp_transform(rng, samples=100_000):
    """0 <= hbar <= H - h whenever h <= H."""
    H = rng.uniform(-2, 2, samples)
    gap = _log_uniform(rng, 1e-8, 10, samples)
    nu = _log_uniform(rng, 1e-8, 1e3, samples)
    hbar = proofkit.exp_transform(H - gap, nu, H)
    bad = (hbar < 0) | ~proofkit._holds(hbar, gap)
    return samples, int(bad.sum()), float(np.max(hbar - gap)), _digest(H, gap, nu)


def suite_constants(rng, samples=100):
    """Closed-form constants against the extended-precision oracle."""
    worst = 0.0
    drawn = []
    for _ in range(samples):
        C1 = float(_log_uniform(rng, 0.1, 10, 1)[0])
        q = float(rng.uniform(0.5, 4))
        N = int(rng.integers(1, 6))
        mu = float(rng.uniform(0.01, 1))
        l = float(rng.uniform(0.01, 0.99))
        fs = float(_log_uniform(rng, 1e-3, 1e3, 1)[0])
        got = regularity.imposc_constants(C1, q, N, mu, l, fs)
        want = hp_imposc_constants(C1, q, N, mu, l, fs)
        worst = max(worst, _rel_err(got.tau, want[0]), _rel_err(got.theta, want[1]))

        beta = float(rng.uniform(0.01, 0.99))
        C1b, C2 = (float(v) for v in _log_uniform(rng, 0.1, 10, 2))
        osc = float(rng.uniform(0, 10))
        lc = regularity.lipschitz_proof_constants(beta, C1b, C2, osc)
        ref = hp_lipschitz_constants(beta, C1b, C2, osc)
        got6 = (lc.gamma, lc.kappa0, lc.c3, lc.radius, lc.m_scale, lc.lipschitz_lower)
        worst = max(worst, *(_rel_err(a, b) for a, b in zip(got6, ref)))
        drawn.append((C1, q, N, mu, l, fs, beta, C1b, C2, osc))
    violations = int(worst > 1e-10)
    return samples, violations, worst, _digest(np.asarray(drawn))


def _random_quadratic(rng, dim):
    Q = rng.normal(size=(dim, dim))
    Q = Q + Q.T
    b = rng.normal(size=dim)
    a = float(rng.normal())
    return Q, b, a


def suite_grid_exactness(rng, trials=20):
    """Discrete gradient and Hessian reproduce random quadratics."""
    worst = 0.0
    drawn = []
    for dim, n in ((2, 33), (3, 9)):
        grid = GridSpec(n, dim)
        mask = grid.interior_mask
        x = grid.coords
        for _ in range(trials):
            Q, b, a = _random_quadratic(rng, dim)
            vals = 0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + x @ b + a
            grad = gradient_array(grid, vals)[mask]
            hess = hessian_array(grid, vals)[mask]
            worst = max(worst, float(np.max(np.abs(grad - (x @ Q + b)[mask]))),
                        float(np.max(np.abs(hess - Q))))
            drawn.append(np.concatenate([Q.ravel(), b, [a]]))
    return 2 * trials, int(worst > 1e-10), worst, _digest(np.concatenate(drawn))


def suite_operator_exactness(rng, configs=50, n=33):
    """``L u`` on quadratics against the closed form for random (p, q, eps)."""
    grid = GridSpec(n)
    mask = grid.interior_mask
    x = grid.coords[mask]
    worst = 0.0
    drawn = []
    for _ in range(configs):
        Q, b, a = _random_quadratic(rng, 2)
        p = float(rng.uniform(1.1, 6))
        q = rng.normal(size=2)
        eps = float(_log_uniform(rng, 1e-3, 1, 1)[0])
        u = ScalarField.from_function(
            grid, lambda y: 0.5 * np.einsum("...i,ij,...j->...", y, Q, y) + y @ b + a)
        eq = EquationSpec(ExponentField.constant(grid, p), RegularizationParams(eps, q),
                          ScalarField.constant(grid, 0.0))
        eta = x @ Q + b + q
        exact = np.trace(Q) + (p - 2) * np.einsum("ij,jk,ik->i", eta, Q, eta) / (
            np.sum(eta ** 2, axis=1) + eps ** 2)
        worst = max(worst, float(np.max(np.abs(operator_values(u, eq) - exact))))
        drawn.append(np.concatenate([Q.ravel(), b, [a, p, eps], q]))
    return configs, int(worst > 1e-10), worst, _digest(np.concatenate(drawn))


def suite_ellipticity(rng, samples=100_000, dim=2):
    """Eigenvalues of A(x, eta) lie in [min(1, p-1), max(1, p-1)]."""
    p = rng.uniform(1.01, 8, samples)
    eta = rng.normal(size=(samples, dim)) * _log_uniform(rng, 1e-4, 1e4, samples)[:, None]
    eps = _log_uniform(rng, 1e-4, 1e4, samples)
    outer = np.einsum("ij,ik->ijk", eta, eta) / (np.sum(eta ** 2, 1) + eps ** 2)[:, None, None]
    A = np.eye(dim) + (p - 2)[:, None, None] * outer
    ev = np.linalg.eigvalsh(A)
    lo = np.minimum(1, p - 1)[:, None]
    hi = np.maximum(1, p - 1)[:, None]
    excess = np.maximum(lo - ev, ev - hi).max(axis=1)
    return samples, int(np.sum(excess > 1e-12)), float(excess.max()), _digest(p, eta, eps)


SUITES = {
    "normalized-difference": suite_normalized_difference,
    "phi": suite_phi,
    "exp-transform": suite_exp_transform,
    "constants": suite_constants,
    "grid-exactness": suite_grid_exactness,
    "operator-exactness": suite_operator_exactness,
    "ellipticity": suite_ellipticity,
}


def run_verification(seed=DEFAULT_SEED, names=None, overrides=None):
    """Run the named suites (default all) and return their results in order.

    ``overrides`` maps a suite name to keyword arguments for that suite, e.g.
    ``{"normalized-difference": {"samples": 1000}}``.
    """
    names = list(SUITES) if names is None else list(names)
    overrides = overrides or {}
    children = np.random.SeedSequence(int(seed)).spawn(len(SUITES))
    streams = dict(zip(SUITES, children))
    results = []
    for name in names:
        rng = np.random.default_rng(streams[name])
        t0 = time.perf_counter()
        samples, violations, worst, digest = SUITES[name](rng, **overrides.get(name, {}))
        results.append(SuiteResult(name, int(samples), int(violations), float(worst),
                                   violations == 0, digest, time.perf_counter() - t0))
    return results
