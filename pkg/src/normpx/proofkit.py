"""Executable checks of the standalone inequalities and principles.

The pointwise pieces (the normalized-difference bound, the concave test
function ``phi`` and the exponential transform) are cheap and vectorized so
they can be sampled in bulk. The comparison and stability harnesses drive the
solver and turn its output into verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .solver import SolveOptions, solve_dirichlet

__all__ = [
    "InequalityVerdict",
    "StabilityReport",
    "SAME_VECTOR_RTOL",
    "verdict",
    "normalized_difference_bound",
    "normalized_difference_terms",
    "kappa0",
    "phi",
    "phi_prime",
    "phi_second",
    "exp_transform",
    "comparison_harness",
    "stability_harness",
]

SLACK = 1e-12
ORDER_TOL = 1e-8
# a and b closer than this (relative to the longer one) count as equal
SAME_VECTOR_RTOL = 1e-8


@dataclass(frozen=True)
class InequalityVerdict:
    """Outcome of checking ``lhs <= rhs`` with slack ``1e-12 max(1, rhs)``."""

    lhs: float
    rhs: float
    holds: bool
    witness: dict = field(default_factory=dict)

    def row(self):
        out = {k: _flat(v) for k, v in self.witness.items()}
        out.update(lhs=self.lhs, rhs=self.rhs, holds=int(self.holds))
        return out


def _flat(value):
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(repr(float(v)) for v in np.ravel(value))
    return value


def _holds(lhs, rhs):
    return lhs <= rhs + SLACK * np.maximum(1.0, rhs)


def verdict(lhs, rhs, **witness):
    lhs, rhs = float(lhs), float(rhs)
    return InequalityVerdict(lhs, rhs, bool(_holds(lhs, rhs)), witness)


# ---------------------------------------------------------------------------
# normalized difference of regularized unit vectors


def normalized_difference_terms(a, b, epsilon):
    """Both sides and the proof intermediates, vectorized over leading axes.

    Parameters
    ----------
    a, b : array_like, shape (..., N)
    epsilon : array_like, broadcastable to ``a.shape[:-1]``

    Returns
    -------
    dict of ndarray
        ``lhs = |a/s1 - b/s2|`` with ``s1 = sqrt(|a|^2 + eps^2)``,
        ``s2 = sqrt(|b|^2 + eps^2)``; ``rhs = 2|a - b| / max(|a|, |b|)``;
        ``middle = (|a - b| + |s2 - s1|) / max(|a|, |b|)``; ``ds = |s2 - s1|``
        and ``dab = |a - b|``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    eps = np.asarray(epsilon, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    s1 = np.sqrt(na ** 2 + eps ** 2)
    s2 = np.sqrt(nb ** 2 + eps ** 2)
    dab = np.linalg.norm(a - b, axis=-1)
    top = np.maximum(na, nb)
    # difference of square roots without cancellation
    ds = np.abs(na - nb) * (na + nb) / (s1 + s2)
    lhs = np.linalg.norm(a / s1[..., None] - b / s2[..., None], axis=-1)
    return {
        "lhs": lhs,
        "rhs": 2 * dab / top,
        "middle": (dab + ds) / top,
        "ds": ds,
        "dab": dab,
    }


def normalized_difference_bound(a, b, epsilon):
    """Check ``|a/s1 - b/s2| <= 2|a - b| / max(|a|, |b|)`` for one pair.

    Raises
    ------
    DomainError
        If ``a`` or ``b`` is zero, ``epsilon < 0``, or ``a`` and ``b`` agree to
        relative tolerance ``SAME_VECTOR_RTOL``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("a and b must be vectors of the same length")
    if not epsilon >= 0:
        raise DomainError("epsilon must be nonnegative")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("a and b must be nonzero")
    if np.linalg.norm(a - b) <= SAME_VECTOR_RTOL * max(na, nb):
        raise DomainError("a and b coincide within tolerance")
    terms = normalized_difference_terms(a, b, epsilon)
    return verdict(terms["lhs"], terms["rhs"], a=tuple(a), b=tuple(b), epsilon=float(epsilon))


# ---------------------------------------------------------------------------
# phi(s) = s - kappa0 s^gamma and the exponential transform


def kappa0(gamma):
    return 1.0 / (gamma * 2.0 ** (gamma + 1))


def _phi_args(s, gamma):
    s = np.asarray(s, dtype=float)
    if not 1 < gamma < 2:
        raise DomainError(f"gamma must lie in (1, 2), got {gamma}")
    if np.any((s < 0) | (s > 2)) or not np.all(np.isfinite(s)):
        raise DomainError("s must lie in [0, 2]")
    return s


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def phi(s, gamma):
    s = _phi_args(s, gamma)
    return _out(s - kappa0(gamma) * s ** gamma)


def phi_prime(s, gamma):
    s = _phi_args(s, gamma)
    return _out(1 - gamma * kappa0(gamma) * s ** (gamma - 1))


def phi_second(s, gamma):
    """``-gamma (gamma - 1) kappa0 s^(gamma - 2)``; infinite at ``s = 0``."""
    s = _phi_args(s, gamma)
    with np.errstate(divide="ignore"):
        return _out(-gamma * (gamma - 1) * kappa0(gamma) * s ** (gamma - 2))


def exp_transform(h, nu, H):
    """``(1 - exp(nu (h - H))) / nu``, evaluated without cancellation."""
    if not np.all(np.asarray(nu) > 0):
        raise DomainError("nu must be positive")
    h = np.asarray(h, dtype=float)
    return _out(-np.expm1(nu * (h - H)) / nu)


# ---------------------------------------------------------------------------
# harnesses over the solver


def comparison_harness(base, perturbations, opts=None):
    """Boundary-data monotonicity for the proper (``c = 1``) equation.

    ``base`` is solved with its boundary data ``g`` and again with ``g + dg``
    for every nonnegative perturbation ``dg``. A verdict holds when
    ``max(u_g - u_{g+dg}) <= 1e-8`` over the interior nodes.

    Returns
    -------
    list of InequalityVerdict
    """
    if base.eq.zeroth_order != 1:
        raise DomainError("comparison_harness needs a problem with zeroth_order = 1")
    opts = opts or SolveOptions()
    grid = base.grid
    mask = grid.interior_mask
    ref = solve_dirichlet(base, opts).solution
    verdicts = []
    for index, dg in enumerate(perturbations):
        if dg.grid != grid:
            raise DomainError("perturbation lives on a different grid")
        if np.any(dg.values < 0):
            raise DomainError(f"perturbation {index} is negative somewhere")
        raised = solve_dirichlet(base.with_boundary(base.boundary + dg), opts, initial=ref).solution
        excess = (ref.values - raised.values)[mask]
        worst = int(np.argmax(excess))
        node = tuple(int(i) for i in np.argwhere(mask)[worst])
        verdicts.append(verdict(excess[worst], ORDER_TOL, perturbation=index, node=node,
                                shift_sup=float(np.max(dg.values))))
    return verdicts


@dataclass(frozen=True)
class StabilityReport:
    """Pairwise sup-norm gaps across an epsilon-indexed family of solves."""

    epsilons: tuple
    gap_matrix: np.ndarray
    successive_gaps: tuple
    exponent_gaps: tuple
    source_gaps: tuple
    cauchy: bool
    reports: tuple = field(default=(), repr=False)

    def rows(self):
        out = []
        for i, eps in enumerate(self.epsilons):
            out.append({
                "eps": eps,
                "gap": self.successive_gaps[i - 1] if i else "",
                "exponent_gap": self.exponent_gaps[i],
                "source_gap": self.source_gaps[i],
            })
        return out


def stability_harness(problems, limit_exponent=None, limit_source=None, opts=None):
    """Solve a family ``(p_eps, f_eps)`` and test the Cauchy property.

    The family is ordered as given and each solve starts from the previous
    solution. Gaps ``|p_eps - p|`` and ``|f_eps - f|`` are measured against the
    supplied limits, or against the last member when none is given. The
    sequence passes when successive gaps never grow by more than ``2 tol``.
    """
    problems = list(problems)
    opts = opts or SolveOptions()
    if not problems:
        raise DomainError("stability_harness needs at least one problem")
    grid = problems[0].grid
    for pb in problems[1:]:
        if pb.grid != grid or not np.array_equal(pb.boundary.values, problems[0].boundary.values):
            raise DomainError("the family must share one grid and one boundary datum")
    mask = grid.interior_mask
    p_lim = (limit_exponent if limit_exponent is not None else problems[-1].eq.exponent).values
    f_lim = (limit_source if limit_source is not None else problems[-1].eq.source).values

    reports, prev = [], None
    for pb in problems:
        rep = solve_dirichlet(pb, opts, initial=prev)
        reports.append(rep)
        prev = rep.solution
    sols = np.stack([r.solution.values[mask] for r in reports])
    k = len(sols)
    gaps = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            gaps[i, j] = gaps[j, i] = np.max(np.abs(sols[i] - sols[j]))
    successive = tuple(float(gaps[i, i + 1]) for i in range(k - 1))
    cauchy = all(b <= a + 2 * opts.tol for a, b in zip(successive, successive[1:]))
    return StabilityReport(
        tuple(float(pb.eq.reg.epsilon) for pb in problems),
        gaps[:0, :0] if k == 1 else gaps,
        successive,
        tuple(float(np.max(np.abs(pb.eq.exponent.values - p_lim)[mask])) for pb in problems),
        tuple(float(np.max(np.abs(pb.eq.source.values - f_lim)[mask])) for pb in problems),
        cauchy,
        tuple(reports),
    )
