"""Regularity diagnostics measured on grid fields.

Everything here reads a solved field (and, for gradients, the output of
``grid.gradient_field``) and reports a number or a small immutable record:
Hölder seminorms and fitted exponents, decay of oscillation and of affine
approximation on shrinking balls, weak-Harnack ratios, exceedance measures and
the closed-form constants that appear in the decay and Lipschitz arguments.

Pairwise quantities are computed exactly over all node pairs of a region.
Regions larger than ``MAX_PAIR_NODES`` are thinned to a centred sub-lattice
before fitting; the report records when that happened.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import map_blocks
from .errors import DomainError
from .grid import (BallRegion, ScalarField, VectorField, lq_integral_mean, infimum,
                   oscillation, region_mask, unit_ball_volume)

__all__ = [
    "HolderReport",
    "DyadicDecayReport",
    "HarnackCheck",
    "ImposcConstants",
    "LipschitzConstants",
    "holder_seminorm",
    "fit_holder_exponent",
    "oscillation_decay",
    "affine_decay",
    "geometric_rate",
    "power_rate",
    "weak_harnack_check",
    "morrey_condition",
    "imposc_constants",
    "holder_exponent_from",
    "lipschitz_proof_constants",
]

MAX_PAIR_NODES = 10_000
NOISE_FLOOR = 1e-12
ENVELOPE_BINS = 24
_PAIR_BLOCK = 4_000_000  # pair evaluations per block


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class HolderReport:
    """Fitted Hölder exponent and seminorm of a field over a ball.

    Attributes
    ----------
    alpha : float
        Fitted exponent, clamped to ``(0, 1]``.
    seminorm : float
        ``exp(intercept)`` of the log-log fit.
    fit_residual : float
        RMS residual of the fit in log units.
    region : BallRegion
    degenerate : bool
        True when the field is constant on the region.
    subsampled : bool
        True when the region was thinned to at most ``MAX_PAIR_NODES`` nodes.
    nearest_candidate : float or None
        Element of the caller's candidate grid closest to ``alpha``.
    """

    alpha: float
    seminorm: float
    fit_residual: float
    region: BallRegion
    degenerate: bool = False
    subsampled: bool = False
    nodes_used: int = 0
    nearest_candidate: float = None

    def rows(self):
        return [{
            "center": " ".join(repr(float(c)) for c in self.region.center),
            "radius": self.region.radius,
            "alpha": self.alpha,
            "seminorm": self.seminorm,
            "fit_residual": self.fit_residual,
            "degenerate": int(self.degenerate),
            "subsampled": int(self.subsampled),
            "nodes_used": self.nodes_used,
        }]


@dataclass(frozen=True)
class DyadicDecayReport:
    """A quantity measured on the balls ``B_{r0 tau^k}(center)``.

    ``kind`` is ``"geometric"`` (``fitted_rate`` is the per-level ratio) or
    ``"power"`` (``fitted_rate`` is the exponent of the radius).
    """

    tau: float
    levels: tuple
    values: tuple
    fitted_rate: float
    fit_residual: float
    kind: str
    center: tuple
    radii: tuple
    truncated: bool = False

    @property
    def alpha_hat(self):
        """For power fits of affine decay, the Hölder exponent ``rate - 1``."""
        return self.fitted_rate - 1.0

    def rows(self):
        return [{"kind": self.kind, "tau": self.tau, "level": k, "radius": r, "value": v,
                 "fitted_rate": self.fitted_rate, "fit_residual": self.fit_residual,
                 "truncated": int(self.truncated)}
                for k, r, v in zip(self.levels, self.radii, self.values)]


@dataclass(frozen=True)
class HarnackCheck:
    tau: float
    qexp: float
    lhs: float
    inf_term: float
    f_term: float
    fitted_C: float

    def rows(self):
        return [{"tau": self.tau, "qexp": self.qexp, "lhs": self.lhs, "inf_term": self.inf_term,
                 "f_term": self.f_term, "fitted_C": self.fitted_C}]


@dataclass(frozen=True)
class ImposcConstants:
    """Radius ``tau`` and decay margin ``theta`` of the oscillation step."""

    tau: float
    theta: float
    tau_uncapped: float
    C1: float
    qexp: float
    dimension: int
    mu: float
    l: float
    f_sup: float


@dataclass(frozen=True)
class LipschitzConstants:
    """Constants of the doubling-variable Lipschitz argument.

    ``gamma`` is the power in ``phi(s) = s - kappa0 s^gamma``, ``c3`` the
    concavity constant of ``phi``, ``radius`` the localisation radius,
    ``m_scale = 8 osc / radius^2`` and ``lipschitz_lower`` the threshold the
    Lipschitz constant must exceed.
    """

    gamma: float
    kappa0: float
    c3: float
    radius: float
    m_scale: float
    lipschitz_lower: float


# ---------------------------------------------------------------------------
# pair sampling


def _field_samples(field, region, max_nodes=None):
    """Coordinates and values of the region's nodes, optionally thinned."""
    grid = field.grid
    sel = region_mask(grid, region)
    subsampled = False
    if max_nodes is not None and sel.sum() > max_nodes:
        center = np.asarray(grid.center_index).reshape((-1,) + (1,) * grid.dimension)
        offset = np.indices(grid.shape) - center
        stride = 2
        while True:
            lattice = np.all(offset % stride == 0, axis=0)
            if (sel & lattice).sum() <= max_nodes:
                break
            stride += 1
        sel = sel & lattice
        subsampled = True
    pts = grid.coords[sel]
    vals = field.values[sel]
    if isinstance(field, ScalarField):
        vals = vals[:, None]
    return pts, vals, subsampled


def _row_blocks(m):
    step = max(1, _PAIR_BLOCK // max(m, 1))
    return [(i, min(i + step, m)) for i in range(0, m - 1, step)]


def _block_pairs(pts, vals, start, stop):
    """Distances and increments for pairs (i, j) with start <= i < stop, j > i."""
    i = np.arange(start, stop)[:, None]
    j = np.arange(pts.shape[0])[None, :]
    keep = j > i
    d = np.linalg.norm(pts[start:stop, None, :] - pts[None, :, :], axis=-1)[keep]
    dv = np.linalg.norm(vals[start:stop, None, :] - vals[None, :, :], axis=-1)[keep]
    return d, dv


def holder_seminorm(field, region, alpha):
    """Discrete Hölder seminorm ``max |F(x) - F(y)| / |x - y|^alpha``.

    The maximum runs over every pair of interior nodes in ``region``;
    ``alpha = 1`` gives the discrete Lipschitz constant.

    Parameters
    ----------
    field : ScalarField or VectorField
    region : BallRegion
    alpha : float in (0, 1]

    Returns
    -------
    float
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    pts, vals, _ = _field_samples(field, region)
    if len(pts) < 2:
        raise DomainError("holder_seminorm needs at least two nodes in the region")

    def block_max(bounds):
        d, dv = _block_pairs(pts, vals, *bounds)
        return float(np.max(dv / d ** alpha))

    return max(map_blocks(block_max, _row_blocks(len(pts))))


def _envelope(pts, vals, bins):
    """Per distance bin: largest increment and the distance where it occurs."""
    # the smallest pair distance is the lattice spacing along an axis
    spread = pts - pts[0]
    nonzero = np.abs(spread[np.abs(spread) > 0])
    d_min = float(nonzero.min()) if nonzero.size else 1.0
    d_max = float(np.ptp(pts, axis=0).max()) * math.sqrt(pts.shape[1]) * (1 + 1e-12)
    edges = np.geomspace(d_min * (1 - 1e-12), d_max, bins + 1)

    def block_env(bounds):
        d, dv = _block_pairs(pts, vals, *bounds)
        b = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
        peak = np.full(bins, -np.inf)
        np.maximum.at(peak, b, dv)
        hit = dv == peak[b]
        at = np.full(bins, np.inf)
        np.minimum.at(at, b[hit], d[hit])
        return peak, at

    peak = np.full(bins, -np.inf)
    at = np.full(bins, np.inf)
    for blk_peak, blk_at in map_blocks(block_env, _row_blocks(len(pts))):
        better = blk_peak > peak
        tie = blk_peak == peak
        at = np.where(better, blk_at, np.where(tie, np.minimum(at, blk_at), at))
        peak = np.maximum(peak, blk_peak)
    return peak, at


def fit_holder_exponent(field, region, alphas=None, max_nodes=MAX_PAIR_NODES, bins=ENVELOPE_BINS):
    """Fit ``|F(x) - F(y)| ~ C |x - y|^alpha`` over the region.

    Pairs are grouped into ``bins`` geometric distance bins. In each bin the
    largest increment is kept, and a running maximum across bins traces the
    modulus of continuity ``omega(d) = max_{|x-y| <= d} |F(x) - F(y)|``. The
    distinct record points of that envelope are fit by least squares in
    log-log coordinates: the slope is the exponent and ``exp(intercept)`` the
    seminorm. Fitting the full pair cloud instead is dominated by the many
    pairs with small increments and underestimates the exponent.

    Parameters
    ----------
    field : ScalarField or VectorField
    region : BallRegion
    alphas : sequence of float, optional
        Candidate exponents. When given, the fitted slope is clamped to
        ``[min(alphas), max(alphas)]`` and the nearest candidate is reported.
    max_nodes : int or None
        Thinning threshold for large regions.

    Returns
    -------
    HolderReport
    """
    lo, hi = 1e-6, 1.0
    cands = None
    if alphas is not None:
        cands = np.asarray(sorted(float(a) for a in alphas))
        if cands.size == 0 or cands[0] <= 0 or cands[-1] > 1:
            raise DomainError("candidate exponents must lie in (0, 1]")
        lo, hi = float(cands[0]), float(cands[-1])
    pts, vals, subsampled = _field_samples(field, region, max_nodes)
    if len(pts) == 0:
        raise DomainError(f"region {region} contains no interior nodes")
    scale = max(1.0, float(np.max(np.abs(vals))))

    def report(alpha, seminorm, resid, degenerate=False):
        near = None if cands is None else float(cands[np.argmin(np.abs(cands - alpha))])
        return HolderReport(float(alpha), float(seminorm), float(resid), region, degenerate,
                            subsampled, len(pts), near)

    if len(pts) < 2 or np.ptp(vals, axis=0).max() <= 1e-14 * scale:
        return report(1.0, 0.0, 0.0, degenerate=True)

    peak, at = _envelope(pts, vals, bins)
    record_d, record_v = [], []
    best = 0.0
    for v, d in zip(peak, at):
        if v > best:
            best = v
            record_d.append(d)
            record_v.append(v)
    x = np.log(np.asarray(record_d))
    y = np.log(np.asarray(record_v))
    if len(x) < 2:
        alpha = lo
        intercept = float(y[0] - alpha * x[0])
        resid = 0.0
    else:
        slope, intercept = np.polyfit(x, y, 1)
        alpha = float(np.clip(slope, lo, hi))
        # refit the intercept after clamping so seminorm matches alpha
        if alpha != slope:
            intercept = float(np.mean(y - alpha * x))
        resid = float(np.sqrt(np.mean((y - (alpha * x + intercept)) ** 2)))
    return report(alpha, math.exp(intercept), resid)


# ---------------------------------------------------------------------------
# decay on shrinking balls


def _log_fit(x, values):
    """Least-squares line through ``(x, log v)`` for ``v >= NOISE_FLOOR``."""
    v = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    keep = v >= NOISE_FLOOR
    if keep.sum() < 2:
        return float("nan"), float("nan")
    y = np.log(v[keep])
    slope, intercept = np.polyfit(x[keep], y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x[keep] + intercept)) ** 2)))
    return float(slope), resid


def geometric_rate(values):
    """Fit ``v_k ~ C gamma^k``; returns ``(gamma, rms log residual)``."""
    slope, resid = _log_fit(np.arange(len(values)), values)
    return math.exp(slope) if math.isfinite(slope) else float("nan"), resid


def power_rate(radii, values):
    """Fit ``v ~ C r^s``; returns ``(s, rms log residual)``."""
    return _log_fit(np.log(np.asarray(radii, dtype=float)), values)


def _levels(grid, center, tau, depth, radius0, min_nodes):
    if not 0 < tau < 1:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    if depth < 0:
        raise DomainError("depth must be nonnegative")
    center = tuple(float(c) for c in np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,)))
    regions = []
    truncated = False
    for k in range(depth + 1):
        region = BallRegion(center, radius0 * tau ** k)
        if region_mask(grid, region).sum() < min_nodes:
            truncated = True
            break
        regions.append(region)
    if truncated:
        warnings.warn(f"decay truncated at level {len(regions)}: ball too small for the grid",
                      RuntimeWarning, stacklevel=3)
    if not regions:
        raise DomainError("the outermost ball holds too few nodes")
    return center, regions, truncated


def _sup_norm_on(field, region):
    sel = region_mask(field.grid, region)
    vals = field.values[sel]
    if isinstance(field, VectorField):
        return float(np.max(np.linalg.norm(vals, axis=-1)))
    return float(np.max(np.abs(vals)))


def oscillation_decay(field, center, tau, depth, radius0=1.0):
    """Dyadic decay of a field around ``center``.

    For a VectorField the value at level ``k`` is ``sup |F|`` over
    ``B_{radius0 tau^k}(center)``; for a ScalarField it is the oscillation.
    The geometric rate ``gamma`` is fitted to the levels above the noise floor.
    Levels whose ball holds fewer than two nodes are dropped with a warning.
    """
    center, regions, truncated = _levels(field.grid, center, tau, depth, radius0, 2)
    if isinstance(field, VectorField):
        values = [_sup_norm_on(field, r) for r in regions]
    else:
        values = [oscillation(field, r) for r in regions]
    rate, resid = geometric_rate(values)
    return DyadicDecayReport(float(tau), tuple(range(len(values))), tuple(values), rate, resid,
                             "geometric", center, tuple(r.radius for r in regions), truncated)


def _affine_residual_osc(u, region):
    grid = u.grid
    sel = region_mask(grid, region)
    pts = grid.coords[sel] - np.asarray(region.center)
    vals = u.values[sel]
    design = np.hstack([pts, np.ones((len(pts), 1))])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = vals - design @ coef
    # the zero map is admissible too, so never report more than osc(u)
    return float(min(np.ptp(resid), np.ptp(vals)))


def affine_decay(u, center, tau, depth, radius0=1.0):
    """Oscillation of ``u`` minus its best affine fit on shrinking balls.

    At each level the affine map is the least-squares fit on the ball; the
    reported exponent ``s`` of ``value ~ r^s`` equals ``1 + alpha`` for a
    ``C^{1,alpha}`` field.
    """
    if not isinstance(u, ScalarField):
        raise DomainError("affine_decay needs a ScalarField")
    # an affine fit needs N + 2 nodes before its residual carries information
    center, regions, truncated = _levels(u.grid, center, tau, depth, radius0, u.grid.dimension + 2)
    values = [_affine_residual_osc(u, r) for r in regions]
    radii = tuple(r.radius for r in regions)
    rate, resid = power_rate(radii, values)
    return DyadicDecayReport(float(tau), tuple(range(len(values))), tuple(values), rate, resid,
                             "power", center, radii, truncated)


# ---------------------------------------------------------------------------
# Harnack and measure conditions


def weak_harnack_check(u, f, tau, qexp, center=None):
    """Terms of the weak Harnack inequality for a nonnegative field.

    ``lhs = tau^{-N/q} (int_{B_tau} |u|^q)^{1/q}``,
    ``inf_term = inf_{B_{2 tau}} u`` and
    ``f_term = tau (int_{B_{4 sqrt(N) tau}} |f|^N)^{1/N}``; the fitted constant
    is ``lhs / (inf_term + f_term)``.
    """
    grid = u.grid
    dim = grid.dimension
    if not 0 < tau < 1 / (4 * math.sqrt(dim)):
        raise DomainError(f"tau must lie in (0, 1/(4 sqrt(N))) = (0, {1 / (4 * math.sqrt(dim)):.6g})")
    if not qexp > 0:
        raise DomainError("qexp must be positive")
    if f.grid != grid:
        raise DomainError("u and f live on different grids")
    if np.min(u.values[grid.interior_mask]) < -1e-12:
        raise DomainError("weak_harnack_check needs u >= 0 on the unit ball")
    center = tuple([0.0] * dim) if center is None else tuple(center)
    lhs = tau ** (-dim / qexp) * lq_integral_mean(u, BallRegion(center, tau), qexp)
    inf_term = max(0.0, infimum(u, BallRegion(center, 2 * tau)))
    f_term = tau * lq_integral_mean(f, BallRegion(center, 4 * math.sqrt(dim) * tau), dim)
    denom = inf_term + f_term
    if lhs == 0.0:
        fitted = 0.0
    elif denom > 0:
        fitted = lhs / denom
    else:
        fitted = math.inf
    return HarnackCheck(float(tau), float(qexp), float(lhs), float(inf_term), float(f_term), float(fitted))


def morrey_condition(Du, d, eps0):
    """Measure fraction of ``{x in B_1 : |Du(x) - d| > eps0}``.

    The measure is ``count * h^N / |B_1|`` over interior nodes.
    """
    grid = Du.grid
    d = np.asarray(d, dtype=float)
    if d.shape != (grid.dimension,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise DomainError("d must be a unit vector")
    vals = Du.values[grid.interior_mask]
    if vals.size == 0:
        raise DomainError("empty interior mask")
    count = int(np.sum(np.linalg.norm(vals - d, axis=-1) > eps0))
    return count * grid.cell_volume / unit_ball_volume(grid.dimension)


# ---------------------------------------------------------------------------
# closed-form constants


def imposc_constants(C1, qexp, N, mu, l, f_sup):
    """Radius and margin of the improvement-of-oscillation step.

    ``theta = C1 |B_1|^{1/q} mu^{1/q} l / 2`` and
    ``tau = min(1/(4 sqrt N), sqrt(C1 |B_1|^{1/q - 1/N} mu^{1/q} l / (8 sqrt N (|f|_inf + 1))))``.
    """
    for name, value in (("C1", C1), ("qexp", qexp), ("mu", mu), ("l", l)):
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    if not l < 1:
        raise DomainError("l must be < 1")
    if not f_sup >= 0:
        raise DomainError("f_sup must be nonnegative")
    if int(N) != N or N < 1:
        raise DomainError("N must be a positive integer")
    N = int(N)
    ball = unit_ball_volume(N)
    root = math.sqrt(N)
    mu_q = mu ** (1 / qexp)
    theta = 0.5 * C1 * ball ** (1 / qexp) * mu_q * l
    uncapped = math.sqrt(C1 * ball ** (1 / qexp - 1 / N) * mu_q * l / (2 * 4 * root * (f_sup + 1)))
    tau = min(1 / (4 * root), uncapped)
    return ImposcConstants(tau, theta, uncapped, float(C1), float(qexp), N, float(mu), float(l), float(f_sup))


def holder_exponent_from(gamma, tau):
    """Exponent ``alpha = log gamma / log tau`` of a geometric decay."""
    if not (0 < gamma < 1 and 0 < tau < 1):
        raise DomainError("gamma and tau must both lie in (0, 1)")
    return math.log(gamma) / math.log(tau)


def lipschitz_proof_constants(beta, C1, C2, osc_u):
    """Constants of the Lipschitz estimate for a given ``beta`` in (0, 1)."""
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1)")
    if not (C1 > 0 and C2 > 0):
        raise DomainError("C1 and C2 must be positive")
    if not osc_u >= 0:
        raise DomainError("osc_u must be nonnegative")
    gamma = beta / 2 + 1
    kappa0 = 1 / (gamma * 2 ** (gamma + 1))
    c3 = beta / 2 ** (beta / 2 + 3)
    radius = 0.5 * (6 * C2 / (C1 * c3)) ** (1 / (beta / 2 - 1))
    m_scale = 8 * osc_u / radius ** 2
    lower = max(2 * C2 * math.sqrt(m_scale) / (C1 * c3), m_scale + 1)
    return LipschitzConstants(gamma, kappa0, c3, radius, m_scale, lower)
