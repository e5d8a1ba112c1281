"""Run configuration: YAML text validated into strict pydantic models.

Unknown keys are rejected at every level. Field families are tagged unions
selected by a ``family`` key. A run manifest written by the CLI is itself a
valid configuration source: its ``config`` block is read back verbatim.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DomainError
from .grid import BallRegion, GridSpec, ScalarField
from .manufactured import FAMILIES, manufactured_problem
from .operator import EquationSpec, ExponentField, RegularizationParams
from .solver import DirichletProblem, SolveOptions

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config", "build_grid",
           "build_problem", "build_options"]


class ConfigError(ValueError):
    """The configuration text is malformed or describes an invalid problem."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# field families


class ConstantExponent(_Strict):
    family: Literal["constant"]
    p: float


class LinearExponent(_Strict):
    """p(x) = a + b x_1."""

    family: Literal["linear"]
    a: float
    b: float


class SinusoidalExponent(_Strict):
    """p(x) = a + b sin(freq pi x_1 + phase)."""

    family: Literal["sinusoidal"]
    a: float
    b: float
    freq: float = 1.0
    phase: float = 0.0


ExponentConfig = Annotated[Union[ConstantExponent, LinearExponent, SinusoidalExponent],
                           Field(discriminator="family")]


class ZeroField(_Strict):
    family: Literal["zero"]


class ConstantField(_Strict):
    family: Literal["constant"]
    value: float


class SignRampField(_Strict):
    """f(x) = sign(x_1) min(cap, slope |x_1|)."""

    family: Literal["sign-ramp"]
    slope: float = 2.0
    cap: float = 1.0


class AffineField(_Strict):
    family: Literal["affine"]
    offset: float = 0.0
    slope: List[float]


class QuadraticField(_Strict):
    """x.Qx / 2 + b.x + a."""

    family: Literal["quadratic"]
    matrix: List[List[float]]
    slope: Optional[List[float]] = None
    offset: float = 0.0


class BumpField(_Strict):
    """amplitude exp(-|x - center|^2 / width^2)."""

    family: Literal["bump"]
    amplitude: float = 1.0
    center: List[float]
    width: float = 0.5


SourceConfig = Annotated[Union[ZeroField, ConstantField, SignRampField, BumpField],
                         Field(discriminator="family")]
BoundaryConfig = Annotated[Union[ZeroField, ConstantField, AffineField, QuadraticField, BumpField],
                           Field(discriminator="family")]


# ---------------------------------------------------------------------------
# sections


class GridConfig(_Strict):
    n: int = 65
    dimension: int = 2


class ProblemConfig(_Strict):
    exponent: ExponentConfig
    source: Optional[SourceConfig] = None
    boundary: Optional[BoundaryConfig] = None
    epsilon: float = 0.1
    shift: Optional[List[float]] = None
    zeroth_order: Literal[0, 1] = 0
    anchor: Optional[BoundaryConfig] = None


class ManufacturedConfig(_Strict):
    family: str
    params: dict = Field(default_factory=dict)

    @field_validator("family")
    @classmethod
    def _known(cls, value):
        if value not in FAMILIES:
            raise ValueError(f"unknown manufactured family {value!r}; expected one of {sorted(FAMILIES)}")
        return value


class SolverConfig(_Strict):
    tol: float = 1e-9
    max_newton: int = 50
    max_picard: int = 500
    damping: float = 0.5
    jacobian: Literal["finite-difference", "analytic"] = "finite-difference"


class SweepConfig(_Strict):
    schedule: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025, 0.0125])


class RegionConfig(_Strict):
    center: Optional[List[float]] = None
    radius: float = 0.5


class DecayConfig(_Strict):
    centers: List[List[float]] = Field(default_factory=lambda: [[0.0, 0.0]])
    tau: float = 0.5
    depth: int = 5
    radius0: float = 1.0


class HarnackConfig(_Strict):
    taus: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.15])
    qexp: float = 1.0


class MorreyConfig(_Strict):
    directions: List[List[float]] = Field(default_factory=lambda: [[1.0, 0.0]])
    eps0: List[float] = Field(default_factory=lambda: [0.5])


class ReportConfig(_Strict):
    solution: Optional[str] = None
    holder: RegionConfig = Field(default_factory=RegionConfig)
    alphas: Optional[List[float]] = None
    decay: DecayConfig = Field(default_factory=DecayConfig)
    harnack: HarnackConfig = Field(default_factory=HarnackConfig)
    morrey: MorreyConfig = Field(default_factory=MorreyConfig)


class RunConfig(_Strict):
    grid: GridConfig = Field(default_factory=GridConfig)
    problem: ProblemConfig
    manufactured: Optional[ManufacturedConfig] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)
    seed: Optional[int] = None
    save_binary: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        pb = self.problem
        if self.manufactured is not None:
            if pb.source is not None or pb.boundary is not None:
                raise ValueError("a manufactured problem supplies its own source and boundary")
        elif pb.boundary is None:
            raise ValueError("problem.boundary is required unless a manufactured block is given")
        return self


# ---------------------------------------------------------------------------
# loading


def parse_config(text):
    """Parse YAML (or JSON) text, unwrapping a run manifest if given one."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "manifest_version" in data:
        data = data.get("config")
        if not isinstance(data, dict):
            raise ConfigError("manifest has no config block")
    try:
        return RunConfig.model_validate(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    """Read and validate a config file. Missing files raise FileNotFoundError."""
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# building numerical objects


def build_grid(cfg):
    try:
        return GridSpec(cfg.grid.n, cfg.grid.dimension)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def _vec(values, dim, name):
    v = np.asarray(values, dtype=float)
    if v.shape != (dim,):
        raise ConfigError(f"{name} must have {dim} components")
    return v


def _exponent(spec, grid):
    if spec.family == "constant":
        return ExponentField.constant(grid, spec.p)
    if spec.family == "linear":
        return ExponentField.linear(grid, spec.a, spec.b)
    return ExponentField.sinusoidal(grid, spec.a, spec.b, spec.freq, spec.phase)


def _field(spec, grid):
    dim = grid.dimension
    fam = spec.family
    if fam == "zero":
        return ScalarField.constant(grid, 0.0)
    if fam == "constant":
        return ScalarField.constant(grid, spec.value)
    if fam == "sign-ramp":
        return ScalarField.from_function(
            grid, lambda x: np.sign(x[..., 0]) * np.minimum(spec.cap, spec.slope * np.abs(x[..., 0])))
    if fam == "affine":
        b = _vec(spec.slope, dim, "slope")
        return ScalarField.from_function(grid, lambda x: x @ b + spec.offset)
    if fam == "quadratic":
        Q = np.asarray(spec.matrix, dtype=float)
        if Q.shape != (dim, dim):
            raise ConfigError(f"matrix must be {dim}x{dim}")
        b = np.zeros(dim) if spec.slope is None else _vec(spec.slope, dim, "slope")
        return ScalarField.from_function(
            grid, lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + x @ b + spec.offset)
    c = _vec(spec.center, dim, "center")
    return ScalarField.from_function(
        grid, lambda x: spec.amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / spec.width ** 2))


def build_problem(cfg, grid=None):
    """Return ``(DirichletProblem, ExactSolution or None)`` for a config."""
    grid = grid or build_grid(cfg)
    pb = cfg.problem
    try:
        exponent = _exponent(pb.exponent, grid)
        shift = None if pb.shift is None else tuple(_vec(pb.shift, grid.dimension, "shift"))
        if cfg.manufactured is not None:
            anchor = None if pb.anchor is None else _field(pb.anchor, grid)
            return manufactured_problem(cfg.manufactured.family, exponent, pb.epsilon, shift,
                                        pb.zeroth_order, anchor, **cfg.manufactured.params)
        boundary = _field(pb.boundary, grid)
        source = ScalarField.constant(grid, 0.0) if pb.source is None else _field(pb.source, grid)
        anchor = None
        if pb.zeroth_order:
            anchor = boundary if pb.anchor is None else _field(pb.anchor, grid)
        eq = EquationSpec(exponent, RegularizationParams(pb.epsilon, shift), source,
                          pb.zeroth_order, anchor)
        return DirichletProblem(eq, boundary), None
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def build_options(cfg):
    try:
        return SolveOptions(**cfg.solver.model_dump())
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def build_region(spec, dim):
    center = [0.0] * dim if spec.center is None else spec.center
    try:
        return BallRegion(tuple(_vec(center, dim, "region center")), spec.radius)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
