import math
import os
from enum import Enum
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# Index and norm schemas
class SobolevIndex(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: float = Field(..., ge=-1.0)
    p: float = Field(..., gt=1.0)

    @field_validator("p")
    @classmethod
    def finite_p(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("p must be finite; use lp_norm for p = inf")
        return value


class NormKind(str, Enum):
    LP = "lp"
    SOBOLEV = "sobolev"
    BESOV = "besov"
    MULTIPLIER = "multiplier-upper-bound"
    DUAL = "dual"


class NormReport(BaseModel):
    """
    One norm evaluation with the formula that produced it.

    `value` is the reported (calibrated) number. For dual norms it is the
    certified lower bound and `upper` carries the Bessel-potential bound.
    A multiplier bound with no applicable regime has certified=False and an
    infinite value.
    """
    value: float = Field(..., ge=0.0)
    kind: NormKind
    regime: str
    parameters: Dict[str, float] = Field(default_factory=dict)
    calibration: float = 1.0
    certified: bool = True
    upper: Optional[float] = None
    excluded_mass: Optional[float] = None
    warnings: List[str] = Field(default_factory=list)


# Chart and atlas file schemas
class ProfileSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    params: Dict[str, float] = Field(default_factory=dict)


class ChartFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    profile: Optional[ProfileSpec] = None
    samples: Optional[List[float]] = None
    support: str = "compact"
    r: float = Field(..., gt=0.0)
    h: float = Field(..., gt=0.0)
    lipschitz: float = Field(..., ge=0.0)
    rotation_angle: float = 0.0
    anchor: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    nodes: int = 257

    @model_validator(mode="after")
    def profile_or_samples(self):
        if self.profile is None and self.samples is None:
            raise ValueError("chart needs either a closed-form profile or a sample list")
        if len(self.anchor) != 2:
            raise ValueError("anchor must be a point in the plane")
        return self


class AtlasFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    boundary: ChartFile
    charts: int = Field(4, ge=1)
    overlap: int = Field(2, ge=1)
    chart_height: float = Field(..., gt=0.0)
    interior_height: float = Field(..., gt=0.0)


# Iteration and estimate reports
class SweepRecord(BaseModel):
    sweep: int
    increment: float
    contraction: Optional[float] = None
    momentum_residual: float = 0.0
    divergence_residual: float
    normal_residual: float
    slip_residual: float
    charts: int


class EstimateReport(BaseModel):
    s: float
    p: float
    lhs: float
    rhs: float
    ratio: Optional[float] = None
    degenerate: bool = False
    constituents: Dict[str, float] = Field(default_factory=dict)


class SpreadReport(BaseModel):
    samples: int
    min_ratio: Optional[float] = None
    max_ratio: Optional[float] = None
    spread: Optional[float] = None


class SharpnessRow(BaseModel):
    theta: float
    kappa: float
    p: float
    measured_exponent: float
    analytic_exponent: float
    second_exponent: float
    bounded: bool
    predicted_bounded: bool


# Experiment config
class Subcommand(str, Enum):
    HALFSPACE_VERIFY = "halfspace-verify"
    ROUGH_SOLVE = "rough-solve"
    NONDIV_SOLVE = "nondiv-solve"
    NEUMANN_VERIFY = "neumann-verify"
    SHARPNESS = "sharpness"
    NORMS = "norms"


REQUIRED_TOLERANCES: Dict[Subcommand, List[str]] = {
    Subcommand.HALFSPACE_VERIFY: ["velocity_error", "residual"],
    Subcommand.ROUGH_SOLVE: ["residual", "contraction"],
    Subcommand.NONDIV_SOLVE: ["consistency", "residual"],
    Subcommand.NEUMANN_VERIFY: ["error", "residual"],
    Subcommand.SHARPNESS: ["exponent"],
    Subcommand.NORMS: ["fourier_ratio", "multiplier_linearity"],
}


OPTIONAL_TOLERANCES: Dict[Subcommand, List[str]] = {
    Subcommand.HALFSPACE_VERIFY: ["refinement_ratio"],
    Subcommand.ROUGH_SOLVE: ["sweeps", "spread", "increment"],
    Subcommand.NONDIV_SOLVE: ["increment"],
    Subcommand.NEUMANN_VERIFY: ["sweeps", "increment"],
    Subcommand.SHARPNESS: ["threshold_mismatches"],
    Subcommand.NORMS: [],
}


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nx: int = 64
    nz: int = 64
    length_x: float = Field(2.0 * math.pi, gt=0.0)
    length_z: float = Field(2.0 * math.pi, gt=0.0)

    @field_validator("nx", "nz")
    @classmethod
    def power_of_two(cls, value: int) -> int:
        if not _is_power_of_two(value):
            raise ValueError(f"node count {value} is not a power of two")
        return value


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lipschitz: float = Field(..., ge=0.0)
    friction: List[float] = Field(..., min_length=1)
    frequency: int = Field(1, ge=1)
    charts: int = Field(4, ge=1)
    overlap: int = Field(2, ge=1)
    lipschitz_family: List[float] = Field(default_factory=list)

    @field_validator("friction")
    @classmethod
    def nonnegative_friction(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("friction coefficient must be nonnegative")
        return values


class SharpnessConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    theta_over_pi: List[float] = Field(..., min_length=1)
    p: List[float] = Field(..., min_length=1)
    cells: int = 512
    radii: int = Field(8, ge=4)

    @field_validator("theta_over_pi")
    @classmethod
    def opening_angle(cls, values: List[float]) -> List[float]:
        if any(not 0.0 < v < 2.0 for v in values):
            raise ValueError("opening angles must lie in (0, 2) in units of pi")
        return values


class InputsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    atlas: Optional[str] = None
    fields: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def paths_exist(self):
        paths = list(self.fields.values()) + ([self.atlas] if self.atlas else [])
        for path in paths:
            if not os.path.exists(path):
                raise ValueError(f"referenced input path does not exist: {path}")
        return self


class ExperimentConfig(BaseModel):
    """
    One experiment run. Tolerances are explicit per subcommand; grid sizes
    may fall back to defaults.
    """
    model_config = ConfigDict(extra="forbid")

    subcommand: Subcommand
    seed: int
    grid: GridConfig = Field(default_factory=GridConfig)
    refinements: List[int] = Field(default_factory=list)
    indices: List[SobolevIndex] = Field(default_factory=lambda: [SobolevIndex(s=1.0, p=2.0)])
    tolerances: Dict[str, float]
    max_sweeps: int = Field(40, ge=1)
    samples: int = Field(20, ge=1)
    domain: Optional[DomainConfig] = None
    sharpness: Optional[SharpnessConfig] = None
    inputs: Optional[InputsConfig] = None

    @field_validator("refinements")
    @classmethod
    def refinements_power_of_two(cls, values: List[int]) -> List[int]:
        for value in values:
            if not _is_power_of_two(value):
                raise ValueError(f"refinement node count {value} is not a power of two")
        return values

    @model_validator(mode="after")
    def sections_for_subcommand(self):
        missing = [k for k in REQUIRED_TOLERANCES[self.subcommand] if k not in self.tolerances]
        if missing:
            raise ValueError(f"missing tolerances for {self.subcommand.value}: {', '.join(missing)}")
        if any(v < 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be nonnegative")
        needs_domain = {Subcommand.ROUGH_SOLVE, Subcommand.NONDIV_SOLVE, Subcommand.NEUMANN_VERIFY}
        if self.subcommand in needs_domain and self.domain is None:
            raise ValueError(f"{self.subcommand.value} requires a 'domain' section")
        if self.subcommand == Subcommand.SHARPNESS and self.sharpness is None:
            raise ValueError("sharpness requires a 'sharpness' section")
        return self

    @model_validator(mode="after")
    def known_tolerances(self):
        known = set(REQUIRED_TOLERANCES[self.subcommand]) | set(OPTIONAL_TOLERANCES[self.subcommand])
        unknown = sorted(set(self.tolerances) - known)
        if unknown:
            raise ValueError(f"unknown tolerances for {self.subcommand.value}: {', '.join(unknown)}")
        return self


# Run outputs
class Criterion(BaseModel):
    name: str
    value: Optional[float] = None
    tolerance: float
    passed: bool


class RunOutcome(BaseModel):
    """What a subcommand handler hands back to the runner."""
    criteria: List[Criterion] = Field(default_factory=list)
    metrics: Dict[str, float] = Field(default_factory=dict)
    tables: Dict[str, List[Dict[str, Union[float, int, str, bool, None]]]] = Field(default_factory=dict)
    sweeps: List[Dict[str, Union[float, int, str, None]]] = Field(default_factory=list)


class RunSummary(BaseModel):
    subcommand: Subcommand
    seed: int
    passed: bool
    criteria: List[Criterion]
    metrics: Dict[str, float]
    tables: List[str]
    notes: List[str] = Field(default_factory=list)
