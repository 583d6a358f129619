import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import settings
from engines.levy import DENSITY_CATALOG, LevyTriplet, StableDensity
from engines.mechanism import (
    BranchingMechanism,
    General,
    LogBernstein,
    Quadratic,
    ReciprocalSum,
    Stable,
    StableSum,
)


class Variant(str, Enum):
    STABLE = "stable"
    QUADRATIC = "quadratic"
    STABLE_SUM = "stable_sum"
    RECIPROCAL_SUM = "reciprocal_sum"
    LOG_BERNSTEIN = "log_bernstein"
    GENERAL = "general"


# Philox keys are unsigned 64-bit
MAX_SEED = 2 ** 64 - 1

REQUIRED_PARAMETERS = {
    Variant.STABLE: ("alpha",),
    Variant.QUADRATIC: ("b",),
    Variant.STABLE_SUM: ("beta", "gamma"),
    Variant.RECIPROCAL_SUM: ("alpha", "beta"),
    Variant.LOG_BERNSTEIN: ("beta",),
    Variant.GENERAL: (),
}


class MechanismSpec(BaseModel):
    """A branching mechanism as written in a mechanism file"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Variant
    c: float = Field(default=1.0, gt=0)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    b: Optional[float] = Field(default=None, gt=0)
    # general mechanisms only
    drift: float = 0.0
    diffusion: float = Field(default=0.0, ge=0)
    density: Optional[str] = None
    density_alpha: Optional[float] = None
    density_weight: Optional[float] = Field(default=None, ge=0)
    density_scale: float = Field(default=1.0, gt=0)
    tail_exponent: Optional[float] = None
    atoms: List[Tuple[float, float]] = []

    @field_validator("density")
    @classmethod
    def known_density(cls, v):
        if v is None or v == "none":
            return None
        if v not in DENSITY_CATALOG:
            raise ValueError(f"unknown density '{v}' (known: {', '.join(DENSITY_CATALOG)})")
        return v

    @field_validator("atoms")
    @classmethod
    def positive_atoms(cls, v):
        for x, m in v:
            if x <= 0 or m < 0:
                raise ValueError(f"atom {x}:{m} needs location > 0 and mass ≥ 0")
        return v

    @model_validator(mode="after")
    def parameters_present(self):
        missing = [name for name in REQUIRED_PARAMETERS[self.variant] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"variant '{self.variant.value}' needs {', '.join(missing)}")
        if self.variant == Variant.GENERAL and self.density is not None:
            density = self._density()
            if self.tail_exponent is not None and abs(self.tail_exponent - density.tail_exponent) > 1e-12:
                raise ValueError(
                    f"declared tail_exponent {self.tail_exponent} disagrees with the "
                    f"{self.density} density ({density.tail_exponent})"
                )
        # range checks live in the mechanism constructors
        self.build()
        return self

    def _density(self):
        cls = DENSITY_CATALOG[self.density]
        kwargs = {}
        if self.density in ("stable", "pareto"):
            if self.density_alpha is None:
                raise ValueError(f"density '{self.density}' needs density_alpha")
            kwargs["alpha"] = self.density_alpha
        else:
            kwargs["scale"] = self.density_scale
        weight = self.density_weight
        if weight is None:
            weight = StableDensity.weight_for(1.0, self.density_alpha) if self.density == "stable" else 1.0
        return cls(weight=weight, **kwargs)

    def build(self, rel_tol: float = settings.QUAD_REL_TOL) -> BranchingMechanism:
        if self.variant == Variant.STABLE:
            return Stable(c=self.c, alpha=self.alpha)
        if self.variant == Variant.QUADRATIC:
            return Quadratic(b=self.b)
        if self.variant == Variant.STABLE_SUM:
            return StableSum(beta=self.beta, gamma=self.gamma)
        if self.variant == Variant.RECIPROCAL_SUM:
            return ReciprocalSum(alpha=self.alpha, beta=self.beta)
        if self.variant == Variant.LOG_BERNSTEIN:
            return LogBernstein(beta=self.beta, rel_tol=rel_tol)
        triplet = LevyTriplet(
            drift=self.drift,
            diffusion=self.diffusion,
            density=None if self.density is None else self._density(),
            atoms=tuple(tuple(a) for a in self.atoms),
            rel_tol=rel_tol,
        )
        return General(triplet=triplet)


class NormingKind(str, Enum):
    FBAR = "fbar"
    POWER = "power"
    UNIT = "unit"
    CUSTOM = "custom"


def _positive_sorted(name: str, values: List[float]) -> List[float]:
    if any(v <= 0 for v in values):
        raise ValueError(f"{name} entries must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return values


class ExperimentConfig(BaseModel):
    """One experiment run; grids left empty take the experiment's defaults"""

    model_config = ConfigDict(extra="forbid")

    experiment: str
    mechanism: Optional[MechanismSpec] = None
    mechanism_file: Optional[str] = None
    t_grid: List[float] = []
    theta_grid: List[float] = []
    y_grid: List[float] = []
    x: float = Field(default=1.0, gt=0)
    norming: NormingKind = NormingKind.FBAR
    norming_value: Optional[float] = Field(default=None, gt=0)
    seed: int = Field(default=20240601, ge=0, le=MAX_SEED)
    paths: int = Field(default=400_000, gt=0)
    step: Optional[float] = Field(default=None, gt=0)
    decades: int = Field(default=6, ge=3)
    delta: float = Field(default=0.5, gt=0)
    threshold: Optional[float] = Field(default=None, gt=0)
    output_dir: Optional[str] = None
    dump_samples: bool = False

    @field_validator("t_grid", "theta_grid", "y_grid")
    @classmethod
    def grids_positive(cls, v, info):
        return _positive_sorted(info.field_name, v)

    @model_validator(mode="after")
    def norming_value_present(self):
        if self.norming in (NormingKind.POWER, NormingKind.CUSTOM) and self.norming_value is None:
            raise ValueError(f"norming '{self.norming.value}' needs norming_value")
        return self

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolved_output_dir(self) -> Path:
        return settings.output_dir(self.output_dir)


class Scheme(str, Enum):
    EXACT_FELLER = "exact_feller"
    LAMPERTI_EULER = "lamperti_euler"


class PathSample(BaseModel):
    terminal_mass: float = Field(ge=0)
    seed_record: str
    scheme: Scheme
    step: Optional[float] = None

    @property
    def survived(self) -> bool:
        return self.terminal_mass > 0
