"""Scenario configuration: pydantic models loaded from YAML files."""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, \
    field_validator, model_validator

from config import NumericsConfig
from vlasovkit.catalog import MODEL_BUILDERS
from vlasovkit.errors import ConfigError
from vlasovkit.observables import SUPPORT_CATALOG
from vlasovkit.phase_space import Bundle
from vlasovkit.vlasov import FIELD_BUILDERS, INDICATOR_BUILDERS

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class RunKind(str, Enum):
    TRAJECTORIES = "trajectories"
    LEAF = "leaf"
    TRANSFORM_CHECK = "transform-check"
    DRIFT = "drift"
    DENSITY_ADVECT = "density-advect"
    MOMENTS = "moments"
    DEPENDENCE_REPORT = "dependence-report"
    INVARIANT_SUITE = "invariant-suite"


STOCHASTIC_RUNS = {RunKind.TRAJECTORIES, RunKind.LEAF, RunKind.TRANSFORM_CHECK, RunKind.DRIFT,
                   RunKind.DENSITY_ADVECT, RunKind.INVARIANT_SUITE}

SUITE_CHECKS = ("geometry", "homogeneity", "bivector", "spray-roundtrip", "convergence", "null-labtime")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Strict):
    name: str = Field(..., description="catalog model name")
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def known_model(cls, v: str) -> str:
        if v not in MODEL_BUILDERS:
            raise ValueError(f"unknown model '{v}'; known: {sorted(MODEL_BUILDERS)}")
        return v


class FieldSpec(_Strict):
    kind: str = "lorentz"

    @field_validator("kind")
    @classmethod
    def known_field(cls, v: str) -> str:
        if v not in FIELD_BUILDERS:
            raise ValueError(f"unknown field '{v}'; known: {sorted(FIELD_BUILDERS)}")
        return v


class IndicatorSpec(_Strict):
    name: str
    level: PositiveFloat = 1.0

    @field_validator("name")
    @classmethod
    def known_indicator(cls, v: str) -> str:
        if v not in INDICATOR_BUILDERS:
            raise ValueError(f"unknown indicator '{v}'; known: {sorted(INDICATOR_BUILDERS)}")
        return v


class BoxSpec(_Strict):
    """Sampling box for initial phase points."""
    x_lower: List[float]
    x_upper: List[float]
    v_lower: List[float]
    v_upper: List[float]

    @model_validator(mode="after")
    def ordered(self) -> "BoxSpec":
        dims = {len(self.x_lower), len(self.x_upper), len(self.v_lower), len(self.v_upper)}
        if len(dims) != 1:
            raise ValueError("box bounds must all have the model dimension")
        for lo, hi in ((self.x_lower, self.x_upper), (self.v_lower, self.v_upper)):
            if any(a > b for a, b in zip(lo, hi)):
                raise ValueError("box lower bound exceeds upper bound")
        return self


class NumericSpec(_Strict):
    steps: PositiveInt = 1000
    span: Tuple[float, float] = (0.0, 1.0)
    nodes: PositiveInt = Field(default_factory=lambda: NumericsConfig.from_env().quadrature_nodes)
    samples: PositiveInt = Field(default_factory=lambda: NumericsConfig.from_env().sample_count)
    seed: Optional[int] = None
    tolerance: Optional[PositiveFloat] = None
    workers: PositiveInt = Field(default_factory=lambda: NumericsConfig.from_env().workers)

    @field_validator("span")
    @classmethod
    def forward_span(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not v[1] > v[0]:
            raise ValueError("span must be increasing")
        return v


class DensitySpec(_Strict):
    kind: str = "gaussian"
    domain: str = "hyperboloid"
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    sigma: PositiveFloat = 0.05
    half_width: Optional[PositiveFloat] = None
    normalize: bool = True

    @field_validator("kind")
    @classmethod
    def known_kind(cls, v: str) -> str:
        if v not in ("gaussian", "uniform"):
            raise ValueError(f"unknown density kind '{v}'; known: ['gaussian', 'uniform']")
        return v

    @field_validator("domain")
    @classmethod
    def known_domain(cls, v: str) -> str:
        if v not in INDICATOR_BUILDERS:
            raise ValueError(f"unknown indicator '{v}'; known: {sorted(INDICATOR_BUILDERS)}")
        return v


class SliceSpec(_Strict):
    """Spacetime seeding box; lower[0] == upper[0] puts every particle on one x^0 slice."""
    lower: List[float]
    upper: List[float]


class GridConfig(_Strict):
    lower: List[float]
    upper: List[float]
    shape: List[PositiveInt]
    modulation: float = 0.0


class AdvectSpec(_Strict):
    dt: PositiveFloat = 1.0
    expect_on_domain: bool = True


class ScenarioConfig(_Strict):
    name: str
    description: str = ""
    model: ModelSpec
    field: FieldSpec = Field(default_factory=FieldSpec)
    indicators: List[IndicatorSpec] = Field(default_factory=lambda: [IndicatorSpec(name="hyperboloid")])
    bundle: Bundle = Bundle.TIMELIKE
    run: RunKind
    checks: List[str] = Field(default_factory=list)
    numeric: NumericSpec = Field(default_factory=NumericSpec)
    box: Optional[BoxSpec] = None
    density: Optional[DensitySpec] = None
    slice: Optional[SliceSpec] = None
    position: Optional[List[float]] = None
    grid: Optional[GridConfig] = None
    supports: List[str] = Field(default_factory=lambda: ["bump", "box", "triangle"])
    advect: AdvectSpec = Field(default_factory=AdvectSpec)
    output: Optional[str] = None

    @field_validator("checks")
    @classmethod
    def known_checks(cls, v: List[str]) -> List[str]:
        unknown = [c for c in v if c not in SUITE_CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; known: {list(SUITE_CHECKS)}")
        return v

    @field_validator("supports")
    @classmethod
    def known_supports(cls, v: List[str]) -> List[str]:
        unknown = [s for s in v if s not in SUPPORT_CATALOG]
        if unknown:
            raise ValueError(f"unknown supports {unknown}; known: {sorted(SUPPORT_CATALOG)}")
        return v

    @model_validator(mode="after")
    def run_requirements(self) -> "ScenarioConfig":
        if self.run in STOCHASTIC_RUNS and self.numeric.seed is None:
            raise ValueError(f"run '{self.run.value}' draws samples and needs numeric.seed")
        if self.run in (RunKind.DENSITY_ADVECT, RunKind.MOMENTS, RunKind.DEPENDENCE_REPORT) \
                and self.density is None:
            raise ValueError(f"run '{self.run.value}' needs a density section")
        if self.run == RunKind.DENSITY_ADVECT and self.slice is None:
            raise ValueError("run 'density-advect' needs a slice section")
        if self.run == RunKind.INVARIANT_SUITE and not self.checks:
            self.checks = list(SUITE_CHECKS)
        return self

    @property
    def seed(self) -> int:
        return self.numeric.seed if self.numeric.seed is not None else NumericsConfig.from_env().seed

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       steps: Optional[int] = None, tol: Optional[float] = None) -> "ScenarioConfig":
        """CLI flags win over file values; ``None`` leaves a value alone."""
        numeric = {k: v for k, v in (("seed", seed), ("steps", steps), ("tolerance", tol)) if v is not None}
        if tol is not None and not tol > 0:
            raise ConfigError("tolerance must be positive", field="numeric.tolerance")
        if steps is not None and steps < 1:
            raise ConfigError("steps must be positive", field="numeric.steps")
        update: Dict[str, Any] = {"numeric": self.numeric.model_copy(update=numeric)}
        if out is not None:
            update["output"] = out
        return self.model_copy(update=update)


def _dotted(loc: Sequence[Union[str, int]]) -> str:
    return ".".join(str(p) for p in loc)


def _line_of(node: Optional[yaml.Node], loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    if node is None:
        return None
    line = node.start_mark.line + 1
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((v for k, v in node.value if getattr(k, "value", None) == part), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            match = node.value[part]
        else:
            match = None
        if match is None:
            break
        node = match
        line = node.start_mark.line + 1
    return line


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"{source}: invalid YAML: {getattr(e, 'problem', e)}",
                          line=mark.line + 1 if mark else None)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: a scenario must be a mapping", line=1)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = list(first["loc"])
        raise ConfigError(f"{source}: {first['msg']}", field=_dotted(loc) or None,
                          line=_line_of(root, loc), context={"errors": len(e.errors())})


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        bundled = SCENARIO_DIR / f"{path.name}.yaml"
        if bundled.is_file():
            path = bundled
        else:
            raise ConfigError(f"scenario file not found: {path}")
    logger.debug(f"Loading scenario from {path}")
    return parse_scenario(path.read_text(), str(path))


def bundled_scenarios() -> List[Tuple[str, str]]:
    """(name, description) for every scenario shipped in ``scenarios/``."""
    found = []
    for path in sorted(SCENARIO_DIR.glob("*.yaml")):
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError:
            logger.warning(f"Skipping unreadable scenario {path.name}")
            continue
        found.append((path.stem, str(data.get("description", "")).strip()))
    return found
