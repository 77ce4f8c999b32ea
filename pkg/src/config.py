"""Experiment configuration: pydantic schema, file loading and environment defaults."""

import json
import logging
import math
import os
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import yaml
from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from .errors import ConfigError

logger = logging.getLogger(__name__)

Pair = tuple[PositiveInt, PositiveInt]
SpacingEntry = Union[Pair, list[Pair]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Model description
# ============================================================================


class CrossSectionConfig(_Strict):
    width: PositiveFloat = math.pi
    modes: PositiveInt = 1


class ExpressionPotentialConfig(_Strict):
    kind: Literal["expression"]
    text: str


class TablePotentialConfig(_Strict):
    kind: Literal["table"]
    x: list[float] = Field(min_length=2)
    values: list[float] = Field(min_length=2)

    @model_validator(mode="after")
    def _matching_lengths(self) -> "TablePotentialConfig":
        if len(self.x) != len(self.values):
            raise ValueError(f"table has {len(self.x)} nodes but {len(self.values)} values")
        return self


PotentialConfig = Annotated[
    Union[ExpressionPotentialConfig, TablePotentialConfig], Field(discriminator="kind")
]


class BackgroundConfig(_Strict):
    id: str
    period: PositiveFloat
    potential: PotentialConfig


class BlockConfig(_Strict):
    id: str
    left: str
    right: str
    a_minus: PositiveFloat
    a_plus: PositiveFloat
    potential: PotentialConfig


class AssemblyConfig(_Strict):
    block_ids: list[str] = Field(min_length=2)
    spacings: SpacingEntry = (2, 2)


# ============================================================================
# Numerical knobs
# ============================================================================


class SolverConfig(_Strict):
    """Tolerances and discretization knobs shared by every stage."""

    n_grid: int = Field(256, ge=16)
    core_step: PositiveFloat = 0.01
    derivative_floor: PositiveFloat = 1e-6
    degeneracy_floor: PositiveFloat = 1e-8
    continuation_radius: PositiveFloat = 0.5
    continuation_steps: PositiveInt = 4
    cluster_tolerance: PositiveFloat = 1e-9
    cluster_factor: PositiveFloat = 10.0
    disc_constant: PositiveFloat = 8.0
    band_margin: PositiveFloat = 1e-3
    fit_offset_periods: NonNegativeInt = 1
    fit_length_periods: PositiveInt = 3
    pad_decay: PositiveFloat = 30.0
    scan_points: int = Field(400, ge=8)
    contour_points: int = Field(64, ge=8)
    exponent_tolerance: PositiveFloat = 1e-9
    dense_step: PositiveFloat = 0.02
    jobs: PositiveInt = 1


class ExperimentConfig(_Strict):
    cross_section: CrossSectionConfig = CrossSectionConfig()
    backgrounds: list[BackgroundConfig] = Field(min_length=1)
    blocks: list[BlockConfig] = Field(min_length=1)
    assembly: AssemblyConfig
    lambda0: Union[float, Literal["auto"]] = "auto"
    search_window: tuple[float, float]
    sweep: list[SpacingEntry] = Field(default_factory=list)
    solver: SolverConfig = SolverConfig()
    output_dir: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _references(self) -> "ExperimentConfig":
        background_ids = [bg.id for bg in self.backgrounds]
        block_ids = [block.id for block in self.blocks]
        for kind, ids in (("background", background_ids), ("block", block_ids)):
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            if duplicates:
                raise ValueError(f"duplicate {kind} ids: {', '.join(duplicates)}")

        for block in self.blocks:
            for bg_id in (block.left, block.right):
                if bg_id not in background_ids:
                    raise ValueError(f"block '{block.id}' refers to unknown background '{bg_id}'")
        for block_id in self.assembly.block_ids:
            if block_id not in block_ids:
                raise ValueError(f"assembly refers to unknown block '{block_id}'")

        lo, hi = self.search_window
        if not hi > lo:
            raise ValueError(f"search_window must be increasing, got {self.search_window}")
        if self.lambda0 != "auto" and not lo <= self.lambda0 <= hi:
            raise ValueError(f"lambda0={self.lambda0} lies outside search_window {lo, hi}")

        for entry in [self.assembly.spacings] + list(self.sweep):
            self.expand(entry)
        return self

    @property
    def connectors(self) -> int:
        return len(self.assembly.block_ids) - 1

    def expand(self, entry: SpacingEntry) -> tuple[tuple[int, int], ...]:
        """A single pair applies to every connector; a list gives one pair per connector."""
        if isinstance(entry, tuple):
            return (tuple(entry),) * self.connectors
        if len(entry) != self.connectors:
            raise ValueError(
                f"spacing {entry} has {len(entry)} pairs for {self.connectors} connectors"
            )
        return tuple(tuple(pair) for pair in entry)

    def spacing_sets(self) -> list[tuple[tuple[int, int], ...]]:
        """The sweep, or the assembly's own spacing when no sweep is given."""
        entries = self.sweep or [self.assembly.spacings]
        return [self.expand(entry) for entry in entries]


# ============================================================================
# Loading
# ============================================================================


class Environment(BaseModel):
    log_level: str = "INFO"
    output_dir: str = "results"
    jobs: PositiveInt = 1


def load_environment() -> Environment:
    """Defaults from the process environment (and a .env file when present)."""
    load_dotenv()
    try:
        return Environment(
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
            output_dir=os.getenv("STRIP_RESONANCES_OUT", "results"),
            jobs=os.getenv("STRIP_RESONANCES_JOBS", "1"),
        )
    except ValidationError as e:
        raise ConfigError(f"bad environment settings: {_first_error(e)}") from e


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    extra = f" (+{error.error_count() - 1} more)" if error.error_count() > 1 else ""
    return f"{location}: {first['msg']}{extra}"


def parse_config(data: Any, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {source}: {_first_error(e)}", source=source) from e


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON or YAML experiment file (chosen by extension) and validate it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", source=str(path)) from e

    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"malformed config {path}: {e}", source=str(path)) from e

    config = parse_config(data, str(path))
    logger.info(
        f"Loaded config {path}: {len(config.blocks)} blocks, {len(config.backgrounds)} "
        f"backgrounds, {len(config.spacing_sets())} spacing sets"
    )
    return config


def with_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Apply command-line overrides (modes, grid, seed, out, jobs, spacings); None means keep."""
    data = config.model_dump()
    if overrides.get("modes") is not None:
        data["cross_section"]["modes"] = overrides["modes"]
    if overrides.get("grid") is not None:
        data["solver"]["n_grid"] = overrides["grid"]
    if overrides.get("jobs") is not None:
        data["solver"]["jobs"] = overrides["jobs"]
    if overrides.get("seed") is not None:
        data["seed"] = overrides["seed"]
    if overrides.get("out") is not None:
        data["output_dir"] = str(overrides["out"])
    if overrides.get("spacings") is not None:
        data["sweep"] = overrides["spacings"]
    return parse_config(data, "<overrides>")


def parse_spacings(text: str) -> list[SpacingEntry]:
    """'2,2;4,4' -> [(2, 2), (4, 4)]; '2,2/3,3' inside an entry gives one pair per connector."""
    entries: list[SpacingEntry] = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        pairs = []
        for part in chunk.split("/"):
            values = [v.strip() for v in part.split(",")]
            if len(values) != 2:
                raise ConfigError(f"spacing '{part}' must be two comma-separated integers")
            try:
                pairs.append((int(values[0]), int(values[1])))
            except ValueError as e:
                raise ConfigError(f"spacing '{part}' must be two comma-separated integers") from e
        entries.append(pairs[0] if len(pairs) == 1 else pairs)
    if not entries:
        raise ConfigError(f"no spacings in '{text}'")
    return entries
