"""Data models for strips, backgrounds, blocks and spectral results."""

from dataclasses import dataclass, field
from typing import Callable, Literal, TypeAlias

import numpy as np

from .errors import ConfigError

# Type aliases for clarity
MatrixPotential: TypeAlias = Callable[[np.ndarray], np.ndarray]  # x1 of shape (K,) -> (K, M, M)
Spacing: TypeAlias = tuple[int, int]
Interval: TypeAlias = tuple[float, float]
Direction: TypeAlias = Literal["plus", "minus"]
Family: TypeAlias = Literal["plus", "minus", "real"]
Side: TypeAlias = Literal["left", "right"]


@dataclass(frozen=True)
class CrossSection:
    """Strip cross-section (0, width) with Dirichlet walls and M sine modes."""

    width: float
    modes: int = 1

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise ConfigError(f"cross-section width must be positive, got {self.width}")
        if self.modes < 1:
            raise ConfigError(f"at least one transverse mode is required, got {self.modes}")

    @property
    def transverse_eigenvalues(self) -> np.ndarray:
        j = np.arange(1, self.modes + 1)
        return (j * np.pi / self.width) ** 2


@dataclass(frozen=True, eq=False)
class PeriodicBackground:
    """One period cell of a background; the potential is given in cell coordinates."""

    id: str
    period: float
    potential: MatrixPotential
    modes: int
    n_grid: int = 256

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ConfigError(f"background '{self.id}': period must be positive")
        if self.n_grid < 16:
            raise ConfigError(f"background '{self.id}': n_grid must be at least 16")

    @property
    def step(self) -> float:
        return self.period / self.n_grid

    @property
    def grid(self) -> np.ndarray:
        """Cell nodes 0, h, ..., T (both ends included)."""
        return np.linspace(0.0, self.period, self.n_grid + 1)

    @property
    def samples(self) -> np.ndarray:
        return self.value(self.grid)

    def value(self, xi: np.ndarray) -> np.ndarray:
        """Potential at arbitrary cell coordinates, continued periodically."""
        return self.potential(np.mod(np.asarray(xi, dtype=float), self.period))


@dataclass(frozen=True, eq=False)
class PerturbationBlock:
    """A single-perturbation operator: core on [-a_minus, a_plus] between two backgrounds."""

    id: str
    left_background: str
    right_background: str
    a_minus: float
    a_plus: float
    potential: MatrixPotential
    core_step: float = 0.01

    def __post_init__(self) -> None:
        if not (self.a_minus > 0 and self.a_plus > 0):
            raise ConfigError(f"block '{self.id}': core half-lengths must be positive")

    @property
    def core_length(self) -> float:
        return self.a_minus + self.a_plus

    @property
    def core_grid(self) -> np.ndarray:
        steps = max(1, int(np.ceil(self.core_length / self.core_step - 1e-9)))
        return np.linspace(-self.a_minus, self.a_plus, steps + 1)

    @property
    def core_samples(self) -> np.ndarray:
        return self.potential(self.core_grid)


@dataclass(frozen=True, eq=False)
class GluedAssembly:
    """Blocks glued along the strip: the operator with distant perturbations."""

    blocks: tuple[PerturbationBlock, ...]
    spacings: tuple[Spacing, ...]
    positions: tuple[float, ...]
    backgrounds: dict[str, PeriodicBackground]

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def modes(self) -> int:
        return next(iter(self.backgrounds.values())).modes

    def connector(self, k: int) -> PeriodicBackground:
        """Background between block k and block k+1 (zero-based)."""
        return self.backgrounds[self.blocks[k].right_background]

    @property
    def distances(self) -> np.ndarray:
        return np.diff(np.asarray(self.positions, dtype=float))

    @property
    def left_end(self) -> PeriodicBackground:
        return self.backgrounds[self.blocks[0].left_background]

    @property
    def right_end(self) -> PeriodicBackground:
        return self.backgrounds[self.blocks[-1].right_background]


# ============================================================================
# Floquet band data
# ============================================================================


@dataclass(eq=False)
class FloquetMode:
    """Eigenpair of the quasi-periodic cell problem at quasimomentum tau."""

    background_id: str
    band: int
    tau: complex
    energy: complex
    bloch_vector: np.ndarray  # (M * n_grid,) component-major, mean-square normalized


@dataclass(frozen=True)
class BandCrossing:
    """A real quasimomentum where band p meets lambda0."""

    background_id: str
    band: int
    tau: float
    derivative: float
    direction: Direction


@dataclass
class EssentialSpectrum:
    """Union of band intervals in a window, with a per-background position report."""

    intervals: list[Interval]
    reports: dict[str, str] = field(default_factory=dict)  # background id -> band | gap | edge

    def contains(self, value: float) -> bool:
        return any(lo <= value <= hi for lo, hi in self.intervals)


# ============================================================================
# Pencil data
# ============================================================================


@dataclass(eq=False)
class Monodromy:
    background_id: str
    energy: complex
    matrix: np.ndarray  # (2M, 2M)

    @property
    def multipliers(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


@dataclass(eq=False)
class PencilEigen:
    """Floquet exponent with its Jordan chain.

    ``chain_states`` holds the Cauchy data (u, u') at cell coordinate 0 of the Floquet
    solutions phi_s; ``chain`` holds the periodic parts Phi_s on the cell grid.
    """

    background_id: str
    exponent: complex
    multiplier: complex
    chain_states: list[np.ndarray]
    chain: list[np.ndarray]
    sign: Family
    residual: float = 0.0

    @property
    def chain_length(self) -> int:
        return len(self.chain_states)


@dataclass(frozen=True)
class DecayScale:
    mhat: float
    gamma: float
    levels: dict[str, int]  # J per connecting background
    kappa: int


# ============================================================================
# Bound states
# ============================================================================


@dataclass(eq=False)
class BoundState:
    block_id: str
    eigenvalue: float
    grid: np.ndarray  # block coordinates covering [-a_minus - pad, a_plus + pad]
    eigenvector: np.ndarray  # (len(grid), M)
    derivative: np.ndarray  # (len(grid), M)
    index: int = 1
    multiplicity: int = 1
    residual: float = 0.0


@dataclass(eq=False)
class TailExpansion:
    """Far-field amplitudes of a bound state on one side of its block.

    ``alpha[i]`` is the row of chain coefficients for the i-th exponent at level mhat,
    in block coordinates.
    """

    block_id: str
    side: Side
    exponents: list[PencilEigen]
    alpha: list[np.ndarray]
    residual_rate: float
    reconstruction_error: float


# ============================================================================
# Interaction and resonances
# ============================================================================


@dataclass(eq=False)
class CouplingTable:
    background_id: str
    plus: list[PencilEigen]
    minus: list[PencilEigen]
    entries: dict[tuple[int, int, int, int], complex]  # (i, s, q, t) -> K

    def __call__(self, i: int, s: int, q: int, t: int) -> complex:
        return self.entries.get((i, s, q, t), 0.0j)


@dataclass(frozen=True)
class InteractionScales:
    eta: float
    shortest: float
    longest: float
    kappa: int
    mhat: float
    gamma: float

    def remainder(self, size: int) -> float:
        """Error-bar scale eta^(1 - 1/N) exp(-(gamma/N) <l>)."""
        if size < 1:
            return 0.0
        return self.eta ** (1.0 - 1.0 / size) * np.exp(-(self.gamma / size) * self.shortest)


@dataclass(eq=False)
class InteractionMatrix:
    size: int
    matrix: np.ndarray
    offsets: list[int]
    eigenvalues: np.ndarray
    clusters: list[list[int]]
    scales: InteractionScales
    lambda0: float

    def block(self, r: int, k: int) -> np.ndarray:
        rows = slice(self.offsets[r], self.offsets[r + 1])
        cols = slice(self.offsets[k], self.offsets[k + 1])
        return self.matrix[rows, cols]


@dataclass(eq=False)
class RadiationBasis:
    end: Side
    energy: complex
    vectors: np.ndarray  # (2M, M) Cauchy data at the end seam
    outgoing: int
    gamma_minus: float
    gamma_plus: float


@dataclass
class Prediction:
    value: complex
    cluster: int
    error_bar: float


@dataclass
class LocatedRoot:
    value: complex
    multiplicity: int


@dataclass
class ResonanceResult:
    spacing: tuple[Spacing, ...]
    predicted: list[Prediction]
    located: list[LocatedRoot]
    residuals: list[float]
    winding: int
    radius: float
    count_ok: bool
    half_plane_ok: bool


@dataclass(frozen=True)
class RateFit:
    slope: float
    exponent: float
    prefactor: float
    points: int


# ============================================================================
# Experiment results
# ============================================================================


@dataclass(eq=False)
class StripModel:
    """Backgrounds and blocks built from a config, with the assembly order of the blocks."""

    cross_section: CrossSection
    backgrounds: dict[str, PeriodicBackground]
    blocks: dict[str, PerturbationBlock]
    order: tuple[str, ...]

    @property
    def assembly_blocks(self) -> list[PerturbationBlock]:
        return [self.blocks[block_id] for block_id in self.order]


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


@dataclass(eq=False)
class SpectralAnalysis:
    """Everything that does not depend on the spacings: lambda0, bound states, exponents."""

    lambda0: float
    states: dict[str, list[BoundState]]  # every eigenvalue found, per block id
    selected: dict[str, list[BoundState]]  # the states at lambda0
    pencils: dict[str, list[PencilEigen]]
    scale: DecayScale
    tables: dict[str, CouplingTable]  # per connecting background
    spectrum: EssentialSpectrum
    skipped: list[str] = field(default_factory=list)  # blocks whose window meets a band


@dataclass(eq=False)
class SpacingReport:
    assembly: GluedAssembly
    interaction: InteractionMatrix
    result: ResonanceResult
    checks: list[CheckResult] = field(default_factory=list)
    # Per block in assembly order: side -> one tail expansion per selected state
    tails: list[dict[str, list[TailExpansion]]] = field(default_factory=list)


@dataclass(eq=False)
class ExperimentReport:
    analysis: SpectralAnalysis
    spacings: list[SpacingReport]
    rate: RateFit | None = None
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def all_checks(self) -> list[CheckResult]:
        return self.checks + [c for report in self.spacings for c in report.checks]
