"""Discrete eigenvalues, eigenfunctions and tail amplitudes of single-perturbation blocks."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from ..errors import (
    FitIllConditioned,
    NoDecayingBasis,
    RateViolation,
    WindowTouchesBand,
)
from ..geometry import block_coefficient
from ..models import (
    BoundState,
    DecayScale,
    Interval,
    PencilEigen,
    PeriodicBackground,
    PerturbationBlock,
    Side,
    TailExpansion,
)
from .floquet import essential_spectrum_edges
from .pencil import floquet_states, level_exponents, shift_coefficients
from .propagation import CellPropagator, CorePropagator, monodromy, segment_propagator

logger = logging.getLogger(__name__)

SCAN_POINTS = 400
BAND_MARGIN = 1e-3
ROOT_TOLERANCE = 1e-12
MULTIPLICITY_TOLERANCE = 1e-8
MINIMUM_ACCEPT = 1e-7
UNIMODULAR_TOLERANCE = 1e-6
PAD_DECAY = 30.0
FIT_OFFSET_PERIODS = 1
FIT_LENGTH_PERIODS = 3
FIT_CONDITION_LIMIT = 1e8
NOISE_FLOOR = 1e-7
WALL_DECAY = 40.0


# ============================================================================
# Decaying frames and the matching matrix
# ============================================================================


@dataclass(eq=False)
class DecayingFrame:
    """Orthonormal basis of the Cauchy data decaying away from the block on one side.

    ``restricted`` is the monodromy restricted to the subspace in that basis, so whole
    periods act on frame coordinates as ``restricted`` (right) or its inverse (left).
    """

    side: Side
    basis: np.ndarray  # (2M, M)
    restricted: np.ndarray  # (M, M)
    rate: float


def decaying_frame(background: PeriodicBackground, energy: float, side: Side) -> DecayingFrame:
    """Ordered real Schur basis of the solutions decaying to the given side."""
    matrix = monodromy(background, energy).matrix
    modes = background.modes
    multipliers = np.linalg.eigvals(matrix)
    if np.any(np.abs(np.abs(multipliers) - 1.0) <= UNIMODULAR_TOLERANCE):
        raise NoDecayingBasis(
            f"energy {energy:.10g} lies in a band of '{background.id}'",
            background=background.id,
        )

    schur, vectors, count = scipy.linalg.schur(
        np.real(matrix), output="real", sort="iuc" if side == "right" else "ouc"
    )
    if count != modes:
        raise NoDecayingBasis(
            f"'{background.id}' has {count} solutions decaying to the {side}, expected {modes}",
            background=background.id,
        )
    selected = np.abs(multipliers)
    if side == "right":
        rate = -np.log(np.max(selected[selected < 1.0])) / background.period
    else:
        rate = np.log(np.min(selected[selected > 1.0])) / background.period
    return DecayingFrame(
        side=side,
        basis=vectors[:, :modes],
        restricted=schur[:modes, :modes],
        rate=float(rate),
    )


class BlockMatcher:
    """Matching matrices of one block at real energies, oriented against a fixed reference.

    Frames are graph-normalized against the frames at ``reference_energy`` so the matching
    determinant is a continuous real function of the energy.
    """

    def __init__(
        self,
        block: PerturbationBlock,
        backgrounds: dict[str, PeriodicBackground],
        reference_energy: float,
    ):
        self.block = block
        self.left = backgrounds[block.left_background]
        self.right = backgrounds[block.right_background]
        self.reference_energy = reference_energy
        self._reference_left = decaying_frame(self.left, reference_energy, "left").basis
        self._reference_right = decaying_frame(self.right, reference_energy, "right").basis

    def frames(self, energy: float) -> tuple[DecayingFrame, DecayingFrame]:
        left = decaying_frame(self.left, energy, "left")
        return left, decaying_frame(self.right, energy, "right")

    def oriented(
        self, energy: float
    ) -> tuple[np.ndarray, np.ndarray, DecayingFrame, DecayingFrame]:
        """Graph-normalized left and right frames at the seams, plus the raw frames."""
        left, right = self.frames(energy)
        b_left = left.basis @ np.linalg.inv(self._reference_left.T @ left.basis)
        b_right = right.basis @ np.linalg.inv(self._reference_right.T @ right.basis)
        return b_left, b_right, left, right

    def matrix(self, energy: float) -> np.ndarray:
        """[L | -R]: both frames carried to the block centre y = 0."""
        b_left, b_right, _, _ = self.oriented(energy)
        step = self.block.core_step
        potential = self.block.potential
        to_center_left = segment_propagator(potential, -self.block.a_minus, 0.0, energy, step)
        to_center_right = segment_propagator(potential, self.block.a_plus, 0.0, energy, step)
        return np.hstack([to_center_left @ b_left, -(to_center_right @ b_right)])

    def determinant(self, energy: float) -> float:
        return float(np.real(np.linalg.det(self.matrix(energy))))

    def singular_values(self, energy: float) -> np.ndarray:
        return normalized_singular_values(self.matrix(energy))


def normalized_singular_values(matrix: np.ndarray) -> np.ndarray:
    """Singular values of the column-normalized matrix, descending."""
    return scipy.linalg.svdvals(matrix / np.linalg.norm(matrix, axis=0))


def matching_determinant(
    block: PerturbationBlock,
    backgrounds: dict[str, PeriodicBackground],
    energy: float,
    reference_energy: float | None = None,
) -> float:
    """Determinant of the matching matrix at y = 0.

    Values taken with the same ``reference_energy`` form a continuous function of the
    energy; with no reference the frames are oriented at ``energy`` itself.
    """
    reference = energy if reference_energy is None else reference_energy
    return BlockMatcher(block, backgrounds, reference).determinant(energy)


# ============================================================================
# Eigenvalues
# ============================================================================


def check_window(
    backgrounds: Sequence[PeriodicBackground], window: Interval, band_margin: float = BAND_MARGIN
) -> None:
    lo, hi = window
    if not hi > lo:
        raise WindowTouchesBand(f"empty search window {window}")
    widened = (lo - band_margin, hi + band_margin)
    spectrum = essential_spectrum_edges(list(backgrounds), widened)
    if spectrum.intervals:
        raise WindowTouchesBand(
            f"search window {window} comes within {band_margin:g} of the essential spectrum "
            f"{spectrum.intervals}",
            backgrounds=",".join(b.id for b in backgrounds),
        )


def _roots(matcher: BlockMatcher, window: Interval, scan_points: int) -> list[float]:
    energies = np.linspace(window[0], window[1], scan_points)
    values = np.empty(scan_points)
    smallest = np.empty(scan_points)
    for j, energy in enumerate(energies):
        matrix = matcher.matrix(energy)
        values[j] = np.real(np.linalg.det(matrix))
        smallest[j] = normalized_singular_values(matrix)[-1]

    roots: list[float] = []
    bracketed = np.zeros(scan_points - 1, dtype=bool)
    for j in range(scan_points - 1):
        if values[j] == 0.0:
            roots.append(float(energies[j]))
            bracketed[j] = True
        elif values[j] * values[j + 1] < 0:
            root = scipy.optimize.brentq(
                matcher.determinant, energies[j], energies[j + 1], xtol=ROOT_TOLERANCE
            )
            if matcher.singular_values(root)[-1] < MINIMUM_ACCEPT:
                roots.append(float(root))
                bracketed[j] = True
            else:
                logger.debug(f"Sign change near {root:.10g} is not a root of the matching matrix")

    # Even-multiplicity roots leave no sign change; refine the minima of sigma_min instead.
    for j in range(1, scan_points - 1):
        if not (smallest[j] < smallest[j - 1] and smallest[j] <= smallest[j + 1]):
            continue
        if bracketed[j - 1] or bracketed[j]:
            continue
        result = scipy.optimize.minimize_scalar(
            lambda e: matcher.singular_values(e)[-1],
            bounds=(energies[j - 1], energies[j + 1]),
            method="bounded",
            options={"xatol": ROOT_TOLERANCE},
        )
        if result.fun < MINIMUM_ACCEPT:
            roots.append(float(result.x))
    return sorted(roots)


def discrete_eigenvalues(
    block: PerturbationBlock,
    backgrounds: dict[str, PeriodicBackground],
    window: Interval,
    *,
    scan_points: int = SCAN_POINTS,
    band_margin: float = BAND_MARGIN,
    pad_decay: float = PAD_DECAY,
    tail_periods: int = FIT_OFFSET_PERIODS + 2 * FIT_LENGTH_PERIODS,
) -> list[BoundState]:
    """All eigenvalues of the block in a gap window, with normalized eigenvectors."""
    sides = [backgrounds[block.left_background], backgrounds[block.right_background]]
    check_window(sides, window, band_margin)
    matcher = BlockMatcher(block, backgrounds, 0.5 * (window[0] + window[1]))

    states: list[BoundState] = []
    for root in _roots(matcher, window, scan_points):
        singular = matcher.singular_values(root)
        multiplicity = max(1, int(np.sum(singular < MULTIPLICITY_TOLERANCE * singular[0])))
        residual = float(singular[-1] / singular[0])
        vectors = eigenvectors(matcher, root, multiplicity, pad_decay, tail_periods)
        for p, (grid, values, derivative) in enumerate(vectors, start=1):
            states.append(
                BoundState(
                    block_id=block.id,
                    eigenvalue=root,
                    grid=grid,
                    eigenvector=values,
                    derivative=derivative,
                    index=p,
                    multiplicity=multiplicity,
                    residual=residual,
                )
            )
        logger.info(
            f"Block '{block.id}': eigenvalue {root:.12g} (multiplicity {multiplicity}, "
            f"residual {residual:.2e})"
        )
    if not states:
        logger.info(f"Block '{block.id}' has no eigenvalues in {window}")
    return states


# ============================================================================
# Eigenvectors
# ============================================================================


def _tail_cells(rate: float, period: float, pad_decay: float, minimum: int) -> int:
    return max(int(np.ceil(pad_decay / (2.0 * rate * period))), minimum)


def eigenvectors(
    matcher: BlockMatcher,
    energy: float,
    multiplicity: int,
    pad_decay: float = PAD_DECAY,
    tail_periods: int = FIT_OFFSET_PERIODS + 2 * FIT_LENGTH_PERIODS,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Normalized eigenvectors (grid, values, derivatives) for the kernel of the matching matrix.

    The core is propagated numerically; the exterior tails are generated from the frame
    coordinates with the exact one-period shift, so they carry no growing error.
    """
    block = matcher.block
    left_bg, right_bg = matcher.left, matcher.right
    b_left, _, left, right = matcher.oriented(energy)
    _, _, vh = scipy.linalg.svd(matcher.matrix(energy))
    kernel = vh[-multiplicity:].conj().T

    core = CorePropagator(block, energy)
    left_cells = _tail_cells(left.rate, left_bg.period, pad_decay, tail_periods + 1)
    right_cells = _tail_cells(right.rate, right_bg.period, pad_decay, tail_periods + 1)
    left_prop = CellPropagator(left_bg, energy)
    right_prop = CellPropagator(right_bg, energy)

    local = left_bg.grid[:-1]
    left_grid = np.concatenate(
        [-block.a_minus - (m + 1) * left_bg.period + local for m in range(left_cells - 1, -1, -1)]
    )
    right_grid = np.concatenate(
        [block.a_plus + m * right_bg.period + right_bg.grid[1:] for m in range(right_cells)]
    )
    grid = np.concatenate([left_grid, core.grid, right_grid])
    modes = left_bg.modes

    results = []
    for column in kernel.T:
        seam_left = b_left @ np.real(column[:modes])
        coords_left = np.linalg.lstsq(left.basis, seam_left, rcond=None)[0]
        inverse = np.linalg.inv(left.restricted)
        pieces = []
        for m in range(left_cells - 1, -1, -1):
            start = left.basis @ (np.linalg.matrix_power(inverse, m + 1) @ coords_left)
            pieces.append(left_prop.nodes[:-1] @ start)
        core_states = core.nodes @ seam_left
        coords_right = np.linalg.lstsq(right.basis, core_states[-1], rcond=None)[0]
        for m in range(right_cells):
            start = right.basis @ (np.linalg.matrix_power(right.restricted, m) @ coords_right)
            pieces.append(right_prop.nodes[1:] @ start)
        pieces.insert(left_cells, core_states)
        data = np.concatenate(pieces)
        results.append(data)

    results = _orthonormalize(grid, results, modes, left, right, left_bg, right_bg)
    return [(grid, data[:, :modes], data[:, modes:]) for data in results]


def _inner(grid: np.ndarray, u: np.ndarray, v: np.ndarray, modes: int) -> float:
    return float(scipy.integrate.trapezoid(np.sum(u[:, :modes] * v[:, :modes], axis=1), grid))


def _tail_mass(
    grid: np.ndarray,
    data: np.ndarray,
    modes: int,
    left: DecayingFrame,
    right: DecayingFrame,
    left_bg: PeriodicBackground,
    right_bg: PeriodicBackground,
) -> float:
    """Geometric estimate of the mass beyond the padded window."""
    mass = 0.0
    for frame, background, cell in (
        (left, left_bg, slice(0, left_bg.n_grid + 1)),
        (right, right_bg, slice(len(grid) - right_bg.n_grid - 1, len(grid))),
    ):
        ratio = np.exp(-2.0 * frame.rate * background.period)
        outer = _inner(grid[cell], data[cell], data[cell], modes)
        mass += outer * ratio / (1.0 - ratio)
    return mass


def _orthonormalize(
    grid: np.ndarray,
    vectors: list[np.ndarray],
    modes: int,
    left: DecayingFrame,
    right: DecayingFrame,
    left_bg: PeriodicBackground,
    right_bg: PeriodicBackground,
) -> list[np.ndarray]:
    """Modified Gram-Schmidt in the discrete inner product, then a sign convention."""
    basis: list[np.ndarray] = []
    for data in vectors:
        data = np.real(data)
        for other in basis:
            data = data - _inner(grid, other, data, modes) * other
        norm = _inner(grid, data, data, modes) + _tail_mass(
            grid, data, modes, left, right, left_bg, right_bg
        )
        data = data / np.sqrt(norm)
        values = data[:, :modes]
        lead = np.unravel_index(np.argmax(np.abs(values)), values.shape)
        if values[lead] < 0:
            data = -data
        basis.append(data)
    return basis


# ============================================================================
# Tail coefficients
# ============================================================================


def _window_mask(grid: np.ndarray, lo: float, hi: float) -> np.ndarray:
    tolerance = 1e-9 * max(1.0, abs(lo), abs(hi))
    return (grid >= lo - tolerance) & (grid <= hi + tolerance)


def tail_coefficients(
    block: PerturbationBlock,
    state: BoundState,
    side: Side,
    exponents: Sequence[PencilEigen],
    scale: DecayScale,
    backgrounds: dict[str, PeriodicBackground],
    *,
    offset_periods: int = FIT_OFFSET_PERIODS,
    length_periods: int = FIT_LENGTH_PERIODS,
    lambda0: float | None = None,
) -> TailExpansion:
    """Amplitudes of the level-mhat Floquet solutions in the state's far field.

    The fit runs in cell coordinates anchored at the seam and the result is re-anchored
    to block coordinates, where the Floquet solutions use the block's own origin.
    """
    background = backgrounds[block.right_background if side == "right" else block.left_background]
    period = background.period
    family = "plus" if side == "right" else "minus"
    level = level_exponents(exponents, scale.mhat, family)
    energy = state.eigenvalue if lambda0 is None else lambda0
    propagator = CellPropagator(background, energy)
    modes = background.modes

    seam = block.a_plus if side == "right" else -block.a_minus
    direction = 1.0 if side == "right" else -1.0
    data = np.hstack([state.eigenvector, state.derivative])

    def window(start: int, stop: int) -> np.ndarray:
        a = seam + direction * start * period
        b = seam + direction * stop * period
        return _window_mask(state.grid, min(a, b), max(a, b))

    fit = window(offset_periods, offset_periods + length_periods)
    xi = state.grid[fit] - seam
    target = data[fit].reshape(-1)

    columns = []
    for eigen in level:
        solutions = floquet_states(eigen, propagator, xi)  # (kappa, K, 2M)
        columns.extend(solutions[s].reshape(-1) for s in range(eigen.chain_length))

    if columns:
        design = np.column_stack(columns)
        normalized = design / np.linalg.norm(design, axis=0)
        condition = np.linalg.cond(normalized)
        if not np.isfinite(condition) or condition > FIT_CONDITION_LIMIT:
            raise FitIllConditioned(
                f"Floquet solutions are nearly collinear on the fit window of block "
                f"'{block.id}' ({side}), condition {condition:.3g}",
                block=block.id,
            )
        coefficients = scipy.linalg.lstsq(design, target.astype(complex))[0]
        fitted = design @ coefficients
    else:
        coefficients = np.zeros(0, dtype=complex)
        fitted = np.zeros_like(target, dtype=complex)

    scale_norm = np.linalg.norm(target)
    reconstruction = float(np.linalg.norm(target - fitted) / scale_norm) if scale_norm else 0.0
    if reconstruction > 1e-6:
        logger.warning(
            f"Tail fit of block '{block.id}' ({side}) reconstructs the state to "
            f"{reconstruction:.2e} relative"
        )

    alpha: list[np.ndarray] = []
    position = 0
    for eigen in level:
        cell = coefficients[position : position + eigen.chain_length]
        position += eigen.chain_length
        shift = -seam
        alpha.append(np.exp(1j * eigen.exponent * shift) * shift_coefficients(cell, shift))

    rate = _remainder_rate(
        state,
        level,
        propagator,
        coefficients,
        seam=seam,
        direction=direction,
        start=offset_periods + length_periods,
        cells=length_periods,
        typical=scale_norm / np.sqrt(max(int(fit.sum()), 1)),
    )
    required = scale.gamma - 0.1 * scale.mhat
    if rate < required:
        raise RateViolation(
            f"remainder of block '{block.id}' ({side}) decays at {rate:.4g}, "
            f"below the required {required:.4g}",
            block=block.id,
        )

    return TailExpansion(
        block_id=block.id,
        side=side,
        exponents=list(level),
        alpha=alpha,
        residual_rate=rate,
        reconstruction_error=reconstruction,
    )


def _remainder_rate(
    state: BoundState,
    level: Sequence[PencilEigen],
    propagator: CellPropagator,
    coefficients: np.ndarray,
    *,
    seam: float,
    direction: float,
    start: int,
    cells: int,
    typical: float,
) -> float:
    """Exponential rate of the state minus its level-mhat part, from per-cell RMS values."""
    period = propagator.background.period
    modes = propagator.background.modes
    centres, sizes = [], []
    for c in range(start, start + cells):
        a = seam + direction * c * period
        b = seam + direction * (c + 1) * period
        mask = _window_mask(state.grid, min(a, b), max(a, b))
        if not np.any(mask):
            continue
        xi = state.grid[mask] - seam
        remainder = state.eigenvector[mask].astype(complex)
        position = 0
        for eigen in level:
            solutions = floquet_states(eigen, propagator, xi)[:, :, :modes]
            for s in range(eigen.chain_length):
                remainder -= coefficients[position + s] * solutions[s]
            position += eigen.chain_length
        size = float(np.sqrt(np.mean(np.abs(remainder) ** 2)))
        if size > NOISE_FLOOR * typical:
            centres.append((c + 0.5) * period)
            sizes.append(size)
    if len(sizes) < 2:
        return np.inf
    slope = np.polyfit(centres, np.log(sizes), 1)[0]
    return float(-slope)


# ============================================================================
# Oracle and lambda0 selection
# ============================================================================


def _dense_levels(
    block: PerturbationBlock,
    backgrounds: dict[str, PeriodicBackground],
    window: Interval,
    wall: float,
    step: float,
) -> np.ndarray:
    count = int(np.ceil(wall / step))
    nodes = step * np.arange(-count + 1, count)
    values = block_coefficient(block, backgrounds, nodes)  # (K, M, M)
    size, modes, _ = values.shape

    band = np.zeros((modes + 1, size * modes))
    idx = np.arange(size)
    for m in range(modes):
        band[modes, idx * modes + m] = 2.0 / step**2 + values[:, m, m]
        for d in range(1, modes - m):
            band[modes - d, idx * modes + m + d] = values[:, m, m + d]
    band[0, modes:] = -1.0 / step**2
    return scipy.linalg.eig_banded(
        band, lower=False, eigvals_only=True, select="v", select_range=window
    )


def truncated_dense_eigenvalues(
    block: PerturbationBlock,
    backgrounds: dict[str, PeriodicBackground],
    window: Interval,
    *,
    step: float = 0.02,
    wall: float | None = None,
) -> np.ndarray:
    """Eigenvalues in the window of the block cut off by Dirichlet walls.

    Second-order differences on a grid through y = 0, extrapolated from steps h and h/2.
    """
    if wall is None:
        centre = 0.5 * (window[0] + window[1])
        rate = min(
            decaying_frame(backgrounds[block.left_background], centre, "left").rate,
            decaying_frame(backgrounds[block.right_background], centre, "right").rate,
        )
        wall = max(block.a_minus, block.a_plus) + WALL_DECAY / rate

    coarse = _dense_levels(block, backgrounds, window, wall, step)
    fine = _dense_levels(block, backgrounds, window, wall, 0.5 * step)
    if coarse.size != fine.size:
        logger.warning(
            f"Dense oracle for '{block.id}' found {coarse.size} and {fine.size} levels at "
            f"steps {step:g} and {step / 2:g}; using the finer grid"
        )
        return fine
    return (4.0 * fine - coarse) / 3.0


def select_lambda0(
    states: dict[str, list[BoundState]],
    hint: float | None,
    cluster_tolerance: float = 1e-9,
    snap_tolerance: float = 1e-6,
) -> tuple[float | None, dict[str, list[BoundState]]]:
    """Pick lambda0 and the bound states of every block that share it.

    Eigenvalues of different blocks within ``cluster_tolerance`` count as one and their
    mean is used. With no hint the group shared by the most blocks wins, lowest first.
    A hint away from every eigenvalue is kept as a resolvent point with no states.
    """
    values = sorted({s.eigenvalue for group in states.values() for s in group})
    groups: list[list[float]] = []
    for value in values:
        if groups and value - groups[-1][-1] <= cluster_tolerance:
            groups[-1].append(value)
        else:
            groups.append([value])

    def members(group: list[float]) -> dict[str, list[BoundState]]:
        lo, hi = group[0], group[-1]
        return {
            block_id: [s for s in group_states if lo <= s.eigenvalue <= hi]
            for block_id, group_states in states.items()
        }

    if hint is None:
        if not groups:
            return None, {block_id: [] for block_id in states}
        best = max(groups, key=lambda g: (sum(bool(v) for v in members(g).values()), -g[0]))
    else:
        if not groups:
            return hint, {block_id: [] for block_id in states}
        best = min(groups, key=lambda g: abs(float(np.mean(g)) - hint))
        if abs(float(np.mean(best)) - hint) > snap_tolerance * max(1.0, abs(hint)):
            return hint, {block_id: [] for block_id in states}

    if len(best) > 1:
        logger.info(
            f"Merging near-degenerate eigenvalues {best} (spread {best[-1] - best[0]:.2e})"
        )
    return float(np.mean(best)), members(best)
