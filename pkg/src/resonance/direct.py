"""Direct resonance solver: scattering determinant under the radiation condition.

The right-end admissible subspace is carried leftward across the glued structure and
matched against the left-end subspace. Admissible subspaces are spectral projections of
the end monodromies, so the determinant is holomorphic in the energy.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from ..errors import ContinuationFailure, Overflow, WindingUnstable
from ..models import (
    BandCrossing,
    GluedAssembly,
    LocatedRoot,
    PeriodicBackground,
    RadiationBasis,
    ResonanceResult,
    Side,
)
from ..spectral import (
    CorePropagator,
    classify_directions,
    monodromy,
    quasimomentum_continue,
)

logger = logging.getLogger(__name__)

UNIMODULAR_TOLERANCE = 1e-6
CONDITION_LIMIT = 1e8
CONTOUR_POINTS = 64
MAX_CONTOUR_POINTS = 8192
PHASE_STEP = 0.5 * np.pi
RETRIES = 3
HALF_PLANE_TOLERANCE = 1e-10
ROOT_RATIO = 1e-7


@dataclass(eq=False)
class EndData:
    """Classification of one end background at lambda0."""

    side: Side
    background: PeriodicBackground
    crossings: list[BandCrossing]
    multipliers: np.ndarray  # (2M,) at lambda0
    admissible: np.ndarray  # boolean mask over multipliers
    reference: np.ndarray  # (2M, M) admissible eigenvectors at lambda0
    crossing_of: dict[int, BandCrossing]  # multiplier index -> crossing
    rate: float


@dataclass(eq=False)
class _Spectral:
    multipliers: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray


def _decompose(matrix: np.ndarray) -> _Spectral:
    multipliers, vectors = scipy.linalg.eig(matrix)
    return _Spectral(multipliers=multipliers, vectors=vectors, inverse=np.linalg.inv(vectors))


class ScatteringSolver:
    """Scattering determinant of one assembly near lambda0.

    End classifications and reference frames are computed once; every determinant
    evaluation then costs one monodromy per distinct background and one pass per core.
    """

    def __init__(
        self,
        assembly: GluedAssembly,
        lambda0: float,
        continuation_radius: float = 0.5,
        continuation_steps: int = 4,
        derivative_floor: float = 1e-6,
        degeneracy_floor: float = 1e-8,
    ):
        self.assembly = assembly
        self.lambda0 = lambda0
        self.continuation_radius = continuation_radius
        self.continuation_steps = continuation_steps
        self.derivative_floor = derivative_floor
        self.degeneracy_floor = degeneracy_floor
        self.left = self._classify(assembly.left_end, "left")
        self.right = self._classify(assembly.right_end, "right")
        logger.info(
            f"Ends at lambda0={lambda0:.10g}: left '{self.left.background.id}' "
            f"{len(self.left.crossing_of)} band crossings, right '{self.right.background.id}' "
            f"{len(self.right.crossing_of)} band crossings"
        )

    # ------------------------------------------------------------------
    # Radiation bases
    # ------------------------------------------------------------------

    def _classify(self, background: PeriodicBackground, side: Side) -> EndData:
        spectral = _decompose(monodromy(background, self.lambda0).matrix.astype(complex))
        modulus = np.abs(spectral.multipliers)
        unimodular = np.abs(modulus - 1.0) <= UNIMODULAR_TOLERANCE
        crossings = (
            classify_directions(
                background, self.lambda0, self.derivative_floor, self.degeneracy_floor
            )
            if np.any(unimodular)
            else []
        )

        outgoing = "plus" if side == "right" else "minus"
        crossing_of: dict[int, BandCrossing] = {}
        admissible = (modulus < 1.0) if side == "right" else (modulus > 1.0)
        admissible &= ~unimodular
        for index in np.flatnonzero(unimodular):
            crossing = self._match_crossing(background, spectral.multipliers[index], crossings)
            crossing_of[int(index)] = crossing
            if crossing.direction == outgoing:
                admissible[index] = True

        modes = background.modes
        if int(admissible.sum()) != modes:
            raise ContinuationFailure(
                f"end '{background.id}' has {int(admissible.sum())} admissible solutions, "
                f"expected {modes}",
                background=background.id,
            )
        decaying = modulus[~unimodular]
        if side == "right":
            rates = -np.log(decaying[decaying < 1.0]) / background.period
        else:
            rates = np.log(decaying[decaying > 1.0]) / background.period
        return EndData(
            side=side,
            background=background,
            crossings=crossings,
            multipliers=spectral.multipliers,
            admissible=admissible,
            reference=spectral.vectors[:, admissible],
            crossing_of=crossing_of,
            rate=float(np.min(rates)) if rates.size else np.inf,
        )

    @staticmethod
    def _match_crossing(
        background: PeriodicBackground, rho: complex, crossings: Sequence[BandCrossing]
    ) -> BandCrossing:
        distances = [abs(np.exp(1j * c.tau * background.period) - rho) for c in crossings]
        if not distances or min(distances) > 1e-4:
            raise ContinuationFailure(
                f"unimodular multiplier {rho:.8g} of '{background.id}' matches no band crossing",
                background=background.id,
            )
        return crossings[int(np.argmin(distances))]

    def _predicted(self, end: EndData, energy: complex) -> np.ndarray:
        """First-order continuation of the lambda0 multipliers to the given energy."""
        predicted = end.multipliers.copy()
        period = end.background.period
        for index, crossing in end.crossing_of.items():
            tau = crossing.tau + (energy - self.lambda0) / crossing.derivative
            predicted[index] = np.exp(1j * tau * period)
        return predicted

    def _selection(self, end: EndData, spectral: _Spectral, energy: complex) -> np.ndarray:
        predicted = self._predicted(end, energy)
        distance = np.abs(predicted[:, None] - spectral.multipliers[None, :])
        cost = distance / np.abs(predicted)[:, None]
        rows, cols = scipy.optimize.linear_sum_assignment(cost)
        chosen = np.zeros(predicted.size, dtype=bool)
        chosen[cols[end.admissible[rows]]] = True

        good = predicted[end.admissible]
        bad = predicted[~end.admissible]
        separation = np.min(np.abs(good[:, None] - bad[None, :]))
        error = np.max(distance[rows, cols])
        if separation > 0 and error > 0.5 * separation:
            raise ContinuationFailure(
                f"multipliers of '{end.background.id}' cannot be tracked to {energy:.8g} "
                f"(drift {error:.3g}, separation {separation:.3g})",
                background=end.background.id,
            )
        return chosen

    def _check_disc(self, energy: complex) -> None:
        if abs(energy - self.lambda0) > self.continuation_radius:
            raise ContinuationFailure(
                f"energy {energy:.8g} lies outside the continuation disc of radius "
                f"{self.continuation_radius:g} around {self.lambda0:.8g}"
            )

    def radiation_basis(
        self, side: Side, energy: complex, spectral: _Spectral | None = None
    ) -> RadiationBasis:
        """Admissible solutions at the end seam: outgoing waves plus decaying solutions.

        The basis is the range of the spectral projector of the end monodromy at ``energy``
        onto the multipliers tracked from lambda0 by the first-order quasimomentum shift and
        an assignment match. Newton continuation of the quasimomenta is not used here; it
        only backs :meth:`continued_multipliers`, which the invariant suite compares against
        :meth:`selected_multipliers`.
        """
        self._check_disc(energy)
        end = self.left if side == "left" else self.right
        if spectral is None:
            spectral = _decompose(monodromy(end.background, energy).matrix.astype(complex))
        chosen = self._selection(end, spectral, energy)
        projector = spectral.vectors[:, chosen] @ spectral.inverse[chosen, :]
        vectors = projector @ end.reference

        condition = np.linalg.cond(vectors / np.linalg.norm(vectors, axis=0))
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            raise ContinuationFailure(
                f"radiation basis of '{end.background.id}' is degenerate at {energy:.8g}",
                background=end.background.id,
            )
        gamma = end.rate / np.sqrt(2.0)
        return RadiationBasis(
            end=side,
            energy=energy,
            vectors=vectors,
            outgoing=len([c for c in end.crossing_of.values() if c.direction == _out(side)]),
            gamma_minus=-gamma,
            gamma_plus=gamma,
        )

    def continued_multipliers(self, side: Side, energy: complex) -> list[complex]:
        """Multipliers of the outgoing waves from Newton continuation of the quasimomenta."""
        end = self.left if side == "left" else self.right
        period = end.background.period
        values = []
        for crossing in end.crossings:
            if crossing.direction != _out(side):
                continue
            tau = quasimomentum_continue(
                end.background,
                crossing,
                self.lambda0,
                energy,
                radius=self.continuation_radius,
                steps=self.continuation_steps,
                derivative_floor=self.derivative_floor,
            )
            values.append(complex(np.exp(1j * tau * period)))
        return values

    def selected_multipliers(self, side: Side, energy: complex) -> list[complex]:
        end = self.left if side == "left" else self.right
        spectral = _decompose(monodromy(end.background, energy).matrix.astype(complex))
        chosen = self._selection(end, spectral, energy)
        return [complex(spectral.multipliers[j]) for j in np.flatnonzero(chosen)]

    # ------------------------------------------------------------------
    # Determinant
    # ------------------------------------------------------------------

    def scattering_determinant(self, energy: complex) -> tuple[float, float]:
        """(log|D|, arg D) of the matching determinant at the left end seam."""
        self._check_disc(energy)
        assembly = self.assembly
        cache: dict[str, _Spectral] = {}

        def spectral_of(background: PeriodicBackground) -> _Spectral:
            if background.id not in cache:
                matrix = monodromy(background, energy).matrix.astype(complex)
                cache[background.id] = _decompose(matrix)
            return cache[background.id]

        right = self.radiation_basis("right", energy, spectral_of(assembly.right_end))
        left = self.radiation_basis("left", energy, spectral_of(assembly.left_end))

        state = right.vectors
        log_abs, phase = 0.0, 0.0
        for k in range(assembly.n - 1, -1, -1):
            core = CorePropagator(assembly.blocks[k], energy)
            state = np.linalg.solve(core.matrix, state)
            state, gain_abs, gain_phase = _renormalize(state)
            log_abs, phase = log_abs + gain_abs, phase + gain_phase
            if k == 0:
                break
            connector = assembly.connector(k - 1)
            spectral = spectral_of(connector)
            cells = sum(assembly.spacings[k - 1])
            coords = spectral.inverse @ state
            coords = coords * (spectral.multipliers ** (-cells))[:, None]
            state = spectral.vectors @ coords
            state, gain_abs, gain_phase = _renormalize(state)
            log_abs, phase = log_abs + gain_abs, phase + gain_phase

        value = np.linalg.det(np.hstack([left.vectors, state]))
        if value == 0:
            return -np.inf, float(phase)
        return float(np.log(abs(value)) + log_abs), float(np.angle(value) + phase)

    def relative_value(self, energy: complex, reference: tuple[float, float]) -> complex:
        log_abs, phase = self.scattering_determinant(energy)
        return complex(np.exp(log_abs - reference[0] + 1j * (phase - reference[1])))

    def cauchy_riemann_defect(self, energy: complex, step: float = 1e-6) -> float:
        """|dD/d conj(lambda)| / |dD/d lambda| by central differences."""
        reference = self.scattering_determinant(energy)
        east = self.relative_value(energy + step, reference)
        west = self.relative_value(energy - step, reference)
        north = self.relative_value(energy + 1j * step, reference)
        south = self.relative_value(energy - 1j * step, reference)
        d_x = (east - west) / (2 * step)
        d_y = (north - south) / (2 * step)
        holomorphic = 0.5 * (d_x - 1j * d_y)
        anti = 0.5 * (d_x + 1j * d_y)
        return float(abs(anti) / max(abs(holomorphic), 1e-300))


def _out(side: Side) -> str:
    return "plus" if side == "right" else "minus"


def _renormalize(state: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Replace the columns by P L of their LU factors; return log|det U| and arg det U."""
    if not np.all(np.isfinite(state)):
        raise Overflow("non-finite values while transporting the radiation basis")
    p, lower, upper = scipy.linalg.lu(state)
    diagonal = np.diag(upper)
    if np.any(diagonal == 0):
        raise Overflow("transported basis lost rank")
    return p @ lower, float(np.sum(np.log(np.abs(diagonal)))), float(np.sum(np.angle(diagonal)))


# ============================================================================
# Root counting and location
# ============================================================================


def argument_principle(
    solver: ScatteringSolver,
    center: complex,
    radius: float,
    points: int = CONTOUR_POINTS,
    max_points: int = MAX_CONTOUR_POINTS,
) -> int:
    """Winding number of D around the circle, refining until every phase step is < pi/2."""
    thetas = list(np.linspace(0.0, 2.0 * np.pi, points, endpoint=False))
    phases = [_phase(solver, center + radius * np.exp(1j * t)) for t in thetas]
    while True:
        closed = phases + [phases[0]]
        steps = np.angle(np.exp(1j * np.diff(closed)))
        coarse = np.flatnonzero(np.abs(steps) >= PHASE_STEP)
        if coarse.size == 0:
            break
        if len(thetas) + coarse.size > max_points:
            raise WindingUnstable(
                f"phase of D not resolved on |lambda - {center:.8g}| = {radius:.3g} with "
                f"{len(thetas)} points",
                radius=f"{radius:.3g}",
            )
        for j in coarse[::-1]:
            upper = thetas[j + 1] if j + 1 < len(thetas) else 2.0 * np.pi
            middle = 0.5 * (thetas[j] + upper)
            thetas.insert(j + 1, middle)
            phases.insert(j + 1, _phase(solver, center + radius * np.exp(1j * middle)))
    total = float(np.sum(steps))
    winding = int(round(total / (2.0 * np.pi)))
    logger.debug(f"Winding {winding} on radius {radius:.3e} with {len(thetas)} points")
    return winding


def _phase(solver: ScatteringSolver, energy: complex) -> float:
    log_abs, phase = solver.scattering_determinant(energy)
    if not np.isfinite(log_abs):
        raise WindingUnstable(f"D vanishes on the contour at {energy:.10g}")
    return phase


def _refine(
    solver: ScatteringSolver,
    seed: complex,
    scale: float,
    found: Sequence[complex],
    reference: tuple[float, float],
) -> complex | None:
    def deflated(z: complex) -> complex:
        value = solver.relative_value(z, reference)
        for root in found:
            value /= z - root
        return value

    try:
        root = scipy.optimize.newton(
            deflated,
            x0=complex(seed),
            x1=complex(seed + 1e-3 * scale * (1 + 1j)),
            tol=1e-14 * max(1.0, abs(seed)),
            maxiter=100,
        )
    except (RuntimeError, ZeroDivisionError, OverflowError, ContinuationFailure) as e:
        logger.debug(f"Secant iteration from {seed:.10g} failed: {e}")
        return None
    try:
        converged = abs(deflated(root)) <= ROOT_RATIO * abs(deflated(seed))
    except ContinuationFailure:
        return None
    if not converged:
        logger.debug(f"Secant iteration from {seed:.10g} stalled at {root:.10g}")
        return None
    return complex(root)


def locate_resonances(
    solver: ScatteringSolver,
    center: float,
    radius: float,
    expected: int,
    seeds: Sequence[complex] = (),
    points: int = CONTOUR_POINTS,
) -> ResonanceResult:
    """Count the roots of D in a disc, refine them and attach multiplicities.

    The radius is halved and the count retried when the phase cannot be resolved.
    """
    for attempt in range(RETRIES + 1):
        try:
            winding = argument_principle(solver, center, radius, points)
            break
        except WindingUnstable:
            if attempt == RETRIES:
                raise
            radius *= 0.5
            logger.warning(f"Winding unstable; retrying with radius {radius:.3e}")

    reference = solver.scattering_determinant(center + radius)
    found: list[complex] = []
    ring = center + 0.5 * radius * np.exp(1j * np.linspace(0, 2 * np.pi, 8, endpoint=False))
    candidates = list(seeds) + [center] + list(ring)
    for seed in candidates:
        if len(found) >= winding:
            break
        root = _refine(solver, seed, radius, found, reference)
        if root is None or abs(root - center) >= radius:
            continue
        if any(abs(root - other) <= 1e-9 * radius for other in found):
            continue
        found.append(root)

    located: list[LocatedRoot] = []
    for root in sorted(found, key=lambda z: (z.real, z.imag)):
        others = [abs(root - z) for z in found if z != root]
        small = 0.25 * min(others + [radius - abs(root - center)])
        try:
            multiplicity = max(1, argument_principle(solver, root, small, 32))
        except WindingUnstable:
            multiplicity = 1
        located.append(LocatedRoot(value=root, multiplicity=multiplicity))

    total = sum(r.multiplicity for r in located)
    if total != winding:
        logger.warning(
            f"Located {total} roots (with multiplicity) but the winding number is {winding}"
        )
    count_ok = winding <= expected
    if not count_ok:
        logger.warning(f"Winding number {winding} exceeds the number of bound states {expected}")
    half_plane_ok = all(r.value.imag <= HALF_PLANE_TOLERANCE for r in located)
    logger.info(
        f"Disc |lambda - {center:.10g}| < {radius:.3e}: winding {winding}, "
        f"roots {[f'{r.value:.10g}' for r in located]}"
    )
    return ResonanceResult(
        spacing=solver.assembly.spacings,
        predicted=[],
        located=located,
        residuals=[],
        winding=winding,
        radius=radius,
        count_ok=count_ok,
        half_plane_ok=half_plane_ok,
    )
