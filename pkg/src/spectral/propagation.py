"""Transfer matrices of -u'' + (V - lambda) u = 0 with a fourth-order Magnus integrator."""

import logging

import numpy as np
import scipy.linalg

from ..errors import Overflow
from ..models import MatrixPotential, Monodromy, PeriodicBackground, PerturbationBlock

logger = logging.getLogger(__name__)

OVERFLOW_NORM = 1e12

_GAUSS_OFFSET = np.sqrt(3.0) / 6.0


def generator(values: np.ndarray, energy: complex) -> np.ndarray:
    """First-order system matrices [[0, I], [V - lambda, 0]] for a stack of V samples."""
    count, modes, _ = values.shape
    eye = np.eye(modes)
    result = np.zeros((count, 2 * modes, 2 * modes), dtype=complex)
    result[:, :modes, modes:] = eye
    result[:, modes:, :modes] = values - energy * eye
    return result


def magnus_steps(potential: MatrixPotential, nodes: np.ndarray, energy: complex) -> np.ndarray:
    """Step propagators between consecutive nodes, shape (len(nodes) - 1, 2M, 2M).

    Potentials are evaluated at the two interior Gauss points of each step, so a jump
    located on a node is integrated exactly.
    """
    nodes = np.asarray(nodes, dtype=float)
    h = np.diff(nodes)
    first = nodes[:-1] + (0.5 - _GAUSS_OFFSET) * h
    second = nodes[:-1] + (0.5 + _GAUSS_OFFSET) * h
    a1 = generator(potential(first), energy)
    a2 = generator(potential(second), energy)
    commutator = a2 @ a1 - a1 @ a2
    omega = 0.5 * h[:, None, None] * (a1 + a2)
    omega += (np.sqrt(3.0) / 12.0) * (h**2)[:, None, None] * commutator
    if np.isrealobj(energy) or np.imag(energy) == 0:
        omega = omega.real
    return scipy.linalg.expm(omega)


def accumulate(steps: np.ndarray) -> np.ndarray:
    """Cumulative propagators P_0 = I, P_j = S_j ... S_1."""
    count, size, _ = steps.shape
    result = np.empty((count + 1, size, size), dtype=steps.dtype)
    result[0] = np.eye(size)
    for j in range(count):
        result[j + 1] = steps[j] @ result[j]
    _guard(result[-1])
    return result


def product(steps: np.ndarray) -> np.ndarray:
    size = steps.shape[1]
    result = np.eye(size, dtype=steps.dtype)
    for step in steps:
        result = step @ result
    _guard(result)
    return result


def _guard(matrix: np.ndarray) -> None:
    norm = np.linalg.norm(matrix)
    if not np.isfinite(norm) or norm > OVERFLOW_NORM:
        raise Overflow(f"transfer matrix norm {norm:.3g} exceeds {OVERFLOW_NORM:.0e}")


class CellPropagator:
    """Propagators of one background cell at a fixed energy, cached on the cell grid."""

    def __init__(self, background: PeriodicBackground, energy: complex):
        self.background = background
        self.energy = energy
        self.steps = magnus_steps(background.value, background.grid, energy)
        self.nodes = accumulate(self.steps)

    @property
    def matrix(self) -> np.ndarray:
        return self.nodes[-1]

    def within_cell(self, xi: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Propagate initial data from cell coordinate 0 to points xi in [0, T].

        ``states`` has shape (2M,) or (2M, C); the result has shape (len(xi), 2M[, C]).
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        h = self.background.step
        index = np.clip(np.floor(xi / h + 1e-9).astype(int), 0, self.background.n_grid)
        base = self.nodes[index]
        remainder = xi - index * h
        partial = np.abs(remainder) > 1e-12 * h
        if np.any(partial):
            starts = index[partial] * h
            pairs = np.stack([starts, xi[partial]], axis=1)
            extra = np.stack(
                [magnus_steps(self.background.value, pair, self.energy)[0] for pair in pairs]
            )
            base = base.astype(np.result_type(base, extra), copy=True)
            base[partial] = extra @ base[partial]
        return base @ states


def monodromy(background: PeriodicBackground, energy: complex) -> Monodromy:
    """Propagator of the first-order system across one period."""
    steps = magnus_steps(background.value, background.grid, energy)
    matrix = product(steps)
    det = np.linalg.det(matrix)
    if abs(det - 1.0) > 1e-9:
        logger.warning(f"Monodromy of '{background.id}' at {energy} has det {det:.12g}")
    return Monodromy(background_id=background.id, energy=energy, matrix=matrix)


class CorePropagator:
    """Propagators across a block core [-a_minus, a_plus] at a fixed energy."""

    def __init__(self, block: PerturbationBlock, energy: complex):
        self.block = block
        self.energy = energy
        self.grid = block.core_grid
        self.nodes = accumulate(magnus_steps(block.potential, self.grid, energy))

    @property
    def matrix(self) -> np.ndarray:
        return self.nodes[-1]

    def from_center(self) -> tuple[np.ndarray, np.ndarray]:
        """Propagators from y = 0 to -a_minus and to a_plus.

        The core grid need not contain 0, so the split point uses a fresh pair of
        partial propagations.
        """
        left = np.array([0.0, -self.block.a_minus])
        right = np.array([0.0, self.block.a_plus])
        to_left = _segment(self.block.potential, left, self.energy, self.block.core_step)
        to_right = _segment(self.block.potential, right, self.energy, self.block.core_step)
        return to_left, to_right


def _segment(potential: MatrixPotential, ends: np.ndarray, energy: complex, step: float):
    length = abs(ends[1] - ends[0])
    count = max(1, int(np.ceil(length / step - 1e-9)))
    nodes = np.linspace(ends[0], ends[1], count + 1)
    return product(magnus_steps(potential, nodes, energy))


def segment_propagator(
    potential: MatrixPotential, start: float, stop: float, energy: complex, step: float
) -> np.ndarray:
    """Propagator from start to stop (either direction) with roughly the given step."""
    return _segment(potential, np.array([start, stop], dtype=float), energy, step)
