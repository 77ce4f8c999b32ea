"""Coupling constants and the interaction matrix of a glued assembly."""

import logging
from typing import Literal, Sequence

import numpy as np
import scipy.cluster.hierarchy
import scipy.linalg

from ..errors import ConfigError, EmptyProblem, IllConditionedJordan
from ..models import (
    BoundState,
    CouplingTable,
    DecayScale,
    GluedAssembly,
    InteractionMatrix,
    InteractionScales,
    PencilEigen,
    PeriodicBackground,
    TailExpansion,
)
from ..spectral import (
    CellPropagator,
    floquet_states,
    level_exponents,
    rescale_chain,
    shift_coefficients,
    tail_coefficients,
)

logger = logging.getLogger(__name__)

EXPONENT_TOLERANCE = 1e-9
CLUSTER_FACTOR = 10.0
MAX_SIZE = 64

# Tails of one block: side -> one expansion per bound state
BlockTails = dict[str, list[TailExpansion]]


# ============================================================================
# Coupling constants
# ============================================================================


def coupling_pairing(
    propagator: CellPropagator,
    plus: PencilEigen,
    s: int,
    minus: PencilEigen,
    t: int,
    cell: int = 1,
    tolerance: float = EXPONENT_TOLERANCE,
) -> complex:
    """K for the plus chain member (i, s) against the minus chain member (q, t).

    The boundary form is the Wronskian -(conj(u-)^T u+' - conj(u-')^T u+) of the two
    Floquet solutions at x1 = cell * T, taken over the transverse modes.
    """
    if abs(plus.exponent - np.conj(minus.exponent)) > tolerance:
        return 0.0j
    modes = propagator.background.modes
    at = np.array([cell * propagator.background.period])
    u_plus = floquet_states(plus, propagator, at)[s, 0]
    u_minus = floquet_states(minus, propagator, at)[t, 0]
    value, slope = u_plus[:modes], u_plus[modes:]
    partner, partner_slope = np.conj(u_minus[:modes]), np.conj(u_minus[modes:])
    return complex(-(partner @ slope - partner_slope @ value))


def coupling_table(
    background: PeriodicBackground,
    exponents: Sequence[PencilEigen],
    mhat: float,
    lambda0: float,
    cell: int = 1,
    tolerance: float = EXPONENT_TOLERANCE,
) -> CouplingTable:
    """All K_{isqt} between the level-mhat plus and minus families of a connector."""
    plus = level_exponents(exponents, mhat, "plus")
    minus = level_exponents(exponents, mhat, "minus")
    if len(plus) != len(minus):
        raise IllConditionedJordan(
            f"'{background.id}' has {len(plus)} decaying and {len(minus)} growing exponents "
            f"at level {mhat:.6g}",
            background=background.id,
        )
    propagator = CellPropagator(background, lambda0)
    entries: dict[tuple[int, int, int, int], complex] = {}
    for i, p_eigen in enumerate(plus):
        for q, m_eigen in enumerate(minus):
            for s in range(p_eigen.chain_length):
                for t in range(m_eigen.chain_length):
                    value = coupling_pairing(propagator, p_eigen, s, m_eigen, t, cell, tolerance)
                    if value != 0:
                        entries[(i, s, q, t)] = value
    logger.debug(f"Coupling table of '{background.id}': {len(entries)} nonzero entries")
    return CouplingTable(background_id=background.id, plus=plus, minus=minus, entries=entries)


def translate_spread(
    background: PeriodicBackground,
    table: CouplingTable,
    lambda0: float,
    cells: Sequence[int] = (1, 2, 3),
) -> float:
    """Largest relative spread of the nonzero K over several evaluation cells."""
    propagator = CellPropagator(background, lambda0)
    worst = 0.0
    for (i, s, q, t), reference in table.entries.items():
        values = [
            coupling_pairing(propagator, table.plus[i], s, table.minus[q], t, cell)
            for cell in cells
        ]
        spread = max(abs(v - reference) for v in values) / max(abs(reference), 1e-300)
        worst = max(worst, spread)
    return worst


def shift_polynomial(
    alpha: np.ndarray, shift: float, sign: Literal["plus", "minus"]
) -> np.ndarray:
    """beta_s(T) = sum_m alpha_{m+s} (+-iT)^m / m!."""
    return shift_coefficients(alpha, shift if sign == "plus" else -shift)


# ============================================================================
# Interaction matrix
# ============================================================================


def collect_tails(
    assembly: GluedAssembly,
    states: Sequence[Sequence[BoundState]],
    pencils: dict[str, list[PencilEigen]],
    scale: DecayScale,
    lambda0: float,
    offset_periods: int = 1,
    length_periods: int = 3,
) -> list[BlockTails]:
    """Tail expansions of every bound state on the sides that face a connector."""
    tails: list[BlockTails] = []
    for k, block in enumerate(assembly.blocks):
        entry: BlockTails = {}
        sides = []
        if k < assembly.n - 1:
            sides.append(("right", block.right_background))
        if k > 0:
            sides.append(("left", block.left_background))
        for side, bg_id in sides:
            entry[side] = [
                tail_coefficients(
                    block,
                    state,
                    side,
                    pencils[bg_id],
                    scale,
                    assembly.backgrounds,
                    offset_periods=offset_periods,
                    length_periods=length_periods,
                    lambda0=lambda0,
                )
                for state in states[k]
            ]
        tails.append(entry)
    return tails


def _plus_entry(
    right: TailExpansion, left: TailExpansion, table: CouplingTable, distance: float
) -> complex:
    total = 0.0j
    for i, p_eigen in enumerate(table.plus):
        beta = shift_polynomial(right.alpha[i], distance, "plus")
        inner = 0.0j
        for q, m_eigen in enumerate(table.minus):
            for s in range(p_eigen.chain_length):
                for t in range(m_eigen.chain_length):
                    inner += np.conj(left.alpha[q][t]) * table(i, s, q, t) * beta[s]
        total += np.exp(1j * p_eigen.exponent * distance) * inner
    return complex(total)


def _minus_entry(
    right: TailExpansion, left: TailExpansion, table: CouplingTable, distance: float
) -> complex:
    total = 0.0j
    for i, m_eigen in enumerate(table.minus):
        beta = shift_polynomial(left.alpha[i], distance, "minus")
        inner = 0.0j
        for q, p_eigen in enumerate(table.plus):
            for s in range(m_eigen.chain_length):
                for t in range(p_eigen.chain_length):
                    pairing = np.conj(table(q, t, i, s))
                    inner += np.conj(right.alpha[q][t]) * pairing * beta[s]
        total += np.exp(-1j * m_eigen.exponent * distance) * inner
    return complex(total)


def interaction_scales(assembly: GluedAssembly, scale: DecayScale) -> InteractionScales:
    distances = assembly.distances
    shortest, longest = float(np.min(distances)), float(np.max(distances))
    eta = longest**scale.kappa * np.exp(-scale.mhat * shortest)
    return InteractionScales(
        eta=float(eta),
        shortest=shortest,
        longest=longest,
        kappa=scale.kappa,
        mhat=scale.mhat,
        gamma=scale.gamma,
    )


def assemble_interaction(
    assembly: GluedAssembly,
    counts: Sequence[int],
    tails: Sequence[BlockTails],
    tables: Sequence[CouplingTable],
    scale: DecayScale,
    lambda0: float,
    cluster_factor: float = CLUSTER_FACTOR,
) -> InteractionMatrix:
    """Block-tridiagonal interaction matrix; ``tables[k]`` belongs to connector k."""
    size = int(sum(counts))
    if size == 0:
        raise EmptyProblem(
            f"no block has an eigenvalue at lambda0={lambda0:.10g}: the assembly has no "
            f"resonances near lambda0",
            lambda0=f"{lambda0:.10g}",
        )
    if size > MAX_SIZE:
        raise ConfigError(f"{size} bound states at lambda0 exceed the supported {MAX_SIZE}")

    offsets = [0]
    for count in counts:
        offsets.append(offsets[-1] + count)
    matrix = np.zeros((size, size), dtype=complex)
    distances = assembly.distances

    for k in range(assembly.n - 1):
        if counts[k] == 0 and counts[k + 1] == 0:
            continue
        distance = float(distances[k])
        table = tables[k]
        for p in range(counts[k]):
            for j in range(counts[k + 1]):
                right = tails[k]["right"][p]
                left = tails[k + 1]["left"][j]
                matrix[offsets[k + 1] + j, offsets[k] + p] = _plus_entry(
                    right, left, table, distance
                )
        for j in range(counts[k]):
            for p in range(counts[k + 1]):
                right = tails[k]["right"][j]
                left = tails[k + 1]["left"][p]
                matrix[offsets[k] + j, offsets[k + 1] + p] = _minus_entry(
                    right, left, table, distance
                )

    scales = interaction_scales(assembly, scale)
    eigenvalues, clusters = eigen_clusters(matrix, scales, cluster_factor)
    logger.info(
        f"Interaction matrix N={size}, eta={scales.eta:.4e}, "
        f"|Lambda|max={np.max(np.abs(eigenvalues)):.4e}, {len(clusters)} clusters"
    )
    return InteractionMatrix(
        size=size,
        matrix=matrix,
        offsets=offsets,
        eigenvalues=eigenvalues,
        clusters=clusters,
        scales=scales,
        lambda0=lambda0,
    )


def eigen_clusters(
    matrix: np.ndarray, scales: InteractionScales, cluster_factor: float = CLUSTER_FACTOR
) -> tuple[np.ndarray, list[list[int]]]:
    """Eigenvalues of the interaction matrix and their single-linkage groups."""
    eigenvalues = scipy.linalg.eigvals(matrix)
    eigenvalues = eigenvalues[np.lexsort((eigenvalues.imag, eigenvalues.real))]
    size = eigenvalues.size
    if size == 1:
        return eigenvalues, [[0]]

    threshold = cluster_factor * scales.remainder(size)
    points = np.column_stack([eigenvalues.real, eigenvalues.imag])
    linkage = scipy.cluster.hierarchy.linkage(points, method="single")
    labels = scipy.cluster.hierarchy.fcluster(linkage, t=threshold, criterion="distance")
    groups: dict[int, list[int]] = {}
    for index, label in enumerate(labels):
        groups.setdefault(int(label), []).append(index)
    clusters = sorted(groups.values(), key=lambda g: g[0])
    logger.debug(f"Clustering threshold {threshold:.3e}: {clusters}")
    return eigenvalues, clusters


# ============================================================================
# Gauge check
# ============================================================================


def gauge_check(
    assembly: GluedAssembly,
    states: Sequence[Sequence[BoundState]],
    pencils: dict[str, list[PencilEigen]],
    scale: DecayScale,
    lambda0: float,
    reference: InteractionMatrix,
    rng: np.random.Generator,
) -> float:
    """Rebuild the matrix after rescaling every Jordan chain; return the largest change.

    The change is relative to the largest entry of the reference matrix.
    """
    rescaled: dict[str, list[PencilEigen]] = {}
    for bg_id, exponents in pencils.items():
        factors = rng.normal(size=len(exponents)) + 1j * rng.normal(size=len(exponents))
        factors = np.where(np.abs(factors) < 0.1, 1.0, factors)
        rescaled[bg_id] = [rescale_chain(e, c) for e, c in zip(exponents, factors)]

    tails = collect_tails(assembly, states, rescaled, scale, lambda0)
    tables = []
    for k in range(assembly.n - 1):
        connector = assembly.connector(k)
        tables.append(coupling_table(connector, rescaled[connector.id], scale.mhat, lambda0))
    counts = [len(group) for group in states]
    rebuilt = assemble_interaction(assembly, counts, tails, tables, scale, lambda0)
    largest = max(float(np.max(np.abs(reference.matrix))), 1e-300)
    return float(np.max(np.abs(rebuilt.matrix - reference.matrix)) / largest)
