"""Floquet exponents and Jordan chains of the quadratic pencil, read off the monodromy.

Floquet solutions follow phi_s(x) = exp(i r x) sum_p (i x)^p / p! Phi_{s-p}(x), so one period
shift acts as phi_s(x + T) = rho sum_m (i T)^m / m! phi_{s-m}(x) with rho = exp(i r T).
"""

import logging
from math import factorial
from typing import Sequence

import numpy as np
import scipy.linalg

from ..errors import IllConditionedJordan, Lambda0InMiddleEssentialSpectrum
from ..models import DecayScale, GluedAssembly, PencilEigen, PeriodicBackground
from .propagation import CellPropagator

logger = logging.getLogger(__name__)

CLUSTER_DIAMETER = 1e-6
RANK_TOLERANCE = 1e-8
UNIMODULAR_TOLERANCE = 1e-6
CHAIN_TOLERANCE = 1e-7
LEVEL_TOLERANCE = 1e-8


def shift_weights(length: int, shift: complex) -> np.ndarray:
    """(i shift)^m / m! for m = 0..length-1."""
    return np.array([(1j * shift) ** m / factorial(m) for m in range(length)], dtype=complex)


def shift_coefficients(alpha: np.ndarray, shift: complex) -> np.ndarray:
    """beta_s = sum_m alpha_{s+m} (i shift)^m / m!: chain coefficients after a translation."""
    alpha = np.asarray(alpha, dtype=complex)
    weights = shift_weights(alpha.size, shift)
    return np.array(
        [np.dot(alpha[s:], weights[: alpha.size - s]) for s in range(alpha.size)], dtype=complex
    )


def _cluster(values: np.ndarray, diameter: float) -> list[list[int]]:
    clusters: list[list[int]] = []
    for index in np.argsort(-np.abs(values), kind="stable"):
        for cluster in clusters:
            if any(
                abs(values[index] - values[j]) <= diameter * max(abs(values[j]), 1e-300)
                for j in cluster
            ):
                cluster.append(int(index))
                break
        else:
            clusters.append([int(index)])
    return clusters


def _kernel(matrix: np.ndarray, dimension: int) -> np.ndarray:
    if dimension == 0:
        return np.zeros((matrix.shape[1], 0), dtype=complex)
    _, _, vh = scipy.linalg.svd(matrix)
    return vh[-dimension:].conj().T


def _jordan_chains(
    matrix: np.ndarray, rho: complex, size: int, diameter: float
) -> list[np.ndarray]:
    """Jordan chains [w_0, ..., w_{k-1}] of the monodromy at a multiplier cluster."""
    dim = matrix.shape[0]
    scale = max(np.linalg.norm(matrix, 2), 1.0)
    shifted = matrix - rho * np.eye(dim)

    powers = [np.eye(dim, dtype=complex)]
    nullity = [0]
    for j in range(1, size + 1):
        powers.append(shifted @ powers[-1])
        singular = scipy.linalg.svdvals(powers[-1])
        nullity.append(int(np.sum(singular < RANK_TOLERANCE * scale**j)))
    if nullity[size] != size:
        raise IllConditionedJordan(
            f"multiplier cluster of size {size} near {rho:.6g} has a generalized eigenspace of "
            f"dimension {nullity[size]} (cluster diameter {diameter:.3g})",
            diameter=f"{diameter:.3g}",
        )

    kernels = [_kernel(powers[j], nullity[j]) for j in range(size + 1)]
    padded = nullity + [nullity[size]]
    built = np.zeros((dim, 0), dtype=complex)
    chains: list[np.ndarray] = []
    for k in range(size, 0, -1):
        count = (padded[k] - padded[k - 1]) - (padded[k + 1] - padded[k])
        if count <= 0:
            continue
        span = np.hstack([kernels[k - 1], built])
        basis = scipy.linalg.orth(span) if span.shape[1] else span
        candidates = kernels[k]
        residual = candidates - basis @ (basis.conj().T @ candidates)
        _, _, vh = scipy.linalg.svd(residual)
        tops = candidates @ vh[:count].conj().T
        for top in tops.T:
            members = [top]
            for _ in range(k - 1):
                members.append(shifted @ members[-1])
            chain = np.column_stack(members[::-1])
            chains.append(chain)
            built = np.hstack([built, chain])
    return chains


def _floquet_normalized(chain: np.ndarray, rho: complex, period: float) -> list[np.ndarray]:
    """Convert a Jordan chain of the monodromy into Floquet-chain Cauchy data.

    On the chain's span the monodromy is rho (I + J / rho); with N = log(I + J / rho) / (i T)
    the vectors y_{k-1} = top, y_{s-1} = N y_s satisfy the one-period shift law exactly.
    """
    length = chain.shape[1]
    shift = np.eye(length, k=1, dtype=complex)
    nilpotent = np.zeros((length, length), dtype=complex)
    power = np.eye(length, dtype=complex)
    for m in range(1, length):
        power = power @ (shift / rho)
        nilpotent += (-1) ** (m + 1) * power / m
    nilpotent /= 1j * period

    coords = [np.eye(length, dtype=complex)[:, length - 1]]
    for _ in range(length - 1):
        coords.append(nilpotent @ coords[-1])
    return [chain @ c for c in coords[::-1]]


def chain_residual(
    matrix: np.ndarray, rho: complex, period: float, states: Sequence[np.ndarray]
) -> float:
    """Relative defect of M y_s = rho sum_m (iT)^m/m! y_{s-m} over the chain."""
    weights = shift_weights(len(states), period)
    scale = max(np.linalg.norm(matrix, 2), 1.0) * max(np.linalg.norm(y) for y in states)
    worst = 0.0
    for s, y in enumerate(states):
        expected = rho * sum(weights[m] * states[s - m] for m in range(s + 1))
        worst = max(worst, float(np.linalg.norm(matrix @ y - expected)) / scale)
    return worst


def _periodic_parts(
    exponent: complex, states: Sequence[np.ndarray], propagator: CellPropagator
) -> list[np.ndarray]:
    """Phi_s on the cell nodes, shape (n_grid, M) each."""
    background = propagator.background
    x = background.grid[:-1]
    modes = background.modes
    envelope = np.exp(-1j * exponent * x)[:, None]
    parts: list[np.ndarray] = []
    for s, y in enumerate(states):
        values = (propagator.nodes[:-1] @ y)[:, :modes]
        part = envelope * values
        for p in range(1, s + 1):
            part = part - ((1j * x) ** p / factorial(p))[:, None] * parts[s - p]
        parts.append(part)
    return parts


def _normalize(
    states: list[np.ndarray], parts: list[np.ndarray], modes: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Unit mean-square Phi_0, first nonzero entry real positive, Phi_0 orthogonal to the rest."""
    if parts:
        reference = parts[0].reshape(-1)
        norm = np.sqrt(np.mean(np.sum(np.abs(parts[0]) ** 2, axis=1)))
    else:
        reference = states[0][:modes]
        if np.linalg.norm(reference) < 1e-12 * np.linalg.norm(states[0]):
            reference = states[0]
        norm = np.linalg.norm(reference)
    threshold = 1e-8 * np.max(np.abs(reference))
    lead = reference[np.argmax(np.abs(reference) > threshold)]
    factor = np.conj(lead) / abs(lead) / norm
    states = [factor * y for y in states]
    parts = [factor * p for p in parts]

    if parts:
        for j in range(1, len(states)):
            c = -np.vdot(parts[0], parts[j]) / np.vdot(parts[0], parts[0])
            for s in range(len(states) - 1, j - 1, -1):
                states[s] = states[s] + c * states[s - j]
                parts[s] = parts[s] + c * parts[s - j]
    return states, parts


def exponents_from_monodromy(
    matrix: np.ndarray,
    period: float,
    *,
    background_id: str = "synthetic",
    propagator: CellPropagator | None = None,
    strip_height: float = np.inf,
    cluster_diameter: float = CLUSTER_DIAMETER,
) -> list[PencilEigen]:
    """Floquet exponents r = -i log(rho) / T and their chains from a monodromy matrix."""
    multipliers = np.linalg.eigvals(matrix)
    modes = matrix.shape[0] // 2
    result: list[PencilEigen] = []
    for cluster in _cluster(multipliers, cluster_diameter):
        members = multipliers[cluster]
        rho = complex(np.mean(members))
        diameter = float(np.max(np.abs(members - rho)) / abs(rho)) if len(members) > 1 else 0.0
        exponent = complex(-1j * np.log(rho) / period)
        if abs(exponent.imag) > strip_height:
            continue

        if abs(abs(rho) - 1.0) <= UNIMODULAR_TOLERANCE:
            sign = "real"
        else:
            sign = "plus" if exponent.imag > 0 else "minus"

        for chain in _jordan_chains(matrix, rho, len(members), diameter):
            states = _floquet_normalized(chain, rho, period)
            parts = _periodic_parts(exponent, states, propagator) if propagator else []
            states, parts = _normalize(states, parts, modes)
            residual = chain_residual(matrix, rho, period, states)
            if residual > CHAIN_TOLERANCE:
                raise IllConditionedJordan(
                    f"chain residual {residual:.3g} at multiplier {rho:.6g} "
                    f"(cluster diameter {diameter:.3g})",
                    background=background_id,
                )
            result.append(
                PencilEigen(
                    background_id=background_id,
                    exponent=exponent,
                    multiplier=rho,
                    chain_states=states,
                    chain=parts,
                    sign=sign,
                    residual=residual,
                )
            )

    order = {"plus": 0, "minus": 1, "real": 2}
    result.sort(key=lambda e: (order[e.sign], round(abs(e.exponent.imag), 12), e.exponent.real))
    return result


def floquet_exponents(
    background: PeriodicBackground, lambda0: float, strip_height: float = np.inf
) -> list[PencilEigen]:
    """Pencil eigenvalues of a background at lambda0 inside |Im r| <= strip_height."""
    propagator = CellPropagator(background, lambda0)
    exponents = exponents_from_monodromy(
        propagator.matrix,
        background.period,
        background_id=background.id,
        propagator=propagator,
        strip_height=strip_height,
    )
    logger.debug(
        f"'{background.id}' exponents at {lambda0:.8g}: "
        + ", ".join(f"{e.exponent:.6g}[{e.chain_length}]" for e in exponents)
    )
    return exponents


def floquet_states(
    eigen: PencilEigen, propagator: CellPropagator, xi: np.ndarray
) -> np.ndarray:
    """Cauchy data of phi_s at cell coordinates xi (any real), shape (kappa, len(xi), 2M).

    Whole periods are applied with the exact shift law, so the cost does not grow with |xi|.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    period = propagator.background.period
    cells = np.floor(xi / period + 1e-12).astype(int)
    length = eigen.chain_length
    states = np.stack(eigen.chain_states)  # (kappa, 2M)
    result = np.empty((length, xi.size, states.shape[1]), dtype=complex)
    for cell in np.unique(cells):
        mask = cells == cell
        weights = shift_weights(length, cell * period)
        shifted = np.stack(
            [
                eigen.multiplier**cell * sum(weights[m] * states[s - m] for m in range(s + 1))
                for s in range(length)
            ]
        )
        local = propagator.within_cell(xi[mask] - cell * period, shifted.T)  # (K, 2M, kappa)
        result[:, mask, :] = np.moveaxis(local, 2, 0)
    return result


def rescale_chain(eigen: PencilEigen, factor: complex) -> PencilEigen:
    """The same Floquet solutions multiplied by a nonzero constant."""
    return PencilEigen(
        background_id=eigen.background_id,
        exponent=eigen.exponent,
        multiplier=eigen.multiplier,
        chain_states=[factor * y for y in eigen.chain_states],
        chain=[factor * p for p in eigen.chain],
        sign=eigen.sign,
        residual=eigen.residual,
    )


def reciprocity_defect(matrix: np.ndarray) -> float:
    """Largest relative distance from a multiplier to the partner 1 / conj(rho)."""
    multipliers = np.linalg.eigvals(matrix)
    partners = 1.0 / np.conj(multipliers)
    worst = 0.0
    for rho in multipliers:
        worst = max(worst, float(np.min(np.abs(partners - rho)) / abs(rho)))
    return worst


def conjugacy_defect(exponents: Sequence[PencilEigen]) -> float:
    """Distance between the minus family and the conjugates of the plus family."""
    plus = np.array([e.exponent for e in exponents if e.sign == "plus"])
    minus = np.array([e.exponent for e in exponents if e.sign == "minus"])
    if plus.size != minus.size:
        return np.inf
    if plus.size == 0:
        return 0.0
    return float(max(np.min(np.abs(minus - np.conj(r))) for r in plus))


def decay_rate(exponents: Sequence[PencilEigen]) -> float:
    """Smallest Im r of the decaying family; inf when there is none."""
    rates = [e.exponent.imag for e in exponents if e.sign == "plus"]
    return min(rates) if rates else np.inf


def level_exponents(exponents: Sequence[PencilEigen], mhat: float, sign: str) -> list[PencilEigen]:
    """Exponents of one family with |Im r| = mhat."""
    tolerance = LEVEL_TOLERANCE * max(1.0, mhat)
    return [
        e for e in exponents if e.sign == sign and abs(abs(e.exponent.imag) - mhat) <= tolerance
    ]


def decay_scale(
    assembly: GluedAssembly, pencils: dict[str, list[PencilEigen]]
) -> DecayScale:
    """mhat over the connecting backgrounds, the strip constant gamma, J and kappa."""
    connecting = [assembly.connector(k) for k in range(assembly.n - 1)]
    levels: dict[str, float] = {}
    for background in connecting:
        exponents = pencils[background.id]
        if any(e.sign == "real" for e in exponents) or decay_rate(exponents) == np.inf:
            raise Lambda0InMiddleEssentialSpectrum(
                f"lambda0 lies in the essential spectrum of connecting background "
                f"'{background.id}'",
                background=background.id,
            )
        levels[background.id] = decay_rate(exponents)

    mhat = min(levels.values())
    counts: dict[str, int] = {}
    kappa = 1
    above: list[float] = []
    for background in connecting:
        exponents = pencils[background.id]
        level = level_exponents(exponents, mhat, "plus")
        counts[background.id] = len(level)
        kappa = max([kappa] + [e.chain_length for e in level])
        above.extend(
            e.exponent.imag
            for e in exponents
            if e.sign == "plus" and e.exponent.imag > mhat * (1.0 + LEVEL_TOLERANCE)
        )

    ceiling = min([2.0 * mhat] + above)
    gamma = 0.5 * (mhat + ceiling)
    intruders = [v for v in above if v <= gamma]
    if intruders:
        raise IllConditionedJordan(f"strip |Im tau| <= {gamma:.6g} contains exponents {intruders}")

    logger.info(f"Decay scale: mhat={mhat:.8g}, gamma={gamma:.8g}, kappa={kappa}, J={counts}")
    return DecayScale(mhat=mhat, gamma=gamma, levels=counts, kappa=kappa)
