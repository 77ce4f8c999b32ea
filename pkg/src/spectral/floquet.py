"""Floquet-Bloch band structure of periodic backgrounds.

The quasi-periodic cell problem -(d/dx + i tau)^2 Phi + V Phi = E Phi is discretized by
trigonometric collocation on the background's cell nodes. The kinetic part is diagonal
in Fourier space, so the free strip is reproduced exactly and d/dtau is available in
closed form.
"""

import logging
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from ..errors import BandEdgeAtLambda0, DegenerateBand, DiscretizationTooCoarse, NewtonDivergence
from ..models import (
    BandCrossing,
    EssentialSpectrum,
    FloquetMode,
    Interval,
    PeriodicBackground,
)
from .propagation import monodromy

logger = logging.getLogger(__name__)

SCAN_POINTS = 257
DERIVATIVE_FLOOR = 1e-6
DEGENERACY_FLOOR = 1e-8
EDGE_TOLERANCE = 1e-6
UNIMODULAR_TOLERANCE = 1e-6
# Collocated band energies carry round-off near 1e-11; Newton takes one step past this
NEWTON_TOLERANCE = 1e-10


@lru_cache(maxsize=8)
def _fourier(n: int) -> tuple[np.ndarray, np.ndarray]:
    return scipy.linalg.dft(n, scale="sqrtn"), np.fft.fftfreq(n, d=1.0 / n)


def zone_width(background: PeriodicBackground) -> float:
    return 2.0 * np.pi / background.period


def fold(background: PeriodicBackground, tau: complex) -> tuple[complex, int]:
    """Shift tau by a multiple of 2 pi / T so that Re tau lies in (-pi/T, pi/T]."""
    g = zone_width(background)
    shift = int(np.ceil(np.real(tau) / g - 0.5))
    return tau - shift * g, shift


def cell_hamiltonian(
    background: PeriodicBackground, tau: complex, *, fold_tau: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Collocation matrix of the cell operator at tau and its derivative in tau."""
    if fold_tau:
        tau, _ = fold(background, tau)
    n = background.n_grid
    modes = background.modes
    dft, freqs = _fourier(n)
    wave = zone_width(background) * freqs + tau

    kinetic = dft.conj().T @ (wave[:, None] ** 2 * dft)
    slope = dft.conj().T @ ((2.0 * wave)[:, None] * dft)
    if np.isrealobj(wave):
        kinetic = 0.5 * (kinetic + kinetic.conj().T)
        slope = 0.5 * (slope + slope.conj().T)

    eye = np.eye(modes)
    hamiltonian = np.kron(eye, kinetic)
    derivative = np.kron(eye, slope)

    samples = background.samples[:-1]
    idx = np.arange(n)
    for m in range(modes):
        for l in range(modes):
            hamiltonian[m * n + idx, l * n + idx] += samples[:, m, l]
    return hamiltonian, derivative


def _capacity(background: PeriodicBackground) -> int:
    return background.modes * background.n_grid // 4


def cell_spectrum(background: PeriodicBackground, tau: complex, count: int) -> list[FloquetMode]:
    """Lowest ``count`` eigenpairs of the cell problem, ascending by real part."""
    if count > _capacity(background):
        raise DiscretizationTooCoarse(
            f"requested {count} cell eigenvalues but '{background.id}' resolves at most "
            f"{_capacity(background)}",
            background=background.id,
        )
    folded, shift = fold(background, tau)
    hamiltonian, _ = cell_hamiltonian(background, folded, fold_tau=False)

    if np.imag(folded) == 0:
        energies, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=[0, count - 1])
        energies = energies.astype(complex)
    else:
        energies, vectors = scipy.linalg.eig(hamiltonian)
        order = np.lexsort((energies.imag, energies.real))[:count]
        energies, vectors = energies[order], vectors[:, order]

    n = background.n_grid
    phase = np.exp(-1j * shift * zone_width(background) * background.grid[:-1])
    modes: list[FloquetMode] = []
    for p in range(count):
        vector = vectors[:, p].astype(complex) * np.sqrt(n) / np.linalg.norm(vectors[:, p])
        vector = (vector.reshape(background.modes, n) * phase).reshape(-1)
        modes.append(
            FloquetMode(
                background_id=background.id,
                band=p + 1,
                tau=tau,
                energy=energies[p],
                bloch_vector=vector,
            )
        )
    return modes


def band_energies(background: PeriodicBackground, tau: float, count: int) -> np.ndarray:
    hamiltonian, _ = cell_hamiltonian(background, tau)
    return scipy.linalg.eigh(hamiltonian, eigvals_only=True, subset_by_index=[0, count - 1])


def band_derivative(
    background: PeriodicBackground,
    band: int,
    tau: float,
    degeneracy_floor: float = DEGENERACY_FLOOR,
) -> float:
    """dE_p/dtau by Hellmann-Feynman; band is 1-based."""
    hamiltonian, derivative = cell_hamiltonian(background, tau)
    energies, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=[0, band])
    gaps = []
    if band >= 2:
        gaps.append(energies[band - 1] - energies[band - 2])
    gaps.append(energies[band] - energies[band - 1])
    if min(gaps) <= degeneracy_floor:
        raise DegenerateBand(
            f"band {band} of '{background.id}' is degenerate at tau={tau:.6g}",
            background=background.id,
        )
    vector = vectors[:, band - 1]
    return float(np.real(np.vdot(vector, derivative @ vector)))


def band_structure(background: PeriodicBackground, taus: np.ndarray, count: int) -> np.ndarray:
    """Energies of ``count`` bands on an ordered tau grid, shape (len(taus), count).

    Column p follows one band from tau to tau by matching Bloch vectors of maximal overlap,
    so crossing bands keep their labels. Column order at the first tau is ascending.
    """
    energies = np.empty((len(taus), count))
    previous: np.ndarray | None = None
    for j, tau in enumerate(taus):
        hamiltonian, _ = cell_hamiltonian(background, float(tau))
        values, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=[0, count - 1])
        if previous is not None:
            overlaps = np.abs(previous.conj().T @ vectors)
            _, order = scipy.optimize.linear_sum_assignment(overlaps, maximize=True)
            values, vectors = values[order], vectors[:, order]
        energies[j] = values
        previous = vectors
    return energies


def _band_ranges(
    background: PeriodicBackground, upper: float, scan_points: int
) -> list[tuple[float, float]]:
    """[min, max] of every tracked band that dips below ``upper``; max may be +inf."""
    g = zone_width(background)
    taus = np.linspace(-0.5 * g, 0.5 * g, scan_points)
    delta = taus[1] - taus[0]
    below = 0
    for tau in taus:
        hamiltonian, _ = cell_hamiltonian(background, tau)
        values = scipy.linalg.eigh(
            hamiltonian, eigvals_only=True, subset_by_value=(-np.inf, upper)
        )
        below = max(below, len(values))
    if below == 0:
        return []

    # One spare band: whatever leaves the tracked set does so above ``upper``
    count = min(below + 1, _capacity(background))
    tracked = band_structure(background, taus, count)
    ranked = np.sort(tracked, axis=1)

    ranges = []
    for p in range(count):
        values = tracked[:, p]
        if values.min() >= upper:
            continue
        i_min = int(np.argmin(values))
        rank = int(np.searchsorted(ranked[i_min], values[i_min]))
        low = _refine_extremum(background, rank, taus[i_min], delta, values[i_min], sign=1.0)
        if values.max() < upper:
            i_max = int(np.argmax(values))
            rank = int(np.searchsorted(ranked[i_max], values[i_max]))
            coarse = -values[i_max]
            high = -_refine_extremum(background, rank, taus[i_max], delta, coarse, sign=-1.0)
        else:
            high = np.inf
        ranges.append((low, high))
    return sorted(ranges)


def _refine_extremum(
    background: PeriodicBackground, p: int, tau: float, delta: float, coarse: float, sign: float
) -> float:
    """Golden-section refinement of a band extremum around a coarse grid point."""

    def objective(t: float) -> float:
        return sign * float(band_energies(background, t, p + 1)[p])

    try:
        result = scipy.optimize.minimize_scalar(
            objective, bracket=(tau - delta, tau, tau + delta), method="golden"
        )
    except (ValueError, RuntimeError):
        return coarse
    return min(coarse, float(result.fun))


def _merge(intervals: list[Interval]) -> list[Interval]:
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] + 1e-9 * (1.0 + abs(lo)):
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def essential_spectrum_edges(
    backgrounds: Sequence[PeriodicBackground],
    window: Interval,
    lambda0: float | None = None,
    scan_points: int = SCAN_POINTS,
    edge_tolerance: float = EDGE_TOLERANCE,
) -> EssentialSpectrum:
    """Union of band images intersected with the window.

    With ``lambda0`` given, each background is reported as "band", "gap" or "edge".
    """
    lo, hi = window
    intervals: list[Interval] = []
    reports: dict[str, str] = {}
    for background in backgrounds:
        upper = hi if lambda0 is None else max(hi, lambda0 + 1.0)
        ranges = _band_ranges(background, upper, scan_points)
        for low, high in ranges:
            if high >= lo and low <= hi:
                intervals.append((max(low, lo), min(high, hi)))
        if lambda0 is not None:
            reports[background.id] = _position(ranges, lambda0, edge_tolerance)
            logger.debug(
                f"lambda0={lambda0:.8g} lies in a {reports[background.id]} of '{background.id}'"
            )
    return EssentialSpectrum(intervals=_merge(intervals), reports=reports)


def _position(ranges: list[tuple[float, float]], energy: float, tolerance: float) -> str:
    merged = _merge(ranges)
    if any(lo + tolerance < energy < hi - tolerance for lo, hi in merged):
        return "band"
    edges = [edge for band in merged for edge in band if np.isfinite(edge)]
    if edges and min(abs(energy - edge) for edge in edges) <= tolerance:
        return "edge"
    return "gap"


def locate_energy(
    background: PeriodicBackground, energy: float, scan_points: int = SCAN_POINTS
) -> str:
    """Whether an energy lies in a band, a gap or at an edge of one background."""
    spectrum = essential_spectrum_edges(
        [background], (energy - 1.0, energy + 1.0), lambda0=energy, scan_points=scan_points
    )
    return spectrum.reports[background.id]


def classify_directions(
    background: PeriodicBackground,
    lambda0: float,
    derivative_floor: float = DERIVATIVE_FLOOR,
    degeneracy_floor: float = DEGENERACY_FLOOR,
) -> list[BandCrossing]:
    """All real quasimomenta where a band meets lambda0, with their directions.

    Candidates come from the unimodular Floquet multipliers at lambda0 and are refined by
    Newton's method on the collocated band function.
    """
    multipliers = np.linalg.eigvals(monodromy(background, lambda0).matrix)
    unimodular = multipliers[np.abs(np.abs(multipliers) - 1.0) <= UNIMODULAR_TOLERANCE]
    crossings: list[BandCrossing] = []
    for rho in unimodular:
        tau0 = float(np.angle(rho)) / background.period
        band, tau = _refine_crossing(background, lambda0, tau0, derivative_floor)
        derivative = band_derivative(background, band, tau, degeneracy_floor)
        if abs(derivative) <= derivative_floor:
            raise BandEdgeAtLambda0(
                f"band {band} of '{background.id}' has dE/dtau={derivative:.3g} at lambda0",
                background=background.id,
            )
        for other in crossings:
            if abs(other.tau - tau) < 1e-8:
                raise DegenerateBand(
                    f"two bands of '{background.id}' cross lambda0 at the same tau={tau:.6g}",
                    background=background.id,
                )
        crossings.append(
            BandCrossing(
                background_id=background.id,
                band=band,
                tau=tau,
                derivative=derivative,
                direction="plus" if derivative > 0 else "minus",
            )
        )
    crossings.sort(key=lambda c: (c.band, c.tau))
    logger.debug(f"'{background.id}' has {len(crossings)} crossings at lambda0={lambda0:.8g}")
    return crossings


def _refine_crossing(
    background: PeriodicBackground,
    lambda0: float,
    tau: float,
    derivative_floor: float = DERIVATIVE_FLOOR,
    iterations: int = 30,
) -> tuple[int, float]:
    """Newton on the band function; a flat band at lambda0 is reported as a band edge."""
    for _ in range(iterations):
        hamiltonian, derivative = cell_hamiltonian(background, tau)
        energies, vectors = scipy.linalg.eigh(
            hamiltonian, subset_by_value=(-np.inf, lambda0 + 1.0)
        )
        if energies.size == 0:
            raise BandEdgeAtLambda0(
                f"no band of '{background.id}' reaches lambda0={lambda0:.8g} near tau={tau:.6g}",
                background=background.id,
            )
        p = int(np.argmin(np.abs(energies - lambda0)))
        vector = vectors[:, p]
        slope = float(np.real(np.vdot(vector, derivative @ vector)))
        residual = energies[p] - lambda0
        if abs(slope) <= derivative_floor:
            raise BandEdgeAtLambda0(
                f"band {p + 1} of '{background.id}' is flat (dE/dtau={slope:.3g}) at "
                f"tau={tau:.6g}, {residual:.3g} away from lambda0",
                background=background.id,
            )
        tau = float(np.real(fold(background, tau - residual / slope)[0]))
        if abs(residual) <= NEWTON_TOLERANCE * max(1.0, abs(lambda0)):
            break
    return p + 1, tau


def quasimomentum_continue(
    background: PeriodicBackground,
    crossing: BandCrossing,
    lambda0: float,
    energy: complex,
    radius: float = 0.5,
    steps: int = 4,
    derivative_floor: float = DERIVATIVE_FLOOR,
) -> complex:
    """Continue the crossing quasimomentum to complex energy by Newton along a straight path."""
    if abs(energy - lambda0) > radius:
        raise NewtonDivergence(
            f"energy {energy} is outside the continuation disc of radius {radius}",
            background=background.id,
        )
    tau: complex = crossing.tau
    hamiltonian, _ = cell_hamiltonian(background, tau, fold_tau=False)
    _, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=[0, crossing.band - 1])
    previous = vectors[:, crossing.band - 1].astype(complex)

    for k in range(1, steps + 1):
        target = lambda0 + (energy - lambda0) * k / steps
        for _ in range(25):
            hamiltonian, derivative = cell_hamiltonian(background, tau, fold_tau=False)
            values, left, right = scipy.linalg.eig(hamiltonian, left=True, right=True)
            norms = np.linalg.norm(right, axis=0)
            overlaps = np.abs(previous.conj() @ right) / norms
            p = int(np.argmax(overlaps))
            x, y = right[:, p], left[:, p]
            slope = (y.conj() @ derivative @ x) / (y.conj() @ x)
            if abs(slope) < derivative_floor:
                raise NewtonDivergence(
                    f"band derivative {abs(slope):.3g} below floor while continuing "
                    f"'{background.id}' band {crossing.band}",
                    background=background.id,
                )
            residual = values[p] - target
            previous = x / norms[p]
            tau = tau - residual / slope
            if abs(tau - crossing.tau) * background.period > np.pi:
                raise NewtonDivergence(
                    f"quasimomentum left the continuation region for '{background.id}'",
                    background=background.id,
                )
            if abs(residual) <= NEWTON_TOLERANCE * max(1.0, abs(target)):
                break
        else:
            raise NewtonDivergence(
                f"Newton did not converge continuing '{background.id}' band {crossing.band} "
                f"(residual {abs(residual):.3g} at energy {target:.6g})",
                background=background.id,
            )
        logger.debug(
            f"Continued '{background.id}' band {crossing.band} to {target:.6g}: "
            f"tau={complex(tau):.10g}, residual {abs(residual):.2e}"
        )
    return complex(tau)
