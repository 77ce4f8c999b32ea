"""Shared fixtures: free and flat backgrounds, square wells and glued assemblies."""

import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.optimize

# Add the repository root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.geometry import ExpressionPotential, build_assembly, galerkin_project  # noqa: E402
from src.models import CrossSection, PeriodicBackground, PerturbationBlock  # noqa: E402
from src.spectral import decay_scale, discrete_eigenvalues, floquet_exponents  # noqa: E402

WELL_WINDOW = (-0.9, 0.9)


def make_background(
    text: str = "0", bg_id: str = "flat", period: float = 1.0, modes: int = 1, n_grid: int = 128
) -> PeriodicBackground:
    section = CrossSection(width=np.pi, modes=modes)
    return PeriodicBackground(
        id=bg_id,
        period=period,
        potential=galerkin_project(ExpressionPotential(text), section),
        modes=modes,
        n_grid=n_grid,
    )


def make_block(
    text: str,
    block_id: str = "well",
    left: str = "flat",
    right: str = "flat",
    a: float = 1.5,
    modes: int = 1,
) -> PerturbationBlock:
    section = CrossSection(width=np.pi, modes=modes)
    return PerturbationBlock(
        id=block_id,
        left_background=left,
        right_background=right,
        a_minus=a,
        a_plus=a,
        potential=galerkin_project(ExpressionPotential(text), section),
    )


def square_well_level() -> tuple[float, float, float]:
    """Ground state of V = -2 on |x| < 1 in a width-pi strip: (lambda0, kappa, tail amplitude).

    Outside the well the normalized state is amplitude * exp(-kappa |x|).
    """

    def even(lam: float) -> float:
        k, kappa = np.sqrt(lam + 1.0), np.sqrt(1.0 - lam)
        return k * np.tan(k) - kappa

    lam = scipy.optimize.brentq(even, -0.99, 0.99, xtol=1e-15)
    k, kappa = np.sqrt(lam + 1.0), np.sqrt(1.0 - lam)
    norm = 1.0 + np.sin(2 * k) / (2 * k) + np.cos(k) ** 2 / kappa
    amplitude = np.cos(k) * np.exp(kappa) / np.sqrt(norm)
    return float(lam), float(kappa), float(amplitude)


@pytest.fixture(scope="session")
def flat() -> PeriodicBackground:
    return make_background()


@pytest.fixture(scope="session")
def well(flat) -> PerturbationBlock:
    return make_block("-2*step(1 - abs(x1))")


@pytest.fixture(scope="session")
def well_states(flat, well):
    return discrete_eigenvalues(well, {"flat": flat}, WELL_WINDOW, scan_points=120)


@pytest.fixture(scope="session")
def double_well(flat, well, well_states):
    """Factory for the two-well assembly at a spacing, with its exponents and decay scale."""
    backgrounds = {"flat": flat}
    lambda0 = well_states[0].eigenvalue
    pencils = {"flat": floquet_exponents(flat, lambda0)}

    def build(spacing: tuple[int, int] = (2, 2)):
        assembly = build_assembly([well, well], [spacing], backgrounds)
        return assembly, pencils, decay_scale(assembly, pencils)

    return build
