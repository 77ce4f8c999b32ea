#!/usr/bin/env python3
"""
Floquet-Bloch tests: cell spectra, band derivatives, essential spectrum and continuation.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root to path
sys.path.insert(0, str(Path(__file__).parent))

from conftest import make_background  # noqa: E402
from src.errors import BandEdgeAtLambda0, DiscretizationTooCoarse, NewtonDivergence  # noqa: E402
from src.models import BandCrossing  # noqa: E402
from src.spectral import (  # noqa: E402
    band_derivative,
    band_structure,
    cell_spectrum,
    classify_directions,
    essential_spectrum_edges,
    locate_energy,
    quasimomentum_continue,
)
from src.spectral.floquet import fold  # noqa: E402

KRONIG_PENNEY = "1.5*step(0.5 - x1)"


# ============================================================================
# Cell spectra
# ============================================================================


def test_free_strip_spectrum_two_modes():
    free = make_background(period=np.pi, modes=2, n_grid=64)
    energies = [m.energy for m in cell_spectrum(free, 0.0, 5)]
    np.testing.assert_allclose(np.real(energies), [1.0, 4.0, 5.0, 5.0, 8.0], atol=1e-10)


def test_free_strip_quarter_zone():
    free = make_background()
    (mode,) = cell_spectrum(free, 0.5, 1)
    assert mode.energy.real == pytest.approx(1.25, abs=1e-10)
    assert mode.band == 1
    # Mean-square normalized Bloch vector
    assert np.mean(np.abs(mode.bloch_vector) ** 2) == pytest.approx(1.0)


def test_cell_spectrum_capacity():
    coarse = make_background(n_grid=16)
    with pytest.raises(DiscretizationTooCoarse):
        cell_spectrum(coarse, 0.0, 5)


def test_fold_into_the_zone():
    free = make_background(period=1.0)
    folded, shift = fold(free, 0.5 + 2 * np.pi)
    assert folded == pytest.approx(0.5)
    assert shift == 1


# ============================================================================
# Band derivatives
# ============================================================================


def test_free_band_derivative():
    free = make_background()
    assert band_derivative(free, 1, 0.5) == pytest.approx(1.0, abs=1e-10)


def test_symmetric_cell_has_flat_band_bottom():
    background = make_background("0.8*cos(2*pi*x1)")
    assert band_derivative(background, 1, 0.0) == pytest.approx(0.0, abs=1e-10)


def test_kronig_penney_derivative_matches_finite_difference():
    background = make_background(KRONIG_PENNEY)
    tau, delta = 0.5 * np.pi, 1e-5
    energies = band_structure(background, np.array([tau - delta, tau + delta]), 1)[:, 0]
    finite = (energies[1] - energies[0]) / (2 * delta)
    exact = band_derivative(background, 1, tau)
    assert exact == pytest.approx(finite, rel=1e-6)


def test_crossing_bands_keep_their_labels():
    # 4 + tau^2 (second mode) meets 1 + (2 pi - tau)^2 (first mode, folded) near tau = 2.9
    free = make_background(modes=2, n_grid=64)
    taus = np.linspace(0.0, np.pi, 201)
    tracked = band_structure(free, taus, 3)
    np.testing.assert_allclose(tracked[:, 0], 1.0 + taus**2, atol=1e-9)
    np.testing.assert_allclose(tracked[:, 1], 4.0 + taus**2, atol=1e-9)
    np.testing.assert_allclose(tracked[1:, 2], 1.0 + (2 * np.pi - taus[1:]) ** 2, atol=1e-9)
    assert np.any(tracked[:, 1] > tracked[:, 2])


# ============================================================================
# Essential spectrum
# ============================================================================


def test_free_essential_spectrum():
    free = make_background()
    spectrum = essential_spectrum_edges([free], (0.0, 2.0))
    assert len(spectrum.intervals) == 1
    lo, hi = spectrum.intervals[0]
    assert lo == pytest.approx(1.0, abs=1e-8)
    assert hi == 2.0


def test_band_and_gap_reports():
    free = make_background()
    barrier = make_background("2", bg_id="barrier")
    spectrum = essential_spectrum_edges([free, barrier], (0.0, 2.0), lambda0=1.5)
    assert spectrum.contains(1.5)
    assert spectrum.reports == {"flat": "band", "barrier": "gap"}


def test_window_below_every_band():
    free = make_background()
    assert essential_spectrum_edges([free], (-1.0, 0.5)).intervals == []


def test_locate_energy_at_an_edge():
    free = make_background()
    assert locate_energy(free, 1.0) == "edge"
    assert locate_energy(free, 0.5) == "gap"


def test_kronig_penney_gap_is_open():
    background = make_background(KRONIG_PENNEY)
    spectrum = essential_spectrum_edges([background], (0.0, 15.0))
    assert len(spectrum.intervals) == 2
    (_, top), (bottom, _) = spectrum.intervals
    assert bottom > top


# ============================================================================
# Directions and continuation
# ============================================================================


def test_free_crossings_and_directions():
    free = make_background()
    crossings = classify_directions(free, 1.25)
    assert [c.tau for c in crossings] == pytest.approx([-0.5, 0.5], abs=1e-10)
    assert [c.direction for c in crossings] == ["minus", "plus"]


def test_gap_has_no_crossings():
    barrier = make_background("2", bg_id="barrier")
    assert classify_directions(barrier, 1.5) == []


def test_two_mode_crossings():
    free = make_background(modes=2, n_grid=64)
    crossings = classify_directions(free, 4.5)
    assert len(crossings) == 4
    taus = sorted(abs(c.tau) for c in crossings)
    assert taus == pytest.approx([np.sqrt(0.5)] * 2 + [np.sqrt(3.5)] * 2, abs=1e-9)


def test_band_edge_at_lambda0():
    free = make_background()
    with pytest.raises(BandEdgeAtLambda0):
        classify_directions(free, 1.0)


def test_band_edge_of_the_second_mode():
    # The first mode crosses 4.0 at tau = sqrt(3); the second mode starts exactly there
    free = make_background(modes=2, n_grid=64)
    with pytest.raises(BandEdgeAtLambda0):
        classify_directions(free, 4.0)


def test_continuation_to_real_energy():
    free = make_background()
    crossing = next(c for c in classify_directions(free, 1.25) if c.direction == "plus")
    tau = quasimomentum_continue(free, crossing, 1.25, 1.25)
    assert tau == pytest.approx(0.5, abs=1e-10)


def test_continuation_on_a_periodic_background():
    background = make_background(KRONIG_PENNEY)
    crossing = next(c for c in classify_directions(background, 3.0) if c.direction == "plus")
    tau = quasimomentum_continue(background, crossing, 3.0, 3.05)
    assert abs(tau.imag) <= 1e-10
    energies = band_structure(background, np.array([tau.real]), crossing.band)
    assert energies[0, crossing.band - 1] == pytest.approx(3.05, abs=1e-9)


def test_continuation_into_the_lower_half_plane():
    free = make_background()
    plus, minus = sorted(classify_directions(free, 1.25), key=lambda c: c.direction == "minus")
    energy = 1.25 - 0.1j
    expected = np.sqrt(0.25 - 0.1j)
    assert abs(quasimomentum_continue(free, plus, 1.25, energy) - expected) < 1e-10
    assert abs(quasimomentum_continue(free, minus, 1.25, energy) + expected) < 1e-10
    assert expected.imag < 0


def test_continuation_fails_at_a_band_edge():
    free = make_background()
    edge = BandCrossing(background_id="flat", band=1, tau=0.0, derivative=0.0, direction="plus")
    with pytest.raises(NewtonDivergence):
        quasimomentum_continue(free, edge, 1.0, 1.0 - 0.1j)


def test_continuation_outside_the_disc():
    free = make_background()
    crossing = classify_directions(free, 1.25)[0]
    with pytest.raises(NewtonDivergence):
        quasimomentum_continue(free, crossing, 1.25, 2.0, radius=0.5)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
