#!/usr/bin/env python3
"""
Bound-state tests: block eigenvalues, eigenvectors, tail amplitudes and lambda0 selection.

Two reference wells have closed forms: the square well V = -2 on |x1| < 1 and the
Poschl-Teller well V = -2 / cosh(x1)^2, whose only level sits at lambda0 = 0 with
eigenfunction 1 / (sqrt(2) cosh(x1)).
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.integrate

# Add the repository root to path
sys.path.insert(0, str(Path(__file__).parent))

from conftest import WELL_WINDOW, make_background, make_block, square_well_level  # noqa: E402
from src.errors import WindowTouchesBand  # noqa: E402
from src.geometry import build_assembly  # noqa: E402
from src.models import BoundState  # noqa: E402
from src.spectral import (  # noqa: E402
    decay_scale,
    discrete_eigenvalues,
    floquet_exponents,
    matching_determinant,
    select_lambda0,
    tail_coefficients,
    truncated_dense_eigenvalues,
)


@pytest.fixture(scope="module")
def poschl_teller():
    # Cut off at |x1| = 9, where the dropped potential moves the tail amplitude by ~exp(-18)
    return make_block("-2/cosh(x1)**2", block_id="pt", a=9.0)


@pytest.fixture(scope="module")
def poschl_teller_states(poschl_teller, flat):
    return discrete_eigenvalues(poschl_teller, {"flat": flat}, WELL_WINDOW, scan_points=120)


# ============================================================================
# Eigenvalues
# ============================================================================


def test_square_well_level_matches_closed_form(well_states):
    expected, _, _ = square_well_level()
    assert len(well_states) == 1
    assert well_states[0].eigenvalue == pytest.approx(expected, abs=1e-8)
    assert well_states[0].multiplicity == 1


def test_matching_determinant_changes_sign(well, flat):
    lambda0, _, _ = square_well_level()
    backgrounds = {"flat": flat}
    below = matching_determinant(well, backgrounds, lambda0 - 0.01, reference_energy=0.0)
    above = matching_determinant(well, backgrounds, lambda0 + 0.01, reference_energy=0.0)
    assert below * above < 0


def test_poschl_teller_level(poschl_teller_states):
    assert len(poschl_teller_states) == 1
    assert poschl_teller_states[0].eigenvalue == pytest.approx(0.0, abs=1e-6)


def test_dense_oracle_agrees(poschl_teller, poschl_teller_states, flat):
    levels = truncated_dense_eigenvalues(poschl_teller, {"flat": flat}, WELL_WINDOW)
    assert levels.size == 1
    assert levels[0] == pytest.approx(poschl_teller_states[0].eigenvalue, abs=1e-5)


def test_decoupled_channels_give_a_double_level():
    # 3 - 6 cos(2 xp) projects to diag(6, 3): both channels see the threshold 7
    offset = "3 - 6*cos(2*xp)"
    background = make_background(offset, bg_id="shifted", modes=2, n_grid=64)
    block = make_block(
        f"{offset} - 2*step(1 - abs(x1))",
        block_id="twin",
        left="shifted",
        right="shifted",
        modes=2,
    )
    window = (WELL_WINDOW[0] + 6.0, WELL_WINDOW[1] + 6.0)
    states = discrete_eigenvalues(block, {"shifted": background}, window, scan_points=120)

    expected, _, _ = square_well_level()
    assert len(states) == 2
    assert [s.multiplicity for s in states] == [2, 2]
    assert [s.index for s in states] == [1, 2]
    for state in states:
        assert state.eigenvalue == pytest.approx(expected + 6.0, abs=1e-7)

    first, second = (s.eigenvector for s in states)
    grid = states[0].grid
    overlap = scipy.integrate.trapezoid(np.sum(first * second, axis=1), grid)
    assert abs(overlap) <= 1e-6


def test_no_perturbation_no_levels(flat):
    empty = make_block("0", block_id="empty")
    assert discrete_eigenvalues(empty, {"flat": flat}, WELL_WINDOW, scan_points=60) == []


def test_window_touching_the_band(well, flat):
    with pytest.raises(WindowTouchesBand):
        discrete_eigenvalues(well, {"flat": flat}, (0.5, 1.2))


# ============================================================================
# Eigenvectors
# ============================================================================


def test_square_well_state_is_even_and_normalized(well_states):
    state = well_states[0]
    values = state.eigenvector[:, 0]
    np.testing.assert_allclose(state.grid, -state.grid[::-1], atol=1e-9)
    assert np.max(np.abs(values - values[::-1])) <= 1e-7 * np.max(np.abs(values))
    assert values[np.argmin(np.abs(state.grid))] > 0


def test_poschl_teller_eigenfunction(poschl_teller_states):
    state = poschl_teller_states[0]
    inner = np.abs(state.grid) <= 6.0
    expected = 1.0 / (np.sqrt(2.0) * np.cosh(state.grid[inner]))
    np.testing.assert_allclose(state.eigenvector[inner, 0], expected, atol=1e-6)


# ============================================================================
# Tail amplitudes
# ============================================================================


def test_square_well_tail_amplitude(well, well_states, flat, double_well):
    _, pencils, scale = double_well()
    _, kappa, amplitude = square_well_level()
    assert scale.mhat == pytest.approx(kappa, abs=1e-8)

    tails = {
        side: tail_coefficients(well, well_states[0], side, pencils["flat"], scale, {"flat": flat})
        for side in ("left", "right")
    }
    for tail in tails.values():
        assert len(tail.alpha) == 1
        assert tail.alpha[0].shape == (1,)
        assert tail.reconstruction_error <= 1e-6
        assert tail.residual_rate >= scale.gamma - 0.1 * scale.mhat
    right, left = tails["right"].alpha[0][0], tails["left"].alpha[0][0]
    assert right.real == pytest.approx(amplitude, rel=1e-5)
    assert abs(right.imag) <= 1e-8
    assert abs(abs(left) - abs(right)) <= 1e-7 * abs(right)


def test_poschl_teller_tail_amplitude(poschl_teller, poschl_teller_states, flat):
    state = poschl_teller_states[0]
    backgrounds = {"flat": flat}
    exponents = floquet_exponents(flat, state.eigenvalue)
    assembly = build_assembly([poschl_teller, poschl_teller], [(2, 2)], backgrounds)
    scale = decay_scale(assembly, {"flat": exponents})
    assert scale.mhat == pytest.approx(1.0, abs=1e-6)

    # 1 / (sqrt(2) cosh(y)) ~ sqrt(2) exp(-|y|)
    for side in ("left", "right"):
        tail = tail_coefficients(poschl_teller, state, side, exponents, scale, backgrounds)
        assert tail.alpha[0][0].real == pytest.approx(np.sqrt(2.0), rel=1e-6)


# ============================================================================
# lambda0 selection
# ============================================================================


def _state(block_id: str, eigenvalue: float) -> BoundState:
    return BoundState(
        block_id=block_id,
        eigenvalue=eigenvalue,
        grid=np.zeros(2),
        eigenvector=np.zeros((2, 1)),
        derivative=np.zeros((2, 1)),
    )


def test_select_shared_eigenvalue():
    states = {"a": [_state("a", 0.5)], "b": [_state("b", 0.5 + 1e-12)], "c": [_state("c", 0.7)]}
    lambda0, selected = select_lambda0(states, None)
    assert lambda0 == pytest.approx(0.5, abs=1e-11)
    assert [len(selected[k]) for k in "abc"] == [1, 1, 0]


def test_select_with_hint():
    states = {"a": [_state("a", 0.5)], "c": [_state("c", 0.7)]}
    lambda0, selected = select_lambda0(states, 0.7)
    assert lambda0 == pytest.approx(0.7)
    assert [len(selected[k]) for k in "ac"] == [0, 1]


def test_hint_away_from_every_eigenvalue():
    states = {"a": [_state("a", 0.5)]}
    lambda0, selected = select_lambda0(states, 0.6)
    assert lambda0 == 0.6
    assert selected == {"a": []}


def test_nothing_to_select():
    lambda0, selected = select_lambda0({"a": [], "b": []}, None)
    assert lambda0 is None
    assert selected == {"a": [], "b": []}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
