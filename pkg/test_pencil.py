#!/usr/bin/env python3
"""
Pencil tests: monodromy invariants, Floquet exponents, Jordan chains and the decay scale.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root to path
sys.path.insert(0, str(Path(__file__).parent))

from conftest import make_background, make_block  # noqa: E402
from src.errors import Lambda0InMiddleEssentialSpectrum  # noqa: E402
from src.geometry import build_assembly  # noqa: E402
from src.spectral import (  # noqa: E402
    CellPropagator,
    chain_residual,
    conjugacy_defect,
    decay_scale,
    exponents_from_monodromy,
    floquet_exponents,
    floquet_states,
    monodromy,
    reciprocity_defect,
    shift_coefficients,
)

# ============================================================================
# Monodromy
# ============================================================================


def test_free_monodromy_multipliers():
    free = make_background(period=np.pi)
    multipliers = np.sort(np.abs(monodromy(free, 0.75).multipliers))
    np.testing.assert_allclose(multipliers, [np.exp(-0.5 * np.pi), np.exp(0.5 * np.pi)], rtol=1e-9)

    inside = monodromy(free, 1.25).multipliers
    np.testing.assert_allclose(np.abs(inside), 1.0, atol=1e-9)
    np.testing.assert_allclose(np.sort(np.angle(inside)), [-0.5 * np.pi, 0.5 * np.pi], atol=1e-9)


@pytest.mark.parametrize("energy", [-0.3, 0.6, 1.7, 3.0])
def test_monodromy_is_real_unimodular_and_reciprocal(energy):
    background = make_background("0.5*cos(2*pi*x1) + 0.3*sin(xp)", modes=2, n_grid=64)
    matrix = monodromy(background, energy).matrix
    assert np.isrealobj(matrix)
    assert np.linalg.det(matrix) == pytest.approx(1.0, abs=1e-9)
    assert reciprocity_defect(matrix) <= 1e-8


# ============================================================================
# Floquet exponents
# ============================================================================


def test_free_exponents_one_mode():
    free = make_background(period=np.pi)
    exponents = floquet_exponents(free, 0.75)
    assert [e.sign for e in exponents] == ["plus", "minus"]
    assert exponents[0].exponent == pytest.approx(0.5j, abs=1e-10)
    assert exponents[1].exponent == pytest.approx(-0.5j, abs=1e-10)
    assert all(e.chain_length == 1 for e in exponents)
    assert conjugacy_defect(exponents) <= 1e-9


def test_free_exponents_two_modes():
    free = make_background(modes=2, n_grid=64)
    exponents = floquet_exponents(free, 0.75)
    rates = sorted(e.exponent.imag for e in exponents)
    expected = [-np.sqrt(3.25), -0.5, 0.5, np.sqrt(3.25)]
    np.testing.assert_allclose(rates, expected, atol=1e-9)
    assert all(e.chain_length == 1 for e in exponents)


def test_floquet_states_follow_the_exponent():
    free = make_background()
    plus = floquet_exponents(free, 0.75)[0]
    assert np.mean(np.abs(plus.chain[0]) ** 2) == pytest.approx(1.0)
    propagator = CellPropagator(free, 0.75)
    xi = np.array([0.0, 0.3, 2.6, -1.4])
    states = floquet_states(plus, propagator, xi)[0]
    np.testing.assert_allclose(states[:, 0], np.exp(-0.5 * xi), rtol=1e-9)
    np.testing.assert_allclose(states[:, 1], -0.5 * np.exp(-0.5 * xi), rtol=1e-9)


def test_strip_height_filters_exponents():
    free = make_background(modes=2, n_grid=64)
    kept = floquet_exponents(free, 0.75, strip_height=1.0)
    assert len(kept) == 2


def test_conjugacy_defect_without_partners():
    free = make_background()
    plus = [e for e in floquet_exponents(free, 0.75) if e.sign == "plus"]
    assert conjugacy_defect(plus) == np.inf


# ============================================================================
# Jordan chains
# ============================================================================


def test_defective_monodromy_gives_a_chain_of_length_two():
    matrix = np.array([[0.5, 1.0], [0.0, 0.5]])
    (eigen,) = exponents_from_monodromy(matrix, 1.0)
    assert eigen.chain_length == 2
    assert eigen.sign == "plus"
    assert eigen.exponent == pytest.approx(1j * np.log(2.0))
    assert eigen.residual <= 1e-7
    assert chain_residual(matrix, eigen.multiplier, 1.0, eigen.chain_states) <= 1e-7


def test_shift_coefficients_formula():
    alpha = np.array([2.0 + 1j, -0.5])
    period = 1.7
    forward = [alpha[0] + 1j * period * alpha[1], alpha[1]]
    backward = [alpha[0] - 1j * period * alpha[1], alpha[1]]
    np.testing.assert_allclose(shift_coefficients(alpha, period), forward)
    np.testing.assert_allclose(shift_coefficients(alpha, -period), backward)
    np.testing.assert_allclose(shift_coefficients(alpha[:1], period), alpha[:1])


# ============================================================================
# Decay scale
# ============================================================================


def _assembly(backgrounds, middle="flat"):
    blocks = [
        make_block("0", block_id="a", right=middle),
        make_block("0", block_id="b", left=middle),
    ]
    return build_assembly(blocks, [(1, 1)], backgrounds)


def test_decay_scale_single_free_connector():
    free = make_background()
    pencils = {"flat": floquet_exponents(free, 0.75)}
    scale = decay_scale(_assembly({"flat": free}), pencils)
    assert scale.mhat == pytest.approx(0.5, abs=1e-10)
    assert scale.levels == {"flat": 1}
    assert scale.kappa == 1
    assert 0.5 < scale.gamma < 1.0


def test_decay_scale_takes_the_smallest_level():
    slow = make_background("0", bg_id="slow")
    fast = make_background("0.2", bg_id="fast")
    backgrounds = {"slow": slow, "fast": fast}
    pencils = {bg_id: floquet_exponents(bg, 0.75) for bg_id, bg in backgrounds.items()}
    blocks = [
        make_block("0", block_id="a", left="slow", right="slow"),
        make_block("0", block_id="b", left="slow", right="fast"),
        make_block("0", block_id="c", left="fast", right="fast"),
    ]
    assembly = build_assembly(blocks, [(1, 1), (1, 1)], backgrounds)
    scale = decay_scale(assembly, pencils)
    # slow decays at sqrt(0.25) = 0.5, fast at sqrt(0.45)
    assert scale.mhat == pytest.approx(0.5, abs=1e-10)
    assert scale.levels == {"slow": 1, "fast": 0}


def test_lambda0_in_a_connector_band():
    free = make_background()
    pencils = {"flat": floquet_exponents(free, 1.25)}
    with pytest.raises(Lambda0InMiddleEssentialSpectrum):
        decay_scale(_assembly({"flat": free}), pencils)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
