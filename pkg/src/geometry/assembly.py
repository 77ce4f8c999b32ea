"""Gluing single-perturbation blocks into the operator with distant perturbations."""

import logging
from typing import Sequence

import numpy as np

from ..errors import BadSpacing, ConfigError, IncompatibleBackgrounds
from ..models import GluedAssembly, Interval, PeriodicBackground, PerturbationBlock, Spacing

logger = logging.getLogger(__name__)

SEAM_TOLERANCE = 1e-10


def build_assembly(
    blocks: Sequence[PerturbationBlock],
    spacings: Sequence[Spacing],
    backgrounds: dict[str, PeriodicBackground],
) -> GluedAssembly:
    """Place the blocks on the line; the first block sits at X = 0."""
    if len(blocks) < 2:
        raise ConfigError(f"an assembly needs at least two blocks, got {len(blocks)}")
    if len(spacings) != len(blocks) - 1:
        raise BadSpacing(
            f"{len(blocks)} blocks need {len(blocks) - 1} spacing pairs, got {len(spacings)}"
        )

    for block in blocks:
        for bg_id in (block.left_background, block.right_background):
            if bg_id not in backgrounds:
                raise ConfigError(f"block '{block.id}' refers to unknown background '{bg_id}'")

    for k, (left, right) in enumerate(zip(blocks[:-1], blocks[1:])):
        if left.right_background != right.left_background:
            raise IncompatibleBackgrounds(
                f"block '{left.id}' ends in background '{left.right_background}' but block "
                f"'{right.id}' starts in '{right.left_background}'",
                connector=k + 1,
            )

    normalized: list[Spacing] = []
    for k, pair in enumerate(spacings):
        if len(pair) != 2:
            raise BadSpacing(f"spacing {k + 1} must be a pair of integers, got {pair}")
        l_minus, l_plus = pair
        if int(l_minus) != l_minus or int(l_plus) != l_plus or l_minus < 1 or l_plus < 1:
            raise BadSpacing(f"spacing {k + 1} must hold positive integers, got {pair}")
        normalized.append((int(l_minus), int(l_plus)))

    positions = [0.0]
    for k, (l_minus, l_plus) in enumerate(normalized):
        period = backgrounds[blocks[k].right_background].period
        gap = blocks[k + 1].a_minus + blocks[k].a_plus + (l_minus + l_plus) * period
        positions.append(positions[-1] + gap)

    _warn_on_seams(blocks, backgrounds)

    assembly = GluedAssembly(
        blocks=tuple(blocks),
        spacings=tuple(normalized),
        positions=tuple(positions),
        backgrounds=dict(backgrounds),
    )
    logger.debug(f"Assembly positions: {assembly.positions}")
    return assembly


def block_coefficient(
    block: PerturbationBlock, backgrounds: dict[str, PeriodicBackground], y: np.ndarray
) -> np.ndarray:
    """The block's own coefficient on the whole line, in block coordinates.

    The left background has a cell boundary at -a_minus and the right one at a_plus.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    left = backgrounds[block.left_background]
    right = backgrounds[block.right_background]
    modes = left.modes

    values = np.empty((y.size, modes, modes))
    core = (y >= -block.a_minus) & (y <= block.a_plus)
    below = y < -block.a_minus
    above = y > block.a_plus
    if np.any(core):
        values[core] = block.potential(y[core])
    if np.any(below):
        values[below] = left.value(y[below] + block.a_minus)
    if np.any(above):
        values[above] = right.value(y[above] - block.a_plus)
    return values


def owner_of(assembly: GluedAssembly, x: np.ndarray) -> np.ndarray:
    """Index of the block whose characteristic function is nonzero at each point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    owners = np.zeros(x.size, dtype=int)
    for k in range(assembly.n - 1):
        l_plus = assembly.spacings[k][1]
        period = assembly.connector(k).period
        boundary = assembly.positions[k] + assembly.blocks[k].a_plus + l_plus * period
        owners[x > boundary] = k + 1
    return owners


def sample_glued_potential(
    assembly: GluedAssembly, window: Interval, step: float
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the glued coefficient sum_k chi_k A_k(x - X_k) on a uniform grid."""
    lo, hi = window
    if not hi > lo or not step > 0:
        raise ValueError(f"bad sampling window {window} with step {step}")
    count = int(np.ceil((hi - lo) / step - 1e-9))
    x = np.linspace(lo, hi, count + 1)

    owners = owner_of(assembly, x)
    modes = assembly.modes
    samples = np.empty((x.size, modes, modes))
    for k, block in enumerate(assembly.blocks):
        mask = owners == k
        if np.any(mask):
            shifted = x[mask] - assembly.positions[k]
            samples[mask] = block_coefficient(block, assembly.backgrounds, shifted)
    return x, samples


def seam_jumps(
    block: PerturbationBlock, backgrounds: dict[str, PeriodicBackground]
) -> tuple[float, float]:
    """Largest entry jump between the core and its backgrounds at the two seams."""
    left = backgrounds[block.left_background]
    right = backgrounds[block.right_background]
    core = block.potential(np.array([-block.a_minus, block.a_plus]))
    left_jump = np.max(np.abs(core[0] - left.value(np.array([0.0]))[0]))
    right_jump = np.max(np.abs(core[1] - right.value(np.array([0.0]))[0]))
    return float(left_jump), float(right_jump)


def _warn_on_seams(
    blocks: Sequence[PerturbationBlock], backgrounds: dict[str, PeriodicBackground]
) -> None:
    for block in blocks:
        left_jump, right_jump = seam_jumps(block, backgrounds)
        if max(left_jump, right_jump) > SEAM_TOLERANCE:
            logger.warning(
                f"Block '{block.id}' is discontinuous at its seams "
                f"(left jump {left_jump:.3g}, right jump {right_jump:.3g})"
            )
