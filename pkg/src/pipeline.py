"""Experiment pipeline: floquet -> pencil -> bound states -> interaction -> resonances."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, ExpressionPotentialConfig, PotentialConfig
from .errors import EmptyProblem, InsufficientData, StripResonanceError, WindowTouchesBand
from .geometry import (
    ExpressionPotential,
    TablePotential,
    build_assembly,
    galerkin_project,
)
from .models import (
    BoundState,
    CheckResult,
    CrossSection,
    ExperimentReport,
    GluedAssembly,
    PeriodicBackground,
    PerturbationBlock,
    RateFit,
    SpacingReport,
    SpectralAnalysis,
    StripModel,
)
from .resonance import (
    ScatteringSolver,
    assemble_interaction,
    collect_tails,
    coupling_table,
    gauge_check,
    locate_resonances,
    predicted_resonances,
    prediction_report,
    rate_fit,
    translate_spread,
)
from .spectral import (
    conjugacy_defect,
    decay_scale,
    discrete_eigenvalues,
    essential_spectrum_edges,
    floquet_exponents,
    monodromy,
    reciprocity_defect,
    select_lambda0,
    truncated_dense_eigenvalues,
)

logger = logging.getLogger(__name__)

SpacingSet = tuple[tuple[int, int], ...]

# Tolerances of the built-in invariant suite
HERMITIAN_TOLERANCE = 1e-12
POSITION_TOLERANCE = 1e-9
DETERMINANT_TOLERANCE = 1e-9
RECIPROCITY_TOLERANCE = 1e-8
CONJUGACY_TOLERANCE = 1e-9
CHAIN_TOLERANCE = 1e-7
TRANSLATE_TOLERANCE = 1e-8
GAUGE_TOLERANCE = 1e-10
HALF_PLANE_TOLERANCE = 1e-10
CAUCHY_RIEMANN_TOLERANCE = 1e-4
CONTINUATION_TOLERANCE = 1e-6
DENSE_TOLERANCE = 1e-4


# ============================================================================
# Model construction
# ============================================================================


def _scalar_potential(
    potential: PotentialConfig, period: float | None = None
) -> ExpressionPotential | TablePotential:
    if isinstance(potential, ExpressionPotentialConfig):
        return ExpressionPotential(potential.text)
    return TablePotential(potential.x, potential.values, period=period)


def build_model(config: ExperimentConfig) -> StripModel:
    """Galerkin-reduced backgrounds and blocks for the configured cross-section."""
    cross_section = CrossSection(
        width=config.cross_section.width, modes=config.cross_section.modes
    )
    backgrounds = {
        bg.id: PeriodicBackground(
            id=bg.id,
            period=bg.period,
            potential=galerkin_project(
                _scalar_potential(bg.potential, bg.period), cross_section
            ),
            modes=cross_section.modes,
            n_grid=config.solver.n_grid,
        )
        for bg in config.backgrounds
    }
    blocks = {
        block.id: PerturbationBlock(
            id=block.id,
            left_background=block.left,
            right_background=block.right,
            a_minus=block.a_minus,
            a_plus=block.a_plus,
            potential=galerkin_project(_scalar_potential(block.potential), cross_section),
            core_step=config.solver.core_step,
        )
        for block in config.blocks
    }
    logger.info(
        f"Model: width={cross_section.width:.6g}, M={cross_section.modes}, "
        f"{len(backgrounds)} backgrounds, assembly {list(config.assembly.block_ids)}"
    )
    return StripModel(
        cross_section=cross_section,
        backgrounds=backgrounds,
        blocks=blocks,
        order=tuple(config.assembly.block_ids),
    )


def dedupe_spacings(spacings: Sequence[SpacingSet]) -> list[SpacingSet]:
    unique: list[SpacingSet] = []
    for spacing in spacings:
        if spacing in unique:
            logger.warning(f"Duplicate spacing {spacing} dropped from the sweep")
            continue
        unique.append(spacing)
    return unique


# ============================================================================
# Spacing-independent analysis
# ============================================================================


def _bound_states(
    model: StripModel, config: ExperimentConfig
) -> tuple[dict[str, list[BoundState]], list[str]]:
    solver = config.solver
    interior = set(model.order[1:-1])
    states: dict[str, list[BoundState]] = {}
    skipped: list[str] = []
    for block_id in dict.fromkeys(model.order):
        try:
            states[block_id] = discrete_eigenvalues(
                model.blocks[block_id],
                model.backgrounds,
                config.search_window,
                scan_points=solver.scan_points,
                band_margin=solver.band_margin,
                pad_decay=solver.pad_decay,
                tail_periods=solver.fit_offset_periods + 2 * solver.fit_length_periods,
            )
        except WindowTouchesBand as e:
            if block_id in interior:
                raise
            logger.info(f"Edge block '{block_id}' sits in a band at the window: {e.message}")
            states[block_id] = []
            skipped.append(block_id)
    return states, skipped


def analyze(model: StripModel, config: ExperimentConfig, spacing: SpacingSet) -> SpectralAnalysis:
    """Bound states, lambda0, Floquet exponents, decay scale and coupling tables."""
    solver = config.solver
    states, skipped = _bound_states(model, config)
    hint = None if config.lambda0 == "auto" else float(config.lambda0)
    lambda0, selected = select_lambda0(states, hint, solver.cluster_tolerance)
    if lambda0 is None:
        raise EmptyProblem(f"no block has an eigenvalue in {config.search_window}")
    logger.info(f"lambda0 = {lambda0:.12g}")

    pencils = {
        bg_id: floquet_exponents(background, lambda0)
        for bg_id, background in model.backgrounds.items()
    }
    assembly = build_assembly(model.assembly_blocks, spacing, model.backgrounds)
    scale = decay_scale(assembly, pencils)

    spectrum = essential_spectrum_edges(
        list(model.backgrounds.values()), config.search_window, lambda0=lambda0
    )
    connectors = {assembly.connector(k).id: assembly.connector(k) for k in range(assembly.n - 1)}
    tables = {
        bg_id: coupling_table(
            background,
            pencils[bg_id],
            scale.mhat,
            lambda0,
            tolerance=solver.exponent_tolerance,
        )
        for bg_id, background in connectors.items()
    }

    size = sum(len(selected[block.id]) for block in assembly.blocks)
    if size == 0:
        raise EmptyProblem(
            f"no block has an eigenvalue at lambda0={lambda0:.10g}: the assembly has no "
            f"resonances near lambda0",
            lambda0=f"{lambda0:.10g}",
        )
    return SpectralAnalysis(
        lambda0=lambda0,
        states=states,
        selected=selected,
        pencils=pencils,
        scale=scale,
        tables=tables,
        spectrum=spectrum,
        skipped=skipped,
    )


# ============================================================================
# One spacing
# ============================================================================


def _states_in_order(assembly: GluedAssembly, analysis: SpectralAnalysis) -> list[list[BoundState]]:
    return [analysis.selected[block.id] for block in assembly.blocks]


def contour_radius(eta: float, largest_shift: float, config: ExperimentConfig) -> float:
    """Radius of the counting disc around lambda0, inside the continuation disc."""
    radius = max(config.solver.disc_constant * eta, 3.0 * largest_shift)
    return min(radius, 0.9 * config.solver.continuation_radius)


def run_spacing(
    model: StripModel,
    analysis: SpectralAnalysis,
    spacing: SpacingSet,
    config: ExperimentConfig,
    checks: bool = True,
) -> SpacingReport:
    """Interaction matrix, predictions and located resonances of one assembly."""
    solver = config.solver
    lambda0 = analysis.lambda0
    assembly = build_assembly(model.assembly_blocks, spacing, model.backgrounds)
    states = _states_in_order(assembly, analysis)
    counts = [len(group) for group in states]

    tails = collect_tails(
        assembly,
        states,
        analysis.pencils,
        analysis.scale,
        lambda0,
        offset_periods=solver.fit_offset_periods,
        length_periods=solver.fit_length_periods,
    )
    tables = [analysis.tables[assembly.connector(k).id] for k in range(assembly.n - 1)]
    interaction = assemble_interaction(
        assembly, counts, tails, tables, analysis.scale, lambda0, solver.cluster_factor
    )
    predictions = predicted_resonances(interaction)

    scattering = ScatteringSolver(
        assembly,
        lambda0,
        continuation_radius=solver.continuation_radius,
        continuation_steps=solver.continuation_steps,
        derivative_floor=solver.derivative_floor,
        degeneracy_floor=solver.degeneracy_floor,
    )
    radius = contour_radius(
        interaction.scales.eta, float(np.max(np.abs(interaction.eigenvalues))), config
    )
    result = locate_resonances(
        scattering,
        lambda0,
        radius,
        interaction.size,
        seeds=[p.value for p in predictions],
        points=solver.contour_points,
    )
    prediction_report(result, predictions, lambda0)

    report = SpacingReport(
        assembly=assembly, interaction=interaction, result=result, tails=list(tails)
    )
    if checks:
        report.checks = spacing_checks(report, scattering)
    return report


def spacing_checks(report: SpacingReport, scattering: ScatteringSolver) -> list[CheckResult]:
    assembly = report.assembly
    result = report.result
    label = ";".join(f"{a},{b}" for a, b in assembly.spacings)
    checks: list[CheckResult] = []

    worst = 0.0
    for k in range(assembly.n - 1):
        left, right = assembly.blocks[k], assembly.blocks[k + 1]
        l_minus, l_plus = assembly.spacings[k]
        expected = right.a_minus + left.a_plus + (l_minus + l_plus) * assembly.connector(k).period
        gap = assembly.positions[k + 1] - assembly.positions[k]
        worst = max(worst, abs(gap - expected) / max(1.0, expected))
    checks.append(CheckResult("position_identity", worst, POSITION_TOLERANCE, label))

    checks.append(
        CheckResult(
            "winding_at_most_n",
            float(max(0, result.winding - report.interaction.size)),
            0.0,
            f"{label}: winding {result.winding}, N {report.interaction.size}",
        )
    )
    highest = max((r.value.imag for r in result.located), default=-np.inf)
    checks.append(
        CheckResult("lower_half_plane", max(highest, 0.0), HALF_PLANE_TOLERANCE, label)
    )

    center, radius = scattering.lambda0, result.radius
    probe = center + 0.5 * radius * np.exp(1j * np.pi / 3)
    checks.append(
        CheckResult(
            "determinant_holomorphic",
            scattering.cauchy_riemann_defect(probe, step=1e-3 * radius),
            CAUCHY_RIEMANN_TOLERANCE,
            label,
        )
    )

    probe = center + 0.5 * radius * np.exp(-1j * np.pi / 4)
    worst, detail = 0.0, label
    for side in ("left", "right"):
        try:
            continued = scattering.continued_multipliers(side, probe)
            if not continued:
                continue
            selected = np.array(scattering.selected_multipliers(side, probe))
        except StripResonanceError as e:
            worst, detail = np.inf, f"{label}: {e.message}"
            break
        worst = max(worst, max(float(np.min(np.abs(selected - rho))) for rho in continued))
    checks.append(CheckResult("outgoing_continuation", worst, CONTINUATION_TOLERANCE, detail))
    return checks


# ============================================================================
# Invariants that do not depend on the spacing
# ============================================================================


def model_checks(
    model: StripModel, analysis: SpectralAnalysis, config: ExperimentConfig
) -> list[CheckResult]:
    lambda0 = analysis.lambda0
    checks: list[CheckResult] = []

    worst = 0.0
    for background in model.backgrounds.values():
        samples = background.samples
        worst = max(worst, float(np.max(np.abs(samples - np.swapaxes(samples, 1, 2).conj()))))
    for block in model.blocks.values():
        samples = block.core_samples
        worst = max(worst, float(np.max(np.abs(samples - np.swapaxes(samples, 1, 2).conj()))))
    checks.append(CheckResult("galerkin_hermitian", worst, HERMITIAN_TOLERANCE))

    for bg_id, background in model.backgrounds.items():
        matrix = monodromy(background, lambda0).matrix
        checks.append(
            CheckResult(
                "monodromy_determinant",
                float(abs(np.linalg.det(matrix) - 1.0)),
                DETERMINANT_TOLERANCE,
                bg_id,
            )
        )
        checks.append(
            CheckResult(
                "multiplier_reciprocity",
                reciprocity_defect(matrix),
                RECIPROCITY_TOLERANCE,
                bg_id,
            )
        )
        pencils = analysis.pencils[bg_id]
        checks.append(
            CheckResult(
                "chain_equations",
                max((e.residual for e in pencils), default=0.0),
                CHAIN_TOLERANCE,
                bg_id,
            )
        )

    for bg_id, table in analysis.tables.items():
        checks.append(
            CheckResult(
                "exponent_conjugacy",
                conjugacy_defect(analysis.pencils[bg_id]),
                CONJUGACY_TOLERANCE,
                bg_id,
            )
        )
        checks.append(
            CheckResult(
                "coupling_translate",
                translate_spread(model.backgrounds[bg_id], table, lambda0),
                TRANSLATE_TOLERANCE,
                bg_id,
            )
        )

    for block_id, group in analysis.selected.items():
        if not group:
            continue
        levels = truncated_dense_eigenvalues(
            model.blocks[block_id],
            model.backgrounds,
            config.search_window,
            step=config.solver.dense_step,
        )
        distance = float(np.min(np.abs(levels - lambda0))) if levels.size else np.inf
        checks.append(CheckResult("dense_eigenvalue", distance, DENSE_TOLERANCE, block_id))
    return checks


def gauge_invariance(
    model: StripModel, analysis: SpectralAnalysis, report: SpacingReport, seed: int
) -> CheckResult:
    rng = np.random.default_rng(seed)
    change = gauge_check(
        report.assembly,
        _states_in_order(report.assembly, analysis),
        analysis.pencils,
        analysis.scale,
        analysis.lambda0,
        report.interaction,
        rng,
    )
    return CheckResult("gauge_invariance", change, GAUGE_TOLERANCE, f"seed {seed}")


# ============================================================================
# Sweeps
# ============================================================================


def sweep_rate(reports: Sequence[SpacingReport], lambda0: float) -> RateFit | None:
    """Rate fit of the largest root deviation against the spacing scales."""
    usable = [r for r in reports if r.result.located]
    if len(usable) < 3:
        return None
    usable.sort(key=lambda r: r.interaction.scales.shortest)
    try:
        return rate_fit(
            [r.interaction.scales.shortest for r in usable],
            [r.interaction.scales.longest for r in usable],
            [max(abs(root.value - lambda0) for root in r.result.located) for r in usable],
        )
    except InsufficientData as e:
        logger.warning(f"No rate fit: {e.message}")
        return None


def run_experiment(
    config: ExperimentConfig, checks_only: bool = False, model: StripModel | None = None
) -> ExperimentReport:
    """The full pipeline over the configured spacings.

    With ``checks_only`` only the first spacing is solved, for the invariant suite.
    """
    spacings = dedupe_spacings(config.spacing_sets())
    if checks_only:
        spacings = spacings[:1]

    if model is None:
        model = build_model(config)
    analysis = analyze(model, config, spacings[0])

    jobs = min(config.solver.jobs, len(spacings))
    if jobs > 1:
        logger.info(f"Solving {len(spacings)} spacings with {jobs} workers")
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(lambda s: run_spacing(model, analysis, s, config), spacings))
    else:
        reports = [run_spacing(model, analysis, s, config) for s in spacings]

    checks = model_checks(model, analysis, config)
    checks.append(gauge_invariance(model, analysis, reports[0], config.seed))
    experiment = ExperimentReport(
        analysis=analysis,
        spacings=reports,
        rate=None if checks_only else sweep_rate(reports, analysis.lambda0),
        checks=checks,
    )
    failed = [c for c in experiment.all_checks if not c.passed]
    for check in failed:
        logger.warning(
            f"Check {check.name} failed: {check.value:.3e} > {check.tolerance:.1e} "
            f"({check.detail})"
        )
    logger.info(
        f"Experiment done: {len(reports)} spacings, "
        f"{len(experiment.all_checks) - len(failed)}/{len(experiment.all_checks)} checks passed"
    )
    return experiment
