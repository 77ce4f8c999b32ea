"""Result files: versioned CSV tables, JSON reports and a gnuplot script."""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .models import ExperimentReport, InteractionMatrix, StripModel
from .spectral import band_structure, zone_width

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
BAND_POINTS = 129
BAND_COUNT = 6
FLOAT = "{:.12e}"


def write_atomic(path: Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    logger.debug(f"Wrote {path}")


def _number(value: float) -> str:
    return FLOAT.format(value) if math.isfinite(value) else "nan"


def _csv(name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    buffer.write(f"# {name} v{FORMAT_VERSION}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_number(v) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def finite(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, complex split, non-finite floats -> None."""
    if isinstance(value, dict):
        return {str(k): finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [finite(v) for v in value]
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": finite(float(value.real)), "im": finite(float(value.imag))}
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    return value


def _json(name: str, payload: dict[str, Any]) -> str:
    document = {"format": f"{name} v{FORMAT_VERSION}", **payload}
    return json.dumps(finite(document), indent=2) + "\n"


def _spacing_label(spacing: Sequence[Sequence[int]]) -> str:
    return "/".join(f"{a},{b}" for a, b in spacing)


# ============================================================================
# Tables
# ============================================================================


def bands_csv(model: StripModel) -> str:
    rows = []
    for bg_id, background in model.backgrounds.items():
        half = 0.5 * zone_width(background)
        taus = np.linspace(-half, half, BAND_POINTS)
        count = min(BAND_COUNT, background.modes * background.n_grid // 4)
        energies = band_structure(background, taus, count)
        for p in range(count):
            for tau, energy in zip(taus, energies[:, p]):
                rows.append((bg_id, p + 1, float(tau), float(energy)))
    return _csv("bands", ["background_id", "band", "tau", "energy"], rows)


def exponents_csv(report: ExperimentReport) -> str:
    rows = []
    for bg_id, exponents in report.analysis.pencils.items():
        for e in exponents:
            rows.append(
                (
                    bg_id,
                    float(e.exponent.real),
                    float(e.exponent.imag),
                    e.chain_length,
                    e.sign,
                    float(e.multiplier.real),
                    float(e.multiplier.imag),
                    float(e.residual),
                )
            )
    header = [
        "background_id",
        "re_exponent",
        "im_exponent",
        "chain_length",
        "family",
        "re_multiplier",
        "im_multiplier",
        "residual",
    ]
    return _csv("exponents", header, rows)


RESONANCE_COLUMNS = [
    "spacing_min",
    "spacing_max",
    "re_lambda",
    "im_lambda",
    "predicted_re",
    "predicted_im",
    "residual",
    "eta",
    "spacing",
    "root",
    "multiplicity",
    "error_bar",
    "winding",
]


def resonance_rows(report: ExperimentReport) -> list[dict[str, Any]]:
    """One row per (spacing, root) with the nearest prediction."""
    rows = []
    for entry in report.spacings:
        result = entry.result
        scales = entry.interaction.scales
        for j, (root, residual) in enumerate(zip(result.located, result.residuals), start=1):
            nearest = min(result.predicted, key=lambda p: abs(root.value - p.value))
            rows.append(
                {
                    "spacing_min": float(scales.shortest),
                    "spacing_max": float(scales.longest),
                    "re_lambda": float(root.value.real),
                    "im_lambda": float(root.value.imag),
                    "predicted_re": float(nearest.value.real),
                    "predicted_im": float(nearest.value.imag),
                    "residual": float(residual),
                    "eta": float(scales.eta),
                    "spacing": _spacing_label(result.spacing),
                    "root": j,
                    "multiplicity": root.multiplicity,
                    "error_bar": float(nearest.error_bar),
                    "winding": result.winding,
                }
            )
    return rows


def resonances_csv(report: ExperimentReport) -> str:
    rows = resonance_rows(report)
    text = _csv(
        "resonances", RESONANCE_COLUMNS, ([row[k] for k in RESONANCE_COLUMNS] for row in rows)
    )
    if report.rate is not None:
        fit = report.rate
        text += (
            f"# rate_fit slope={_number(fit.slope)} exponent={_number(fit.exponent)} "
            f"prefactor={_number(fit.prefactor)} points={fit.points}\n"
        )
    return text


# ============================================================================
# JSON reports
# ============================================================================


def _tail_amplitudes(report: ExperimentReport) -> dict[tuple[str, int, str], list[np.ndarray]]:
    """(block id, state index, side) -> chain coefficients, from the first spacing.

    Amplitudes live in block coordinates, so any spacing gives the same values.
    """
    amplitudes: dict[tuple[str, int, str], list[np.ndarray]] = {}
    if not report.spacings:
        return amplitudes
    first = report.spacings[0]
    for block, tails in zip(first.assembly.blocks, first.tails):
        for side, expansions in tails.items():
            for state, tail in zip(report.analysis.selected[block.id], expansions):
                amplitudes[(block.id, state.index, side)] = tail.alpha
    return amplitudes


def bound_states_json(report: ExperimentReport) -> str:
    analysis = report.analysis
    amplitudes = _tail_amplitudes(report)
    records = []
    for block_id, states in analysis.states.items():
        selected = analysis.selected.get(block_id, [])
        for s in states:
            chosen = any(s is t for t in selected)
            record: dict[str, Any] = {
                "block": block_id,
                "eigenvalue": s.eigenvalue,
                "multiplicity": s.multiplicity,
                "index": s.index,
                "residual": s.residual,
                "selected": chosen,
            }
            for side in ("left", "right"):
                alpha = amplitudes.get((block_id, s.index, side)) if chosen else None
                record[f"alpha_{side}"] = alpha
            records.append(record)
    payload = {
        "lambda0": analysis.lambda0,
        "skipped_blocks": analysis.skipped,
        "states": records,
    }
    return _json("bound_states", payload)


def _matrix_blocks(interaction: InteractionMatrix) -> list[dict[str, Any]]:
    """Nonempty neighbour blocks (r, k) of the interaction matrix, 0-based block numbers."""
    offsets = interaction.offsets
    blocks = []
    for r in range(len(offsets) - 1):
        for k in (r - 1, r + 1):
            if not 0 <= k < len(offsets) - 1:
                continue
            rows = slice(offsets[r], offsets[r + 1])
            cols = slice(offsets[k], offsets[k + 1])
            if rows.start == rows.stop or cols.start == cols.stop:
                continue
            blocks.append({"r": r, "k": k, "entries": interaction.matrix[rows, cols]})
    return blocks


def interaction_json(report: ExperimentReport) -> str:
    entries = []
    for entry in report.spacings:
        interaction = entry.interaction
        scales = interaction.scales
        entries.append(
            {
                "spacing": _spacing_label(entry.assembly.spacings),
                "N": interaction.size,
                "blocks": _matrix_blocks(interaction),
                "eigenvalues": interaction.eigenvalues,
                "clusters": interaction.clusters,
                "eta": scales.eta,
                "mhat": scales.mhat,
                "gamma": scales.gamma,
                "positions": list(entry.assembly.positions),
                "offsets": interaction.offsets,
                "shortest": scales.shortest,
                "longest": scales.longest,
                "error_bar": scales.remainder(interaction.size),
            }
        )
    return _json("interaction", {"lambda0": report.analysis.lambda0, "spacings": entries})


def resonances_json(report: ExperimentReport) -> str:
    payload: dict[str, Any] = {"roots": resonance_rows(report)}
    if report.rate is not None:
        payload["rate_fit"] = vars(report.rate)
    return _json("resonances", payload)


def checks_json(report: ExperimentReport) -> str:
    checks = [
        {
            "name": c.name,
            "value": c.value,
            "tolerance": c.tolerance,
            "passed": c.passed,
            "detail": c.detail,
        }
        for c in report.all_checks
    ]
    return _json("checks", {"passed": all(c["passed"] for c in checks), "checks": checks})


def summary_json(report: ExperimentReport) -> str:
    analysis = report.analysis
    scale = analysis.scale
    spacings = []
    for entry in report.spacings:
        result = entry.result
        spacings.append(
            {
                "spacing": _spacing_label(result.spacing),
                "eta": entry.interaction.scales.eta,
                "shortest": entry.interaction.scales.shortest,
                "longest": entry.interaction.scales.longest,
                "size": entry.interaction.size,
                "largest_shift": float(np.max(np.abs(entry.interaction.eigenvalues))),
                "radius": result.radius,
                "winding": result.winding,
                "located": len(result.located),
                "count_ok": result.count_ok,
                "half_plane_ok": result.half_plane_ok,
            }
        )
    failed = sorted({c.name for c in report.all_checks if not c.passed})
    payload = {
        "lambda0": analysis.lambda0,
        "mhat": scale.mhat,
        "gamma": scale.gamma,
        "kappa": scale.kappa,
        "levels": scale.levels,
        "skipped_blocks": analysis.skipped,
        "essential_spectrum": [list(i) for i in analysis.spectrum.intervals],
        "positions": analysis.spectrum.reports,
        "spacings": spacings,
        "rate_fit": vars(report.rate) if report.rate is not None else None,
        "checks_passed": not failed,
        "failed_checks": failed,
    }
    return _json("summary", payload)


def plots_gp() -> str:
    return (
        f"# plots v{FORMAT_VERSION}: gnuplot -p plots.gp\n"
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set multiplot layout 1,2\n"
        "set title 'bands'\n"
        "set xlabel 'tau'\n"
        "set ylabel 'E'\n"
        "plot 'bands.csv' using 3:4 with dots notitle\n"
        "set title 'resonances'\n"
        "set xlabel 'Re lambda'\n"
        "set ylabel 'Im lambda'\n"
        "plot 'resonances.csv' using 3:4 with points pt 7 title 'located', \\\n"
        "     '' using 5:6 with points pt 6 title 'predicted'\n"
        "unset multiplot\n"
    )


# ============================================================================
# Writers
# ============================================================================


def write_checks(report: ExperimentReport, out: Path) -> list[Path]:
    path = out / "checks.json"
    write_atomic(path, checks_json(report))
    return [path]


def write_all(model: StripModel, report: ExperimentReport, out: Path) -> list[Path]:
    """Every artifact of a run; returns the paths written."""
    files = {
        "bands.csv": bands_csv(model),
        "exponents.csv": exponents_csv(report),
        "bound_states.json": bound_states_json(report),
        "interaction.json": interaction_json(report),
        "resonances.csv": resonances_csv(report),
        "resonances.json": resonances_json(report),
        "summary.json": summary_json(report),
        "checks.json": checks_json(report),
        "plots.gp": plots_gp(),
    }
    written = []
    for name, text in files.items():
        path = out / name
        write_atomic(path, text)
        written.append(path)
    logger.info(f"Wrote {len(written)} files to {out}")
    return written
