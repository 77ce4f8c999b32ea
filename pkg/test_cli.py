#!/usr/bin/env python3
"""
Command-line tests: subcommand registration, exit codes, spacing syntax and reproducible output.
"""

import json
import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root to path
sys.path.insert(0, str(Path(__file__).parent))

import src.main as cli  # noqa: E402
from src.artifacts import finite  # noqa: E402
from src.commands import registered_commands  # noqa: E402
from src.config import parse_spacings  # noqa: E402
from src.errors import ConfigError  # noqa: E402
from src.pipeline import dedupe_spacings  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def quiet_cli(monkeypatch):
    """Leave pytest's log handlers alone and ignore the developer's environment."""
    monkeypatch.setattr(cli, "configure_logging", lambda level, verbose=False: None)
    for name in ("LOG_LEVEL", "STRIP_RESONANCES_OUT", "STRIP_RESONANCES_JOBS"):
        monkeypatch.delenv(name, raising=False)


def _run(*argv: str) -> int:
    return cli.main(list(argv))


# ============================================================================
# Registration
# ============================================================================


def test_registered_commands():
    assert [c.name for c in registered_commands()] == ["bands", "check", "run", "sweep"]
    assert all(c.needs_config for c in registered_commands())


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])


def test_shared_options_reach_every_command():
    args = cli.build_parser().parse_args(["bands", "cfg.json", "--grid", "64", "-v"])
    assert args.command == "bands"
    assert args.config == "cfg.json"
    assert args.grid == 64
    assert args.verbose


# ============================================================================
# Spacing syntax
# ============================================================================


def test_parse_uniform_spacings():
    assert parse_spacings("2,2;4,4; 6,6") == [(2, 2), (4, 4), (6, 6)]


def test_parse_per_connector_spacings():
    assert parse_spacings("2,2/3,3;1,1") == [[(2, 2), (3, 3)], (1, 1)]


@pytest.mark.parametrize("text", ["2", "2,x", "1,2,3", ";", ""])
def test_bad_spacings(text):
    with pytest.raises(ConfigError):
        parse_spacings(text)


def test_duplicate_spacings_are_dropped(caplog):
    spacings = [((2, 2),), ((3, 3),), ((2, 2),)]
    with caplog.at_level(logging.WARNING, logger="src.pipeline"):
        assert dedupe_spacings(spacings) == [((2, 2),), ((3, 3),)]
    assert "Duplicate spacing" in caplog.text


# ============================================================================
# Exit codes and diagnostics
# ============================================================================


def test_malformed_config_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert _run("run", str(path), "--out", str(tmp_path / "out")) == 2
    assert capsys.readouterr().err.startswith("error=ConfigError exit=2 ")
    assert not (tmp_path / "out").exists()


def test_unknown_background_exits_2(tmp_path, capsys):
    data = json.loads((DATA / "double_well.json").read_text())
    data["blocks"][0]["right"] = "nowhere"
    path = tmp_path / "dangling.json"
    path.write_text(json.dumps(data))
    assert _run("run", str(path)) == 2
    assert "nowhere" in capsys.readouterr().err


def test_lambda0_in_a_band_exits_3(tmp_path, capsys):
    status = _run("run", str(DATA / "middle_band.json"), "--out", str(tmp_path))
    assert status == 3
    assert "error=Lambda0InMiddleEssentialSpectrum exit=3" in capsys.readouterr().err


def test_sweep_without_spacings_is_a_config_error(tmp_path):
    data = json.loads((DATA / "double_well.json").read_text())
    del data["sweep"]
    path = tmp_path / "single.json"
    path.write_text(json.dumps(data))
    assert _run("sweep", str(path), "--out", str(tmp_path / "out")) == 2


def test_diagnostic_line():
    error = ConfigError('bad "value"', source="a.json")
    assert error.diagnostic() == "error=ConfigError exit=2 source=a.json message=\"bad 'value'\""


def test_finite_makes_json_safe_values():
    value = {"a": np.float64(np.inf), "b": 1 + 2j, 3: [np.int64(4), np.bool_(True), (0.5,)]}
    assert finite(value) == {"a": None, "b": {"re": 1.0, "im": 2.0}, "3": [4, True, [0.5]]}


# ============================================================================
# Artifacts
# ============================================================================


def test_bands_command(tmp_path):
    config = str(DATA / "double_well.json")
    assert _run("bands", config, "--grid", "64", "--out", str(tmp_path)) == 0
    lines = (tmp_path / "bands.csv").read_text().splitlines()
    assert lines[0] == "# bands v1"
    assert len(lines) > 2


def test_check_command_passes(tmp_path):
    config = str(DATA / "double_well.json")
    assert _run("check", config, "--grid", "128", "--out", str(tmp_path)) == 0
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert checks["format"] == "checks v1"
    assert (tmp_path / "summary.json").exists()


def test_runs_are_reproducible(tmp_path):
    config = str(DATA / "double_well.json")
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        status = _run("run", config, "--grid", "128", "--spacings", "2,2", "--out", str(out))
        assert status == 0
        outputs.append(out)

    expected = {
        "bands.csv",
        "exponents.csv",
        "bound_states.json",
        "interaction.json",
        "resonances.csv",
        "resonances.json",
        "summary.json",
        "checks.json",
        "plots.gp",
    }
    assert {p.name for p in outputs[0].iterdir()} == expected
    for name in ("resonances.csv", "interaction.json", "bound_states.json"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
    rows = [
        line
        for line in (outputs[0] / "resonances.csv").read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert rows[0].startswith("spacing_min,spacing_max,re_lambda,im_lambda,predicted_re")
    assert len(rows) == 3
    _check_schemas(outputs[0])


def _check_schemas(out):
    bands = (out / "bands.csv").read_text().splitlines()
    assert bands[1] == "background_id,band,tau,energy"
    exponents = (out / "exponents.csv").read_text().splitlines()
    assert exponents[1].startswith("background_id,re_exponent,im_exponent,chain_length")

    states = json.loads((out / "bound_states.json").read_text())
    (record,) = [r for r in states["states"] if r["selected"]]
    assert record["block"] == "well"
    assert record["multiplicity"] == 1
    # Square well amplitude on both sides, one chain of length one
    for side in ("alpha_left", "alpha_right"):
        (row,) = record[side]
        assert len(row) == 1 and abs(complex(row[0]["re"], row[0]["im"])) > 0

    interaction = json.loads((out / "interaction.json").read_text())
    (entry,) = interaction["spacings"]
    assert entry["N"] == 2
    assert [(b["r"], b["k"]) for b in entry["blocks"]] == [(0, 1), (1, 0)]
    assert entry["blocks"][0]["entries"][0][0]["re"] > 0
    assert entry["mhat"] > 0 and entry["gamma"] > entry["mhat"]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
