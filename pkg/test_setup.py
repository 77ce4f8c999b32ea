#!/usr/bin/env python3
"""Quick script to verify the installation without running an experiment."""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


def check_imports() -> bool:
    """Check that the numerical stack and every subpackage import."""
    print("Testing imports...")

    try:
        import numpy  # noqa: F401
        import scipy.linalg  # noqa: F401
        import sympy  # noqa: F401

        print("✅ numpy, scipy and sympy imported")
    except ImportError as e:
        print(f"❌ Numerical stack import failed: {e}")
        return False

    try:
        from src.geometry import build_assembly  # noqa: F401
        from src.resonance import locate_resonances  # noqa: F401
        from src.spectral import floquet_exponents  # noqa: F401

        print("✅ Geometry, spectral and resonance packages imported")
    except ImportError as e:
        print(f"❌ Package import failed: {e}")
        return False

    try:
        from src.main import build_parser

        build_parser()
        print("✅ Command-line parser builds")
    except Exception as e:
        print(f"❌ Command-line parser failed: {e}")
        return False

    return True


def check_data_files() -> bool:
    """Check that the bundled experiment configs load and build a model."""
    print("\nTesting data files...")

    from src.config import load_config
    from src.pipeline import build_model

    for path in sorted(DATA.glob("*.json")):
        try:
            config = load_config(path)
            model = build_model(config)
            counts = f"{len(model.blocks)} blocks, {len(model.backgrounds)} backgrounds"
            print(f"✅ {path.name}: {counts}")
        except Exception as e:
            print(f"❌ Failed to load {path.name}: {e}")
            return False

    return True


def check_free_strip() -> bool:
    """Check one closed form: the free strip decays like exp(-0.5 |x|) at energy 0.75."""
    print("\nTesting the free strip...")

    from src.geometry import ExpressionPotential, galerkin_project
    from src.models import CrossSection, PeriodicBackground
    from src.spectral import floquet_exponents

    try:
        section = CrossSection(width=3.141592653589793, modes=1)
        background = PeriodicBackground(
            id="flat",
            period=1.0,
            potential=galerkin_project(ExpressionPotential("0"), section),
            modes=1,
            n_grid=64,
        )
        rates = sorted(abs(e.exponent.imag) for e in floquet_exponents(background, 0.75))
        print(f"✅ Decay rates: {rates}")
        if abs(rates[0] - 0.5) > 1e-9:
            print(f"❌ Expected 0.5, got {rates[0]}")
            return False
    except Exception as e:
        print(f"❌ Free strip check failed: {e}")
        return False

    return True


def test_imports():
    assert check_imports()


def test_data_files():
    assert check_data_files()


def test_free_strip():
    assert check_free_strip()


def main():
    """Run all checks."""
    print("=" * 50)
    print("Strip Resonances - Setup Test")
    print("=" * 50)

    all_passed = True

    all_passed &= check_imports()
    all_passed &= check_data_files()
    all_passed &= check_free_strip()

    print("\n" + "=" * 50)
    if all_passed:
        print("✅ All checks passed! Ready to run.")
        print("\nTo run the double-well example:")
        print("  python -m src.main run data/double_well.json --out results")
    else:
        print("❌ Some checks failed. Please fix the issues above.")
        sys.exit(1)
    print("=" * 50)


if __name__ == "__main__":
    main()
