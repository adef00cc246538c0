"""helmrecon: multi-frequency inverse scattering by recursive linearization."""
from __future__ import annotations

from collections.abc import Sequence

from .engine.dtn import build_dtn, solve_with_source
from .engine.lippmann_schwinger import build_ls, far_field_data
from .engine.newton import NewtonConfig, newton_single_frequency, recursive_linearization
from .engine.phantoms import PhantomSpec, sample_phantom

__version__ = "0.1.0"


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point mirroring :func:`helmrecon.cli.main`."""

    from .cli import main as cli_main

    return cli_main(argv)


__all__ = [
    "NewtonConfig",
    "PhantomSpec",
    "__version__",
    "build_dtn",
    "build_ls",
    "far_field_data",
    "main",
    "newton_single_frequency",
    "recursive_linearization",
    "sample_phantom",
    "solve_with_source",
]
