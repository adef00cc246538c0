"""Command line interface for helmrecon experiments."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__, io
from .config import PRESETS, ExperimentConfig, load_config, preset
from .engine.dtn import FieldSource, build_dtn, solve_with_source
from .engine.lippmann_schwinger import build_ls, far_field_data
from .engine.measurement import apply_noise, incidence_directions, noise_seeds
from .engine.models import (
    FORMAT_VERSION,
    FarFieldSlice,
    Grid2D,
    MeasurementCircle,
    MultiFreqDataset,
    NoiseSpec,
    NumericalError,
    PhantomKind,
)
from .engine.newton import FrequencyRecord, ReconstructionState, RunReport, recursive_linearization
from .engine.phantoms import PhantomSpec, sample_phantom
from .engine.report import benchmark_text, checks_text, report_dict, report_rows, report_text
from .engine.utils import stopwatch
from .engine.validation import run_checks

logger = logging.getLogger(__name__)

TRUTH_GRID = 129
ADJOINT_FAULT = 1e-3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helmrecon",
        description="""Inverse acoustic scattering by recursive linearization.

Reconstructs a compactly supported contrast q on [-pi/2, pi/2]^2 from
multi-frequency far-field data, sweeping the frequency upward and solving
one band-limited Newton problem per frequency.

Examples:
  # Synthetic data for the Gaussian phantom
  helmrecon generate --preset gaussian1 --out data/

  # Reconstruct from it
  helmrecon invert --preset gaussian1 --dataset data/ --out run/

  # Print the per-frequency table of a finished run
  helmrecon report --run run/

  # Discretization self-checks
  helmrecon validate""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-V", "--version", action="version", version=f"helmrecon {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="INFO logging with -v, DEBUG with -vv")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_options(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--config", help="Experiment configuration (JSON)")
        cmd.add_argument("--preset", choices=sorted(PRESETS),
                         help="Preset configuration when --config is not given")
        cmd.add_argument("--out", help="Output directory (default: output_dir of the config)")
        cmd.add_argument("--force", action="store_true",
                         help="Write into a non-empty output directory")

    generate = sub.add_parser("generate", help="Synthesize a multi-frequency far-field dataset")
    add_config_options(generate)

    invert = sub.add_parser("invert", help="Reconstruct the contrast from a dataset")
    add_config_options(invert)
    invert.add_argument("--dataset", required=True, help="Dataset directory from 'generate'")

    validate = sub.add_parser("validate", help="Run the discretization self-checks")
    validate.add_argument("--out", default=None, help="Also write the results as JSON")
    validate.add_argument("--inject-adjoint-fault", action="store_true", help=argparse.SUPPRESS)

    report = sub.add_parser("report", help="Render the report of a finished run")
    report.add_argument("--run", required=True, help="Run directory from 'invert'")
    report.add_argument("--format", choices=["text", "json"], default="text")
    report.add_argument("--images", action="store_true",
                        help="Re-render the snapshot images from the stored grids")

    bench = sub.add_parser("benchmark", help="Time the forward solver over several k")
    bench.add_argument("--k", default="4,8,16", help="Comma separated wavenumbers")
    bench.add_argument("--ppw", type=float, default=10.0, help="Points per wavelength")
    bench.add_argument("--phantom", choices=[p.value for p in PhantomKind], default="gaussian1")
    bench.add_argument("--format", choices=["text", "json"], default="text")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    if args.preset:
        return preset(args.preset)
    return ExperimentConfig()


def _output_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[Path, bool]:
    out = Path(args.out or cfg.output_dir)
    created = not out.exists()
    return io.prepare_output_dir(out, args.force), created


def synthesize_dataset(cfg: ExperimentConfig) -> tuple[MultiFreqDataset, list[NoiseSpec]]:
    steps = cfg.schedule()
    seeds = noise_seeds(cfg.noise.seed, len(steps))
    slices, noises = [], []
    for step, seed in zip(steps, seeds):
        grid = Grid2D.for_wavenumber(step.k, cfg.ppw_data, refinement=cfg.grid_refinement)
        q = sample_phantom(cfg.phantom, grid)
        f = build_ls(step.k, grid, q, order=cfg.ls_order, dense_limit=cfg.ls_dense_limit,
                     ppw=cfg.ppw_data, workers=cfg.workers)
        circle = MeasurementCircle(cfg.radius, step.n_receivers)
        directions = incidence_directions(step.n_directions)
        clean = FarFieldSlice(step.k, directions, circle, far_field_data(f, directions, circle))
        noise = NoiseSpec(cfg.noise.delta, seed)
        slices.append(apply_noise(clean, noise))
        noises.append(noise)
        logger.info("k=%g: %dx%d far field on a %d^2 grid", step.k, step.n_directions,
                    step.n_receivers, grid.n_per_side)
    return MultiFreqDataset.from_slices(slices, cfg.noise), noises


def _command_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out, created = _output_dir(args, cfg)
    try:
        dataset, noises = synthesize_dataset(cfg)
        truth_grid = Grid2D(TRUTH_GRID)
        truth = sample_phantom(cfg.phantom, truth_grid)
        with io.staged_output(out) as stage:
            io.write_dataset(stage, dataset, noises, cfg.to_json(), (truth_grid, truth.values))
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    io.write_text(f"wrote {len(dataset.slices)} slices to {out}\n", "-")
    return 0


def _check_schedule(cfg: ExperimentConfig, dataset: MultiFreqDataset) -> None:
    expected = [(s.k, s.n_directions, s.n_receivers) for s in cfg.schedule()]
    found = [(s.k, s.n_directions, s.n_receivers) for s in dataset.steps()]
    if expected != found:
        raise ValueError(
            f"dataset schedule {found[:3]}... does not match the configuration {expected[:3]}..."
        )
    radii = {s.circle.radius for s in dataset.slices}
    if radii != {cfg.radius}:
        raise ValueError(f"dataset receiver radius {sorted(radii)} differs from {cfg.radius}")


def _command_invert(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    dataset, manifest = io.read_dataset(args.dataset)
    _check_schedule(cfg, dataset)
    out, _ = _output_dir(args, cfg)
    io.write_json(cfg.to_json(), out / "config.json")
    files: list[str] = []
    report = RunReport()

    def on_frequency(state: ReconstructionState, record: FrequencyRecord) -> None:
        nonlocal report
        report = report.append(record)
        files.extend(io.write_snapshot(
            out, record.k, state.grid, state.coeffs, state.contrast.values, cfg.images
        ))
        io.write_csv(report_rows(report), out / "report.csv")

    _, report_final = recursive_linearization(
        dataset, cfg.newton_config, cfg.init_mode, truth=cfg.phantom, callback=on_frequency
    )
    io.write_csv(report_rows(report_final), out / "report.csv")
    io.write_json(report_dict(report_final), out / "report.json")
    io.write_json(
        {
            "format_version": FORMAT_VERSION,
            "kind": "run",
            "dataset": str(Path(args.dataset).resolve()),
            "dataset_slices": [s["sha256"] for s in manifest["slices"]],
            "snapshots": files,
        },
        out / "manifest.json",
    )
    io.write_text(report_text(report_final) + "\n", "-")
    return 0


def _command_validate(args: argparse.Namespace) -> int:
    fault = ADJOINT_FAULT if args.inject_adjoint_fault else 0.0
    results = run_checks(adjoint_fault=fault)
    io.write_text(checks_text(results) + "\n", "-")
    if args.out:
        io.write_json([dataclasses.asdict(r) for r in results], args.out)
    return 0 if all(r.passed for r in results) else 1


def _command_report(args: argparse.Namespace) -> int:
    run = Path(args.run)
    if not (run / "report.json").is_file():
        raise ValueError(f"{run} has no report.json")
    report = RunReport.from_json(io.read_json(run / "report.json"))
    io.write_csv(report_rows(report), run / "report.csv")
    if args.images:
        for path in sorted(run.glob("q_k*.grid")):
            _, values = io.read_grid(path)
            io.write_pgm(path.with_suffix(".pgm"), values)
            io.write_png(path.with_suffix(".png"), values)
    if args.format == "json":
        io.write_json(report_dict(report), "-")
    else:
        io.write_text(report_text(report) + "\n", "-")
    return 0


def _parse_wavenumbers(text: str) -> list[float]:
    try:
        ks = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"invalid wavenumber list {text!r}") from exc
    if not ks or any(k <= 0 for k in ks):
        raise ValueError(f"wavenumbers must be positive, got {text!r}")
    return ks


def _command_benchmark(args: argparse.Namespace) -> int:
    spec = PhantomSpec(PhantomKind(args.phantom))
    rows = []
    for k in _parse_wavenumbers(args.k):
        grid = Grid2D.for_wavenumber(k, args.ppw)
        f = build_dtn(k, grid, sample_phantom(spec, grid), ppw=args.ppw)
        with stopwatch() as elapsed:
            solve_with_source(f, FieldSource.plane_wave((1.0, 0.0)))
        stats = f.stats
        rows.append({
            "k": k,
            "N": stats.n_unknowns,
            "N_bdry": stats.n_bdry,
            "T_interior": stats.t_interior,
            "T_bdry": stats.t_bdry,
            "T_solve": elapsed[0],
        })
    if args.format == "json":
        io.write_json(rows, "-")
    else:
        io.write_text(benchmark_text(rows) + "\n", "-")
    return 0


_COMMANDS = {
    "generate": _command_generate,
    "invert": _command_invert,
    "validate": _command_validate,
    "report": _command_report,
    "benchmark": _command_benchmark,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"helmrecon: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"helmrecon: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
