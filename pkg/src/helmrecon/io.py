"""Input/output helpers for the helmrecon CLI."""
from __future__ import annotations

import csv
import hashlib
import importlib.util
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from collections.abc import Iterable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np

from .engine.models import (
    FORMAT_VERSION,
    FarFieldSlice,
    Grid2D,
    MeasurementCircle,
    MultiFreqDataset,
    NoiseSpec,
)
from .engine.sine_basis import INDEX_ORDER, SineCoeffs, mode_count

logger = logging.getLogger(__name__)

_DTYPES = {"real": "<f8", "complex": "<c16"}


def write_json(obj: Any, path: str | os.PathLike) -> None:
    """Write JSON with sorted keys; ``"-"`` writes to stdout."""
    data = obj.to_json() if hasattr(obj, "to_json") else obj
    if str(path) == "-":
        json.dump(data, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path: str | os.PathLike) -> Any:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_text(text: str, path: str | os.PathLike) -> None:
    if str(path) == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def write_csv(rows: Iterable[Sequence[Any]], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        csv.writer(handle).writerows(rows)


def sha256_file(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# --- binary header + payload files -------------------------------------------


def write_array(path: str | os.PathLike, header: Mapping[str, Any], values: np.ndarray) -> None:
    """One sorted-key JSON header line, then raw little-endian values in C order."""
    array = np.asarray(values)
    dtype = "complex" if np.iscomplexobj(array) else "real"
    head = {**header, "format_version": FORMAT_VERSION, "dtype": dtype}
    with open(path, "wb") as handle:
        handle.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        handle.write(np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes())


def read_array(path: str | os.PathLike, kind: str) -> tuple[dict[str, Any], np.ndarray]:
    """Header and flat values of a file written by :func:`write_array`."""
    with open(path, "rb") as handle:
        line = handle.readline()
        payload = handle.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"{path}: format version {header.get('format_version')} is not {FORMAT_VERSION}"
        )
    if header.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind} file, found {header.get('kind')!r}")
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise ValueError(f"{path}: unknown dtype {dtype!r}")
    itemsize = np.dtype(_DTYPES[dtype]).itemsize
    if len(payload) % itemsize:
        raise ValueError(f"{path}: payload of {len(payload)} bytes is truncated")
    return header, np.frombuffer(payload, dtype=_DTYPES[dtype]).copy()


def write_far_field(path: str | os.PathLike, slice_: FarFieldSlice, noise: NoiseSpec) -> None:
    angles = np.arctan2(slice_.directions[:, 1], slice_.directions[:, 0])
    header = {
        "kind": "farfield",
        "k": slice_.k,
        "M": slice_.n_directions,
        "P": slice_.n_receivers,
        "R": slice_.circle.radius,
        "delta": noise.delta,
        "seed": noise.seed,
        "directions": [float(a) for a in angles],
    }
    write_array(path, header, slice_.values)


def read_far_field(path: str | os.PathLike) -> tuple[FarFieldSlice, NoiseSpec]:
    header, values = read_array(path, "farfield")
    m, p = int(header["M"]), int(header["P"])
    if values.size != m * p or len(header["directions"]) != m:
        raise ValueError(f"{path}: header promises {m}x{p} values, found {values.size}")
    angles = np.asarray(header["directions"], dtype=float)
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    circle = MeasurementCircle(float(header["R"]), p)
    slice_ = FarFieldSlice(float(header["k"]), directions, circle, values.reshape(m, p))
    return slice_, NoiseSpec(float(header["delta"]), int(header["seed"]))


def write_grid(path: str | os.PathLike, grid: Grid2D, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"values of shape {values.shape} do not fit grid {grid.shape}")
    header = {"kind": "grid", "n_per_side": grid.n_per_side, "bounds": list(grid.domain.bounds)}
    write_array(path, header, values)


def read_grid(path: str | os.PathLike) -> tuple[Grid2D, np.ndarray]:
    header, values = read_array(path, "grid")
    grid = Grid2D(int(header["n_per_side"]))
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid, values.reshape(grid.shape)


def write_coeffs(path: str | os.PathLike, coeffs: SineCoeffs) -> None:
    header = {
        "kind": "coeffs",
        "s_max": coeffs.s_max,
        "index_order": INDEX_ORDER,
        "count": len(coeffs),
    }
    write_array(path, header, coeffs.values)


def read_coeffs(path: str | os.PathLike) -> SineCoeffs:
    header, values = read_array(path, "coeffs")
    if header.get("index_order") != INDEX_ORDER:
        raise ValueError(f"{path}: unsupported index order {header.get('index_order')!r}")
    s_max = int(header["s_max"])
    if values.size != mode_count(s_max):
        raise ValueError(f"{path}: {values.size} coefficients do not match s_max={s_max}")
    return SineCoeffs(s_max, values)


# --- directories ---------------------------------------------------------------


def prepare_output_dir(path: str | os.PathLike, force: bool = False) -> Path:
    """Create ``path``; an existing non-empty directory needs ``force``."""
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ValueError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ValueError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


@contextmanager
def staged_output(path: str | os.PathLike) -> Iterator[Path]:
    """Yield a sibling staging directory whose files replace the contents of ``path`` on success.

    On error the staging directory is removed and ``path`` is left as it was.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    for entry in out.iterdir():
        if entry.is_dir() and not entry.is_symlink():
            shutil.rmtree(entry)
        else:
            entry.unlink()
    for entry in stage.iterdir():
        os.replace(entry, out / entry.name)
    stage.rmdir()
    logger.debug("moved staged output into %s", out)


def slice_name(index: int) -> str:
    return f"slice_{index:03d}.ff"


def snapshot_stem(k: float) -> str:
    return f"q_k{k:07.3f}"


def write_dataset(
    out: Path,
    dataset: MultiFreqDataset,
    noises: Sequence[NoiseSpec],
    config_json: Mapping[str, Any],
    truth: tuple[Grid2D, np.ndarray],
) -> dict[str, Any]:
    """Slices, truth and config plus a manifest with a checksum per slice."""
    files: list[dict[str, Any]] = []
    for j, (slice_, noise) in enumerate(zip(dataset.slices, noises)):
        name = slice_name(j)
        write_far_field(out / name, slice_, noise)
        files.append(
            {
                "file": name,
                "k": slice_.k,
                "M": slice_.n_directions,
                "P": slice_.n_receivers,
                "seed": noise.seed,
                "sha256": sha256_file(out / name),
            }
        )
    write_grid(out / "truth.grid", *truth)
    write_json(dict(config_json), out / "config.json")
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "phantom": config_json.get("phantom"),
        "noise": {"delta": dataset.noise_level, "seed": dataset.rng_seed},
        "slices": files,
        "truth": {"file": "truth.grid", "sha256": sha256_file(out / "truth.grid")},
    }
    write_json(manifest, out / "manifest.json")
    logger.info("wrote %d far-field slices to %s", len(files), out)
    return manifest


def read_dataset(path: str | os.PathLike) -> tuple[MultiFreqDataset, dict[str, Any]]:
    """Load a dataset directory, verifying the checksum of every slice."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ValueError(f"{root} has no manifest.json")
    manifest = read_json(manifest_path)
    if manifest.get("format_version") != FORMAT_VERSION or manifest.get("kind") != "dataset":
        raise ValueError(f"{manifest_path} is not a version {FORMAT_VERSION} dataset manifest")
    slices = []
    for entry in manifest["slices"]:
        file = root / entry["file"]
        if sha256_file(file) != entry["sha256"]:
            raise ValueError(f"checksum mismatch for {file}")
        slices.append(read_far_field(file)[0])
    noise = manifest.get("noise", {})
    dataset = MultiFreqDataset(tuple(slices), float(noise.get("delta", 0.0)),
                               int(noise.get("seed", 0)))
    return dataset, manifest


# --- images and profiles ---------------------------------------------------------


def write_pgm(path: str | os.PathLike, values: np.ndarray) -> None:
    """8-bit binary PGM, min to black and max to white, ``x2`` increasing upward."""
    image = np.asarray(values, dtype=float).T[::-1]
    lo, hi = float(image.min()), float(image.max())
    span = hi - lo if hi > lo else 1.0
    pixels = np.round(255 * (image - lo) / span).astype(np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())


def png_available() -> bool:
    return importlib.util.find_spec("matplotlib") is not None


def write_png(path: str | os.PathLike, values: np.ndarray) -> bool:
    """Colour image via matplotlib when installed; returns whether it was written."""
    if not png_available():
        return False
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, np.asarray(values, dtype=float).T[::-1], cmap="viridis")
    return True


def write_profile(path: str | os.PathLike, grid: Grid2D, values: np.ndarray) -> None:
    """Cross-section ``q(x1, 0)``; ``x2 = 0`` is a node when ``n`` is odd."""
    values = np.asarray(values)
    mid = (grid.n_per_side - 1) / 2
    lo, hi = math.floor(mid), math.ceil(mid)
    row = 0.5 * (values[:, lo] + values[:, hi])
    rows = [("x1", "q")] + [(float(x), float(v)) for x, v in zip(grid.axis, row)]
    write_csv(rows, path)


def write_snapshot(
    out: Path, k: float, grid: Grid2D, coeffs: SineCoeffs, values: np.ndarray, images: bool
) -> list[str]:
    """All per-frequency files of a run; returns the names written."""
    stem = snapshot_stem(k)
    write_grid(out / f"{stem}.grid", grid, values)
    write_coeffs(out / f"{stem}.coeffs", coeffs)
    write_profile(out / f"{stem}.profile.csv", grid, values)
    names = [f"{stem}.grid", f"{stem}.coeffs", f"{stem}.profile.csv"]
    if images:
        write_pgm(out / f"{stem}.pgm", values)
        names.append(f"{stem}.pgm")
        if write_png(out / f"{stem}.png", values):
            names.append(f"{stem}.png")
    return names
