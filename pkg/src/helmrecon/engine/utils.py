"""Small helpers shared by the forward solvers and the inversion driver."""
from __future__ import annotations

import time
from collections.abc import Iterator
from contextlib import contextmanager

import numpy as np


def stack_complex(values: np.ndarray) -> np.ndarray:
    """Real vector ``[Re; Im]`` of a complex array, flattened in C order.

    Args:
        values: Complex array of any shape.

    Returns:
        Real vector of twice the size.

    Examples:
        >>> stack_complex(np.array([1 + 2j, 3 - 1j])).tolist()
        [1.0, 3.0, 2.0, -1.0]
    """
    flat = np.asarray(values, dtype=complex).ravel()
    return np.concatenate([flat.real, flat.imag])


def unstack_complex(stacked: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`stack_complex`.

    Examples:
        >>> unstack_complex(np.array([1.0, 3.0, 2.0, -1.0]), (2,)).tolist()
        [(1+2j), (3-1j)]
    """
    x = np.asarray(stacked, dtype=float)
    half = x.shape[0] // 2
    if x.shape != (2 * half,) or half != int(np.prod(shape)):
        raise ValueError(f"cannot unstack {x.shape} into complex shape {shape}")
    return (x[:half] + 1j * x[half:]).reshape(shape)


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """``|approx - exact| / |exact|`` in the Frobenius norm; absolute when exact is zero.

    Examples:
        >>> relative_error(np.array([1.0, 1.0]), np.array([1.0, 2.0]))
        0.4472135954999579
        >>> relative_error(np.zeros(3), np.zeros(3))
        0.0
    """
    diff = float(np.linalg.norm(np.asarray(approx) - np.asarray(exact)))
    scale = float(np.linalg.norm(exact))
    return diff / scale if scale > 0 else diff


@contextmanager
def stopwatch() -> Iterator[list[float]]:
    """Wall-clock timer; the yielded list holds the elapsed seconds on exit."""
    box = [0.0]
    start = time.perf_counter()
    try:
        yield box
    finally:
        box[0] = time.perf_counter() - start
