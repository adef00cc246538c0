"""Panel discretization of ∂Ω and Nyström matrices of the Helmholtz layer potentials."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse
import scipy.special

from .models import HALF_WIDTH, Grid2D

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
PRODUCT_RULE_REACH = 1.2
INTERP_POINTS = 6

# side s runs counterclockwise from SIDE_STARTS[s] along SIDE_TANGENTS[s]
SIDE_STARTS = np.array(
    [[-HALF_WIDTH, -HALF_WIDTH], [HALF_WIDTH, -HALF_WIDTH], [HALF_WIDTH, HALF_WIDTH],
     [-HALF_WIDTH, HALF_WIDTH]]
)
SIDE_TANGENTS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
SIDE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
SIDE_LENGTH = 2 * HALF_WIDTH


@lru_cache(maxsize=8)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def greens(k: float, r: np.ndarray) -> np.ndarray:
    """Outgoing fundamental solution ``(i/4) H0(kr)``."""
    return 0.25j * scipy.special.hankel1(0, k * r)


def greens_dn(k: float, diff: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """``∂G/∂n_y`` for ``diff = x - y``, shape ``(..., 2)``."""
    r = np.hypot(diff[..., 0], diff[..., 1])
    proj = diff[..., 0] * normal[..., 0] + diff[..., 1] * normal[..., 1]
    return 0.25j * k * scipy.special.hankel1(1, k * r) * proj / r


def _greens_regular(k: float, r: np.ndarray) -> np.ndarray:
    """``G + J0(kr) log(r) / 2π``, the smooth remainder of the kernel."""
    r = np.asarray(r, dtype=float)
    out = np.full(r.shape, 0.25j - (math.log(k / 2) + EULER_GAMMA) / (2 * math.pi), dtype=complex)
    away = r > 1e-12
    ra = r[away]
    out[away] = greens(k, ra) + scipy.special.j0(k * ra) * np.log(ra) / (2 * math.pi)
    return out


def log_moments(tau: float, count: int) -> np.ndarray:
    """``∫_{-1}^{1} log|τ - σ| P_j(σ) dσ`` for ``j < count``.

    Built from the Cauchy moments ``∫ P_j(σ)/(τ - σ) dσ`` by their three-term
    recurrence; endpoints ``τ = ±1`` use the closed form.
    """
    out = np.empty(count)
    if abs(abs(tau) - 1.0) < 1e-13:
        sign = 1.0 if tau > 0 else -1.0
        out[0] = 2 * math.log(2.0) - 2.0
        for j in range(1, count):
            out[j] = sign**j * (-2.0 / (j * (j + 1)))
        return out
    cauchy = np.empty(count + 1)
    cauchy[0] = math.log(abs(tau + 1)) - math.log(abs(tau - 1))
    prev = 0.0
    for j in range(count):
        nxt = ((2 * j + 1) * (tau * cauchy[j] - (2.0 if j == 0 else 0.0)) - j * prev) / (j + 1)
        prev = cauchy[j]
        cauchy[j + 1] = nxt
    out[0] = (1 + tau) * _xlog(1 + tau) + (1 - tau) * _xlog(1 - tau) - 2.0
    for j in range(1, count):
        out[j] = (cauchy[j + 1] - cauchy[j - 1]) / (2 * j + 1)
    return out


def _xlog(x: float) -> float:
    return 0.0 if x == 0 else math.log(abs(x))


def log_weights(tau: float, order: int) -> np.ndarray:
    """Weights ``ω`` with ``Σ ω_j f(σ_j) ≈ ∫ log|τ - σ| f(σ) dσ`` at the Gauss nodes."""
    nodes, _ = gauss_rule(order)
    vander = np.polynomial.legendre.legvander(nodes, order - 1)
    return np.linalg.solve(vander.T, log_moments(tau, order))


def lagrange_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Interpolation matrix from values at ``nodes`` to ``targets`` (barycentric form)."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    dist = targets[:, None] - nodes[None, :]
    exact = dist == 0
    dist[exact] = 1.0
    kernel = bary[None, :] / dist
    out = kernel / kernel.sum(axis=1, keepdims=True)
    rows = np.nonzero(exact.any(axis=1))[0]
    out[rows] = exact[rows].astype(float)
    return out


@dataclass(frozen=True)
class Panel:
    side: int
    s0: float
    s1: float

    @property
    def length(self) -> float:
        return self.s1 - self.s0

    @property
    def start(self) -> np.ndarray:
        return SIDE_STARTS[self.side] + self.s0 * SIDE_TANGENTS[self.side]

    @property
    def end(self) -> np.ndarray:
        return SIDE_STARTS[self.side] + self.s1 * SIDE_TANGENTS[self.side]

    @property
    def normal(self) -> np.ndarray:
        return SIDE_NORMALS[self.side]

    def point(self, sigma: np.ndarray) -> np.ndarray:
        s = 0.5 * (self.s0 + self.s1) + 0.5 * self.length * np.asarray(sigma)
        return SIDE_STARTS[self.side] + s[..., None] * SIDE_TANGENTS[self.side]

    def reference(self, points: np.ndarray) -> np.ndarray:
        """Reference coordinate of the projection of ``points`` on the panel line."""
        along = (points - SIDE_STARTS[self.side]) @ SIDE_TANGENTS[self.side]
        return (along - 0.5 * (self.s0 + self.s1)) / (0.5 * self.length)

    def offset(self, points: np.ndarray) -> np.ndarray:
        return (points - SIDE_STARTS[self.side]) @ SIDE_NORMALS[self.side]

    def distance(self, points: np.ndarray) -> np.ndarray:
        sigma = np.clip(self.reference(points), -1.0, 1.0)
        gap = (np.abs(self.reference(points)) - np.abs(sigma)) * 0.5 * self.length
        return np.hypot(gap, self.offset(points))


def side_breakpoints(base: float, finest: float) -> np.ndarray:
    """Panel ends along one side: uniform panels of length ``<= base``, split
    dyadically toward both corners until the end panels are ``<= finest``."""
    count = max(1, math.ceil(SIDE_LENGTH / base - 1e-12))
    uniform = np.linspace(0.0, SIDE_LENGTH, count + 1)
    first = uniform[1]
    levels = max(0, math.ceil(math.log2(first / finest))) if first > finest else 0
    head = [first / 2**j for j in range(levels, 0, -1)]
    if count == 1:
        inner = np.array(head + [SIDE_LENGTH / 2] + [SIDE_LENGTH - t for t in reversed(head)])
        return np.unique(np.concatenate([[0.0], inner, [SIDE_LENGTH]]))
    tail = [SIDE_LENGTH - t for t in reversed(head)]
    return np.unique(np.concatenate([[0.0], head, uniform[1:-1], tail, [SIDE_LENGTH]]))


@dataclass(frozen=True, eq=False)
class BoundaryDiscretization:
    """Gauss-Legendre panels on the four sides of ∂Ω."""

    panels: tuple[Panel, ...]
    order: int

    @cached_property
    def nodes(self) -> np.ndarray:
        sigma, _ = gauss_rule(self.order)
        return np.concatenate([p.point(sigma) for p in self.panels])

    @cached_property
    def weights(self) -> np.ndarray:
        _, w = gauss_rule(self.order)
        return np.concatenate([0.5 * p.length * w for p in self.panels])

    @cached_property
    def normals(self) -> np.ndarray:
        return np.concatenate([np.tile(p.normal, (self.order, 1)) for p in self.panels])

    @cached_property
    def sides(self) -> np.ndarray:
        return np.repeat([p.side for p in self.panels], self.order)

    @cached_property
    def arclength(self) -> np.ndarray:
        """Position of each node along its own side, in ``[0, π]``."""
        sigma, _ = gauss_rule(self.order)
        return np.concatenate([0.5 * (p.s0 + p.s1) + 0.5 * p.length * sigma for p in self.panels])

    @property
    def n_bdry(self) -> int:
        return len(self.panels) * self.order


def build_boundary(k: float, grid: Grid2D, order: int = 16) -> BoundaryDiscretization:
    """Panels no longer than a wavelength, refined toward corners down to ``h/4``."""
    if order < 2:
        raise ValueError(f"panel order must be at least 2, got {order}")
    breaks = side_breakpoints(2 * math.pi / k, grid.spacing / 4)
    panels = tuple(
        Panel(side, float(a), float(b)) for side in range(4) for a, b in zip(breaks, breaks[1:])
    )
    bd = BoundaryDiscretization(panels, order)
    logger.debug("boundary has %d panels and %d nodes", len(panels), bd.n_bdry)
    return bd


def _near_weights(
    k: float, target: np.ndarray, panel: Panel, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Single- and double-layer weights of a panel seen from a nearby target.

    The panel is bisected toward the target until every piece is shorter
    than its distance to the target; densities are interpolated from the
    panel's Gauss nodes onto each piece.
    """
    sigma, w = gauss_rule(order)
    pieces = [(-1.0, 1.0)]
    accepted: list[tuple[float, float]] = []
    while pieces:
        a, b = pieces.pop()
        sub = Panel(panel.side, *_physical(panel, a, b))
        if sub.distance(target[None, :])[0] >= sub.length or sub.length < 1e-14:
            accepted.append((a, b))
        else:
            mid = 0.5 * (a + b)
            pieces.extend([(a, mid), (mid, b)])
    s_weights = np.zeros(order, dtype=complex)
    d_weights = np.zeros(order, dtype=complex)
    for a, b in accepted:
        local = 0.5 * (a + b) + 0.5 * (b - a) * sigma
        interp = lagrange_matrix(sigma, local)
        pts = panel.point(local)
        diff = target[None, :] - pts
        r = np.hypot(diff[:, 0], diff[:, 1])
        scale = 0.5 * panel.length * 0.5 * (b - a) * w
        s_weights += (scale * greens(k, r)) @ interp
        d_weights += (scale * greens_dn(k, diff, np.tile(panel.normal, (order, 1)))) @ interp
    return s_weights, d_weights


def _physical(panel: Panel, a: float, b: float) -> tuple[float, float]:
    mid = 0.5 * (panel.s0 + panel.s1)
    half = 0.5 * panel.length
    return mid + half * a, mid + half * b


def layer_matrices(
    bd: BoundaryDiscretization, targets: np.ndarray, k: float
) -> tuple[np.ndarray, np.ndarray]:
    """Nyström matrices ``S`` and ``D`` from boundary nodes to ``targets``.

    ``D`` uses the direct value of the double layer: sources on the line
    through a target contribute nothing. Targets on a panel's own line use
    product integration of the logarithmic part of ``G``; other nearby
    targets use adaptive panel subdivision.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    order = bd.order
    sigma, w = gauss_rule(order)
    n_t = targets.shape[0]
    single = np.empty((n_t, bd.n_bdry), dtype=complex)
    double = np.empty((n_t, bd.n_bdry), dtype=complex)
    for p_idx, panel in enumerate(bd.panels):
        cols = slice(p_idx * order, (p_idx + 1) * order)
        pts = panel.point(sigma)
        half = 0.5 * panel.length
        weights = half * w
        diff = targets[:, None, :] - pts[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        offset = panel.offset(targets)
        tau = panel.reference(targets)
        dist = panel.distance(targets)
        on_line = np.abs(offset) < 1e-12
        near = (dist < panel.length) & ~on_line
        far = ~(on_line | near)

        block_s = np.zeros((n_t, order), dtype=complex)
        block_d = np.zeros((n_t, order), dtype=complex)
        if far.any():
            block_s[far] = greens(k, r[far]) * weights
            normal = np.broadcast_to(panel.normal, diff[far].shape)
            block_d[far] = greens_dn(k, diff[far], normal) * weights

        for t in np.nonzero(on_line)[0]:
            if abs(tau[t]) <= PRODUCT_RULE_REACH:
                rt = r[t]
                lam = half * (w * math.log(half) + log_weights(float(tau[t]), order))
                block_s[t] = (
                    -scipy.special.j0(k * rt) * lam / (2 * math.pi)
                    + weights * _greens_regular(k, rt)
                )
            elif dist[t] < panel.length:
                block_s[t], _ = _near_weights(k, targets[t], panel, order)
            else:
                block_s[t] = greens(k, r[t]) * weights
        for t in np.nonzero(near)[0]:
            block_s[t], block_d[t] = _near_weights(k, targets[t], panel, order)

        single[:, cols] = block_s
        double[:, cols] = block_d
    return single, double


def side_interpolation(bd: BoundaryDiscretization, n_per_side: int) -> scipy.sparse.csr_matrix:
    """Local degree-5 Lagrange interpolation from side samples to panel nodes.

    Column ``s * n + j`` is sample ``j`` of side ``s`` (spacing ``π/(n-1)``
    from the side's start corner).
    """
    if n_per_side < INTERP_POINTS:
        raise ValueError(f"side interpolation needs {INTERP_POINTS} samples, got {n_per_side}")
    h = SIDE_LENGTH / (n_per_side - 1)
    pos = bd.arclength / h
    start = np.clip(np.floor(pos).astype(int) - INTERP_POINTS // 2 + 1, 0,
                    n_per_side - INTERP_POINTS)
    stencil = start[:, None] + np.arange(INTERP_POINTS)[None, :]
    local = stencil - pos[:, None]
    coeff = np.ones_like(local)
    for j in range(INTERP_POINTS):
        for m in range(INTERP_POINTS):
            if m != j:
                coeff[:, j] *= (0 - local[:, m]) / (local[:, j] - local[:, m])
    rows = np.repeat(np.arange(bd.n_bdry), INTERP_POINTS)
    cols = (bd.sides[:, None] * n_per_side + stencil).ravel()
    return scipy.sparse.csr_matrix(
        (coeff.ravel(), (rows, cols)), shape=(bd.n_bdry, 4 * n_per_side)
    )
