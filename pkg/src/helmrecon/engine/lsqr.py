"""Matrix-free LSQR and condition-number estimation."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

ADJOINT_TOLERANCE = 1e-10
ASSEMBLY_LIMIT = 4096

# istop codes of the Paige-Saunders recurrence
_REASONS = {
    0: "zero_rhs",
    1: "compatible",
    2: "least_squares",
    3: "condition_limit",
    4: "compatible_machine_precision",
    5: "least_squares_machine_precision",
    6: "condition_machine_precision",
    7: "max_iter",
}


@dataclass(frozen=True)
class LinearOp:
    """A real linear map given by its action and the action of its adjoint."""

    shape: tuple[int, int]
    apply: Callable[[np.ndarray], np.ndarray]
    apply_adjoint: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> LinearOp:
        a = np.asarray(matrix)
        return cls(a.shape, lambda x: a @ x, lambda y: a.conj().T @ y)

    def check_adjoint(self, n_trials: int = 3, seed: int = 0) -> float:
        """Largest relative defect of ``<Ax, y> = <x, A*y>`` over random vector pairs."""
        rng = np.random.default_rng(seed)
        rows, cols = self.shape
        worst = 0.0
        for _ in range(n_trials):
            x = rng.standard_normal(cols)
            y = rng.standard_normal(rows)
            ax = self.apply(x)
            lhs = np.vdot(ax, y)
            rhs = np.vdot(x, self.apply_adjoint(y))
            scale = np.linalg.norm(ax) * np.linalg.norm(y)
            if scale > 0:
                worst = max(worst, abs(lhs - rhs) / scale)
        return worst

    def assemble(self) -> np.ndarray:
        """Dense matrix, one column per application."""
        rows, cols = self.shape
        out = np.empty((rows, cols))
        unit = np.zeros(cols)
        for j in range(cols):
            unit[j] = 1.0
            out[:, j] = self.apply(unit)
            unit[j] = 0.0
        return out


@dataclass(frozen=True)
class LsqrResult:
    solution: np.ndarray
    n_iter: int
    residual_norm: float
    relative_residual: float
    reason: str
    flagged: bool
    n_products: int
    residual_history: list[float] = field(default_factory=list)


def lsqr(
    op: LinearOp,
    rhs: np.ndarray,
    tol: float = 1e-3,
    max_iter: int | None = None,
    *,
    conlim: float = 1e8,
    check_adjoint: bool = False,
) -> LsqrResult:
    """Minimize ``|op x - rhs|`` by Golub-Kahan bidiagonalization.

    Stopping follows Paige and Saunders with ``atol = btol = tol``; hitting
    ``max_iter`` flags the result instead of raising.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    rows, cols = op.shape
    b = np.asarray(rhs, dtype=float)
    if b.shape != (rows,):
        raise ValueError(f"rhs has shape {b.shape}, operator expects ({rows},)")
    if check_adjoint:
        defect = op.check_adjoint()
        if defect > ADJOINT_TOLERANCE:
            raise ValueError(f"operator adjoint defect {defect:.2e} exceeds {ADJOINT_TOLERANCE}")
    itnlim = max_iter if max_iter is not None else 2 * cols
    ctol = 1.0 / conlim if conlim > 0 else 0.0
    products = 0

    x = np.zeros(cols)
    u = b.copy()
    beta = float(np.linalg.norm(u))
    alfa = 0.0
    v = np.zeros(cols)
    if beta > 0:
        u /= beta
        v = op.apply_adjoint(u)
        products += 1
        alfa = float(np.linalg.norm(v))
    if alfa > 0:
        v = v / alfa
    w = v.copy()

    history = [beta]
    if alfa * beta == 0:
        return LsqrResult(x, 0, beta, 0.0 if beta == 0 else 1.0, _REASONS[0], False, products,
                          history)

    rhobar, phibar, bnorm = alfa, beta, beta
    rnorm = beta
    anorm = acond = ddnorm = xnorm = xxnorm = 0.0
    z = 0.0
    cs2, sn2 = -1.0, 0.0
    itn = istop = 0
    while itn < itnlim:
        itn += 1
        u = op.apply(v) - alfa * u
        products += 1
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u /= beta
            anorm = math.sqrt(anorm**2 + alfa**2 + beta**2)
            v = op.apply_adjoint(u) - beta * v
            products += 1
            alfa = float(np.linalg.norm(v))
            if alfa > 0:
                v = v / alfa

        rho = math.hypot(rhobar, beta)
        cs = rhobar / rho
        sn = beta / rho
        theta = sn * alfa
        rhobar = -cs * alfa
        phi = cs * phibar
        phibar = sn * phibar
        tau = sn * phi

        dk = w / rho
        x = x + (phi / rho) * w
        w = v - (theta / rho) * w
        ddnorm += float(dk @ dk)

        delta = sn2 * rho
        gambar = -cs2 * rho
        zbar = (phi - delta * z) / gambar
        xnorm = math.sqrt(xxnorm + zbar**2)
        gamma = math.hypot(gambar, theta)
        cs2 = gambar / gamma
        sn2 = theta / gamma
        z = (phi - delta * z) / gamma
        xxnorm += z**2

        acond = anorm * math.sqrt(ddnorm)
        rnorm = phibar
        arnorm = alfa * abs(tau)
        history.append(rnorm)

        test1 = rnorm / bnorm
        test2 = arnorm / (anorm * rnorm) if rnorm > 0 else 0.0
        test3 = 1.0 / acond if acond > 0 else 0.0
        t1 = test1 / (1.0 + anorm * xnorm / bnorm)
        rtol = tol + tol * anorm * xnorm / bnorm
        logger.debug("lsqr it=%d rnorm=%.3e test1=%.2e test2=%.2e", itn, rnorm, test1, test2)

        if itn >= itnlim:
            istop = 7
        if 1 + test3 <= 1:
            istop = 6
        if 1 + test2 <= 1:
            istop = 5
        if 1 + t1 <= 1:
            istop = 4
        if test3 <= ctol:
            istop = 3
        if test2 <= tol:
            istop = 2
        if test1 <= rtol:
            istop = 1
        if istop:
            break

    flagged = istop == 7
    if flagged:
        logger.warning("lsqr stopped at the iteration limit %d (rnorm=%.3e)", itnlim, rnorm)
    return LsqrResult(x, itn, rnorm, rnorm / bnorm, _REASONS[istop], flagged, products, history)


def estimate_condition(op: LinearOp, n_trials: int = 50, seed: int = 0) -> float:
    """Ratio of extreme singular values of ``op``.

    Operators with at most 4096 columns are assembled and their singular
    values computed exactly; larger ones use ``n_trials`` power iterations on
    the normal operator. A smallest singular value below ``1e-14`` of the
    largest is reported as infinite.
    """
    rows, cols = op.shape
    if cols == 0:
        raise ValueError("operator has no columns")
    if rows < cols:
        return math.inf
    if cols <= ASSEMBLY_LIMIT:
        sigma = scipy.linalg.svdvals(op.assemble())
        s_max, s_min = float(sigma[0]), float(sigma[-1])
    else:
        rng = np.random.default_rng(seed)

        def normal(x: np.ndarray) -> np.ndarray:
            return op.apply_adjoint(op.apply(x))

        x = rng.standard_normal(cols)
        lam = 0.0
        for _ in range(n_trials):
            x = normal(x)
            lam = float(np.linalg.norm(x))
            x /= lam
        s_max = math.sqrt(lam)
        shift = lam * (1 + 1e-3)
        y = rng.standard_normal(cols)
        mu = 0.0
        for _ in range(n_trials):
            y = shift * y - normal(y)
            mu = float(np.linalg.norm(y))
            y /= mu
        s_min = math.sqrt(max(shift - mu, 0.0))
        logger.info("condition estimated by %d power iterations", n_trials)
    if s_min < 1e-14 * s_max:
        return math.inf
    return s_max / s_min
