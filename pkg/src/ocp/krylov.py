"""Matrix-free GMRES with modified Gram-Schmidt Arnoldi and optional left preconditioning.

The operator and preconditioner are plain callables on vectors.  Preconditioning
is applied on the left, so the convergence test and the reported residual
history live in the preconditioned norm; iteration counts must be read with
that convention in mind.  No restart by default, so the residual history is
non-increasing and directly comparable across runs.
"""

from dataclasses import dataclass, field

import numpy as np


class GmresBreakdownError(RuntimeError):
    """Nonfinite Arnoldi entries; the operator or preconditioner misbehaved."""


@dataclass(frozen=True)
class KrylovConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 0.0
    max_iters: int = 2000
    restart: int | None = None

    def __post_init__(self):
        if self.rel_tol < 0 or self.abs_tol < 0 or self.rel_tol == self.abs_tol == 0:
            raise ValueError("tolerances must be nonnegative and not both zero")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.restart is not None and self.restart < 1:
            raise ValueError("restart must be at least 1 when given")


@dataclass
class GmresResult:
    x: np.ndarray
    iters: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)


def gmres(apply_op, b, cfg=None, precond=None, x0=None):
    """Solve apply_op(x) = b; returns GmresResult with per-iteration residuals.

    Convergence: ||M(A x - b)|| <= max(rel_tol * ||M b||, abs_tol) with M the
    (optional) left preconditioner.  A vanishing Arnoldi subdiagonal (happy
    breakdown) means the solution lies in the current subspace and counts as
    convergence.
    """
    cfg = cfg or KrylovConfig()
    apply_m = precond if precond is not None else (lambda v: v)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).copy()

    mb = apply_m(b)
    threshold = max(cfg.rel_tol * float(np.linalg.norm(mb)), cfg.abs_tol)
    r = mb if x0 is None else apply_m(b - apply_op(x))
    beta = float(np.linalg.norm(r))
    history = [beta]
    if not np.isfinite(beta):
        raise GmresBreakdownError("nonfinite initial residual")
    if beta <= threshold:
        return GmresResult(x, 0, beta, True, history)

    total = 0
    converged = False
    residual = beta
    while total < cfg.max_iters and not converged:
        budget = cfg.max_iters - total
        if cfg.restart is not None:
            budget = min(budget, cfg.restart)
        x, residual, steps, converged = _cycle(
            apply_op, apply_m, x, r, beta, threshold, budget, history)
        total += steps
        if cfg.restart is None:
            break
        if not converged and total < cfg.max_iters:
            r = apply_m(b - apply_op(x))
            beta = float(np.linalg.norm(r))

    return GmresResult(x, total, residual, converged, history)


def _cycle(apply_op, apply_m, x, r0, beta, threshold, max_steps, history):
    """One Arnoldi cycle starting from residual r0 with norm beta."""
    n = r0.shape[0]
    cap = min(32, max_steps)
    q = np.empty((n, cap + 1))
    q[:, 0] = r0 / beta
    # Hessenberg columns after Givens rotations, the rotations, and the rhs
    h_cols = []
    cs = []
    sn = []
    g = np.zeros(max_steps + 1)
    g[0] = beta

    residual = beta
    converged = False
    j = 0
    for j in range(max_steps):
        if j + 1 > cap:
            cap = min(2 * cap, max_steps)
            grown = np.empty((n, cap + 1))
            grown[:, :j + 1] = q[:, :j + 1]
            q = grown
        # copy: identity-like operators may hand back a view of the basis
        # column, and the in-place orthogonalization must not touch q
        w = np.array(apply_m(apply_op(q[:, j])), dtype=float, copy=True)
        h = np.empty(j + 2)
        with np.errstate(invalid="ignore", over="ignore"):
            for i in range(j + 1):
                h[i] = float(np.dot(q[:, i], w))
                w -= h[i] * q[:, i]
            h[j + 1] = float(np.linalg.norm(w))
        if not np.all(np.isfinite(h)):
            raise GmresBreakdownError(f"nonfinite Arnoldi entries at iteration {j + 1}")

        happy = h[j + 1] <= 1e-14 * max(1.0, float(np.max(np.abs(h[:j + 1]))))
        if not happy:
            q[:, j + 1] = w / h[j + 1]

        for i in range(j):
            hi = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = hi
        rad = float(np.hypot(h[j], h[j + 1]))
        c, s = (1.0, 0.0) if rad == 0.0 else (h[j] / rad, h[j + 1] / rad)
        cs.append(c)
        sn.append(s)
        h[j] = rad
        g[j + 1] = -s * g[j]
        g[j] = c * g[j]
        h_cols.append(h[:j + 1].copy())

        residual = abs(float(g[j + 1]))
        history.append(residual)
        if residual <= threshold or happy:
            converged = True
            break

    steps = j + 1
    # back substitution on the triangular system accumulated by the rotations
    rmat = np.zeros((steps, steps))
    for col, colvals in enumerate(h_cols):
        rmat[:col + 1, col] = colvals
    y = np.zeros(steps)
    for i in range(steps - 1, -1, -1):
        y[i] = (g[i] - float(np.dot(rmat[i, i + 1:], y[i + 1:]))) / rmat[i, i]
    return x + q[:, :steps] @ y, residual, steps, converged
