"""Damped Newton with relaxed backtracking and eps-continuation.

The solver is generic over the residual/Jacobian pair, so the same core serves
the monolithic coupled system, plain semilinear state solves, and the local
subdomain solves inside the nonlinear preconditioner.  The smoothing parameter
follows eps_{k+1} = max(gamma * eps_k, eps_min); convergence is declared only
once eps has reached eps_min AND the residual test holds, since a small
residual of a smoother intermediate system is not a solution of the target one.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .krylov import KrylovConfig, gmres


class LineSearchError(RuntimeError):
    """No admissible step length within the halving budget."""


class LinearSolveError(RuntimeError):
    """The Newton direction solve failed or did not converge."""


@dataclass(frozen=True)
class ContinuationSchedule:
    """eps path: start at eps0, decay by gamma per iteration, floor at eps_min."""

    eps0: float = 1.0
    gamma: float = 0.2
    eps_min: float = 1e-10

    def __post_init__(self):
        if not self.eps0 >= self.eps_min > 0:
            raise ValueError("need eps0 >= eps_min > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def fixed(cls, eps):
        """Degenerate schedule: plain Newton at a single eps."""
        return cls(eps, 1.0, eps)

    def next_eps(self, eps):
        return max(self.gamma * eps, self.eps_min)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_outer: int = 200
    sigma: float = 1.1
    max_halvings: int = 30
    # "direct" for a sparse LU on the assembled Jacobian, or a KrylovConfig
    linear_solver: object = "direct"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.sigma < 1.0:
            raise ValueError("sigma must be at least 1")


@dataclass
class SolveReport:
    converged: bool
    outer_iters: int
    residual_norms: list = field(default_factory=list)
    eps_values: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    accepted_norms: list = field(default_factory=list)
    gmres_iters: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    threshold: float = 0.0
    wall_time: float = 0.0
    failure: str | None = None

    @property
    def total_linear_iters(self):
        counted = [k for k in self.gmres_iters if k is not None]
        return sum(counted) if counted else None

    @property
    def avg_gmres_iters(self):
        counted = [k for k in self.gmres_iters if k is not None]
        return sum(counted) / len(counted) if counted else None

    @property
    def avg_inner_iters(self):
        return sum(self.inner_iters) / len(self.inner_iters) if self.inner_iters else None


def backtrack(x, d, residual_fn, sigma, max_halvings, current_norm=None):
    """Largest alpha in {1, 1/2, 1/4, ...} with ||F(x + alpha d)|| <= sigma ||F(x)||.

    Nonfinite trial norms reject the step, so overflowing trial iterates simply
    halve alpha instead of aborting.
    """
    if current_norm is None:
        current_norm = float(np.linalg.norm(residual_fn(x)))
    alpha = 1.0
    for _ in range(max_halvings + 1):
        trial = float(np.linalg.norm(residual_fn(x + alpha * d)))
        if np.isfinite(trial) and trial <= sigma * current_norm:
            return alpha, trial
        alpha *= 0.5
    raise LineSearchError(
        f"no admissible step within {max_halvings} halvings "
        f"(residual {current_norm:.3e})")


def _solve_direction(jac, rhs, linear_solver, precond):
    """Newton direction solve; returns (direction, gmres iterations or None)."""
    if isinstance(linear_solver, KrylovConfig):
        apply_op = jac if callable(jac) else (lambda v: jac @ v)
        result = gmres(apply_op, rhs, linear_solver, precond=precond)
        if not result.converged:
            raise LinearSolveError(
                f"GMRES stalled at residual {result.residual:.3e} "
                f"after {result.iters} iterations")
        return result.x, result.iters
    if linear_solver == "direct":
        try:
            return spla.splu(jac.tocsc()).solve(rhs), None
        except RuntimeError as exc:
            raise LinearSolveError(f"sparse factorization failed: {exc}") from exc
    raise ValueError(f"unknown linear solver {linear_solver!r}")


def newton_continuation(x0, residual_fn, jacobian_fn, sched, cfg, precond_builder=None):
    """Damped Newton on F_eps with the eps-continuation schedule.

    residual_fn(x, eps) -> vector; jacobian_fn(x, eps) -> sparse matrix (direct
    mode) or operator for GMRES; precond_builder(x, eps) -> left preconditioner
    callable, rebuilt every outer iteration.  Stopping threshold is
    max(tol, tol * ||F_eps0(x0)||), frozen at the initial residual.
    """
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float, copy=True)
    eps = sched.eps0
    r = residual_fn(x, eps)
    nrm = float(np.linalg.norm(r))
    if not np.isfinite(nrm):
        raise ValueError("nonfinite residual at the initial guess")
    threshold = max(cfg.tol, cfg.tol * nrm)

    report = SolveReport(False, 0, residual_norms=[nrm], eps_values=[eps],
                         threshold=threshold)
    while True:
        if nrm <= threshold and eps == sched.eps_min:
            report.converged = True
            break
        if report.outer_iters >= cfg.max_outer:
            report.failure = f"no convergence within {cfg.max_outer} outer iterations"
            break
        try:
            jac = jacobian_fn(x, eps)
            precond = precond_builder(x, eps) if precond_builder is not None else None
            d, lin_iters = _solve_direction(jac, -r, cfg.linear_solver, precond)
            alpha, accepted = backtrack(
                x, d, lambda z: residual_fn(z, eps), cfg.sigma, cfg.max_halvings,
                current_norm=nrm)
        except (LineSearchError, LinearSolveError) as exc:
            report.failure = str(exc)
            break
        x += alpha * d
        eps = sched.next_eps(eps)
        r = residual_fn(x, eps)
        nrm = float(np.linalg.norm(r))
        report.outer_iters += 1
        report.alphas.append(alpha)
        report.accepted_norms.append(accepted)
        report.gmres_iters.append(lin_iters)
        report.residual_norms.append(nrm)
        report.eps_values.append(eps)

    report.wall_time = time.perf_counter() - t0
    return x, report
