"""Overlapping domain decomposition on the interior grid.

Three layers on top of a rectangular tiling with m-cell overlap:

  * a linear one-level RAS preconditioner for the monolithic Newton's GMRES,
  * nonlinear local corrections (frozen-exterior subdomain solves) and the
    RAS fixed-point recombination,
  * the nonlinearly preconditioned outer solver: Newton on the fixed-point
    residual, with the Jacobian action assembled from frozen local
    factorizations and applied matrix-free inside GMRES.

Local corrections run as a parallel map over subdomains; recombination writes
are disjoint by the ownership partition, so the result is independent of
thread scheduling.  The per-matvec local triangular solves inside the outer
GMRES are microseconds at the scales handled here and stay sequential.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid
from .krylov import KrylovConfig
from .newton import ContinuationSchedule, NewtonConfig, SolveReport, newton_continuation
from .system import jacobian_diagonals, residual_rows, split_pair


class LocalSolveError(RuntimeError):
    """A subdomain correction solve failed; carries the subdomain id."""

    def __init__(self, subdomain, message):
        self.subdomain = subdomain
        super().__init__(f"subdomain {subdomain}: {message}")


@dataclass(frozen=True)
class Subdomain:
    """Index sets of one overlapping subdomain and its ownership block.

    idx holds the sorted global flat indices of the overlap rectangle, own
    those of the ownership rectangle; pair_* are the same sets repeated for
    the (y, p) block layout of length 2N.  own_in_local locates the owned
    entries inside the local vector.
    """

    rows: tuple
    cols: tuple
    own_rows: tuple
    own_cols: tuple
    idx: np.ndarray
    own: np.ndarray
    own_in_local: np.ndarray
    pair_idx: np.ndarray
    pair_own: np.ndarray
    pair_own_in_local: np.ndarray

    @property
    def size(self):
        return self.idx.shape[0]


@dataclass(frozen=True)
class Decomposition:
    grid: Grid
    s1: int
    s2: int
    overlap: int
    subdomains: tuple

    def __len__(self):
        return len(self.subdomains)


def _tile_edges(n, parts):
    """Near-equal split of range(n); remainder cells go to the last tile."""
    base, rem = divmod(n, parts)
    if base == 0:
        raise ValueError(f"cannot tile {n} points into {parts} nonempty parts")
    sizes = [base] * (parts - 1) + [base + rem]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [(int(edges[k]), int(edges[k + 1])) for k in range(parts)]


def _rect_indices(n, rows, cols):
    r = np.arange(rows[0], rows[1])
    c = np.arange(cols[0], cols[1])
    return (r[:, None] * n + c[None, :]).ravel()


def decompose(grid, s1, s2, m):
    """Tile the interior into s1 x s2 ownership blocks, dilated by m cells."""
    if s1 < 1 or s2 < 1:
        raise ValueError("need at least one tile per dimension")
    if m < 0:
        raise ValueError("overlap must be nonnegative")
    row_tiles = _tile_edges(grid.n, s1)
    col_tiles = _tile_edges(grid.n, s2)
    if s1 > 1 and m > min(b - a for a, b in row_tiles):
        raise ValueError("overlap exceeds neighbor tile in the row direction")
    if s2 > 1 and m > min(b - a for a, b in col_tiles):
        raise ValueError("overlap exceeds neighbor tile in the column direction")

    n2 = grid.size
    subdomains = []
    for r0, r1 in row_tiles:
        for c0, c1 in col_tiles:
            rows = (max(0, r0 - m), min(grid.n, r1 + m))
            cols = (max(0, c0 - m), min(grid.n, c1 + m))
            idx = _rect_indices(grid.n, rows, cols)
            own = _rect_indices(grid.n, (r0, r1), (c0, c1))
            own_in_local = np.searchsorted(idx, own)
            pair_idx = np.concatenate([idx, idx + n2])
            pair_own = np.concatenate([own, own + n2])
            pair_own_in_local = np.concatenate(
                [own_in_local, own_in_local + idx.shape[0]])
            subdomains.append(Subdomain(
                rows=rows, cols=cols, own_rows=(r0, r1), own_cols=(c0, c1),
                idx=idx, own=own, own_in_local=own_in_local,
                pair_idx=pair_idx, pair_own=pair_own,
                pair_own_in_local=pair_own_in_local))
    return Decomposition(grid=grid, s1=s1, s2=s2, overlap=m,
                         subdomains=tuple(subdomains))


@dataclass(frozen=True)
class LocalSystem:
    """Restriction of the discrete operator to one subdomain.

    a_loc couples local points among themselves; a_ext holds the same stencil
    rows with local columns zeroed, so a_ext @ global_field yields exactly the
    frozen-exterior Dirichlet coupling of the transmission conditions.
    """

    a_loc: sp.csr_matrix
    a_ext: sp.csr_matrix
    f_loc: np.ndarray
    yd_loc: np.ndarray


def build_local_systems(dec, spec):
    n2 = dec.grid.size
    in_local = np.zeros(n2, dtype=bool)
    systems = []
    for sub in dec.subdomains:
        in_local[sub.idx] = True
        rows = spec.a[sub.idx, :].tocoo()
        mask = in_local[rows.col]
        size = sub.size
        a_loc = sp.coo_matrix(
            (rows.data[mask],
             (rows.row[mask], np.searchsorted(sub.idx, rows.col[mask]))),
            shape=(size, size)).tocsr()
        a_ext = sp.coo_matrix(
            (rows.data[~mask], (rows.row[~mask], rows.col[~mask])),
            shape=(size, n2)).tocsr()
        systems.append(LocalSystem(a_loc=a_loc, a_ext=a_ext,
                                   f_loc=spec.f[sub.idx], yd_loc=spec.y_d[sub.idx]))
        in_local[sub.idx] = False
    return systems


def _local_pair_jacobian(loc, v, spec, eps):
    size = loc.f_loc.shape[0]
    y, p = v[:size], v[size:]
    dphi_y, b12, b21 = jacobian_diagonals(y, p, spec.phi, spec.nu, spec.mu, eps)
    a11 = loc.a_loc + sp.diags(dphi_y)
    return sp.bmat([[a11, sp.diags(b12)], [sp.diags(b21), a11]], format="csr")


def _local_problem(loc, spec, x):
    """Residual/Jacobian closures of the frozen-exterior local system."""
    size = loc.f_loc.shape[0]
    y_glob, p_glob = split_pair(x)
    e_y = loc.a_ext @ y_glob
    e_p = loc.a_ext @ p_glob

    def local_residual(v, eps):
        y, p = v[:size], v[size:]
        r1, r2 = residual_rows(loc.a_loc @ y + e_y, loc.a_loc @ p + e_p, y, p,
                               loc.f_loc, loc.yd_loc, spec.phi, spec.nu,
                               spec.mu, eps, check=False)
        return np.concatenate([r1, r2])

    def local_jacobian(v, eps):
        return _local_pair_jacobian(loc, v, spec, eps)

    return local_residual, local_jacobian


def _solve_local(i, sub, loc, spec, x, sched, cfg):
    res, jac = _local_problem(loc, spec, x)
    v0 = x[sub.pair_idx]
    v, report = newton_continuation(v0, res, jac, sched, cfg)
    if not report.converged:
        raise LocalSolveError(i, report.failure)
    return v, report.outer_iters


def _parallel_map(fn, items, threads):
    if threads == 1 or len(items) == 1:
        return [fn(*item) for item in items]
    workers = threads if threads else min(len(items), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: fn(*item), items))


def local_correction(i, x, dec, spec, eps, inner_cfg=None, inner_sched=None,
                     systems=None):
    """Local values solving the frozen-exterior system on subdomain i."""
    systems = systems if systems is not None else build_local_systems(dec, spec)
    cfg = inner_cfg if inner_cfg is not None else NewtonConfig(tol=1e-8)
    sched = inner_sched if inner_sched is not None else ContinuationSchedule.fixed(eps)
    v, _ = _solve_local(i, dec.subdomains[i], systems[i], spec, x, sched, cfg)
    return v


def ras_preconditioner(x, dec, spec, eps, systems=None):
    """One-level RAS on the current Jacobian as a left-preconditioner callable."""
    systems = systems if systems is not None else build_local_systems(dec, spec)
    lus = []
    for i, (sub, loc) in enumerate(zip(dec.subdomains, systems)):
        jac_loc = _local_pair_jacobian(loc, x[sub.pair_idx], spec, eps)
        try:
            lus.append(spla.splu(jac_loc.tocsc()))
        except RuntimeError as exc:
            raise LocalSolveError(i, f"singular local block: {exc}") from exc

    def apply(v):
        out = np.zeros_like(v)
        for sub, lu in zip(dec.subdomains, lus):
            w = lu.solve(v[sub.pair_idx])
            out[sub.pair_own] = w[sub.pair_own_in_local]
        return out

    return apply


def ras_precondition(v, x, dec, spec, eps):
    """Single application of the RAS preconditioner (convenience wrapper)."""
    return ras_preconditioner(x, dec, spec, eps)(v)


def _scatter_own(dec, values, out):
    for sub, v in zip(dec.subdomains, values):
        out[sub.pair_own] = v[sub.pair_own_in_local]
    return out


def ras_fixed_point_step(x, dec, spec, eps, inner_cfg=None, inner_sched=None,
                         threads=None, systems=None):
    """One nonlinear RAS sweep: solve all subdomains, recombine by ownership."""
    systems = systems if systems is not None else build_local_systems(dec, spec)
    cfg = inner_cfg if inner_cfg is not None else NewtonConfig(tol=1e-8)
    sched = inner_sched if inner_sched is not None else ContinuationSchedule.fixed(eps)
    results = _parallel_map(
        _solve_local,
        [(i, sub, loc, spec, x, sched, cfg)
         for i, (sub, loc) in enumerate(zip(dec.subdomains, systems))],
        threads)
    return _scatter_own(dec, [v for v, _ in results], np.zeros_like(x))


@dataclass
class CorrectionSet:
    """Cached subdomain solves for one iterate, reused by the Jacobian action."""

    token: int
    x: np.ndarray
    eps: float
    f_val: np.ndarray
    values: list
    jac_locs: list
    lus: list
    inner_iters: list
    systems: list = field(repr=False, default=None)


_token_counter = [0]


def raspen_residual(x, dec, spec, eps, inner_cfg=None, inner_sched=None,
                    threads=None, systems=None):
    """Fixed-point residual sum_i P~_i C_i(x) and the frozen local solves.

    The returned residual is scatter_own(local values) - x, which equals the
    ownership recombination of the local displacements since the ownership
    sets partition the index set.
    """
    systems = systems if systems is not None else build_local_systems(dec, spec)
    cfg = inner_cfg if inner_cfg is not None else NewtonConfig(tol=1e-8)
    sched = inner_sched if inner_sched is not None else ContinuationSchedule.fixed(eps)

    results = _parallel_map(
        _solve_local,
        [(i, sub, loc, spec, x, sched, cfg)
         for i, (sub, loc) in enumerate(zip(dec.subdomains, systems))],
        threads)
    values = [v for v, _ in results]
    inner_iters = [k for _, k in results]

    def factor(i, sub, loc):
        jac_loc = _local_pair_jacobian(loc, values[i], spec, eps)
        try:
            return jac_loc, spla.splu(jac_loc.tocsc())
        except RuntimeError as exc:
            raise LocalSolveError(i, f"singular local Jacobian: {exc}") from exc

    factored = _parallel_map(
        factor,
        [(i, sub, loc) for i, (sub, loc) in enumerate(zip(dec.subdomains, systems))],
        threads)

    f_val = _scatter_own(dec, values, np.zeros_like(x)) - x
    _token_counter[0] += 1
    corrections = CorrectionSet(
        token=_token_counter[0], x=x.copy(), eps=eps, f_val=f_val,
        values=values, jac_locs=[j for j, _ in factored],
        lus=[lu for _, lu in factored], inner_iters=inner_iters,
        systems=systems)
    return f_val, corrections


def raspen_jacobian_apply(x, d, dec, spec, eps, corrections):
    """Action of the fixed-point residual's Jacobian using frozen local solves.

    Each local contribution is -(R_i F' P_i)^{-1} R_i F' d evaluated at the
    corrected point x^(i) (local values inside the subdomain, x outside); the
    diagonal coupling blocks are local, so the only exterior reach of R_i F' d
    is through the operator stencil, supplied by a_ext.
    """
    if corrections.eps != eps or not np.array_equal(corrections.x, x):
        raise RuntimeError("stale corrections: recompute raspen_residual at this iterate")
    dy, dp = split_pair(d)
    out = np.zeros_like(d)
    for sub, loc, jac_loc, lu in zip(dec.subdomains, corrections.systems,
                                     corrections.jac_locs, corrections.lus):
        rhs = jac_loc @ d[sub.pair_idx] + np.concatenate(
            [loc.a_ext @ dy, loc.a_ext @ dp])
        w = lu.solve(rhs)
        out[sub.pair_own] = -w[sub.pair_own_in_local]
    return out


def raspen_solve(x0, dec, spec, sched, cfg=None, krylov_cfg=None,
                 inner_tol=1e-8, inner_max_outer=200, threads=None,
                 continuation=True, backtracking=False):
    """Outer Newton on the fixed-point residual at eps_min, full steps.

    The eps-continuation schedule applies only inside the first evaluation's
    subdomain solves (the only ones that start far from their solutions);
    every later evaluation solves the local systems directly at eps_min.
    The optional backtracking flag reuses the damped line search of the
    monolithic solver; it is off by default and not part of the plain method.
    """
    cfg = cfg if cfg is not None else NewtonConfig()
    krylov_cfg = krylov_cfg if krylov_cfg is not None else KrylovConfig(
        rel_tol=1e-8, max_iters=400)
    systems = build_local_systems(dec, spec)
    inner_cfg = NewtonConfig(tol=inner_tol, max_outer=inner_max_outer)
    eps_min = sched.eps_min

    state = {"corr": None, "evals": 0, "inner_hist": [], "per_sub": []}

    def residual_fn(x, eps):
        corr = state["corr"]
        if corr is not None and corr.eps == eps and np.array_equal(corr.x, x):
            return corr.f_val.copy()
        if continuation and state["evals"] == 0:
            inner_sched = ContinuationSchedule(sched.eps0, sched.gamma, eps)
        else:
            inner_sched = ContinuationSchedule.fixed(eps)
        f_val, corr = raspen_residual(x, dec, spec, eps, inner_cfg, inner_sched,
                                      threads, systems)
        state["corr"] = corr
        state["evals"] += 1
        state["inner_hist"].append(max(corr.inner_iters))
        state["per_sub"].append(list(corr.inner_iters))
        return f_val.copy()

    def jacobian_fn(x, eps):
        corr = state["corr"]
        if corr is None or corr.eps != eps or not np.array_equal(corr.x, x):
            raise RuntimeError("Jacobian requested before a residual evaluation "
                               "at this iterate")

        def apply(d):
            if state["corr"] is not corr:
                raise RuntimeError("stale corrections: a newer iterate was evaluated")
            return raspen_jacobian_apply(x, d, dec, spec, eps, corr)

        return apply

    outer_cfg = NewtonConfig(
        tol=cfg.tol, max_outer=cfg.max_outer,
        sigma=cfg.sigma if backtracking else float("inf"),
        max_halvings=cfg.max_halvings, linear_solver=krylov_cfg)
    try:
        x, report = newton_continuation(
            x0, residual_fn, jacobian_fn, ContinuationSchedule.fixed(eps_min),
            outer_cfg)
    except LocalSolveError as exc:
        report = SolveReport(False, max(state["evals"] - 1, 0),
                             inner_iters=list(state["inner_hist"]),
                             failure=str(exc))
        return np.array(x0, dtype=float, copy=True), report
    report.inner_iters = list(state["inner_hist"])
    return x, report
