"""Experiment orchestration: single runs, benchmark tables, and studies.

All solves start from x = 0 with the stopping rule max(tol, tol * ||F(x0)||)
of the Newton core.  Table protocols mirror the benchmark layout of the
method-comparison experiments at a caller-chosen grid size; wall times are
reported but never asserted anywhere, iteration counts are the quantities
of interest.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..grid import Grid, write_field_csv
from ..krylov import KrylovConfig
from ..newton import ContinuationSchedule, NewtonConfig, newton_continuation
from ..schwarz import (build_local_systems, decompose, ras_preconditioner,
                       raspen_solve)
from ..system import (construct_plateau_problem, construct_test_problem,
                      jacobian, recover_control, residual, split_pair,
                      sparsity_target_problem)
from .config import config_to_dict, with_updates
from .reports import (BenchmarkRow, report_to_dict, write_benchmark_csv,
                      write_pairs_csv, write_report_json,
                      write_residual_history_csv)

EPS_TABLE_MONO = (1.0, 1e-3, 1e-5, 1e-10, 1e-13, 1e-15)
EPS_TABLE_RASPEN = (1.0, 1e-5, 1e-10, 1e-15)
SWEEP_BLOCKS = ((1e-8, 1.0), (1e-8, 1e-4), (1e-4, 1.0))
SWEEP_GAMMAS = (0.5, 0.2, 0.1)
SWEEP_EPS0 = (1.0, 1e-3, 1e-5)
SPARSITY_THRESHOLD = 1e-8


def build_problem(cfg):
    grid = Grid(cfg.n)
    spec, _ = construct_test_problem(grid, kappa=cfg.kappa, nu=cfg.nu,
                                     mu=cfg.mu, k_tilde=cfg.k_tilde)
    return grid, spec


def schedule_for(cfg):
    """Continuation methods walk eps0 -> eps_min; plain ones sit at eps_min."""
    if cfg.uses_continuation:
        return ContinuationSchedule(cfg.eps0, cfg.gamma, cfg.eps_min)
    return ContinuationSchedule.fixed(cfg.eps_min)


def _monolithic_linear_solver(cfg):
    if cfg.linear_solver in ("auto", "direct"):
        return "direct"
    return KrylovConfig(rel_tol=cfg.gmres_tol, max_iters=5000)


def solve_single(cfg, spec=None):
    """Dispatch one solve per the configured method; returns (x, report, spec)."""
    if spec is None:
        _, spec = build_problem(cfg)
    sched = schedule_for(cfg)
    x0 = np.zeros(2 * spec.grid.size)

    if cfg.is_raspen:
        dec = decompose(spec.grid, cfg.s1, cfg.s2, cfg.overlap)
        return (*raspen_solve(
            x0, dec, spec, sched,
            cfg=NewtonConfig(tol=cfg.tol, max_outer=cfg.max_outer, sigma=cfg.sigma),
            krylov_cfg=KrylovConfig(rel_tol=cfg.gmres_tol, max_iters=1000),
            inner_tol=cfg.inner_tol, threads=cfg.threads,
            continuation=cfg.uses_continuation), spec)

    residual_fn = lambda x, eps: residual(x, spec, eps, check=False)
    jacobian_fn = lambda x, eps: jacobian(x, spec, eps)
    if cfg.uses_ras:
        dec = decompose(spec.grid, cfg.s1, cfg.s2, cfg.overlap)
        systems = build_local_systems(dec, spec)
        newton_cfg = NewtonConfig(
            tol=cfg.tol, max_outer=cfg.max_outer, sigma=cfg.sigma,
            linear_solver=KrylovConfig(rel_tol=cfg.gmres_tol, max_iters=2000))
        precond_builder = lambda x, eps: ras_preconditioner(x, dec, spec, eps,
                                                            systems)
        x, report = newton_continuation(x0, residual_fn, jacobian_fn, sched,
                                        newton_cfg, precond_builder=precond_builder)
        return x, report, spec

    newton_cfg = NewtonConfig(tol=cfg.tol, max_outer=cfg.max_outer,
                              sigma=cfg.sigma,
                              linear_solver=_monolithic_linear_solver(cfg))
    x, report = newton_continuation(x0, residual_fn, jacobian_fn, sched,
                                    newton_cfg)
    return x, report, spec


def sparsity_fraction(u, threshold=SPARSITY_THRESHOLD):
    """Share of entries below threshold * ||u||_inf (1.0 for the zero field)."""
    scale = np.abs(u).max()
    if scale == 0.0:
        return 1.0
    return float(np.mean(np.abs(u) < threshold * scale))


def run_single(cfg, out_dir):
    """One configured solve plus its artifact set; returns (exit_code, report)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x, report, spec = solve_single(cfg)
    y, p = split_pair(x)
    u = recover_control(p, spec, cfg.eps_min)

    data = report_to_dict(config_to_dict(cfg), report,
                          sparsity_fraction=sparsity_fraction(u))
    write_report_json(out / "report.json", data)
    write_residual_history_csv(out / "residual_history.csv", report)
    write_field_csv(out / "y.csv", spec.grid, y)
    write_field_csv(out / "p.csv", spec.grid, p)
    write_field_csv(out / "u.csv", spec.grid, u)
    return (0 if report.converged else 3), data


def _benchmark_row(cfg, report):
    return BenchmarkRow(
        method=cfg.method, n=cfg.n, subdomains=cfg.subdomains,
        eps_min=cfg.eps_min, nu=cfg.nu, mu=cfg.mu, gamma=cfg.gamma,
        eps0=cfg.eps0, outer_iters=report.outer_iters,
        avg_inner_iters=report.avg_inner_iters,
        avg_gmres_iters=report.avg_gmres_iters,
        wall_time_s=report.wall_time, converged=report.converged,
        failure=report.failure)


def _run_cell(cfg):
    try:
        _, report, _ = solve_single(cfg)
        return _benchmark_row(cfg, report)
    except Exception as exc:
        return BenchmarkRow(
            method=cfg.method, n=cfg.n, subdomains=cfg.subdomains,
            eps_min=cfg.eps_min, nu=cfg.nu, mu=cfg.mu, gamma=cfg.gamma,
            eps0=cfg.eps0, outer_iters=0, avg_inner_iters=None,
            avg_gmres_iters=None, wall_time_s=0.0, converged=False,
            failure=str(exc))


def _cell_config(base, method, eps_min, **extra):
    # plain methods carry a degenerate schedule so the table rows are
    # self-describing; continuation methods keep the configured eps0/gamma
    if method.endswith("-eps"):
        eps0 = max(base.eps0, eps_min)
    else:
        eps0 = eps_min
    return with_updates(base, method=method, eps_min=eps_min, eps0=eps0,
                        linear_solver="auto", **extra)


def _ras_shape(base):
    if base.s1 * base.s2 == 1:
        return {"s1": 2, "s2": 2}
    return {}


def table_cells(table_id, base):
    """Cell configs of one benchmark table, in row-major emission order."""
    if table_id == "mono":
        return [_cell_config(base, method, eps, s1=1, s2=1)
                for method in ("newton", "newton-eps")
                for eps in EPS_TABLE_MONO]
    if table_id == "gmres":
        shape = _ras_shape(base)
        cells = [with_updates(_cell_config(base, method, eps, s1=1, s2=1),
                              linear_solver="gmres")
                 for method in ("newton", "newton-eps")
                 for eps in EPS_TABLE_MONO]
        cells += [_cell_config(base, method, eps, **shape)
                  for method in ("newton-ras", "newton-ras-eps")
                  for eps in EPS_TABLE_MONO]
        return cells
    if table_id == "raspen":
        shape = _ras_shape(base)
        return [_cell_config(base, method, eps, **shape)
                for method in ("raspen", "raspen-eps")
                for eps in EPS_TABLE_RASPEN]
    if table_id == "scaling":
        # weak scaling: the configured n is the per-subdomain resolution
        return [_cell_config(base, "raspen-eps", base.eps_min,
                             n=base.n * s, s1=s, s2=s)
                for s in (1, 2, 3)]
    if table_id == "sweep":
        shape = _ras_shape(base)
        cells = []
        for nu, mu in SWEEP_BLOCKS:
            for method in ("raspen", "newton-ras"):
                cells.append(_cell_config(base, method, base.eps_min,
                                          nu=nu, mu=mu, **shape))
            for method in ("raspen-eps", "newton-ras-eps"):
                for gamma in SWEEP_GAMMAS:
                    for eps0 in SWEEP_EPS0:
                        cells.append(with_updates(
                            _cell_config(base, method, base.eps_min,
                                         nu=nu, mu=mu, **shape),
                            gamma=gamma, eps0=max(eps0, base.eps_min)))
        return cells
    raise ValueError(f"unknown table id {table_id!r}")


def run_table(table_id, base_cfg, out_dir, parallel_cells=False):
    """All cells of one table; per-cell failures land in rows, not exceptions."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = table_cells(table_id, base_cfg)
    if parallel_cells:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cfg) for cfg in cells]
    write_benchmark_csv(out / f"table_{table_id}.csv", rows)
    code = 0 if all(row.converged for row in rows) else 4
    return code, rows


def _continuation_solve(spec, eps, tol):
    x0 = np.zeros(2 * spec.grid.size)
    sched = ContinuationSchedule(max(1.0, eps), 0.2, eps)
    x, report = newton_continuation(
        x0, lambda z, e: residual(z, spec, e, check=False),
        lambda z, e: jacobian(z, spec, e), sched, NewtonConfig(tol=tol))
    if not report.converged:
        raise RuntimeError(f"study solve at eps={eps:g} failed: {report.failure}")
    return x


def rate_study(n, eps_list, out_dir, nu=1e-6, mu=1.0, kappa=0.1,
               eps_ref=1e-12, tol=1e-10):
    """Distance of smoothed solutions to a near-limit reference, per eps.

    Errors use the discrete H1 norm (zero-extended forward differences,
    h^2 cell weight) on the combined state/adjoint pair; the fitted slope is
    the least-squares line of log error against log eps.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = Grid(n)
    spec, _ = construct_plateau_problem(grid, kappa=kappa, nu=nu, mu=mu)
    eps_list = sorted(eps_list, reverse=True)
    if eps_ref >= min(eps_list):
        raise ValueError("eps_ref must lie below every eps in the study")

    y_ref, p_ref = split_pair(_continuation_solve(spec, eps_ref, tol))
    rows = []
    for eps in eps_list:
        y, p = split_pair(_continuation_solve(spec, eps, tol))
        err = float(np.hypot(grid.h1_norm(y - y_ref), grid.h1_norm(p - p_ref)))
        rows.append((eps, err))
    slope = float(np.polyfit(np.log([e for e, _ in rows]),
                             np.log([max(r, 1e-300) for _, r in rows]), 1)[0])
    write_pairs_csv(out / "rate.csv", ["eps", "h1_error"], rows)
    write_report_json(out / "rate.json",
                      {"schema": 1, "n": n, "eps_ref": eps_ref, "slope": slope,
                       "nu": nu, "mu": mu, "kappa": kappa})
    return rows, slope


def sparsity_study(mu_list, eps_list, n, out_dir, nu=1e-6, kappa=0.1,
                   tol=1e-10, dump_fields=True):
    """Sparsity fraction of the recovered control over a (mu, eps) grid."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = Grid(n)
    rows = []
    for mu in mu_list:
        spec = sparsity_target_problem(grid, mu=mu, kappa=kappa, nu=nu)
        for eps in eps_list:
            x = _continuation_solve(spec, eps, tol)
            _, p = split_pair(x)
            u = recover_control(p, spec, eps)
            rows.append((mu, eps, sparsity_fraction(u)))
            if dump_fields:
                write_field_csv(out / f"u_mu{mu:g}_eps{eps:g}.csv", grid, u)
    write_pairs_csv(out / "sparsity.csv", ["mu", "eps", "fraction"], rows)
    return rows
