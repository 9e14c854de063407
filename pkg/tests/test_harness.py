"""Configuration, artifact round trips, table protocols, and CLI exit codes."""

import json

import numpy as np
import pytest

from ocp.grid import Grid, read_field_csv
from ocp.harness.cli import main
from ocp.harness.config import (ConfigError, ExperimentConfig, build_config,
                                config_to_dict, config_to_text,
                                load_config_file, parse_subdomains,
                                with_updates)
from ocp.harness.experiments import (EPS_TABLE_MONO, rate_study, run_single,
                                     run_table, solve_single,
                                     sparsity_fraction, sparsity_study,
                                     table_cells)
from ocp.harness.reports import (BenchmarkRow, read_benchmark_csv,
                                 read_pairs_csv, read_report_json,
                                 read_residual_history_csv,
                                 write_benchmark_csv, write_pairs_csv)
from ocp.newton import SolveReport

# mild, fast configuration reused by most orchestration tests
MILD = dict(n=12, nu=1e-2, k_tilde=2, eps_min=1e-3)


def mild_config(**kwargs):
    merged = {**MILD, **kwargs}
    return build_config(overrides=merged)


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig()
        assert cfg.method == "newton-eps" and cfg.subdomains == "1x1"

    def test_text_round_trip(self, tmp_path):
        cfg = mild_config(method="raspen-eps", s1=2, s2=3, overlap=1,
                          eps_min=1e-7, gmres_tol=1e-9, seed=42)
        path = tmp_path / "run.cfg"
        path.write_text(config_to_text(cfg))
        assert build_config(load_config_file(path)) == cfg

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# run setup\n\nn = 20  # grid\nmethod = newton\n")
        values = load_config_file(path)
        assert values == {"n": 20, "method": "newton"}

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("n = 20\ngamma = 0.5\n")
        cfg = build_config(load_config_file(path), {"n": 40})
        assert cfg.n == 40 and cfg.gamma == 0.5

    def test_malformed_lines_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("n 20\n")
        with pytest.raises(ConfigError, match="key=value"):
            load_config_file(path)
        path.write_text("n = twenty\n")
        with pytest.raises(ConfigError, match="bad value"):
            load_config_file(path)
        path.write_text("gamme = 0.5\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config_file(path)

    def test_subdomain_parsing(self):
        assert parse_subdomains("2x3") == (2, 3)
        assert parse_subdomains("4X4") == (4, 4)
        with pytest.raises(ConfigError):
            parse_subdomains("4")
        with pytest.raises(ConfigError):
            parse_subdomains("axb")

    def test_validation(self):
        with pytest.raises(ConfigError, match="unknown method"):
            build_config(overrides={"method": "sor"})
        with pytest.raises(ConfigError, match="eps0 >= eps_min"):
            build_config(overrides={"eps0": 1e-12, "eps_min": 1e-3})
        with pytest.raises(ConfigError, match="incompatible"):
            build_config(overrides={"method": "newton-ras",
                                    "linear_solver": "direct"})
        with pytest.raises(ConfigError, match="incompatible"):
            build_config(overrides={"method": "raspen",
                                    "linear_solver": "direct"})
        with pytest.raises(ConfigError, match="unknown config fields"):
            build_config(overrides={"verbosity": 3})

    def test_method_properties(self):
        assert mild_config(method="newton-ras-eps", s1=2, s2=2).uses_ras
        assert mild_config(method="raspen", s1=2, s2=2).is_raspen
        assert mild_config(method="raspen-eps").uses_continuation
        assert not mild_config(method="newton").uses_continuation


class TestReports:
    def _report(self):
        return SolveReport(
            converged=True, outer_iters=3,
            residual_norms=[1.5, 0.3, 1e-4, 3.33e-11],
            eps_values=[1.0, 0.2, 0.04, 0.04], alphas=[1.0, 0.5, 1.0],
            accepted_norms=[1.6, 0.31, 1.1e-4], gmres_iters=[None, 7, 9],
            inner_iters=[4, 2, 1], threshold=1e-10, wall_time=0.123)

    def test_residual_history_round_trip(self, tmp_path):
        report = self._report()
        path = tmp_path / "residual_history.csv"
        from ocp.harness.reports import write_residual_history_csv
        write_residual_history_csv(path, report)
        rows = read_residual_history_csv(path)
        assert [r["iteration"] for r in rows] == [0, 1, 2, 3]
        assert [r["residual"] for r in rows] == report.residual_norms
        assert [r["eps"] for r in rows] == report.eps_values
        assert rows[0]["alpha"] is None and rows[0]["gmres_iters"] is None
        assert [r["alpha"] for r in rows[1:]] == report.alphas
        assert [r["gmres_iters"] for r in rows[1:]] == report.gmres_iters

    def test_benchmark_csv_round_trip(self, tmp_path):
        rows = [
            BenchmarkRow("raspen-eps", 64, "2x2", 1e-10, 1e-6, 1.0, 0.2, 1.0,
                         4, 10.25, 27.5, 1.25, True, None),
            BenchmarkRow("newton", 64, "1x1", 1e-15, 1e-6, 1.0, 1.0, 1e-15,
                         0, None, None, 0.0, False, "did not converge"),
        ]
        path = tmp_path / "table.csv"
        write_benchmark_csv(path, rows)
        assert read_benchmark_csv(path) == rows

    def test_pairs_csv_round_trip(self, tmp_path):
        pairs = [(0.1, 223.0356005135898), (0.01, 68.2868458519769)]
        path = tmp_path / "rate.csv"
        write_pairs_csv(path, ["eps", "h1_error"], pairs)
        header, parsed = read_pairs_csv(path)
        assert header == ["eps", "h1_error"]
        assert [tuple(row) for row in parsed] == pairs


class TestRunSingle:
    def test_artifacts_and_fidelity(self, tmp_path):
        cfg = mild_config()
        code, data = run_single(cfg, tmp_path)
        assert code == 0 and data["converged"]
        on_disk = read_report_json(tmp_path / "report.json")
        assert on_disk == data
        assert on_disk["schema"] == 1
        assert on_disk["config"] == config_to_dict(cfg)
        assert on_disk["eps_history"][-1] == cfg.eps_min

        history = read_residual_history_csv(tmp_path / "residual_history.csv")
        assert [r["residual"] for r in history] == on_disk["residual_history"]
        assert [r["eps"] for r in history] == on_disk["eps_history"]

        grid = Grid(cfg.n)
        u = read_field_csv(tmp_path / "u.csv", grid)
        for name in ("y.csv", "p.csv"):
            read_field_csv(tmp_path / name, grid)
        assert sparsity_fraction(u) == on_disk["sparsity_fraction"]

    def test_degenerate_schedule_has_constant_eps(self, tmp_path):
        cfg = mild_config(method="newton", eps0=1.0, eps_min=1.0)
        code, data = run_single(cfg, tmp_path)
        assert code == 0
        assert set(data["eps_history"]) == {1.0}

    def test_deterministic_modulo_timing(self, tmp_path):
        cfg = mild_config(method="raspen-eps", s1=2, s2=2, overlap=2, threads=2)
        _, first = run_single(cfg, tmp_path / "a")
        _, second = run_single(cfg, tmp_path / "b")
        first.pop("timing")
        second.pop("timing")
        assert first == second
        text_a = (tmp_path / "a" / "u.csv").read_text()
        text_b = (tmp_path / "b" / "u.csv").read_text()
        assert text_a == text_b

    def test_solver_failure_exit_code(self, tmp_path):
        cfg = mild_config(max_outer=1, eps_min=1e-10)
        code, data = run_single(cfg, tmp_path)
        assert code == 3
        assert not data["converged"] and data["failure"]


class TestRunTable:
    def test_mono_protocol_layout(self, tmp_path):
        base = mild_config()
        code, rows = run_table("mono", base, tmp_path)
        assert code == 0 and len(rows) == 12
        assert [row.method for row in rows[:6]] == ["newton"] * 6
        assert [row.method for row in rows[6:]] == ["newton-eps"] * 6
        assert [row.eps_min for row in rows[:6]] == list(EPS_TABLE_MONO)
        assert read_benchmark_csv(tmp_path / "table_mono.csv") == rows
        # plain rows carry a degenerate schedule
        assert all(row.eps0 == row.eps_min for row in rows[:6])

    def test_mono_degenerate_cell_matches_run_single(self, tmp_path):
        base = mild_config()
        _, rows = run_table("mono", base, tmp_path / "table")
        cell = rows[0]
        cfg = with_updates(base, method="newton", eps_min=1.0, eps0=1.0,
                           linear_solver="auto")
        _, data = run_single(cfg, tmp_path / "single")
        assert cell.outer_iters == data["outer_iters"]
        assert cell.converged == data["converged"]

    def test_cell_failures_recorded_not_raised(self, tmp_path):
        base = mild_config(max_outer=2, eps_min=1e-10)
        code, rows = run_table("mono", base, tmp_path)
        assert code == 4
        bad = [row for row in rows if not row.converged]
        assert bad and all(row.failure for row in bad)
        assert (tmp_path / "table_mono.csv").exists()

    def test_raspen_table_runs(self, tmp_path):
        base = mild_config(s1=2, s2=2, overlap=2)
        code, rows = run_table("raspen", base, tmp_path)
        assert code == 0 and len(rows) == 8
        assert all(row.subdomains == "2x2" for row in rows)
        assert all(row.avg_inner_iters is not None for row in rows)
        assert all(row.avg_gmres_iters is not None for row in rows)

    def test_gmres_cells_cover_four_methods(self):
        cells = table_cells("gmres", mild_config())
        assert len(cells) == 24
        methods = [cfg.method for cfg in cells]
        assert methods.count("newton") == 6 and methods.count("newton-ras") == 6
        unprec = [cfg for cfg in cells if not cfg.uses_ras]
        assert all(cfg.linear_solver == "gmres" for cfg in unprec)
        ras = [cfg for cfg in cells if cfg.uses_ras]
        # default decomposition fills in when the base config has none
        assert all(cfg.subdomains == "2x2" for cfg in ras)

    def test_scaling_cells_fix_per_subdomain_size(self):
        cells = table_cells("scaling", mild_config(n=8))
        assert [(cfg.n, cfg.s1, cfg.s2) for cfg in cells] == [
            (8, 1, 1), (16, 2, 2), (24, 3, 3)]

    def test_sweep_cells_cover_parameter_grid(self):
        cells = table_cells("sweep", mild_config(eps_min=1e-10))
        assert len(cells) == 3 * (2 + 2 * 9)
        nus = {cfg.nu for cfg in cells}
        assert nus == {1e-8, 1e-4}
        eps_variants = [cfg for cfg in cells if cfg.uses_continuation]
        assert {cfg.gamma for cfg in eps_variants} == {0.5, 0.2, 0.1}
        assert {cfg.eps0 for cfg in eps_variants} == {1.0, 1e-3, 1e-5}

    def test_unknown_table_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown table"):
            run_table("weekly", mild_config(), tmp_path)


class TestStudies:
    def test_rate_study_outputs(self, tmp_path):
        rows, slope = rate_study(16, [1e-1, 1e-2, 1e-3], tmp_path)
        assert [eps for eps, _ in rows] == [1e-1, 1e-2, 1e-3]
        errors = [err for _, err in rows]
        assert all(a >= b for a, b in zip(errors, errors[1:]))
        assert np.isfinite(slope)
        header, parsed = read_pairs_csv(tmp_path / "rate.csv")
        assert header == ["eps", "h1_error"]
        assert [tuple(row) for row in parsed] == [tuple(row) for row in rows]
        summary = read_report_json(tmp_path / "rate.json")
        assert summary["slope"] == slope

    def test_rate_study_rejects_bad_reference(self, tmp_path):
        with pytest.raises(ValueError, match="eps_ref"):
            rate_study(16, [1e-1, 1e-2], tmp_path, eps_ref=1e-2)

    def test_identical_solves_have_zero_distance(self):
        # the reference comparison degenerates to zero for the same field
        from ocp.harness.experiments import _continuation_solve
        from ocp.system import construct_plateau_problem
        grid = Grid(12)
        spec, _ = construct_plateau_problem(grid)
        x1 = _continuation_solve(spec, 1e-2, 1e-10)
        x2 = _continuation_solve(spec, 1e-2, 1e-10)
        np.testing.assert_array_equal(x1, x2)

    def test_sparsity_study_outputs(self, tmp_path):
        rows = sparsity_study([1e-4, 1e-3], [1.0, 1e-11], 16, tmp_path)
        assert len(rows) == 4
        header, parsed = read_pairs_csv(tmp_path / "sparsity.csv")
        assert header == ["mu", "eps", "fraction"]
        assert [tuple(row) for row in parsed] == [tuple(row) for row in rows]
        assert (tmp_path / "u_mu0.0001_eps1.csv").exists()
        fractions = {(mu, eps): frac for mu, eps, frac in rows}
        assert all(0.0 <= frac <= 1.0 for frac in fractions.values())

    def test_sparsity_fraction_conventions(self):
        assert sparsity_fraction(np.zeros(5)) == 1.0
        u = np.array([1.0, 1e-9, -1e-9, 0.5, 0.0])
        assert sparsity_fraction(u) == pytest.approx(3 / 5)


class TestCli:
    def test_solve_exit_zero(self, tmp_path):
        code = main(["solve", "--method", "newton-eps", "--n", "12",
                     "--nu", "1e-2", "--k-tilde", "2", "--eps-min", "1e-3",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "report.json").exists()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("method = newton-eps\nn = 10\nnu = 1e-2\n"
                            "k_tilde = 2\neps_min = 1e-3\n")
        code = main(["solve", "--config", str(cfg_path), "--n", "12",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        data = read_report_json(tmp_path / "out" / "report.json")
        assert data["config"]["n"] == 12 and data["config"]["nu"] == 1e-2

    def test_config_error_exit_two(self, tmp_path, capsys):
        code = main(["solve", "--method", "newton-ras",
                     "--linear-solver", "direct", "--out", str(tmp_path)])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_solver_failure_exit_three(self, tmp_path):
        code = main(["solve", "--method", "newton", "--n", "12",
                     "--max-outer", "1", "--out", str(tmp_path)])
        assert code == 3

    def test_table_exit_codes(self, tmp_path):
        code = main(["table", "raspen", "--n", "12", "--nu", "1e-2",
                     "--k-tilde", "2", "--subdomains", "2x2",
                     "--out", str(tmp_path)])
        assert code == 0
        code = main(["table", "mono", "--n", "12", "--nu", "1e-2",
                     "--k-tilde", "2", "--max-outer", "2",
                     "--out", str(tmp_path / "partial")])
        assert code == 4

    def test_rate_subcommand(self, tmp_path, capsys):
        code = main(["rate", "--n", "12", "--eps-list", "1e-1,1e-2",
                     "--out", str(tmp_path)])
        assert code == 0
        assert "slope" in capsys.readouterr().out
        code = main(["rate", "--n", "12", "--eps-list", "1e-1",
                     "--eps-ref", "0.5", "--out", str(tmp_path)])
        assert code == 2

    def test_sparsity_subcommand(self, tmp_path):
        code = main(["sparsity", "--n", "12", "--mu-list", "1e-3",
                     "--eps-list", "1,1e-11", "--no-fields",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "sparsity.csv").exists()
