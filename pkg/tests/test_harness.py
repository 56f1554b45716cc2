import hashlib

import numpy as np
import pytest

from fewnomials import cli
from fewnomials import harness as hz


def small_cfg(**overrides):
    doc = {
        "ensemble": {"kind": "random_simplex", "f": 2},
        "run": {"m": 1, "k": 1, "N": 30, "systems": 12, "seed": 4},
        "grid": {"lo": -8.0, "hi": 8.0, "bins": 80},
    }
    for table, vals in overrides.items():
        doc.setdefault(table, {}).update(vals)
    return hz.ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_validation_lists_all_problems():
    with pytest.raises(hz.ConfigError) as err:
        hz.ExperimentConfig.from_dict(
            {
                "ensemble": {"kind": "nope", "f": 0},
                "run": {"m": 1, "k": 3, "N": -2, "systems": 0},
            }
        )
    text = str(err.value)
    for fragment in ("ensemble.kind", "run.k", "ensemble.f", "run.N", "run.systems"):
        assert fragment in text


def test_config_requires_ensemble_params():
    with pytest.raises(hz.ConfigError):
        hz.ExperimentConfig.from_dict(
            {"ensemble": {"kind": "fixed_spectrum"}, "run": {"m": 1, "k": 1, "N": 5}}
        )
    with pytest.raises(hz.ConfigError):
        hz.ExperimentConfig.from_dict(
            {"ensemble": {"kind": "dilated_random", "f": 2}, "run": {"m": 1, "k": 1, "N": 5}}
        )


def test_config_n_list_must_increase():
    with pytest.raises(hz.ConfigError):
        hz.ExperimentConfig.from_dict(
            {
                "ensemble": {"kind": "random_simplex", "f": 2},
                "run": {"m": 1, "k": 1, "N_list": [10, 10], "systems": 3},
            }
        )


def test_config_echo_round_trip(tmp_path):
    cfg = small_cfg()
    echo = cfg.echo_toml()
    path = tmp_path / "echo.toml"
    path.write_text(echo)
    cfg2 = hz.ExperimentConfig.from_toml(path)
    assert cfg2 == cfg


def test_config_from_toml(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(
        """
[ensemble]
kind = "kac"
f = 4

[run]
m = 1
k = 1
N = 50
systems = 7
seed = 3
"""
    )
    cfg = hz.ExperimentConfig.from_toml(path)
    assert cfg.kind == "kac" and cfg.f == 4 and cfg.N == 50


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def test_run_experiment_deterministic():
    cfg = small_cfg()
    a = hz.run_experiment(cfg)
    b = hz.run_experiment(cfg)
    assert np.array_equal(a.empirical.masses, b.empirical.masses)
    assert a.metrics["mean_normalized_count"] == b.metrics["mean_normalized_count"]


def test_run_experiment_thread_count_invariant():
    cfg = small_cfg()
    serial = hz.run_experiment(cfg)
    cfg.threads = 2
    pooled = hz.run_experiment(cfg)
    assert np.array_equal(serial.empirical.masses, pooled.empirical.masses)


def test_mass_consistency_theory_vs_empirics():
    cfg = small_cfg(run={"systems": 40, "N": 60, "seed": 11})
    rep = hz.run_experiment(cfg)
    gap = abs(rep.metrics["theory_total"] - rep.metrics["mean_normalized_count"])
    # 3 SE plus a grid/finite-N allowance
    assert gap <= 3 * rep.metrics["se_normalized_count"] + 0.05


def test_fixed_spectrum_run_and_corners():
    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "fixed_spectrum", "points": [[0], [1]], "p": 1},
            "run": {"m": 1, "k": 1, "N": 80, "systems": 25, "seed": 3},
            "grid": {"bins": 100},
        }
    )
    rep = hz.run_experiment(cfg)
    assert rep.corners == [(0.0, 1.0)]
    assert rep.metrics["mean_normalized_count"] == pytest.approx(1.0)
    assert rep.metrics["corner_total"] == pytest.approx(1.0)


def test_full_spectrum_dispatches_to_fs_theory():
    cfg = small_cfg(ensemble={"f": 10_000}, run={"N": 25, "systems": 10})
    fld, corners = hz.theory_field(cfg, 25)
    assert fld.kind == "fubini_study"
    rep = hz.run_experiment(cfg)
    assert rep.metrics["mean_normalized_count"] == pytest.approx(1.0)
    assert abs(rep.metrics["theory_total"] - 1.0) < 2e-2


def test_full_spectrum_tv_decreases_with_degree():
    tvs = []
    for N in (25, 100):
        cfg = small_cfg(ensemble={"f": 10_000}, run={"N": N, "systems": 40, "seed": 5})
        rep = hz.run_experiment(cfg)
        tvs.append(rep.metrics["tv"])
    assert tvs[1] < tvs[0]


def test_kac_experiment_counts():
    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "kac", "f": 3},
            "run": {"m": 1, "k": 1, "N": 120, "systems": 40, "seed": 9},
            "grid": {"bins": 200},
        }
    )
    rep = hz.run_experiment(cfg)
    assert rep.corners == [(0.0, pytest.approx(0.5))]
    assert abs(rep.metrics["mean_normalized_count"] - 0.5) < 0.06


def test_dilated_random_exact_subset_average():
    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "dilated_random", "f": 2, "vertices": [[0], [3]], "p": 3},
            "run": {"m": 1, "k": 1, "N": 30, "systems": 12, "seed": 8},
            "grid": {"bins": 100},
        }
    )
    rep = hz.run_experiment(cfg)
    # mean pairwise exponent range over {0,1,2,3}, in simplex units: 10/18
    assert abs(rep.metrics["theory_total"] - 10 / 18) < 1e-6


def test_random_polytope_interval():
    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "random_polytope", "f": 3, "vertices": [[1], [2]], "p": 2},
            "run": {"m": 1, "k": 1, "N": 50, "systems": 10, "seed": 13},
            "grid": {"bins": 100},
            "solver": {"mc_tuples": 30000},
        }
    )
    rep = hz.run_experiment(cfg)
    # range of 3 uniforms on an interval of simplex-length 1/2: (1/2)(2/4)
    assert abs(rep.metrics["theory_total"] - 0.25) < 0.01


def test_mixed_fewnomial_numbers_m2():
    import math

    from fewnomials import potentials as pot

    # bilinear oracle: mean mixed area of independent hulls (2- and 4-tuples)
    def hull(pts):
        pts = sorted(map(tuple, pts))
        if len(pts) <= 2:
            return pts

        def half(seq):
            out = []
            for p in seq:
                while len(out) >= 2 and (
                    (out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                    - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0])
                ) <= 0:
                    out.pop()
                out.append(p)
            return out

        return half(pts)[:-1] + half(reversed(pts))[:-1]

    def area(poly):
        if len(poly) < 3:
            return 0.0
        s = 0.0
        for (x1, y1), (x2, y2) in zip(poly, poly[1:] + poly[:1]):
            s += x1 * y2 - x2 * y1
        return abs(s) / 2.0

    rng = np.random.default_rng(3131)
    n = 8000
    a = pot.sample_simplex(n * 2, 2, rng).reshape(n, 2, 2)
    b = pot.sample_simplex(n * 4, 2, rng).reshape(n, 4, 2)
    mv = np.empty(n)
    for i in range(n):
        A, B = hull(a[i]), hull(b[i])
        sums = [(pa[0] + pb[0], pa[1] + pb[1]) for pa in A for pb in B]
        mv[i] = area(hull(sums)) - area(A) - area(B)
    oracle = float(mv.mean())
    oracle_se = float(mv.std() / math.sqrt(n))

    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "random_simplex", "f": 2, "f_list": [2, 4]},
            "run": {"m": 2, "k": 2, "N": 18, "systems": 25, "seed": 777},
            "grid": {"lo": -8.0, "hi": 8.0, "bins": 64},
            "solver": {"mc_tuples": 40000},
        }
    )
    rep = hz.run_experiment(cfg)
    assert abs(rep.metrics["theory_total"] - oracle) <= 0.01 + 3 * oracle_se
    gap = abs(rep.metrics["mean_normalized_count"] - rep.metrics["theory_total"])
    assert gap <= 3 * rep.metrics["se_normalized_count"] + 0.03


def test_f_list_validation():
    with pytest.raises(hz.ConfigError):
        hz.ExperimentConfig.from_dict(
            {
                "ensemble": {"kind": "random_simplex", "f": 2, "f_list": [2, 3, 4]},
                "run": {"m": 2, "k": 2, "N": 10, "systems": 3},
            }
        )
    with pytest.raises(hz.ConfigError):
        hz.ExperimentConfig.from_dict(
            {
                "ensemble": {"kind": "fixed_spectrum", "points": [[0], [1]], "f_list": [2]},
                "run": {"m": 1, "k": 1, "N": 10, "systems": 3},
            }
        )


def test_solver_failure_rate_breach_raises(monkeypatch):
    cfg = small_cfg()
    from fewnomials import solver as sol

    def boom(system, **kwargs):
        raise sol.SolverFailure("forced")

    monkeypatch.setattr(sol, "solve_system", boom)
    with pytest.raises(sol.SolverFailureRateError):
        hz.run_experiment(cfg)


# ---------------------------------------------------------------------------
# kernel diagnostics
# ---------------------------------------------------------------------------


def test_stirling_envelopes_small():
    out = hz.stirling_envelope_check(m_values=(1, 2), N_values=(20, 100), rho_count=3)
    assert out["passed"], out


def test_kernel_convergence_small():
    out = hz.kernel_convergence_check(N_values=(25, 50, 100))
    assert out["monotone"] and out["within_bound"], out


def test_convergence_study_table_and_determinism():
    cfg = hz.ExperimentConfig.from_dict(
        {
            "ensemble": {"kind": "fixed_spectrum", "points": [[0], [1]], "p": 1},
            "run": {"m": 1, "k": 1, "N_list": [20, 40, 80], "systems": 10, "seed": 3},
            "grid": {"bins": 60},
        }
    )
    rep = hz.convergence_study(cfg)
    errs = [row["potential_sup_error"] for row in rep.per_n]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert rep.metrics["fit_exponent"] < -0.5
    rep2 = hz.convergence_study(cfg)
    assert [row["potential_sup_error"] for row in rep2.per_n] == errs


def test_convergence_requires_three_points():
    cfg = small_cfg()
    cfg.N_list = (10, 20)
    cfg.N = None
    with pytest.raises(hz.ConfigError):
        hz.convergence_study(cfg)


# ---------------------------------------------------------------------------
# reports and CLI
# ---------------------------------------------------------------------------


def test_emit_report_files_and_round_trip(tmp_path):
    cfg = small_cfg(output={"dir": str(tmp_path)})
    rep = hz.run_experiment(cfg)
    paths = hz.emit_report(rep, tmp_path)
    names = {p.name for p in paths}
    assert names == {
        "density.csv",
        "empirical.csv",
        "metrics.csv",
        "config_echo.toml",
        "summary.txt",
        "plot.gp",
    }
    rows = (tmp_path / "density.csv").read_text().strip().splitlines()
    vals = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    assert np.array_equal(vals, rep.theory.values.reshape(-1))
    summary = (tmp_path / "summary.txt").read_text()
    assert "seed: 4" in summary and "commit: <unknown>" in summary and "wall_time" in summary


def test_emit_report_byte_determinism(tmp_path):
    cfg = small_cfg()
    d1, d2 = tmp_path / "a", tmp_path / "b"
    p1 = hz.emit_report(hz.run_experiment(cfg), d1)
    p2 = hz.emit_report(hz.run_experiment(cfg), d2)
    for a, b in zip(p1, p2):
        if a.name == "summary.txt":  # carries wall time / timestamp
            continue
        assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(b.read_bytes()).hexdigest()


def test_dump_samples(tmp_path):
    cfg = small_cfg(run={"systems": 4})
    paths = hz.dump_samples(cfg, tmp_path)
    systems_txt = paths[0].read_text()
    assert systems_txt.count("system 0 poly 0:") == 1
    from fewnomials.lattice import spectrum_from_record

    line = systems_txt.splitlines()[0]
    record = line.split(": ", 1)[1].split(" | ")[0]
    spec = spectrum_from_record(record)
    assert spec.fewnomial_number == 2
    zeros = paths[1].read_text().splitlines()
    assert zeros[0].startswith("system,re,im,rho,theta")


def test_cli_compare_and_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "exp.toml"
    cfg_path.write_text(
        """
[ensemble]
kind = "random_simplex"
f = 2

[run]
m = 1
k = 1
N = 20
systems = 5
seed = 2

[grid]
bins = 40

[output]
dir = "%s"
"""
        % (tmp_path / "out")
    )
    assert cli.main(["compare", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "out" / "density.csv").exists()
    assert cli.main(["density", "--config", str(cfg_path), "--out", str(tmp_path / "out2")]) == 0
    assert (tmp_path / "out2" / "density.csv").exists()
    assert cli.main(["sample", "--config", str(cfg_path), "--out", str(tmp_path / "out3")]) == 0
    assert (tmp_path / "out3" / "zeros.csv").exists()


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[ensemble]\nkind = 'nope'\n\n[run]\nm = 1\nk = 1\nN = 5\n")
    assert cli.main(["compare", "--config", str(bad)]) == 2
    assert cli.main(["compare", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_seed_override_changes_output(tmp_path):
    cfg_path = tmp_path / "exp.toml"
    cfg_path.write_text(
        """
[ensemble]
kind = "random_simplex"
f = 2

[run]
m = 1
k = 1
N = 20
systems = 5
seed = 2

[grid]
bins = 40
"""
    )
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli.main(["compare", "--config", str(cfg_path), "--out", str(out1), "--seed", "99"]) == 0
    assert cli.main(["compare", "--config", str(cfg_path), "--out", str(out2), "--seed", "2"]) == 0
    a = (out1 / "empirical.csv").read_text()
    b = (out2 / "empirical.csv").read_text()
    assert a != b
