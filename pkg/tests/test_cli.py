import csv
from pathlib import Path

import numpy as np
import pytest

from degenlab.cli import compare_runs, main
from degenlab.config import ConfigError, load_config


def write_cfg(tmp_path, name="run.cfg", **sections):
    lines = []
    for sec, kv in sections.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in kv.items()]
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return str(p)


BASE = {
    "problem": {"case": "radial_homogeneous", "d": 2, "n": 2, "a": -1.5},
    "grid": {"nodes": 33},
}


def test_list_cases_exit_zero(capsys):
    assert main(["list-cases"]) == 0
    out = capsys.readouterr().out
    assert "radial_homogeneous" in out and "counterexample_F" in out


def test_solve_writes_reports_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path, **BASE)
    out = tmp_path / "run"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "manifest.txt").exists()
    assert (out / "solution.csv").exists()
    assert (out / "report.csv").exists()
    man = (out / "manifest.txt").read_text()
    assert "status: ok" in man
    assert "problem.a: -1.5" in man
    rows = list(csv.reader((out / "solution.csv").read_text().splitlines()))
    assert rows[0] == ["node", "z0", "z1", "value"]
    assert len(rows) == 33 * 33 + 1


def test_rerun_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, **BASE)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["solve", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["solve", "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "solution.csv").read_bytes() == (out2 / "solution.csv").read_bytes()
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()


def test_standing_assumption_violation_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, problem={"a": -2.5, "n": 2})
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "bad")])
    assert rc == 2
    assert "a+n must lie in (0,2)" in capsys.readouterr().err
    # manifest still written on failure
    assert (tmp_path / "bad" / "manifest.txt").exists()


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, problem={"csae": "radial_homogeneous"})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "bad2")]) == 2
    assert "csae" in capsys.readouterr().err


def test_solver_failure_exits_3(tmp_path):
    cfg = write_cfg(
        tmp_path,
        problem=BASE["problem"],
        grid={"nodes": 33},
        solver={"maxit": 2},
    )
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "sf")])
    assert rc == 3
    man = (tmp_path / "sf" / "manifest.txt").read_text()
    assert "solver_error" in man


def test_compare_identical_and_perturbed(tmp_path, capsys):
    cfg = write_cfg(tmp_path, **BASE)
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    main(["solve", "--config", cfg, "--out", str(out1)])
    main(["solve", "--config", cfg, "--out", str(out2)])
    assert main(["compare", str(out1), str(out2)]) == 0

    # inject a perturbation: regression must be flagged with exit 1
    sol = out2 / "solution.csv"
    rows = sol.read_text().splitlines()
    cols = rows[1].split(",")
    cols[-1] = repr(float(cols[-1]) + 1e-3)
    rows[1] = ",".join(cols)
    sol.write_text("\n".join(rows) + "\n")
    assert main(["compare", str(out1), str(out2)]) == 1
    assert "REGRESSION" in capsys.readouterr().out


def test_compare_rejects_subcommand_mismatch(tmp_path):
    cfg = write_cfg(tmp_path, **BASE)
    out1 = tmp_path / "m1"
    out2 = tmp_path / "m2"
    main(["solve", "--config", cfg, "--out", str(out1)])
    cfg2 = write_cfg(
        tmp_path, name="freq.cfg",
        problem=BASE["problem"], grid={"nodes": 65},
        experiment={"radii_start": 0.3, "radii_stop": 0.45},
    )
    main(["frequency", "--config", cfg2, "--out", str(out2)])
    assert main(["compare", str(out1), str(out2)]) == 2


def test_rates_exponent_stable_solved_vs_exact(solve_cache):
    # solver error moves the fitted exponent by well under the 0.1 band
    from degenlab.rates import holder_exponent_fit

    case, res = solve_cache("radial_homogeneous", 2, 2, -0.5, 257)
    fit_solved = holder_exponent_fit(res.u, res.grid)
    fit_exact = holder_exponent_fit(case.u(res.grid.coords), res.grid)
    assert abs(fit_solved.exponent - fit_exact.exponent) <= 0.1


def test_grid_nodes_override(tmp_path):
    cfg = write_cfg(tmp_path, **BASE)
    out = tmp_path / "ov"
    assert main(["solve", "--config", cfg, "--out", str(out), "--grid-nodes", "17"]) == 0
    rows = (out / "solution.csv").read_text().splitlines()
    assert len(rows) == 17 * 17 + 1
    man = (out / "manifest.txt").read_text()
    assert "grid.nodes: 17" in man


def test_config_defaults_and_resolved_echo(tmp_path):
    cfg = load_config(write_cfg(tmp_path, **BASE))
    items = dict(cfg.resolved_items())
    assert items["solver.tol"] == "1e-10"
    assert items["quadrature.grading"] == "4"
    assert items["problem.case"] == "radial_homogeneous"


def test_missing_config_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.cfg"))
    assert main(["solve", "--out", str(tmp_path / "x")]) == 2
