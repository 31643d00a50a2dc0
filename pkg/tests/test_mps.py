"""MPS export, the independent reader round-trip, and the external-command
backend (file-exchange adapter)."""

import json
import math
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

import _mps_reader

from dgplan.grid_case import load_case, bundled_case_path
from dgplan.milp import (
    GE,
    LE,
    BackendError,
    ExternalCommandBackend,
    ProblemBuilder,
    ScipyHighsBackend,
    SolveOptions,
    export_mps,
    parse_solution_file,
    solve,
)
from dgplan.planner import build_deterministic_equivalent
from dgplan.scenarios import Scenario, ScenarioSet

TESTS_DIR = Path(__file__).parent


def _one_var_problem():
    b = ProblemBuilder("one")
    x = b.add_var("x", 0.0, 10.0, obj=1.0, integer=True)
    b.add_row("floor", [(x, 1.0)], GE, 3.0)
    return b.build()


def _planner_problem(case4):
    scen = ScenarioSet(
        (
            Scenario(0, 0.6, 0.3, 0.9, 0.5, 4380.0, 0.2),
            Scenario(1, 0.0, 0.7, 0.6, 0.5, 4380.0, 0.2),
        ),
        source_hours=2,
    )
    model = build_deterministic_equivalent(
        case4.network, case4.catalog, case4.econ, scen
    )
    return model.problem


def test_round_trip_one_var(tmp_path):
    problem = _one_var_problem()
    path = tmp_path / "one.mps"
    export_mps(problem, path)
    m = _mps_reader.read_mps(path)
    assert m.var_order == ["x"]
    assert m.integer == {"x"}
    assert m.bounds("x") == (0.0, 10.0)
    assert m.row_sense == {"floor": "G"}
    assert m.rhs == {"floor": 3.0}
    assert m.obj == {"x": 1.0}
    assert (tmp_path / "one.mps.names.json").exists()


def test_round_trip_full_planner_matrix(tmp_path, case4):
    """Writer and independent reader agree on every coefficient."""
    problem = _planner_problem(case4)
    path = tmp_path / "plan.mps"
    name_map = export_mps(problem, path)
    m = _mps_reader.read_mps(path)
    assert len(m.var_order) == problem.n_vars
    assert len(m.row_order) == problem.n_rows
    vmap = name_map["variables"]
    rmap = name_map["rows"]
    dense = problem.a.toarray()
    for j, var in enumerate(problem.var_names):
        got = m.cols[vmap[var]]
        for i, row in enumerate(problem.row_names):
            assert got.get(rmap[row], 0.0) == dense[i, j]
        lo, hi = m.bounds(vmap[var])
        assert lo == problem.lower[j]
        assert hi == problem.upper[j] or (math.isinf(hi) and math.isinf(problem.upper[j]))
        assert (vmap[var] in m.integer) == bool(problem.is_integer[j])
    for i, row in enumerate(problem.row_names):
        assert m.rhs.get(rmap[row], 0.0) == problem.rhs[i]


def test_backends_agree_via_reader(tmp_path, case4):
    """Independent reader + scipy re-solve reproduces the in-process optimum."""
    for problem in (_one_var_problem(), _planner_problem(case4)):
        path = tmp_path / f"{problem.name}.mps"
        export_mps(problem, path)
        m = _mps_reader.read_mps(path)
        obj_reader, _ = _mps_reader.solve_with_scipy(m)
        direct = solve(problem, SolveOptions(mip_gap_target=1e-9))
        assert obj_reader == pytest.approx(direct.objective_value, rel=1e-6)


def test_empty_rows_section(tmp_path):
    b = ProblemBuilder("norow")
    b.add_var("x", 1.0, 2.0, obj=3.0)
    problem = b.build()
    path = tmp_path / "norow.mps"
    export_mps(problem, path)
    m = _mps_reader.read_mps(path)
    assert m.row_order == []
    obj, values = _mps_reader.solve_with_scipy(m)
    assert obj == pytest.approx(3.0)


def test_duplicate_long_names_uniquified(tmp_path):
    b = ProblemBuilder("names")
    long = "v" * 80
    b.add_var(long + "_alpha", 0.0, 1.0)
    b.add_var(long + "_beta", 0.0, 1.0)
    b.add_var("weird name!@#", 0.0, 1.0)
    problem = b.build()
    name_map = export_mps(problem, tmp_path / "names.mps")
    toks = list(name_map["variables"].values())
    assert len(set(toks)) == 3
    assert all(len(t) <= 48 for t in toks)
    assert all(" " not in t for t in toks)
    # bijective: reader sees exactly these columns
    m = _mps_reader.read_mps(tmp_path / "names.mps")
    assert sorted(m.var_order) == sorted(toks)


def test_objective_constant_round_trip(tmp_path):
    b = ProblemBuilder("const")
    b.add_var("x", 2.0, 2.0, obj=1.0)
    b.add_obj_const(5.0)
    problem = b.build()
    export_mps(problem, tmp_path / "const.mps")
    m = _mps_reader.read_mps(tmp_path / "const.mps")
    obj, _ = _mps_reader.solve_with_scipy(m)
    assert obj == pytest.approx(7.0)


# ---------------------------------------------------------------------------
# External-command adapter

FAKE_SOLVER = textwrap.dedent(
    """
    import sys
    sys.path.insert(0, {tests_dir!r})
    import _mps_reader

    mps, sol = sys.argv[1], sys.argv[2]
    model = _mps_reader.read_mps(mps)
    obj, values = _mps_reader.solve_with_scipy(model)
    with open(sol, "w") as fh:
        fh.write("# objective %r\\n" % obj)
        for name, val in values.items():
            fh.write("%s %r\\n" % (name, val))
    """
)


@pytest.fixture()
def fake_solver(tmp_path):
    script = tmp_path / "fake_solver.py"
    script.write_text(FAKE_SOLVER.format(tests_dir=str(TESTS_DIR)))
    return f"{sys.executable} {script} {{mps}} {{sol}}"


def test_external_backend_end_to_end(fake_solver, case4):
    problem = _planner_problem(case4)
    external = solve(problem, backend=ExternalCommandBackend(fake_solver))
    internal = solve(problem, backend=ScipyHighsBackend())
    assert external.status == "optimal"
    assert external.objective_value == pytest.approx(internal.objective_value, rel=1e-6)


def test_external_backend_template_validation():
    with pytest.raises(BackendError, match="placeholders"):
        ExternalCommandBackend("solver model.mps")


def test_external_backend_failure_paths(tmp_path):
    problem = _one_var_problem()
    crash = tmp_path / "crash.py"
    crash.write_text("import sys; sys.exit(3)\n")
    backend = ExternalCommandBackend(f"{sys.executable} {crash} {{mps}} {{sol}}")
    with pytest.raises(BackendError, match="exited 3"):
        backend.solve(problem, SolveOptions())

    silent = tmp_path / "silent.py"
    silent.write_text("pass\n")
    backend = ExternalCommandBackend(f"{sys.executable} {silent} {{mps}} {{sol}}")
    with pytest.raises(BackendError, match="no solution file"):
        backend.solve(problem, SolveOptions())

    missing = ExternalCommandBackend("definitely-not-a-solver {mps} {sol}")
    with pytest.raises(BackendError, match="not found"):
        missing.solve(problem, SolveOptions())


def test_solution_file_parser(tmp_path):
    problem = _one_var_problem()
    good = tmp_path / "good.sol"
    good.write_text("# comment\nx 3.0\n")
    x = parse_solution_file(good, problem)
    assert x.tolist() == [3.0]

    bad = tmp_path / "bad.sol"
    bad.write_text("x 3.0 extra\n")
    with pytest.raises(BackendError, match="expected"):
        parse_solution_file(bad, problem)

    unknown = tmp_path / "unknown.sol"
    unknown.write_text("y 1.0\n")
    with pytest.raises(BackendError, match="unknown variable"):
        parse_solution_file(unknown, problem)
