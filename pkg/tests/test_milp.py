"""MILP layer: solving, verification, validation."""

import numpy as np
import pytest

from dgplan.milp import (
    EQ,
    GE,
    LE,
    INFEASIBLE,
    LIMIT_REACHED,
    OPTIMAL,
    UNBOUNDED,
    MilpError,
    MilpSolution,
    ProblemBuilder,
    SolveError,
    SolveOptions,
    check_solution,
    solve,
)


def test_one_integer_variable():
    """min x subject to x >= 3, x integer."""
    b = ProblemBuilder("t1")
    x = b.add_var("x", 0.0, 10.0, obj=1.0, integer=True)
    b.add_row("floor", [(x, 1.0)], GE, 3.0)
    sol = solve(b.build())
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(3.0, abs=1e-9)
    assert sol.values[x] == pytest.approx(3.0, abs=1e-6)


def test_maximization_via_negation():
    """max x with x <= 2.5 integer: rounding lands on 2."""
    b = ProblemBuilder("t2")
    x = b.add_var("x", 0.0, 2.5, obj=-1.0, integer=True)
    sol = solve(b.build())
    assert sol.status == OPTIMAL
    assert sol.values[x] == pytest.approx(2.0, abs=1e-6)


def test_infeasible():
    b = ProblemBuilder("t3")
    x = b.add_var("x", 0.0, 10.0, obj=1.0)
    b.add_row("ge", [(x, 1.0)], GE, 1.0)
    b.add_row("le", [(x, 1.0)], LE, 0.0)
    sol = solve(b.build())
    assert sol.status == INFEASIBLE
    assert not sol.has_values


def test_unbounded():
    b = ProblemBuilder("t4")
    b.add_var("x", 0.0, np.inf, obj=-1.0)
    sol = solve(b.build())
    assert sol.status == UNBOUNDED


def test_objective_constant_carried():
    b = ProblemBuilder("t5")
    x = b.add_var("x", 1.0, 5.0, obj=2.0)
    b.add_obj_const(10.0)
    sol = solve(b.build())
    assert sol.objective_value == pytest.approx(12.0, abs=1e-9)


def test_time_limit_status():
    b = ProblemBuilder("t6")
    rng = np.random.default_rng(0)
    xs = [b.add_var(f"x{i}", 0.0, 1.0, obj=-float(rng.uniform(1, 2)), integer=True) for i in range(60)]
    b.add_row("pack", [(x, float(rng.uniform(1, 3))) for x in xs], LE, 20.0)
    sol = solve(b.build(), SolveOptions(time_limit=1e-4))
    assert sol.status in (OPTIMAL, LIMIT_REACHED)


def test_check_solution_feasible_is_empty():
    b = ProblemBuilder("c1")
    x = b.add_var("x", 0.0, 4.0, integer=True)
    y = b.add_var("y", 0.0, 4.0)
    b.add_row("sum", [(x, 1.0), (y, 1.0)], EQ, 3.0)
    problem = b.build()
    good = MilpSolution(OPTIMAL, 0.0, np.array([2.0, 1.0]))
    assert check_solution(problem, good) == []


def test_check_solution_flags_integrality():
    b = ProblemBuilder("c2")
    b.add_var("x", 0.0, 4.0, integer=True)
    problem = b.build()
    bad = MilpSolution(OPTIMAL, 0.0, np.array([2.5]))
    report = check_solution(problem, bad)
    assert [v.kind for v in report] == ["integrality"]
    assert report[0].residual == pytest.approx(0.5)


def test_check_solution_flags_equality_residual():
    b = ProblemBuilder("c3")
    x = b.add_var("x", 0.0, 4.0)
    b.add_row("eq", [(x, 1.0)], EQ, 3.0)
    problem = b.build()
    off = MilpSolution(OPTIMAL, 0.0, np.array([3.001]))
    report = check_solution(problem, off)
    assert len(report) == 1
    assert report[0].kind == "row" and report[0].name == "eq"
    assert report[0].residual == pytest.approx(1e-3, rel=1e-6)


def test_check_solution_flags_bounds():
    b = ProblemBuilder("c4")
    b.add_var("x", 0.0, 1.0)
    problem = b.build()
    report = check_solution(problem, MilpSolution(OPTIMAL, 0.0, np.array([1.5])))
    assert [v.kind for v in report] == ["upper-bound"]


def test_solve_rejects_bad_backend_output():
    class LyingBackend:
        name = "liar"

        def solve(self, problem, opts):
            return MilpSolution(OPTIMAL, 99.0, np.full(problem.n_vars, 99.0))

    b = ProblemBuilder("c5")
    x = b.add_var("x", 0.0, 1.0, obj=1.0)
    b.add_row("cap", [(x, 1.0)], LE, 1.0)
    with pytest.raises(SolveError, match="verification"):
        solve(b.build(), backend=LyingBackend())


def test_validation_errors():
    b = ProblemBuilder("v1")
    b.add_var("x", 0.0, 1.0)
    b.add_var("x", 0.0, 1.0)
    with pytest.raises(MilpError, match="duplicate variable"):
        b.build()

    b = ProblemBuilder("v2")
    x = b.add_var("x", 0.0, 1.0)
    b.add_row("r", [(x, float("nan"))], LE, 1.0)
    with pytest.raises(MilpError, match="non-finite"):
        b.build()

    b = ProblemBuilder("v3")
    b.add_var("x", 2.0, 1.0)
    with pytest.raises(MilpError, match="lower > upper"):
        b.build()

    b = ProblemBuilder("v4")
    x = b.add_var("x")
    with pytest.raises(MilpError, match="sense"):
        b.add_row("r", [(x, 1.0)], "<", 1.0)


def test_pure_lp_reports_zero_gap():
    b = ProblemBuilder("lp")
    x = b.add_var("x", 0.0, 9.0, obj=1.0)
    b.add_row("ge", [(x, 1.0)], GE, 4.0)
    sol = solve(b.build())
    assert sol.mip_gap == 0.0
    assert sol.solve_wall_time > 0.0
