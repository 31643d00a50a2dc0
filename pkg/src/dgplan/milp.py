"""Solver-agnostic mixed-integer linear programming layer.

A `MilpProblem` is a minimization-only canonical form: variables with
bounds and integrality flags, sparse rows with a sense and a right-hand
side, and a linear objective plus constant. Problems are built through
`ProblemBuilder`, solved through a backend, and every accepted solution
is independently re-verified with `check_solution` (pure arithmetic over
the problem data, no solver involved).

Two backends ship:

* `ScipyHighsBackend` - in-process HiGHS via scipy.optimize.milp.
* `ExternalCommandBackend` - file exchange: write free-format MPS, invoke
  a configurable command, parse a ``<name> <value>`` solution file.

Tolerances: row feasibility 1e-7 on normalized rows, integrality 1e-6,
default relative MIP gap target 1e-6, default time limit 600 s.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp as _scipy_milp

FEASIBILITY_TOL = 1e-7   # normalized row residuals
BOUND_TOL = 1e-6         # variable bounds; HiGHS enforces its 1e-7 on the scaled problem
INTEGRALITY_TOL = 1e-6

LE, EQ, GE = "<=", "=", ">="
_SENSE_CODE = {LE: -1, EQ: 0, GE: 1}
_SENSE_STR = {-1: LE, 0: EQ, 1: GE}


class MilpError(Exception):
    pass


class BackendError(MilpError):
    """Backend unavailable, crashed, or produced an unusable artifact."""


class SolveError(MilpError):
    """A solution was returned but failed independent verification."""


@dataclass
class SolveOptions:
    mip_gap_target: float = 1e-6
    time_limit: float = 600.0
    threads: Optional[int] = None  # advisory; the scipy backend is single-session


@dataclass(frozen=True)
class MilpProblem:
    name: str
    var_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    is_integer: np.ndarray
    obj: np.ndarray
    obj_const: float
    a: sp.csr_matrix          # (n_rows, n_vars)
    sense: np.ndarray         # int8: -1 is <=, 0 is =, 1 is >=
    rhs: np.ndarray
    row_names: tuple[str, ...]

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def sense_str(self, i: int) -> str:
        return _SENSE_STR[int(self.sense[i])]

    def validate(self) -> "MilpProblem":
        if len(set(self.var_names)) != self.n_vars:
            raise MilpError("duplicate variable names")
        if len(set(self.row_names)) != self.n_rows:
            raise MilpError("duplicate row names")
        for arr, label in ((self.obj, "objective"), (self.rhs, "rhs"), (self.a.data, "matrix")):
            if arr.size and not np.isfinite(arr).all():
                raise MilpError(f"non-finite coefficient in {label}")
        if np.isnan(self.lower).any() or np.isnan(self.upper).any():
            raise MilpError("NaN variable bound")
        bad = np.flatnonzero(self.lower > self.upper)
        if bad.size:
            raise MilpError(f"lower > upper for variable {self.var_names[bad[0]]!r}")
        if self.a.shape != (self.n_rows, self.n_vars):
            raise MilpError("matrix shape mismatch")
        return self

    def row_scales(self) -> np.ndarray:
        """max(1, |rhs|, max |coef|) per row, for normalized residuals."""
        scales = np.maximum(1.0, np.abs(self.rhs))
        if self.a.nnz:
            absd = np.abs(self.a.data)
            nonempty = np.flatnonzero(np.diff(self.a.indptr) > 0)
            if nonempty.size:
                rowmax = np.maximum.reduceat(absd, self.a.indptr[nonempty])
                scales[nonempty] = np.maximum(scales[nonempty], rowmax)
        return scales


class ProblemBuilder:
    """Incremental construction of a MilpProblem (triplet accumulation)."""

    def __init__(self, name: str = "problem"):
        self.name = name
        self._var_names: list[str] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._integer: list[bool] = []
        self._obj: dict[int, float] = {}
        self._obj_const = 0.0
        self._row_names: list[str] = []
        self._sense: list[int] = []
        self._rhs: list[float] = []
        self._ai: list[int] = []
        self._aj: list[int] = []
        self._av: list[float] = []

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = math.inf,
        obj: float = 0.0,
        integer: bool = False,
    ) -> int:
        idx = len(self._var_names)
        self._var_names.append(name)
        self._lower.append(lb)
        self._upper.append(ub)
        self._integer.append(integer)
        if obj != 0.0:
            self._obj[idx] = obj
        return idx

    def add_obj(self, idx: int, coef: float) -> None:
        self._obj[idx] = self._obj.get(idx, 0.0) + coef

    def add_obj_const(self, value: float) -> None:
        self._obj_const += value

    def add_row(self, name: str, terms: Sequence[tuple[int, float]], sense: str, rhs: float) -> None:
        if sense not in _SENSE_CODE:
            raise MilpError(f"bad sense {sense!r}")
        row = len(self._row_names)
        self._row_names.append(name)
        self._sense.append(_SENSE_CODE[sense])
        self._rhs.append(rhs)
        for j, v in terms:
            if v != 0.0:
                self._ai.append(row)
                self._aj.append(j)
                self._av.append(v)

    @property
    def n_vars(self) -> int:
        return len(self._var_names)

    def build(self) -> MilpProblem:
        n_vars = len(self._var_names)
        n_rows = len(self._row_names)
        obj = np.zeros(n_vars)
        for j, v in self._obj.items():
            obj[j] = v
        a = sp.coo_matrix(
            (
                np.asarray(self._av, dtype=np.float64),
                (np.asarray(self._ai, dtype=np.int64), np.asarray(self._aj, dtype=np.int64)),
            ),
            shape=(n_rows, n_vars),
        ).tocsr()
        a.sum_duplicates()
        problem = MilpProblem(
            name=self.name,
            var_names=tuple(self._var_names),
            lower=np.asarray(self._lower, dtype=np.float64),
            upper=np.asarray(self._upper, dtype=np.float64),
            is_integer=np.asarray(self._integer, dtype=bool),
            obj=obj,
            obj_const=self._obj_const,
            a=a,
            sense=np.asarray(self._sense, dtype=np.int8),
            rhs=np.asarray(self._rhs, dtype=np.float64),
            row_names=tuple(self._row_names),
        )
        return problem.validate()


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT_REACHED = "limit-reached"


@dataclass
class MilpSolution:
    status: str
    objective_value: Optional[float] = None
    values: Optional[np.ndarray] = None
    solve_wall_time: float = 0.0
    mip_gap: Optional[float] = None
    message: str = ""

    @property
    def has_values(self) -> bool:
        return self.values is not None


@dataclass(frozen=True)
class Violation:
    kind: str      # row | lower-bound | upper-bound | integrality
    name: str
    residual: float

    def __str__(self) -> str:
        return f"{self.kind} {self.name}: residual {self.residual:.3e}"


def check_solution(
    problem: MilpProblem,
    solution: MilpSolution,
    tol: float = FEASIBILITY_TOL,
    bound_tol: float = BOUND_TOL,
    int_tol: float = INTEGRALITY_TOL,
) -> list[Violation]:
    """Independent feasibility report: every row/bound/integrality violation
    whose normalized residual exceeds tol. Empty report == feasible."""
    if not solution.has_values:
        raise MilpError("solution has no values to check")
    x = solution.values
    out: list[Violation] = []

    lb_res = problem.lower - x
    ub_res = x - problem.upper
    with np.errstate(invalid="ignore"):
        for i in np.flatnonzero(lb_res > bound_tol * np.maximum(1.0, np.abs(problem.lower))):
            out.append(Violation("lower-bound", problem.var_names[i], float(lb_res[i])))
        for i in np.flatnonzero(ub_res > bound_tol * np.maximum(1.0, np.abs(problem.upper))):
            out.append(Violation("upper-bound", problem.var_names[i], float(ub_res[i])))

    frac = np.abs(x - np.round(x))
    for i in np.flatnonzero(problem.is_integer & (frac > int_tol)):
        out.append(Violation("integrality", problem.var_names[i], float(frac[i])))

    if problem.n_rows:
        r = problem.a @ x - problem.rhs
        viol = np.where(problem.sense == -1, r, np.where(problem.sense == 1, -r, np.abs(r)))
        for i in np.flatnonzero(viol > tol * problem.row_scales()):
            out.append(Violation("row", problem.row_names[i], float(viol[i])))
    return out


class ScipyHighsBackend:
    """In-process HiGHS through scipy.optimize.milp."""

    name = "scipy-highs"

    def solve(self, problem: MilpProblem, opts: SolveOptions) -> MilpSolution:
        problem.validate()
        constraints = []
        if problem.n_rows:
            lb = np.where(problem.sense == -1, -np.inf, problem.rhs)
            ub = np.where(problem.sense == 1, np.inf, problem.rhs)
            constraints = [LinearConstraint(problem.a, lb, ub)]
        options = {
            "mip_rel_gap": opts.mip_gap_target,
            "time_limit": float(opts.time_limit),
            "presolve": True,
        }
        t0 = time.perf_counter()
        res = _scipy_milp(
            c=problem.obj,
            constraints=constraints,
            integrality=problem.is_integer.astype(np.uint8),
            bounds=Bounds(problem.lower, problem.upper),
            options=options,
        )
        wall = time.perf_counter() - t0
        # scipy status codes: 0 optimal, 1 limits, 2 infeasible, 3 unbounded
        if res.status == 0:
            status = OPTIMAL
        elif res.status == 1:
            status = LIMIT_REACHED
        elif res.status == 2:
            return MilpSolution(INFEASIBLE, solve_wall_time=wall, message=res.message)
        elif res.status == 3:
            return MilpSolution(UNBOUNDED, solve_wall_time=wall, message=res.message)
        else:
            raise BackendError(f"HiGHS failed: {res.message}")
        if res.x is None:
            if status == LIMIT_REACHED:
                return MilpSolution(LIMIT_REACHED, solve_wall_time=wall, message=res.message)
            raise BackendError(f"HiGHS returned no point: {res.message}")
        gap = getattr(res, "mip_gap", None)
        if gap is None and problem.is_integer.any():
            dual = getattr(res, "mip_dual_bound", None)
            if dual is not None:
                gap = abs(res.fun - dual) / max(1.0, abs(res.fun))
        return MilpSolution(
            status=status,
            objective_value=float(res.fun) + problem.obj_const,
            values=np.asarray(res.x, dtype=np.float64),
            solve_wall_time=wall,
            mip_gap=float(gap) if gap is not None else (0.0 if not problem.is_integer.any() else None),
            message=res.message,
        )


# ---------------------------------------------------------------------------
# Free-format MPS export

_MPS_SAFE = re.compile(r"[^A-Za-z0-9_.\-]")
_MPS_MAXLEN = 48


def _mangle_names(names: Sequence[str], prefix: str) -> dict[str, str]:
    """Deterministic map original -> MPS-safe unique token."""
    used: set[str] = set()
    out: dict[str, str] = {}
    for i, name in enumerate(names):
        tok = _MPS_SAFE.sub("_", name)[:_MPS_MAXLEN] or f"{prefix}{i}"
        if tok[0].isdigit():
            tok = f"{prefix}{tok}"[:_MPS_MAXLEN]
        cand = tok
        bump = 1
        while cand in used:
            suffix = f"~{bump}"
            cand = tok[: _MPS_MAXLEN - len(suffix)] + suffix
            bump += 1
        used.add(cand)
        out[name] = cand
    return out


def export_mps(problem: MilpProblem, path) -> dict:
    """Write free-format MPS plus a ``<path>.names.json`` sidecar name map.

    Sections in order: NAME, ROWS, COLUMNS (integer variables wrapped in
    INTORG/INTEND markers), RHS, RANGES (only when needed; this writer
    never produces ranged rows), BOUNDS, ENDATA. Bounds are written
    explicitly for every variable so readers cannot apply their own
    defaults to integer columns.
    """
    problem.validate()
    path = Path(path)
    vmap = _mangle_names(problem.var_names, "x")
    rmap = _mangle_names(problem.row_names, "c")
    sense_tag = {-1: "L", 0: "E", 1: "G"}

    lines: list[str] = [f"NAME {_MPS_SAFE.sub('_', problem.name) or 'problem'}"]
    lines.append("ROWS")
    lines.append(" N OBJ")
    for i, name in enumerate(problem.row_names):
        lines.append(f" {sense_tag[int(problem.sense[i])]} {rmap[name]}")

    csc = problem.a.tocsc()
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j, name in enumerate(problem.var_names):
        if problem.is_integer[j] and not in_int:
            lines.append(f"    MARKER{marker} 'MARKER' 'INTORG'")
            marker += 1
            in_int = True
        elif not problem.is_integer[j] and in_int:
            lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
            marker += 1
            in_int = False
        tok = vmap[name]
        wrote = False
        if problem.obj[j] != 0.0:
            lines.append(f"    {tok} OBJ {float(problem.obj[j])!r}")
            wrote = True
        lo, hi = csc.indptr[j], csc.indptr[j + 1]
        for pos in range(lo, hi):
            i = csc.indices[pos]
            lines.append(f"    {tok} {rmap[problem.row_names[i]]} {float(csc.data[pos])!r}")
            wrote = True
        if not wrote:
            # keep the column known to the reader
            lines.append(f"    {tok} OBJ 0.0")
    if in_int:
        lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")

    lines.append("RHS")
    if problem.obj_const != 0.0:
        lines.append(f"    RHS OBJ {-problem.obj_const!r}")
    for i, name in enumerate(problem.row_names):
        if problem.rhs[i] != 0.0:
            lines.append(f"    RHS {rmap[name]} {float(problem.rhs[i])!r}")

    lines.append("BOUNDS")
    for j, name in enumerate(problem.var_names):
        tok = vmap[name]
        lb, ub = float(problem.lower[j]), float(problem.upper[j])
        if lb == ub:
            lines.append(f" FX BND {tok} {lb!r}")
            continue
        if math.isinf(lb) and lb < 0:
            lines.append(f" MI BND {tok}")
        else:
            lines.append(f" LO BND {tok} {lb!r}")
        if math.isinf(ub):
            lines.append(f" PL BND {tok}")
        else:
            lines.append(f" UP BND {tok} {ub!r}")
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    name_map = {
        "variables": {orig: vmap[orig] for orig in problem.var_names},
        "rows": {orig: rmap[orig] for orig in problem.row_names},
    }
    Path(str(path) + ".names.json").write_text(
        json.dumps(name_map, indent=1, sort_keys=True), encoding="utf-8"
    )
    return name_map


def parse_solution_file(path, problem: MilpProblem, name_map: Optional[dict] = None) -> np.ndarray:
    """Parse ``<name> <value>`` lines into a value vector for `problem`.

    Accepts original or MPS-mangled names; variables absent from the file
    default to 0. Blank lines and ``#`` comments are ignored.
    """
    index = {name: j for j, name in enumerate(problem.var_names)}
    if name_map:
        for orig, tok in name_map.get("variables", {}).items():
            index.setdefault(tok, index[orig])
    x = np.zeros(problem.n_vars)
    seen = np.zeros(problem.n_vars, dtype=bool)
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        toks = body.split()
        if len(toks) != 2:
            raise BackendError(f"{path} line {lineno}: expected '<name> <value>'")
        name, val = toks
        if name not in index:
            raise BackendError(f"{path} line {lineno}: unknown variable {name!r}")
        try:
            x[index[name]] = float(val)
        except ValueError as exc:
            raise BackendError(f"{path} line {lineno}: bad value {val!r}") from exc
        seen[index[name]] = True
    if not seen.any():
        raise BackendError(f"{path}: no variable assignments found")
    return x


class ExternalCommandBackend:
    """File-exchange adapter: MPS out, command invocation, solution file in.

    The command template must contain ``{mps}`` and ``{sol}`` placeholders,
    e.g. ``mysolver {mps} --out {sol}``. The solution file uses
    ``<name> <value>`` lines (see `parse_solution_file`).
    """

    name = "external-command"

    def __init__(self, command_template: str):
        if "{mps}" not in command_template or "{sol}" not in command_template:
            raise BackendError("solver_cmd must contain {mps} and {sol} placeholders")
        self.command_template = command_template

    def solve(self, problem: MilpProblem, opts: SolveOptions) -> MilpSolution:
        with tempfile.TemporaryDirectory(prefix="dgplan_milp_") as tmp:
            mps_path = Path(tmp) / "model.mps"
            sol_path = Path(tmp) / "model.sol"
            name_map = export_mps(problem, mps_path)
            cmd = [
                part.format(mps=str(mps_path), sol=str(sol_path), time_limit=opts.time_limit)
                for part in shlex.split(self.command_template)
            ]
            t0 = time.perf_counter()
            try:
                run = subprocess.run(
                    cmd, capture_output=True, text=True, timeout=opts.time_limit + 120
                )
            except FileNotFoundError as exc:
                raise BackendError(f"external solver not found: {cmd[0]!r}") from exc
            except subprocess.TimeoutExpired as exc:
                raise BackendError(f"external solver timed out: {' '.join(cmd)}") from exc
            wall = time.perf_counter() - t0
            if run.returncode != 0:
                raise BackendError(
                    f"external solver exited {run.returncode}: {run.stderr.strip()[:500]}"
                )
            if not sol_path.exists():
                raise BackendError("external solver wrote no solution file")
            x = parse_solution_file(sol_path, problem, name_map)
        return MilpSolution(
            status=OPTIMAL,
            objective_value=float(problem.obj @ x) + problem.obj_const,
            values=x,
            solve_wall_time=wall,
            mip_gap=None,
            message="external",
        )


def solve(
    problem: MilpProblem,
    opts: Optional[SolveOptions] = None,
    backend=None,
) -> MilpSolution:
    """Solve and independently verify; every accepted solution passes
    `check_solution` or a SolveError is raised."""
    opts = opts or SolveOptions()
    backend = backend or ScipyHighsBackend()
    sol = backend.solve(problem, opts)
    if sol.has_values:
        viols = check_solution(problem, sol)
        if viols:
            worst = max(viols, key=lambda v: v.residual)
            raise SolveError(
                f"{problem.name}: {len(viols)} verification failure(s); worst: {worst}"
            )
    return sol
