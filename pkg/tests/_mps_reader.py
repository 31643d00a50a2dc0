"""Independent free-format MPS reader.

Deliberately written from the MPS format description, not from the
package's writer, so writer/reader round-trips are a real cross-check.
Supports the sections and bound types a planning MILP needs: ROWS,
COLUMNS with INTORG/INTEND markers, RHS, RANGES, BOUNDS (LO/UP/FX/MI/PL),
ENDATA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class MpsModel:
    name: str = ""
    obj_row: str = ""
    obj: dict[str, float] = field(default_factory=dict)
    obj_const: float = 0.0
    row_sense: dict[str, str] = field(default_factory=dict)   # L / G / E
    row_order: list[str] = field(default_factory=list)
    rhs: dict[str, float] = field(default_factory=dict)
    cols: dict[str, dict[str, float]] = field(default_factory=dict)  # var -> row -> coef
    var_order: list[str] = field(default_factory=list)
    integer: set[str] = field(default_factory=set)
    lower: dict[str, float] = field(default_factory=dict)
    upper: dict[str, float] = field(default_factory=dict)

    def bounds(self, var: str) -> tuple[float, float]:
        return self.lower.get(var, 0.0), self.upper.get(var, math.inf)


def read_mps(path) -> MpsModel:
    model = MpsModel()
    section = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            stripped = line.strip()
            if not stripped or stripped.startswith("*"):
                continue
            if line[0] not in (" ", "\t"):
                toks = stripped.split()
                section = toks[0].upper()
                if section == "NAME":
                    model.name = toks[1] if len(toks) > 1 else ""
                if section == "ENDATA":
                    break
                continue
            toks = stripped.split()
            if section == "ROWS":
                sense, name = toks[0].upper(), toks[1]
                if sense == "N":
                    if not model.obj_row:
                        model.obj_row = name
                    continue
                model.row_sense[name] = sense
                model.row_order.append(name)
            elif section == "COLUMNS":
                if len(toks) >= 3 and toks[1] == "'MARKER'":
                    marker = toks[2].strip("'").upper()
                    if marker == "INTORG":
                        model._in_integer = True  # type: ignore[attr-defined]
                    elif marker == "INTEND":
                        model._in_integer = False  # type: ignore[attr-defined]
                    continue
                var = toks[0]
                if var not in model.cols:
                    model.cols[var] = {}
                    model.var_order.append(var)
                    if getattr(model, "_in_integer", False):
                        model.integer.add(var)
                pairs = toks[1:]
                if len(pairs) % 2:
                    raise ValueError(f"odd COLUMNS entry: {stripped!r}")
                for row, val in zip(pairs[::2], pairs[1::2]):
                    coef = float(val)
                    if row == model.obj_row:
                        model.obj[var] = model.obj.get(var, 0.0) + coef
                    else:
                        model.cols[var][row] = model.cols[var].get(row, 0.0) + coef
            elif section == "RHS":
                pairs = toks[1:]
                for row, val in zip(pairs[::2], pairs[1::2]):
                    if row == model.obj_row:
                        model.obj_const = -float(val)
                    else:
                        model.rhs[row] = float(val)
            elif section == "RANGES":
                raise ValueError("RANGES rows not supported by this reader")
            elif section == "BOUNDS":
                btype = toks[0].upper()
                var = toks[2]
                val = float(toks[3]) if len(toks) > 3 else None
                if btype == "LO":
                    model.lower[var] = val
                elif btype == "UP":
                    model.upper[var] = val
                elif btype == "FX":
                    model.lower[var] = val
                    model.upper[var] = val
                elif btype == "MI":
                    model.lower[var] = -math.inf
                elif btype == "PL":
                    model.upper[var] = math.inf
                elif btype == "BV":
                    model.lower[var] = 0.0
                    model.upper[var] = 1.0
                    model.integer.add(var)
                else:
                    raise ValueError(f"unsupported bound type {btype}")
    return model


def solve_with_scipy(model: MpsModel):
    """Solve a parsed model with scipy's MILP interface; returns (obj, values)."""
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp

    nv = len(model.var_order)
    vidx = {v: j for j, v in enumerate(model.var_order)}
    c = np.zeros(nv)
    for v, coef in model.obj.items():
        c[vidx[v]] = coef
    lo = np.array([model.bounds(v)[0] for v in model.var_order])
    hi = np.array([model.bounds(v)[1] for v in model.var_order])
    integrality = np.array([1 if v in model.integer else 0 for v in model.var_order], dtype=np.uint8)
    constraints = []
    if model.row_order:
        a = np.zeros((len(model.row_order), nv))
        lb = np.full(len(model.row_order), -np.inf)
        ub = np.full(len(model.row_order), np.inf)
        for i, row in enumerate(model.row_order):
            r = model.rhs.get(row, 0.0)
            s = model.row_sense[row]
            if s == "L":
                ub[i] = r
            elif s == "G":
                lb[i] = r
            else:
                lb[i] = ub[i] = r
        for v, rows in model.cols.items():
            for row, coef in rows.items():
                a[model.row_order.index(row), vidx[v]] = coef
        constraints = [LinearConstraint(a, lb, ub)]
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lo, hi),
        options={"mip_rel_gap": 1e-9},
    )
    if res.status != 0:
        raise RuntimeError(f"scipy milp status {res.status}: {res.message}")
    return float(res.fun) + model.obj_const, {
        v: float(res.x[vidx[v]]) for v in model.var_order
    }
