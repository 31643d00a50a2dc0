"""Compiles DG capacity-investment models into MILP form.

First stage: integer module counts per candidate (bus, tech) under a
per-bus capacity cap and an optional budget. Second stage, per scenario:
branch-flow (DistFlow) operation of the radial feeder in squared-voltage
and squared-current variables.

The branch-flow apparent-power relation p^2 + q^2 = v^2 i^2 is nonconvex;
it is relaxed in two linear steps that keep the model MILP:

* an auxiliary variable w stands in for the product v^2 * i^2 and is
  boxed by its four McCormick envelopes over
  [v_min^2, v_max^2] x [0, i_max^2];
* p^2 + q^2 <= w becomes a K-sided polygon on (p, q) against an
  auxiliary apparent-power magnitude s, with s tied to sqrt(w) through
  tangent (secant-breakpoint) cuts.

Both steps only enlarge the feasible set, so the compiled problem is an
outer approximation: no operating point satisfying the true quadratic
relation is ever cut off.

Voltage drop uses the standard radial branch-flow equality
``v_child^2 = v_parent^2 - 2(R p + X q) + |Z|^2 i^2`` and node balances
charge the receiving end of each line with the R i^2 / X i^2 loss terms.

The substation is the slack bus: its squared voltage is fixed at 1 and it
is the only bus with grid import variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .grid_case import EconomicParams, Line, Network, TechnologyCatalog
from .milp import EQ, LE, MilpProblem, MilpSolution, ProblemBuilder
from .scenarios import Scenario, ScenarioSet

INTEGRALITY_TOL = 1e-6
COST_MATCH_RTOL = 1e-6


class PlannerError(Exception):
    pass


@dataclass(frozen=True)
class BuildOptions:
    """Relaxation geometry and diagnostics knobs.

    ``secant_fracs`` are fractions of each line's w upper bound
    (v_max^2 * i_max^2) where the sqrt tangents touch; the defaults place
    the tangent points uniformly in s-space. ``allow_shedding`` adds
    heavily penalized load-shedding slacks for diagnosing operationally
    infeasible plans; it is off in the base model.
    """

    polygon_sides: int = 12
    secant_fracs: tuple[float, ...] = (0.0625, 0.25, 0.5625, 1.0)
    allow_shedding: bool = False
    shed_penalty: float = 10.0  # $/kWh of unserved energy

    def __post_init__(self):
        if self.polygon_sides < 3:
            raise PlannerError("polygon needs at least 3 sides")
        if not self.secant_fracs or any(f <= 0 or f > 1 for f in self.secant_fracs):
            raise PlannerError("secant fractions must lie in (0, 1]")


@dataclass(frozen=True)
class InvestmentPlan:
    modules: dict[tuple[int, str], int]  # (bus, tech) -> module count, zeros omitted
    invest_cost: float

    def installed_kw(self, cat: TechnologyCatalog) -> dict[str, float]:
        out = {t: 0.0 for t in cat.names}
        for (_, tech), n in self.modules.items():
            out[tech] += n * cat[tech].module_kw
        return out

    @property
    def total_modules(self) -> int:
        return sum(self.modules.values())


def make_plan(
    net: Network, cat: TechnologyCatalog, modules: dict[tuple[int, str], int]
) -> InvestmentPlan:
    """Validate a module map against candidacy and capacity, price it exactly."""
    clean: dict[tuple[int, str], int] = {}
    for (bus, tech), n in modules.items():
        if n < 0 or n != int(n):
            raise PlannerError(f"module count for {(bus, tech)} must be a nonnegative integer")
        if n == 0:
            continue
        if not net.candidate.get((bus, tech), False):
            raise PlannerError(f"({bus}, {tech}) is not a candidate location")
        clean[(bus, tech)] = int(n)
    for bus in {b for b, _ in clean}:
        cap = net.dg_max.get(bus, 0.0)
        used = sum(
            cat[tech].module_pu(net.s_base_kva) * n
            for (b, tech), n in clean.items()
            if b == bus
        )
        if used > cap + 1e-9:
            raise PlannerError(f"bus {bus}: installed {used:.6f} p.u. exceeds dg_max {cap}")
    cost = sum(cat[tech].inv_cost * n for (bus, tech), n in sorted(clean.items()))
    return InvestmentPlan(modules=clean, invest_cost=cost)


ZERO_PLAN = InvestmentPlan(modules={}, invest_cost=0.0)


def enumerate_plans(
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    cap: int = 20000,
) -> list[InvestmentPlan]:
    """Every feasible integer plan (candidacy, per-bus capacity, budget).

    Deterministic order. Raises when the lattice exceeds ``cap`` plans;
    exhaustive enumeration is meant for oracle-scale cases.
    """
    import itertools

    cand = net.candidate_pairs()
    buses = sorted({b for b, _ in cand})
    per_bus: list[list[tuple[tuple[int, str], int]]] = []
    for bus in buses:
        techs = [tech for (b, tech) in cand if b == bus]
        ranges = [range(_x_upper(net, cat, bus, t) + 1) for t in techs]
        options = []
        for combo in itertools.product(*ranges):
            used = sum(
                cat[t].module_pu(net.s_base_kva) * n for t, n in zip(techs, combo)
            )
            if used <= net.dg_max[bus] + 1e-9:
                options.append([((bus, t), n) for t, n in zip(techs, combo) if n > 0])
        per_bus.append(options)
        count = 1
        for opts in per_bus:
            count *= len(opts)
        if count > cap:
            raise PlannerError(f"plan lattice exceeds {cap} plans; not enumerable")
    plans: list[InvestmentPlan] = []
    for combo in itertools.product(*per_bus):
        modules = {key: n for part in combo for key, n in part}
        plan = make_plan(net, cat, modules)
        if econ.budget is not None and plan.invest_cost > econ.budget + 1e-9:
            continue
        plans.append(plan)
    plans.sort(key=lambda p: tuple(sorted(p.modules.items())))
    return plans


@dataclass(frozen=True)
class BlockLayout:
    """Arithmetic variable indexing: first-stage variables (if any) come
    first, then one fixed-size block per scenario."""

    lines: tuple[Line, ...]
    buses: tuple[int, ...]
    cand: tuple[tuple[int, str], ...]
    shed_buses: tuple[int, ...]  # empty unless shedding enabled
    n_x: int
    block: int
    off_p: int
    off_q: int
    off_i2: int
    off_w: int
    off_s: int
    off_v2: int
    off_pg: int
    off_qg: int
    off_pss: int
    off_qss: int
    off_shed: int
    off_qshp: int
    off_qshm: int

    @classmethod
    def create(cls, net: Network, shedding: bool, fixed_first_stage: bool) -> "BlockLayout":
        lines = net.lines
        buses = net.buses
        cand = tuple(net.candidate_pairs())
        shed_buses = buses if shedding else ()
        nl, nb, nc, ns = len(lines), len(buses), len(cand), len(shed_buses)
        off = dict(off_p=0)
        off["off_q"] = nl
        off["off_i2"] = 2 * nl
        off["off_w"] = 3 * nl
        off["off_s"] = 4 * nl
        off["off_v2"] = 5 * nl
        off["off_pg"] = 5 * nl + nb
        off["off_qg"] = 5 * nl + nb + nc
        off["off_pss"] = 5 * nl + nb + 2 * nc
        off["off_qss"] = off["off_pss"] + 1
        off["off_shed"] = off["off_qss"] + 1
        off["off_qshp"] = off["off_shed"] + ns
        off["off_qshm"] = off["off_qshp"] + ns
        block = off["off_qshm"] + ns
        return cls(
            lines=lines,
            buses=buses,
            cand=cand,
            shed_buses=shed_buses,
            n_x=0 if fixed_first_stage else nc,
            block=block,
            **off,
        )

    def x(self, c: int) -> int:
        return c

    def var(self, sid: int, offset: int) -> int:
        return self.n_x + sid * self.block + offset


@dataclass
class CompiledModel:
    problem: MilpProblem
    layout: BlockLayout
    scenarios: tuple[Scenario, ...]
    weights: tuple[float, ...]  # objective hour-weight per scenario
    net: Network
    cat: TechnologyCatalog
    econ: EconomicParams
    options: BuildOptions
    fixed_plan: Optional[InvestmentPlan] = None


def _x_upper(net: Network, cat: TechnologyCatalog, bus: int, tech: str) -> int:
    cap = net.dg_max.get(bus, 0.0)
    mod = cat[tech].module_pu(net.s_base_kva)
    return int(math.floor(cap / mod + 1e-9))


def _add_scenario_block(
    builder: ProblemBuilder,
    layout: BlockLayout,
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    scen: Scenario,
    sid: int,
    weight: float,
    options: BuildOptions,
    fixed_modules: Optional[dict[tuple[int, str], int]],
) -> None:
    """Emit one scenario's variables and rows.

    ``weight`` scales this scenario's hourly cost rate in the objective:
    expected hours for expectation models, 1.0 for a bare rate
    subproblem. ``fixed_modules`` switches between the investment model
    (dispatch capped by integer x rows) and the fixed-plan model
    (dispatch capped by variable bounds).
    """
    sb = net.s_base_kva
    v2_lo = net.v_min**2
    v2_hi = net.v_max**2
    demand_p = net.demand_p
    demand_q = net.demand_q
    tag = f"s{sid}"
    lines = layout.lines
    bus_pos = {b: i for i, b in enumerate(layout.buses)}
    cand_pos = {c: i for i, c in enumerate(layout.cand)}

    def vid(off: int, i: int = 0) -> int:
        return layout.var(sid, off + i)

    # variables, in block-offset order
    for ln in lines:
        smax = net.v_max * ln.i_max_pu
        builder.add_var(f"p_{ln.from_bus}_{ln.to_bus}_{tag}", -smax, smax)
    for ln in lines:
        smax = net.v_max * ln.i_max_pu
        builder.add_var(f"q_{ln.from_bus}_{ln.to_bus}_{tag}", -smax, smax)
    for ln in lines:
        builder.add_var(
            f"i2_{ln.from_bus}_{ln.to_bus}_{tag}",
            0.0,
            ln.i_max_pu**2,
            obj=weight * econ.loss_price * sb * ln.r_pu,
        )
    for ln in lines:
        builder.add_var(f"w_{ln.from_bus}_{ln.to_bus}_{tag}", 0.0, v2_hi * ln.i_max_pu**2)
    for ln in lines:
        builder.add_var(f"sap_{ln.from_bus}_{ln.to_bus}_{tag}", 0.0, net.v_max * ln.i_max_pu)
    for bus in layout.buses:
        if bus == net.substation:
            builder.add_var(f"v2_{bus}_{tag}", 1.0, 1.0)  # slack voltage fixed
        else:
            builder.add_var(f"v2_{bus}_{tag}", v2_lo, v2_hi)
    for bus, tech in layout.cand:
        t = cat[tech]
        n_mod = (
            _x_upper(net, cat, bus, tech)
            if fixed_modules is None
            else fixed_modules.get((bus, tech), 0)
        )
        cap = scen.factor(tech) * t.module_pu(sb) * n_mod
        builder.add_var(f"pg_{tech}_{bus}_{tag}", 0.0, cap, obj=weight * t.om_cost * sb)
    for bus, tech in layout.cand:
        t = cat[tech]
        n_mod = (
            _x_upper(net, cat, bus, tech)
            if fixed_modules is None
            else fixed_modules.get((bus, tech), 0)
        )
        lam = max(abs(t.lambda_lead), abs(t.lambda_lag))
        qcap = lam * scen.factor(tech) * t.module_pu(sb) * n_mod
        builder.add_var(f"qg_{tech}_{bus}_{tag}", -qcap, qcap)
    builder.add_var(f"pss_{tag}", 0.0, net.substation_p_max, obj=weight * scen.import_price * sb)
    builder.add_var(f"qss_{tag}", -net.substation_q_max, net.substation_q_max)
    shed_obj = weight * options.shed_penalty * sb
    for bus in layout.shed_buses:
        builder.add_var(f"shed_{bus}_{tag}", 0.0, scen.gamma_d * demand_p[bus], obj=shed_obj)
    for bus in layout.shed_buses:
        builder.add_var(f"qshp_{bus}_{tag}", 0.0, math.inf, obj=shed_obj)
    for bus in layout.shed_buses:
        builder.add_var(f"qshm_{bus}_{tag}", 0.0, math.inf, obj=shed_obj)

    # node balances: inflow (net of line losses) - outflow + generation
    # + import + shed = scaled demand
    children: dict[int, list[int]] = {}
    parents: dict[int, list[int]] = {}
    for i, ln in enumerate(lines):
        children.setdefault(ln.from_bus, []).append(i)
        parents.setdefault(ln.to_bus, []).append(i)
    cand_at: dict[int, list[int]] = {}
    for c, (b, _) in enumerate(layout.cand):
        cand_at.setdefault(b, []).append(c)
    for bus in layout.buses:
        terms_p: list[tuple[int, float]] = []
        terms_q: list[tuple[int, float]] = []
        for i in parents.get(bus, ()):
            ln = lines[i]
            terms_p.append((vid(layout.off_p, i), 1.0))
            terms_p.append((vid(layout.off_i2, i), -ln.r_pu))
            terms_q.append((vid(layout.off_q, i), 1.0))
            terms_q.append((vid(layout.off_i2, i), -ln.x_pu))
        for i in children.get(bus, ()):
            terms_p.append((vid(layout.off_p, i), -1.0))
            terms_q.append((vid(layout.off_q, i), -1.0))
        for c in cand_at.get(bus, ()):
            terms_p.append((vid(layout.off_pg, c), 1.0))
            terms_q.append((vid(layout.off_qg, c), 1.0))
        if bus == net.substation:
            terms_p.append((vid(layout.off_pss), 1.0))
            terms_q.append((vid(layout.off_qss), 1.0))
        if layout.shed_buses:
            i = bus_pos[bus]
            terms_p.append((vid(layout.off_shed, i), 1.0))
            terms_q.append((vid(layout.off_qshp, i), 1.0))
            terms_q.append((vid(layout.off_qshm, i), -1.0))
        builder.add_row(f"balp_{bus}_{tag}", terms_p, EQ, scen.gamma_d * demand_p[bus])
        builder.add_row(f"balq_{bus}_{tag}", terms_q, EQ, scen.gamma_d * demand_q[bus])

    # voltage drop along each line
    for i, ln in enumerate(lines):
        builder.add_row(
            f"vdrop_{ln.from_bus}_{ln.to_bus}_{tag}",
            [
                (vid(layout.off_v2, bus_pos[ln.to_bus]), 1.0),
                (vid(layout.off_v2, bus_pos[ln.from_bus]), -1.0),
                (vid(layout.off_p, i), 2.0 * ln.r_pu),
                (vid(layout.off_q, i), 2.0 * ln.x_pu),
                (vid(layout.off_i2, i), -ln.z2_pu),
            ],
            EQ,
            0.0,
        )

    # McCormick envelopes of w = v2_parent * i2 over [v2_lo, v2_hi] x [0, i_max^2]
    for i, ln in enumerate(lines):
        vpar = vid(layout.off_v2, bus_pos[ln.from_bus])
        wv = vid(layout.off_w, i)
        iv = vid(layout.off_i2, i)
        b_hi = ln.i_max_pu**2
        name = f"{ln.from_bus}_{ln.to_bus}_{tag}"
        builder.add_row(f"mc1_{name}", [(iv, v2_lo), (wv, -1.0)], LE, 0.0)
        builder.add_row(f"mc2_{name}", [(iv, v2_hi), (vpar, b_hi), (wv, -1.0)], LE, v2_hi * b_hi)
        builder.add_row(f"mc3_{name}", [(wv, 1.0), (iv, -v2_hi)], LE, 0.0)
        builder.add_row(f"mc4_{name}", [(wv, 1.0), (iv, -v2_lo), (vpar, -b_hi)], LE, -v2_lo * b_hi)

    # polygonal outer approximation of p^2 + q^2 <= w
    k = options.polygon_sides
    for i, ln in enumerate(lines):
        name = f"{ln.from_bus}_{ln.to_bus}_{tag}"
        pv = vid(layout.off_p, i)
        qv = vid(layout.off_q, i)
        sv = vid(layout.off_s, i)
        wv = vid(layout.off_w, i)
        for j in range(k):
            th = 2.0 * math.pi * j / k
            builder.add_row(
                f"poly{j}_{name}",
                [(pv, math.cos(th)), (qv, math.sin(th)), (sv, -1.0)],
                LE,
                0.0,
            )
        w_hi = v2_hi * ln.i_max_pu**2
        for li, frac in enumerate(options.secant_fracs):
            w_hat = frac * w_hi
            root = math.sqrt(w_hat)
            # s <= (w + w_hat) / (2 sqrt(w_hat)): tangent of sqrt at w_hat
            builder.add_row(
                f"sec{li}_{name}",
                [(sv, 1.0), (wv, -1.0 / (2.0 * root))],
                LE,
                root / 2.0,
            )

    # dispatch caps (integer-coupled only when x is a variable) and pf cones
    for c, (bus, tech) in enumerate(layout.cand):
        pgv = vid(layout.off_pg, c)
        qgv = vid(layout.off_qg, c)
        t = cat[tech]
        if fixed_modules is None:
            cap_coef = scen.factor(tech) * t.module_pu(sb)
            builder.add_row(
                f"dispmax_{tech}_{bus}_{tag}",
                [(pgv, 1.0), (layout.x(cand_pos[(bus, tech)]), -cap_coef)],
                LE,
                0.0,
            )
        builder.add_row(f"pflag_{tech}_{bus}_{tag}", [(qgv, 1.0), (pgv, -t.lambda_lag)], LE, 0.0)
        builder.add_row(f"pflead_{tech}_{bus}_{tag}", [(pgv, t.lambda_lead), (qgv, -1.0)], LE, 0.0)


def _first_stage(
    builder: ProblemBuilder,
    layout: BlockLayout,
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
) -> None:
    for bus, tech in layout.cand:
        builder.add_var(
            f"x_{tech}_{bus}",
            0.0,
            float(_x_upper(net, cat, bus, tech)),
            obj=cat[tech].inv_cost,
            integer=True,
        )
    cand_pos = {c: i for i, c in enumerate(layout.cand)}
    for bus in sorted({b for b, _ in layout.cand}):
        terms = [
            (cand_pos[(b, tech)], cat[tech].module_pu(net.s_base_kva))
            for (b, tech) in layout.cand
            if b == bus
        ]
        builder.add_row(f"cap_{bus}", terms, LE, net.dg_max[bus])
    if econ.budget is not None:
        terms = [(cand_pos[c], cat[c[1]].inv_cost) for c in layout.cand]
        builder.add_row("budget", terms, LE, econ.budget)


def build_deterministic_equivalent(
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    sset: ScenarioSet,
    options: Optional[BuildOptions] = None,
) -> CompiledModel:
    """Full two-stage model: integer first stage plus every scenario's
    operation weighted by its expected hours."""
    options = options or BuildOptions()
    layout = BlockLayout.create(net, options.allow_shedding, fixed_first_stage=False)
    builder = ProblemBuilder("dg_plan")
    _first_stage(builder, layout, net, cat, econ)
    scenarios = tuple(sset)
    weights = tuple(s.hours for s in scenarios)
    for sid, scen in enumerate(scenarios):
        _add_scenario_block(
            builder, layout, net, cat, econ, scen, sid, scen.hours, options, None
        )
    return CompiledModel(
        problem=builder.build(),
        layout=layout,
        scenarios=scenarios,
        weights=weights,
        net=net,
        cat=cat,
        econ=econ,
        options=options,
    )


def build_operation_model(
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    scenarios: Sequence[Scenario],
    plan: InvestmentPlan,
    options: Optional[BuildOptions] = None,
    weights: Optional[Sequence[float]] = None,
) -> CompiledModel:
    """Operation-only (fixed plan) model over one or more scenarios.

    Purely continuous; scenario blocks share no rows, so the optimum is
    the sum of the per-scenario optima. Default weights of 1.0 make the
    objective an hourly cost rate per scenario block.
    """
    options = options or BuildOptions()
    layout = BlockLayout.create(net, options.allow_shedding, fixed_first_stage=True)
    if weights is None:
        weights = [1.0] * len(scenarios)
    if len(weights) != len(scenarios):
        raise PlannerError("weights and scenarios must align")
    builder = ProblemBuilder("dg_operate")
    for sid, (scen, wgt) in enumerate(zip(scenarios, weights)):
        _add_scenario_block(
            builder, layout, net, cat, econ, scen, sid, wgt, options, plan.modules
        )
    return CompiledModel(
        problem=builder.build(),
        layout=layout,
        scenarios=tuple(scenarios),
        weights=tuple(weights),
        net=net,
        cat=cat,
        econ=econ,
        options=options,
        fixed_plan=plan,
    )


def build_second_stage(
    net: Network,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    scen: Scenario,
    plan: InvestmentPlan,
    options: Optional[BuildOptions] = None,
) -> CompiledModel:
    """Single-scenario subproblem with the first stage fixed; the objective
    is the hourly operating cost rate for that scenario."""
    return build_operation_model(net, cat, econ, [scen], plan, options, weights=[1.0])


# ---------------------------------------------------------------------------
# Solution extraction and physics verification


@dataclass
class ScenarioOperation:
    scenario: Scenario
    flow_p: dict[tuple[int, int], float]
    flow_q: dict[tuple[int, int], float]
    i2: dict[tuple[int, int], float]
    w: dict[tuple[int, int], float]
    v2: dict[int, float]
    pg: dict[tuple[int, str], float]
    qg: dict[tuple[int, str], float]
    p_ss: float
    q_ss: float
    shed_p: dict[int, float]
    slack_rate: float   # $/h of shedding penalties (0 in the base model)
    loss_rate: float    # $/h
    import_rate: float  # $/h
    om_rate: float      # $/h

    @property
    def total_rate(self) -> float:
        return self.loss_rate + self.import_rate + self.om_rate + self.slack_rate


@dataclass
class OperationSolution:
    per_scenario: list[ScenarioOperation]

    def expected_cost(self, weights: Sequence[float]) -> float:
        return sum(w * op.total_rate for w, op in zip(weights, self.per_scenario))


def extract_plan(model: CompiledModel, solution: MilpSolution) -> InvestmentPlan:
    """First-stage module counts only (cheap even for huge scenario sets)."""
    if model.fixed_plan is not None:
        return model.fixed_plan
    if not solution.has_values:
        raise PlannerError(f"no values to extract (status {solution.status})")
    x = solution.values
    layout = model.layout
    modules: dict[tuple[int, str], int] = {}
    for c, (bus, tech) in enumerate(layout.cand):
        raw = x[layout.x(c)]
        if abs(raw - round(raw)) > INTEGRALITY_TOL:
            raise PlannerError(
                f"x_{tech}_{bus} = {raw!r} is {abs(raw - round(raw)):.2e} from integer"
            )
        if round(raw) != 0:
            modules[(bus, tech)] = int(round(raw))
    return make_plan(model.net, model.cat, modules)


def extract_solution(
    model: CompiledModel, solution: MilpSolution
) -> tuple[InvestmentPlan, OperationSolution]:
    """Typed view of a solved model; validates integrality and re-derives
    the objective from the extracted values (cost mismatch is an error)."""
    if not solution.has_values:
        raise PlannerError(f"no values to extract (status {solution.status})")
    plan = extract_plan(model, solution)
    x = solution.values
    layout = model.layout
    net, cat = model.net, model.cat
    sb = net.s_base_kva
    bus_pos = {b: i for i, b in enumerate(layout.buses)}

    ops: list[ScenarioOperation] = []
    for sid, scen in enumerate(model.scenarios):
        def v(off: int, i: int = 0) -> float:
            return float(x[layout.var(sid, off + i)])

        flow_p = {ln.key: v(layout.off_p, i) for i, ln in enumerate(layout.lines)}
        flow_q = {ln.key: v(layout.off_q, i) for i, ln in enumerate(layout.lines)}
        i2 = {ln.key: v(layout.off_i2, i) for i, ln in enumerate(layout.lines)}
        w = {ln.key: v(layout.off_w, i) for i, ln in enumerate(layout.lines)}
        v2 = {bus: v(layout.off_v2, bus_pos[bus]) for bus in layout.buses}
        pg = {c: v(layout.off_pg, i) for i, c in enumerate(layout.cand)}
        qg = {c: v(layout.off_qg, i) for i, c in enumerate(layout.cand)}
        shed = {bus: v(layout.off_shed, i) for i, bus in enumerate(layout.shed_buses)}
        slack_rate = 0.0
        if layout.shed_buses:
            q_slack = sum(
                v(layout.off_qshp, i) + v(layout.off_qshm, i)
                for i in range(len(layout.shed_buses))
            )
            slack_rate = model.options.shed_penalty * sb * (sum(shed.values()) + q_slack)
        loss_rate = model.econ.loss_price * sb * sum(
            ln.r_pu * i2[ln.key] for ln in layout.lines
        )
        pss = v(layout.off_pss)
        ops.append(
            ScenarioOperation(
                scenario=scen,
                flow_p=flow_p,
                flow_q=flow_q,
                i2=i2,
                w=w,
                v2=v2,
                pg=pg,
                qg=qg,
                p_ss=pss,
                q_ss=v(layout.off_qss),
                shed_p=shed,
                slack_rate=slack_rate,
                loss_rate=loss_rate,
                import_rate=scen.import_price * sb * pss,
                om_rate=sb * sum(cat[tech].om_cost * pg[(b, tech)] for b, tech in layout.cand),
            )
        )
    op = OperationSolution(ops)

    recomputed = op.expected_cost(model.weights)
    if model.fixed_plan is None:
        recomputed += plan.invest_cost
    scale = max(1.0, abs(solution.objective_value))
    if abs(recomputed - solution.objective_value) > COST_MATCH_RTOL * scale:
        raise PlannerError(
            "cost mismatch: recomputed objective "
            f"{recomputed!r} vs solver {solution.objective_value!r}"
        )
    return plan, op


def verify_physics(
    model: CompiledModel,
    plan: InvestmentPlan,
    op: OperationSolution,
    balance_tol: float = 1e-6,
    bound_tol: float = 1e-7,
) -> list[str]:
    """Re-derive both sides of every physical equation from the typed
    solution. Returns a list of violation descriptions (empty = clean)."""
    net, cat, econ = model.net, model.cat, model.econ
    sb = net.s_base_kva
    problems: list[str] = []
    demand_p = net.demand_p
    demand_q = net.demand_q
    v2_lo, v2_hi = net.v_min**2, net.v_max**2
    shedding = bool(model.layout.shed_buses)

    for sop in op.per_scenario:
        scen = sop.scenario
        where = f"scenario {scen.id}"
        for bus in net.buses:
            acc_p = -scen.gamma_d * demand_p[bus]
            acc_q = -scen.gamma_d * demand_q[bus]
            for ln in net.lines:
                if ln.to_bus == bus:
                    acc_p += sop.flow_p[ln.key] - ln.r_pu * sop.i2[ln.key]
                    acc_q += sop.flow_q[ln.key] - ln.x_pu * sop.i2[ln.key]
                if ln.from_bus == bus:
                    acc_p -= sop.flow_p[ln.key]
                    acc_q -= sop.flow_q[ln.key]
            for (b, _), val in sop.pg.items():
                if b == bus:
                    acc_p += val
            for (b, _), val in sop.qg.items():
                if b == bus:
                    acc_q += val
            if bus == net.substation:
                acc_p += sop.p_ss
                acc_q += sop.q_ss
            acc_p += sop.shed_p.get(bus, 0.0)
            if abs(acc_p) > balance_tol:
                problems.append(f"{where}: active balance at bus {bus} off by {acc_p:.3e}")
            if not shedding and abs(acc_q) > balance_tol:
                problems.append(f"{where}: reactive balance at bus {bus} off by {acc_q:.3e}")
        for ln in net.lines:
            resid = (
                sop.v2[ln.to_bus]
                - sop.v2[ln.from_bus]
                + 2.0 * (ln.r_pu * sop.flow_p[ln.key] + ln.x_pu * sop.flow_q[ln.key])
                - ln.z2_pu * sop.i2[ln.key]
            )
            if abs(resid) > balance_tol:
                problems.append(f"{where}: voltage drop on {ln.key} off by {resid:.3e}")
            if sop.i2[ln.key] > ln.i_max_pu**2 + bound_tol:
                problems.append(f"{where}: current limit exceeded on {ln.key}")
            b_hi = ln.i_max_pu**2
            vpar = sop.v2[ln.from_bus]
            wval = sop.w[ln.key]
            i2val = sop.i2[ln.key]
            envelope = (
                v2_lo * i2val - wval,
                v2_hi * i2val + b_hi * vpar - v2_hi * b_hi - wval,
                wval - v2_hi * i2val,
                wval - (v2_lo * i2val + b_hi * vpar - v2_lo * b_hi),
            )
            if max(envelope) > bound_tol * max(1.0, v2_hi * b_hi):
                problems.append(f"{where}: product envelope violated on {ln.key}")
        for bus in net.buses:
            vv = sop.v2[bus]
            if bus == net.substation:
                if abs(vv - 1.0) > bound_tol:
                    problems.append(f"{where}: slack voltage moved to {vv!r}")
            elif vv < v2_lo - bound_tol or vv > v2_hi + bound_tol:
                problems.append(f"{where}: v2 at bus {bus} = {vv!r} outside limits")
        for (bus, tech), val in sop.pg.items():
            cap = scen.factor(tech) * cat[tech].module_pu(sb) * plan.modules.get((bus, tech), 0)
            if val < -bound_tol or val > cap + bound_tol:
                problems.append(f"{where}: dispatch {tech}@{bus} = {val!r} exceeds cap {cap!r}")
            qv = sop.qg[(bus, tech)]
            if qv < cat[tech].lambda_lead * val - bound_tol or qv > cat[tech].lambda_lag * val + bound_tol:
                problems.append(f"{where}: reactive dispatch {tech}@{bus} outside pf cone")
        if sop.p_ss < -bound_tol or sop.p_ss > net.substation_p_max + bound_tol:
            problems.append(f"{where}: import outside limits")
        if abs(sop.q_ss) > net.substation_q_max + bound_tol:
            problems.append(f"{where}: reactive import outside limits")

    for bus in {b for b, _ in plan.modules}:
        used = sum(
            cat[tech].module_pu(sb) * n for (b, tech), n in plan.modules.items() if b == bus
        )
        if used > net.dg_max.get(bus, 0.0) + bound_tol:
            problems.append(f"bus {bus}: installed capacity exceeds dg_max")
    if econ.budget is not None and plan.invest_cost > econ.budget + bound_tol * max(1.0, econ.budget):
        problems.append("budget exceeded")
    return problems
