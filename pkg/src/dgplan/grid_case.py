"""Grid, technology and economic data model for radial feeders.

A *case* bundles everything the planner needs that is not weather- or
demand-history dependent: the network (buses, lines, limits), the
installable technology catalog, and the economic parameters. Cases are
loaded from a single structured text file (see `parse_case`) and are
immutable after validation, so they can be shared freely across worker
processes.

Conventions
-----------
* Single system-wide apparent-power base ``s_base_kva``; all network
  quantities are per-unit on that base.
* Lines are stored oriented away from the substation (parent -> child);
  the loader reorients them if the file lists a line the other way.
* Demands are stored in physical units (kW / kvar) exactly as parsed, so
  a serialize/parse round-trip is bit-exact; per-unit views are derived.
* Squared impedance magnitude |Z|^2 = R^2 + X^2 is always computed, never
  stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional

TECHS = ("PV", "WT", "CG")


class CaseError(Exception):
    """Base error for case files."""


class CaseParseError(CaseError):
    """Malformed case file (syntax, missing section, bad token)."""


class CaseValidationError(CaseError):
    """Structurally valid file that violates a case invariant."""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r_pu: float
    x_pu: float
    i_max_pu: float

    @property
    def z2_pu(self) -> float:
        """|Z|^2 in p.u.^2, computed from R and X."""
        return self.r_pu * self.r_pu + self.x_pu * self.x_pu

    @property
    def key(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class PvParams:
    y_rated: float  # kW, module rating
    g_stc: float    # W/m^2, irradiance at standard test conditions
    g_noct: float   # W/m^2, irradiance at nominal operating cell temperature
    t_c_stc: float  # degC
    t_c_noct: float # degC
    t_a_noct: float # degC
    alpha: float    # fraction per degC, power-temperature coefficient


@dataclass(frozen=True)
class WtParams:
    y_rated: float  # kW, turbine rating
    v_in: float     # m/s, cut-in
    v_rated: float  # m/s, rated
    v_out: float    # m/s, cut-off


@dataclass(frozen=True)
class Technology:
    name: str
    module_kw: float   # installed kW per integer module
    inv_cost: float    # $ per module over the planning horizon
    om_cost: float     # $ per kWh produced
    pf_lead: float
    pf_lag: float
    pv: Optional[PvParams] = None
    wt: Optional[WtParams] = None

    def module_pu(self, s_base_kva: float) -> float:
        return self.module_kw / s_base_kva

    @property
    def lambda_lead(self) -> float:
        """Lower reactive/active ratio: -tan(acos(pf_lead))."""
        return -math.tan(math.acos(self.pf_lead))

    @property
    def lambda_lag(self) -> float:
        """Upper reactive/active ratio: +tan(acos(pf_lag))."""
        return math.tan(math.acos(self.pf_lag))


@dataclass(frozen=True)
class TechnologyCatalog:
    techs: dict[str, Technology]

    def __getitem__(self, name: str) -> Technology:
        return self.techs[name]

    def __iter__(self):
        return iter(self.techs.values())

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.techs.keys())


@dataclass(frozen=True)
class EconomicParams:
    loss_price: float          # $ per kWh of resistive losses
    import_price: float        # $ per kWh imported at the substation
    horizon_hours: float       # total planning horizon in hours
    budget: Optional[float] = None  # $, None = unlimited


@dataclass(frozen=True)
class Network:
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    s_base_kva: float
    substation: int
    demand_p_kw: dict[int, float]
    demand_q_kvar: dict[int, float]
    v_min: float
    v_max: float
    dg_max: dict[int, float]                 # bus -> p.u. max installable P
    candidate: dict[tuple[int, str], bool]   # (bus, tech) -> installable
    substation_p_max: float
    substation_q_max: float

    @property
    def demand_p(self) -> dict[int, float]:
        """Nominal active demand per bus in p.u."""
        return {n: self.demand_p_kw.get(n, 0.0) / self.s_base_kva for n in self.buses}

    @property
    def demand_q(self) -> dict[int, float]:
        """Nominal reactive demand per bus in p.u."""
        return {n: self.demand_q_kvar.get(n, 0.0) / self.s_base_kva for n in self.buses}

    def candidate_pairs(self) -> list[tuple[int, str]]:
        """Sorted (bus, tech) pairs where installation is allowed."""
        return sorted(k for k, v in self.candidate.items() if v)

    def children(self, bus: int) -> list[Line]:
        return [ln for ln in self.lines if ln.from_bus == bus]

    def parent_line(self, bus: int) -> Optional[Line]:
        for ln in self.lines:
            if ln.to_bus == bus:
                return ln
        return None

    @property
    def total_demand_kw(self) -> float:
        return sum(self.demand_p_kw.values())

    @property
    def total_demand_kvar(self) -> float:
        return sum(self.demand_q_kvar.values())

    @property
    def aggregate_pf(self) -> float:
        """Power factor of the aggregate nominal demand."""
        p = self.total_demand_kw
        q = self.total_demand_kvar
        s = math.hypot(p, q)
        return p / s if s > 0 else 1.0


@dataclass(frozen=True)
class CaseData:
    name: str
    network: Network
    catalog: TechnologyCatalog
    econ: EconomicParams


def per_unitize(raw_kw: float, s_base_kva: float) -> float:
    """Convert a kW quantity to per-unit on the system base."""
    if s_base_kva <= 0:
        raise ValueError(f"s_base_kva must be positive, got {s_base_kva}")
    return raw_kw / s_base_kva


def from_per_unit(value_pu: float, s_base_kva: float) -> float:
    """Inverse of `per_unitize`."""
    if s_base_kva <= 0:
        raise ValueError(f"s_base_kva must be positive, got {s_base_kva}")
    return value_pu * s_base_kva


# ---------------------------------------------------------------------------
# Validation


def _check_radial(buses: Iterable[int], lines: list[tuple[int, int]]) -> None:
    """Union-find radiality check: |lines| = |buses|-1 and connected."""
    buses = list(buses)
    n = len(buses)
    if len(lines) != n - 1:
        raise CaseValidationError(
            f"non-radial: {len(lines)} lines for {n} buses (need exactly {n - 1})"
        )
    parent = {b: b for b in buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in lines:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise CaseValidationError(f"non-radial: cycle through line {a}-{b}")
        parent[ra] = rb
    roots = {find(b) for b in buses}
    if len(roots) != 1:
        raise CaseValidationError("non-radial: graph is disconnected")


def _orient_lines(raw_lines: list[Line], substation: int) -> tuple[Line, ...]:
    """Reorient every line away from the substation (BFS order)."""
    adj: dict[int, list[Line]] = {}
    for ln in raw_lines:
        adj.setdefault(ln.from_bus, []).append(ln)
        adj.setdefault(ln.to_bus, []).append(ln)
    oriented: list[Line] = []
    seen = {substation}
    frontier = [substation]
    while frontier:
        nxt = []
        for bus in frontier:
            for ln in adj.get(bus, []):
                other = ln.to_bus if ln.from_bus == bus else ln.from_bus
                if other in seen:
                    continue
                seen.add(other)
                nxt.append(other)
                if ln.from_bus == bus:
                    oriented.append(ln)
                else:
                    oriented.append(
                        Line(bus, other, ln.r_pu, ln.x_pu, ln.i_max_pu)
                    )
        frontier = nxt
    return tuple(oriented)


def validate_case(case: CaseData) -> CaseData:
    """Check every case invariant; raise CaseValidationError on the first hit.

    Returns the case unchanged so calls can be chained.
    """
    net = case.network
    if net.s_base_kva <= 0:
        raise CaseValidationError(f"s_base_kva must be positive, got {net.s_base_kva}")
    if not net.buses:
        raise CaseValidationError("no buses")
    if len(set(net.buses)) != len(net.buses):
        raise CaseValidationError("duplicate bus ids")
    if net.substation not in net.buses:
        raise CaseValidationError(f"substation {net.substation} is not a bus")
    bus_set = set(net.buses)
    for ln in net.lines:
        if ln.from_bus == ln.to_bus:
            raise CaseValidationError(f"self-loop at bus {ln.from_bus}")
        if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
            raise CaseValidationError(f"line {ln.key} references unknown bus")
        if ln.r_pu < 0 or ln.x_pu < 0:
            raise CaseValidationError(f"negative impedance on line {ln.key}")
        if ln.i_max_pu <= 0:
            raise CaseValidationError(f"i_max must be positive on line {ln.key}")
    _check_radial(net.buses, [ln.key for ln in net.lines])
    if not (0 < net.v_min < net.v_max):
        raise CaseValidationError(
            f"need 0 < v_min < v_max, got v_min={net.v_min} v_max={net.v_max}"
        )
    for n, p in net.demand_p_kw.items():
        if n not in bus_set:
            raise CaseValidationError(f"demand at unknown bus {n}")
        if p < 0:
            raise CaseValidationError(f"negative active demand at bus {n}")
    for n, q in net.demand_q_kvar.items():
        if n not in bus_set:
            raise CaseValidationError(f"demand at unknown bus {n}")
        if q < 0:
            raise CaseValidationError(f"negative reactive demand at bus {n}")
    for n, cap in net.dg_max.items():
        if n not in bus_set:
            raise CaseValidationError(f"dg_max at unknown bus {n}")
        if cap < 0:
            raise CaseValidationError(f"negative dg_max at bus {n}")
    for (n, tech), flag in net.candidate.items():
        if n not in bus_set:
            raise CaseValidationError(f"candidate entry at unknown bus {n}")
        if tech not in TECHS:
            raise CaseValidationError(f"unknown technology {tech!r} at bus {n}")
        if flag and n not in net.dg_max:
            raise CaseValidationError(f"candidate bus {n} has no dg_max entry")
    if net.substation_p_max <= 0:
        raise CaseValidationError("substation_p_max must be positive")
    if net.substation_q_max < 0:
        raise CaseValidationError("substation_q_max must be nonnegative")

    for tech in case.catalog:
        if tech.module_kw <= 0:
            raise CaseValidationError(f"{tech.name}: module_kw must be positive")
        if tech.inv_cost < 0 or tech.om_cost < 0:
            raise CaseValidationError(f"{tech.name}: negative cost")
        for pf in (tech.pf_lead, tech.pf_lag):
            if not (0 < pf <= 1):
                raise CaseValidationError(f"{tech.name}: power factor {pf} outside (0, 1]")
        if tech.name == "PV":
            if tech.pv is None:
                raise CaseValidationError("PV technology needs pv production parameters")
            if tech.pv.g_stc <= 0 or tech.pv.g_noct <= 0:
                raise CaseValidationError("PV reference irradiances must be positive")
        if tech.name == "WT":
            if tech.wt is None:
                raise CaseValidationError("WT technology needs wt production parameters")
            if not (tech.wt.v_in < tech.wt.v_rated < tech.wt.v_out):
                raise CaseValidationError(
                    "WT speeds must satisfy v_in < v_rated < v_out, got "
                    f"{tech.wt.v_in}, {tech.wt.v_rated}, {tech.wt.v_out}"
                )

    econ = case.econ
    if econ.loss_price < 0 or econ.import_price < 0:
        raise CaseValidationError("negative price")
    if econ.budget is not None and econ.budget < 0:
        raise CaseValidationError("negative budget")
    if econ.horizon_hours <= 0:
        raise CaseValidationError("horizon_hours must be positive")
    return case


# ---------------------------------------------------------------------------
# Parsing

_SECTIONS = ("network", "lines", "demand", "technologies", "economics")


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def _parse_bus_map(text: str, label: str) -> dict[int, str]:
    """Parse ``12:A, 27:B`` into {12: "A", 27: "B"}."""
    out: dict[int, str] = {}
    text = text.strip()
    if not text or text.lower() == "none":
        return out
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise CaseParseError(f"[{label}] entry {part!r} is not bus:value")
        bus_s, val = part.split(":", 1)
        try:
            bus = int(bus_s)
        except ValueError as exc:
            raise CaseParseError(f"[{label}] bad bus id {bus_s!r}") from exc
        out[bus] = val.strip()
    return out


def parse_case(text: str, name: str = "case") -> CaseData:
    """Parse the case-file format.

    Sections: ``[network]`` (key = value), ``[lines]`` (rows: from to r_pu
    x_pu i_max_pu), ``[demand]`` (rows: bus p_kw q_kvar), ``[technologies]``
    (TECH.key = value), ``[economics]`` (key = value). ``#`` starts a
    comment anywhere on a line.
    """
    section = None
    net_kv: dict[str, str] = {}
    eco_kv: dict[str, str] = {}
    tech_kv: dict[str, dict[str, str]] = {}
    line_rows: list[Line] = []
    demand_rows: list[tuple[int, float, float]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise CaseParseError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise CaseParseError(f"line {lineno}: content before any section")
        if section in ("network", "economics"):
            if "=" not in body:
                raise CaseParseError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in body.split("=", 1))
            (net_kv if section == "network" else eco_kv)[key.lower()] = val
        elif section == "technologies":
            if "=" not in body or "." not in body.split("=", 1)[0]:
                raise CaseParseError(f"line {lineno}: expected TECH.key = value")
            key, val = (s.strip() for s in body.split("=", 1))
            tech, tkey = key.split(".", 1)
            tech_kv.setdefault(tech.strip().upper(), {})[tkey.strip().lower()] = val
        elif section == "lines":
            toks = body.split()
            if len(toks) != 5:
                raise CaseParseError(
                    f"line {lineno}: expected 'from to r_pu x_pu i_max_pu', got {len(toks)} fields"
                )
            try:
                line_rows.append(
                    Line(int(toks[0]), int(toks[1]), float(toks[2]), float(toks[3]), float(toks[4]))
                )
            except ValueError as exc:
                raise CaseParseError(f"line {lineno}: bad number in line row") from exc
        elif section == "demand":
            toks = body.split()
            if len(toks) != 3:
                raise CaseParseError(
                    f"line {lineno}: expected 'bus p_kw q_kvar', got {len(toks)} fields"
                )
            try:
                demand_rows.append((int(toks[0]), float(toks[1]), float(toks[2])))
            except ValueError as exc:
                raise CaseParseError(f"line {lineno}: bad number in demand row") from exc

    for required in ("network", "lines", "technologies", "economics"):
        if (required == "network" and not net_kv) or (required == "lines" and not line_rows) \
                or (required == "technologies" and not tech_kv) \
                or (required == "economics" and not eco_kv):
            raise CaseParseError(f"missing or empty section [{required}]")

    def need(kv: dict[str, str], key: str, where: str) -> str:
        if key not in kv:
            raise CaseParseError(f"[{where}] missing key {key!r}")
        return kv[key]

    def fnum(s: str, key: str) -> float:
        try:
            return float(s)
        except ValueError as exc:
            raise CaseParseError(f"bad number {s!r} for {key!r}") from exc

    s_base = fnum(need(net_kv, "s_base_kva", "network"), "s_base_kva")
    substation = int(fnum(need(net_kv, "substation", "network"), "substation"))

    buses = sorted({ln.from_bus for ln in line_rows} | {ln.to_bus for ln in line_rows} | {substation})

    dg_max = {
        bus: fnum(val, f"dg_max[{bus}]")
        for bus, val in _parse_bus_map(net_kv.get("dg_max", ""), "network.dg_max").items()
    }
    candidate: dict[tuple[int, str], bool] = {}
    for bus, val in _parse_bus_map(net_kv.get("candidate", ""), "network.candidate").items():
        for tech in val.split("|"):
            tech = tech.strip().upper()
            if tech:
                candidate[(bus, tech)] = True

    demand_p = {bus: p for bus, p, _ in demand_rows}
    demand_q = {bus: q for bus, _, q in demand_rows}
    if len(demand_p) != len(demand_rows):
        raise CaseParseError("duplicate demand row for a bus")

    network = Network(
        buses=tuple(buses),
        lines=tuple(line_rows),
        s_base_kva=s_base,
        substation=substation,
        demand_p_kw=demand_p,
        demand_q_kvar=demand_q,
        v_min=fnum(need(net_kv, "v_min", "network"), "v_min"),
        v_max=fnum(need(net_kv, "v_max", "network"), "v_max"),
        dg_max=dg_max,
        candidate=candidate,
        substation_p_max=fnum(need(net_kv, "substation_p_max", "network"), "substation_p_max"),
        substation_q_max=fnum(need(net_kv, "substation_q_max", "network"), "substation_q_max"),
    )

    techs: dict[str, Technology] = {}
    for tech_name, kv in tech_kv.items():
        if tech_name not in TECHS:
            raise CaseParseError(f"unknown technology {tech_name!r} in [technologies]")
        pv = wt = None
        if tech_name == "PV":
            pv = PvParams(
                y_rated=fnum(need(kv, "y_rated", "PV"), "y_rated"),
                g_stc=fnum(need(kv, "g_stc", "PV"), "g_stc"),
                g_noct=fnum(need(kv, "g_noct", "PV"), "g_noct"),
                t_c_stc=fnum(need(kv, "t_c_stc", "PV"), "t_c_stc"),
                t_c_noct=fnum(need(kv, "t_c_noct", "PV"), "t_c_noct"),
                t_a_noct=fnum(need(kv, "t_a_noct", "PV"), "t_a_noct"),
                alpha=fnum(need(kv, "alpha", "PV"), "alpha"),
            )
        if tech_name == "WT":
            wt = WtParams(
                y_rated=fnum(need(kv, "y_rated", "WT"), "y_rated"),
                v_in=fnum(need(kv, "v_in", "WT"), "v_in"),
                v_rated=fnum(need(kv, "v_rated", "WT"), "v_rated"),
                v_out=fnum(need(kv, "v_out", "WT"), "v_out"),
            )
        techs[tech_name] = Technology(
            name=tech_name,
            module_kw=fnum(need(kv, "module_kw", tech_name), "module_kw"),
            inv_cost=fnum(need(kv, "inv_cost", tech_name), "inv_cost"),
            om_cost=fnum(need(kv, "om_cost", tech_name), "om_cost"),
            pf_lead=fnum(need(kv, "pf_lead", tech_name), "pf_lead"),
            pf_lag=fnum(need(kv, "pf_lag", tech_name), "pf_lag"),
            pv=pv,
            wt=wt,
        )

    budget_raw = eco_kv.get("budget", "none").strip().lower()
    econ = EconomicParams(
        loss_price=fnum(need(eco_kv, "loss_price", "economics"), "loss_price"),
        import_price=fnum(need(eco_kv, "import_price", "economics"), "import_price"),
        horizon_hours=fnum(need(eco_kv, "horizon_hours", "economics"), "horizon_hours"),
        budget=None if budget_raw in ("none", "", "unlimited") else fnum(budget_raw, "budget"),
    )

    case = CaseData(name=name, network=network, catalog=TechnologyCatalog(techs), econ=econ)
    validate_case(case)
    # reorient after validation so radiality errors surface first
    oriented = _orient_lines(list(network.lines), substation)
    network = Network(
        buses=network.buses,
        lines=oriented,
        s_base_kva=network.s_base_kva,
        substation=network.substation,
        demand_p_kw=network.demand_p_kw,
        demand_q_kvar=network.demand_q_kvar,
        v_min=network.v_min,
        v_max=network.v_max,
        dg_max=network.dg_max,
        candidate=network.candidate,
        substation_p_max=network.substation_p_max,
        substation_q_max=network.substation_q_max,
    )
    return CaseData(name=name, network=network, catalog=case.catalog, econ=econ)


def load_case(path) -> CaseData:
    """Load and validate a case file from disk."""
    from pathlib import Path

    p = Path(path)
    if not p.exists():
        raise CaseParseError(f"case file not found: {p}")
    name = p.stem
    return parse_case(p.read_text(encoding="utf-8"), name=name)


def serialize_case(case: CaseData) -> str:
    """Render a case back to the file format; floats use repr (round-trip exact)."""
    net = case.network
    out: list[str] = [f"# {case.name}", "", "[network]"]
    out.append(f"s_base_kva = {net.s_base_kva!r}")
    out.append(f"substation = {net.substation}")
    out.append(f"v_min = {net.v_min!r}")
    out.append(f"v_max = {net.v_max!r}")
    out.append(f"substation_p_max = {net.substation_p_max!r}")
    out.append(f"substation_q_max = {net.substation_q_max!r}")
    if net.dg_max:
        body = ", ".join(f"{b}:{v!r}" for b, v in sorted(net.dg_max.items()))
        out.append(f"dg_max = {body}")
    if net.candidate:
        per_bus: dict[int, list[str]] = {}
        for (b, t), flag in sorted(net.candidate.items()):
            if flag:
                per_bus.setdefault(b, []).append(t)
        body = ", ".join(f"{b}:{'|'.join(ts)}" for b, ts in sorted(per_bus.items()))
        out.append(f"candidate = {body}")
    out.append("")
    out.append("[lines]")
    out.append("# from  to  r_pu  x_pu  i_max_pu")
    for ln in net.lines:
        out.append(f"{ln.from_bus} {ln.to_bus} {ln.r_pu!r} {ln.x_pu!r} {ln.i_max_pu!r}")
    out.append("")
    out.append("[demand]")
    out.append("# bus  p_kw  q_kvar")
    for bus in sorted(net.demand_p_kw):
        out.append(f"{bus} {net.demand_p_kw[bus]!r} {net.demand_q_kvar.get(bus, 0.0)!r}")
    out.append("")
    out.append("[technologies]")
    for tech in case.catalog:
        out.append(f"{tech.name}.module_kw = {tech.module_kw!r}")
        out.append(f"{tech.name}.inv_cost = {tech.inv_cost!r}")
        out.append(f"{tech.name}.om_cost = {tech.om_cost!r}")
        out.append(f"{tech.name}.pf_lead = {tech.pf_lead!r}")
        out.append(f"{tech.name}.pf_lag = {tech.pf_lag!r}")
        if tech.pv is not None:
            p = tech.pv
            out.append(f"{tech.name}.y_rated = {p.y_rated!r}")
            out.append(f"{tech.name}.g_stc = {p.g_stc!r}")
            out.append(f"{tech.name}.g_noct = {p.g_noct!r}")
            out.append(f"{tech.name}.t_c_stc = {p.t_c_stc!r}")
            out.append(f"{tech.name}.t_c_noct = {p.t_c_noct!r}")
            out.append(f"{tech.name}.t_a_noct = {p.t_a_noct!r}")
            out.append(f"{tech.name}.alpha = {p.alpha!r}")
        if tech.wt is not None:
            w = tech.wt
            out.append(f"{tech.name}.y_rated = {w.y_rated!r}")
            out.append(f"{tech.name}.v_in = {w.v_in!r}")
            out.append(f"{tech.name}.v_rated = {w.v_rated!r}")
            out.append(f"{tech.name}.v_out = {w.v_out!r}")
    out.append("")
    out.append("[economics]")
    e = case.econ
    out.append(f"loss_price = {e.loss_price!r}")
    out.append(f"import_price = {e.import_price!r}")
    out.append(f"horizon_hours = {e.horizon_hours!r}")
    out.append(f"budget = {'none' if e.budget is None else repr(e.budget)}")
    out.append("")
    return "\n".join(out)


def bundled_case_path(name: str) -> str:
    """Filesystem path of a case shipped with the package (e.g. 'case34-reconstructed')."""
    res = resources.files("dgplan").joinpath("cases", f"{name}.dgc")
    return str(res)
