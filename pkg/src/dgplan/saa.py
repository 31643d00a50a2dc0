"""Sample-average-approximation bounds, gaps, and stability sweeps.

For each sample size n and replica m this module draws an independent
scenario sample (bootstrap resample of the empirical hours, clustered to
n operating points), solves the resulting two-stage investment problem
to get a statistical lower bound LB_m(n) and a candidate plan, then
prices that plan against the full empirical distribution to get an upper
bound UB_m. gap_m = UB_m - LB_m, computed from the very same floats.

Replica sampling: replica (n, m) clusters a bootstrap resample (with
replacement, same length) of the empirical hours with a seed derived
from (seed_base, n, m). The degenerate n = N case uses the empirical
set itself, no resampling, so LB, UB and the ground truth coincide.

Ground truth: the deterministic-equivalent optimum over the full
empirical set (or over ground_truth_n clusters of it when configured,
for datasets too large to solve whole).

Upper-bound evaluation is scenario-decomposable: operation subproblems
are independent given the plan, so they are solved in block-diagonal
batches, in parallel across worker processes. Aggregation order is fixed
by task key, never by completion order, so reports are reproducible
bit-for-bit for a given seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import t as student_t

from .clustering import kmeans
from .grid_case import CaseData
from .planner import (
    BuildOptions,
    InvestmentPlan,
    build_deterministic_equivalent,
    build_operation_model,
    enumerate_plans,
    extract_plan,
    make_plan,
)
from .milp import LIMIT_REACHED, OPTIMAL, INFEASIBLE, SolveOptions, solve
from .scenarios import Scenario, ScenarioSet, scenarios_from_clusters
from .timeseries import Dataset, FeatureStats, standardize


class SaaError(Exception):
    pass


@dataclass
class SaaConfig:
    n_values: list[int]
    replications: int = 10
    ground_truth_n: Optional[int] = None  # None = full empirical set
    eval_n: Optional[int] = None          # None = evaluate UB on the full set
    seed_base: int = 0
    threads: Optional[int] = None         # None = cpu count
    batch_size: int = 1024                # scenarios per UB block solve
    mip_gap: float = 1e-6
    time_limit: float = 600.0
    # full-set ground truth: one monolithic MILP up to gt_milp_limit
    # scenarios, exact plan enumeration beyond that (see ground_truth_solve)
    ground_truth_method: str = "auto"     # auto | milp | enumerate
    gt_milp_limit: int = 1000
    gt_proxy_clusters: int = 400
    enumeration_cap: int = 20000
    options: BuildOptions = field(default_factory=BuildOptions)

    def config_hash(self) -> str:
        blob = json.dumps(
            {
                "n_values": list(self.n_values),
                "replications": self.replications,
                "ground_truth_n": self.ground_truth_n,
                "eval_n": self.eval_n,
                "seed_base": self.seed_base,
                "batch_size": self.batch_size,
                "mip_gap": self.mip_gap,
                "ground_truth_method": self.ground_truth_method,
                "gt_milp_limit": self.gt_milp_limit,
                "gt_proxy_clusters": self.gt_proxy_clusters,
                "polygon_sides": self.options.polygon_sides,
                "secant_fracs": list(self.options.secant_fracs),
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:8]

    def validate(self, n_hours: int) -> None:
        if not self.n_values:
            raise SaaError("n_values is empty")
        for n in self.n_values:
            if n < 1:
                raise SaaError(f"scenario count {n} < 1")
            if n > n_hours:
                raise SaaError(f"scenario count {n} exceeds data points ({n_hours})")
        if self.replications < 1:
            raise SaaError("need at least one replication")
        if self.ground_truth_n is not None and not (1 <= self.ground_truth_n <= n_hours):
            raise SaaError("ground_truth_n outside [1, data points]")
        if self.eval_n is not None and not (1 <= self.eval_n <= n_hours):
            raise SaaError("eval_n outside [1, data points]")


@dataclass(frozen=True)
class PreparedData:
    """Dataset standardized once; replicas resample rows of z."""

    z: np.ndarray
    stats: FeatureStats
    peak_demand_kw: float
    n_hours: int

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "PreparedData":
        z, stats = standardize(ds)
        return cls(z=z, stats=stats, peak_demand_kw=ds.peak_demand_kw, n_hours=len(ds))


def empirical_scenario_set(pdata: PreparedData, case: CaseData) -> ScenarioSet:
    """Every observed hour as its own scenario with probability 1/N."""
    sizes = np.ones(pdata.n_hours, dtype=np.int64)
    return scenarios_from_clusters(
        pdata.z, sizes, pdata.stats, pdata.peak_demand_kw,
        case.catalog, case.econ, source_hours=pdata.n_hours,
    )


def clustered_scenario_set(
    pdata: PreparedData, case: CaseData, k: int, seed: int, rows: Optional[np.ndarray] = None
) -> ScenarioSet:
    """Cluster (a resample of) the standardized hours to k scenarios."""
    z = pdata.z if rows is None else pdata.z[rows]
    if k == z.shape[0]:
        sizes = np.ones(k, dtype=np.int64)
        return scenarios_from_clusters(
            z, sizes, pdata.stats, pdata.peak_demand_kw,
            case.catalog, case.econ, source_hours=k,
        )
    km = kmeans(z, k, seed)
    return scenarios_from_clusters(
        km.centroids, km.sizes, pdata.stats, pdata.peak_demand_kw,
        case.catalog, case.econ, source_hours=z.shape[0],
    )


def replica_scenario_set(
    pdata: PreparedData, case: CaseData, n: int, replica: int, seed_base: int
) -> ScenarioSet:
    """Scenario sample for replica (n, replica); see module docstring."""
    if n == pdata.n_hours:
        return empirical_scenario_set(pdata, case)
    ss = np.random.SeedSequence([seed_base, n, replica])
    boot_ss, km_ss = ss.spawn(2)
    rng = np.random.default_rng(boot_ss)
    rows = rng.integers(0, pdata.n_hours, size=pdata.n_hours)
    km_seed = int(km_ss.generate_state(1)[0])
    return clustered_scenario_set(pdata, case, n, km_seed, rows=rows)


# ---------------------------------------------------------------------------
# Worker plumbing: the pool is initialized once with the shared immutable
# inputs; tasks carry only small per-task payloads.

_G: dict = {}


def _worker_init(case: CaseData, pdata: Optional[PreparedData], cfg: SaaConfig) -> None:
    _G["case"] = case
    _G["pdata"] = pdata
    _G["cfg"] = cfg


def _solve_opts(cfg: SaaConfig) -> SolveOptions:
    return SolveOptions(mip_gap_target=cfg.mip_gap, time_limit=cfg.time_limit)


def _lb_task(args):
    """Solve one replica's sampled two-stage problem; returns lb and plan."""
    n, replica = args
    case, pdata, cfg = _G["case"], _G["pdata"], _G["cfg"]
    sset = replica_scenario_set(pdata, case, n, replica, cfg.seed_base)
    model = build_deterministic_equivalent(
        case.network, case.catalog, case.econ, sset, cfg.options
    )
    sol = solve(model.problem, _solve_opts(cfg))
    if sol.status not in (OPTIMAL, LIMIT_REACHED) or not sol.has_values:
        raise SaaError(f"replica (n={n}, m={replica}): solve status {sol.status}")
    plan = extract_plan(model, sol)
    return n, replica, float(sol.objective_value), dict(plan.modules), sol.solve_wall_time


def _ub_chunk_task(args):
    """Price a fixed plan on one block of evaluation scenarios."""
    key, modules, chunk = args
    case, cfg = _G["case"], _G["cfg"]
    plan = make_plan(case.network, case.catalog, dict(modules))
    scen_list = [Scenario(**kw) for kw in chunk]
    weights = [s.hours for s in scen_list]
    model = build_operation_model(
        case.network, case.catalog, case.econ, scen_list, plan, cfg.options, weights
    )
    sol = solve(model.problem, _solve_opts(cfg))
    if sol.status == INFEASIBLE:
        # narrow down which scenarios cannot be served under this plan
        bad = []
        for s, w in zip(scen_list, weights):
            m1 = build_operation_model(
                case.network, case.catalog, case.econ, [s], plan, cfg.options, [w]
            )
            if solve(m1.problem, _solve_opts(cfg)).status == INFEASIBLE:
                bad.append(s.id)
        return key, math.inf, bad
    if sol.status not in (OPTIMAL, LIMIT_REACHED) or not sol.has_values:
        raise SaaError(f"ub chunk {key}: solve status {sol.status}")
    return key, float(sol.objective_value), []


def _scenario_kwargs(s: Scenario) -> dict:
    return {
        "id": s.id,
        "gamma_pv": s.gamma_pv,
        "gamma_wt": s.gamma_wt,
        "gamma_d": s.gamma_d,
        "prob": s.prob,
        "hours": s.hours,
        "import_price": s.import_price,
        "gamma_cg": s.gamma_cg,
    }


@dataclass
class UbResult:
    value: float
    infeasible_scenarios: list[int]


def evaluate_ub(
    case: CaseData,
    plan: InvestmentPlan,
    eval_set: ScenarioSet,
    cfg: Optional[SaaConfig] = None,
    pool: Optional[ProcessPoolExecutor] = None,
) -> UbResult:
    """invest cost + sum over eval scenarios of hours x optimal operating
    rate under the fixed plan. Infeasible scenarios make the value +inf
    and are listed in the result."""
    cfg = cfg or SaaConfig(n_values=[len(eval_set)])
    scen = list(eval_set)
    chunks = []
    for start in range(0, len(scen), cfg.batch_size):
        block = scen[start : start + cfg.batch_size]
        chunks.append((start, tuple(plan.modules.items()), [_scenario_kwargs(s) for s in block]))
    results: dict[int, tuple[float, list[int]]] = {}
    if pool is None:
        _G["case"] = case
        _G["cfg"] = cfg
        _G.setdefault("pdata", None)
        for chunk in chunks:
            key, val, bad = _ub_chunk_task(chunk)
            results[key] = (val, bad)
    else:
        for key, val, bad in pool.map(_ub_chunk_task, chunks):
            results[key] = (val, bad)
    total = plan.invest_cost
    infeasible: list[int] = []
    for start in sorted(results):
        val, bad = results[start]
        infeasible.extend(bad)
        total += val
    if infeasible:
        return UbResult(math.inf, sorted(infeasible))
    return UbResult(total, [])


def estimate_lb(
    case: CaseData, pdata: PreparedData, n: int, replica: int, cfg: SaaConfig
) -> tuple[float, InvestmentPlan, float]:
    """Lower-bound solve for one replica (serial convenience wrapper)."""
    _worker_init(case, pdata, cfg)
    _, _, lb, modules, wall = _lb_task((n, replica))
    return lb, make_plan(case.network, case.catalog, modules), wall


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ReplicaRow:
    n: int
    replica: int
    lb: float = math.nan
    ub: float = math.nan
    gap: float = math.nan
    solve_time: float = math.nan
    plan: Optional[InvestmentPlan] = None
    error: Optional[str] = None
    infeasible_scenarios: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None


def _ci95(values: Sequence[float]) -> float:
    m = len(values)
    if m < 2:
        return 0.0
    s = float(np.std(values, ddof=1))
    return float(student_t.ppf(0.975, m - 1)) * s / math.sqrt(m)


def _one_sided_95(values: Sequence[float]) -> float:
    m = len(values)
    if m < 2:
        return 0.0
    s = float(np.std(values, ddof=1))
    return float(student_t.ppf(0.95, m - 1)) * s / math.sqrt(m)


@dataclass
class SaaReport:
    seed_base: int
    config_hash: str
    ground_truth: float
    ground_truth_plan: Optional[InvestmentPlan]
    rows: list[ReplicaRow]

    def rows_for(self, n: int) -> list[ReplicaRow]:
        return [r for r in self.rows if r.n == n and r.ok]

    def failures(self) -> list[ReplicaRow]:
        return [r for r in self.rows if not r.ok]

    def summary(self) -> dict:
        out: dict = {
            "seed_base": self.seed_base,
            "config_hash": self.config_hash,
            "ground_truth": self.ground_truth,
            "per_n": {},
            "failed_replicas": [
                {"n": r.n, "replica": r.replica, "error": r.error} for r in self.failures()
            ],
        }
        n_values = sorted({r.n for r in self.rows})
        for n in n_values:
            ok = self.rows_for(n)
            if not ok:
                out["per_n"][str(n)] = {"replicas": 0}
                continue
            lbs = [r.lb for r in ok]
            ubs = [r.ub for r in ok]
            gaps = [r.gap for r in ok]
            out["per_n"][str(n)] = {
                "replicas": len(ok),
                "lb_mean": float(np.mean(lbs)),
                "lb_std": float(np.std(lbs, ddof=1)) if len(lbs) > 1 else 0.0,
                "lb_ci95": _ci95(lbs),
                "lb_upper95": float(np.mean(lbs)) + _one_sided_95(lbs),
                "ub_mean": float(np.mean(ubs)) if all(map(math.isfinite, ubs)) else math.inf,
                "ub_std": float(np.std(ubs, ddof=1)) if len(ubs) > 1 and all(map(math.isfinite, ubs)) else 0.0,
                "ub_ci95": _ci95(ubs) if all(map(math.isfinite, ubs)) else math.inf,
                "gap_mean": float(np.mean(gaps)) if all(map(math.isfinite, gaps)) else math.inf,
                "gap_median": float(np.median(gaps)),
                "gap_std": float(np.std(gaps, ddof=1)) if len(gaps) > 1 and all(map(math.isfinite, gaps)) else 0.0,
                "time_mean_s": float(np.mean([r.solve_time for r in ok])),
                "time_total_s": float(np.sum([r.solve_time for r in ok])),
            }
        return out


@dataclass
class StabilityRow:
    n: int
    replica: int
    in_sample_ratio: float
    out_sample_ratio: float
    mix: Optional[dict[str, float]]  # None when the plan installs nothing
    total_kw: float


@dataclass
class StabilityReport:
    seed_base: int
    config_hash: str
    ground_truth: float
    rows: list[StabilityRow]

    def rows_for(self, n: int) -> list[StabilityRow]:
        return [r for r in self.rows if r.n == n]

    def summary(self) -> dict:
        out: dict = {
            "seed_base": self.seed_base,
            "config_hash": self.config_hash,
            "ground_truth": self.ground_truth,
            "per_n": {},
        }
        for n in sorted({r.n for r in self.rows}):
            rows = self.rows_for(n)
            ins = [r.in_sample_ratio for r in rows]
            outs = [r.out_sample_ratio for r in rows if math.isfinite(r.out_sample_ratio)]
            out["per_n"][str(n)] = {
                "replicas": len(rows),
                "in_ratio_mean": float(np.mean(ins)),
                "in_ratio_std": float(np.std(ins, ddof=1)) if len(ins) > 1 else 0.0,
                "out_ratio_mean": float(np.mean(outs)) if outs else math.inf,
                "out_ratio_std": float(np.std(outs, ddof=1)) if len(outs) > 1 else 0.0,
            }
        return out


def _milp_ground_truth(
    case: CaseData, sset: ScenarioSet, cfg: SaaConfig
) -> tuple[float, InvestmentPlan]:
    model = build_deterministic_equivalent(
        case.network, case.catalog, case.econ, sset, cfg.options
    )
    sol = solve(model.problem, _solve_opts(cfg))
    if sol.status not in (OPTIMAL, LIMIT_REACHED) or not sol.has_values:
        raise SaaError(f"ground-truth solve failed: status {sol.status}")
    return float(sol.objective_value), extract_plan(model, sol)


def _gamma_proxy_set(eval_set: ScenarioSet, case: CaseData, cfg: SaaConfig) -> ScenarioSet:
    """Cluster the evaluation scenarios in capacity-factor space.

    Centroids here are exact means of member (gamma_pv, gamma_wt, gamma_d)
    vectors, and the second-stage LP value is convex in those parameters
    (they enter only right-hand sides and variable bounds), so by Jensen
    the proxy cost of a fixed plan never exceeds its exact full-set cost.
    That makes the proxy a sound pruning bound for exact enumeration.
    """
    g = np.array([[s.gamma_pv, s.gamma_wt, s.gamma_d] for s in eval_set])
    n = g.shape[0]
    k = min(cfg.gt_proxy_clusters, n)
    seed = int(np.random.SeedSequence([cfg.seed_base, 0x9A]).generate_state(1)[0])
    km = kmeans(g, k, seed)
    horizon = case.econ.horizon_hours
    price = next(iter(eval_set)).import_price
    scen = tuple(
        Scenario(
            id=c,
            gamma_pv=min(1.0, max(0.0, float(km.centroids[c, 0]))),
            gamma_wt=min(1.0, max(0.0, float(km.centroids[c, 1]))),
            gamma_d=max(0.0, float(km.centroids[c, 2])),
            prob=float(km.sizes[c]) / n,
            hours=float(km.sizes[c]) / n * horizon,
            import_price=price,
        )
        for c in range(k)
    )
    return ScenarioSet(scen, source_hours=n)


def _operation_value(case: CaseData, plan: InvestmentPlan, sset: ScenarioSet, cfg: SaaConfig) -> float:
    """Hours-weighted operation cost of a plan over a scenario set (one LP)."""
    scen = list(sset)
    model = build_operation_model(
        case.network,
        case.catalog,
        case.econ,
        scen,
        plan,
        cfg.options,
        weights=[s.hours for s in scen],
    )
    sol = solve(model.problem, _solve_opts(cfg))
    if sol.status == INFEASIBLE:
        return math.inf
    if sol.status not in (OPTIMAL, LIMIT_REACHED) or not sol.has_values:
        raise SaaError(f"operation solve failed: status {sol.status}")
    return float(sol.objective_value)


def _enumerated_ground_truth(
    case: CaseData, eval_set: ScenarioSet, cfg: SaaConfig, pool=None
) -> tuple[float, InvestmentPlan]:
    """Exact full-set optimum by brute force over the plan lattice.

    Plans are ranked by a sound lower-bound proxy (gamma-space clustered
    operation cost, see _gamma_proxy_set); exact evaluation walks the
    ranking and stops once the next proxy cannot beat the incumbent.
    Without a constant import price the proxy is skipped and every plan
    is evaluated exactly.
    """
    plans = enumerate_plans(case.network, case.catalog, case.econ, cap=cfg.enumeration_cap)
    prices = {s.import_price for s in eval_set}
    use_proxy = len(prices) == 1 and len(eval_set) > cfg.gt_proxy_clusters
    if use_proxy:
        proxy_set = _gamma_proxy_set(eval_set, case, cfg)
        ranked = sorted(
            (
                (plan.invest_cost + _operation_value(case, plan, proxy_set, cfg), i)
                for i, plan in enumerate(plans)
            ),
        )
    else:
        ranked = [(-math.inf, i) for i in range(len(plans))]
    best = math.inf
    best_plan: Optional[InvestmentPlan] = None
    for proxy_value, i in ranked:
        if proxy_value >= best - 1e-6 * max(1.0, abs(best)):
            break  # sorted: nothing later can improve on the incumbent
        exact = evaluate_ub(case, plans[i], eval_set, cfg, pool=pool)
        if exact.value < best:
            best = exact.value
            best_plan = plans[i]
    if best_plan is None:
        raise SaaError("enumeration found no feasible plan")
    return best, best_plan


def ground_truth_solve(
    case: CaseData, pdata: PreparedData, cfg: SaaConfig, pool=None
) -> tuple[float, InvestmentPlan, ScenarioSet]:
    """Reference optimum z*.

    With ground_truth_n set, solves the deterministic equivalent over that
    many clusters of the full data (the classic large-n' reference).
    Otherwise the reference is the exact full-empirical-set optimum:
    one monolithic MILP when the set is small enough, exact plan
    enumeration with sound pruning beyond that.
    """
    eval_set = empirical_scenario_set(pdata, case)
    if cfg.ground_truth_n is not None and cfg.ground_truth_n < pdata.n_hours:
        gt_seed = int(np.random.SeedSequence([cfg.seed_base, 0x67]).generate_state(1)[0])
        sset = clustered_scenario_set(pdata, case, cfg.ground_truth_n, gt_seed)
        value, plan = _milp_ground_truth(case, sset, cfg)
        return value, plan, sset
    method = cfg.ground_truth_method
    if method == "auto":
        method = "milp" if pdata.n_hours <= cfg.gt_milp_limit else "enumerate"
    if method == "milp":
        value, plan = _milp_ground_truth(case, eval_set, cfg)
    elif method == "enumerate":
        value, plan = _enumerated_ground_truth(case, eval_set, cfg, pool=pool)
    else:
        raise SaaError(f"unknown ground_truth_method {cfg.ground_truth_method!r}")
    return value, plan, eval_set


def run_saa(case: CaseData, ds: Dataset, cfg: SaaConfig) -> SaaReport:
    """Full LB/UB/gap sweep over cfg.n_values x cfg.replications."""
    pdata = PreparedData.from_dataset(ds)
    cfg.validate(pdata.n_hours)

    if cfg.eval_n is None or cfg.eval_n == pdata.n_hours:
        eval_set = empirical_scenario_set(pdata, case)
    else:
        ev_seed = int(np.random.SeedSequence([cfg.seed_base, 0xE7]).generate_state(1)[0])
        eval_set = clustered_scenario_set(pdata, case, cfg.eval_n, ev_seed)

    tasks = [(n, r) for n in cfg.n_values for r in range(cfg.replications)]
    rows: dict[tuple[int, int], ReplicaRow] = {
        key: ReplicaRow(n=key[0], replica=key[1]) for key in tasks
    }
    workers = cfg.threads or os.cpu_count() or 1
    workers = max(1, min(workers, len(tasks)))
    plans: dict[tuple[int, int], InvestmentPlan] = {}

    def record_lb(key, outcome, err=None):
        row = rows[key]
        if err is not None:
            row.error = err
            return
        _, _, lb, modules, wall = outcome
        row.lb = lb
        row.solve_time = wall
        plans[key] = make_plan(case.network, case.catalog, modules)
        row.plan = plans[key]

    if workers == 1:
        # single-core path: no process pool, no pickling overhead
        _worker_init(case, pdata, cfg)
        gt_value, gt_plan, _ = ground_truth_solve(case, pdata, cfg)
        for key in tasks:
            try:
                record_lb(key, _lb_task(key))
            except Exception as exc:
                record_lb(key, None, err=f"{type(exc).__name__}: {exc}")
        for key in tasks:
            if key not in plans:
                continue
            ub = evaluate_ub(case, plans[key], eval_set, cfg)
            row = rows[key]
            row.ub = ub.value
            row.infeasible_scenarios = ub.infeasible_scenarios
            row.gap = row.ub - row.lb
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(case, pdata, cfg)
        ) as pool:
            _worker_init(case, pdata, cfg)
            gt_value, gt_plan, _ = ground_truth_solve(case, pdata, cfg, pool=pool)
            futures = {pool.submit(_lb_task, t): t for t in tasks}
            for fut, key in futures.items():
                try:
                    record_lb(key, fut.result())
                except Exception as exc:  # record, keep sweeping
                    record_lb(key, None, err=f"{type(exc).__name__}: {exc}")
            for key in tasks:
                if key not in plans:
                    continue
                ub = evaluate_ub(case, plans[key], eval_set, cfg, pool=pool)
                row = rows[key]
                row.ub = ub.value
                row.infeasible_scenarios = ub.infeasible_scenarios
                row.gap = row.ub - row.lb

    return SaaReport(
        seed_base=cfg.seed_base,
        config_hash=cfg.config_hash(),
        ground_truth=gt_value,
        ground_truth_plan=gt_plan,
        rows=[rows[k] for k in sorted(rows)],
    )


def run_stability(case: CaseData, ds: Dataset, cfg: SaaConfig) -> tuple[SaaReport, StabilityReport]:
    """SAA sweep plus in-/out-of-sample ratios and capacity mixes."""
    report = run_saa(case, ds, cfg)
    gt = report.ground_truth
    rows: list[StabilityRow] = []
    for r in report.rows:
        if not r.ok:
            continue
        mix = None
        total = 0.0
        if r.plan is not None:
            kw = r.plan.installed_kw(case.catalog)
            total = sum(kw.values())
            if total > 0:
                mix = {tech: kw[tech] / total for tech in case.catalog.names}
        rows.append(
            StabilityRow(
                n=r.n,
                replica=r.replica,
                in_sample_ratio=r.lb / gt,
                out_sample_ratio=r.ub / gt,
                mix=mix,
                total_kw=total,
            )
        )
    stability = StabilityReport(
        seed_base=cfg.seed_base,
        config_hash=cfg.config_hash(),
        ground_truth=gt,
        rows=rows,
    )
    return report, stability


# ---------------------------------------------------------------------------
# Serialization


def write_saa_csv(report: SaaReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("n,replica,lb,ub,gap,solve_time,error\n")
        for r in report.rows:
            err = (r.error or "").replace(",", ";").replace("\n", " ")
            fh.write(f"{r.n},{r.replica},{r.lb!r},{r.ub!r},{r.gap!r},{r.solve_time!r},{err}\n")


def write_saa_json(report: SaaReport, path) -> None:
    Path(path).write_text(json.dumps(report.summary(), indent=1, sort_keys=True), encoding="utf-8")


def write_stability_csv(report: StabilityReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("n,replica,in_sample_ratio,out_sample_ratio,total_kw\n")
        for r in report.rows:
            fh.write(
                f"{r.n},{r.replica},{r.in_sample_ratio!r},{r.out_sample_ratio!r},{r.total_kw!r}\n"
            )


def report_basename(kind: str, cfg: SaaConfig) -> str:
    return f"{kind}_seed{cfg.seed_base}_{cfg.config_hash()}"
