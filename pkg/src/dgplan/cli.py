"""Command-line interface.

Subcommands: ingest, synth, cluster, plan, saa, stability, export-mps.
Exit codes: 0 success, 1 solver/numeric failure, 2 input error.

A config file (same key = value syntax as case files, one ``[run]``
section) can preset any long flag; explicit command-line flags win. The
external solver command template can also come from the
``DGPLAN_SOLVER_CMD`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .clustering import ClusteringError, active_kernel
from .grid_case import CaseData, CaseError, load_case
from .milp import (
    BackendError,
    ExternalCommandBackend,
    MilpError,
    ScipyHighsBackend,
    SolveOptions,
    export_mps,
    solve,
)
from .planner import (
    BuildOptions,
    PlannerError,
    build_deterministic_equivalent,
    extract_solution,
    verify_physics,
)
from .saa import (
    SaaConfig,
    SaaError,
    report_basename,
    run_saa,
    run_stability,
    write_saa_csv,
    write_saa_json,
    write_stability_csv,
)
from .scenarios import build_scenarios, read_scenarios, write_scenarios
from .timeseries import Dataset, IngestError, ingest_csv, synth_dataset, write_csv

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2

_INPUT_ERRORS = (CaseError, IngestError, ClusteringError, FileNotFoundError, ValueError)
_SOLVER_ERRORS = (MilpError, BackendError, PlannerError, SaaError)


class _CliInputError(Exception):
    pass


def _read_run_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    p = Path(path)
    if not p.exists():
        raise _CliInputError(f"config file not found: {p}")
    section = None
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip().lower()
            continue
        if section != "run":
            continue
        if "=" not in body:
            raise _CliInputError(f"{p} line {lineno}: expected key = value")
        key, val = (s.strip() for s in body.split("=", 1))
        cfg[key.lower().replace("-", "_")] = val
    return cfg


def _merge_config(args: argparse.Namespace) -> None:
    """Fill unset flags from the config file, then apply hard defaults."""
    file_cfg = _read_run_config(args.config) if getattr(args, "config", None) else {}
    for key, raw in file_cfg.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, raw)
    if getattr(args, "solver_cmd", None) is None:
        args.solver_cmd = os.environ.get("DGPLAN_SOLVER_CMD") or None


def _as_int(val, name: str) -> int:
    try:
        return int(val)
    except (TypeError, ValueError):
        raise _CliInputError(f"{name} must be an integer, got {val!r}") from None


def _as_float(val, name: str) -> float:
    try:
        return float(val)
    except (TypeError, ValueError):
        raise _CliInputError(f"{name} must be a number, got {val!r}") from None


def _n_values(raw) -> list[int]:
    if raw is None:
        raise _CliInputError("missing --n-values")
    if isinstance(raw, list):
        return [int(v) for v in raw]
    return [_as_int(tok, "n-values entry") for tok in str(raw).replace(" ", "").split(",") if tok]


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise _CliInputError(f"missing --{name.replace('_', '-')}")


def _load_case(args) -> CaseData:
    _require(args, "case")
    return load_case(args.case)


def _load_data(args) -> Dataset:
    _require(args, "data")
    return ingest_csv(args.data, gap_policy=args.gap_policy or "reject")


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve_options(args) -> SolveOptions:
    return SolveOptions(
        mip_gap_target=_as_float(args.mip_gap or 1e-6, "mip-gap"),
        time_limit=_as_float(args.time_limit or 600.0, "time-limit"),
        threads=_as_int(args.threads, "threads") if args.threads is not None else None,
    )


def _backend(args):
    if getattr(args, "solver_cmd", None):
        return ExternalCommandBackend(args.solver_cmd)
    return ScipyHighsBackend()


def _build_options(args) -> BuildOptions:
    return BuildOptions(
        polygon_sides=_as_int(args.polygon_sides or 12, "polygon-sides"),
        allow_shedding=bool(getattr(args, "allow_shedding", False)),
    )


def _scenario_set(args, case: CaseData):
    if getattr(args, "scenarios", None):
        return read_scenarios(args.scenarios), None
    ds = _load_data(args)
    k = _as_int(args.k, "k") if args.k is not None else None
    if k is None:
        raise _CliInputError("need --scenarios or (--data and --k)")
    seed = _as_int(args.seed or 0, "seed")
    sset, km = build_scenarios(ds, k, seed, case.catalog, case.econ)
    return sset, km


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args) -> int:
    ds = _load_data(args)
    print(f"ingested {len(ds)} hourly records, peak demand {ds.peak_demand_kw:.1f} kW")
    if args.out:
        write_csv(ds, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    _require(args, "out")
    seed = _as_int(args.seed or 0, "seed")
    hours = _as_int(args.hours or 8760, "hours")
    ds = synth_dataset(seed, hours, profile=args.profile or "tropical")
    write_csv(ds, args.out)
    print(f"wrote {args.out} ({hours} h, profile {args.profile or 'tropical'}, seed {seed})")
    return EXIT_OK


def cmd_cluster(args) -> int:
    case = _load_case(args)
    ds = _load_data(args)
    k = _as_int(args.k, "k") if args.k is not None else None
    if k is None:
        raise _CliInputError("missing --k")
    seed = _as_int(args.seed or 0, "seed")
    sset, km = build_scenarios(ds, k, seed, case.catalog, case.econ)
    out = _out_dir(args)
    scen_path = out / "scenarios.csv"
    write_scenarios(sset, scen_path)
    summary_path = out / "cluster_summary.csv"
    with summary_path.open("w", encoding="utf-8") as fh:
        fh.write("k,cluster,size,prob,wcss_total,kernel,n_iter\n")
        for s, size in zip(sset, km.sizes):
            fh.write(f"{k},{s.id},{int(size)},{s.prob!r},{km.wcss!r},{km.kernel},{km.n_iter}\n")
    print(f"wrote {scen_path} and {summary_path} (kernel {km.kernel}, wcss {km.wcss:.4f})")
    return EXIT_OK


def cmd_plan(args) -> int:
    case = _load_case(args)
    sset, _ = _scenario_set(args, case)
    options = _build_options(args)
    model = build_deterministic_equivalent(
        case.network, case.catalog, case.econ, sset, options
    )
    out = _out_dir(args)
    if args.export_mps:
        export_mps(model.problem, out / "model.mps")
        print(f"wrote {out / 'model.mps'}")
    sol = solve(model.problem, _solve_options(args), backend=_backend(args))
    if sol.status not in ("optimal", "limit-reached") or not sol.has_values:
        print(f"solve failed: {sol.status} ({sol.message})", file=sys.stderr)
        return EXIT_SOLVER
    plan, op = extract_solution(model, sol)
    physics = verify_physics(model, plan, op)
    if physics:
        for item in physics:
            print(f"physics check: {item}", file=sys.stderr)
        return EXIT_SOLVER

    plan_path = out / "plan.json"
    plan_path.write_text(
        json.dumps(
            {
                "objective": sol.objective_value,
                "invest_cost": plan.invest_cost,
                "mip_gap": sol.mip_gap,
                "modules": [
                    {"bus": bus, "tech": tech, "count": n}
                    for (bus, tech), n in sorted(plan.modules.items())
                ],
                "installed_kw": plan.installed_kw(case.catalog),
            },
            indent=1,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    op_path = out / "operation.csv"
    with op_path.open("w", encoding="utf-8") as fh:
        fh.write("scenario,prob,hours,p_ss_pu,q_ss_pu,loss_rate,import_rate,om_rate,total_rate\n")
        for sop in op.per_scenario:
            s = sop.scenario
            fh.write(
                f"{s.id},{s.prob!r},{s.hours!r},{sop.p_ss!r},{sop.q_ss!r},"
                f"{sop.loss_rate!r},{sop.import_rate!r},{sop.om_rate!r},{sop.total_rate!r}\n"
            )
    flows_path = out / "flows.csv"
    with flows_path.open("w", encoding="utf-8") as fh:
        fh.write("scenario,from,to,p_pu,q_pu,i2_pu,v2_to_pu\n")
        for sop in op.per_scenario:
            for ln in case.network.lines:
                fh.write(
                    f"{sop.scenario.id},{ln.from_bus},{ln.to_bus},"
                    f"{sop.flow_p[ln.key]!r},{sop.flow_q[ln.key]!r},"
                    f"{sop.i2[ln.key]!r},{sop.v2[ln.to_bus]!r}\n"
                )
    costs_path = out / "costs.json"
    costs_path.write_text(
        json.dumps(
            {
                "objective": sol.objective_value,
                "invest_cost": plan.invest_cost,
                "expected_operation_cost": op.expected_cost(model.weights),
                "loss_cost": sum(w * s.loss_rate for w, s in zip(model.weights, op.per_scenario)),
                "import_cost": sum(w * s.import_rate for w, s in zip(model.weights, op.per_scenario)),
                "om_cost": sum(w * s.om_rate for w, s in zip(model.weights, op.per_scenario)),
            },
            indent=1,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    print(f"objective {sol.objective_value!r}; wrote {plan_path}, {op_path}, {flows_path}, {costs_path}")
    return EXIT_OK


def _saa_config(args, for_stability: bool) -> SaaConfig:
    return SaaConfig(
        n_values=_n_values(args.n_values),
        replications=_as_int(args.replications or 10, "replications"),
        ground_truth_n=_as_int(args.ground_truth_n, "ground-truth-n")
        if args.ground_truth_n is not None
        else None,
        eval_n=_as_int(args.eval_n, "eval-n") if args.eval_n is not None else None,
        seed_base=_as_int(args.seed_base or 0, "seed-base"),
        threads=_as_int(args.threads, "threads") if args.threads is not None else None,
        batch_size=_as_int(args.batch_size or 256, "batch-size"),
        mip_gap=_as_float(args.mip_gap or 1e-6, "mip-gap"),
        time_limit=_as_float(args.time_limit or 600.0, "time-limit"),
        options=_build_options(args),
    )


def _write_fig_gap_time(report, out: Path) -> list[Path]:
    summary = report.summary()["per_n"]
    gap_path = out / "fig_gap.csv"
    with gap_path.open("w", encoding="utf-8") as fh:
        fh.write("n,lb_mean,lb_ci95,ub_mean,ub_ci95,gap_mean,gap_median\n")
        for n in sorted(int(k) for k in summary):
            s = summary[str(n)]
            if s.get("replicas", 0) == 0:
                continue
            fh.write(
                f"{n},{s['lb_mean']!r},{s['lb_ci95']!r},{s['ub_mean']!r},"
                f"{s['ub_ci95']!r},{s['gap_mean']!r},{s['gap_median']!r}\n"
            )
    time_path = out / "fig_time.csv"
    with time_path.open("w", encoding="utf-8") as fh:
        fh.write("n,time_mean_s,time_total_s\n")
        for n in sorted(int(k) for k in summary):
            s = summary[str(n)]
            if s.get("replicas", 0) == 0:
                continue
            fh.write(f"{n},{s['time_mean_s']!r},{s['time_total_s']!r}\n")
    return [gap_path, time_path]


def cmd_saa(args) -> int:
    case = _load_case(args)
    ds = _load_data(args)
    cfg = _saa_config(args, for_stability=False)
    report = run_saa(case, ds, cfg)
    out = _out_dir(args)
    base = report_basename("saa", cfg)
    write_saa_csv(report, out / f"{base}.csv")
    write_saa_json(report, out / f"{base}.json")
    written = _write_fig_gap_time(report, out)
    print(f"ground truth {report.ground_truth!r}")
    print(f"wrote {out / (base + '.csv')}, {out / (base + '.json')}, " + ", ".join(map(str, written)))
    if report.failures():
        for r in report.failures():
            print(f"replica (n={r.n}, m={r.replica}) failed: {r.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_stability(args) -> int:
    case = _load_case(args)
    ds = _load_data(args)
    cfg = _saa_config(args, for_stability=True)
    report, stability = run_stability(case, ds, cfg)
    out = _out_dir(args)
    base = report_basename("stability", cfg)
    write_saa_csv(report, out / f"{base}_saa.csv")
    write_saa_json(report, out / f"{base}_saa.json")
    write_stability_csv(stability, out / f"{base}.csv")
    written = _write_fig_gap_time(report, out)

    in_path = out / "fig_insample.csv"
    with in_path.open("w", encoding="utf-8") as fh:
        fh.write("n,replica,ratio\n")
        for r in stability.rows:
            fh.write(f"{r.n},{r.replica},{r.in_sample_ratio!r}\n")
    out_path = out / "fig_outsample.csv"
    with out_path.open("w", encoding="utf-8") as fh:
        fh.write("n,replica,ratio\n")
        for r in stability.rows:
            fh.write(f"{r.n},{r.replica},{r.out_sample_ratio!r}\n")
    mix_path = out / "fig_mix.csv"
    with mix_path.open("w", encoding="utf-8") as fh:
        techs = case.catalog.names
        fh.write("n,replica," + ",".join(f"share_{t}" for t in techs) + ",total_kw\n")
        for r in stability.rows:
            shares = [(r.mix or {}).get(t, 0.0) for t in techs]
            fh.write(
                f"{r.n},{r.replica}," + ",".join(repr(s) for s in shares) + f",{r.total_kw!r}\n"
            )
    print(f"ground truth {stability.ground_truth!r}")
    print(
        "wrote "
        + ", ".join(
            str(p)
            for p in [out / f"{base}.csv", in_path, out_path, mix_path, *written]
        )
    )
    if report.failures():
        return EXIT_SOLVER
    return EXIT_OK


def cmd_export_mps(args) -> int:
    case = _load_case(args)
    sset, _ = _scenario_set(args, case)
    model = build_deterministic_equivalent(
        case.network, case.catalog, case.econ, sset, _build_options(args)
    )
    out = args.out or "model.mps"
    export_mps(model.problem, out)
    print(f"wrote {out} and {out}.names.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run-config file ([run] section, key = value)")
    p.add_argument("--threads", help="worker process cap")
    p.add_argument("--mip-gap", dest="mip_gap", help="relative MIP gap target")
    p.add_argument("--time-limit", dest="time_limit", help="solver time limit, seconds")
    p.add_argument("--solver-cmd", dest="solver_cmd",
                   help="external solver template with {mps} and {sol} placeholders")
    p.add_argument("--polygon-sides", dest="polygon_sides",
                   help="sides of the apparent-power polygon (default 12)")
    p.add_argument("--allow-shedding", dest="allow_shedding", action="store_true",
                   help="add penalized load-shedding slacks (diagnostics)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgplan",
        description="Distributed-generation capacity planning on radial feeders",
    )
    parser.add_argument("--version", action="version", version=f"dgplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an hourly CSV and report/cache it")
    p.add_argument("--data", help="input CSV (timestamp,ghi,wind,temp,demand_kw)")
    p.add_argument("--gap-policy", dest="gap_policy", choices=["reject", "forward-fill"])
    p.add_argument("--out", help="optional normalized CSV cache to write")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--seed")
    p.add_argument("--hours")
    p.add_argument("--profile", choices=["tropical", "temperate"])
    p.add_argument("--out", help="CSV to write")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="cluster a dataset into operating-point scenarios")
    p.add_argument("--case")
    p.add_argument("--data")
    p.add_argument("--gap-policy", dest="gap_policy", choices=["reject", "forward-fill"])
    p.add_argument("--k")
    p.add_argument("--seed")
    p.add_argument("--out-dir", dest="out_dir")
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("plan", help="solve the two-stage investment problem")
    p.add_argument("--case")
    p.add_argument("--scenarios", help="scenario CSV (else --data and --k)")
    p.add_argument("--data")
    p.add_argument("--gap-policy", dest="gap_policy", choices=["reject", "forward-fill"])
    p.add_argument("--k")
    p.add_argument("--seed")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--export-mps", dest="export_mps", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    for name, func in (("saa", cmd_saa), ("stability", cmd_stability)):
        p = sub.add_parser(name, help=f"run the {name} sweep and emit report CSVs")
        p.add_argument("--case")
        p.add_argument("--data")
        p.add_argument("--gap-policy", dest="gap_policy", choices=["reject", "forward-fill"])
        p.add_argument("--n-values", dest="n_values", help="comma list, e.g. 10,50,200")
        p.add_argument("--replications")
        p.add_argument("--seed-base", dest="seed_base")
        p.add_argument("--ground-truth-n", dest="ground_truth_n")
        p.add_argument("--eval-n", dest="eval_n")
        p.add_argument("--batch-size", dest="batch_size")
        p.add_argument("--out-dir", dest="out_dir")
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("export-mps", help="compile the model and write free MPS")
    p.add_argument("--case")
    p.add_argument("--scenarios")
    p.add_argument("--data")
    p.add_argument("--gap-policy", dest="gap_policy", choices=["reject", "forward-fill"])
    p.add_argument("--k")
    p.add_argument("--seed")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_export_mps)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except _CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
