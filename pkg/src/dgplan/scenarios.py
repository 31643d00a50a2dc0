"""Operating-point scenarios from clustered weather/demand data.

Each scenario is a single operating point: capacity factors for PV and
wind, a demand factor, a probability, and the expected number of horizon
hours it represents. Scenarios come from k-means centroids: the centroid
is un-standardized back to physical units, the weather coordinates are
pushed through the production models, and the demand coordinate is
normalized by the dataset peak.

Conventional generators are fully dispatchable, so their capacity factor
is fixed at 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .clustering import KMeansResult, kmeans
from .grid_case import EconomicParams, PvParams, TechnologyCatalog, WtParams
from .timeseries import Dataset, FeatureStats, standardize, unstandardize

PROB_TOL = 1e-9
HOURS_TOL = 1e-6


def pv_factor(ghi: float, t_a: float, p: PvParams) -> float:
    """PV capacity factor from irradiance and ambient temperature.

    Cell temperature rises linearly with irradiance toward its nominal
    operating value; output derates linearly with cell temperature above
    the standard test condition. Clamped to [0, 1]: the linear model can
    exceed rated output under cold, bright conditions, but installed
    capacity cannot.
    """
    if ghi <= 0.0:
        return 0.0
    t_c = t_a + (ghi / p.g_noct) * (p.t_c_noct - p.t_a_noct)
    raw = (ghi / p.g_stc) * (1.0 - p.alpha * (t_c - p.t_c_stc))
    return min(1.0, max(0.0, raw))


def wt_factor(v: float, p: WtParams) -> float:
    """Wind capacity factor: 0 below cut-in and at/above cut-off, linear
    ramp between cut-in and rated, 1 between rated and cut-off."""
    if v < p.v_in or v >= p.v_out:
        return 0.0
    if v < p.v_rated:
        return (v - p.v_in) / (p.v_rated - p.v_in)
    return 1.0


@dataclass(frozen=True)
class Scenario:
    id: int
    gamma_pv: float       # PV capacity factor in [0, 1]
    gamma_wt: float       # wind capacity factor in [0, 1]
    gamma_d: float        # demand scaling factor >= 0
    prob: float           # probability of occurrence
    hours: float          # expected horizon hours at this operating point
    import_price: float   # $/kWh at the substation
    gamma_cg: float = 1.0 # dispatchable, always available

    def factor(self, tech: str) -> float:
        if tech == "PV":
            return self.gamma_pv
        if tech == "WT":
            return self.gamma_wt
        if tech == "CG":
            return self.gamma_cg
        raise KeyError(tech)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    source_hours: int  # number of underlying data points

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("empty scenario set")
        total = sum(s.prob for s in self.scenarios)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def total_hours(self) -> float:
        return sum(s.hours for s in self.scenarios)


def scenarios_from_clusters(
    centroids_std: np.ndarray,
    sizes: np.ndarray,
    stats: FeatureStats,
    peak_demand_kw: float,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    source_hours: int,
) -> ScenarioSet:
    """Turn standardized centroids + cluster sizes into a ScenarioSet.

    Probabilities are cluster shares of ``source_hours``; hours are
    prob * horizon. peak_demand_kw is the demand base the network's
    nominal load corresponds to (the full dataset's peak, also when the
    centroids come from a resample).
    """
    n = int(sizes.sum())
    if n != source_hours:
        raise ValueError(f"cluster sizes sum to {n}, expected {source_hours}")
    phys = unstandardize(centroids_std, stats)
    pvp = cat["PV"].pv
    wtp = cat["WT"].wt
    out = []
    for c in range(centroids_std.shape[0]):
        ghi = max(0.0, float(phys[c, 0]))
        wind = max(0.0, float(phys[c, 1]))
        temp = float(phys[c, 2])
        demand = max(0.0, float(phys[c, 3]))
        prob = float(sizes[c]) / source_hours
        out.append(
            Scenario(
                id=c,
                gamma_pv=pv_factor(ghi, temp, pvp),
                gamma_wt=wt_factor(wind, wtp),
                gamma_d=demand / peak_demand_kw if peak_demand_kw > 0 else 0.0,
                prob=prob,
                hours=prob * econ.horizon_hours,
                import_price=econ.import_price,
            )
        )
    sset = ScenarioSet(tuple(out), source_hours=source_hours)
    if abs(sset.total_hours - econ.horizon_hours) > HOURS_TOL:
        raise ValueError(
            f"scenario hours sum to {sset.total_hours!r}, expected {econ.horizon_hours!r}"
        )
    return sset


def build_scenarios(
    ds: Dataset,
    k: int,
    seed: int,
    cat: TechnologyCatalog,
    econ: EconomicParams,
    kernel: str | None = None,
) -> tuple[ScenarioSet, KMeansResult]:
    """Cluster a dataset to k operating points and map them to scenarios."""
    z, stats = standardize(ds)
    km = kmeans(z, k, seed, kernel=kernel)
    sset = scenarios_from_clusters(
        km.centroids, km.sizes, stats, ds.peak_demand_kw, cat, econ, source_hours=len(ds)
    )
    return sset, km


_CSV_HEADER = ["id", "prob", "hours", "gamma_pv", "gamma_wt", "gamma_d", "import_price"]


def write_scenarios(sset: ScenarioSet, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(_CSV_HEADER) + "\n")
        for s in sset:
            fh.write(
                f"{s.id},{s.prob!r},{s.hours!r},{s.gamma_pv!r},"
                f"{s.gamma_wt!r},{s.gamma_d!r},{s.import_price!r}\n"
            )


def read_scenarios(path, source_hours: int | None = None) -> ScenarioSet:
    p = Path(path)
    rows = []
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != _CSV_HEADER:
            raise ValueError(f"{p}: expected header {','.join(_CSV_HEADER)}")
        for row in reader:
            rows.append(
                Scenario(
                    id=int(row["id"]),
                    prob=float(row["prob"]),
                    hours=float(row["hours"]),
                    gamma_pv=float(row["gamma_pv"]),
                    gamma_wt=float(row["gamma_wt"]),
                    gamma_d=float(row["gamma_d"]),
                    import_price=float(row["import_price"]),
                )
            )
    return ScenarioSet(tuple(rows), source_hours=source_hours or len(rows))


def with_import_price(sset: ScenarioSet, price: float) -> ScenarioSet:
    """Uniform import-price override (config hook for per-scenario prices)."""
    return ScenarioSet(
        tuple(replace(s, import_price=price) for s in sset),
        source_hours=sset.source_hours,
    )
