"""dgplan: distributed-generation capacity planning on radial feeders.

Pipeline: ingest (or synthesize) hourly weather/demand data, cluster it
into operating-point scenarios, compile and solve the two-stage
investment MILP, and quantify solution quality with replicated
sample-average lower/upper bounds, optimality gaps, and in-/out-of-sample
stability sweeps.
"""

__version__ = "0.1.0"

from .grid_case import (  # noqa: F401
    CaseData,
    CaseError,
    EconomicParams,
    Network,
    TechnologyCatalog,
    bundled_case_path,
    load_case,
    per_unitize,
)
from .timeseries import Dataset, ingest_csv, synth_dataset  # noqa: F401
from .clustering import active_kernel, available_kernels, kmeans  # noqa: F401
from .scenarios import (  # noqa: F401
    Scenario,
    ScenarioSet,
    build_scenarios,
    pv_factor,
    wt_factor,
)
from .planner import (  # noqa: F401
    BuildOptions,
    InvestmentPlan,
    build_deterministic_equivalent,
    build_second_stage,
    extract_solution,
    make_plan,
    verify_physics,
)
from .milp import (  # noqa: F401
    MilpProblem,
    MilpSolution,
    ProblemBuilder,
    SolveOptions,
    check_solution,
    export_mps,
    solve,
)
from .saa import SaaConfig, evaluate_ub, run_saa, run_stability  # noqa: F401
