import pytest

from dgplan.grid_case import bundled_case_path, load_case, parse_case
from dgplan.timeseries import synth_dataset

# Small feeder used for closed-form branch-flow checks: v_max = 1.0 pins the
# product-envelope box to the slack voltage, and the symmetric R = X,
# P = Q demand puts the flow exactly on a polygon vertex for K divisible
# by 8, so the linearized model can reproduce the exact quadratic solution.
TWO_BUS = """
[network]
s_base_kva = 1000.0
substation = 1
v_min = 0.9
v_max = 1.0
substation_p_max = 5.0
substation_q_max = 5.0

[lines]
1 2 0.02 0.02 1.5

[demand]
2 400.0 400.0

[technologies]
PV.module_kw = 100.0
PV.inv_cost = 5000.0
PV.om_cost = 0.01
PV.pf_lead = 0.95
PV.pf_lag = 0.95
PV.y_rated = 100.0
PV.g_stc = 1000.0
PV.g_noct = 800.0
PV.t_c_stc = 25.0
PV.t_c_noct = 45.0
PV.t_a_noct = 20.0
PV.alpha = 0.004
WT.module_kw = 100.0
WT.inv_cost = 9000.0
WT.om_cost = 0.01
WT.pf_lead = 0.95
WT.pf_lag = 0.95
WT.y_rated = 100.0
WT.v_in = 2.0
WT.v_rated = 13.0
WT.v_out = 25.0
CG.module_kw = 100.0
CG.inv_cost = 2000.0
CG.om_cost = 0.19
CG.pf_lead = 0.85
CG.pf_lag = 0.85

[economics]
loss_price = 0.1
import_price = 0.2
horizon_hours = 8760.0
budget = none
"""


@pytest.fixture(scope="session")
def case4():
    return load_case(bundled_case_path("case4-test"))


@pytest.fixture(scope="session")
def case34():
    return load_case(bundled_case_path("case34-reconstructed"))


@pytest.fixture(scope="session")
def two_bus():
    return parse_case(TWO_BUS, name="two-bus")


@pytest.fixture(scope="session")
def ds_week():
    return synth_dataset(seed=7, hours=168)


@pytest.fixture(scope="session")
def ds_month():
    return synth_dataset(seed=7, hours=720)


@pytest.fixture(scope="session")
def ds_year():
    return synth_dataset(seed=7, hours=8760)
