"""Production models and scenario construction."""

import numpy as np
import pytest

from dgplan.grid_case import PvParams, WtParams
from dgplan.scenarios import (
    Scenario,
    ScenarioSet,
    build_scenarios,
    pv_factor,
    read_scenarios,
    with_import_price,
    write_scenarios,
    wt_factor,
)

PV = PvParams(y_rated=100.0, g_stc=1000.0, g_noct=800.0, t_c_stc=25.0,
              t_c_noct=45.0, t_a_noct=20.0, alpha=0.004)
WT = WtParams(y_rated=100.0, v_in=3.0, v_rated=12.0, v_out=25.0)


def test_pv_factor_hand_computed_point():
    """ghi 800, 30 degC: cell heats to 55 degC, output 0.8 * (1 - 0.004*30)."""
    got = pv_factor(800.0, 30.0, PV)
    assert got == pytest.approx(0.704, abs=1e-12)


def test_pv_factor_zero_radiation():
    assert pv_factor(0.0, 35.0, PV) == 0.0


def test_pv_factor_alpha_zero_at_stc_irradiance():
    p = PvParams(y_rated=100.0, g_stc=1000.0, g_noct=800.0, t_c_stc=25.0,
                 t_c_noct=45.0, t_a_noct=20.0, alpha=0.0)
    for temp in (-10.0, 25.0, 60.0):
        assert pv_factor(1000.0, temp, p) == pytest.approx(1.0, abs=1e-12)


def test_pv_factor_clamped_to_unit_interval():
    cold_bright = pv_factor(1200.0, -30.0, PV)
    assert cold_bright == 1.0
    rng = np.random.default_rng(2)
    for _ in range(500):
        f = pv_factor(float(rng.uniform(0, 1200)), float(rng.uniform(-30, 45)), PV)
        assert 0.0 <= f <= 1.0


def test_pv_factor_continuous():
    rng = np.random.default_rng(3)
    for _ in range(300):
        g = float(rng.uniform(0, 1200))
        t = float(rng.uniform(-10, 45))
        base = pv_factor(g, t, PV)
        assert abs(pv_factor(g + 1e-7, t, PV) - base) < 1e-8
        assert abs(pv_factor(g, t + 1e-7, PV) - base) < 1e-8


def test_wt_factor_curve_points():
    assert wt_factor(WT.v_rated, WT) == 1.0
    assert wt_factor((WT.v_in + WT.v_rated) / 2, WT) == pytest.approx(0.5, abs=1e-12)
    assert wt_factor(WT.v_out, WT) == 0.0  # cut-off belongs to the zero branch
    assert wt_factor(WT.v_in, WT) == 0.0
    assert wt_factor(0.0, WT) == 0.0
    assert wt_factor(20.0, WT) == 1.0
    assert wt_factor(30.0, WT) == 0.0


def test_wt_factor_piecewise_continuous_except_cutoff():
    """Only allowed jump is at the cut-off speed."""
    eps = 1e-9
    grid = np.linspace(0.0, 30.0, 4001)
    for v in grid:
        lo, hi = wt_factor(float(v) - eps, WT), wt_factor(float(v) + eps, WT)
        if abs(v - WT.v_out) < 1e-6:
            continue
        assert abs(hi - lo) < 1e-6


def test_scenario_set_invariants():
    good = ScenarioSet(
        (
            Scenario(0, 0.5, 0.2, 0.9, 0.25, 2190.0, 0.2),
            Scenario(1, 0.0, 0.8, 0.7, 0.75, 6570.0, 0.2),
        ),
        source_hours=8760,
    )
    assert good.total_hours == pytest.approx(8760.0)
    with pytest.raises(ValueError, match="sum"):
        ScenarioSet((Scenario(0, 0.5, 0.2, 0.9, 0.4, 100.0, 0.2),), source_hours=10)
    with pytest.raises(ValueError, match="empty"):
        ScenarioSet((), source_hours=0)


def test_build_k_equals_n_matches_raw_hours(case4, ds_week):
    """Every hour its own scenario: the empirical distribution survives."""
    n = len(ds_week)
    sset, _ = build_scenarios(ds_week, n, seed=1, cat=case4.catalog, econ=case4.econ)
    assert len(sset) == n
    assert all(s.prob == pytest.approx(1.0 / n, abs=1e-15) for s in sset)
    m = ds_week.to_matrix()
    peak = ds_week.peak_demand_kw
    got_d = sorted(s.gamma_d for s in sset)
    want_d = sorted(m[:, 3] / peak)
    assert np.allclose(got_d, want_d, atol=1e-12)


def test_build_k1_collapses_to_means(case4, ds_week):
    sset, _ = build_scenarios(ds_week, 1, seed=1, cat=case4.catalog, econ=case4.econ)
    (s,) = tuple(sset)
    assert s.prob == 1.0
    assert s.hours == pytest.approx(case4.econ.horizon_hours)
    m = ds_week.to_matrix()
    assert s.gamma_d == pytest.approx(m[:, 3].mean() / ds_week.peak_demand_kw, rel=1e-12)
    assert s.gamma_cg == 1.0


def test_probability_and_demand_conservation(case4, ds_year):
    """Size-weighted centroid demand reproduces the dataset mean demand."""
    sset, _ = build_scenarios(ds_year, 10, seed=7, cat=case4.catalog, econ=case4.econ)
    assert sum(s.prob for s in sset) == pytest.approx(1.0, abs=1e-9)
    mean_demand = sum(s.prob * s.gamma_d for s in sset) * ds_year.peak_demand_kw
    assert mean_demand == pytest.approx(ds_year.to_matrix()[:, 3].mean(), rel=1e-6)
    assert sset.total_hours == pytest.approx(case4.econ.horizon_hours, abs=1e-6)


def test_gammas_inside_unit_box(case4, ds_year):
    sset, _ = build_scenarios(ds_year, 25, seed=3, cat=case4.catalog, econ=case4.econ)
    for s in sset:
        assert 0.0 <= s.gamma_pv <= 1.0
        assert 0.0 <= s.gamma_wt <= 1.0
        assert s.gamma_d >= 0.0
        assert s.gamma_cg == 1.0


def test_csv_round_trip(tmp_path, case4, ds_week):
    sset, _ = build_scenarios(ds_week, 6, seed=2, cat=case4.catalog, econ=case4.econ)
    path = tmp_path / "scen.csv"
    write_scenarios(sset, path)
    again = read_scenarios(path, source_hours=sset.source_hours)
    assert tuple(again) == tuple(sset)


def test_import_price_override(case4, ds_week):
    sset, _ = build_scenarios(ds_week, 4, seed=2, cat=case4.catalog, econ=case4.econ)
    bumped = with_import_price(sset, 0.5)
    assert all(s.import_price == 0.5 for s in bumped)
    assert [s.gamma_d for s in bumped] == [s.gamma_d for s in sset]
