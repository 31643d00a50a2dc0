"""Ingestion, standardization and the synthetic generator."""

import math

import numpy as np
import pytest

from dgplan.timeseries import (
    Dataset,
    IngestError,
    ingest_csv,
    standardize,
    synth_dataset,
    unstandardize,
    write_csv,
)


def _write(tmp_path, rows, header="timestamp,ghi,wind,temp,demand_kw"):
    p = tmp_path / "data.csv"
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    return p


def _hours(n, start=0):
    return [f"2023-01-{1 + (start + i) // 24:02d}T{(start + i) % 24:02d}:00" for i in range(n)]


def test_ingest_happy_path(tmp_path, ds_year):
    write_csv(ds_year, tmp_path / "year.csv")
    ds = ingest_csv(tmp_path / "year.csv")
    assert len(ds) == 8760
    assert ds.peak_demand_kw == ds_year.peak_demand_kw


def test_ingest_round_trip_bit_exact(tmp_path, ds_week):
    write_csv(ds_week, tmp_path / "a.csv")
    ds = ingest_csv(tmp_path / "a.csv")
    assert ds == ds_week
    write_csv(ds, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_ingest_gap_reject_names_the_hour(tmp_path):
    ts = _hours(6)
    del ts[3]  # drop 03:00
    rows = [f"{t},100,5,25,900" for t in ts]
    path = _write(tmp_path, rows)
    with pytest.raises(IngestError, match="gap of 1 hour"):
        ingest_csv(path, gap_policy="reject")


def test_ingest_forward_fill_copies_previous(tmp_path):
    ts = _hours(8)
    removed = ts[5]
    rows = [f"{t},{100 + i},5,25,900" for i, t in enumerate(ts) if t != removed]
    ds = ingest_csv(_write(tmp_path, rows), gap_policy="forward-fill")
    assert len(ds) == 8
    filled = ds.records[5]
    assert filled.timestamp.isoformat(timespec="minutes") == removed
    assert filled.ghi == ds.records[4].ghi  # copied from the hour before


def test_ingest_negative_value_names_row_and_column(tmp_path):
    rows = [f"{t},100,5,25,900" for t in _hours(4)]
    rows[2] = rows[2].replace(",900", ",-5")
    with pytest.raises(IngestError, match=r"row 4.*demand_kw"):
        ingest_csv(_write(tmp_path, rows))


def test_ingest_non_monotone_rejected(tmp_path):
    ts = _hours(4)
    ts[2] = ts[1]  # duplicate hour: not strictly increasing
    rows = [f"{t},100,5,25,900" for t in ts]
    with pytest.raises(IngestError, match="not after"):
        ingest_csv(_write(tmp_path, rows))


def test_ingest_missing_column(tmp_path):
    rows = [f"{t},100,5,25" for t in _hours(3)]
    path = _write(tmp_path, rows, header="timestamp,ghi,wind,temp")
    with pytest.raises(IngestError, match="missing column"):
        ingest_csv(path)


def test_empty_dataset_rejected():
    with pytest.raises(IngestError, match="empty"):
        Dataset(())


def test_standardize_moments(ds_year):
    z, stats = standardize(ds_year)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-9)
    assert stats.zero_std == ()


def test_standardize_two_point_population_convention(tmp_path):
    """Feature values {0, 10}: population std is 5, so z-scores are -1, +1."""
    rows = [f"{t},{g},5,25,900" for t, g in zip(_hours(2), (0, 10))]
    ds = ingest_csv(_write(tmp_path, rows))
    z, stats = standardize(ds)
    assert z[0, 0] == pytest.approx(-1.0, abs=1e-12)
    assert z[1, 0] == pytest.approx(1.0, abs=1e-12)
    assert stats.std[0] == pytest.approx(5.0)


def test_standardize_constant_feature_flagged(tmp_path):
    rows = [f"{t},{100 + i},5,25,{900 + i}" for i, t in enumerate(_hours(5))]
    ds = ingest_csv(_write(tmp_path, rows))
    z, stats = standardize(ds)
    assert stats.zero_std == ("wind", "temp")
    assert np.all(z[:, 1] == 0.0)
    assert np.all(z[:, 2] == 0.0)


def test_standardize_round_trip(ds_month):
    z, stats = standardize(ds_month)
    back = unstandardize(z, stats)
    assert np.allclose(back, ds_month.to_matrix(), atol=1e-9)


def test_synth_deterministic():
    a = synth_dataset(seed=7, hours=48)
    b = synth_dataset(seed=7, hours=48)
    assert a == b
    c = synth_dataset(seed=8, hours=48)
    assert c != a


def test_synth_midnight_ghi_zero(ds_year):
    m = ds_year.to_matrix()
    assert np.all(m[::24, 0] == 0.0)


def test_synth_physical_ranges():
    for profile in ("tropical", "temperate"):
        m = synth_dataset(seed=3, hours=2000, profile=profile).to_matrix()
        assert m[:, 0].min() >= 0.0 and m[:, 0].max() <= 1200.0
        assert m[:, 1].min() >= 0.0 and m[:, 1].max() <= 30.0
        assert m[:, 3].min() > 0.0


def test_synth_accepted_by_ingest(tmp_path):
    ds = synth_dataset(seed=7, hours=8760)
    write_csv(ds, tmp_path / "synth.csv")
    again = ingest_csv(tmp_path / "synth.csv", gap_policy="reject")
    assert again == ds


def test_synth_rejects_short_spans():
    with pytest.raises(ValueError, match="24"):
        synth_dataset(seed=1, hours=12)
    with pytest.raises(ValueError, match="profile"):
        synth_dataset(seed=1, hours=48, profile="lunar")
