import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from therminv.errors import DomainError, IngestionError
from therminv.measurement import (RepeatSet, SensorDataset, best_estimate, build_dataset,
                                  position_uncertainty, random_uncertainty, read_manifest,
                                  read_repeats, single_repeat, synthesize_observations,
                                  total_uncertainty, write_repeats)
from therminv.solver1d import Field1D, Mesh1D

small = st.floats(0.0, 5.0, allow_nan=False)


def repeats_of(*rows, times=(0.0,)):
    return RepeatSet({"s1": 0.0}, np.array(times), {"s1": np.array(rows, dtype=float)})


def linear_field(slope, n_times=4):
    mesh = Mesh1D()
    times = np.linspace(0, 1, n_times)
    return Field1D(mesh, times, 1.0 + slope * mesh.chi[:, None] * np.ones(n_times))


def test_best_estimate_examples():
    assert best_estimate(repeats_of([20.0]))["s1"][0] == 20.0
    assert best_estimate(repeats_of([19.9], [20.0], [20.1]))["s1"][0] == pytest.approx(20.0)
    assert best_estimate(repeats_of([19.8], [20.0], [20.5]))["s1"][0] == pytest.approx(20.1)


@given(st.permutations([19.8, 20.0, 20.5, 21.3]))
def test_best_estimate_permutation_invariant(order):
    a = best_estimate(repeats_of(*[[v] for v in order]))["s1"]
    assert a[0] == pytest.approx(20.4, abs=1e-12)


def test_random_uncertainty_examples(caplog):
    assert random_uncertainty(repeats_of([20.0], [20.0], [20.0]))["s1"][0] == 0.0
    r = random_uncertainty(repeats_of([19.9], [20.0], [20.1]))["s1"][0]
    assert r == pytest.approx(np.sqrt(0.02 / 3) / np.sqrt(3), rel=1e-12)
    assert r == pytest.approx(0.0471, abs=1e-4)
    r2 = random_uncertainty(repeats_of([19.8], [20.0], [20.2]))["s1"][0]
    assert r2 == pytest.approx(2 * r, rel=1e-12)
    sample = random_uncertainty(repeats_of([19.9], [20.0], [20.1]), sample=True)["s1"][0]
    assert sample == pytest.approx(np.sqrt(0.01 / 3))
    with caplog.at_level(logging.WARNING):
        one = repeats_of([20.0])
        assert random_uncertainty(one)["s1"][0] == 0.0
    assert single_repeat(one)
    assert "single repeat" in caplog.text


def test_position_uncertainty_examples():
    assert np.all(position_uncertainty(linear_field(0.0), 0.25) == 0.0)
    # u = 1 + 0.32 chi -> dT/dx = 20 * 0.32 / 0.16 = 40 degC/m
    s = position_uncertainty(linear_field(0.32), 0.25, delta=0.005)
    np.testing.assert_allclose(s, 0.2, rtol=1e-10)
    np.testing.assert_allclose(position_uncertainty(linear_field(0.32), 0.0), 0.2, rtol=1e-10)
    with pytest.raises(DomainError):
        position_uncertainty(linear_field(0.32), 1.5)


def test_total_uncertainty_examples():
    assert total_uncertainty(0.3, 0.0, 0.0) == 0.3
    assert total_uncertainty(0.3, 0.0, 0.2) == pytest.approx(np.sqrt(0.13))
    assert total_uncertainty(0.3, 0.0, 0.2) == pytest.approx(0.3606, abs=1e-4)


@given(small, small, small)
def test_total_uncertainty_bounds_and_symmetry(a, b, c):
    s = total_uncertainty(a, b, c)
    assert max(a, b, c) <= s * (1 + 1e-12)
    assert s <= (a + b + c) * (1 + 1e-12) + 1e-300
    for p in ((b, c, a), (c, a, b), (b, a, c)):
        assert total_uncertainty(*p) == pytest.approx(s, rel=1e-12, abs=0)


def test_build_dataset_combines_components():
    rs = RepeatSet({"a": 0.0, "b": 0.04}, [0.0, 60.0],
                   {"a": [[20.0, 21.0], [20.0, 21.0]], "b": [[19.9, 20.0], [20.1, 20.0]]})
    ds = build_dataset(rs, 0.16, sigma_pos={"a": np.array([0.2, 0.0]), "b": np.zeros(2)})
    a, b = ds.sensors
    np.testing.assert_allclose(a.sigma, [np.sqrt(0.13), 0.3])
    assert b.sigma[0] == pytest.approx(np.sqrt(0.09 + 0.1 ** 2 / 2))
    assert b.chi == pytest.approx(0.25)
    T, sig = ds.stacked()
    assert T.shape == sig.shape == (4,)


def test_synthesize_noise_free_is_exact(cfg_paper):
    from therminv.solver1d import sample_series, solve_lumped
    field = solve_lumped(cfg_paper)
    times = np.arange(0, 72001, 600.0)
    rs = synthesize_observations(field, {"s1": 0.0, "s2": 0.04}, times, 0.0, seed=1,
                                 t0=72000.0)
    ref = 20.0 * sample_series(field, 0.25, times / 72000.0)
    assert np.array_equal(best_estimate(rs)["s2"], ref)
    assert np.array_equal(rs.values["s2"][1], ref)


def test_synthesize_noise_statistics_and_determinism():
    field = linear_field(0.0, n_times=2)
    times = np.linspace(0, 72000.0, 10000)
    a = synthesize_observations(field, {"s": 0.0}, times, 0.3, seed=5, n_repeats=1, t0=72000.0)
    b = synthesize_observations(field, {"s": 0.0}, times, 0.3, seed=5, n_repeats=1, t0=72000.0)
    assert np.array_equal(a.values["s"], b.values["s"])
    assert abs(np.std(a.values["s"] - 20.0) / 0.3 - 1) < 0.05
    with pytest.raises(DomainError):
        synthesize_observations(field, {"s": 0.5}, times, 0.3, seed=5, t0=72000.0)


def test_repeat_set_invariants():
    with pytest.raises(IngestionError):
        RepeatSet({"a": 0.0}, [0.0, 1.0], {"a": [[1.0, 2.0, 3.0]]})
    with pytest.raises(IngestionError):
        RepeatSet({"a": 0.0}, [1.0, 0.0], {"a": [[1.0, 2.0]]})
    with pytest.raises(IngestionError):
        RepeatSet({"a": 0.0, "b": 1.0}, [0.0], {"a": [[1.0]], "b": [[1.0], [2.0]]})


def test_csv_round_trip(tmp_path):
    rs = RepeatSet({"a": 0.0, "b": 0.04}, [0.0, 60.0, 120.0],
                   {"a": np.arange(6.0).reshape(2, 3), "b": np.ones((2, 3))})
    paths = write_repeats(rs, tmp_path)
    back = read_repeats(paths, tmp_path / "sensors.csv")
    assert read_manifest(tmp_path / "sensors.csv") == {"a": 0.0, "b": 0.04}
    np.testing.assert_array_equal(back.values["a"], rs.values["a"])
    ds = build_dataset(back, 0.16)
    ds.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "t_s,sensor_id,T_C,sigma_C"
    again = SensorDataset.from_csv(tmp_path / "d.csv", back.positions, 0.16)
    np.testing.assert_array_equal(again.stacked()[0], ds.stacked()[0])


def test_ingestion_errors(tmp_path):
    rs = RepeatSet({"a": 0.0}, [0.0, 60.0], {"a": np.ones((2, 2))})
    paths = write_repeats(rs, tmp_path)
    paths[1].write_text("t_s,sensor_id,T_C\n0.0,a,1.0\n30.0,a,1.0\n")
    with pytest.raises(IngestionError, match="does not match"):
        read_repeats(paths, tmp_path / "sensors.csv")
    paths[1].write_text("t_s,sensor,T_C\n0.0,a,1.0\n")
    with pytest.raises(IngestionError, match="missing columns"):
        read_repeats(paths, tmp_path / "sensors.csv")
    paths[1].write_text("t_s,sensor_id,T_C\n0.0,a,1.0\n60.0,a,1.0\n0.0,z,1.0\n")
    with pytest.raises(IngestionError, match="manifest"):
        read_repeats(paths, tmp_path / "sensors.csv")
    with pytest.raises(IngestionError):
        read_repeats([], tmp_path / "sensors.csv")
