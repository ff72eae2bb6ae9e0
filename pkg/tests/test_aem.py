import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from therminv.aem import (AemModel, AemPrior, GaussianPrior, LumpedSensors, apply_aem,
                          build_aem)
from therminv.errors import AemBuildError, ConfigurationError, DomainError, SolverError
from therminv.thermo_model import Geometry, paper_layers, paper_schedule

TIMES = np.arange(0, 72001, 3600.0)
POS = {"x1": 0.0, "x2": 0.04}


@pytest.fixture(scope="module")
def lumped():
    return LumpedSensors(paper_layers(), Geometry(), paper_schedule(), 20.0, POS, TIMES)


def toy(h_t, R_l):
    # cheap stand-in for a forward model: smooth in the parameters
    return np.vstack([np.sin(TIMES / 2e4) * h_t, np.cos(TIMES / 3e4) * R_l])


def test_self_comparison_gives_zero(lumped):
    m = build_aem(AemPrior(), 4, lumped, lambda h, hl: lumped(h, hl), list(POS), TIMES, seed=0)
    assert np.all(m.e == 0.0) and np.all(m.s_e == 0.0)


def test_point_prior():
    prior = AemPrior(GaussianPrior(8.0, 0.0, 1, 40), GaussianPrior(0.5, 0.0, 0.01, 1))
    m = build_aem(prior, 5, toy, lambda h, hl: 0.5 * toy(h, hl), list(POS), TIMES, seed=1)
    np.testing.assert_array_equal(m.s_e, 0.0)
    np.testing.assert_allclose(m.e, 0.5 * toy(8.0, 0.5), rtol=1e-14)


def test_prior_defaults_and_validation(rng):
    p = AemPrior()
    assert (p.h_t.mean, p.h_t.std, p.R_l.mean, p.R_l.std) == (8.0, 2.5, 0.5, 0.2)
    d = p.R_l.sample(rng, 5000)
    assert d.min() >= 0.01 and d.max() <= 1.0
    with pytest.raises(ConfigurationError):
        GaussianPrior(8.0, -1.0)
    with pytest.raises(ConfigurationError):
        GaussianPrior(50.0, 1.0, 1.0, 40.0)
    with pytest.raises(ConfigurationError):
        build_aem(p, 1, toy, toy, list(POS), TIMES, seed=0)


def test_seed_reproducible_and_thread_independent():
    f = lambda h, hl: toy(h, hl) ** 2 / 10  # noqa: E731
    a = build_aem(AemPrior(), 40, toy, f, list(POS), TIMES, seed=9)
    b = build_aem(AemPrior(), 40, toy, f, list(POS), TIMES, seed=9, threads=4)
    assert np.array_equal(a.e, b.e) and np.array_equal(a.s_e, b.s_e)
    c = build_aem(AemPrior(), 40, toy, f, list(POS), TIMES, seed=10)
    assert not np.array_equal(a.e, c.e)


def test_monte_carlo_consistency():
    f = lambda h, hl: toy(h, hl) ** 2 / 10  # noqa: E731
    n = 400
    a = build_aem(AemPrior(), n, toy, f, list(POS), TIMES, seed=2)
    b = build_aem(AemPrior(), 2 * n, toy, f, list(POS), TIMES, seed=3)
    assert np.all(np.abs(a.e - b.e) <= 3 * a.s_e / np.sqrt(n) + 1e-12)


def test_failures_are_skipped_until_threshold():
    calls = {"n": 0}

    def flaky(every):
        def f(h, hl):
            calls["n"] += 1
            if calls["n"] % every == 0:
                raise SolverError("boom")
            return toy(h, hl)
        return f

    m = build_aem(AemPrior(), 20, toy, flaky(20), list(POS), TIMES, seed=0)
    assert m.n_skipped == 1 and m.n_samples == 19
    calls["n"] = 0
    with pytest.raises(AemBuildError):
        build_aem(AemPrior(), 20, toy, flaky(5), list(POS), TIMES, seed=0)


def test_apply_aem_examples():
    zero = AemModel(list(POS), TIMES, np.zeros((2, TIMES.size)), np.zeros((2, TIMES.size)), 2, {})
    r = np.arange(2.0 * TIMES.size).reshape(2, -1)
    sig = np.full_like(r, 0.3)
    out, s = apply_aem(r, zero, sig)
    assert np.array_equal(out, r) and np.array_equal(s, sig)
    m = AemModel(list(POS), TIMES, r, np.full_like(r, 0.4), 2, {})
    out, s = apply_aem(r, m, sig)
    assert np.all(out == 0.0)
    np.testing.assert_allclose(s, 0.5)
    with pytest.raises(DomainError):
        apply_aem(r[:, :-1], m, None)
    with pytest.raises(DomainError):
        apply_aem(r, m, sig[:, :-1])


@given(st.floats(0.0, 10.0), st.floats(1e-3, 10.0))
def test_inflated_sigma_not_smaller(s_e, sigma):
    m = AemModel(["a"], [0.0], [[0.0]], [[s_e]], 2, {})
    _, s = apply_aem([[0.0]], m, [[sigma]])
    assert s[0, 0] >= sigma


def test_model_invariants():
    with pytest.raises(DomainError):
        AemModel(["a"], [0.0], [[0.0]], [[-1.0]], 2, {})
    with pytest.raises(DomainError):
        AemModel(["a"], [0.0], [[0.0]], [[1.0]], 1, {})
    with pytest.raises(DomainError):
        AemModel(["a"], [0.0, 1.0], [[0.0]], [[1.0]], 2, {})


def test_csv_round_trip(tmp_path):
    f = lambda h, hl: toy(h, hl) / 3  # noqa: E731
    m = build_aem(AemPrior(), 6, toy, f, list(POS), TIMES, seed=4)
    m.to_csv(tmp_path / "aem.csv")
    assert (tmp_path / "aem.json").exists()
    back = AemModel.from_csv(tmp_path / "aem.csv")
    assert back.sensor_ids == list(POS) and back.seed == 4 and back.n_samples == 6
    np.testing.assert_array_equal(back.e, m.e)
    np.testing.assert_array_equal(back.s_e, m.s_e)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DomainError):
        AemModel.from_csv(tmp_path / "bad.csv")
