import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from therminv.errors import ConfigurationError
from therminv.thermo_model import (HOUR, BoundarySchedule, Geometry, MaterialLayer,
                                   ParameterPoint, ReferenceScales, affine_property,
                                   boundary_temperature, nondimensionalize, paper_layers,
                                   paper_schedule, parameters_to_dimensionless,
                                   parameters_to_physical)

pos = st.floats(1e-3, 1e3, allow_nan=False)


def test_affine_property_examples():
    assert affine_property(0.0, 0.9) == 1.0
    assert affine_property(3.729, 0.0) == 1.0
    slope = 3.17e-2 / 8.5e-3
    assert affine_property(slope, 1.0) == pytest.approx(4.729, abs=1e-3)


def test_nondimensionalize_reference_values(cfg_paper):
    assert cfg_paper.bi_t == pytest.approx(150.588, rel=1e-5)
    assert cfg_paper.bi_l == pytest.approx(37.647, rel=1e-5)
    assert cfg_paper.r == 2.0
    assert cfg_paper.kappa21 == pytest.approx(0.4706, abs=1e-4)
    assert cfg_paper.chi_interface == pytest.approx(0.5)
    assert cfg_paper.kappa11 == pytest.approx(3.17e-2 / 8.5e-3)
    assert cfg_paper.zeta11 == pytest.approx(4.7e5 / -2.77e5)


def test_fourier_numbers(cfg_paper):
    wood, ins, _ = paper_layers()
    t0, L = 20 * HOUR, 0.16
    assert cfg_paper.fo1 == pytest.approx(wood.k0 * t0 / (wood.c0 * L ** 2))
    assert cfg_paper.fo2 == pytest.approx(ins.k0 * t0 / (ins.c0 * L ** 2))


def test_u_inf_range(cfg_paper):
    u = cfg_paper.u_inf(np.linspace(0, 1, 1001))
    assert u.min() == pytest.approx(1.0)
    assert u.max() == pytest.approx(1.5)


def test_boundary_temperature_examples():
    s = paper_schedule()
    assert boundary_temperature(s, 0.0) == 20.0
    assert boundary_temperature(s, 10 * HOUR) == 30.0
    assert boundary_temperature(s, 2.5 * HOUR) == pytest.approx(25.0)
    assert boundary_temperature(s, -5.0) == 20.0
    assert boundary_temperature(s, 30 * HOUR) == 20.0
    np.testing.assert_allclose(s.rates(), [2.0, 0.0, -2.0])


def test_empty_schedule_rejected():
    with pytest.raises(ConfigurationError):
        BoundarySchedule(())


def test_schedule_times_must_increase():
    with pytest.raises(ConfigurationError):
        BoundarySchedule(((0, 20), (0, 30)))


@given(st.sampled_from([0.0, 5 * HOUR, 15 * HOUR, 20 * HOUR]))
def test_schedule_continuous_at_breakpoints(tb):
    s = paper_schedule()
    eps = 1e-7
    left, right = boundary_temperature(s, tb - eps), boundary_temperature(s, tb + eps)
    assert abs(left - right) < 1e-9
    assert abs(boundary_temperature(s, tb) - left) < 1e-9


def test_conversion_examples(cfg_paper):
    h_t, R_l = parameters_to_physical(ParameterPoint(150.588235294117647, 0.0), cfg_paper)
    assert h_t == pytest.approx(8.0)
    assert R_l == 0.0
    assert parameters_to_dimensionless(0.0, 0.5, cfg_paper).bi_t == 0.0


@given(pos, pos)
def test_conversion_round_trip(cfg_paper, h_t, R_l):
    p = parameters_to_dimensionless(h_t, R_l, cfg_paper)
    back = parameters_to_physical(p, cfg_paper)
    assert math.isclose(back[0], h_t, rel_tol=1e-12)
    assert math.isclose(back[1], R_l, rel_tol=1e-12)


@given(pos, pos)
def test_nondimensionalize_homogeneous(h_t, R_l):
    args = (paper_layers(), Geometry(), ReferenceScales())
    a = nondimensionalize(*args, h_t, R_l, paper_schedule(), 20.0)
    b = nondimensionalize(*args, 2 * h_t, 2 * R_l, paper_schedule(), 20.0)
    assert b.bi_t == 2 * a.bi_t
    assert b.bi_l == 2 * a.bi_l


def test_negative_coefficients_rejected():
    with pytest.raises(ConfigurationError):
        nondimensionalize(paper_layers(), Geometry(), ReferenceScales(), -1.0, 0.5,
                          paper_schedule(), 20.0)


def test_degenerate_layers_rejected():
    with pytest.raises(ConfigurationError):
        MaterialLayer("bad", k0=0.0, k1=0.0, c0=1.0, c1=0.0, thickness=0.1)
    with pytest.raises(ConfigurationError):
        MaterialLayer("bad", k0=1.0, k1=0.0, c0=1.0, c1=0.0, thickness=0.0)


def test_capacity_must_stay_positive():
    wood = MaterialLayer("w", k0=8.5e-3, k1=3.17e-2, c0=-2.77e5, c1=4.7e5, thickness=0.08)
    wood.check_range(20.0, 30.0, 20.0)
    with pytest.raises(ConfigurationError):
        wood.check_range(0.0, 30.0, 20.0)


def test_geometry_invariants():
    with pytest.raises(ConfigurationError):
        Geometry(layer_boundaries=(0.0, 0.1, 0.08))
    with pytest.raises(ConfigurationError):
        Geometry(layer_boundaries=(0.0, 0.08, 0.15))
    assert Geometry().interface_position == 0.08


def test_parameter_point_invariants():
    assert ParameterPoint(math.inf, 1.0).dirichlet
    with pytest.raises(ConfigurationError):
        ParameterPoint(math.nan, 1.0)
    with pytest.raises(ConfigurationError):
        ParameterPoint(1.0, -1.0)


def test_reference_scales_positive():
    with pytest.raises(ConfigurationError):
        ReferenceScales(T0=0.0)
