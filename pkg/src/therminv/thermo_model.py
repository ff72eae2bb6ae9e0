"""Physical and dimensionless descriptions of the climatic-chamber sample.

All temperatures are in degrees Celsius. The dimensionless temperature is
``u = T / T0`` with ``T0 = 20 degC`` by default, time is ``tau = t / t0`` and
space is ``chi = x / L0x``.

The lateral coefficient ``R_l`` is called a resistance in the literature but
carries conductance units (W m-2 K-1); it is handled as a surface conductance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

HOUR = 3600.0


@dataclass(frozen=True)
class MaterialLayer:
    """Affine temperature-dependent properties of one material.

    ``k(T) = k0 + k1 * T / T0`` and ``c(T) = c0 + c1 * T / T0``. The intercept
    ``c0`` may be negative (wood fiber) as long as ``c(T)`` stays positive over
    the operating range.
    """

    name: str
    k0: float
    k1: float
    c0: float
    c1: float
    thickness: float

    def __post_init__(self):
        if not self.thickness > 0:
            raise ConfigurationError(f"layer {self.name!r}: thickness must be > 0")
        if self.k0 == 0 or self.c0 == 0:
            raise ConfigurationError(f"layer {self.name!r}: k0 and c0 must be non-zero")

    def conductivity(self, T, T0):
        return self.k0 + self.k1 * np.asarray(T) / T0

    def capacity(self, T, T0):
        return self.c0 + self.c1 * np.asarray(T) / T0

    def check_range(self, T_lo, T_hi, T0):
        """Raise if k or c is non-positive anywhere in ``[T_lo, T_hi]``."""
        # affine laws: checking the end points is sufficient
        T = np.array([T_lo, T_hi], dtype=float)
        if np.any(self.conductivity(T, T0) <= 0):
            raise ConfigurationError(
                f"layer {self.name!r}: conductivity not positive over [{T_lo}, {T_hi}] degC")
        if np.any(self.capacity(T, T0) <= 0):
            raise ConfigurationError(
                f"layer {self.name!r}: capacity not positive over [{T_lo}, {T_hi}] degC")


@dataclass(frozen=True)
class Geometry:
    """Sample dimensions in metres.

    ``layer_boundaries`` are positions along the height ``x`` separating the
    wood fiber (first layer) from the insulator (second layer).
    """

    L0x: float = 0.16
    L0y: float = 0.08
    L0z: float = 0.08
    layer_boundaries: tuple = (0.0, 0.08, 0.16)
    aluminum_thickness: float = 1e-4

    def __post_init__(self):
        b = np.asarray(self.layer_boundaries, dtype=float)
        if min(self.L0x, self.L0y, self.L0z) <= 0:
            raise ConfigurationError("domain dimensions must be > 0")
        if b.size < 2 or np.any(np.diff(b) <= 0):
            raise ConfigurationError("layer boundaries must be strictly increasing")
        if b[0] != 0.0 or not np.isclose(b[-1], self.L0x, rtol=0, atol=1e-12):
            raise ConfigurationError("layer boundaries must start at 0 and end at L0x")
        if not 0 < self.aluminum_thickness < 0.5 * self.L0y:
            raise ConfigurationError("aluminum thickness must lie in (0, L0y/2)")
        object.__setattr__(self, "layer_boundaries", tuple(float(v) for v in b))

    @property
    def interface_position(self):
        return self.layer_boundaries[1]


@dataclass(frozen=True)
class BoundarySchedule:
    """Chamber set-point as ``(time [s], temperature [degC])`` breakpoints.

    Linear between breakpoints, constant outside.
    """

    breakpoints: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(T)) for t, T in self.breakpoints)
        if not pts:
            raise ConfigurationError("boundary schedule is empty")
        times = np.array([p[0] for p in pts])
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("schedule times must be strictly increasing")
        object.__setattr__(self, "breakpoints", pts)

    @property
    def times(self):
        return np.array([p[0] for p in self.breakpoints])

    @property
    def temperatures(self):
        return np.array([p[1] for p in self.breakpoints])

    def __call__(self, t):
        return boundary_temperature(self, t)

    def rates(self):
        """Ramp rate of each segment in degC per hour."""
        return np.diff(self.temperatures) / (np.diff(self.times) / HOUR)

    @classmethod
    def constant(cls, T, horizon=20 * HOUR):
        return cls(((0.0, T), (horizon, T)))


def boundary_temperature(schedule, t):
    """Chamber temperature at time ``t`` (s)."""
    if not isinstance(schedule, BoundarySchedule):
        schedule = BoundarySchedule(tuple(schedule))
    # np.interp clamps to the end values, i.e. constant extrapolation
    out = np.interp(t, schedule.times, schedule.temperatures)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ReferenceScales:
    T0: float = 20.0
    t0: float = 20 * HOUR
    L0x: float = 0.16

    def __post_init__(self):
        if not (self.T0 > 0 and self.t0 > 0 and self.L0x > 0):
            raise ConfigurationError("reference scales must be > 0")


@dataclass(frozen=True)
class ParameterPoint:
    """Top and lateral Biot numbers ``(Bi_t, Bi_l)``.

    ``bi_t = inf`` flags the Dirichlet top/bottom configuration.
    """

    bi_t: float
    bi_l: float

    def __post_init__(self):
        if np.isnan(self.bi_t) or not np.isfinite(self.bi_l):
            raise ConfigurationError("Biot numbers must be finite (bi_t may be +inf)")
        if self.bi_t < 0 or self.bi_l < 0:
            raise ConfigurationError("Biot numbers must be >= 0")

    @property
    def dirichlet(self):
        return np.isinf(self.bi_t)


@dataclass(frozen=True)
class DimensionlessConfig:
    """Dimensionless lumped problem.

    Slopes follow ``kappa_i(u) = 1 + kappa_i1 u`` and ``zeta_i(u) = 1 + zeta_i1 u``.
    The reference context (``k10``, ``L0x``, ``T0``, ``t0``) is kept so that
    Biot numbers can be mapped back to physical coefficients.
    """

    fo1: float
    fo2: float
    bi_t: float
    bi_l: float
    r: float
    kappa21: float
    kappa11: float
    kappa21_slope: float
    zeta11: float
    zeta21: float
    u_ini: float
    tau_points: tuple
    u_points: tuple
    chi_interface: float = 0.5
    k10: float = 8.5e-3
    L0x: float = 0.16
    T0: float = 20.0
    t0: float = 20 * HOUR

    def __post_init__(self):
        if not 0 < self.chi_interface < 1:
            raise ConfigurationError("chi_interface must lie in (0, 1)")
        if self.fo1 == 0 or self.fo2 == 0 or self.kappa21 <= 0:
            raise ConfigurationError("degenerate Fourier numbers or conductivity ratio")
        object.__setattr__(self, "tau_points", tuple(float(v) for v in self.tau_points))
        object.__setattr__(self, "u_points", tuple(float(v) for v in self.u_points))

    @property
    def gamma21(self):
        """Capacity ratio ``c20 / c10`` implied by the Fourier numbers."""
        return self.fo1 * self.kappa21 / self.fo2

    def u_inf(self, tau):
        out = np.interp(tau, self.tau_points, self.u_points)
        return float(out) if np.ndim(out) == 0 else out

    def du_inf(self, tau):
        """Slope of the schedule (right derivative at breakpoints)."""
        tp = np.asarray(self.tau_points)
        up = np.asarray(self.u_points)
        if tp.size < 2:
            return 0.0
        k = np.searchsorted(tp, tau, side="right") - 1
        if k < 0 or k >= tp.size - 1:
            return 0.0
        return (up[k + 1] - up[k]) / (tp[k + 1] - tp[k])

    @property
    def breakpoints_tau(self):
        """Interior kinks of the schedule inside (0, 1)."""
        return tuple(t for t in self.tau_points if 0.0 < t < 1.0)

    def with_parameters(self, p):
        return _replace(self, bi_t=p.bi_t, bi_l=p.bi_l)

    def with_schedule(self, tau_points, u_points):
        return _replace(self, tau_points=tuple(tau_points), u_points=tuple(u_points))

    @property
    def parameters(self):
        return ParameterPoint(self.bi_t, self.bi_l)


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def affine_property(slope, u):
    """Dimensionless affine property ``1 + slope * u``."""
    return 1.0 + slope * u


def nondimensionalize(layers, geometry, scales, h_t, R_l, schedule, T_ini,
                      operating_range=None):
    """Map the physical lumped problem to its dimensionless form.

    Parameters
    ----------
    layers : sequence of MaterialLayer
        Wood fiber first, insulator second. Extra layers (aluminum) are ignored.
    geometry : Geometry
    scales : ReferenceScales
    h_t, R_l : float
        Top transfer coefficient and lateral conductance, W m-2 K-1.
    schedule : BoundarySchedule
    T_ini : float
        Initial temperature, degC.
    operating_range : (float, float), optional
        Temperature range over which the property laws must stay positive.
        Defaults to the span of the schedule and ``T_ini``.

    Returns
    -------
    DimensionlessConfig
    """
    if len(layers) < 2:
        raise ConfigurationError("need wood fiber and insulator layers")
    if h_t < 0 or R_l < 0:
        raise ConfigurationError("transfer coefficients must be >= 0")
    wood, ins = layers[0], layers[1]
    L = scales.L0x
    if L <= 0 or wood.k0 == 0 or wood.c0 == 0 or ins.c0 == 0:
        raise ConfigurationError("zero denominator in nondimensionalization")
    if operating_range is None:
        temps = list(schedule.temperatures) + [T_ini]
        operating_range = (min(temps), max(temps))
    for layer in (wood, ins):
        layer.check_range(*operating_range, scales.T0)

    fo1 = wood.k0 * scales.t0 / (wood.c0 * L ** 2)
    fo2 = ins.k0 * scales.t0 / (ins.c0 * L ** 2)
    return DimensionlessConfig(
        fo1=fo1,
        fo2=fo2,
        bi_t=top_biot(h_t, wood.k0, L),
        bi_l=lateral_biot(R_l, wood.k0, L),
        r=geometry.L0x / geometry.L0y,
        kappa21=ins.k0 / wood.k0,
        kappa11=wood.k1 / wood.k0,
        kappa21_slope=ins.k1 / ins.k0,
        zeta11=wood.c1 / wood.c0,
        zeta21=ins.c1 / ins.c0,
        u_ini=T_ini / scales.T0,
        tau_points=tuple(schedule.times / scales.t0),
        u_points=tuple(schedule.temperatures / scales.T0),
        chi_interface=geometry.interface_position / geometry.L0x,
        k10=wood.k0,
        L0x=L,
        T0=scales.T0,
        t0=scales.t0,
    )


def top_biot(h_t, k10, L0x):
    return h_t * L0x / k10


def lateral_biot(R_l, k10, L0x):
    return 4.0 * R_l * L0x / k10


def parameters_to_physical(p, cfg):
    """``(Bi_t, Bi_l) -> (h_t, R_l)`` in W m-2 K-1 using the config context."""
    h_t = p.bi_t * cfg.k10 / cfg.L0x
    R_l = p.bi_l * cfg.k10 / (4.0 * cfg.L0x)
    return h_t, R_l


def parameters_to_dimensionless(h_t, R_l, cfg):
    return ParameterPoint(top_biot(h_t, cfg.k10, cfg.L0x),
                          lateral_biot(R_l, cfg.k10, cfg.L0x))


# ---------------------------------------------------------------------------
# reference configuration of the wood fiber experiment

def paper_layers():
    wood = MaterialLayer("wood_fiber", k0=8.5e-3, k1=3.17e-2, c0=-2.77e5, c1=4.7e5,
                         thickness=0.08)
    insulator = MaterialLayer("insulator", k0=4e-3, k1=0.0, c0=7e4, c1=0.0, thickness=0.08)
    aluminum = MaterialLayer("aluminum", k0=240.0, k1=0.0, c0=2.37e6, c1=0.0,
                             thickness=1e-4)
    return wood, insulator, aluminum


def paper_schedule():
    return BoundarySchedule(((0.0, 20.0), (5 * HOUR, 30.0), (15 * HOUR, 30.0),
                             (20 * HOUR, 20.0)))


def paper_config(h_t=8.0, R_l=0.5):
    """Dimensionless config with the reference material data and schedule."""
    return nondimensionalize(paper_layers(), Geometry(), ReferenceScales(), h_t, R_l,
                             paper_schedule(), T_ini=20.0)
