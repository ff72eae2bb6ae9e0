"""Method-of-lines solver for the dimensionless lumped two-layer problem.

Space is discretized with a vertex-centred conservative scheme (equivalent to
second-order central differences with ghost-node elimination at the Robin
faces). A single node sits on the wood fiber / insulator interface; its
control volume is split into two half cells, one per material, which enforces
flux and temperature continuity. Time integration uses LSODA (variable step,
variable order BDF/Adams switching) with a banded Jacobian.

The discrete equation at node ``i`` reads::

    w_i(u) du_i/dtau = G_{i+1/2} - G_{i-1/2} + Bi_l r Vw_i (u_inf - u_i) + B_i

with ``G = K(u_mid) (u_{i+1} - u_i) / h`` the face flux, ``w_i`` the node
capacity scaled by the wood-fiber Fourier number and ``B_i`` the Robin terms.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import odeint, ODEintWarning

from .errors import ConfigurationError, DomainError, EvaluationError, SolverError


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh on [0, 1] with one node on the material interface."""

    n_nodes: int = 101
    chi_interface: float = 0.5

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ConfigurationError("need at least 3 nodes")
        pos = (self.n_nodes - 1) * self.chi_interface
        if abs(pos - round(pos)) > 1e-9 or not 0 < round(pos) < self.n_nodes - 1:
            raise ConfigurationError(
                f"interface chi={self.chi_interface} is not node-aligned on {self.n_nodes} nodes")

    @property
    def chi(self):
        return np.linspace(0.0, 1.0, self.n_nodes)

    @property
    def h(self):
        return 1.0 / (self.n_nodes - 1)

    @property
    def interface_index(self):
        return int(round((self.n_nodes - 1) * self.chi_interface))

    @classmethod
    def for_config(cls, cfg, n_nodes=101):
        return cls(n_nodes, cfg.chi_interface)


@dataclass(frozen=True)
class SolverControls:
    abs_tol: float = 1e-3
    rel_tol: float = 1e-3
    max_step: float = 0.0  # 0 lets the integrator choose

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0) or self.max_step < 0:
            raise ConfigurationError("tolerances must be > 0 and max_step >= 0")


@dataclass
class Field1D:
    """Node-by-time field ``values[node, time]`` on a :class:`Mesh1D`."""

    mesh: Mesh1D
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes, self.times.size):
            raise ValueError("values must have shape (n_nodes, n_times)")

    def sample(self, chi, tau):
        return sample_at(self, chi, tau)

    def to_csv(self, path, name="u"):
        write_field_csv(path, self.mesh.chi, self.times, {name: self.values})


def write_field_csv(path, chi, times, columns):
    """Tidy long-format CSV: ``tau, chi, <columns...>``."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "chi"] + names)
        for n, tau in enumerate(times):
            for i, c in enumerate(chi):
                w.writerow([repr(float(tau)), repr(float(c))]
                           + [repr(float(columns[k][i, n])) for k in names])


class LumpedOperator:
    """Precomputed discrete operator for one config / parameter pair."""

    def __init__(self, cfg, p, mesh):
        if mesh.interface_index != Mesh1D(mesh.n_nodes, cfg.chi_interface).interface_index:
            raise ConfigurationError("mesh interface does not match config")
        self.cfg = cfg
        self.p = p
        self.mesh = mesh
        n, m, h = mesh.n_nodes, mesh.interface_index, mesh.h
        self.n, self.m, self.h = n, m, h
        self.dirichlet = bool(np.isinf(p.bi_t))

        vw = np.zeros(n)
        vi = np.zeros(n)
        vw[:m] = h
        vw[m] = 0.5 * h
        vi[m + 1:] = h
        vi[m] = 0.5 * h
        vw[0] *= 0.5
        vi[-1] *= 0.5
        if m == 0 or m == n - 1:
            raise ConfigurationError("interface on a boundary node")
        self.vw, self.vi = vw, vi

        # cell c spans nodes (c, c+1); cells left of the interface are wood
        wood = np.arange(n - 1) < m
        self.k_base = np.where(wood, 1.0, cfg.kappa21)
        self.k_slope = np.where(wood, cfg.kappa11, cfg.kappa21 * cfg.kappa21_slope)

        # w(u) = a0 + a1 u, i.e. node capacity divided by Fo1
        self.cap0 = vw / cfg.fo1 + vi * cfg.kappa21 / cfg.fo2
        self.cap1 = vw * cfg.zeta11 / cfg.fo1 + vi * cfg.kappa21 * cfg.zeta21 / cfg.fo2
        self.src = p.bi_l * cfg.r * vw

    # -- building blocks ------------------------------------------------

    def capacity(self, u):
        w = self.cap0 + self.cap1 * u
        if np.any(w <= 0):
            i = int(np.argmax(w <= 0))
            raise EvaluationError(
                f"heat capacity not positive at node {i} (u={u[i]:.4g}); "
                "property law outside its validity range")
        return w

    def face_flux(self, u):
        du = np.diff(u)
        kf = self.k_base + self.k_slope * 0.5 * (u[1:] + u[:-1])
        return kf * du / self.h

    def balance(self, u, tau):
        """Right-hand side before division by capacity."""
        g = self.face_flux(u)
        uinf = self.cfg.u_inf(tau)
        r = np.zeros_like(u)
        r[:-1] += g
        r[1:] -= g
        r += self.src * (uinf - u)
        if not self.dirichlet:
            bi = self.p.bi_t
            r[0] -= bi * (u[0] - uinf)
            r[-1] -= bi * (u[-1] - uinf)
        return r

    def rhs(self, u, tau):
        return self.balance(u, tau) / self.capacity(u)

    # -- integrator adaptors -----------------------------------------------

    def full_state(self, y, tau):
        if not self.dirichlet:
            return y
        ub = self.cfg.u_inf(tau)
        return np.concatenate(([ub], y, [ub]))

    def ode(self, y, tau):
        u = self.full_state(y, tau)
        du = self.rhs(u, tau)
        return du[1:-1] if self.dirichlet else du


def assemble_rhs(u_nodes, tau, cfg, p, mesh):
    """Time derivative ``du/dtau`` of the semi-discrete lumped problem.

    In the Dirichlet configuration (``p.bi_t == inf``) the boundary rows hold
    the slope of the prescribed chamber temperature.
    """
    u = np.asarray(u_nodes, dtype=float)
    if u.size != mesh.n_nodes:
        raise DomainError("u_nodes length does not match mesh")
    op = LumpedOperator(cfg, p, mesh)
    du = op.rhs(u, tau)
    if op.dirichlet:
        du[0] = du[-1] = cfg.du_inf(tau)
    return du


def _output_grid(output_times):
    t = np.asarray(output_times, dtype=float).ravel()
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise DomainError("output times must be strictly increasing")
    if t[0] < 0 or t[-1] > 1 + 1e-12:
        raise DomainError("output times must lie in [0, 1]")
    if t[0] > 0:
        t = np.concatenate(([0.0], t))
    return t


def integrate(fun, y0, times, controls, tcrit=(), atol=None, band=1):
    """Run LSODA and convert its failure modes into :class:`SolverError`."""
    atol = controls.abs_tol if atol is None else atol
    kw = {}
    if controls.max_step > 0:
        kw["hmax"] = controls.max_step
    tcrit = [t for t in tcrit if times[0] < t < times[-1]]
    if tcrit:
        kw["tcrit"] = np.asarray(tcrit)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ODEintWarning)
        try:
            y, info = odeint(fun, y0, times, rtol=controls.rel_tol, atol=atol,
                             ml=band, mu=band, mxstep=50000, full_output=True, **kw)
        except ODEintWarning as exc:
            raise SolverError(f"time integration failed: {exc}") from exc
    if info["message"] != "Integration successful.":
        tcur = info.get("tcur")
        tau = float(tcur[-1]) if tcur is not None and len(tcur) else None
        raise SolverError(f"time integration failed: {info['message']}", tau=tau)
    if not np.all(np.isfinite(y)):
        raise SolverError("non-finite solution")
    return y


def solve_lumped(cfg, p=None, mesh=None, controls=None, output_times=None):
    """Solve the lumped problem and sample it at ``output_times``.

    Parameters
    ----------
    cfg : DimensionlessConfig
    p : ParameterPoint, optional
        Defaults to the Biot numbers stored in ``cfg``.
    mesh : Mesh1D, optional
        Defaults to 101 nodes.
    controls : SolverControls, optional
    output_times : array_like, optional
        Dimensionless output times in [0, 1]; 0 is prepended when missing.
        Defaults to 201 equally spaced times.

    Returns
    -------
    Field1D
    """
    p = cfg.parameters if p is None else p
    mesh = Mesh1D.for_config(cfg) if mesh is None else mesh
    controls = SolverControls() if controls is None else controls
    times = _output_grid(np.linspace(0, 1, 201) if output_times is None else output_times)
    op = LumpedOperator(cfg, p, mesh)

    u0 = np.full(mesh.n_nodes, cfg.u_ini)
    y0 = u0[1:-1] if op.dirichlet else u0
    y = integrate(op.ode, y0, times, controls, tcrit=cfg.breakpoints_tau)

    if op.dirichlet:
        ub = np.asarray(cfg.u_inf(times), dtype=float)
        ub[0] = cfg.u_ini
        values = np.column_stack([ub, y, ub]).T
    else:
        values = y.T
    values = np.ascontiguousarray(values)
    values[:, 0] = cfg.u_ini
    return Field1D(mesh, times, values)


def _bracket(grid, x, what):
    n = grid.size
    if x < grid[0] - 1e-12 or x > grid[-1] + 1e-12:
        raise DomainError(f"{what}={x} outside [{grid[0]}, {grid[-1]}]")
    k = int(np.clip(np.searchsorted(grid, x, side="right") - 1, 0, n - 2))
    span = grid[k + 1] - grid[k]
    a = float(np.clip((x - grid[k]) / span, 0.0, 1.0))
    return k, a


def sample_at(field, chi, tau):
    """Bilinear interpolation of a :class:`Field1D` in space and time."""
    if not 0 <= chi <= 1:
        raise DomainError(f"chi={chi} outside [0, 1]")
    xs = field.mesh.chi
    i, a = _bracket(xs, chi, "chi")
    if field.times.size == 1:
        if tau != field.times[0]:
            raise DomainError("tau outside the stored times")
        col = field.values[:, 0]
        return (1 - a) * col[i] + a * col[i + 1]
    n, b = _bracket(field.times, tau, "tau")
    v = field.values
    # exact at nodes: weights 0/1 select stored values
    lo = v[i, n] if a == 0 else (1 - a) * v[i, n] + a * v[i + 1, n]
    hi = v[i, n + 1] if a == 0 else (1 - a) * v[i, n + 1] + a * v[i + 1, n + 1]
    return lo if b == 0 else (hi if b == 1 else (1 - b) * lo + b * hi)


def sample_series(field, chi, taus=None):
    """Time series at position ``chi`` (all stored times by default).

    Space is interpolated linearly between nodes, time linearly between
    stored outputs.
    """
    i, a = _bracket(field.mesh.chi, chi, "chi")
    v = field.values
    col = v[i] if a == 0 else (1 - a) * v[i] + a * v[i + 1]
    if taus is None:
        return col
    taus = np.asarray(taus, dtype=float)
    t = field.times
    if taus.size and (taus.min() < t[0] - 1e-12 or taus.max() > t[-1] + 1e-12):
        raise DomainError("tau outside the stored times")
    return np.interp(taus, t, col)
