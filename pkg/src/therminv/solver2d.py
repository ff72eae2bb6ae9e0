"""Complete 2D (x, y) model solved with the DuFort-Frankel scheme.

The section holds the wood fiber (top), the insulator (bottom) and the
aluminum tape on the lateral faces of the wood fiber. The discretization is
vertex-centred: nodes carry temperatures, cells carry a material index, and
each edge conductance sums the contributions of the cells sharing the edge,
so temperature and flux continuity at material interfaces hold by
construction. Exchange through the two faces normal to ``z`` is folded into a
volumetric sink ``2 h_l / L0z (T_inf - T)`` over the wood/aluminum section,
using the y/z symmetry of the square cross-section.

By default the tape is a conductive membrane carried by the lateral boundary
nodes (extra capacity ``c3 e`` and along-x conductance ``k3 e`` per unit
length, ``e`` the tape thickness). Resolving the 0.1 mm tape with cells is
supported (``Mesh2D.build(..., membrane=False)``) but such cells relax in
microseconds, and the DuFort-Frankel artifact ``lam dt^2/2 T_tt`` then
dominates unless ``dt`` is a few milliseconds.

Three-level update (coefficients frozen at level n)::

    (M/2dt + D/2) T^{n+1} = (M/2dt - D/2) T^{n-1} + sum_j G_ij T_j^n + E T_inf^n

with ``D = sum_j G_ij + E`` and ``E`` the Robin and sink coefficients.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, DivergenceError
from .thermo_model import HOUR, boundary_temperature

log = logging.getLogger(__name__)

WOOD, INSULATOR, ALUMINUM = 1, 2, 3
GUARD_LIMIT = 1e-3


class ConsistencyWarning(UserWarning):
    """Time step too large for the DuFort-Frankel artifact term."""


@dataclass
class Mesh2D:
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    material_map: np.ndarray  # (nx-1, ny-1) ints in {1, 2, 3}
    tape_thickness: float = 0.0  # membrane tape on the lateral wood faces, m

    def __post_init__(self):
        self.x_nodes = np.asarray(self.x_nodes, dtype=float)
        self.y_nodes = np.asarray(self.y_nodes, dtype=float)
        self.material_map = np.asarray(self.material_map, dtype=np.int64)
        if np.any(np.diff(self.x_nodes) <= 0) or np.any(np.diff(self.y_nodes) <= 0):
            raise ConfigurationError("mesh coordinates must be strictly increasing")
        if self.material_map.shape != (self.x_nodes.size - 1, self.y_nodes.size - 1):
            raise ConfigurationError("material map must have one entry per cell")
        if not np.all(np.isin(self.material_map, (WOOD, INSULATOR, ALUMINUM))):
            raise ConfigurationError("material indices must be 1, 2 or 3")
        if self.tape_thickness < 0:
            raise ConfigurationError("tape thickness must be >= 0")

    @property
    def shape(self):
        return self.x_nodes.size, self.y_nodes.size

    @property
    def dx(self):
        return np.diff(self.x_nodes)

    @property
    def dy(self):
        return np.diff(self.y_nodes)

    @property
    def tape_edges(self):
        """Mask ``(nx-1, 2)`` of boundary x-edges carrying the membrane tape."""
        if self.tape_thickness == 0:
            return np.zeros((self.x_nodes.size - 1, 2), dtype=bool)
        m = self.material_map
        return np.column_stack((m[:, 0] == WOOD, m[:, -1] == WOOD))

    @classmethod
    def build(cls, geometry, spacing=2e-3, membrane=True, tape_cells=3, grading=1.5):
        """Tensor mesh of the section.

        With ``membrane=True`` the mesh is uniform at ``spacing`` (adjusted so
        layer boundaries fall on nodes) and the tape is a membrane. Otherwise
        the tape is resolved by ``tape_cells`` cells with geometric grading.
        """
        Ly = geometry.L0y
        b = geometry.layer_boundaries
        xs = [0.0]
        for lo, hi in zip(b[:-1], b[1:]):
            n = max(3, int(np.ceil((hi - lo) / spacing - 1e-9)))
            xs.extend(np.linspace(lo, hi, n + 1)[1:])
        x = np.array(xs)
        xc = 0.5 * (x[1:] + x[:-1])
        in_wood = xc < b[1]

        if membrane:
            ny = max(3, int(np.ceil(Ly / spacing - 1e-9))) + 1
            y = np.linspace(0.0, Ly, ny)
            mat = np.where(in_wood[:, None], WOOD, INSULATOR) * np.ones((1, ny - 1), dtype=int)
            return cls(x, y, mat, geometry.aluminum_thickness)

        ta = geometry.aluminum_thickness
        side = list(np.linspace(0.0, ta, tape_cells + 1))
        d = ta / tape_cells
        while True:
            d = min(d * grading, spacing)
            if side[-1] + d >= 0.5 * Ly - 0.5 * spacing:
                break
            side.append(side[-1] + d)
            if d >= spacing:
                break
        rest = 0.5 * Ly - side[-1]
        n_mid = max(1, int(np.ceil(rest / spacing - 1e-9)))
        half = np.concatenate((side, np.linspace(side[-1], 0.5 * Ly, n_mid + 1)[1:]))
        y = np.concatenate((half, Ly - half[-2::-1]))

        yc = 0.5 * (y[1:] + y[:-1])
        in_tape = (yc < ta) | (yc > Ly - ta)
        mat = np.where(in_wood[:, None], WOOD, INSULATOR) * np.ones((1, yc.size), dtype=int)
        mat[np.ix_(in_wood, in_tape)] = ALUMINUM
        return cls(x, y, mat)

    def check_resolution(self, geometry, min_cells=3):
        """Check that a cell-resolved tape spans ``min_cells`` cells."""
        if self.tape_thickness > 0 or not np.any(self.material_map == ALUMINUM):
            return
        ta = geometry.aluminum_thickness
        n_tape = int(np.sum(self.y_nodes < ta - 1e-15))
        if n_tape < min_cells:
            raise ConfigurationError(f"aluminum tape resolved by {n_tape} < {min_cells} cells")


@dataclass
class Field2D:
    """Temperatures ``values[ix, iy, it]`` in degC at uniformly spaced times (s)."""

    mesh: Mesh2D
    times: np.ndarray
    values: np.ndarray
    T0: float = 20.0
    props: tuple = None  # per-material (k0, k1, c0, c1) arrays used for fluxes
    dt: float = None  # integration step, s

    def sample(self, x, y):
        """Time series at point ``(x, y)`` by bilinear interpolation."""
        xs, ys = self.mesh.x_nodes, self.mesh.y_nodes
        if not (xs[0] - 1e-12 <= x <= xs[-1] + 1e-12 and ys[0] - 1e-12 <= y <= ys[-1] + 1e-12):
            from .errors import DomainError
            raise DomainError(f"point ({x}, {y}) outside the 2D domain")
        i = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2))
        j = int(np.clip(np.searchsorted(ys, y, side="right") - 1, 0, ys.size - 2))
        a = np.clip((x - xs[i]) / (xs[i + 1] - xs[i]), 0, 1)
        b = np.clip((y - ys[j]) / (ys[j + 1] - ys[j]), 0, 1)
        v = self.values
        return ((1 - a) * (1 - b) * v[i, j] + a * (1 - b) * v[i + 1, j]
                + (1 - a) * b * v[i, j + 1] + a * b * v[i + 1, j + 1])

    def sample_at_times(self, x, y, t):
        return np.interp(t, self.times, self.sample(x, y))

    def to_csv(self, path, every=1):
        xs, ys = self.mesh.x_nodes, self.mesh.y_nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "x_m", "y_m", "T_C"])
            for n in range(0, self.times.size, every):
                for i, x in enumerate(xs):
                    for j, y in enumerate(ys):
                        w.writerow([repr(float(self.times[n])), repr(float(x)),
                                    repr(float(y)), repr(float(self.values[i, j, n]))])


def _props(layers):
    wood, ins, alu = layers[0], layers[1], layers[2]
    k0 = np.array([0.0, wood.k0, ins.k0, alu.k0])
    k1 = np.array([0.0, wood.k1, ins.k1, alu.k1])
    c0 = np.array([0.0, wood.c0, ins.c0, alu.c0])
    c1 = np.array([0.0, wood.c1, ins.c1, alu.c1])
    return k0, k1, c0, c1


class _Layout:
    """Static geometric coefficients of the vertex-centred scheme."""

    def __init__(self, mesh, geometry, h_t, h_l, out_of_plane=True):
        nx, ny = mesh.shape
        dx, dy = mesh.dx, mesh.dy
        mat = mesh.material_map
        # quarter-cell volume of every cell assigned to each of its 4 corners
        q = 0.25 * dx[:, None] * dy[None, :]
        vol = np.zeros((nx, ny, 4))
        for m in (WOOD, INSULATOR, ALUMINUM):
            qm = np.where(mat == m, q, 0.0)
            v = np.zeros((nx, ny))
            v[:-1, :-1] += qm
            v[1:, :-1] += qm
            v[:-1, 1:] += qm
            v[1:, 1:] += qm
            vol[:, :, m] = v
        tape = mesh.tape_edges
        e = mesh.tape_thickness
        # membrane: length-weighted capacity and along-x geometric conductance
        self.tape_gx = np.zeros((nx - 1, ny))
        for col, jb in ((0, 0), (1, ny - 1)):
            seg = np.where(tape[:, col], 0.5 * dx * e, 0.0)
            vol[:-1, jb, ALUMINUM] += seg
            vol[1:, jb, ALUMINUM] += seg
            self.tape_gx[:, jb] = np.where(tape[:, col], e / dx, 0.0)
        self.vol = vol

        # Robin coefficients (W m-1 K-1 per unit depth) on each node
        robin = np.zeros((nx, ny))
        half_y = np.zeros(ny)
        half_y[:-1] += 0.5 * dy
        half_y[1:] += 0.5 * dy
        robin[0, :] += h_t * half_y
        robin[-1, :] += h_t * half_y
        for col, jb, cells in ((0, 0, mat[:, 0]), (1, ny - 1, mat[:, -1])):
            seg = np.where((cells == ALUMINUM) | tape[:, col], 0.5 * dx * h_l, 0.0)
            robin[:-1, jb] += seg
            robin[1:, jb] += seg
            if tape[0, col]:
                robin[0, jb] += h_t * e  # tape edge on the top face
        if out_of_plane:
            robin += 2.0 * h_l / geometry.L0z * (vol[:, :, WOOD] + vol[:, :, ALUMINUM])
        self.robin = robin


@numba.njit(cache=True)
def _cell_conductivity(T, mat, k0, k1, T0):
    nx, ny = T.shape
    kc = np.empty((nx - 1, ny - 1))
    for i in range(nx - 1):
        for j in range(ny - 1):
            tc = 0.25 * (T[i, j] + T[i + 1, j] + T[i, j + 1] + T[i + 1, j + 1])
            m = mat[i, j]
            kc[i, j] = k0[m] + k1[m] * tc / T0
    return kc


@numba.njit(cache=True)
def _edge_conductances(kc, dx, dy, T, tape_gx, k0, k1, T0):
    nx = dx.size + 1
    ny = dy.size + 1
    gx = np.zeros((nx - 1, ny))
    gy = np.zeros((nx, ny - 1))
    for i in range(nx - 1):
        for j in range(ny):
            s = 0.0
            if j > 0:
                s += kc[i, j - 1] * 0.5 * dy[j - 1]
            if j < ny - 1:
                s += kc[i, j] * 0.5 * dy[j]
            gx[i, j] = s / dx[i]
            if tape_gx[i, j] > 0.0:
                tm = 0.5 * (T[i, j] + T[i + 1, j])
                gx[i, j] += tape_gx[i, j] * (k0[3] + k1[3] * tm / T0)
    for i in range(nx):
        for j in range(ny - 1):
            s = 0.0
            if i > 0:
                s += kc[i - 1, j] * 0.5 * dx[i - 1]
            if i < nx - 1:
                s += kc[i, j] * 0.5 * dx[i]
            gy[i, j] = s / dy[j]
    return gx, gy


@numba.njit(cache=True)
def _node_capacity(T, vol, c0, c1, T0):
    nx, ny = T.shape
    cap = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            s = 0.0
            for m in range(1, 4):
                if vol[i, j, m] > 0.0:
                    s += vol[i, j, m] * (c0[m] + c1[m] * T[i, j] / T0)
            cap[i, j] = s
    return cap


_EXP_MASK = np.int64(0x7FF0000000000000)


@numba.njit(cache=True)
def _all_finite(a):
    # integer test on the exponent bits: fastmath callers may fold isfinite()
    bits = a.view(np.int64)
    for b in bits.flat:
        if b & _EXP_MASK == _EXP_MASK:
            return False
    return True


@numba.njit(cache=True, nogil=True, fastmath=True, error_model="numpy")
def _dufort_frankel(T_prev, T_cur, n_steps, dt, t_inf, mat, dx, dy, cap0, cap1, robin,
                    tape_gx, k0, k1, T0, record_every, out):
    """Advance ``n_steps`` three-level steps; ``out[:, :, r]`` gets every record.

    Node capacity is ``cap0 + cap1 T``. Edge conductances live in zero-padded
    arrays so the node update needs no boundary branches. Returns the index
    of the first step producing a non-finite value, or -1.
    """
    nx, ny = T_cur.shape
    kp = np.zeros((nx + 1, ny + 1))  # kp[i+1, j+1] = cell (i, j)
    dyp = np.zeros(ny + 1)
    dyp[1:ny] = dy
    dxp = np.zeros(nx + 1)
    dxp[1:nx] = dx
    gxp = np.zeros((nx + 1, ny))  # gxp[i+1, j] = edge (i, j)-(i+1, j)
    gyp = np.zeros((nx, ny + 1))
    # padded level buffers, rotated each step
    P = np.zeros((nx + 2, ny + 2))
    C = np.zeros((nx + 2, ny + 2))
    N = np.zeros((nx + 2, ny + 2))
    P[1:-1, 1:-1] = T_prev
    C[1:-1, 1:-1] = T_cur
    kt0 = k0[3]
    kt1 = k1[3] / T0
    for n in range(1, n_steps):
        for i in range(nx - 1):
            for j in range(ny - 1):
                m = mat[i, j]
                tc = 0.25 * (C[i + 1, j + 1] + C[i + 2, j + 1] + C[i + 1, j + 2] + C[i + 2, j + 2])
                kp[i + 1, j + 1] = k0[m] + k1[m] * tc / T0
        for i in range(nx - 1):
            hx = 0.5 / dx[i]
            for j in range(ny):
                gxp[i + 1, j] = (kp[i + 1, j] * dyp[j] + kp[i + 1, j + 1] * dyp[j + 1]) * hx
        for jb in (0, ny - 1):
            for i in range(nx - 1):
                if tape_gx[i, jb] > 0.0:
                    tm = 0.5 * (C[i + 1, jb + 1] + C[i + 2, jb + 1])
                    gxp[i + 1, jb] += tape_gx[i, jb] * (kt0 + kt1 * tm)
        for i in range(nx):
            for j in range(ny - 1):
                gyp[i, j + 1] = (kp[i, j + 1] * dxp[i] + kp[i + 1, j + 1] * dxp[i + 1]) * (0.5 / dy[j])
        tinf = t_inf[n]
        for i in range(nx):
            for j in range(ny):
                gw = gxp[i, j]
                ge = gxp[i + 1, j]
                gs = gyp[i, j]
                gn = gyp[i, j + 1]
                r = robin[i, j]
                diag = r + gw + ge + gs + gn
                acc = (r * tinf + gw * C[i, j + 1] + ge * C[i + 2, j + 1]
                       + gs * C[i + 1, j] + gn * C[i + 1, j + 2])
                a = (cap0[i, j] + cap1[i, j] * C[i + 1, j + 1]) / (2.0 * dt)
                v = ((a - 0.5 * diag) * P[i + 1, j + 1] + acc) / (a + 0.5 * diag)
                N[i + 1, j + 1] = v
        if not _all_finite(N):
            return n
        P, C, N = C, N, P
        if (n + 1) % record_every == 0:
            out[:, :, (n + 1) // record_every] = C[1:-1, 1:-1]
    return -1


def _implicit_operator(T, lay, mesh, props, T0):
    """Conductance matrix ``K`` (with Robin terms) and capacity vector at ``T``."""
    k0, k1, c0, c1 = props
    nx, ny = mesh.shape
    kc = _cell_conductivity(T, mesh.material_map, k0, k1, T0)
    gx, gy = _edge_conductances(kc, mesh.dx, mesh.dy, T, lay.tape_gx, k0, k1, T0)
    cap = _node_capacity(T, lay.vol, c0, c1, T0).ravel()
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows = [idx[:-1, :].ravel(), idx[:, :-1].ravel()]
    cols = [idx[1:, :].ravel(), idx[:, 1:].ravel()]
    vals = [gx.ravel(), gy.ravel()]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    off = sp.coo_matrix((v, (r, c)), shape=(nx * ny, nx * ny))
    off = off + off.T
    diag = np.asarray(off.sum(axis=1)).ravel() + lay.robin.ravel()
    K = sp.diags(diag) - off
    return K.tocsc(), cap


def _backward_euler(T, t, dt, n_sub, lay, mesh, props, schedule, T0):
    shape = T.shape
    u = T.ravel().copy()
    h = dt / n_sub
    for s in range(n_sub):
        K, cap = _implicit_operator(u.reshape(shape), lay, mesh, props, T0)
        tinf = boundary_temperature(schedule, t + (s + 1) * h)
        A = sp.diags(cap / h) + K
        b = cap / h * u + lay.robin.ravel() * tinf
        u = spsolve(A.tocsc(), b)
    return u.reshape(shape)


def _relaxation_rates(mesh, geometry, layers, h_t, h_l, T0, T_range):
    lay = _Layout(mesh, geometry, h_t, h_l)
    props = _props(layers)
    worst = 0.0
    for Tr in T_range:
        T = np.full(mesh.shape, float(Tr))
        K, cap = _implicit_operator(T, lay, mesh, props, T0)
        worst = max(worst, float(np.max(K.diagonal() / cap)))
    return worst


def _reference_time(schedule):
    seg = np.diff(schedule.times)
    seg = seg[seg > 0]
    return float(seg.min()) if seg.size else 20 * HOUR


def consistency_indicator(mesh, geometry, layers, h_t, h_l, dt, schedule, T0=20.0,
                          T_range=(20.0, 30.0)):
    """Relative size of the DuFort-Frankel artifact term.

    Replacing ``T^n`` by ``(T^{n+1} + T^{n-1})/2`` in the diagonal adds
    ``lam dt^2/2 T_tt`` to the node equation ``T_t = ...``, with ``lam`` the
    node relaxation rate (diagonal conductance over capacity). Against a
    forcing that varies on ``t_ref`` (shortest schedule segment) the
    indicator is ``max_i lam_i dt^2 / (2 t_ref)``.
    """
    lam = _relaxation_rates(mesh, geometry, layers, h_t, h_l, T0, T_range)
    return lam * dt ** 2 / (2.0 * _reference_time(schedule))


def guarded_time_step(mesh, geometry, layers, h_t, h_l, schedule, output_interval=60.0,
                      T0=20.0, limit=GUARD_LIMIT):
    """Largest ``dt`` dividing ``output_interval`` that satisfies the guard."""
    lam = _relaxation_rates(mesh, geometry, layers, h_t, h_l, T0, (20.0, 30.0))
    dt_max = np.sqrt(2.0 * limit * _reference_time(schedule) / lam)
    n = max(1, int(np.ceil(output_interval / dt_max - 1e-12)))
    return output_interval / n


def solve_complete(layers, geometry, schedule, h_t, h_l, T_ini, mesh=None, dt=None,
                   horizon=20 * HOUR, T0=20.0, output_interval=60.0, strict=False,
                   out_of_plane=True):
    """Run the DuFort-Frankel solver.

    Parameters
    ----------
    layers : sequence of MaterialLayer
        Wood fiber, insulator, aluminum.
    geometry : Geometry
    schedule : BoundarySchedule
    h_t, h_l : float
        Top/bottom and lateral transfer coefficients, W m-2 K-1.
    T_ini : float
        Uniform initial temperature, degC.
    mesh : Mesh2D, optional
        Defaults to ``Mesh2D.build(geometry)``.
    dt : float, optional
        Time step, s. Defaults to :func:`guarded_time_step`.
    horizon : float
        Final time, s.
    output_interval : float
        Spacing of stored snapshots, s (rounded to a multiple of ``dt``).
    strict : bool
        Raise instead of warn when the consistency guard is exceeded.
    out_of_plane : bool
        Include the exchange through the faces normal to z.

    Returns
    -------
    Field2D
    """
    if h_t < 0 or h_l < 0:
        raise ConfigurationError("transfer coefficients must be >= 0")
    if not np.isfinite(T_ini):
        raise ConfigurationError("initial temperature must be finite")
    if len(layers) < 3:
        raise ConfigurationError("the complete model needs wood, insulator and aluminum")
    mesh = Mesh2D.build(geometry) if mesh is None else mesh
    mesh.check_resolution(geometry)
    props = _props(layers)
    if dt is None:
        dt = guarded_time_step(mesh, geometry, layers, h_t, h_l, schedule, output_interval, T0)
    if dt <= 0 or horizon <= 0:
        raise ConfigurationError("dt and horizon must be > 0")

    guard = consistency_indicator(mesh, geometry, layers, h_t, h_l, dt, schedule, T0)
    if guard > GUARD_LIMIT:
        msg = (f"DuFort-Frankel artifact indicator {guard:.3g} exceeds {GUARD_LIMIT} "
               f"(dt={dt} s)")
        if strict:
            raise ConfigurationError(msg)
        warnings.warn(msg, ConsistencyWarning, stacklevel=2)

    n_steps = int(round(horizon / dt))
    record_every = max(1, int(round(output_interval / dt)))
    n_rec = n_steps // record_every + 1
    times = np.arange(n_rec) * record_every * dt
    t_inf = boundary_temperature(schedule, np.arange(n_steps + 1) * dt)

    lay = _Layout(mesh, geometry, h_t, h_l, out_of_plane)
    T_prev = np.full(mesh.shape, float(T_ini))
    out = np.empty(mesh.shape + (n_rec,))
    out[:, :, 0] = T_prev
    # seed the three-level scheme with ten implicit sub-steps
    T_cur = _backward_euler(T_prev, 0.0, dt, 10, lay, mesh, props, schedule, T0)
    if record_every == 1 and n_rec > 1:
        out[:, :, 1] = T_cur
    k0, k1, c0, c1 = props
    cap0 = lay.vol @ c0
    cap1 = lay.vol @ c1 / T0
    bad = _dufort_frankel(T_prev, T_cur, n_steps, dt, t_inf, mesh.material_map,
                          mesh.dx, mesh.dy, cap0, cap1, lay.robin, lay.tape_gx, k0, k1, T0,
                          record_every,
                          out)
    if bad >= 0:
        raise DivergenceError(f"non-finite temperature at step {bad}", step=bad, tau=bad * dt)
    return Field2D(mesh, times, out, T0=T0, props=props, dt=dt)


def solve_implicit(layers, geometry, schedule, h_t, h_l, T_ini, mesh=None, dt=60.0,
                   horizon=20 * HOUR, T0=20.0, output_interval=60.0, out_of_plane=True):
    """Backward-Euler reference on the same spatial operator (linearized per step).

    Used to check the DuFort-Frankel solver; first order in time.
    """
    if dt <= 0 or horizon <= 0:
        raise ConfigurationError("dt and horizon must be > 0")
    mesh = Mesh2D.build(geometry) if mesh is None else mesh
    props = _props(layers)
    lay = _Layout(mesh, geometry, h_t, h_l, out_of_plane)
    n_steps = int(round(horizon / dt))
    record_every = max(1, int(round(output_interval / dt)))
    n_rec = n_steps // record_every + 1
    out = np.empty(mesh.shape + (n_rec,))
    T = np.full(mesh.shape, float(T_ini))
    out[:, :, 0] = T
    for n in range(n_steps):
        T = _backward_euler(T, n * dt, dt, 1, lay, mesh, props, schedule, T0)
        if (n + 1) % record_every == 0:
            out[:, :, (n + 1) // record_every] = T
    times = np.arange(n_rec) * record_every * dt
    return Field2D(mesh, times, out, T0=T0, props=props, dt=dt)


# ---------------------------------------------------------------------------
# diagnostics

def _node_conductivity(field, n):
    """Volume-weighted conductivity at nodes for snapshot ``n``."""
    k0, k1, _, _ = field.props
    mesh = field.mesh
    T = field.values[:, :, n]
    kc = _cell_conductivity(np.ascontiguousarray(T), mesh.material_map, k0, k1, field.T0)
    q = 0.25 * mesh.dx[:, None] * mesh.dy[None, :]
    num = np.zeros(mesh.shape)
    den = np.zeros(mesh.shape)
    for sl in ((slice(None, -1), slice(None, -1)), (slice(1, None), slice(None, -1)),
               (slice(None, -1), slice(1, None)), (slice(1, None), slice(1, None))):
        num[sl] += kc * q
        den[sl] += q
    return num / den


def flux_components(field, n):
    """Conductive flux ``(j_x, j_y)`` at the nodes of snapshot ``n`` (W m-2)."""
    mesh = field.mesh
    T = field.values[:, :, n]
    k = _node_conductivity(field, n)
    gx, gy = np.gradient(T, mesh.x_nodes, mesh.y_nodes, edge_order=2)
    return -k * gx, -k * gy


def flux_ratio(field, x_range=(0.04, 0.04)):
    """Share ``|j_x| / (|j_x| + |j_y|)`` at the sensor column over time.

    Magnitudes are integrated over ``y`` along every node column whose ``x``
    lies in ``x_range`` (the nearest column when the range holds none).
    Snapshots without any flux give NaN.
    """
    xs = field.mesh.x_nodes
    cols = np.where((xs >= x_range[0] - 1e-12) & (xs <= x_range[1] + 1e-12))[0]
    if cols.size == 0:
        cols = np.array([int(np.argmin(np.abs(xs - 0.5 * sum(x_range))))])
    y = field.mesh.y_nodes
    out = np.empty(field.times.size)
    for n in range(field.times.size):
        jx, jy = flux_components(field, n)
        ax = sum(np.trapezoid(np.abs(jx[c]), y) for c in cols)
        ay = sum(np.trapezoid(np.abs(jy[c]), y) for c in cols)
        out[n] = ax / (ax + ay) if ax + ay > 0 else np.nan
    return out


def interface_flux(field, x_interface=0.08):
    """Normal flux across the wood fiber / insulator interface, averaged over y.

    Positive values point towards the insulator (+x).
    """
    mesh = field.mesh
    xs, y = mesh.x_nodes, mesh.y_nodes
    m = int(np.argmin(np.abs(xs - x_interface)))
    k0, k1, _, _ = field.props
    width = y[-1] - y[0]
    _no_tape = np.zeros((xs.size - 1, y.size))
    out = np.empty(field.times.size)
    for n in range(field.times.size):
        T = np.ascontiguousarray(field.values[:, :, n])
        kc = _cell_conductivity(T, mesh.material_map, k0, k1, field.T0)
        gx, _ = _edge_conductances(kc, mesh.dx, mesh.dy, T, _no_tape, k0, k1, field.T0)
        # edge heat rates (per unit depth) on both sides of the interface column
        left = gx[m - 1] * (T[m - 1] - T[m])
        right = gx[m] * (T[m] - T[m + 1])
        out[n] = 0.5 * (left.sum() + right.sum()) / width
    return out


def aluminum_deviation(field, schedule):
    """Mean aluminum temperature minus chamber temperature (degC)."""
    mesh = field.mesh
    v = field.values
    alu = mesh.material_map == ALUMINUM
    tape = mesh.tape_edges
    if alu.any():
        w = (mesh.dx[:, None] * mesh.dy[None, :])[alu]
        cell = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
        mean = np.einsum("kt,k->t", cell[alu], w) / w.sum()
    elif tape.any():
        num = 0.0
        den = 0.0
        for col, jb in ((0, 0), (1, -1)):
            w = mesh.dx[tape[:, col]]
            seg = 0.5 * (v[:-1, jb] + v[1:, jb])[tape[:, col]]
            num = num + np.einsum("kt,k->t", seg, w)
            den += w.sum()
        mean = num / den
    else:
        return np.zeros(field.times.size)
    return mean - boundary_temperature(schedule, field.times)


def write_diagnostics_csv(path, field, schedule, x_range=(0.04, 0.04), x_interface=0.08):
    ratio = flux_ratio(field, x_range)
    jint = interface_flux(field, x_interface)
    dev = aluminum_deviation(field, schedule)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "flux_ratio", "interface_flux_Wm2", "alu_deviation_C"])
        for t, a, b, c in zip(field.times, ratio, jint, dev):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b)), repr(float(c))])
    return ratio, jint, dev
