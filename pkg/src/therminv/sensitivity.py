"""Sensitivity functions, Fisher information and identifiability diagnostics.

The sensitivities ``theta = du/dBi_t``, ``psi = du/dBi_l`` and
``phi = du/dFo1`` solve the derivative of the semi-discrete lumped system,

    ds/dtau = J(u, tau) s + df/dq,

so the boundary and interface relations of each sensitivity are the exact
derivatives of the discrete Robin and continuity conditions. For ``theta``
the Robin row contributes ``-(u - u_inf) - Bi_t theta``; for ``psi`` only the
lateral source term is differentiated. The state and its three sensitivities
are integrated together, interleaved node by node to keep the Jacobian
banded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnidentifiableError
from .solver1d import (Field1D, LumpedOperator, Mesh1D, SolverControls, _output_grid,
                       integrate, sample_series, write_field_csv)

N_SENS = 3  # theta, psi, phi


@dataclass
class SensitivityFields:
    theta: Field1D
    psi: Field1D
    phi: Field1D

    def to_csv(self, path):
        f = self.theta
        write_field_csv(path, f.mesh.chi, f.times,
                        {"theta": self.theta.values, "psi": self.psi.values,
                         "phi": self.phi.values})


@dataclass(frozen=True)
class FisherMatrix:
    f11: float
    f12: float
    f22: float

    def __post_init__(self):
        if self.f11 < 0 or self.f22 < 0:
            raise DomainError("Fisher diagonal entries must be >= 0")

    def as_array(self):
        return np.array([[self.f11, self.f12], [self.f12, self.f22]])


class _SensitivityOperator(LumpedOperator):
    """Lumped operator extended with its state Jacobian and parameter derivatives."""

    def jacobian_apply(self, u, s, w, f):
        """``J s`` for the tridiagonal Jacobian of ``f = balance / w``."""
        h = self.h
        du = np.diff(u)
        kf = self.k_base + self.k_slope * 0.5 * (u[1:] + u[:-1])
        dk = 0.5 * self.k_slope * du
        # dG_c/du_c and dG_c/du_{c+1}
        a = (dk - kf) / h
        b = (dk + kf) / h
        dG = a * s[:-1] + b * s[1:]
        out = np.zeros_like(u)
        out[:-1] += dG
        out[1:] -= dG
        out -= self.src * s
        if not self.dirichlet:
            out[0] -= self.p.bi_t * s[0]
            out[-1] -= self.p.bi_t * s[-1]
        return (out - f * self.cap1 * s) / w

    def forcing(self, u, tau, w, f):
        """Partial derivatives of ``f`` with respect to Bi_t, Bi_l and Fo1."""
        uinf = self.cfg.u_inf(tau)
        g_t = np.zeros_like(u)
        if not self.dirichlet:
            g_t[0] = -(u[0] - uinf)
            g_t[-1] = -(u[-1] - uinf)
        g_l = self.cfg.r * self.vw * (uinf - u)
        # w = vw (1 + zeta11 u) / Fo1 + insulator part
        dw = -self.vw * (1.0 + self.cfg.zeta11 * u) / self.cfg.fo1 ** 2
        return g_t / w, g_l / w, -f * dw / w

    def coupled(self, y, tau):
        n_state = y.size // (N_SENS + 1)
        Y = y.reshape(n_state, N_SENS + 1)
        u = self.full_state(Y[:, 0], tau)
        w = self.capacity(u)
        f = self.balance(u, tau) / w
        forc = self.forcing(u, tau, w, f)
        out = np.empty_like(Y)
        sl = slice(1, -1) if self.dirichlet else slice(None)
        out[:, 0] = f[sl]
        for k in range(N_SENS):
            s = self._pad(Y[:, k + 1])
            out[:, k + 1] = (self.jacobian_apply(u, s, w, f) + forc[k])[sl]
        return out.ravel()

    def _pad(self, s):
        return np.concatenate(([0.0], s, [0.0])) if self.dirichlet else s


def solve_sensitivities(cfg, p=None, mesh=None, controls=None, output_times=None):
    """Integrate the state and its sensitivities as one coupled system.

    Parameters
    ----------
    cfg : DimensionlessConfig
    p : ParameterPoint, optional
    mesh : Mesh1D, optional
    controls : SolverControls, optional
        ``abs_tol`` applies to ``u``; sensitivity tolerances are divided by
        the magnitude of the matching parameter.
    output_times : array_like, optional

    Returns
    -------
    (Field1D, SensitivityFields)
        In the Dirichlet configuration ``theta`` is identically zero.
    """
    p = cfg.parameters if p is None else p
    mesh = Mesh1D.for_config(cfg) if mesh is None else mesh
    controls = SolverControls() if controls is None else controls
    times = _output_grid(np.linspace(0, 1, 201) if output_times is None else output_times)
    op = _SensitivityOperator(cfg, p, mesh)

    n_state = mesh.n_nodes - 2 if op.dirichlet else mesh.n_nodes
    y0 = np.zeros((n_state, N_SENS + 1))
    y0[:, 0] = cfg.u_ini
    scale = [1.0, max(abs(p.bi_t), 1.0) if np.isfinite(p.bi_t) else 1.0,
             max(abs(p.bi_l), 1.0), max(abs(cfg.fo1), 1e-12)]
    atol = np.tile(controls.abs_tol / np.array(scale), n_state)
    band = 2 * (N_SENS + 1) - 1
    y = integrate(op.coupled, y0.ravel(), times, controls, tcrit=cfg.breakpoints_tau,
                  atol=atol, band=band)
    Y = y.reshape(times.size, n_state, N_SENS + 1)

    fields = []
    for k in range(N_SENS + 1):
        v = Y[:, :, k].T
        if op.dirichlet:
            edge = cfg.u_inf(times) if k == 0 else np.zeros(times.size)
            v = np.vstack([edge, v, edge])
        v = np.ascontiguousarray(v)
        v[:, 0] = cfg.u_ini if k == 0 else 0.0
        fields.append(Field1D(mesh, times.copy(), v))
    return fields[0], SensitivityFields(*fields[1:])


def _sigma_grid(sigma, n_sensors, times, sigma_times, T0):
    sig = np.asarray(sigma, dtype=float)
    if sig.ndim == 0:
        sig = np.full((n_sensors, times.size), float(sig))
    elif sig.ndim == 1 and sig.size == n_sensors and sigma_times is None:
        sig = np.repeat(sig[:, None], times.size, axis=1)
    else:
        sig = np.atleast_2d(sig)
        if sig.shape[0] != n_sensors:
            raise DomainError("sigma needs one row per sensor")
        if sigma_times is not None:
            st = np.asarray(sigma_times, dtype=float)
            sig = np.array([np.interp(times, st, row) for row in sig])
        elif sig.shape[1] != times.size:
            raise DomainError("sigma rows must match the output times")
    if np.any(~(sig > 0)):
        raise DomainError("sigma must be > 0 everywhere")
    return sig / T0


def fisher_matrix(sens, sensors, sigma, T0=20.0, sigma_times=None):
    """Fisher information of ``(Bi_t, Bi_l)`` for the given sensors.

    Parameters
    ----------
    sens : SensitivityFields
    sensors : sequence of float
        Sensor positions ``chi``.
    sigma : float or array_like
        Measurement standard deviation in kelvin: a scalar, one value per
        sensor, or one row per sensor over ``sigma_times`` (linearly
        interpolated) or over the output times.
    T0 : float
        Temperature scale converting ``sigma`` to dimensionless units.
    sigma_times : array_like, optional
        Times of the columns of ``sigma`` in the units of ``sens`` times.
    """
    sensors = list(np.atleast_1d(sensors))
    times = sens.theta.times
    sig = _sigma_grid(sigma, len(sensors), times, sigma_times, T0)
    F = np.zeros((2, 2))
    for j, chi in enumerate(sensors):
        s = (sample_series(sens.theta, chi), sample_series(sens.psi, chi))
        for a in range(2):
            for b in range(a, 2):
                F[a, b] += np.trapezoid(s[a] * s[b] / sig[j] ** 2, times)
    return FisherMatrix(float(F[0, 0]), float(F[0, 1]), float(F[1, 1]))


def error_indicators(F):
    """``(eta_t, eta_l) = (1/sqrt(F11), 1/sqrt(F22))``."""
    if not (F.f11 > 0 and F.f22 > 0):
        which = "Bi_t" if not F.f11 > 0 else "Bi_l"
        raise UnidentifiableError(f"zero Fisher information along {which}")
    return 1.0 / np.sqrt(F.f11), 1.0 / np.sqrt(F.f22)


def correlation(a, b):
    """Pearson coefficient of two equally long (stacked) series."""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    if a.size != b.size or a.size < 2:
        raise DomainError("correlation needs two series of equal length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.dot(da, da))
    nb = np.sqrt(np.dot(db, db))
    if na == 0 or nb == 0:
        raise DomainError("correlation undefined for a constant series")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def correlation_table(sens, sensors):
    """Pairwise correlations of theta, psi, phi per sensor and over all sensors.

    Returns a dict keyed by ``"theta-psi"``, ``"theta-phi"``, ``"psi-phi"``,
    each mapping to a list with one entry per sensor followed by the value
    over the stacked sensors.
    """
    names = ("theta", "psi", "phi")
    series = {n: [sample_series(getattr(sens, n), c) for c in sensors] for n in names}
    out = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            row = [correlation(x, y) for x, y in zip(series[a], series[b])]
            row.append(correlation(np.concatenate(series[a]), np.concatenate(series[b])))
            out[f"{a}-{b}"] = row
    return out


def write_fisher_json(path, F, **extra):
    try:
        eta_t, eta_l = error_indicators(F)
    except UnidentifiableError:
        eta_t = eta_l = None
    doc = {"f11": F.f11, "f12": F.f12, "f22": F.f22, "eta_t": eta_t, "eta_l": eta_l}
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return doc


def read_sensitivity_csv(path):
    """Inverse of :meth:`SensitivityFields.to_csv`; returns ``(chi, tau, dict)``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    tau = np.unique([float(r["tau"]) for r in rows])
    chi = np.unique([float(r["chi"]) for r in rows])
    out = {}
    for name in ("theta", "psi", "phi"):
        v = np.array([float(r[name]) for r in rows]).reshape(tau.size, chi.size)
        out[name] = v.T
    return chi, tau, out
