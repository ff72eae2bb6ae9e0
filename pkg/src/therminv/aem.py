"""Approximation error model between the lumped and the complete model.

For parameter pairs drawn from the prior both models are evaluated at the
sensors, and the error ``e_k = T_lumped - T_complete`` is summarized by its
sample mean ``e`` and sample standard deviation ``s_e``. In the likelihood
the model-minus-data residual is shifted by ``e`` and the variance is
inflated to ``sigma^2 + s_e^2``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AemBuildError, ConfigurationError, DomainError, ThermInvError
from .solver1d import sample_series, solve_lumped
from .solver2d import solve_complete
from .thermo_model import ReferenceScales, nondimensionalize

log = logging.getLogger(__name__)

MAX_SKIPPED = 0.10


@dataclass(frozen=True)
class GaussianPrior:
    """Normal law truncated to ``[lo, hi]`` (rejection sampling)."""

    mean: float
    std: float
    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        if self.std < 0 or not self.lo < self.hi:
            raise ConfigurationError("prior needs std >= 0 and lo < hi")
        if not self.lo <= self.mean <= self.hi:
            raise ConfigurationError("prior mean outside its bounds")

    def sample(self, rng, n):
        if self.std == 0:
            return np.full(n, float(self.mean))
        out = np.empty(0)
        while out.size < n:
            d = rng.normal(self.mean, self.std, 2 * (n - out.size) + 8)
            out = np.concatenate((out, d[(d >= self.lo) & (d <= self.hi)]))
        return out[:n]


@dataclass(frozen=True)
class AemPrior:
    h_t: GaussianPrior = GaussianPrior(8.0, 2.5, 1.0, 40.0)
    R_l: GaussianPrior = GaussianPrior(0.5, 0.2, 0.01, 1.0)
    h_l_factor: float = 1.0  # complete-model h_l = factor * R_l

    def describe(self):
        return {"h_t": asdict(self.h_t), "R_l": asdict(self.R_l),
                "h_l_factor": self.h_l_factor}


@dataclass
class AemModel:
    """Mean error ``e`` and its spread ``s_e`` per sensor and time (degC)."""

    sensor_ids: list
    times: np.ndarray
    e: np.ndarray  # (n_sensors, n_times)
    s_e: np.ndarray
    n_samples: int
    prior: dict
    seed: int = None
    n_skipped: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.e = np.atleast_2d(np.asarray(self.e, dtype=float))
        self.s_e = np.atleast_2d(np.asarray(self.s_e, dtype=float))
        shape = (len(self.sensor_ids), self.times.size)
        if self.e.shape != shape or self.s_e.shape != shape:
            raise DomainError("AEM arrays must have shape (n_sensors, n_times)")
        if np.any(self.s_e < 0):
            raise DomainError("s_e must be >= 0")
        if self.n_samples < 2:
            raise DomainError("an AEM needs at least 2 samples")

    def to_csv(self, path):
        """CSV ``sensor_id,t_s,e_C,s_e_C`` plus a ``.json`` sidecar."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sensor_id", "t_s", "e_C", "s_e_C"])
            for k, sid in enumerate(self.sensor_ids):
                for t, e, s in zip(self.times, self.e[k], self.s_e[k]):
                    w.writerow([sid, repr(float(t)), repr(float(e)), repr(float(s))])
        side = {"prior": self.prior, "seed": self.seed, "n_samples": self.n_samples,
                "n_skipped": self.n_skipped, "sensor_ids": list(self.sensor_ids)}
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"sensor_id", "t_s", "e_C", "s_e_C"}:
            raise DomainError(f"{path}: expected columns sensor_id,t_s,e_C,s_e_C")
        side = {}
        if os.path.exists(_sidecar(path)):
            with open(_sidecar(path), encoding="utf-8") as fh:
                side = json.load(fh)
        ids = list(dict.fromkeys(r["sensor_id"] for r in rows))
        per = {sid: [r for r in rows if r["sensor_id"] == sid] for sid in ids}
        times = np.array([float(r["t_s"]) for r in per[ids[0]]])
        e = [[float(r["e_C"]) for r in per[sid]] for sid in ids]
        s = [[float(r["s_e_C"]) for r in per[sid]] for sid in ids]
        return cls(ids, times, e, s, side.get("n_samples", 2), side.get("prior", {}),
                   side.get("seed"), side.get("n_skipped", 0))


def _sidecar(path):
    return os.path.splitext(str(path))[0] + ".json"


# ---------------------------------------------------------------------------
# forward models evaluated at the sensors

class LumpedSensors:
    """Lumped-model temperatures (degC) at the sensors for ``(h_t, R_l)``."""

    def __init__(self, layers, geometry, schedule, T_ini, positions, times, scales=None,
                 mesh=None, controls=None):
        self.args = (layers, geometry, scales or ReferenceScales(), schedule, T_ini)
        self.positions = dict(positions)
        self.times = np.asarray(times, dtype=float)
        self.mesh = mesh
        self.controls = controls

    def __call__(self, h_t, R_l):
        layers, geometry, scales, schedule, T_ini = self.args
        cfg = nondimensionalize(layers, geometry, scales, h_t, R_l, schedule, T_ini)
        taus = self.times / scales.t0
        field = solve_lumped(cfg, mesh=self.mesh, controls=self.controls, output_times=taus)
        return np.array([scales.T0 * sample_series(field, x / geometry.L0x, taus)
                         for x in self.positions.values()])


class CompleteSensors:
    """Complete-model temperatures (degC) on the mid-plane for ``(h_t, h_l)``."""

    def __init__(self, layers, geometry, schedule, T_ini, positions, times, mesh=None,
                 dt=None, output_interval=60.0):
        self.layers, self.geometry, self.schedule, self.T_ini = layers, geometry, schedule, T_ini
        self.positions = dict(positions)
        self.times = np.asarray(times, dtype=float)
        self.mesh = mesh
        self.dt = dt
        self.output_interval = output_interval

    def field(self, h_t, h_l):
        horizon = float(self.times[-1])
        step = self.output_interval
        horizon = np.ceil(horizon / step - 1e-9) * step
        return solve_complete(self.layers, self.geometry, self.schedule, h_t, h_l, self.T_ini,
                              mesh=self.mesh, dt=self.dt, horizon=horizon,
                              output_interval=step)

    def __call__(self, h_t, h_l):
        f = self.field(h_t, h_l)
        y_mid = 0.5 * self.geometry.L0y
        return np.array([f.sample_at_times(x, y_mid, self.times)
                         for x in self.positions.values()])


def _threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("THERMINV_THREADS")
    return max(1, int(env)) if env else 1


def build_aem(prior, n_samples, lumped, complete, sensor_ids, times, seed, threads=None):
    """Sample the prior and summarize the lumped-minus-complete error.

    Parameters
    ----------
    prior : AemPrior
    n_samples : int
        Number of prior draws (>= 2).
    lumped : callable
        ``lumped(h_t, R_l) -> (n_sensors, n_times)`` in degC.
    complete : callable
        ``complete(h_t, h_l) -> (n_sensors, n_times)`` in degC.
    sensor_ids : list
    times : array_like
        Observation times (s) matching the callables' output.
    seed : int
    threads : int, optional
        Worker threads; defaults to ``THERMINV_THREADS`` or 1. Results are
        reduced in sample order, so the output does not depend on it.

    Returns
    -------
    AemModel
    """
    if n_samples < 2:
        raise ConfigurationError("n_samples must be >= 2")
    rng = np.random.default_rng(seed)
    ht = prior.h_t.sample(rng, n_samples)
    rl = prior.R_l.sample(rng, n_samples)
    hl = prior.h_l_factor * rl

    def pair(k):
        try:
            err = np.asarray(lumped(ht[k], rl[k])) - np.asarray(complete(ht[k], hl[k]))
        except (ThermInvError, ArithmeticError) as exc:
            log.warning("AEM sample %d (h_t=%.4g, R_l=%.4g) skipped: %s", k, ht[k], rl[k], exc)
            return None
        if not np.all(np.isfinite(err)):
            log.warning("AEM sample %d produced non-finite errors; skipped", k)
            return None
        return err

    n_threads = _threads(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            errs = list(pool.map(pair, range(n_samples)))
    else:
        errs = [pair(k) for k in range(n_samples)]

    kept = [e for e in errs if e is not None]
    skipped = n_samples - len(kept)
    if skipped > MAX_SKIPPED * n_samples or len(kept) < 2:
        raise AemBuildError(f"{skipped} of {n_samples} AEM samples failed")
    # deviations from the first sample keep a collapsed prior exactly at s_e = 0
    D = np.stack(kept) - kept[0]
    return AemModel(list(sensor_ids), times, kept[0] + D.mean(axis=0), D.std(axis=0, ddof=1),
                    len(kept), prior.describe(), seed, skipped)


def apply_aem(residual, aem, sigma=None):
    """Shift a model-minus-data residual by ``e`` and inflate ``sigma``.

    Parameters
    ----------
    residual : array_like, shape (n_sensors, n_times)
        ``T_lumped - T_obs`` in degC.
    aem : AemModel
    sigma : array_like, optional
        Measurement standard deviation on the same grid.

    Returns
    -------
    (ndarray, ndarray or None)
        ``residual - e`` and ``sqrt(sigma^2 + s_e^2)``.
    """
    r = np.atleast_2d(np.asarray(residual, dtype=float))
    if r.shape != aem.e.shape:
        raise DomainError(f"residual shape {r.shape} does not match the AEM grid {aem.e.shape}")
    sig = None
    if sigma is not None:
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        if s.shape != aem.e.shape:
            raise DomainError("sigma does not match the AEM grid")
        sig = np.sqrt(s ** 2 + aem.s_e ** 2)
    return r - aem.e, sig
